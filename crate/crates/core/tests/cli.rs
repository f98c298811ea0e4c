// Licensed under the Apache-2.0 license

mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use common::*;

fn x(root: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_x")).args(args).env("X_PROJECT_ROOT", root).current_dir(root).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn built(dir: &Path) -> String {
    let o = x(dir, &["build", HELLO_SYSTEM]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    dir.join("out").join(HELLO_SYSTEM).join("system.img").to_string_lossy().into_owned()
}

#[test]
fn build_packages_lists_components() {
    let dir = tempfile::tempdir().unwrap();
    project_tree(dir.path());
    let o = x(dir.path(), &["build-packages"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = stdout(&o);
    for name in ["context-switch-riscv", "timer-riscv", "message-queue"] {
        assert!(text.contains(name), "{text}");
    }
    assert_eq!(o.stdout, x(dir.path(), &["build-packages"]).stdout);
}

#[test]
fn build_packages_on_empty_tree() {
    let dir = tempfile::tempdir().unwrap();
    let o = x(dir.path(), &["build-packages"]);
    assert_eq!(code(&o), 1);
    assert!(o.stdout.is_empty());
}

#[test]
fn build_then_run_hello() {
    let dir = tempfile::tempdir().unwrap();
    project_tree(dir.path());
    let o = x(dir.path(), &["build", HELLO_SYSTEM]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("entry 0x00010000"), "{}", stdout(&o));

    let img = dir.path().join("out").join(HELLO_SYSTEM).join("system.img");
    let o = x(dir.path(), &["run", img.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(o.stdout, b"Hello World\n");
    assert!(o.stderr.is_empty(), "{}", stderr(&o));
}

#[test]
fn build_errors() {
    let dir = tempfile::tempdir().unwrap();
    project_tree(dir.path());
    let o = x(dir.path(), &["build", "no.such.system"]);
    assert_eq!(code(&o), 1);

    fs::write(dir.path().join("components/generic/debug.s"), ".globl debug_puts\ndebug_puts:\n    j missing_helper\n").unwrap();
    let o = x(dir.path(), &["build", HELLO_SYSTEM]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("missing_helper"), "{}", stderr(&o));
}

#[test]
fn run_limits_and_traces() {
    let dir = tempfile::tempdir().unwrap();
    project_tree(dir.path());
    let img = built(dir.path());

    let o = x(dir.path(), &["run", &img, "--max-instr", "10"]);
    assert_eq!(code(&o), 124);

    let t1 = dir.path().join("t1.trace");
    let t2 = dir.path().join("t2.trace");
    for t in [&t1, &t2] {
        let o = x(dir.path(), &["run", &img, "--trace", t.to_str().unwrap(), "--irq", "0@5"]);
        assert_eq!(code(&o), 0);
    }
    let text = fs::read_to_string(&t1).unwrap();
    assert_eq!(text, fs::read_to_string(&t2).unwrap());
    assert!(text.starts_with("EVT TASK_SWITCH 0 0\n"), "{text}");
    assert!(text.ends_with("EVT EXIT 0 0\n"), "{text}");
}

#[test]
fn run_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let write_img = |name: &str, src: &str| {
        let image = build_one(src);
        let p = dir.path().join(name);
        fs::write(&p, &image.bytes).unwrap();
        p.to_string_lossy().into_owned()
    };
    let fail7 = write_img("fail7.img", "li t0, 0x11100000\nli t1, 0x00073333\nsw t1, 0(t0)\n");
    assert_eq!(code(&x(dir.path(), &["run", &fail7])), 7);
    let fail300 = write_img("fail300.img", "li t0, 0x11100000\nli t1, 0x012c3333\nsw t1, 0(t0)\n");
    assert_eq!(code(&x(dir.path(), &["run", &fail300])), 125);
    let fault = write_img("fault.img", "ecall\n");
    let o = x(dir.path(), &["run", &fault]);
    assert_eq!(code(&o), 126);
    assert!(o.stdout.is_empty());
    assert!(!o.stderr.is_empty());

    let bad = dir.path().join("bad.img");
    fs::write(&bad, []).unwrap();
    assert_eq!(code(&x(dir.path(), &["run", bad.to_str().unwrap()])), 2);
    assert_eq!(code(&x(dir.path(), &["run", &fail7, "--ram", "8"])), 2);
    assert_eq!(code(&x(dir.path(), &["run", "missing.img"])), 1);
}

#[test]
fn run_uses_start_from_map() {
    let dir = tempfile::tempdir().unwrap();
    let image = build_one("pad:\n    ebreak\n.globl _start\n_start:\n    li t0, 0x11100000\n    li t1, 0x5555\n    sw t1, 0(t0)\n");
    assert_eq!(image.entry, 0x10004);
    fs::write(dir.path().join("a.img"), &image.bytes).unwrap();
    assert_eq!(code(&x(dir.path(), &["run", "a.img"])), 126);
    fs::write(dir.path().join("a.map"), image.map_text()).unwrap();
    assert_eq!(code(&x(dir.path(), &["run", "a.img"])), 0);
}

#[test]
fn irq_flag_delivers_event() {
    let dir = tempfile::tempdir().unwrap();
    // Enable external interrupts and spin; the handler claims the latch and
    // exits with the claimed id as the code.
    let src = "\
.globl _start
_start:
    la t0, handler
    csrw mtvec, t0
    li t0, 0x800
    csrw mie, t0
    csrsi mstatus, 8
spin:
    j spin
handler:
    li t0, 0x11300000
    lw t1, 0(t0)
    slli t1, t1, 16
    li t2, 0x3333
    or t1, t1, t2
    li t0, 0x11100000
    sw t1, 0(t0)
";
    fs::write(dir.path().join("irq.img"), build_one(src).bytes).unwrap();
    let o = x(dir.path(), &["run", "irq.img", "--irq", "3@500", "--trace", "irq.trace"]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    assert_eq!(code(&x(dir.path(), &["run", "irq.img", "--max-instr", "1000"])), 124);
}

#[test]
fn verify_table_and_codes() {
    let dir = tempfile::tempdir().unwrap();
    project_tree(dir.path());
    let o = x(dir.path(), &["verify", "all"]);
    assert_eq!(code(&o), 3);
    let text = stdout(&o);
    assert!(text.contains("PASS hello"), "{text}");
    assert!(text.contains("FAIL typo"), "{text}");
    assert!(stderr(&o).contains("first divergence"), "{}", stderr(&o));

    assert_eq!(code(&x(dir.path(), &["verify", "hello"])), 0);
    assert_eq!(code(&x(dir.path(), &["verify", "unknown-thing"])), 1);

    let passing = tempfile::tempdir().unwrap();
    passing_tree(passing.path());
    assert_eq!(code(&x(passing.path(), &["verify", "all"])), 0);

    fs::write(passing.path().join("components/generic/debug.s"), "debug_puts:\n    ret\n").unwrap();
    assert_eq!(code(&x(passing.path(), &["verify", "all"])), 2);
}

#[test]
fn usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&x(dir.path(), &["run"])), 1);
    assert_eq!(code(&x(dir.path(), &["frobnicate"])), 1);
    assert_eq!(code(&x(dir.path(), &["run", "a.img", "--bogus"])), 1);
    assert_eq!(code(&x(dir.path(), &["--help"])), 0);
}

#[test]
fn root_discovery_without_env() {
    let dir = tempfile::tempdir().unwrap();
    project_tree(dir.path());
    let sub = dir.path().join("components/riscv");
    let o = Command::new(env!("CARGO_BIN_EXE_x")).arg("build-packages").env_remove("X_PROJECT_ROOT").current_dir(&sub).output().unwrap();
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(dir.path().join("out/components.idx").is_file());
}
