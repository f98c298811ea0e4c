// Licensed under the Apache-2.0 license

//! Test fixtures: every guest program here is assembly text written by the
//! tests themselves.

#![allow(dead_code)]

pub mod oracle;
pub mod scripts;

use std::fs;
use std::path::Path;

use rigel_core::asm::assemble_unit;
use rigel_core::link::{link, LayoutConfig, MemoryImage, DEFAULT_RAM};
use rigel_core::sim::{Machine, RunResult};

pub const HELLO_SYSTEM: &str = "machine-riscv-common.example.hello";
pub const TYPO_SYSTEM: &str = "machine-riscv-common.example.typo";

pub const HELLO_MODULES: [&str; 7] = [
    "riscv.build",
    "riscv.vectable",
    "riscv.context-switch",
    "riscv.timer",
    "rtos.rigel",
    "generic.debug",
    HELLO_SYSTEM,
];

/// Assembles one unit, links it alone at the default layout. Sources
/// without `_start` get one at the top.
pub fn build_one(src: &str) -> MemoryImage {
    let src = if src.contains("_start") { src.to_string() } else { format!(".globl _start\n_start:\n{src}") };
    let src = src.as_str();
    let unit = assemble_unit(src, "test").unwrap_or_else(|e| panic!("{e}\n{src}"));
    link(&[unit], &LayoutConfig::default()).unwrap_or_else(|e| panic!("{e}"))
}

pub fn run_image(image: &MemoryImage, max_instr: u64) -> RunResult {
    Machine::load(image, DEFAULT_RAM).unwrap().run(max_instr)
}

pub fn run_src(src: &str, max_instr: u64) -> RunResult {
    run_image(&build_one(src), max_instr)
}

/// `.byte` list for `text` plus a terminating zero.
pub fn bytes_directive(text: &str) -> String {
    let list: Vec<String> = text.bytes().chain([0]).map(|b| b.to_string()).collect();
    format!(".byte {}", list.join(", "))
}

fn write(root: &Path, rel: &str, text: &str) {
    let p = root.join(rel);
    fs::create_dir_all(p.parent().unwrap()).unwrap();
    fs::write(p, text).unwrap();
}

const LAYOUT: &str = "base = 0x10000\nram = 0x100000\nstack = 0x1000\n";

const VECTABLE: &str = "\
.globl _start
_start:
    la sp, _stack_top
    la t0, vec_trap
    csrw mtvec, t0
    j _rigel_start
vec_trap:
    li t0, 0x11100000
    li t1, 0x00013333
    sw t1, 0(t0)
vec_hang:
    j vec_hang
";

const RIGEL: &str = "\
# boot the highest-priority task
.globl _rigel_start
_rigel_start:
    li t0, 0x11200000
    li t1, 0x02000000
    sw t1, 0(t0)
    la t2, _rigel_task_table
    lw t3, 0(t2)
    jr t3
";

const DEBUG: &str = "\
.globl debug_puts
debug_puts:
    li t0, 0x10000000
debug_puts_loop:
    lbu t1, 0(a0)
    beqz t1, debug_puts_done
    sb t1, 0(t0)
    addi a0, a0, 1
    j debug_puts_loop
debug_puts_done:
    ret
";

fn greeter(entry: &str, text: &str) -> String {
    format!(
        "\
.globl {entry}
{entry}:
    la a0, {entry}_msg
    call debug_puts
    li t0, 0x11100000
    li t1, 0x5555
    sw t1, 0(t0)
{entry}_hang:
    j {entry}_hang
.section .data
{entry}_msg:
    {}
",
        bytes_directive(text)
    )
}

fn stub(name: &str) -> String {
    format!(".globl {name}\n{name}:\n    ret\n")
}

fn system_prx(last_module: &str, entry: &str) -> String {
    let mut s = String::from("<?xml version=\"1.0\"?>\n<system>\n  <modules>\n");
    for m in &HELLO_MODULES[..6] {
        if *m == "rtos.rigel" {
            s.push_str(&format!(
                "    <module name=\"rtos.rigel\">\n      <tasks>\n        <task>\n          <name>main</name>\n          <entry>{entry}</entry>\n          <priority>0</priority>\n          <stack_size>512</stack_size>\n        </task>\n      </tasks>\n    </module>\n"
            ));
        } else {
            s.push_str(&format!("    <module name=\"{m}\"/>\n"));
        }
    }
    s.push_str(&format!("    <module name=\"{last_module}\"/>\n  </modules>\n</system>\n"));
    s
}

pub fn hello_script() -> String {
    let mut s = String::from("# hello\n");
    for b in b"Hello World\n" {
        s.push_str(&format!("out {b:02x}\n"));
    }
    s.push_str("exit 0\n");
    s
}

/// A project tree with the hello system, a look-alike system that prints a
/// different greeting, stub components and a conformance manifest.
pub fn project_tree(root: &Path) {
    write(root, "components/riscv/build.ld", LAYOUT);
    write(root, "components/riscv/vectable.s", VECTABLE);
    write(root, "components/riscv/context-switch.s", &stub("rigel_context_switch"));
    write(root, "components/riscv/timer.s", &stub("rigel_timer_init"));
    write(root, "components/riscv/stack.s", &stub("rigel_stack_check"));
    write(root, "components/riscv/interrupt-event.s", &stub("rigel_irq_dispatch"));
    write(root, "components/rtos/rigel.gen", "generator = rigel-config\n");
    write(root, "components/rtos/rigel.s", RIGEL);
    write(root, "components/rtos/message-queue.s", &stub("rigel_msgq"));
    write(root, "components/rtos/task.s", &stub("rigel_task"));
    write(root, "components/generic/debug.s", DEBUG);
    write(root, "components/generic/error.s", &stub("rigel_error"));
    write(root, "components/machine-riscv-common/example/hello.s", &greeter("hello_main", "Hello World\n"));
    write(root, "components/machine-riscv-common/example/hello.prx", &system_prx(HELLO_SYSTEM, "hello_main"));
    write(root, "components/machine-riscv-common/example/typo.s", &greeter("typo_main", "Hellp World\n"));
    write(root, "components/machine-riscv-common/example/typo.prx", &system_prx(TYPO_SYSTEM, "typo_main"));
    write(root, "conformance/hello.script", &hello_script());
    write(
        root,
        "conformance/manifest",
        &format!("[hello]\nsystem = {HELLO_SYSTEM}\nscript = hello.script\nexit = 0\n\n[typo]\nsystem = {TYPO_SYSTEM}\nscript = hello.script\n"),
    );
}

/// Same tree with only the passing scenario in the manifest.
pub fn passing_tree(root: &Path) {
    project_tree(root);
    write(root, "conformance/manifest", &format!("[hello]\nsystem = {HELLO_SYSTEM}\nscript = hello.script\n"));
}
