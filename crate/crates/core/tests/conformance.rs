// Licensed under the Apache-2.0 license

mod common;

use std::fs;

use common::*;
use rigel_core::conformance::{load_manifest, run_paired, verify, Check, HarnessError};
use rigel_core::prx::scan_components;
use rigel_core::trace::Event;

#[test]
fn hello_passes_and_typo_diverges() {
    let dir = tempfile::tempdir().unwrap();
    project_tree(dir.path());
    let index = scan_components(dir.path()).unwrap();
    let reports = verify(dir.path(), &index, None).unwrap();
    assert_eq!(reports.len(), 2);

    let hello = &reports[0];
    assert_eq!(hello.name, "hello");
    assert!(hello.verdict.pass, "{}", hello.verdict.render());
    assert_eq!(hello.guest.output(), b"Hello World\n");

    let typo = &reports[1];
    assert!(!typo.verdict.pass);
    // TASK_SWITCH(0), then 'H', 'e', 'l', 'l' match; index 5 is the 'p'.
    assert_eq!(typo.verdict.divergence, Some(5));
    let diff = fs::read_to_string(dir.path().join("out/conformance/typo.diff")).unwrap();
    assert!(diff.contains("first divergence at event 5"), "{diff}");
    assert!(diff.contains(&Event::Output(b'p').to_string()), "{diff}");
    assert!(!dir.path().join("out/conformance/hello.diff").exists());
}

#[test]
fn selection_by_scenario_or_system() {
    let dir = tempfile::tempdir().unwrap();
    project_tree(dir.path());
    let index = scan_components(dir.path()).unwrap();
    assert_eq!(verify(dir.path(), &index, Some("hello")).unwrap().len(), 1);
    assert_eq!(verify(dir.path(), &index, Some(HELLO_SYSTEM)).unwrap()[0].name, "hello");
    assert!(matches!(verify(dir.path(), &index, Some("nope")), Err(HarnessError::UnknownScenario(_))));
}

#[test]
fn stale_diff_is_removed_once_fixed() {
    let dir = tempfile::tempdir().unwrap();
    project_tree(dir.path());
    let index = scan_components(dir.path()).unwrap();
    verify(dir.path(), &index, Some("typo")).unwrap();
    let diff = dir.path().join("out/conformance/typo.diff");
    assert!(diff.exists());
    let hello_src = fs::read_to_string(dir.path().join("components/machine-riscv-common/example/hello.s")).unwrap();
    fs::write(dir.path().join("components/machine-riscv-common/example/typo.s"), hello_src.replace("hello_main", "typo_main")).unwrap();
    assert!(verify(dir.path(), &index, Some("typo")).unwrap()[0].verdict.pass);
    assert!(!diff.exists());
}

#[test]
fn expected_exit_mismatch_fails() {
    let dir = tempfile::tempdir().unwrap();
    passing_tree(dir.path());
    let index = scan_components(dir.path()).unwrap();
    let mut s = load_manifest(dir.path()).unwrap().remove(0);
    assert_eq!(s.check, Check::Paired);
    s.expected_exit = 3;
    let r = run_paired(&s, &index).unwrap();
    assert!(!r.verdict.pass);
    assert!(r.verdict.notes.iter().any(|n| n.contains("expected exit(3)")), "{:?}", r.verdict.notes);
}

#[test]
fn instruction_limit_fails_the_scenario() {
    let dir = tempfile::tempdir().unwrap();
    passing_tree(dir.path());
    let index = scan_components(dir.path()).unwrap();
    let mut s = load_manifest(dir.path()).unwrap().remove(0);
    s.max_instr = 10;
    assert!(!run_paired(&s, &index).unwrap().verdict.pass);
}

#[test]
fn build_failure_is_a_harness_error() {
    let dir = tempfile::tempdir().unwrap();
    passing_tree(dir.path());
    fs::write(dir.path().join("components/generic/debug.s"), "debug_puts:\n    ret\n").unwrap();
    let index = scan_components(dir.path()).unwrap();
    assert!(matches!(verify(dir.path(), &index, None), Err(HarnessError::Build { .. })));
}

#[test]
fn missing_manifest() {
    let dir = tempfile::tempdir().unwrap();
    passing_tree(dir.path());
    fs::remove_file(dir.path().join("conformance/manifest")).unwrap();
    let index = scan_components(dir.path()).unwrap();
    assert!(matches!(verify(dir.path(), &index, None), Err(HarnessError::Io { .. })));
}
