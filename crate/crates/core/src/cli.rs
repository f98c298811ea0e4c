// Licensed under the Apache-2.0 license

//! The `x` command-line tool.
//!
//! ```text
//! x build-packages
//! x build <system>
//! x run <image> [--max-instr N] [--trace F] [--irq e@n]... [--ram BYTES]
//! x verify <name|all>
//! ```
//!
//! Guest output is the only thing written to stdout by `run`; diagnostics
//! go to stderr. The project root is `$X_PROJECT_ROOT` or the nearest
//! ancestor of the working directory that has a `components/` directory.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::conformance::{verify, HarnessError};
use crate::link::{parse_map, DEFAULT_BASE, DEFAULT_RAM};
use crate::prx::{build_packages, build_system, scan_components, COMPONENTS_DIR};
use crate::sim::{IrqTrigger, Machine, RunStatus};

pub const ROOT_ENV: &str = "X_PROJECT_ROOT";
pub const DEFAULT_MAX_INSTR: u64 = 50_000_000;

/// Process exit codes.
pub mod exit {
    pub const SUCCESS: i32 = 0;
    pub const USER_ERROR: i32 = 1;
    pub const INTERNAL_ERROR: i32 = 2;
    pub const CONFORMANCE_FAILURE: i32 = 3;
    /// Largest guest exit code passed through unchanged.
    pub const GUEST_MAX: i32 = 125;
    pub const INSTRUCTION_LIMIT: i32 = 124;
    pub const GUEST_FAULT: i32 = 126;
}

fn number(s: &str) -> Result<u64, String> {
    crate::kernel::parse_number(s).ok_or_else(|| format!("`{s}` is not a number"))
}

fn ram_size(s: &str) -> Result<u32, String> {
    number(s).and_then(|v| u32::try_from(v).map_err(|_| format!("`{s}` is too large")))
}

#[derive(Debug, Parser)]
#[command(name = "x", version, about = "Build, run and verify RTOS systems for RV32IM")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check every component and write out/components.idx
    BuildPackages,
    /// Build out/<system>/system.img and system.map
    Build { system: String },
    /// Run an image on the simulator
    Run {
        image: PathBuf,
        #[arg(long, value_parser = number, default_value_t = DEFAULT_MAX_INSTR)]
        max_instr: u64,
        /// Write the event trace to this file
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Raise interrupt event `e` once `n` instructions have retired
        #[arg(long = "irq", value_name = "E@N")]
        irqs: Vec<IrqTrigger>,
        #[arg(long, value_parser = ram_size, default_value_t = DEFAULT_RAM)]
        ram: u32,
    },
    /// Run conformance scenarios
    Verify { target: String },
}

/// `$X_PROJECT_ROOT`, else the nearest ancestor of `start` holding
/// `components/`.
pub fn find_project_root(start: &Path, env: Option<&str>) -> Option<PathBuf> {
    if let Some(root) = env.filter(|r| !r.is_empty()) {
        return Some(PathBuf::from(root));
    }
    start.ancestors().find(|d| d.join(COMPONENTS_DIR).is_dir()).map(Path::to_path_buf)
}

/// Runs a parsed command. `root` is the project root, if one was found.
pub fn execute(cli: &Cli, root: Option<&Path>, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let need_root = |err: &mut dyn Write| -> Option<PathBuf> {
        match root {
            Some(r) => Some(r.to_path_buf()),
            None => {
                let _ = writeln!(err, "x: no project root (set {ROOT_ENV} or run inside a tree with {COMPONENTS_DIR}/)");
                None
            }
        }
    };
    match &cli.command {
        Command::BuildPackages => {
            let Some(root) = need_root(err) else { return exit::USER_ERROR };
            match build_packages(&root) {
                Ok(index) => {
                    let _ = writeln!(out, "{} components", index.components.len());
                    for c in index.components.values() {
                        let _ = writeln!(out, "  {:<28} {}", c.display_name(), c.name);
                    }
                    for s in index.systems.keys() {
                        let _ = writeln!(out, "  system {s}");
                    }
                    exit::SUCCESS
                }
                Err(e) => {
                    let _ = writeln!(err, "x: build-packages: {e}");
                    exit::USER_ERROR
                }
            }
        }
        Command::Build { system } => {
            let Some(root) = need_root(err) else { return exit::USER_ERROR };
            let result = scan_components(&root)
                .map_err(|e| e.to_string())
                .and_then(|index| index.load_system(system).and_then(|d| build_system(&d, &index)).map_err(|e| e.to_string()));
            match result {
                Ok(image) => {
                    let _ = writeln!(out, "built {system}: entry {:#010x}, {} bytes", image.entry, image.bytes.len());
                    exit::SUCCESS
                }
                Err(e) => {
                    let _ = writeln!(err, "x: build {system}: {e}");
                    exit::USER_ERROR
                }
            }
        }
        Command::Run { image, max_instr, trace, irqs, ram } => cmd_run(image, *max_instr, trace.as_deref(), irqs, *ram, out, err),
        Command::Verify { target } => {
            let Some(root) = need_root(err) else { return exit::USER_ERROR };
            let index = match scan_components(&root) {
                Ok(i) => i,
                Err(e) => {
                    let _ = writeln!(err, "x: verify: {e}");
                    return exit::USER_ERROR;
                }
            };
            let which = (target != "all").then_some(target.as_str());
            match verify(&root, &index, which) {
                Ok(reports) => {
                    let mut failed = 0;
                    for r in &reports {
                        let _ = writeln!(out, "{} {}", if r.verdict.pass { "PASS" } else { "FAIL" }, r.name);
                        if !r.verdict.pass {
                            failed += 1;
                            let _ = write!(err, "{}", r.verdict.render());
                        }
                    }
                    let _ = writeln!(out, "{} passed, {failed} failed", reports.len() - failed);
                    if failed == 0 {
                        exit::SUCCESS
                    } else {
                        exit::CONFORMANCE_FAILURE
                    }
                }
                Err(HarnessError::UnknownScenario(name)) => {
                    let _ = writeln!(err, "x: verify: unknown system or scenario `{name}`");
                    exit::USER_ERROR
                }
                Err(e) => {
                    let _ = writeln!(err, "x: verify: {e}");
                    exit::INTERNAL_ERROR
                }
            }
        }
    }
}

/// Maps a run status to the process exit code.
pub fn status_exit_code(status: &RunStatus) -> i32 {
    match status {
        RunStatus::Exit(code) => (*code as i32).min(exit::GUEST_MAX),
        RunStatus::InstructionLimit => exit::INSTRUCTION_LIMIT,
        RunStatus::Fault { .. } => exit::GUEST_FAULT,
    }
}

fn cmd_run(
    image: &Path,
    max_instr: u64,
    trace: Option<&Path>,
    irqs: &[IrqTrigger],
    ram: u32,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> i32 {
    let bytes = match std::fs::read(image) {
        Ok(b) => b,
        Err(e) => {
            let _ = writeln!(err, "x: run: {}: {e}", image.display());
            return exit::USER_ERROR;
        }
    };
    if bytes.is_empty() {
        let _ = writeln!(err, "x: run: {}: malformed image (empty)", image.display());
        return exit::INTERNAL_ERROR;
    }
    let base = DEFAULT_BASE;
    let mut entry = base;
    if let Ok(text) = std::fs::read_to_string(image.with_extension("map")) {
        match parse_map(&text) {
            Ok(map) => entry = map.get("_start").copied().unwrap_or(base),
            Err(e) => {
                let _ = writeln!(err, "x: run: ignoring map file: {e}");
            }
        }
    }
    if max_instr == 0 {
        let _ = writeln!(err, "x: run: --max-instr must be at least 1");
        return exit::USER_ERROR;
    }
    let mut machine = match Machine::new(base, ram, &bytes, entry) {
        Ok(m) => m,
        Err(e) => {
            let _ = writeln!(err, "x: run: {e}");
            return exit::INTERNAL_ERROR;
        }
    };
    machine.schedule_irqs(irqs);
    let result = machine.run(max_instr);
    let _ = out.write_all(&result.output());
    let _ = out.flush();
    if let Some(path) = trace {
        if let Err(e) = std::fs::write(path, result.trace.to_text()) {
            let _ = writeln!(err, "x: run: {}: {e}", path.display());
            return exit::USER_ERROR;
        }
    }
    match result.status {
        RunStatus::Exit(_) => {}
        RunStatus::InstructionLimit => {
            let _ = writeln!(err, "x: run: instruction limit {max_instr} reached");
        }
        RunStatus::Fault { .. } => {
            let _ = writeln!(err, "x: run: guest {} after {} instructions", result.status, result.instret);
        }
    }
    status_exit_code(&result.status)
}

/// Entry point used by the binary.
pub fn main_from_env() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { exit::USER_ERROR } else { exit::SUCCESS };
        }
    };
    let cwd = std::env::current_dir().unwrap_or_else(|_| PathBuf::from("."));
    let env = std::env::var(ROOT_ENV).ok();
    let root = find_project_root(&cwd, env.as_deref());
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    execute(&cli, root.as_deref(), &mut stdout.lock(), &mut stderr.lock())
}
