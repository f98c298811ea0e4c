// Licensed under the Apache-2.0 license

//! Differential testing of a guest kernel against [`crate::kernel`].
//!
//! A paired scenario builds a guest system, runs it on the simulator, runs
//! a script on the reference kernel and compares the two event traces.
//! TICK events are dropped by default: host ticks come from the script,
//! guest ticks from the instruction count. Timing is checked separately by
//! [`check_sleep_wake`] and [`check_irq_delivery`] on a single trace.
//!
//! Scenarios are listed in `conformance/manifest`:
//!
//! ```text
//! [ping-pong]
//! system = machine-riscv-common.example.ping-pong
//! script = ping-pong.script
//! exit = 0
//! max_instr = 2000000
//! irq = 0@5000
//! drop_ticks = true
//! check = paired
//! ```
//!
//! `script` is relative to the manifest. `check` is `paired` (default),
//! `sleep-wake` or `irq-delivery`; property checks need no script.

use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::kernel::{kernel_init, parse_number, run_scenario, KernelConfig, KernelError, Script};
use crate::link::DEFAULT_RAM;
use crate::prx::{build_system, BuildError, ComponentIndex};
use crate::sim::{IrqTrigger, Machine, RunResult, RunStatus, SimError};
use crate::trace::{Event, EventTrace, IDLE_TASK};

pub const MANIFEST: &str = "conformance/manifest";
pub const DEFAULT_MAX_INSTR: u64 = 10_000_000;
const CONTEXT: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Check {
    Paired,
    SleepWake,
    IrqDelivery,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairedScenario {
    pub name: String,
    pub system: String,
    pub script: Option<Script>,
    pub drop_ticks: bool,
    pub expected_exit: u16,
    pub max_instr: u64,
    pub irqs: Vec<IrqTrigger>,
    pub check: Check,
}

impl PairedScenario {
    pub fn new(name: &str, system: &str, script: Script) -> PairedScenario {
        PairedScenario {
            name: name.to_string(),
            system: system.to_string(),
            script: Some(script),
            drop_ticks: true,
            expected_exit: 0,
            max_instr: DEFAULT_MAX_INSTR,
            irqs: Vec::new(),
            check: Check::Paired,
        }
    }
}

/// Outcome of one comparison or property check.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Verdict {
    pub pass: bool,
    /// Index (after filtering) of the first differing event.
    pub divergence: Option<usize>,
    /// `(index, event)` around the divergence on the guest side.
    pub left: Vec<(usize, Event)>,
    /// Same window on the reference side.
    pub right: Vec<(usize, Event)>,
    pub notes: Vec<String>,
}

impl Verdict {
    fn fail(&mut self, note: String) {
        self.pass = false;
        self.notes.push(note);
    }

    /// Human-readable report used for `.diff` files.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "verdict: {}", if self.pass { "PASS" } else { "FAIL" });
        for n in &self.notes {
            let _ = writeln!(out, "note: {n}");
        }
        if let Some(i) = self.divergence {
            let _ = writeln!(out, "first divergence at event {i}");
            for (label, side) in [("guest", &self.left), ("reference", &self.right)] {
                let _ = writeln!(out, "--- {label}");
                for (j, e) in side {
                    let mark = if *j == i { '>' } else { ' ' };
                    let _ = writeln!(out, "{mark} {j:5} {e}");
                }
            }
        }
        out
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

fn window(events: &[Event], at: usize) -> Vec<(usize, Event)> {
    let lo = at.saturating_sub(CONTEXT);
    let hi = (at + CONTEXT + 1).min(events.len());
    (lo..hi).map(|i| (i, events[i])).collect()
}

/// Element-wise comparison, optionally ignoring TICK events.
pub fn compare_traces(a: &EventTrace, b: &EventTrace, drop_ticks: bool) -> Verdict {
    let (a, b) = if drop_ticks { (a.without_ticks(), b.without_ticks()) } else { (a.clone(), b.clone()) };
    let (a, b) = (a.events(), b.events());
    let first = a.iter().zip(b).position(|(x, y)| x != y).or_else(|| (a.len() != b.len()).then(|| a.len().min(b.len())));
    match first {
        None => Verdict { pass: true, ..Verdict::default() },
        Some(i) => Verdict {
            pass: false,
            divergence: Some(i),
            left: window(a, i),
            right: window(b, i),
            notes: vec![format!("traces differ at event {i} (lengths {} and {})", a.len(), b.len())],
        },
    }
}

/// After `SLEEP(t, n)` with `n > 0`, task `t` is next switched in right
/// after the n-th following TICK, unless a higher-priority task is
/// running at that tick, in which case it comes later. A `sleep(0)`
/// does not block.
pub fn check_sleep_wake(trace: &EventTrace) -> Verdict {
    let ev = trace.events();
    let mut v = Verdict { pass: true, ..Verdict::default() };
    for (i, e) in ev.iter().enumerate() {
        let Event::Sleep { task, ticks } = *e else { continue };
        if ticks == 0 {
            continue;
        }
        let mut current = Some(task);
        let mut seen = 0u32;
        let mut delayed = false;
        let mut woke = None;
        for (j, later) in ev.iter().enumerate().skip(i + 1) {
            match *later {
                Event::Tick(_) => {
                    if seen == ticks as u32 && !delayed {
                        // The n-th tick passed without a switch to `task`.
                        break;
                    }
                    seen += 1;
                    if seen == ticks as u32 {
                        delayed = matches!(current, Some(c) if c != IDLE_TASK && c < task);
                    }
                }
                Event::TaskSwitch(t) => {
                    if t == task {
                        woke = Some((j, seen));
                        break;
                    }
                    current = Some(t);
                }
                Event::Exit(_) | Event::Fault { .. } => break,
                _ => {}
            }
        }
        match woke {
            Some((_, n)) if n == ticks as u32 || (delayed && n >= ticks as u32) => {}
            Some((j, n)) => v.fail(format!("SLEEP at event {i}: task {task} switched in at event {j} after {n} ticks, expected {ticks}")),
            None if seen >= ticks as u32 && !delayed => v.fail(format!("SLEEP at event {i}: task {task} not switched in after {ticks} ticks")),
            None => {}
        }
        if !v.pass && v.divergence.is_none() {
            v.divergence = Some(i);
            v.left = window(ev, i);
        }
    }
    v
}

/// Every `IRQ_RAISE(e)` is immediately followed by the SIGNAL_SEND of
/// `e`'s mapping, so a task woken by the interrupt is switched in only
/// after the raise.
pub fn check_irq_delivery(trace: &EventTrace, config: &KernelConfig) -> Verdict {
    let ev = trace.events();
    let mut v = Verdict { pass: true, ..Verdict::default() };
    let mut raised = 0;
    for (i, e) in ev.iter().enumerate() {
        let Event::IrqRaise(id) = *e else { continue };
        raised += 1;
        let Some(map) = config.irq_events.iter().find(|m| m.id == id) else {
            v.fail(format!("IRQ_RAISE({id}) at event {i} has no mapping"));
            continue;
        };
        let expect = Event::SignalSend { dst: map.task.0, mask: map.sigs.0 };
        if ev.get(i + 1) != Some(&expect) {
            v.fail(format!("IRQ_RAISE({id}) at event {i} is not followed by `{expect}`"));
            v.divergence.get_or_insert(i);
            continue;
        }
    }
    if raised == 0 {
        v.notes.push("no IRQ_RAISE events in trace".to_string());
    }
    if let Some(i) = v.divergence {
        v.left = window(ev, i);
    }
    v
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HarnessError {
    #[error("manifest {path}: {reason}")]
    Manifest { path: PathBuf, reason: String },
    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),
    #[error("scenario `{scenario}`: build failed: {error}")]
    Build { scenario: String, error: BuildError },
    #[error("scenario `{scenario}`: cannot load image: {error}")]
    Load { scenario: String, error: SimError },
    #[error("scenario `{scenario}`: reference kernel: {error}")]
    Reference { scenario: String, error: KernelError },
    #[error("{path}: {reason}")]
    Io { path: PathBuf, reason: String },
}

fn parse_bool(v: &str) -> Option<bool> {
    match v {
        "true" | "yes" | "1" => Some(true),
        "false" | "no" | "0" => Some(false),
        _ => None,
    }
}

/// Parses a manifest; `base` resolves relative script paths.
pub fn parse_manifest(text: &str, base: &Path, path: &Path) -> Result<Vec<PairedScenario>, HarnessError> {
    let err = |line: usize, reason: String| HarnessError::Manifest { path: path.to_path_buf(), reason: format!("line {line}: {reason}") };
    let mut out: Vec<PairedScenario> = Vec::new();
    let mut system_seen = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let n = i + 1;
        let line = raw.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            let name = name.trim();
            if name.is_empty() || out.iter().any(|s| s.name == name) {
                return Err(err(n, format!("bad or duplicate scenario name `{name}`")));
            }
            out.push(PairedScenario {
                name: name.to_string(),
                system: String::new(),
                script: None,
                drop_ticks: true,
                expected_exit: 0,
                max_instr: DEFAULT_MAX_INSTR,
                irqs: Vec::new(),
                check: Check::Paired,
            });
            system_seen.push(false);
            continue;
        }
        let Some(cur) = out.last_mut() else {
            return Err(err(n, "entry before the first [scenario]".to_string()));
        };
        let (key, value) = line.split_once('=').map(|(k, v)| (k.trim(), v.trim())).ok_or_else(|| err(n, format!("expected key = value, got `{line}`")))?;
        match key {
            "system" => {
                cur.system = value.to_string();
                *system_seen.last_mut().unwrap() = true;
            }
            "script" => {
                let p = base.join(value);
                let text = fs::read_to_string(&p).map_err(|e| err(n, format!("{}: {e}", p.display())))?;
                cur.script = Some(text.parse().map_err(|e: KernelError| err(n, format!("{}: {e}", p.display())))?);
            }
            "exit" => cur.expected_exit = parse_number(value).and_then(|v| u16::try_from(v).ok()).ok_or_else(|| err(n, format!("bad exit `{value}`")))?,
            "max_instr" => cur.max_instr = parse_number(value).filter(|v| *v > 0).ok_or_else(|| err(n, format!("bad max_instr `{value}`")))?,
            "irq" => cur.irqs.push(value.parse().map_err(|e: SimError| err(n, e.to_string()))?),
            "drop_ticks" => cur.drop_ticks = parse_bool(value).ok_or_else(|| err(n, format!("bad flag `{value}`")))?,
            "check" => {
                cur.check = match value {
                    "paired" => Check::Paired,
                    "sleep-wake" => Check::SleepWake,
                    "irq-delivery" => Check::IrqDelivery,
                    _ => return Err(err(n, format!("unknown check `{value}`"))),
                }
            }
            _ => return Err(err(n, format!("unknown key `{key}`"))),
        }
    }
    for (s, seen) in out.iter().zip(system_seen) {
        if !seen {
            return Err(err(0, format!("scenario `{}` has no system", s.name)));
        }
        if s.check == Check::Paired && s.script.is_none() {
            return Err(err(0, format!("paired scenario `{}` has no script", s.name)));
        }
    }
    Ok(out)
}

pub fn load_manifest(project_root: &Path) -> Result<Vec<PairedScenario>, HarnessError> {
    let path = project_root.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| HarnessError::Io { path: path.clone(), reason: e.to_string() })?;
    parse_manifest(&text, path.parent().unwrap(), &path)
}

/// Guest-side result plus the verdict.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScenarioReport {
    pub name: String,
    pub verdict: Verdict,
    pub guest: RunResult,
}

/// Builds and runs the guest, runs the reference and compares.
pub fn run_paired(scenario: &PairedScenario, index: &ComponentIndex) -> Result<ScenarioReport, HarnessError> {
    let name = scenario.name.clone();
    let build = |error| HarnessError::Build { scenario: name.clone(), error };
    let desc = index.load_system(&scenario.system).map_err(build)?;
    let image = build_system(&desc, index).map_err(build)?;
    let mut m = Machine::load(&image, DEFAULT_RAM).map_err(|error| HarnessError::Load { scenario: name.clone(), error })?;
    m.schedule_irqs(&scenario.irqs);
    let guest = m.run(scenario.max_instr);

    let mut verdict = match scenario.check {
        Check::Paired => {
            let script = scenario.script.as_ref().expect("paired scenario without script");
            let config = desc.kernel.clone().unwrap_or_default();
            let reference = kernel_init(&config)
                .and_then(|mut k| run_scenario(&mut k, script))
                .map_err(|error| HarnessError::Reference { scenario: name.clone(), error })?;
            let mut v = compare_traces(&guest.trace, &reference.trace, scenario.drop_ticks);
            if let Some(code) = reference.exit_code() {
                if code != scenario.expected_exit {
                    v.fail(format!("reference exit {code}, expected {}", scenario.expected_exit));
                }
            }
            v
        }
        Check::SleepWake => check_sleep_wake(&guest.trace),
        Check::IrqDelivery => check_irq_delivery(&guest.trace, &desc.kernel.clone().unwrap_or_default()),
    };
    match guest.status {
        RunStatus::Exit(code) if code == scenario.expected_exit => {}
        other => verdict.fail(format!("guest ended with {other}, expected exit({})", scenario.expected_exit)),
    }
    Ok(ScenarioReport { name, verdict, guest })
}

/// Runs `which` (a scenario or system name, or every scenario when
/// `None`), writing `out/conformance/<name>.diff` for each failure.
pub fn verify(project_root: &Path, index: &ComponentIndex, which: Option<&str>) -> Result<Vec<ScenarioReport>, HarnessError> {
    let all = load_manifest(project_root)?;
    let selected: Vec<&PairedScenario> = match which {
        None => all.iter().collect(),
        Some(w) => all.iter().filter(|s| s.name == w || s.system == w).collect(),
    };
    if selected.is_empty() {
        return Err(HarnessError::UnknownScenario(which.unwrap_or("").to_string()));
    }
    let dir = project_root.join("out").join("conformance");
    let mut reports = Vec::new();
    for s in selected {
        let report = run_paired(s, index)?;
        let diff = dir.join(format!("{}.diff", s.name));
        if report.verdict.pass {
            let _ = fs::remove_file(&diff);
        } else {
            fs::create_dir_all(&dir).map_err(|e| HarnessError::Io { path: dir.clone(), reason: e.to_string() })?;
            fs::write(&diff, report.verdict.render()).map_err(|e| HarnessError::Io { path: diff.clone(), reason: e.to_string() })?;
        }
        reports.push(report);
    }
    Ok(reports)
}
