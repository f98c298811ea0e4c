// Licensed under the Apache-2.0 license

//! Scenario scripts: an external driver for [`KernelState`].
//!
//! One directive per line, `#` starts a comment:
//!
//! ```text
//! call <task> <api> <args...>   # api made by the running task
//! tick
//! irq <event>
//! out <hex-byte>
//! exit <code>
//! ```
//!
//! APIs: `signal_send <dst> <mask>`, `signal_wait <mask>`, `mutex_lock <m>`,
//! `mutex_try_lock <m>`, `mutex_unlock <m>`, `sleep <n>`, `msgq_put <q> <v>`,
//! `msgq_get <q>`. Numbers are decimal or `0x` hex.

use std::fmt;
use std::str::FromStr;

use super::{Halt, KernelError, KernelState, MutexId, QueueId, SignalSet, TaskId, TaskState};
use crate::trace::EventTrace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ApiCall {
    SignalSend { dst: TaskId, sigs: SignalSet },
    SignalWait(SignalSet),
    MutexLock(MutexId),
    MutexTryLock(MutexId),
    MutexUnlock(MutexId),
    Sleep(u16),
    MsgqPut { queue: QueueId, value: u32 },
    MsgqGet(QueueId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Step {
    Call { task: TaskId, api: ApiCall },
    Tick,
    Irq(u8),
    Out(u8),
    Exit(u16),
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Script {
    pub steps: Vec<Step>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioEnd {
    Exited(u16),
    Faulted { task: TaskId, kind: super::FaultKind },
    /// Script ran out with at least one task still able to make progress.
    Completed,
    /// Script ran out with every task blocked and nothing left to wake one.
    IdleDeadlock,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScenarioOutcome {
    pub trace: EventTrace,
    pub end: ScenarioEnd,
}

impl ScenarioOutcome {
    pub fn exit_code(&self) -> Option<u16> {
        match self.end {
            ScenarioEnd::Exited(code) => Some(code),
            _ => None,
        }
    }
}

impl KernelState {
    /// Applies one script step. Faults are recorded in the trace and halt the
    /// kernel; they are not reported as errors here.
    pub fn apply(&mut self, step: &Step) -> Result<(), KernelError> {
        let result = match *step {
            Step::Call { task, api } => {
                if self.halted.is_some() {
                    return Err(KernelError::Halted);
                }
                if self.current != Some(task) {
                    return Err(KernelError::Script(format!(
                        "call attributed to {task} but the running task is {}",
                        self.current.map_or("idle".to_string(), |t| t.to_string())
                    )));
                }
                match api {
                    ApiCall::SignalSend { dst, sigs } => self.signal_send(dst, sigs),
                    ApiCall::SignalWait(sigs) => self.signal_wait(sigs).map(drop),
                    ApiCall::MutexLock(m) => self.mutex_lock(m).map(drop),
                    ApiCall::MutexTryLock(m) => self.mutex_try_lock(m).map(drop),
                    ApiCall::MutexUnlock(m) => self.mutex_unlock(m),
                    ApiCall::Sleep(n) => self.sleep(n).map(drop),
                    ApiCall::MsgqPut { queue, value } => self.msgq_put(queue, value).map(drop),
                    ApiCall::MsgqGet(queue) => self.msgq_get(queue).map(drop),
                }
            }
            Step::Tick => self.tick(),
            Step::Irq(e) => self.interrupt_event_raise(e),
            Step::Out(b) => self.output(b),
            Step::Exit(code) => self.exit(code),
        };
        match result {
            Err(KernelError::Fault { .. }) => Ok(()),
            other => other,
        }
    }
}

/// Runs `script` to completion (or until exit/fault) and returns the full trace.
pub fn run_scenario(state: &mut KernelState, script: &Script) -> Result<ScenarioOutcome, KernelError> {
    for (i, step) in script.steps.iter().enumerate() {
        if state.halted.is_some() {
            break;
        }
        state.apply(step).map_err(|e| match e {
            KernelError::Script(reason) => KernelError::Script(format!("step {}: {reason}", i + 1)),
            other => other,
        })?;
    }
    let end = match state.halted {
        Some(Halt::Exit(code)) => ScenarioEnd::Exited(code),
        Some(Halt::Fault { task, kind }) => ScenarioEnd::Faulted { task, kind },
        None if state.current.is_none() && !state.tasks.iter().any(|t| matches!(t.state, TaskState::Sleeping(_))) => {
            ScenarioEnd::IdleDeadlock
        }
        None => ScenarioEnd::Completed,
    };
    Ok(ScenarioOutcome { trace: state.trace.clone(), end })
}

pub(crate) fn parse_number(text: &str) -> Option<u64> {
    match text.strip_prefix("0x").or_else(|| text.strip_prefix("0X")) {
        Some(hex) => u64::from_str_radix(hex, 16).ok(),
        None => text.parse().ok(),
    }
}

fn num<T: TryFrom<u64>>(args: &[&str], i: usize, what: &str) -> Result<T, String> {
    let text = args.get(i).ok_or_else(|| format!("missing {what}"))?;
    let value = parse_number(text).ok_or_else(|| format!("bad {what} `{text}`"))?;
    T::try_from(value).map_err(|_| format!("{what} `{text}` out of range"))
}

fn parse_step(words: &[&str]) -> Result<Step, String> {
    let arity = |n: usize| {
        if words.len() == n {
            Ok(())
        } else {
            Err(format!("`{}` takes {} argument(s)", words[0], n - 1))
        }
    };
    match words[0] {
        "tick" => arity(1).map(|_| Step::Tick),
        "irq" => {
            arity(2)?;
            Ok(Step::Irq(num(words, 1, "event")?))
        }
        "out" => {
            arity(2)?;
            let text = words[1].strip_prefix("0x").unwrap_or(words[1]);
            u8::from_str_radix(text, 16).map(Step::Out).map_err(|_| format!("bad hex byte `{}`", words[1]))
        }
        "exit" => {
            arity(2)?;
            Ok(Step::Exit(num(words, 1, "exit code")?))
        }
        "call" => {
            if words.len() < 3 {
                return Err("`call` needs a task and an api".into());
            }
            let task = TaskId(num(words, 1, "task")?);
            let args = &words[3..];
            let expect = |n: usize| {
                if args.len() == n {
                    Ok(())
                } else {
                    Err(format!("`{}` takes {n} argument(s)", words[2]))
                }
            };
            let api = match words[2] {
                "signal_send" => {
                    expect(2)?;
                    ApiCall::SignalSend { dst: TaskId(num(args, 0, "task")?), sigs: SignalSet(num(args, 1, "mask")?) }
                }
                "signal_wait" => {
                    expect(1)?;
                    ApiCall::SignalWait(SignalSet(num(args, 0, "mask")?))
                }
                "mutex_lock" => {
                    expect(1)?;
                    ApiCall::MutexLock(MutexId(num(args, 0, "mutex")?))
                }
                "mutex_try_lock" => {
                    expect(1)?;
                    ApiCall::MutexTryLock(MutexId(num(args, 0, "mutex")?))
                }
                "mutex_unlock" => {
                    expect(1)?;
                    ApiCall::MutexUnlock(MutexId(num(args, 0, "mutex")?))
                }
                "sleep" => {
                    expect(1)?;
                    ApiCall::Sleep(num(args, 0, "tick count")?)
                }
                "msgq_put" => {
                    expect(2)?;
                    ApiCall::MsgqPut { queue: QueueId(num(args, 0, "queue")?), value: num(args, 1, "value")? }
                }
                "msgq_get" => {
                    expect(1)?;
                    ApiCall::MsgqGet(QueueId(num(args, 0, "queue")?))
                }
                other => return Err(format!("unknown api `{other}`")),
            };
            Ok(Step::Call { task, api })
        }
        other => Err(format!("unknown directive `{other}`")),
    }
}

impl FromStr for Script {
    type Err = KernelError;

    fn from_str(text: &str) -> Result<Script, KernelError> {
        let mut steps = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let words: Vec<&str> = line.split_whitespace().collect();
            let step = parse_step(&words).map_err(|reason| KernelError::Script(format!("line {}: {reason}", i + 1)))?;
            steps.push(step);
        }
        Ok(Script { steps })
    }
}

impl fmt::Display for Step {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Step::Tick => f.write_str("tick"),
            Step::Irq(e) => write!(f, "irq {e}"),
            Step::Out(b) => write!(f, "out {b:02x}"),
            Step::Exit(c) => write!(f, "exit {c}"),
            Step::Call { task, api } => {
                write!(f, "call {} ", task.0)?;
                match api {
                    ApiCall::SignalSend { dst, sigs } => write!(f, "signal_send {} {:#x}", dst.0, sigs.0),
                    ApiCall::SignalWait(s) => write!(f, "signal_wait {:#x}", s.0),
                    ApiCall::MutexLock(m) => write!(f, "mutex_lock {}", m.0),
                    ApiCall::MutexTryLock(m) => write!(f, "mutex_try_lock {}", m.0),
                    ApiCall::MutexUnlock(m) => write!(f, "mutex_unlock {}", m.0),
                    ApiCall::Sleep(n) => write!(f, "sleep {n}"),
                    ApiCall::MsgqPut { queue, value } => write!(f, "msgq_put {} {value}", queue.0),
                    ApiCall::MsgqGet(q) => write!(f, "msgq_get {}", q.0),
                }
            }
        }
    }
}

impl fmt::Display for Script {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.steps {
            writeln!(f, "{s}")?;
        }
        Ok(())
    }
}
