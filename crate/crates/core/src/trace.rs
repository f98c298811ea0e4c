// Licensed under the Apache-2.0 license

//! Kernel event traces.
//!
//! Both the reference kernel model and a guest kernel running on the
//! simulator describe what they did as a sequence of [`Event`]s. Guests
//! report events through the trace port as 32-bit words laid out as
//! `type[31:24] | arg0[23:16] | arg1[15:0]`; traces are stored on disk one
//! event per line as `EVT <NAME> <arg0> <arg1>` with decimal arguments.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

/// `TASK_SWITCH` argument used when no task is runnable.
pub const IDLE_TASK: u8 = 0xff;

/// Fault kinds carried in the second argument of a `FAULT` event.
pub const FAULT_RECURSIVE_LOCK: u16 = 1;
pub const FAULT_NOT_OWNER: u16 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Event {
    Output(u8),
    TaskSwitch(u8),
    SignalSend { dst: u8, mask: u16 },
    SignalRecv { task: u8, mask: u16 },
    MutexLock { task: u8, mutex: u8 },
    MutexBlock { task: u8, mutex: u8 },
    MutexUnlock { task: u8, mutex: u8 },
    Sleep { task: u8, ticks: u16 },
    /// Tick counter modulo 2^16.
    Tick(u16),
    /// Low 16 bits of the value travel with queue events.
    MsgPut { queue: u8, value: u16 },
    MsgGet { queue: u8, value: u16 },
    IrqRaise(u8),
    Exit(u16),
    Fault { task: u8, kind: u16 },
}

/// Event type codes as they appear in bits 31:24 of a trace word.
pub mod code {
    pub const OUTPUT: u8 = 0x01;
    pub const TASK_SWITCH: u8 = 0x02;
    pub const SIGNAL_SEND: u8 = 0x03;
    pub const SIGNAL_RECV: u8 = 0x04;
    pub const MUTEX_LOCK: u8 = 0x05;
    pub const MUTEX_BLOCK: u8 = 0x06;
    pub const MUTEX_UNLOCK: u8 = 0x07;
    pub const SLEEP: u8 = 0x08;
    pub const TICK: u8 = 0x09;
    pub const MSG_PUT: u8 = 0x0a;
    pub const MSG_GET: u8 = 0x0b;
    pub const IRQ_RAISE: u8 = 0x0c;
    pub const EXIT: u8 = 0x0d;
    pub const FAULT: u8 = 0x0e;
}

const NAMES: [(u8, &str); 14] = [
    (code::OUTPUT, "OUTPUT"),
    (code::TASK_SWITCH, "TASK_SWITCH"),
    (code::SIGNAL_SEND, "SIGNAL_SEND"),
    (code::SIGNAL_RECV, "SIGNAL_RECV"),
    (code::MUTEX_LOCK, "MUTEX_LOCK"),
    (code::MUTEX_BLOCK, "MUTEX_BLOCK"),
    (code::MUTEX_UNLOCK, "MUTEX_UNLOCK"),
    (code::SLEEP, "SLEEP"),
    (code::TICK, "TICK"),
    (code::MSG_PUT, "MSG_PUT"),
    (code::MSG_GET, "MSG_GET"),
    (code::IRQ_RAISE, "IRQ_RAISE"),
    (code::EXIT, "EXIT"),
    (code::FAULT, "FAULT"),
];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TraceError {
    #[error("unknown trace event type {0:#04x}")]
    UnknownType(u8),
    #[error("line {line}: {reason}")]
    Syntax { line: usize, reason: String },
}

impl Event {
    pub fn code(&self) -> u8 {
        match self {
            Event::Output(_) => code::OUTPUT,
            Event::TaskSwitch(_) => code::TASK_SWITCH,
            Event::SignalSend { .. } => code::SIGNAL_SEND,
            Event::SignalRecv { .. } => code::SIGNAL_RECV,
            Event::MutexLock { .. } => code::MUTEX_LOCK,
            Event::MutexBlock { .. } => code::MUTEX_BLOCK,
            Event::MutexUnlock { .. } => code::MUTEX_UNLOCK,
            Event::Sleep { .. } => code::SLEEP,
            Event::Tick(_) => code::TICK,
            Event::MsgPut { .. } => code::MSG_PUT,
            Event::MsgGet { .. } => code::MSG_GET,
            Event::IrqRaise(_) => code::IRQ_RAISE,
            Event::Exit(_) => code::EXIT,
            Event::Fault { .. } => code::FAULT,
        }
    }

    pub fn name(&self) -> &'static str {
        let c = self.code();
        NAMES.iter().find(|(k, _)| *k == c).map(|(_, n)| *n).unwrap()
    }

    /// `(arg0, arg1)` as written to the trace port and trace files.
    pub fn args(&self) -> (u8, u16) {
        match *self {
            Event::Output(b) => (b, 0),
            Event::TaskSwitch(t) => (t, 0),
            Event::SignalSend { dst, mask } => (dst, mask),
            Event::SignalRecv { task, mask } => (task, mask),
            Event::MutexLock { task, mutex } | Event::MutexBlock { task, mutex } | Event::MutexUnlock { task, mutex } => {
                (task, mutex.into())
            }
            Event::Sleep { task, ticks } => (task, ticks),
            Event::Tick(n) => (0, n),
            Event::MsgPut { queue, value } | Event::MsgGet { queue, value } => (queue, value),
            Event::IrqRaise(e) => (e, 0),
            Event::Exit(code) => (0, code),
            Event::Fault { task, kind } => (task, kind),
        }
    }

    pub fn from_parts(code: u8, arg0: u8, arg1: u16) -> Result<Event, TraceError> {
        Ok(match code {
            code::OUTPUT => Event::Output(arg0),
            code::TASK_SWITCH => Event::TaskSwitch(arg0),
            code::SIGNAL_SEND => Event::SignalSend { dst: arg0, mask: arg1 },
            code::SIGNAL_RECV => Event::SignalRecv { task: arg0, mask: arg1 },
            code::MUTEX_LOCK => Event::MutexLock { task: arg0, mutex: arg1 as u8 },
            code::MUTEX_BLOCK => Event::MutexBlock { task: arg0, mutex: arg1 as u8 },
            code::MUTEX_UNLOCK => Event::MutexUnlock { task: arg0, mutex: arg1 as u8 },
            code::SLEEP => Event::Sleep { task: arg0, ticks: arg1 },
            code::TICK => Event::Tick(arg1),
            code::MSG_PUT => Event::MsgPut { queue: arg0, value: arg1 },
            code::MSG_GET => Event::MsgGet { queue: arg0, value: arg1 },
            code::IRQ_RAISE => Event::IrqRaise(arg0),
            code::EXIT => Event::Exit(arg1),
            code::FAULT => Event::Fault { task: arg0, kind: arg1 },
            other => return Err(TraceError::UnknownType(other)),
        })
    }

    pub fn to_word(&self) -> u32 {
        let (a0, a1) = self.args();
        ((self.code() as u32) << 24) | ((a0 as u32) << 16) | a1 as u32
    }

    pub fn from_word(word: u32) -> Result<Event, TraceError> {
        Event::from_parts((word >> 24) as u8, (word >> 16) as u8, word as u16)
    }

    pub fn is_tick(&self) -> bool {
        matches!(self, Event::Tick(_))
    }
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (a0, a1) = self.args();
        write!(f, "EVT {} {} {}", self.name(), a0, a1)
    }
}

impl FromStr for Event {
    type Err = String;

    fn from_str(s: &str) -> Result<Event, String> {
        let fields: Vec<&str> = s.split_whitespace().collect();
        let [tag, name, a0, a1] = fields[..] else {
            return Err(format!("expected `EVT <NAME> <arg0> <arg1>`, got `{s}`"));
        };
        if tag != "EVT" {
            return Err(format!("expected `EVT`, got `{tag}`"));
        }
        let code = NAMES.iter().find(|(_, n)| *n == name).map(|(c, _)| *c).ok_or_else(|| format!("unknown event `{name}`"))?;
        let a0: u8 = a0.parse().map_err(|_| format!("bad arg0 `{a0}`"))?;
        let a1: u16 = a1.parse().map_err(|_| format!("bad arg1 `{a1}`"))?;
        Event::from_parts(code, a0, a1).map_err(|e| e.to_string())
    }
}

/// An ordered list of kernel events.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct EventTrace(pub Vec<Event>);

impl EventTrace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, event: Event) {
        self.0.push(event);
    }

    pub fn events(&self) -> &[Event] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn without_ticks(&self) -> EventTrace {
        EventTrace(self.0.iter().copied().filter(|e| !e.is_tick()).collect())
    }

    /// Bytes carried by `OUTPUT` events, in order.
    pub fn output(&self) -> Vec<u8> {
        self.0
            .iter()
            .filter_map(|e| match e {
                Event::Output(b) => Some(*b),
                _ => None,
            })
            .collect()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for e in &self.0 {
            out.push_str(&e.to_string());
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<EventTrace, TraceError> {
        let mut trace = EventTrace::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let event = line.parse().map_err(|reason| TraceError::Syntax { line: i + 1, reason })?;
            trace.push(event);
        }
        Ok(trace)
    }
}

impl FromIterator<Event> for EventTrace {
    fn from_iter<I: IntoIterator<Item = Event>>(iter: I) -> Self {
        EventTrace(iter.into_iter().collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn any_event() -> impl Strategy<Value = Event> {
        (1u8..=14, any::<u8>(), any::<u16>()).prop_map(|(c, a0, a1)| {
            // Normalise fields that the variant does not carry.
            let e = Event::from_parts(c, a0, a1).unwrap();
            Event::from_word(e.to_word()).unwrap()
        })
    }

    proptest! {
        #[test]
        fn word_and_text_forms_agree(events in prop::collection::vec(any_event(), 0..40)) {
            let trace: EventTrace = events.iter().copied().collect();
            for e in &events {
                prop_assert_eq!(Event::from_word(e.to_word()).unwrap(), *e);
            }
            prop_assert_eq!(EventTrace::from_text(&trace.to_text()).unwrap(), trace);
        }
    }

    #[test]
    fn word_layout() {
        let e = Event::SignalSend { dst: 3, mask: 0x8001 };
        assert_eq!(e.to_word(), 0x0303_8001);
        assert_eq!(e.to_string(), "EVT SIGNAL_SEND 3 32769");
    }

    #[test]
    fn unknown_type_is_rejected() {
        assert_eq!(Event::from_word(0), Err(TraceError::UnknownType(0)));
        assert_eq!(Event::from_word(0xff00_0000), Err(TraceError::UnknownType(0xff)));
    }

    #[test]
    fn malformed_lines() {
        assert!(EventTrace::from_text("EVT TICK 0").is_err());
        assert!(EventTrace::from_text("EVT BOGUS 0 0").is_err());
        assert!(EventTrace::from_text("EVT OUTPUT 256 0").is_err());
    }
}
