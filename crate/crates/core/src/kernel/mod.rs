// Licensed under the Apache-2.0 license

//! Reference model of the rigel executive.
//!
//! A single-threaded state machine with a fixed task set and strict
//! priority scheduling (task index 0 is the highest priority). Every
//! observable effect is appended to an [`EventTrace`]; the assembly port is
//! required to reproduce that trace.
//!
//! Events are emitted when the corresponding state actually changes: a mutex
//! handed to a waiter produces `MUTEX_LOCK` at unlock time, a queue value
//! produces `MSG_PUT`/`MSG_GET` when it moves, while `SIGNAL_RECV` of a
//! woken waiter is produced when that task is next switched in, since more
//! signals may arrive in between.

mod script;

pub(crate) use script::parse_number;
pub use script::{run_scenario, ApiCall, ScenarioEnd, ScenarioOutcome, Script, Step};

use std::collections::{BTreeSet, VecDeque};
use std::fmt;

use thiserror::Error;

use crate::trace::{Event, EventTrace, FAULT_NOT_OWNER, FAULT_RECURSIVE_LOCK, IDLE_TASK};

pub const MAX_TASKS: usize = 8;
pub const MAX_MUTEXES: usize = 16;
pub const MAX_QUEUES: usize = 16;
pub const MAX_IRQ_EVENTS: usize = 16;
pub const MAX_QUEUE_CAPACITY: u32 = 64;

/// Task identifier; also the task's priority.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TaskId(pub u8);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MutexId(pub u8);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct QueueId(pub u8);

/// 16-bit signal mask; bit `i` is signal `i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct SignalSet(pub u16);

impl SignalSet {
    pub const EMPTY: SignalSet = SignalSet(0);

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn intersects(self, other: SignalSet) -> bool {
        self.0 & other.0 != 0
    }
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "task {}", self.0)
    }
}

impl fmt::Display for SignalSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#06x}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskConfig {
    pub name: String,
    pub priority: u8,
    pub stack_size: u32,
    pub entry: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueueConfig {
    pub name: String,
    pub capacity: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IrqEventConfig {
    pub name: String,
    pub id: u8,
    pub task: TaskId,
    pub sigs: SignalSet,
}

/// The kernel slice of a system description. `tasks` is ordered by priority.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct KernelConfig {
    pub tasks: Vec<TaskConfig>,
    pub mutexes: Vec<String>,
    pub queues: Vec<QueueConfig>,
    pub irq_events: Vec<IrqEventConfig>,
}

impl KernelConfig {
    /// Convenience constructor for `n` anonymous tasks and no other objects.
    pub fn with_tasks(n: usize) -> Self {
        KernelConfig {
            tasks: (0..n)
                .map(|i| TaskConfig {
                    name: format!("t{i}"),
                    priority: i as u8,
                    stack_size: 512,
                    entry: format!("task_{i}"),
                })
                .collect(),
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), KernelError> {
        let err = |m: String| Err(KernelError::Config(m));
        if self.tasks.is_empty() {
            return err("system has no tasks".into());
        }
        if self.tasks.len() > MAX_TASKS {
            return err(format!("{} tasks exceed the limit of {MAX_TASKS}", self.tasks.len()));
        }
        for (i, t) in self.tasks.iter().enumerate() {
            if t.priority as usize != i {
                return err(format!("task `{}` has priority {} but priorities must be 0..{} in order", t.name, t.priority, self.tasks.len()));
            }
        }
        if self.mutexes.len() > MAX_MUTEXES {
            return err(format!("{} mutexes exceed the limit of {MAX_MUTEXES}", self.mutexes.len()));
        }
        if self.queues.len() > MAX_QUEUES {
            return err(format!("{} queues exceed the limit of {MAX_QUEUES}", self.queues.len()));
        }
        if self.irq_events.len() > MAX_IRQ_EVENTS {
            return err(format!("{} interrupt events exceed the limit of {MAX_IRQ_EVENTS}", self.irq_events.len()));
        }
        check_unique("task", self.tasks.iter().map(|t| t.name.as_str()))?;
        check_unique("task entry", self.tasks.iter().map(|t| t.entry.as_str()))?;
        check_unique("mutex", self.mutexes.iter().map(String::as_str))?;
        check_unique("queue", self.queues.iter().map(|q| q.name.as_str()))?;
        check_unique("interrupt event", self.irq_events.iter().map(|e| e.name.as_str()))?;
        for q in &self.queues {
            if q.capacity == 0 || q.capacity > MAX_QUEUE_CAPACITY {
                return err(format!("queue `{}` capacity {} outside 1..={MAX_QUEUE_CAPACITY}", q.name, q.capacity));
            }
        }
        let mut ids = BTreeSet::new();
        for e in &self.irq_events {
            if e.id as usize >= MAX_IRQ_EVENTS {
                return err(format!("interrupt event `{}` id {} outside 0..{MAX_IRQ_EVENTS}", e.name, e.id));
            }
            if !ids.insert(e.id) {
                return err(format!("interrupt event id {} used twice", e.id));
            }
            if e.task.0 as usize >= self.tasks.len() {
                return err(format!("interrupt event `{}` targets unknown {}", e.name, e.task));
            }
            if e.sigs.is_empty() {
                return err(format!("interrupt event `{}` has an empty signal set", e.name));
            }
        }
        Ok(())
    }
}

fn check_unique<'a>(what: &str, names: impl Iterator<Item = &'a str>) -> Result<(), KernelError> {
    let mut seen = BTreeSet::new();
    for n in names {
        if !seen.insert(n) {
            return Err(KernelError::Config(format!("duplicate {what} name `{n}`")));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TaskState {
    Ready,
    Running,
    BlockedOnSignal(SignalSet),
    BlockedOnMutex(MutexId),
    BlockedOnQueuePut { queue: QueueId, value: u32 },
    BlockedOnQueueGet(QueueId),
    Sleeping(u32),
}

impl TaskState {
    pub fn is_runnable(self) -> bool {
        matches!(self, TaskState::Ready | TaskState::Running)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskControl {
    pub state: TaskState,
    pub pending: SignalSet,
    pub stack_size: u32,
    pub entry: String,
    /// Signal set a woken waiter still has to collect when it next runs.
    resume_wait: Option<SignalSet>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct MutexRecord {
    pub owner: Option<TaskId>,
    pub waiters: BTreeSet<TaskId>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MessageQueueRecord {
    pub capacity: u32,
    pub buffer: VecDeque<u32>,
    pub put_waiters: BTreeSet<TaskId>,
    pub get_waiters: BTreeSet<TaskId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct InterruptEventMap {
    pub entries: Vec<Option<(TaskId, SignalSet)>>,
    pub pending: u16,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FaultKind {
    RecursiveLock,
    NotOwner,
}

impl FaultKind {
    pub fn code(self) -> u16 {
        match self {
            FaultKind::RecursiveLock => FAULT_RECURSIVE_LOCK,
            FaultKind::NotOwner => FAULT_NOT_OWNER,
        }
    }
}

/// Why the kernel stopped accepting operations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Halt {
    Exit(u16),
    Fault { task: TaskId, kind: FaultKind },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KernelError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("invalid argument: {0}")]
    InvalidArg(String),
    #[error("script error: {0}")]
    Script(String),
    #[error("interrupt event {0} is not mapped")]
    UnmappedEvent(u8),
    #[error("{task} faulted: {kind:?}")]
    Fault { task: TaskId, kind: FaultKind },
    #[error("kernel has halted")]
    Halted,
}

/// Result of an API call made by the running task.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CallOutcome {
    /// Completed without blocking, carrying the call's return value.
    Done(u32),
    /// The caller blocked; its result is produced when it is resumed.
    Blocked,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KernelState {
    pub tasks: Vec<TaskControl>,
    pub current: Option<TaskId>,
    pub mutexes: Vec<MutexRecord>,
    pub queues: Vec<MessageQueueRecord>,
    pub irq_map: InterruptEventMap,
    pub tick_count: u64,
    pub trace: EventTrace,
    pub halted: Option<Halt>,
}

/// Builds the initial kernel state: every task Ready, task 0 running.
pub fn kernel_init(config: &KernelConfig) -> Result<KernelState, KernelError> {
    config.validate()?;
    let mut entries = vec![None; MAX_IRQ_EVENTS];
    for e in &config.irq_events {
        entries[e.id as usize] = Some((e.task, e.sigs));
    }
    let mut state = KernelState {
        tasks: config
            .tasks
            .iter()
            .map(|t| TaskControl {
                state: TaskState::Ready,
                pending: SignalSet::EMPTY,
                stack_size: t.stack_size,
                entry: t.entry.clone(),
                resume_wait: None,
            })
            .collect(),
        current: None,
        mutexes: vec![MutexRecord::default(); config.mutexes.len()],
        queues: config
            .queues
            .iter()
            .map(|q| MessageQueueRecord {
                capacity: q.capacity,
                buffer: VecDeque::new(),
                put_waiters: BTreeSet::new(),
                get_waiters: BTreeSet::new(),
            })
            .collect(),
        irq_map: InterruptEventMap { entries, pending: 0 },
        tick_count: 0,
        trace: EventTrace::new(),
        halted: None,
    };
    state.schedule();
    Ok(state)
}

impl KernelState {
    fn task(&self, t: TaskId) -> &TaskControl {
        &self.tasks[t.0 as usize]
    }

    fn task_mut(&mut self, t: TaskId) -> &mut TaskControl {
        &mut self.tasks[t.0 as usize]
    }

    fn emit(&mut self, e: Event) {
        self.trace.push(e);
    }

    fn ensure_live(&self) -> Result<(), KernelError> {
        match self.halted {
            Some(_) => Err(KernelError::Halted),
            None => Ok(()),
        }
    }

    fn caller(&self) -> Result<TaskId, KernelError> {
        self.ensure_live()?;
        self.current.ok_or_else(|| KernelError::Script("API call while the kernel is idle".into()))
    }

    fn check_task(&self, t: TaskId) -> Result<(), KernelError> {
        if (t.0 as usize) < self.tasks.len() {
            Ok(())
        } else {
            Err(KernelError::InvalidArg(format!("no {t}")))
        }
    }

    fn check_mutex(&self, m: MutexId) -> Result<(), KernelError> {
        if (m.0 as usize) < self.mutexes.len() {
            Ok(())
        } else {
            Err(KernelError::InvalidArg(format!("no mutex {}", m.0)))
        }
    }

    fn check_queue(&self, q: QueueId) -> Result<(), KernelError> {
        if (q.0 as usize) < self.queues.len() {
            Ok(())
        } else {
            Err(KernelError::InvalidArg(format!("no queue {}", q.0)))
        }
    }

    fn fault(&mut self, task: TaskId, kind: FaultKind) -> KernelError {
        self.emit(Event::Fault { task: task.0, kind: kind.code() });
        self.halted = Some(Halt::Fault { task, kind });
        KernelError::Fault { task, kind }
    }

    fn block(&mut self, t: TaskId, state: TaskState) {
        self.task_mut(t).state = state;
        self.schedule();
    }

    /// Picks the lowest-index runnable task and switches to it if it differs
    /// from the current one.
    pub fn schedule(&mut self) -> Option<TaskId> {
        let next = self.tasks.iter().position(|t| t.state.is_runnable()).map(|i| TaskId(i as u8));
        if next != self.current {
            if let Some(prev) = self.current {
                if self.task(prev).state == TaskState::Running {
                    self.task_mut(prev).state = TaskState::Ready;
                }
            }
            self.emit(Event::TaskSwitch(next.map_or(IDLE_TASK, |t| t.0)));
            self.current = next;
            if let Some(t) = next {
                self.task_mut(t).state = TaskState::Running;
                if let Some(wanted) = self.task_mut(t).resume_wait.take() {
                    self.collect_signals(t, wanted);
                }
            }
        }
        self.current
    }

    fn collect_signals(&mut self, t: TaskId, wanted: SignalSet) -> SignalSet {
        let task = self.task_mut(t);
        let got = SignalSet(task.pending.0 & wanted.0);
        task.pending.0 &= !got.0;
        self.emit(Event::SignalRecv { task: t.0, mask: got.0 });
        got
    }

    fn deliver_signals(&mut self, dst: TaskId, sigs: SignalSet) {
        let task = self.task_mut(dst);
        task.pending.0 |= sigs.0;
        if let TaskState::BlockedOnSignal(wanted) = task.state {
            if wanted.intersects(task.pending) {
                task.state = TaskState::Ready;
                task.resume_wait = Some(wanted);
            }
        }
        self.emit(Event::SignalSend { dst: dst.0, mask: sigs.0 });
    }

    pub fn signal_send(&mut self, dst: TaskId, sigs: SignalSet) -> Result<(), KernelError> {
        self.caller()?;
        self.check_task(dst)?;
        if sigs.is_empty() {
            return Err(KernelError::InvalidArg("empty signal set".into()));
        }
        self.deliver_signals(dst, sigs);
        self.schedule();
        Ok(())
    }

    /// Returns the collected signals, or `Blocked` if none of `sigs` is pending.
    pub fn signal_wait(&mut self, sigs: SignalSet) -> Result<CallOutcome, KernelError> {
        let me = self.caller()?;
        if sigs.is_empty() {
            return Err(KernelError::InvalidArg("empty signal set".into()));
        }
        if self.task(me).pending.intersects(sigs) {
            let got = self.collect_signals(me, sigs);
            return Ok(CallOutcome::Done(got.0.into()));
        }
        self.block(me, TaskState::BlockedOnSignal(sigs));
        Ok(CallOutcome::Blocked)
    }

    pub fn mutex_lock(&mut self, m: MutexId) -> Result<CallOutcome, KernelError> {
        let me = self.caller()?;
        self.check_mutex(m)?;
        match self.mutexes[m.0 as usize].owner {
            None => {
                self.mutexes[m.0 as usize].owner = Some(me);
                self.emit(Event::MutexLock { task: me.0, mutex: m.0 });
                Ok(CallOutcome::Done(0))
            }
            Some(owner) if owner == me => Err(self.fault(me, FaultKind::RecursiveLock)),
            Some(_) => {
                self.mutexes[m.0 as usize].waiters.insert(me);
                self.emit(Event::MutexBlock { task: me.0, mutex: m.0 });
                self.block(me, TaskState::BlockedOnMutex(m));
                Ok(CallOutcome::Blocked)
            }
        }
    }

    /// Never blocks and never faults; a self-owned mutex simply reports `false`.
    pub fn mutex_try_lock(&mut self, m: MutexId) -> Result<bool, KernelError> {
        let me = self.caller()?;
        self.check_mutex(m)?;
        if self.mutexes[m.0 as usize].owner.is_some() {
            return Ok(false);
        }
        self.mutexes[m.0 as usize].owner = Some(me);
        self.emit(Event::MutexLock { task: me.0, mutex: m.0 });
        Ok(true)
    }

    pub fn mutex_unlock(&mut self, m: MutexId) -> Result<(), KernelError> {
        let me = self.caller()?;
        self.check_mutex(m)?;
        if self.mutexes[m.0 as usize].owner != Some(me) {
            return Err(self.fault(me, FaultKind::NotOwner));
        }
        self.emit(Event::MutexUnlock { task: me.0, mutex: m.0 });
        let record = &mut self.mutexes[m.0 as usize];
        match record.waiters.pop_first() {
            Some(next) => {
                record.owner = Some(next);
                self.task_mut(next).state = TaskState::Ready;
                self.emit(Event::MutexLock { task: next.0, mutex: m.0 });
            }
            None => record.owner = None,
        }
        self.schedule();
        Ok(())
    }

    pub fn sleep(&mut self, ticks: u16) -> Result<CallOutcome, KernelError> {
        let me = self.caller()?;
        self.emit(Event::Sleep { task: me.0, ticks });
        if ticks == 0 {
            return Ok(CallOutcome::Done(0));
        }
        self.block(me, TaskState::Sleeping(ticks.into()));
        Ok(CallOutcome::Blocked)
    }

    pub fn tick(&mut self) -> Result<(), KernelError> {
        self.ensure_live()?;
        self.tick_count += 1;
        self.emit(Event::Tick(self.tick_count as u16));
        for task in &mut self.tasks {
            if let TaskState::Sleeping(remaining) = task.state {
                task.state = if remaining <= 1 { TaskState::Ready } else { TaskState::Sleeping(remaining - 1) };
            }
        }
        self.schedule();
        Ok(())
    }

    pub fn msgq_put(&mut self, q: QueueId, value: u32) -> Result<CallOutcome, KernelError> {
        let me = self.caller()?;
        self.check_queue(q)?;
        let queue = &mut self.queues[q.0 as usize];
        if queue.buffer.len() as u32 >= queue.capacity {
            queue.put_waiters.insert(me);
            self.block(me, TaskState::BlockedOnQueuePut { queue: q, value });
            return Ok(CallOutcome::Blocked);
        }
        self.enqueue(q, value);
        self.schedule();
        Ok(CallOutcome::Done(0))
    }

    pub fn msgq_get(&mut self, q: QueueId) -> Result<CallOutcome, KernelError> {
        let me = self.caller()?;
        self.check_queue(q)?;
        let queue = &mut self.queues[q.0 as usize];
        if queue.buffer.is_empty() {
            queue.get_waiters.insert(me);
            self.block(me, TaskState::BlockedOnQueueGet(q));
            return Ok(CallOutcome::Blocked);
        }
        let value = self.dequeue(q);
        self.schedule();
        Ok(CallOutcome::Done(value))
    }

    /// Appends `value` and hands the head to the highest-priority getter, if any.
    fn enqueue(&mut self, q: QueueId, value: u32) {
        self.queues[q.0 as usize].buffer.push_back(value);
        self.emit(Event::MsgPut { queue: q.0, value: value as u16 });
        if let Some(getter) = self.queues[q.0 as usize].get_waiters.pop_first() {
            self.dequeue(q);
            self.task_mut(getter).state = TaskState::Ready;
        }
    }

    /// Removes the head and lets the highest-priority blocked putter in.
    fn dequeue(&mut self, q: QueueId) -> u32 {
        let value = self.queues[q.0 as usize].buffer.pop_front().expect("dequeue from empty queue");
        self.emit(Event::MsgGet { queue: q.0, value: value as u16 });
        if let Some(putter) = self.queues[q.0 as usize].put_waiters.pop_first() {
            if let TaskState::BlockedOnQueuePut { value: pending, .. } = self.task(putter).state {
                self.task_mut(putter).state = TaskState::Ready;
                self.enqueue(q, pending);
            }
        }
        value
    }

    pub fn interrupt_event_raise(&mut self, event: u8) -> Result<(), KernelError> {
        self.ensure_live()?;
        let (task, sigs) = self
            .irq_map
            .entries
            .get(event as usize)
            .copied()
            .flatten()
            .ok_or(KernelError::UnmappedEvent(event))?;
        self.emit(Event::IrqRaise(event));
        self.irq_map.pending |= 1 << event;
        self.deliver_signals(task, sigs);
        self.irq_map.pending &= !(1 << event);
        self.schedule();
        Ok(())
    }

    pub fn output(&mut self, byte: u8) -> Result<(), KernelError> {
        self.ensure_live()?;
        self.emit(Event::Output(byte));
        Ok(())
    }

    pub fn exit(&mut self, code: u16) -> Result<(), KernelError> {
        self.ensure_live()?;
        self.emit(Event::Exit(code));
        self.halted = Some(Halt::Exit(code));
        Ok(())
    }

    /// Checks the structural invariants that must hold between operations.
    pub fn check_invariants(&self) -> Result<(), String> {
        let expected = self.tasks.iter().position(|t| t.state.is_runnable()).map(|i| TaskId(i as u8));
        if self.halted.is_none() && expected != self.current {
            return Err(format!("current is {:?} but the highest-priority runnable task is {:?}", self.current, expected));
        }
        for (i, t) in self.tasks.iter().enumerate() {
            let id = TaskId(i as u8);
            let running = t.state == TaskState::Running;
            if running != (self.current == Some(id)) && self.halted.is_none() {
                return Err(format!("{id} running flag disagrees with current {:?}", self.current));
            }
            if let TaskState::Sleeping(0) = t.state {
                return Err(format!("{id} sleeping with zero ticks remaining"));
            }
            if let TaskState::BlockedOnSignal(w) = t.state {
                if w.intersects(t.pending) {
                    return Err(format!("{id} blocked on {w} although {} is pending", t.pending));
                }
            }
        }
        for (i, m) in self.mutexes.iter().enumerate() {
            if let Some(owner) = m.owner {
                if m.waiters.contains(&owner) {
                    return Err(format!("mutex {i} owner {owner} is also waiting"));
                }
            } else if !m.waiters.is_empty() {
                return Err(format!("mutex {i} has waiters but no owner"));
            }
            for w in &m.waiters {
                if self.task(*w).state != TaskState::BlockedOnMutex(MutexId(i as u8)) {
                    return Err(format!("mutex {i} waiter {w} is not blocked on it"));
                }
            }
        }
        for (i, t) in self.tasks.iter().enumerate() {
            if let TaskState::BlockedOnMutex(m) = t.state {
                if !self.mutexes[m.0 as usize].waiters.contains(&TaskId(i as u8)) {
                    return Err(format!("task {i} blocked on mutex {} but not queued", m.0));
                }
            }
        }
        for (i, q) in self.queues.iter().enumerate() {
            let len = q.buffer.len() as u32;
            if len > q.capacity {
                return Err(format!("queue {i} holds {len} > capacity {}", q.capacity));
            }
            if !q.put_waiters.is_empty() && len != q.capacity {
                return Err(format!("queue {i} has blocked putters but is not full"));
            }
            if !q.get_waiters.is_empty() && len != 0 {
                return Err(format!("queue {i} has blocked getters but is not empty"));
            }
            for w in &q.put_waiters {
                if !matches!(self.task(*w).state, TaskState::BlockedOnQueuePut { queue, .. } if queue.0 as usize == i) {
                    return Err(format!("queue {i} put-waiter {w} is not blocked on it"));
                }
            }
            for w in &q.get_waiters {
                if self.task(*w).state != TaskState::BlockedOnQueueGet(QueueId(i as u8)) {
                    return Err(format!("queue {i} get-waiter {w} is not blocked on it"));
                }
            }
        }
        Ok(())
    }
}

/// Checks, over every prefix of `trace`, that no signal bit is received by a
/// task more often than it was sent to that task.
pub fn check_signal_conservation(trace: &EventTrace) -> Result<(), String> {
    let mut sent = [[0u64; 16]; 256];
    let mut received = [[0u64; 16]; 256];
    for (i, e) in trace.events().iter().enumerate() {
        match *e {
            Event::SignalSend { dst, mask } => (0..16).filter(|b| mask >> b & 1 == 1).for_each(|b| sent[dst as usize][b] += 1),
            Event::SignalRecv { task, mask } => {
                for b in (0..16).filter(|b| mask >> b & 1 == 1) {
                    received[task as usize][b] += 1;
                    if received[task as usize][b] > sent[task as usize][b] {
                        return Err(format!("event {i}: task {task} received signal bit {b} more often than it was sent"));
                    }
                }
            }
            _ => {}
        }
    }
    Ok(())
}

/// Checks that, per queue, the values taken out form a prefix of the values put in.
pub fn check_queue_fifo(trace: &EventTrace) -> Result<(), String> {
    let mut puts: Vec<Vec<u16>> = vec![Vec::new(); 256];
    let mut gets: Vec<Vec<u16>> = vec![Vec::new(); 256];
    for (i, e) in trace.events().iter().enumerate() {
        match *e {
            Event::MsgPut { queue, value } => puts[queue as usize].push(value),
            Event::MsgGet { queue, value } => {
                let g = &mut gets[queue as usize];
                g.push(value);
                let p = &puts[queue as usize];
                if g.len() > p.len() || p[g.len() - 1] != value {
                    return Err(format!("event {i}: queue {queue} returned {value} out of FIFO order"));
                }
            }
            _ => {}
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_tasks() -> KernelState {
        kernel_init(&KernelConfig::with_tasks(2)).unwrap()
    }

    fn config(tasks: usize, mutexes: usize, queues: &[u32]) -> KernelConfig {
        let mut c = KernelConfig::with_tasks(tasks);
        c.mutexes = (0..mutexes).map(|i| format!("m{i}")).collect();
        c.queues = queues.iter().enumerate().map(|(i, &cap)| QueueConfig { name: format!("q{i}"), capacity: cap }).collect();
        c
    }

    #[test]
    fn init_two_tasks() {
        let k = two_tasks();
        assert_eq!(k.current, Some(TaskId(0)));
        assert_eq!(k.trace.events(), &[Event::TaskSwitch(0)]);
        assert!(k.tasks[1].state == TaskState::Ready);
    }

    #[test]
    fn init_task_count_bounds() {
        let k = kernel_init(&KernelConfig::with_tasks(8)).unwrap();
        assert_eq!(k.current, Some(TaskId(0)));
        assert!(k.tasks.iter().skip(1).all(|t| t.state == TaskState::Ready));
        assert!(matches!(kernel_init(&KernelConfig::with_tasks(9)), Err(KernelError::Config(_))));
        assert!(matches!(kernel_init(&KernelConfig::with_tasks(0)), Err(KernelError::Config(_))));
    }

    #[test]
    fn init_rejects_bad_objects() {
        assert!(kernel_init(&config(1, 0, &[0])).is_err());
        assert!(kernel_init(&config(1, 0, &[65])).is_err());
        assert!(kernel_init(&config(1, 0, &[64])).is_ok());
        let mut dup = KernelConfig::with_tasks(2);
        dup.tasks[1].name = "t0".into();
        assert!(matches!(kernel_init(&dup), Err(KernelError::Config(_))));
        let mut irq = KernelConfig::with_tasks(2);
        irq.irq_events.push(IrqEventConfig { name: "e".into(), id: 0, task: TaskId(2), sigs: SignalSet(1) });
        assert!(kernel_init(&irq).is_err());
    }

    #[test]
    fn schedule_picks_lowest_runnable_index() {
        let mut k = kernel_init(&KernelConfig::with_tasks(8)).unwrap();
        assert_eq!(k.schedule(), Some(TaskId(0)));
        for (i, t) in k.tasks.iter_mut().enumerate() {
            t.state = if i == 3 || i == 5 { TaskState::Ready } else { TaskState::Sleeping(1) };
        }
        assert_eq!(k.schedule(), Some(TaskId(3)));
        assert_eq!(k.trace.events().last(), Some(&Event::TaskSwitch(3)));
        for t in &mut k.tasks {
            t.state = TaskState::Sleeping(1);
        }
        assert_eq!(k.schedule(), None);
        assert_eq!(k.trace.events().last(), Some(&Event::TaskSwitch(IDLE_TASK)));
        let len = k.trace.len();
        k.schedule();
        assert_eq!(k.trace.len(), len, "no switch event when the choice is unchanged");
    }

    #[test]
    fn send_wakes_waiter_on_overlap() {
        let mut k = two_tasks();
        k.signal_wait(SignalSet(0x1)).unwrap();
        assert_eq!(k.current, Some(TaskId(1)));
        k.signal_send(TaskId(0), SignalSet(0x1)).unwrap();
        assert_eq!(k.current, Some(TaskId(0)));
        assert_eq!(
            &k.trace.events()[2..],
            &[Event::SignalSend { dst: 0, mask: 1 }, Event::TaskSwitch(0), Event::SignalRecv { task: 0, mask: 1 }]
        );
    }

    #[test]
    fn send_to_ready_task_only_sets_pending() {
        let mut k = two_tasks();
        k.signal_send(TaskId(1), SignalSet(0x4)).unwrap();
        assert_eq!(k.tasks[1].pending, SignalSet(0x4));
        assert_eq!(k.tasks[1].state, TaskState::Ready);
    }

    #[test]
    fn send_without_overlap_keeps_waiter_blocked() {
        let mut k = two_tasks();
        k.signal_wait(SignalSet(0x2)).unwrap();
        k.signal_send(TaskId(0), SignalSet(0x1)).unwrap();
        assert_eq!(k.tasks[0].state, TaskState::BlockedOnSignal(SignalSet(0x2)));
        assert_eq!(k.tasks[0].pending, SignalSet(0x1));
    }

    #[test]
    fn wait_returns_intersection() {
        let mut k = two_tasks();
        k.tasks[0].pending = SignalSet(0x3);
        assert_eq!(k.signal_wait(SignalSet(0x1)).unwrap(), CallOutcome::Done(0x1));
        assert_eq!(k.tasks[0].pending, SignalSet(0x2));
        k.tasks[0].pending = SignalSet(0x8);
        assert_eq!(k.signal_wait(SignalSet(0x8)).unwrap(), CallOutcome::Done(0x8));
    }

    #[test]
    fn blocked_wait_collects_only_wanted_bits() {
        let mut k = two_tasks();
        assert_eq!(k.signal_wait(SignalSet(0x1)).unwrap(), CallOutcome::Blocked);
        k.signal_send(TaskId(0), SignalSet(0x5)).unwrap();
        assert_eq!(k.trace.events().last(), Some(&Event::SignalRecv { task: 0, mask: 0x1 }));
        assert_eq!(k.tasks[0].pending, SignalSet(0x4));
    }

    #[test]
    fn zero_mask_and_bad_destination_are_rejected() {
        let mut k = two_tasks();
        assert!(matches!(k.signal_send(TaskId(1), SignalSet(0)), Err(KernelError::InvalidArg(_))));
        assert!(matches!(k.signal_send(TaskId(7), SignalSet(1)), Err(KernelError::InvalidArg(_))));
        assert!(matches!(k.signal_wait(SignalSet(0)), Err(KernelError::InvalidArg(_))));
    }

    #[test]
    fn mutex_contention_and_handoff() {
        let mut k = kernel_init(&config(6, 1, &[])).unwrap();
        assert_eq!(k.mutex_lock(MutexId(0)).unwrap(), CallOutcome::Done(0));
        k.sleep(5).unwrap();
        k.sleep(5).unwrap();
        assert_eq!(k.current, Some(TaskId(2)));
        assert_eq!(k.mutex_lock(MutexId(0)).unwrap(), CallOutcome::Blocked);
        for _ in 0..2 {
            k.sleep(9).unwrap();
        }
        assert_eq!(k.current, Some(TaskId(5)));
        k.mutex_lock(MutexId(0)).unwrap();
        assert_eq!(k.mutexes[0].waiters.iter().map(|t| t.0).collect::<Vec<_>>(), vec![2, 5]);
        k.check_invariants().unwrap();
        for _ in 0..5 {
            k.tick().unwrap();
        }
        assert_eq!(k.current, Some(TaskId(0)));
        k.mutex_unlock(MutexId(0)).unwrap();
        assert_eq!(k.mutexes[0].owner, Some(TaskId(2)));
        assert_eq!(k.tasks[2].state, TaskState::Ready);
        k.check_invariants().unwrap();
    }

    #[test]
    fn mutex_free_after_last_unlock() {
        let mut k = kernel_init(&config(1, 1, &[])).unwrap();
        k.mutex_lock(MutexId(0)).unwrap();
        k.mutex_unlock(MutexId(0)).unwrap();
        assert_eq!(k.mutexes[0].owner, None);
    }

    #[test]
    fn recursive_lock_faults_but_try_lock_does_not() {
        let mut k = kernel_init(&config(1, 1, &[])).unwrap();
        assert!(k.mutex_try_lock(MutexId(0)).unwrap());
        assert!(!k.mutex_try_lock(MutexId(0)).unwrap());
        let err = k.mutex_lock(MutexId(0)).unwrap_err();
        assert_eq!(err, KernelError::Fault { task: TaskId(0), kind: FaultKind::RecursiveLock });
        assert_eq!(k.trace.events().last(), Some(&Event::Fault { task: 0, kind: FAULT_RECURSIVE_LOCK }));
        assert_eq!(k.tick(), Err(KernelError::Halted));
    }

    #[test]
    fn try_lock_on_foreign_mutex_is_silent() {
        let mut k = kernel_init(&config(2, 1, &[])).unwrap();
        k.mutex_lock(MutexId(0)).unwrap();
        k.sleep(1).unwrap();
        let before = k.trace.len();
        assert!(!k.mutex_try_lock(MutexId(0)).unwrap());
        assert_eq!(k.trace.len(), before);
    }

    #[test]
    fn unlock_by_non_owner_faults() {
        let mut k = kernel_init(&config(4, 1, &[])).unwrap();
        k.mutex_lock(MutexId(0)).unwrap();
        k.sleep(1).unwrap();
        k.sleep(1).unwrap();
        k.sleep(1).unwrap();
        assert_eq!(k.current, Some(TaskId(3)));
        assert!(matches!(k.mutex_unlock(MutexId(0)), Err(KernelError::Fault { kind: FaultKind::NotOwner, .. })));
    }

    #[test]
    fn sleep_and_tick() {
        let mut k = kernel_init(&KernelConfig::with_tasks(3)).unwrap();
        assert_eq!(k.sleep(0).unwrap(), CallOutcome::Done(0));
        assert_eq!(k.tasks[0].state, TaskState::Running);
        k.sleep(1).unwrap();
        k.sleep(2).unwrap();
        assert_eq!(k.current, Some(TaskId(2)));
        k.tick().unwrap();
        assert_eq!(k.tasks[0].state, TaskState::Running);
        assert_eq!(k.tasks[1].state, TaskState::Sleeping(1));
        let n = k.trace.len();
        assert_eq!(&k.trace.events()[n - 2..], &[Event::Tick(1), Event::TaskSwitch(0)]);
    }

    #[test]
    fn tick_without_sleepers_only_ticks() {
        let mut k = two_tasks();
        k.tick().unwrap();
        assert_eq!(k.trace.events(), &[Event::TaskSwitch(0), Event::Tick(1)]);
    }

    #[test]
    fn queue_capacity_one() {
        let mut k = kernel_init(&config(2, 0, &[1])).unwrap();
        k.msgq_put(QueueId(0), 7).unwrap();
        assert_eq!(k.msgq_get(QueueId(0)).unwrap(), CallOutcome::Done(7));
    }

    #[test]
    fn full_queue_blocks_putter_until_space() {
        let mut k = kernel_init(&config(2, 0, &[1])).unwrap();
        k.msgq_put(QueueId(0), 1).unwrap();
        assert_eq!(k.msgq_put(QueueId(0), 2).unwrap(), CallOutcome::Blocked);
        assert_eq!(k.current, Some(TaskId(1)));
        assert_eq!(k.msgq_get(QueueId(0)).unwrap(), CallOutcome::Done(1));
        assert_eq!(k.queues[0].buffer, VecDeque::from([2]));
        assert_eq!(k.current, Some(TaskId(0)));
    }

    #[test]
    fn get_on_empty_blocks() {
        let mut k = kernel_init(&config(2, 0, &[2])).unwrap();
        assert_eq!(k.msgq_get(QueueId(0)).unwrap(), CallOutcome::Blocked);
        assert_eq!(k.current, Some(TaskId(1)));
        k.msgq_put(QueueId(0), 9).unwrap();
        assert_eq!(k.current, Some(TaskId(0)));
        assert!(k.queues[0].buffer.is_empty());
        check_queue_fifo(&k.trace).unwrap();
    }

    #[test]
    fn irq_delivery() {
        let mut c = KernelConfig::with_tasks(2);
        c.irq_events.push(IrqEventConfig { name: "e0".into(), id: 0, task: TaskId(1), sigs: SignalSet(0x2) });
        let mut k = kernel_init(&c).unwrap();
        k.sleep(3).unwrap();
        k.signal_wait(SignalSet(0x2)).unwrap();
        assert_eq!(k.current, None);
        k.interrupt_event_raise(0).unwrap();
        assert_eq!(k.current, Some(TaskId(1)));
        assert_eq!(k.irq_map.pending, 0);
        assert_eq!(k.interrupt_event_raise(3), Err(KernelError::UnmappedEvent(3)));
    }

    #[test]
    fn irq_to_ready_task_only_pends() {
        let mut c = KernelConfig::with_tasks(2);
        c.irq_events.push(IrqEventConfig { name: "e0".into(), id: 0, task: TaskId(1), sigs: SignalSet(0x2) });
        let mut k = kernel_init(&c).unwrap();
        k.interrupt_event_raise(0).unwrap();
        assert_eq!(k.tasks[1].pending, SignalSet(0x2));
        assert_eq!(k.current, Some(TaskId(0)));
    }

    #[test]
    fn exhaustive_mask_pairs_wake_iff_overlap() {
        // Brute force over every (wanted, sent) pair of nonzero 16-bit masks
        // would be 2^32 kernels; enumerate every pair over 8 bits and every
        // single-bit sent mask over all 16-bit wanted masks instead.
        let base = two_tasks();
        let check = |wanted: u16, sent: u16| {
            let mut k = base.clone();
            k.signal_wait(SignalSet(wanted)).unwrap();
            k.signal_send(TaskId(0), SignalSet(sent)).unwrap();
            let woke = k.current == Some(TaskId(0));
            assert_eq!(woke, wanted & sent != 0, "wanted {wanted:#x} sent {sent:#x}");
            if woke {
                assert_eq!(k.tasks[0].pending.0, sent & !wanted);
            } else {
                assert_eq!(k.tasks[0].pending.0, sent);
            }
        };
        for wanted in 1..=0xffu16 {
            for sent in 1..=0xffu16 {
                check(wanted, sent);
            }
        }
        for wanted in (1..=0xffffu16).step_by(7) {
            for bit in 0..16 {
                check(wanted, 1 << bit);
            }
        }
    }
}
