// Licensed under the Apache-2.0 license

//! Random kernel scripts. Ops are abstract; [`drive`] attributes each API op
//! to whichever task is running, turning it into a tick when the kernel is
//! idle.

use rand::Rng;

use rigel_core::kernel::{
    ApiCall, IrqEventConfig, KernelConfig, KernelState, MutexId, QueueConfig, QueueId, SignalSet, Step, TaskId,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op {
    Send { dst: u8, mask: u16 },
    Wait(u16),
    Lock(u8),
    TryLock(u8),
    Unlock(u8),
    /// Locks the lowest mutex the running task does not own.
    Acquire,
    /// Unlocks the lowest mutex the running task owns; a tick if none.
    Release,
    Sleep(u16),
    Put(u32),
    Get,
    Tick,
    Irq(u8),
    Out(u8),
}

pub const TASKS: usize = 4;
pub const MUTEXES: usize = 2;
pub const QUEUE_CAPACITY: u32 = 2;

/// 4 tasks, 2 mutexes, 1 queue; irq 0 signals task 1, irq 1 signals task 3.
pub fn suite_config() -> KernelConfig {
    let mut k = KernelConfig::with_tasks(TASKS);
    k.mutexes = (0..MUTEXES).map(|i| format!("m{i}")).collect();
    k.queues.push(QueueConfig { name: "q".into(), capacity: QUEUE_CAPACITY });
    k.irq_events.push(IrqEventConfig { name: "e0".into(), id: 0, task: TaskId(1), sigs: SignalSet(0x1) });
    k.irq_events.push(IrqEventConfig { name: "e1".into(), id: 1, task: TaskId(3), sigs: SignalSet(0x3) });
    k
}

pub fn random_op(rng: &mut impl Rng) -> Op {
    let mask = |rng: &mut dyn rand::RngCore| 1u16 << rng.gen_range(0..3) | if rng.gen_bool(0.3) { 1 << rng.gen_range(0..3) } else { 0 };
    match rng.gen_range(0..14) {
        0 | 1 => Op::Send { dst: rng.gen_range(0..TASKS as u8), mask: mask(rng) },
        2 | 3 => Op::Wait(mask(rng)),
        4 => Op::Lock(rng.gen_range(0..MUTEXES as u8)),
        5 => Op::TryLock(rng.gen_range(0..MUTEXES as u8)),
        6 => Op::Unlock(rng.gen_range(0..MUTEXES as u8)),
        7 => Op::Sleep(rng.gen_range(0..4)),
        8 => Op::Put(rng.gen()),
        9 => Op::Get,
        10 | 11 => Op::Tick,
        12 => Op::Irq(rng.gen_range(0..2)),
        _ => Op::Out(rng.gen()),
    }
}

/// Op mix that piles tasks up on the mutexes and the queue.
pub fn contention_op(rng: &mut impl Rng) -> Op {
    match rng.gen_range(0..12) {
        0..=2 => Op::Acquire,
        3 => Op::Unlock(rng.gen_range(0..MUTEXES as u8)),
        4 | 5 => Op::Release,
        6 => Op::Sleep(rng.gen_range(1..4)),
        7 | 8 => Op::Tick,
        9 => Op::Lock(rng.gen_range(0..MUTEXES as u8)),
        10 => Op::Put(rng.gen_range(0..8)),
        _ => Op::Get,
    }
}

/// Maps an op to a concrete step for the running task in `state`.
pub fn concretize(op: Op, state: &KernelState) -> Step {
    let Some(task) = state.current else {
        return match op {
            Op::Irq(e) => Step::Irq(e),
            Op::Out(b) => Step::Out(b),
            _ => Step::Tick,
        };
    };
    let call = |api| Step::Call { task, api };
    match op {
        Op::Send { dst, mask } => call(ApiCall::SignalSend { dst: TaskId(dst), sigs: SignalSet(mask) }),
        Op::Wait(mask) => call(ApiCall::SignalWait(SignalSet(mask))),
        Op::Lock(m) => call(ApiCall::MutexLock(MutexId(m))),
        Op::TryLock(m) => call(ApiCall::MutexTryLock(MutexId(m))),
        Op::Unlock(m) => call(ApiCall::MutexUnlock(MutexId(m))),
        Op::Acquire => match state.mutexes.iter().position(|m| m.owner != Some(task)) {
            Some(m) => call(ApiCall::MutexLock(MutexId(m as u8))),
            None => Step::Tick,
        },
        Op::Release => match state.mutexes.iter().position(|m| m.owner == Some(task)) {
            Some(m) => call(ApiCall::MutexUnlock(MutexId(m as u8))),
            None => Step::Tick,
        },
        Op::Sleep(n) => call(ApiCall::Sleep(n)),
        Op::Put(v) => call(ApiCall::MsgqPut { queue: QueueId(0), value: v }),
        Op::Get => call(ApiCall::MsgqGet(QueueId(0))),
        Op::Tick => Step::Tick,
        Op::Irq(e) => Step::Irq(e),
        Op::Out(b) => Step::Out(b),
    }
}

/// Applies `ops` one by one, calling `check(before, step, after)` after
/// each. Stops when the kernel halts. Returns the concrete steps.
pub fn drive(state: &mut KernelState, ops: &[Op], mut check: impl FnMut(&KernelState, &Step, &KernelState)) -> Vec<Step> {
    let mut steps = Vec::new();
    for op in ops {
        if state.halted.is_some() {
            break;
        }
        let step = concretize(*op, state);
        let before = state.clone();
        state.apply(&step).unwrap_or_else(|e| panic!("step {step}: {e}"));
        check(&before, &step, state);
        steps.push(step);
    }
    steps
}
