// Licensed under the Apache-2.0 license

//! Brute-force reference for the kernel: no waiter sets, no incremental
//! bookkeeping. Every decision (who runs, who is woken, who gets a mutex)
//! is made by enumerating all task states.

use std::collections::VecDeque;

use rigel_core::kernel::{ApiCall, KernelConfig, KernelState, Step, TaskState};
use rigel_core::trace::{Event, EventTrace};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum St {
    Ready,
    Running,
    Sig(u16),
    Mutex(u8),
    Put(u8, u32),
    Get(u8),
    Sleep(u32),
}

#[derive(Debug, Clone)]
pub struct Oracle {
    pub st: Vec<St>,
    pub pending: Vec<u16>,
    /// Wait mask a woken signal waiter collects when it next runs.
    pub collect: Vec<Option<u16>>,
    pub owner: Vec<Option<u8>>,
    pub queues: Vec<(u32, VecDeque<u32>)>,
    pub irq: Vec<Option<(u8, u16)>>,
    pub ticks: u64,
    pub running: Option<u8>,
    pub halted: bool,
    pub trace: Vec<Event>,
}

impl Oracle {
    pub fn new(k: &KernelConfig) -> Oracle {
        let n = k.tasks.len();
        let mut irq = vec![None; 16];
        for e in &k.irq_events {
            irq[e.id as usize] = Some((e.task.0, e.sigs.0));
        }
        let mut o = Oracle {
            st: vec![St::Ready; n],
            pending: vec![0; n],
            collect: vec![None; n],
            owner: vec![None; k.mutexes.len()],
            queues: k.queues.iter().map(|q| (q.capacity, VecDeque::new())).collect(),
            irq,
            ticks: 0,
            running: None,
            halted: false,
            trace: Vec::new(),
        };
        o.resched();
        o
    }

    fn first(&self, f: impl Fn(St) -> bool) -> Option<u8> {
        (0..self.st.len()).find(|&i| f(self.st[i])).map(|i| i as u8)
    }

    fn resched(&mut self) {
        let next = self.first(|s| matches!(s, St::Ready | St::Running));
        if next == self.running {
            return;
        }
        if let Some(p) = self.running {
            if self.st[p as usize] == St::Running {
                self.st[p as usize] = St::Ready;
            }
        }
        self.trace.push(Event::TaskSwitch(next.unwrap_or(0xff)));
        self.running = next;
        if let Some(t) = next {
            let t = t as usize;
            self.st[t] = St::Running;
            if let Some(w) = self.collect[t].take() {
                let got = self.pending[t] & w;
                self.pending[t] &= !got;
                self.trace.push(Event::SignalRecv { task: t as u8, mask: got });
            }
        }
    }

    fn send(&mut self, dst: u8, mask: u16) {
        let d = dst as usize;
        self.pending[d] |= mask;
        if let St::Sig(w) = self.st[d] {
            if w & self.pending[d] != 0 {
                self.st[d] = St::Ready;
                self.collect[d] = Some(w);
            }
        }
        self.trace.push(Event::SignalSend { dst, mask });
    }

    fn fault(&mut self, task: u8, kind: u16) {
        self.trace.push(Event::Fault { task, kind });
        self.halted = true;
    }

    fn push(&mut self, q: u8, v: u32) {
        self.queues[q as usize].1.push_back(v);
        self.trace.push(Event::MsgPut { queue: q, value: v as u16 });
        if let Some(g) = self.first(|s| s == St::Get(q)) {
            self.pop(q);
            self.st[g as usize] = St::Ready;
        }
    }

    fn pop(&mut self, q: u8) {
        let v = self.queues[q as usize].1.pop_front().unwrap();
        self.trace.push(Event::MsgGet { queue: q, value: v as u16 });
        if let Some(p) = self.first(|s| matches!(s, St::Put(qq, _) if qq == q)) {
            let St::Put(_, pv) = self.st[p as usize] else { unreachable!() };
            self.st[p as usize] = St::Ready;
            self.push(q, pv);
        }
    }

    /// Applies one step. `Err` when the step is attributed to a task that
    /// is not running.
    pub fn step(&mut self, step: &Step) -> Result<(), String> {
        if self.halted {
            return Ok(());
        }
        match *step {
            Step::Tick => {
                self.ticks += 1;
                self.trace.push(Event::Tick(self.ticks as u16));
                for s in &mut self.st {
                    if let St::Sleep(r) = *s {
                        *s = if r == 1 { St::Ready } else { St::Sleep(r - 1) };
                    }
                }
                self.resched();
            }
            Step::Irq(e) => {
                let (t, m) = self.irq[e as usize].ok_or("unmapped event")?;
                self.trace.push(Event::IrqRaise(e));
                self.send(t, m);
                self.resched();
            }
            Step::Out(b) => self.trace.push(Event::Output(b)),
            Step::Exit(c) => {
                self.trace.push(Event::Exit(c));
                self.halted = true;
            }
            Step::Call { task, api } => {
                let me = task.0;
                if self.running != Some(me) {
                    return Err(format!("call by task {me} while {:?} runs", self.running));
                }
                let i = me as usize;
                match api {
                    ApiCall::SignalSend { dst, sigs } => {
                        self.send(dst.0, sigs.0);
                        self.resched();
                    }
                    ApiCall::SignalWait(s) => {
                        if self.pending[i] & s.0 != 0 {
                            let got = self.pending[i] & s.0;
                            self.pending[i] &= !got;
                            self.trace.push(Event::SignalRecv { task: me, mask: got });
                        } else {
                            self.st[i] = St::Sig(s.0);
                            self.resched();
                        }
                    }
                    ApiCall::MutexLock(m) => match self.owner[m.0 as usize] {
                        None => {
                            self.owner[m.0 as usize] = Some(me);
                            self.trace.push(Event::MutexLock { task: me, mutex: m.0 });
                        }
                        Some(o) if o == me => self.fault(me, 1),
                        Some(_) => {
                            self.trace.push(Event::MutexBlock { task: me, mutex: m.0 });
                            self.st[i] = St::Mutex(m.0);
                            self.resched();
                        }
                    },
                    ApiCall::MutexTryLock(m) => {
                        if self.owner[m.0 as usize].is_none() {
                            self.owner[m.0 as usize] = Some(me);
                            self.trace.push(Event::MutexLock { task: me, mutex: m.0 });
                        }
                    }
                    ApiCall::MutexUnlock(m) => {
                        if self.owner[m.0 as usize] != Some(me) {
                            self.fault(me, 2);
                        } else {
                            self.trace.push(Event::MutexUnlock { task: me, mutex: m.0 });
                            let next = self.first(|s| s == St::Mutex(m.0));
                            self.owner[m.0 as usize] = next;
                            if let Some(w) = next {
                                self.st[w as usize] = St::Ready;
                                self.trace.push(Event::MutexLock { task: w, mutex: m.0 });
                            }
                            self.resched();
                        }
                    }
                    ApiCall::Sleep(n) => {
                        self.trace.push(Event::Sleep { task: me, ticks: n });
                        if n > 0 {
                            self.st[i] = St::Sleep(n.into());
                            self.resched();
                        }
                    }
                    ApiCall::MsgqPut { queue, value } => {
                        let (cap, buf) = &self.queues[queue.0 as usize];
                        if buf.len() as u32 == *cap {
                            self.st[i] = St::Put(queue.0, value);
                        } else {
                            self.push(queue.0, value);
                        }
                        self.resched();
                    }
                    ApiCall::MsgqGet(queue) => {
                        if self.queues[queue.0 as usize].1.is_empty() {
                            self.st[i] = St::Get(queue.0);
                        } else {
                            self.pop(queue.0);
                        }
                        self.resched();
                    }
                }
            }
        }
        Ok(())
    }

    pub fn event_trace(&self) -> EventTrace {
        EventTrace(self.trace.clone())
    }

    /// Differences between this model and a kernel state, empty if none.
    pub fn diff(&self, k: &KernelState) -> Vec<String> {
        let mut out = Vec::new();
        if self.running != k.current.map(|t| t.0) {
            out.push(format!("running {:?} vs {:?}", self.running, k.current));
        }
        for (i, (s, t)) in self.st.iter().zip(&k.tasks).enumerate() {
            let same = match (*s, t.state) {
                (St::Ready, TaskState::Ready) | (St::Running, TaskState::Running) => true,
                (St::Sig(a), TaskState::BlockedOnSignal(b)) => a == b.0,
                (St::Mutex(a), TaskState::BlockedOnMutex(b)) => a == b.0,
                (St::Put(q, v), TaskState::BlockedOnQueuePut { queue, value }) => q == queue.0 && v == value,
                (St::Get(a), TaskState::BlockedOnQueueGet(b)) => a == b.0,
                (St::Sleep(a), TaskState::Sleeping(b)) => a == b,
                _ => false,
            };
            if !same {
                out.push(format!("task {i}: {s:?} vs {:?}", t.state));
            }
            if self.pending[i] != t.pending.0 {
                out.push(format!("task {i} pending {:#x} vs {:#x}", self.pending[i], t.pending.0));
            }
        }
        for (i, (o, m)) in self.owner.iter().zip(&k.mutexes).enumerate() {
            if *o != m.owner.map(|t| t.0) {
                out.push(format!("mutex {i} owner {o:?} vs {:?}", m.owner));
            }
        }
        for (i, ((_, b), q)) in self.queues.iter().zip(&k.queues).enumerate() {
            if *b != q.buffer {
                out.push(format!("queue {i} {b:?} vs {:?}", q.buffer));
            }
        }
        if self.ticks != k.tick_count {
            out.push(format!("ticks {} vs {}", self.ticks, k.tick_count));
        }
        if self.trace != k.trace.events() {
            out.push("trace differs".into());
        }
        out
    }
}
