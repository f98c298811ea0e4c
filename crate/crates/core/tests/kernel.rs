// Licensed under the Apache-2.0 license

mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::oracle::Oracle;
use common::scripts::{self, Op};
use rigel_core::kernel::{
    check_queue_fifo, check_signal_conservation, kernel_init, run_scenario, FaultKind, IrqEventConfig, KernelConfig, QueueConfig,
    ScenarioEnd, Script, SignalSet, TaskId,
};
use rigel_core::trace::{Event, EventTrace};

use Event::*;

fn run(cfg: &KernelConfig, script: &str) -> (Vec<Event>, ScenarioEnd) {
    let script: Script = script.parse().unwrap();
    let mut k = kernel_init(cfg).unwrap();
    let out = run_scenario(&mut k, &script).unwrap();
    k.check_invariants().unwrap();
    (out.trace.0, out.end)
}

#[test]
fn ping_pong() {
    let round = "\
call 0 signal_send 1 2
call 0 signal_wait 1
call 1 signal_wait 2
call 1 signal_send 0 1
";
    let (trace, end) = run(&KernelConfig::with_tasks(2), &round.repeat(3));
    let mut want = vec![TaskSwitch(0)];
    for _ in 0..3 {
        want.extend([
            SignalSend { dst: 1, mask: 2 },
            TaskSwitch(1),
            SignalRecv { task: 1, mask: 2 },
            SignalSend { dst: 0, mask: 1 },
            TaskSwitch(0),
            SignalRecv { task: 0, mask: 1 },
        ]);
    }
    assert_eq!(trace, want);
    assert_eq!(end, ScenarioEnd::Completed);
}

#[test]
fn mutex_contention() {
    let mut cfg = KernelConfig::with_tasks(2);
    cfg.mutexes.push("m".into());
    let script = "\
call 0 sleep 2
call 1 mutex_lock 0
tick
tick
call 0 mutex_lock 0
call 1 mutex_unlock 0
call 0 mutex_unlock 0
exit 0
";
    let (trace, end) = run(&cfg, script);
    assert_eq!(
        trace,
        [
            TaskSwitch(0),
            Sleep { task: 0, ticks: 2 },
            TaskSwitch(1),
            MutexLock { task: 1, mutex: 0 },
            Tick(1),
            Tick(2),
            TaskSwitch(0),
            MutexBlock { task: 0, mutex: 0 },
            TaskSwitch(1),
            MutexUnlock { task: 1, mutex: 0 },
            MutexLock { task: 0, mutex: 0 },
            TaskSwitch(0),
            MutexUnlock { task: 0, mutex: 0 },
            Exit(0),
        ]
    );
    assert_eq!(end, ScenarioEnd::Exited(0));
    assert_eq!(
        EventTrace(trace).to_text().lines().nth(7),
        Some("EVT MUTEX_BLOCK 0 0"),
    );
}

#[test]
fn queue_of_one() {
    let mut cfg = KernelConfig::with_tasks(2);
    cfg.queues.push(QueueConfig { name: "q".into(), capacity: 1 });
    let script = "\
call 0 msgq_put 0 1
call 0 msgq_put 0 2
call 1 msgq_get 0
call 0 msgq_get 0
call 0 msgq_get 0
";
    let (trace, end) = run(&cfg, script);
    assert_eq!(
        trace,
        [
            TaskSwitch(0),
            MsgPut { queue: 0, value: 1 },
            TaskSwitch(1),
            MsgGet { queue: 0, value: 1 },
            MsgPut { queue: 0, value: 2 },
            TaskSwitch(0),
            MsgGet { queue: 0, value: 2 },
            TaskSwitch(1),
        ]
    );
    assert_eq!(end, ScenarioEnd::Completed);
}

#[test]
fn queue_values_keep_low_half() {
    let mut cfg = KernelConfig::with_tasks(1);
    cfg.queues.push(QueueConfig { name: "q".into(), capacity: 4 });
    let (trace, _) = run(&cfg, "call 0 msgq_put 0 0x12345678\ncall 0 msgq_get 0\n");
    assert_eq!(trace[1..], [MsgPut { queue: 0, value: 0x5678 }, MsgGet { queue: 0, value: 0x5678 }]);
}

#[test]
fn sleep_counts_exact_ticks() {
    for n in 1..6u16 {
        let script = format!("call 0 sleep {n}\n{}", "tick\n".repeat(n as usize + 2));
        let (trace, _) = run(&KernelConfig::with_tasks(2), &script);
        let slept = trace.iter().position(|e| *e == Sleep { task: 0, ticks: n }).unwrap();
        let back = slept + trace[slept..].iter().position(|e| *e == TaskSwitch(0)).unwrap();
        let ticks = trace[slept..back].iter().filter(|e| matches!(e, Tick(_))).count();
        assert_eq!(ticks, n as usize, "{trace:?}");
    }
    let (trace, _) = run(&KernelConfig::with_tasks(2), "call 0 sleep 0\ncall 0 sleep 0\n");
    assert_eq!(trace, [TaskSwitch(0), Sleep { task: 0, ticks: 0 }, Sleep { task: 0, ticks: 0 }]);
}

#[test]
fn irq_wakes_waiter() {
    let mut cfg = KernelConfig::with_tasks(2);
    cfg.irq_events.push(IrqEventConfig { name: "uart".into(), id: 5, task: TaskId(0), sigs: SignalSet(0x4) });
    let (trace, _) = run(&cfg, "call 0 signal_wait 4\nirq 5\n");
    assert_eq!(
        trace,
        [TaskSwitch(0), TaskSwitch(1), IrqRaise(5), SignalSend { dst: 0, mask: 4 }, TaskSwitch(0), SignalRecv { task: 0, mask: 4 }]
    );
    let mut k = kernel_init(&cfg).unwrap();
    assert!(k.apply(&"irq 6".parse::<Script>().unwrap().steps[0]).is_err());
}

#[test]
fn idle_is_task_255() {
    let (trace, end) = run(&KernelConfig::with_tasks(1), "call 0 sleep 1\ntick\n");
    assert_eq!(trace, [TaskSwitch(0), Sleep { task: 0, ticks: 1 }, TaskSwitch(255), Tick(1), TaskSwitch(0)]);
    assert_eq!(end, ScenarioEnd::Completed);
    let (_, end) = run(&KernelConfig::with_tasks(1), "call 0 signal_wait 1\n");
    assert_eq!(end, ScenarioEnd::IdleDeadlock);
}

#[test]
fn faults_halt() {
    let mut cfg = KernelConfig::with_tasks(2);
    cfg.mutexes.push("m".into());
    let (trace, end) = run(&cfg, "call 0 mutex_lock 0\ncall 0 mutex_lock 0\ncall 0 mutex_unlock 0\n");
    assert_eq!(trace.last(), Some(&Fault { task: 0, kind: 1 }));
    assert_eq!(end, ScenarioEnd::Faulted { task: TaskId(0), kind: FaultKind::RecursiveLock });
    let (trace, end) = run(&cfg, "call 0 mutex_unlock 0\nexit 0\n");
    assert_eq!(trace, [TaskSwitch(0), Fault { task: 0, kind: 2 }]);
    assert_eq!(end, ScenarioEnd::Faulted { task: TaskId(0), kind: FaultKind::NotOwner });
}

#[test]
fn try_lock_never_blocks() {
    let mut cfg = KernelConfig::with_tasks(2);
    cfg.mutexes.push("m".into());
    let (trace, _) = run(&cfg, "call 0 mutex_try_lock 0\ncall 0 mutex_try_lock 0\ncall 0 sleep 1\ncall 1 mutex_try_lock 0\n");
    assert_eq!(trace, [TaskSwitch(0), MutexLock { task: 0, mutex: 0 }, Sleep { task: 0, ticks: 1 }, TaskSwitch(1)]);
}

#[test]
fn misattributed_call_is_an_error() {
    let mut k = kernel_init(&KernelConfig::with_tasks(2)).unwrap();
    let s: Script = "call 1 sleep 1\n".parse().unwrap();
    assert!(run_scenario(&mut k, &s).unwrap_err().to_string().contains("step 1"));
}

fn op_strategy() -> impl Strategy<Value = Op> {
    any::<u64>().prop_map(|seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        if seed % 2 == 0 {
            scripts::random_op(&mut rng)
        } else {
            scripts::contention_op(&mut rng)
        }
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn invariants_hold_after_every_step(ops in prop::collection::vec(op_strategy(), 1..60)) {
        let mut k = kernel_init(&scripts::suite_config()).unwrap();
        scripts::drive(&mut k, &ops, |_, step, after| {
            if let Err(e) = after.check_invariants() {
                panic!("{step}: {e}");
            }
        });
        prop_assert!(check_signal_conservation(&k.trace).is_ok());
        prop_assert!(check_queue_fifo(&k.trace).is_ok());
    }

    #[test]
    fn matches_reference_model(ops in prop::collection::vec(op_strategy(), 1..30)) {
        let cfg = scripts::suite_config();
        let mut k = kernel_init(&cfg).unwrap();
        let mut oracle = Oracle::new(&cfg);
        scripts::drive(&mut k, &ops, |_, step, after| {
            oracle.step(step).unwrap();
            let d = oracle.diff(after);
            assert!(d.is_empty(), "{step}: {d:?}");
        });
        prop_assert_eq!(oracle.event_trace(), k.trace);
    }

    #[test]
    fn scripts_print_and_parse_back(ops in prop::collection::vec(op_strategy(), 1..30)) {
        let mut k = kernel_init(&scripts::suite_config()).unwrap();
        let steps = scripts::drive(&mut k, &ops, |_, _, _| {});
        let text: String = steps.iter().map(|s| format!("{s}\n")).collect();
        let back: Script = text.parse().unwrap();
        prop_assert_eq!(back.steps, steps);
    }
}
