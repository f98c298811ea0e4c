// Licensed under the Apache-2.0 license

use std::fmt::Write as _;

use super::{GeneratedSource, PrxError, SystemDescription};
use crate::kernel::{KernelConfig, MAX_IRQ_EVENTS};

/// Name of the only generator the build knows about.
pub const RIGEL_CONFIG: &str = "rigel-config";

/// Words of per-task kernel state: state tag, pending signals, wait mask,
/// saved sp.
pub const TASK_STATE_WORDS: u32 = 4;
/// Words of per-queue state: head index, count.
pub const QUEUE_STATE_WORDS: u32 = 2;

/// Entry of `_rigel_irq_table` for an id with no event mapped.
pub const UNMAPPED_IRQ_TASK: u32 = 0xff;

/// Emits the `rigel_config` assembly unit holding the static kernel tables.
pub fn generate_config_sources(desc: &SystemDescription) -> Result<Vec<GeneratedSource>, PrxError> {
    let k = desc
        .kernel
        .as_ref()
        .ok_or_else(|| PrxError::Config(format!("system `{}` has no kernel configuration for {RIGEL_CONFIG}", desc.name)))?;
    Ok(vec![GeneratedSource { name: "rigel_config".to_string(), text: rigel_config(k) }])
}

fn rigel_config(k: &KernelConfig) -> String {
    let mut s = String::new();
    let w = &mut s;
    let _ = writeln!(w, "# generated by {RIGEL_CONFIG}; do not edit");
    let globals = [
        "_rigel_task_count",
        "_rigel_task_table",
        "_rigel_mutex_count",
        "_rigel_queue_count",
        "_rigel_queue_table",
        "_rigel_irq_count",
        "_rigel_irq_table",
        "_rigel_task_state",
        "_rigel_mutex_owner",
        "_rigel_queue_state",
    ];
    for g in globals {
        let _ = writeln!(w, ".globl {g}");
    }
    for i in 0..k.tasks.len() {
        let _ = writeln!(w, ".globl _rigel_stack_{i}");
    }
    for i in 0..k.queues.len() {
        let _ = writeln!(w, ".globl _rigel_queue_buf_{i}");
    }

    let _ = writeln!(w, "\n.section .data\n.align 2");
    let _ = writeln!(w, "_rigel_task_count:\n    .word {}", k.tasks.len());
    let _ = writeln!(w, "# entry, stack base, stack size");
    let _ = writeln!(w, "_rigel_task_table:");
    for (i, t) in k.tasks.iter().enumerate() {
        let _ = writeln!(w, "    .word {}, _rigel_stack_{i}, {}", t.entry, t.stack_size);
    }
    let _ = writeln!(w, "_rigel_mutex_count:\n    .word {}", k.mutexes.len());
    let _ = writeln!(w, "_rigel_queue_count:\n    .word {}", k.queues.len());
    let _ = writeln!(w, "# capacity, buffer");
    let _ = writeln!(w, "_rigel_queue_table:");
    for (i, q) in k.queues.iter().enumerate() {
        let _ = writeln!(w, "    .word {}, _rigel_queue_buf_{i}", q.capacity);
    }
    let irq_count = k.irq_events.iter().map(|e| e.id as usize + 1).max().unwrap_or(0).min(MAX_IRQ_EVENTS);
    let _ = writeln!(w, "_rigel_irq_count:\n    .word {irq_count}");
    let _ = writeln!(w, "# task, signal set; indexed by event id");
    let _ = writeln!(w, "_rigel_irq_table:");
    for id in 0..irq_count {
        match k.irq_events.iter().find(|e| e.id as usize == id) {
            Some(e) => {
                let _ = writeln!(w, "    .word {}, {:#x}", e.task.0, e.sigs.0);
            }
            None => {
                let _ = writeln!(w, "    .word {UNMAPPED_IRQ_TASK:#x}, 0");
            }
        }
    }

    let _ = writeln!(w, "\n.section .bss\n.align 4");
    for (i, t) in k.tasks.iter().enumerate() {
        let _ = writeln!(w, "_rigel_stack_{i}:\n    .space {}", t.stack_size);
    }
    let _ = writeln!(w, "_rigel_task_state:\n    .space {}", k.tasks.len() as u32 * TASK_STATE_WORDS * 4);
    let _ = writeln!(w, "_rigel_mutex_owner:\n    .space {}", k.mutexes.len() * 4);
    let _ = writeln!(w, "_rigel_queue_state:\n    .space {}", k.queues.len() as u32 * QUEUE_STATE_WORDS * 4);
    for (i, q) in k.queues.iter().enumerate() {
        let _ = writeln!(w, "_rigel_queue_buf_{i}:\n    .space {}", q.capacity * 4);
    }
    s
}
