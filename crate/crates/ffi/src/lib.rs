// Licensed under the Apache-2.0 license

//! C interface to the assembler, linker and simulator.
//!
//! Objects cross the boundary as opaque handles (`RigelImage`,
//! `RigelMachine`) created and destroyed by this library. Every fallible
//! call returns a [`RigelStatus`]; on failure the message is kept per
//! thread and read back with [`rigel_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use rigel_core::asm::assemble_unit;
use rigel_core::link::{link, LayoutConfig, MemoryImage};
use rigel_core::sim::{IrqTrigger, Machine, RunResult, RunStatus};
use rigel_core::trace::Event;

/// Default load address for images.
pub const RIGEL_DEFAULT_BASE: u32 = 0x0001_0000;
pub const RIGEL_DEFAULT_RAM: u32 = 0x0010_0000;

pub const RIGEL_MMIO_CLINT_MSIP: u32 = 0x0200_0000;
pub const RIGEL_MMIO_CLINT_MTIMECMP: u32 = 0x0200_4000;
pub const RIGEL_MMIO_CLINT_MTIME: u32 = 0x0200_bff8;
pub const RIGEL_MMIO_UART: u32 = 0x1000_0000;
pub const RIGEL_MMIO_FINISHER: u32 = 0x1110_0000;
pub const RIGEL_MMIO_TRACE_PORT: u32 = 0x1120_0000;
pub const RIGEL_MMIO_IRQ_LATCH: u32 = 0x1130_0000;

/// Finisher values: pass, and the low half of `(code << 16) | FAIL`.
pub const RIGEL_FINISHER_PASS: u32 = 0x5555;
pub const RIGEL_FINISHER_FAIL: u32 = 0x3333;

/// Trace word event types, stored in bits 31:24.
pub const RIGEL_EVT_OUTPUT: u8 = 0x01;
pub const RIGEL_EVT_TASK_SWITCH: u8 = 0x02;
pub const RIGEL_EVT_SIGNAL_SEND: u8 = 0x03;
pub const RIGEL_EVT_SIGNAL_RECV: u8 = 0x04;
pub const RIGEL_EVT_MUTEX_LOCK: u8 = 0x05;
pub const RIGEL_EVT_MUTEX_BLOCK: u8 = 0x06;
pub const RIGEL_EVT_MUTEX_UNLOCK: u8 = 0x07;
pub const RIGEL_EVT_SLEEP: u8 = 0x08;
pub const RIGEL_EVT_TICK: u8 = 0x09;
pub const RIGEL_EVT_MSG_PUT: u8 = 0x0a;
pub const RIGEL_EVT_MSG_GET: u8 = 0x0b;
pub const RIGEL_EVT_IRQ_RAISE: u8 = 0x0c;
pub const RIGEL_EVT_EXIT: u8 = 0x0d;
pub const RIGEL_EVT_FAULT: u8 = 0x0e;

/// `TASK_SWITCH` argument meaning no task is runnable.
pub const RIGEL_IDLE_TASK: u8 = 0xff;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RigelStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Assemble = 3,
    Link = 4,
    Load = 5,
    InvalidArgument = 6,
    BufferTooSmall = 7,
    NotFound = 8,
    Panic = 9,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RigelRunKind {
    NotRun = 0,
    Exit = 1,
    InstructionLimit = 2,
    Fault = 3,
}

/// Summary of the last `rigel_machine_run`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RigelRunSummary {
    pub kind: RigelRunKind,
    /// Exit code for `EXIT`, zero otherwise.
    pub exit_code: u16,
    /// Faulting pc for `FAULT`, zero otherwise.
    pub fault_pc: u32,
    pub instret: u64,
    /// Number of trace events recorded so far.
    pub events: usize,
}

/// A linked memory image.
pub struct RigelImage {
    image: MemoryImage,
}

/// A simulated hart with its RAM and devices.
pub struct RigelMachine {
    machine: Machine,
    last: Option<RunResult>,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).unwrap_or_default());
}

fn fail(status: RigelStatus, msg: impl Into<String>) -> RigelStatus {
    set_error(msg);
    status
}

/// Runs `f`, turning a panic into `RIGEL_STATUS_PANIC`.
fn guard(f: impl FnOnce() -> RigelStatus) -> RigelStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => {
            if status == RigelStatus::Ok {
                set_error("");
            }
            status
        }
        Err(_) => fail(RigelStatus::Panic, "internal panic"),
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, RigelStatus> {
    if p.is_null() {
        return Err(fail(RigelStatus::NullArgument, format!("{what} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| fail(RigelStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

/// Message for the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call into this library on the
/// same thread.
#[no_mangle]
pub extern "C" fn rigel_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Assembles `count` source units and links them at `base` with `ram_size`
/// bytes of RAM (zero selects the defaults). `names` may be null, in which
/// case units are called `unit0`, `unit1`, ...
///
/// # Safety
/// `sources` must point to `count` NUL-terminated strings, `names` to
/// `count` strings or be null, and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rigel_image_build(
    sources: *const *const c_char,
    names: *const *const c_char,
    count: usize,
    base: u32,
    ram_size: u32,
    out: *mut *mut RigelImage,
) -> RigelStatus {
    guard(|| {
        if out.is_null() || (sources.is_null() && count > 0) {
            return fail(RigelStatus::NullArgument, "sources or out is null");
        }
        *out = ptr::null_mut();
        let mut units = Vec::with_capacity(count);
        for i in 0..count {
            let src = match str_arg(*sources.add(i), "source") {
                Ok(s) => s,
                Err(st) => return st,
            };
            let name = if names.is_null() {
                format!("unit{i}")
            } else {
                match str_arg(*names.add(i), "name") {
                    Ok(s) => s.to_string(),
                    Err(st) => return st,
                }
            };
            match assemble_unit(src, &name) {
                Ok(u) => units.push(u),
                Err(e) => return fail(RigelStatus::Assemble, e.to_string()),
            }
        }
        let mut layout = LayoutConfig::default();
        if base != 0 {
            layout.base = base;
        }
        if ram_size != 0 {
            layout.ram_size = ram_size;
        }
        match link(&units, &layout) {
            Ok(image) => {
                *out = Box::into_raw(Box::new(RigelImage { image }));
                RigelStatus::Ok
            }
            Err(e) => fail(RigelStatus::Link, e.to_string()),
        }
    })
}

/// # Safety
/// `image` must come from `rigel_image_build` and not be freed yet, or be null.
#[no_mangle]
pub unsafe extern "C" fn rigel_image_free(image: *mut RigelImage) {
    if !image.is_null() {
        drop(Box::from_raw(image));
    }
}

/// # Safety
/// `image` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn rigel_image_entry(image: *const RigelImage) -> u32 {
    image.as_ref().map_or(0, |i| i.image.entry)
}

/// # Safety
/// `image` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn rigel_image_base(image: *const RigelImage) -> u32 {
    image.as_ref().map_or(0, |i| i.image.base)
}

/// Borrowed view of the image bytes, valid while the handle lives.
///
/// # Safety
/// `image` must be a live handle; `len` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rigel_image_bytes(image: *const RigelImage, len: *mut usize) -> *const u8 {
    match (image.as_ref(), len.as_mut()) {
        (Some(i), Some(len)) => {
            *len = i.image.bytes.len();
            i.image.bytes.as_ptr()
        }
        _ => ptr::null(),
    }
}

/// # Safety
/// `image` must be a live handle, `name` a NUL-terminated string and
/// `addr` writable.
#[no_mangle]
pub unsafe extern "C" fn rigel_image_symbol(image: *const RigelImage, name: *const c_char, addr: *mut u32) -> RigelStatus {
    guard(|| {
        let (Some(i), Some(addr)) = (image.as_ref(), addr.as_mut()) else {
            return fail(RigelStatus::NullArgument, "image or addr is null");
        };
        let name = match str_arg(name, "name") {
            Ok(n) => n,
            Err(st) => return st,
        };
        match i.image.symbol(name) {
            Some(a) => {
                *addr = a;
                RigelStatus::Ok
            }
            None => fail(RigelStatus::NotFound, format!("no symbol `{name}`")),
        }
    })
}

/// Writes the symbol map (`%08x name` lines) into `buf`. `needed` receives
/// the full length including the terminating NUL.
///
/// # Safety
/// `image` must be a live handle, `buf` writable for `cap` bytes (or null
/// with `cap` zero) and `needed` writable.
#[no_mangle]
pub unsafe extern "C" fn rigel_image_map(image: *const RigelImage, buf: *mut c_char, cap: usize, needed: *mut usize) -> RigelStatus {
    guard(|| {
        let (Some(i), Some(needed)) = (image.as_ref(), needed.as_mut()) else {
            return fail(RigelStatus::NullArgument, "image or needed is null");
        };
        copy_text(&i.image.map_text(), buf, cap, needed)
    })
}

unsafe fn copy_text(text: &str, buf: *mut c_char, cap: usize, needed: &mut usize) -> RigelStatus {
    *needed = text.len() + 1;
    if buf.is_null() || cap < *needed {
        return fail(RigelStatus::BufferTooSmall, format!("{} bytes needed", *needed));
    }
    ptr::copy_nonoverlapping(text.as_ptr(), buf as *mut u8, text.len());
    *buf.add(text.len()) = 0;
    RigelStatus::Ok
}

/// Creates a hart with `ram_size` bytes of RAM (zero for the default) and
/// loads `image` at its base, with pc at the image entry.
///
/// # Safety
/// `image` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rigel_machine_new(image: *const RigelImage, ram_size: u32, out: *mut *mut RigelMachine) -> RigelStatus {
    guard(|| {
        let (Some(i), false) = (image.as_ref(), out.is_null()) else {
            return fail(RigelStatus::NullArgument, "image or out is null");
        };
        *out = ptr::null_mut();
        let ram = if ram_size == 0 { RIGEL_DEFAULT_RAM } else { ram_size };
        match Machine::load(&i.image, ram) {
            Ok(machine) => {
                *out = Box::into_raw(Box::new(RigelMachine { machine, last: None }));
                RigelStatus::Ok
            }
            Err(e) => fail(RigelStatus::Load, e.to_string()),
        }
    })
}

/// # Safety
/// `machine` must come from `rigel_machine_new` and not be freed yet, or be null.
#[no_mangle]
pub unsafe extern "C" fn rigel_machine_free(machine: *mut RigelMachine) {
    if !machine.is_null() {
        drop(Box::from_raw(machine));
    }
}

/// Schedules external interrupt `event` (0..15) to be latched once
/// `at` instructions have retired.
///
/// # Safety
/// `machine` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn rigel_machine_schedule_irq(machine: *mut RigelMachine, event: u8, at: u64) -> RigelStatus {
    guard(|| {
        let Some(m) = machine.as_mut() else {
            return fail(RigelStatus::NullArgument, "machine is null");
        };
        if event > 15 {
            return fail(RigelStatus::InvalidArgument, format!("event {event} is not 0..15"));
        }
        m.machine.schedule_irqs(&[IrqTrigger { event, at }]);
        RigelStatus::Ok
    })
}

/// Runs until the guest exits or faults, or until the retired count reaches
/// `max_instr`. A run stopped by the limit can be continued with a higher one.
///
/// # Safety
/// `machine` must be a live handle and `summary` writable or null.
#[no_mangle]
pub unsafe extern "C" fn rigel_machine_run(machine: *mut RigelMachine, max_instr: u64, summary: *mut RigelRunSummary) -> RigelStatus {
    guard(|| {
        let Some(m) = machine.as_mut() else {
            return fail(RigelStatus::NullArgument, "machine is null");
        };
        m.last = Some(m.machine.run(max_instr));
        if let Some(s) = summary.as_mut() {
            *s = summarize(m);
        }
        RigelStatus::Ok
    })
}

fn summarize(m: &RigelMachine) -> RigelRunSummary {
    let mut s = RigelRunSummary {
        kind: RigelRunKind::NotRun,
        exit_code: 0,
        fault_pc: 0,
        instret: m.machine.instret,
        events: m.machine.trace().len(),
    };
    match m.last.as_ref().map(|r| r.status) {
        None => {}
        Some(RunStatus::Exit(code)) => {
            s.kind = RigelRunKind::Exit;
            s.exit_code = code;
        }
        Some(RunStatus::InstructionLimit) => s.kind = RigelRunKind::InstructionLimit,
        Some(RunStatus::Fault { pc, .. }) => {
            s.kind = RigelRunKind::Fault;
            s.fault_pc = pc;
        }
    }
    s
}

/// # Safety
/// `machine` must be a live handle and `value` writable.
#[no_mangle]
pub unsafe extern "C" fn rigel_machine_reg(machine: *const RigelMachine, index: u32, value: *mut u32) -> RigelStatus {
    guard(|| {
        let (Some(m), Some(value)) = (machine.as_ref(), value.as_mut()) else {
            return fail(RigelStatus::NullArgument, "machine or value is null");
        };
        if index >= 32 {
            return fail(RigelStatus::InvalidArgument, format!("no register x{index}"));
        }
        *value = m.machine.reg(index as usize);
        RigelStatus::Ok
    })
}

/// Reads a word of RAM.
///
/// # Safety
/// `machine` must be a live handle and `value` writable.
#[no_mangle]
pub unsafe extern "C" fn rigel_machine_read_word(machine: *const RigelMachine, addr: u32, value: *mut u32) -> RigelStatus {
    guard(|| {
        let (Some(m), Some(value)) = (machine.as_ref(), value.as_mut()) else {
            return fail(RigelStatus::NullArgument, "machine or value is null");
        };
        match m.machine.read_word(addr) {
            Some(w) => {
                *value = w;
                RigelStatus::Ok
            }
            None => fail(RigelStatus::InvalidArgument, format!("{addr:#010x} is not a RAM word")),
        }
    })
}

/// Copies the recorded trace as 32-bit words. `count` receives the number
/// of events; nothing is copied if `cap` is smaller.
///
/// # Safety
/// `machine` must be a live handle, `words` writable for `cap` entries (or
/// null with `cap` zero) and `count` writable.
#[no_mangle]
pub unsafe extern "C" fn rigel_machine_trace_words(machine: *const RigelMachine, words: *mut u32, cap: usize, count: *mut usize) -> RigelStatus {
    guard(|| {
        let (Some(m), Some(count)) = (machine.as_ref(), count.as_mut()) else {
            return fail(RigelStatus::NullArgument, "machine or count is null");
        };
        let events = m.machine.trace().events();
        *count = events.len();
        if events.is_empty() {
            return RigelStatus::Ok;
        }
        if words.is_null() || cap < events.len() {
            return fail(RigelStatus::BufferTooSmall, format!("{} words needed", events.len()));
        }
        let out = slice::from_raw_parts_mut(words, events.len());
        for (o, e) in out.iter_mut().zip(events) {
            *o = e.to_word();
        }
        RigelStatus::Ok
    })
}

/// Writes the trace in its text form (`EVT NAME a0 a1` lines).
///
/// # Safety
/// As for `rigel_image_map`.
#[no_mangle]
pub unsafe extern "C" fn rigel_machine_trace_text(machine: *const RigelMachine, buf: *mut c_char, cap: usize, needed: *mut usize) -> RigelStatus {
    guard(|| {
        let (Some(m), Some(needed)) = (machine.as_ref(), needed.as_mut()) else {
            return fail(RigelStatus::NullArgument, "machine or needed is null");
        };
        copy_text(&m.machine.trace().to_text(), buf, cap, needed)
    })
}

/// Renders one trace word as `EVT NAME a0 a1`.
///
/// # Safety
/// `buf` writable for `cap` bytes (or null with `cap` zero); `needed` writable.
#[no_mangle]
pub unsafe extern "C" fn rigel_trace_word_text(word: u32, buf: *mut c_char, cap: usize, needed: *mut usize) -> RigelStatus {
    guard(|| {
        let Some(needed) = needed.as_mut() else {
            return fail(RigelStatus::NullArgument, "needed is null");
        };
        match Event::from_word(word) {
            Ok(e) => copy_text(&e.to_string(), buf, cap, needed),
            Err(e) => fail(RigelStatus::InvalidArgument, e.to_string()),
        }
    })
}
