// Licensed under the Apache-2.0 license

//! Machine-mode RV32IM + Zicsr instruction-set simulator.
//!
//! One hart, RAM at the image base, and a handful of MMIO devices:
//!
//! | address       | device                                               |
//! |---------------|------------------------------------------------------|
//! | `0x0200_0000` | CLINT `msip`                                         |
//! | `0x0200_4000` | CLINT `mtimecmp` (low, high word)                    |
//! | `0x0200_bff8` | CLINT `mtime` (low, high word, read only)            |
//! | `0x1000_0000` | UART; a write to offset 0 transmits one byte         |
//! | `0x1110_0000` | test finisher: `0x5555` exits 0, `(c << 16) \| 0x3333` exits `c` |
//! | `0x1120_0000` | trace port: one kernel event word per write          |
//! | `0x1130_0000` | irq latch: read claims the oldest raised event id    |
//!
//! Time is measured in retired instructions: `mtime` always equals
//! `instret`, so timer behaviour is exactly reproducible.

mod decode;

pub use decode::{decode, IllegalInstruction};

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::isa::{csr, BranchCond, CsrOp, ImmOp, Instruction, LoadWidth, RegOp};
use crate::link::MemoryImage;
use crate::trace::{Event, EventTrace};

pub mod map {
    pub const CLINT_MSIP: u32 = 0x0200_0000;
    pub const CLINT_MTIMECMP: u32 = 0x0200_4000;
    pub const CLINT_MTIME: u32 = 0x0200_bff8;
    pub const UART: u32 = 0x1000_0000;
    pub const UART_LEN: u32 = 8;
    pub const FINISHER: u32 = 0x1110_0000;
    pub const TRACE_PORT: u32 = 0x1120_0000;
    pub const IRQ_LATCH: u32 = 0x1130_0000;
    /// Lowest MMIO address; RAM must end at or below it.
    pub const MMIO_FLOOR: u32 = CLINT_MSIP;
    pub const MMIO_CEILING: u32 = 0x1200_0000;
}

pub const FINISHER_PASS: u32 = 0x5555;
pub const FINISHER_FAIL: u32 = 0x3333;

pub mod cause {
    pub const INTERRUPT: u32 = 0x8000_0000;
    pub const MISALIGNED_FETCH: u32 = 0;
    pub const FETCH_ACCESS: u32 = 1;
    pub const ILLEGAL_INSTRUCTION: u32 = 2;
    pub const BREAKPOINT: u32 = 3;
    pub const MISALIGNED_LOAD: u32 = 4;
    pub const LOAD_ACCESS: u32 = 5;
    pub const MISALIGNED_STORE: u32 = 6;
    pub const STORE_ACCESS: u32 = 7;
    pub const ECALL_M: u32 = 11;
    pub const MACHINE_SOFTWARE: u32 = INTERRUPT | 3;
    pub const MACHINE_TIMER: u32 = INTERRUPT | 7;
    pub const MACHINE_EXTERNAL: u32 = INTERRUPT | 11;
}

const MSTATUS_MIE: u32 = 1 << 3;
const MSTATUS_MPIE: u32 = 1 << 7;
const MSTATUS_MPP_M: u32 = 3 << 11;
const MIP_MSIP: u32 = 1 << 3;
const MIP_MTIP: u32 = 1 << 7;
const MIP_MEIP: u32 = 1 << 11;
const MISA_RV32IM: u32 = (1 << 30) | (1 << 8) | (1 << 12);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("image of {image} bytes does not fit in {ram} bytes of RAM")]
    ImageOverflow { image: usize, ram: u32 },
    #[error("RAM [{base:#010x}, +{size:#x}) overlaps the MMIO region")]
    RamOverlapsMmio { base: u32, size: u32 },
    #[error("entry point {0:#010x} is not a word-aligned RAM address")]
    BadEntry(u32),
    #[error("bad irq schedule entry `{0}` (expected <event>@<instret>)")]
    BadIrqSpec(String),
}

/// An external interrupt raised once `instret` reaches `at`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct IrqTrigger {
    pub event: u8,
    pub at: u64,
}

impl FromStr for IrqTrigger {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, SimError> {
        let bad = || SimError::BadIrqSpec(s.to_string());
        let (event, at) = s.split_once('@').ok_or_else(bad)?;
        let event = crate::kernel::parse_number(event.trim()).and_then(|v| u8::try_from(v).ok()).ok_or_else(bad)?;
        let at = crate::kernel::parse_number(at.trim()).ok_or_else(bad)?;
        Ok(IrqTrigger { event, at })
    }
}

impl fmt::Display for IrqTrigger {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.event, self.at)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FaultCause {
    /// Trap taken with `mtvec = 0`, or an exception at the trap vector itself.
    UnhandledTrap { mcause: u32, mtval: u32 },
    /// Trace-port write that is not a kernel event word.
    BadTraceWord(u32),
    /// Finisher write that is neither a pass nor a fail code.
    BadFinisherWrite(u32),
    /// A per-step invariant failed in debug-check mode.
    Invariant(&'static str),
}

impl fmt::Display for FaultCause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FaultCause::UnhandledTrap { mcause, mtval } => write!(f, "unhandled trap mcause={mcause:#x} mtval={mtval:#010x}"),
            FaultCause::BadTraceWord(w) => write!(f, "bad trace word {w:#010x}"),
            FaultCause::BadFinisherWrite(w) => write!(f, "bad finisher write {w:#010x}"),
            FaultCause::Invariant(what) => write!(f, "invariant violated: {what}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RunStatus {
    Exit(u16),
    InstructionLimit,
    Fault { cause: FaultCause, pc: u32 },
}

impl fmt::Display for RunStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunStatus::Exit(code) => write!(f, "exit({code})"),
            RunStatus::InstructionLimit => f.write_str("instruction limit"),
            RunStatus::Fault { cause, pc } => write!(f, "fault at {pc:#010x}: {cause}"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StepResult {
    pub events: Vec<Event>,
    pub trap_taken: bool,
    pub halted: Option<RunStatus>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RunResult {
    pub status: RunStatus,
    pub trace: EventTrace,
    pub instret: u64,
    /// Trace-port writes performed while `mstatus.MIE` was set.
    pub trace_writes_with_mie: u64,
}

impl RunResult {
    pub fn output(&self) -> Vec<u8> {
        self.trace.output()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Csrs {
    pub mstatus: u32,
    pub mie: u32,
    pub mtvec: u32,
    pub mepc: u32,
    pub mcause: u32,
    pub mtval: u32,
    pub mscratch: u32,
}

enum Exception {
    Trap { cause: u32, tval: u32 },
    Halt(RunStatus),
}

type Exec<T> = Result<T, Exception>;

fn trap<T>(cause: u32, tval: u32) -> Exec<T> {
    Err(Exception::Trap { cause, tval })
}

#[derive(Debug, Clone)]
pub struct Machine {
    x: [u32; 32],
    pub pc: u32,
    pub csr: Csrs,
    base: u32,
    ram: Vec<u8>,
    pub mtimecmp: u64,
    pub instret: u64,
    msip: bool,
    irq_schedule: VecDeque<IrqTrigger>,
    irq_latch: VecDeque<u8>,
    trace: EventTrace,
    step_events: Vec<Event>,
    status: Option<RunStatus>,
    horizon: u64,
    trace_writes_with_mie: u64,
    /// Check x0 and pc alignment after every step.
    pub debug_checks: bool,
}

impl Machine {
    /// Creates a hart with `ram_size` bytes of zeroed RAM at `base`, copies
    /// `bytes` to the start of RAM and points `pc` at `entry`.
    pub fn new(base: u32, ram_size: u32, bytes: &[u8], entry: u32) -> Result<Machine, SimError> {
        if bytes.len() as u64 > ram_size as u64 {
            return Err(SimError::ImageOverflow { image: bytes.len(), ram: ram_size });
        }
        let end = base as u64 + ram_size as u64;
        if end > 1 << 32 || (base < map::MMIO_CEILING && end > map::MMIO_FLOOR as u64) {
            return Err(SimError::RamOverlapsMmio { base, size: ram_size });
        }
        if entry % 4 != 0 || entry < base || entry as u64 >= base as u64 + ram_size as u64 {
            return Err(SimError::BadEntry(entry));
        }
        let mut ram = vec![0u8; ram_size as usize];
        ram[..bytes.len()].copy_from_slice(bytes);
        Ok(Machine {
            x: [0; 32],
            pc: entry,
            csr: Csrs { mstatus: 0, ..Csrs::default() },
            base,
            ram,
            mtimecmp: u64::MAX,
            instret: 0,
            msip: false,
            irq_schedule: VecDeque::new(),
            irq_latch: VecDeque::new(),
            trace: EventTrace::new(),
            step_events: Vec::new(),
            status: None,
            horizon: u64::MAX,
            trace_writes_with_mie: 0,
            debug_checks: false,
        })
    }

    pub fn load(image: &MemoryImage, ram_size: u32) -> Result<Machine, SimError> {
        Machine::new(image.base, ram_size, &image.bytes, image.entry)
    }

    pub fn reg(&self, index: usize) -> u32 {
        self.x[index]
    }

    pub fn set_reg(&mut self, index: usize, value: u32) {
        if index != 0 {
            self.x[index] = value;
        }
    }

    pub fn mtime(&self) -> u64 {
        self.instret
    }

    pub fn trace(&self) -> &EventTrace {
        &self.trace
    }

    pub fn status(&self) -> Option<RunStatus> {
        self.status
    }

    /// Adds external interrupt triggers; entries fire in `at` order, ties in
    /// insertion order.
    pub fn schedule_irqs(&mut self, triggers: &[IrqTrigger]) {
        let mut all: Vec<IrqTrigger> = self.irq_schedule.drain(..).chain(triggers.iter().copied()).collect();
        all.sort_by_key(|t| t.at);
        self.irq_schedule = all.into();
        self.fire_irqs();
    }

    /// Reads `len` bytes of RAM starting at `addr`, if all of them are RAM.
    pub fn read_ram(&self, addr: u32, len: usize) -> Option<&[u8]> {
        let start = addr.checked_sub(self.base)? as usize;
        self.ram.get(start..start.checked_add(len)?)
    }

    pub fn read_word(&self, addr: u32) -> Option<u32> {
        self.read_ram(addr, 4).map(|b| u32::from_le_bytes(b.try_into().unwrap()))
    }

    fn mip(&self) -> u32 {
        let mut mip = 0;
        if self.msip {
            mip |= MIP_MSIP;
        }
        if self.instret >= self.mtimecmp {
            mip |= MIP_MTIP;
        }
        if !self.irq_latch.is_empty() {
            mip |= MIP_MEIP;
        }
        mip
    }

    fn fire_irqs(&mut self) {
        while let Some(t) = self.irq_schedule.front() {
            if t.at > self.instret {
                break;
            }
            self.irq_latch.push_back(t.event);
            self.irq_schedule.pop_front();
        }
    }

    fn halt(&mut self, status: RunStatus) {
        if self.status.is_none() {
            self.status = Some(status);
        }
    }

    /// Enters the trap handler. Interrupts pass the address of the next
    /// instruction as `epc`, exceptions the faulting one.
    pub fn take_trap(&mut self, cause: u32, tval: u32, epc: u32) {
        let is_interrupt = cause & cause::INTERRUPT != 0;
        if self.csr.mtvec == 0 || (!is_interrupt && epc == self.csr.mtvec) {
            self.halt(RunStatus::Fault { cause: FaultCause::UnhandledTrap { mcause: cause, mtval: tval }, pc: epc });
            return;
        }
        self.csr.mepc = epc;
        self.csr.mcause = cause;
        self.csr.mtval = tval;
        let mie = self.csr.mstatus & MSTATUS_MIE != 0;
        self.csr.mstatus &= !(MSTATUS_MIE | MSTATUS_MPIE);
        if mie {
            self.csr.mstatus |= MSTATUS_MPIE;
        }
        self.pc = self.csr.mtvec;
    }

    /// Executes one instruction, or takes one pending interrupt.
    pub fn step(&mut self) -> StepResult {
        if let Some(status) = self.status {
            return StepResult { halted: Some(status), ..StepResult::default() };
        }
        let mut result = StepResult::default();
        let pending = self.mip() & self.csr.mie;
        if self.csr.mstatus & MSTATUS_MIE != 0 && pending != 0 {
            let cause = if pending & MIP_MEIP != 0 {
                cause::MACHINE_EXTERNAL
            } else if pending & MIP_MTIP != 0 {
                cause::MACHINE_TIMER
            } else {
                cause::MACHINE_SOFTWARE
            };
            self.take_trap(cause, 0, self.pc);
            result.trap_taken = true;
        } else {
            let pc = self.pc;
            match self.execute() {
                Ok(next_pc) => {
                    self.pc = next_pc;
                    self.instret += 1;
                    self.fire_irqs();
                }
                Err(Exception::Trap { cause, tval }) => {
                    self.take_trap(cause, tval, pc);
                    result.trap_taken = true;
                }
                Err(Exception::Halt(status)) => {
                    // The store that halted the machine still retires.
                    self.instret += 1;
                    self.halt(status);
                }
            }
        }
        if self.debug_checks && self.status.is_none() {
            if self.x[0] != 0 {
                self.halt(RunStatus::Fault { cause: FaultCause::Invariant("x0 is nonzero"), pc: self.pc });
            } else if self.pc % 4 != 0 {
                self.halt(RunStatus::Fault { cause: FaultCause::Invariant("pc misaligned"), pc: self.pc });
            }
        }
        result.events = std::mem::take(&mut self.step_events);
        self.trace.0.extend_from_slice(&result.events);
        if let Some(RunStatus::Exit(code)) = self.status {
            if !matches!(self.trace.0.last(), Some(Event::Exit(_))) {
                self.trace.push(Event::Exit(code));
                result.events.push(Event::Exit(code));
            }
        }
        result.halted = self.status;
        result
    }

    /// Runs until exit, fault, or until `instret` reaches `max_instr`. Exit
    /// and fault are final; a run stopped by the limit can be continued with
    /// a higher one.
    pub fn run(&mut self, max_instr: u64) -> RunResult {
        self.run_observed(max_instr, |_, _| {})
    }

    /// Like [`Machine::run`], calling `observer` for every event as it is emitted.
    pub fn run_observed(&mut self, max_instr: u64, mut observer: impl FnMut(&Machine, &Event)) -> RunResult {
        self.horizon = max_instr;
        // Guards against trap loops that never retire an instruction.
        let mut budget = max_instr.saturating_mul(4).saturating_add(64);
        while self.status.is_none() {
            if self.instret >= max_instr || budget == 0 {
                break;
            }
            budget -= 1;
            let step = self.step();
            for e in &step.events {
                observer(self, e);
            }
        }
        self.horizon = u64::MAX;
        RunResult {
            status: self.status.unwrap_or(RunStatus::InstructionLimit),
            trace: self.trace.clone(),
            instret: self.instret,
            trace_writes_with_mie: self.trace_writes_with_mie,
        }
    }

    fn read_reg(&self, r: crate::isa::Reg) -> u32 {
        self.x[r.index()]
    }

    fn write_reg(&mut self, r: crate::isa::Reg, value: u32) {
        if r.index() != 0 {
            self.x[r.index()] = value;
        }
    }

    fn fetch(&self, pc: u32) -> Exec<u32> {
        match self.read_word(pc) {
            Some(w) => Ok(w),
            None => trap(cause::FETCH_ACCESS, pc),
        }
    }

    fn jump_target(&self, target: u32) -> Exec<u32> {
        if target % 4 != 0 {
            trap(cause::MISALIGNED_FETCH, target)
        } else {
            Ok(target)
        }
    }

    fn execute(&mut self) -> Exec<u32> {
        let pc = self.pc;
        let word = self.fetch(pc)?;
        let instr = decode(word).or_else(|_| trap(cause::ILLEGAL_INSTRUCTION, word))?;
        let next = pc.wrapping_add(4);
        match instr {
            Instruction::Lui { rd, imm } => self.write_reg(rd, imm << 12),
            Instruction::Auipc { rd, imm } => self.write_reg(rd, pc.wrapping_add(imm << 12)),
            Instruction::Jal { rd, offset } => {
                let target = self.jump_target(pc.wrapping_add(offset as u32))?;
                self.write_reg(rd, next);
                return Ok(target);
            }
            Instruction::Jalr { rd, rs1, offset } => {
                let target = self.jump_target(self.read_reg(rs1).wrapping_add(offset as u32) & !1)?;
                self.write_reg(rd, next);
                return Ok(target);
            }
            Instruction::Branch { cond, rs1, rs2, offset } => {
                let (a, b) = (self.read_reg(rs1), self.read_reg(rs2));
                let taken = match cond {
                    BranchCond::Eq => a == b,
                    BranchCond::Ne => a != b,
                    BranchCond::Lt => (a as i32) < (b as i32),
                    BranchCond::Ge => (a as i32) >= (b as i32),
                    BranchCond::Ltu => a < b,
                    BranchCond::Geu => a >= b,
                };
                if taken {
                    return self.jump_target(pc.wrapping_add(offset as u32));
                }
            }
            Instruction::Load { width, rd, rs1, offset } => {
                let addr = self.read_reg(rs1).wrapping_add(offset as u32);
                let size = width.size();
                if addr % size != 0 {
                    return trap(cause::MISALIGNED_LOAD, addr);
                }
                let raw = self.bus_read(addr, size)?;
                let value = match width {
                    LoadWidth::Byte => raw as u8 as i8 as i32 as u32,
                    LoadWidth::Half => raw as u16 as i16 as i32 as u32,
                    LoadWidth::Word => raw,
                    LoadWidth::ByteUnsigned => raw & 0xff,
                    LoadWidth::HalfUnsigned => raw & 0xffff,
                };
                self.write_reg(rd, value);
            }
            Instruction::Store { width, rs1, rs2, offset } => {
                let addr = self.read_reg(rs1).wrapping_add(offset as u32);
                let size = width.size();
                if addr % size != 0 {
                    return trap(cause::MISALIGNED_STORE, addr);
                }
                self.bus_write(addr, size, self.read_reg(rs2))?;
            }
            Instruction::OpImm { op, rd, rs1, imm } => {
                let a = self.read_reg(rs1);
                let b = imm as u32;
                let value = match op {
                    ImmOp::Addi => a.wrapping_add(b),
                    ImmOp::Slti => ((a as i32) < imm) as u32,
                    ImmOp::Sltiu => (a < b) as u32,
                    ImmOp::Xori => a ^ b,
                    ImmOp::Ori => a | b,
                    ImmOp::Andi => a & b,
                    ImmOp::Slli => a << (b & 31),
                    ImmOp::Srli => a >> (b & 31),
                    ImmOp::Srai => ((a as i32) >> (b & 31)) as u32,
                };
                self.write_reg(rd, value);
            }
            Instruction::Op { op, rd, rs1, rs2 } => {
                let value = alu(op, self.read_reg(rs1), self.read_reg(rs2));
                self.write_reg(rd, value);
            }
            Instruction::Fence { .. } => {}
            Instruction::Ecall => return trap(cause::ECALL_M, 0),
            Instruction::Ebreak => return trap(cause::BREAKPOINT, pc),
            Instruction::Mret => {
                let mpie = self.csr.mstatus & MSTATUS_MPIE != 0;
                self.csr.mstatus = (self.csr.mstatus & !MSTATUS_MIE) | MSTATUS_MPIE;
                if mpie {
                    self.csr.mstatus |= MSTATUS_MIE;
                }
                return Ok(self.csr.mepc);
            }
            Instruction::Wfi => self.wait_for_interrupt(),
            Instruction::Csr { op, rd, csr, src } => {
                let illegal = || trap(cause::ILLEGAL_INSTRUCTION, word);
                let operand = if op.is_imm() { src as u32 } else { self.x[src as usize] };
                let writes = matches!(op, CsrOp::ReadWrite | CsrOp::ReadWriteImm) || src != 0;
                let reads = !matches!(op, CsrOp::ReadWrite | CsrOp::ReadWriteImm) || rd.index() != 0;
                let old = match self.csr_read(csr) {
                    Some(v) => v,
                    None => return illegal(),
                };
                if writes {
                    let new = match op {
                        CsrOp::ReadWrite | CsrOp::ReadWriteImm => operand,
                        CsrOp::ReadSet | CsrOp::ReadSetImm => old | operand,
                        CsrOp::ReadClear | CsrOp::ReadClearImm => old & !operand,
                    };
                    if self.csr_write(csr, new).is_err() {
                        return illegal();
                    }
                }
                if reads {
                    self.write_reg(rd, old);
                }
            }
        }
        Ok(next)
    }

    /// Skips ahead to the next instant at which an enabled interrupt could
    /// become pending, bounded by the run's instruction limit.
    fn wait_for_interrupt(&mut self) {
        if self.mip() & self.csr.mie != 0 {
            return;
        }
        // The wfi itself retires after this returns; land one short of the target.
        let mut target = self.horizon;
        if self.csr.mie & MIP_MTIE_ENABLE != 0 && self.mtimecmp > self.instret {
            target = target.min(self.mtimecmp);
        }
        if self.csr.mie & MIP_MEIE_ENABLE != 0 {
            if let Some(t) = self.irq_schedule.front() {
                target = target.min(t.at.max(self.instret + 1));
            }
        }
        if target > self.instret + 1 {
            self.instret = target - 1;
        }
    }

    fn csr_read(&self, addr: u16) -> Option<u32> {
        Some(match addr {
            csr::MSTATUS => self.csr.mstatus | MSTATUS_MPP_M,
            csr::MISA => MISA_RV32IM,
            csr::MIE => self.csr.mie,
            csr::MIP => self.mip(),
            csr::MTVEC => self.csr.mtvec,
            csr::MSCRATCH => self.csr.mscratch,
            csr::MEPC => self.csr.mepc,
            csr::MCAUSE => self.csr.mcause,
            csr::MTVAL => self.csr.mtval,
            csr::MHARTID => 0,
            _ => return None,
        })
    }

    fn csr_write(&mut self, addr: u16, value: u32) -> Result<(), ()> {
        match addr {
            csr::MSTATUS => self.csr.mstatus = value & (MSTATUS_MIE | MSTATUS_MPIE),
            csr::MISA | csr::MIP => {}
            csr::MIE => self.csr.mie = value & (MIP_MSIP | MIP_MTIP | MIP_MEIP),
            // Direct mode only.
            csr::MTVEC if value & 3 != 0 => return Err(()),
            csr::MTVEC => self.csr.mtvec = value,
            csr::MSCRATCH => self.csr.mscratch = value,
            csr::MEPC => self.csr.mepc = value & !3,
            csr::MCAUSE => self.csr.mcause = value,
            csr::MTVAL => self.csr.mtval = value,
            _ => return Err(()),
        }
        Ok(())
    }

    fn ram_offset(&self, addr: u32, size: u32) -> Option<usize> {
        let off = addr.checked_sub(self.base)? as usize;
        (off + size as usize <= self.ram.len()).then_some(off)
    }

    fn bus_read(&mut self, addr: u32, size: u32) -> Exec<u32> {
        if let Some(off) = self.ram_offset(addr, size) {
            let mut buf = [0u8; 4];
            buf[..size as usize].copy_from_slice(&self.ram[off..off + size as usize]);
            return Ok(u32::from_le_bytes(buf));
        }
        let fault = || trap(cause::LOAD_ACCESS, addr);
        if (map::UART..map::UART + map::UART_LEN).contains(&addr) {
            // LSR reports the transmitter as always empty.
            return Ok(if addr - map::UART == 5 { 0x60 } else { 0 });
        }
        if size != 4 {
            return fault();
        }
        match addr {
            map::CLINT_MSIP => Ok(self.msip as u32),
            a if a == map::CLINT_MTIMECMP => Ok(self.mtimecmp as u32),
            a if a == map::CLINT_MTIMECMP + 4 => Ok((self.mtimecmp >> 32) as u32),
            a if a == map::CLINT_MTIME => Ok(self.mtime() as u32),
            a if a == map::CLINT_MTIME + 4 => Ok((self.mtime() >> 32) as u32),
            map::IRQ_LATCH => Ok(self.irq_latch.pop_front().map_or(u32::MAX, u32::from)),
            _ => fault(),
        }
    }

    fn bus_write(&mut self, addr: u32, size: u32, value: u32) -> Exec<()> {
        if let Some(off) = self.ram_offset(addr, size) {
            self.ram[off..off + size as usize].copy_from_slice(&value.to_le_bytes()[..size as usize]);
            return Ok(());
        }
        let fault = || trap(cause::STORE_ACCESS, addr);
        if (map::UART..map::UART + map::UART_LEN).contains(&addr) {
            if addr == map::UART {
                self.step_events.push(Event::Output(value as u8));
            }
            return Ok(());
        }
        if size != 4 {
            return fault();
        }
        match addr {
            map::CLINT_MSIP => self.msip = value & 1 != 0,
            a if a == map::CLINT_MTIMECMP => self.mtimecmp = (self.mtimecmp & !0xffff_ffff) | value as u64,
            a if a == map::CLINT_MTIMECMP + 4 => self.mtimecmp = (self.mtimecmp & 0xffff_ffff) | ((value as u64) << 32),
            map::FINISHER => {
                let status = if value == FINISHER_PASS {
                    RunStatus::Exit(0)
                } else if value & 0xffff == FINISHER_FAIL {
                    RunStatus::Exit((value >> 16) as u16)
                } else {
                    RunStatus::Fault { cause: FaultCause::BadFinisherWrite(value), pc: self.pc }
                };
                return Err(Exception::Halt(status));
            }
            map::TRACE_PORT => {
                if self.csr.mstatus & MSTATUS_MIE != 0 {
                    self.trace_writes_with_mie += 1;
                }
                match Event::from_word(value) {
                    Ok(Event::Output(_)) | Ok(Event::Exit(_)) | Err(_) => {
                        return Err(Exception::Halt(RunStatus::Fault { cause: FaultCause::BadTraceWord(value), pc: self.pc }));
                    }
                    Ok(e) => self.step_events.push(e),
                }
            }
            _ => return fault(),
        }
        Ok(())
    }
}

const MIP_MTIE_ENABLE: u32 = MIP_MTIP;
const MIP_MEIE_ENABLE: u32 = MIP_MEIP;

/// Register-register ALU, including the M extension's division corner cases.
pub fn alu(op: RegOp, a: u32, b: u32) -> u32 {
    let (sa, sb) = (a as i32, b as i32);
    match op {
        RegOp::Add => a.wrapping_add(b),
        RegOp::Sub => a.wrapping_sub(b),
        RegOp::Sll => a << (b & 31),
        RegOp::Slt => (sa < sb) as u32,
        RegOp::Sltu => (a < b) as u32,
        RegOp::Xor => a ^ b,
        RegOp::Srl => a >> (b & 31),
        RegOp::Sra => (sa >> (b & 31)) as u32,
        RegOp::Or => a | b,
        RegOp::And => a & b,
        RegOp::Mul => a.wrapping_mul(b),
        RegOp::Mulh => ((sa as i64 * sb as i64) >> 32) as u32,
        RegOp::Mulhsu => ((sa as i64 * b as i64) >> 32) as u32,
        RegOp::Mulhu => ((a as u64 * b as u64) >> 32) as u32,
        RegOp::Div => {
            if b == 0 {
                u32::MAX
            } else if sa == i32::MIN && sb == -1 {
                a
            } else {
                (sa / sb) as u32
            }
        }
        RegOp::Divu => a.checked_div(b).unwrap_or(u32::MAX),
        RegOp::Rem => {
            if b == 0 {
                a
            } else if sa == i32::MIN && sb == -1 {
                0
            } else {
                (sa % sb) as u32
            }
        }
        RegOp::Remu => a.checked_rem(b).unwrap_or(a),
    }
}
