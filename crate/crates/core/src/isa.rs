// Licensed under the Apache-2.0 license

//! RV32IM + Zicsr instruction model.
//!
//! [`Instruction`] is the common currency between the assembler, which
//! produces it from source text and calls [`encode`], and the simulator,
//! which recovers it from memory with [`crate::sim::decode`]. Immediates are
//! stored as the signed byte offsets / values they denote, never as raw
//! bit fields.

use std::fmt;

use thiserror::Error;

/// A general purpose register index, `x0`..`x31`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Reg(u8);

impl Reg {
    pub const ZERO: Reg = Reg(0);
    pub const RA: Reg = Reg(1);
    pub const SP: Reg = Reg(2);

    pub const fn new(index: u8) -> Option<Reg> {
        if index < 32 {
            Some(Reg(index))
        } else {
            None
        }
    }

    /// Builds a register from the low five bits of `bits`.
    pub const fn from_bits(bits: u32) -> Reg {
        Reg((bits & 0x1f) as u8)
    }

    pub const fn index(self) -> usize {
        self.0 as usize
    }

    /// Parses `x0`..`x31` or an ABI alias (`zero`, `ra`, `sp`, `t0`, `s0`, `fp`, ...).
    pub fn parse(name: &str) -> Option<Reg> {
        if let Some(num) = name.strip_prefix('x') {
            if !num.is_empty() && num.bytes().all(|b| b.is_ascii_digit()) && !(num.len() > 1 && num.starts_with('0')) {
                return num.parse::<u8>().ok().and_then(Reg::new);
            }
        }
        if name == "fp" {
            return Some(Reg(8));
        }
        ABI_NAMES.iter().position(|n| *n == name).map(|i| Reg(i as u8))
    }

    pub fn abi_name(self) -> &'static str {
        ABI_NAMES[self.index()]
    }
}

impl fmt::Display for Reg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "x{}", self.0)
    }
}

const ABI_NAMES: [&str; 32] = [
    "zero", "ra", "sp", "gp", "tp", "t0", "t1", "t2", "s0", "s1", "a0", "a1", "a2", "a3", "a4", "a5", "a6", "a7", "s2",
    "s3", "s4", "s5", "s6", "s7", "s8", "s9", "s10", "s11", "t3", "t4", "t5", "t6",
];

/// Machine-mode CSR addresses known to the toolchain and simulator.
pub mod csr {
    pub const MSTATUS: u16 = 0x300;
    pub const MISA: u16 = 0x301;
    pub const MIE: u16 = 0x304;
    pub const MTVEC: u16 = 0x305;
    pub const MSCRATCH: u16 = 0x340;
    pub const MEPC: u16 = 0x341;
    pub const MCAUSE: u16 = 0x342;
    pub const MTVAL: u16 = 0x343;
    pub const MIP: u16 = 0x344;
    pub const MHARTID: u16 = 0xf14;

    const NAMES: [(&str, u16); 10] = [
        ("mstatus", MSTATUS),
        ("misa", MISA),
        ("mie", MIE),
        ("mtvec", MTVEC),
        ("mscratch", MSCRATCH),
        ("mepc", MEPC),
        ("mcause", MCAUSE),
        ("mtval", MTVAL),
        ("mip", MIP),
        ("mhartid", MHARTID),
    ];

    pub fn by_name(name: &str) -> Option<u16> {
        NAMES.iter().find(|(n, _)| *n == name).map(|&(_, a)| a)
    }

    pub fn name(addr: u16) -> Option<&'static str> {
        NAMES.iter().find(|(_, a)| *a == addr).map(|&(n, _)| n)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BranchCond {
    Eq,
    Ne,
    Lt,
    Ge,
    Ltu,
    Geu,
}

impl BranchCond {
    pub const ALL: [BranchCond; 6] = [Self::Eq, Self::Ne, Self::Lt, Self::Ge, Self::Ltu, Self::Geu];

    pub const fn funct3(self) -> u32 {
        match self {
            Self::Eq => 0,
            Self::Ne => 1,
            Self::Lt => 4,
            Self::Ge => 5,
            Self::Ltu => 6,
            Self::Geu => 7,
        }
    }

    pub fn mnemonic(self) -> &'static str {
        match self {
            Self::Eq => "beq",
            Self::Ne => "bne",
            Self::Lt => "blt",
            Self::Ge => "bge",
            Self::Ltu => "bltu",
            Self::Geu => "bgeu",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LoadWidth {
    Byte,
    Half,
    Word,
    ByteUnsigned,
    HalfUnsigned,
}

impl LoadWidth {
    pub const ALL: [LoadWidth; 5] = [Self::Byte, Self::Half, Self::Word, Self::ByteUnsigned, Self::HalfUnsigned];

    pub const fn funct3(self) -> u32 {
        match self {
            Self::Byte => 0,
            Self::Half => 1,
            Self::Word => 2,
            Self::ByteUnsigned => 4,
            Self::HalfUnsigned => 5,
        }
    }

    pub const fn size(self) -> u32 {
        match self {
            Self::Byte | Self::ByteUnsigned => 1,
            Self::Half | Self::HalfUnsigned => 2,
            Self::Word => 4,
        }
    }

    pub fn mnemonic(self) -> &'static str {
        match self {
            Self::Byte => "lb",
            Self::Half => "lh",
            Self::Word => "lw",
            Self::ByteUnsigned => "lbu",
            Self::HalfUnsigned => "lhu",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StoreWidth {
    Byte,
    Half,
    Word,
}

impl StoreWidth {
    pub const ALL: [StoreWidth; 3] = [Self::Byte, Self::Half, Self::Word];

    pub const fn funct3(self) -> u32 {
        match self {
            Self::Byte => 0,
            Self::Half => 1,
            Self::Word => 2,
        }
    }

    pub const fn size(self) -> u32 {
        1 << self.funct3()
    }

    pub fn mnemonic(self) -> &'static str {
        match self {
            Self::Byte => "sb",
            Self::Half => "sh",
            Self::Word => "sw",
        }
    }
}

/// Register-immediate ALU operations (`OP-IMM` major opcode).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ImmOp {
    Addi,
    Slti,
    Sltiu,
    Xori,
    Ori,
    Andi,
    Slli,
    Srli,
    Srai,
}

impl ImmOp {
    pub const ALL: [ImmOp; 9] =
        [Self::Addi, Self::Slti, Self::Sltiu, Self::Xori, Self::Ori, Self::Andi, Self::Slli, Self::Srli, Self::Srai];

    pub const fn is_shift(self) -> bool {
        matches!(self, Self::Slli | Self::Srli | Self::Srai)
    }

    pub fn mnemonic(self) -> &'static str {
        match self {
            Self::Addi => "addi",
            Self::Slti => "slti",
            Self::Sltiu => "sltiu",
            Self::Xori => "xori",
            Self::Ori => "ori",
            Self::Andi => "andi",
            Self::Slli => "slli",
            Self::Srli => "srli",
            Self::Srai => "srai",
        }
    }
}

/// Register-register operations, RV32I base plus the M extension.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RegOp {
    Add,
    Sub,
    Sll,
    Slt,
    Sltu,
    Xor,
    Srl,
    Sra,
    Or,
    And,
    Mul,
    Mulh,
    Mulhsu,
    Mulhu,
    Div,
    Divu,
    Rem,
    Remu,
}

impl RegOp {
    pub const ALL: [RegOp; 18] = [
        Self::Add,
        Self::Sub,
        Self::Sll,
        Self::Slt,
        Self::Sltu,
        Self::Xor,
        Self::Srl,
        Self::Sra,
        Self::Or,
        Self::And,
        Self::Mul,
        Self::Mulh,
        Self::Mulhsu,
        Self::Mulhu,
        Self::Div,
        Self::Divu,
        Self::Rem,
        Self::Remu,
    ];

    /// `(funct7, funct3)`.
    pub const fn functs(self) -> (u32, u32) {
        match self {
            Self::Add => (0x00, 0),
            Self::Sub => (0x20, 0),
            Self::Sll => (0x00, 1),
            Self::Slt => (0x00, 2),
            Self::Sltu => (0x00, 3),
            Self::Xor => (0x00, 4),
            Self::Srl => (0x00, 5),
            Self::Sra => (0x20, 5),
            Self::Or => (0x00, 6),
            Self::And => (0x00, 7),
            Self::Mul => (0x01, 0),
            Self::Mulh => (0x01, 1),
            Self::Mulhsu => (0x01, 2),
            Self::Mulhu => (0x01, 3),
            Self::Div => (0x01, 4),
            Self::Divu => (0x01, 5),
            Self::Rem => (0x01, 6),
            Self::Remu => (0x01, 7),
        }
    }

    pub fn from_functs(funct7: u32, funct3: u32) -> Option<RegOp> {
        Self::ALL.iter().copied().find(|op| op.functs() == (funct7, funct3))
    }

    pub fn mnemonic(self) -> &'static str {
        match self {
            Self::Add => "add",
            Self::Sub => "sub",
            Self::Sll => "sll",
            Self::Slt => "slt",
            Self::Sltu => "sltu",
            Self::Xor => "xor",
            Self::Srl => "srl",
            Self::Sra => "sra",
            Self::Or => "or",
            Self::And => "and",
            Self::Mul => "mul",
            Self::Mulh => "mulh",
            Self::Mulhsu => "mulhsu",
            Self::Mulhu => "mulhu",
            Self::Div => "div",
            Self::Divu => "divu",
            Self::Rem => "rem",
            Self::Remu => "remu",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CsrOp {
    ReadWrite,
    ReadSet,
    ReadClear,
    ReadWriteImm,
    ReadSetImm,
    ReadClearImm,
}

impl CsrOp {
    pub const ALL: [CsrOp; 6] =
        [Self::ReadWrite, Self::ReadSet, Self::ReadClear, Self::ReadWriteImm, Self::ReadSetImm, Self::ReadClearImm];

    pub const fn funct3(self) -> u32 {
        match self {
            Self::ReadWrite => 1,
            Self::ReadSet => 2,
            Self::ReadClear => 3,
            Self::ReadWriteImm => 5,
            Self::ReadSetImm => 6,
            Self::ReadClearImm => 7,
        }
    }

    pub const fn is_imm(self) -> bool {
        self.funct3() >= 5
    }

    pub fn mnemonic(self) -> &'static str {
        match self {
            Self::ReadWrite => "csrrw",
            Self::ReadSet => "csrrs",
            Self::ReadClear => "csrrc",
            Self::ReadWriteImm => "csrrwi",
            Self::ReadSetImm => "csrrsi",
            Self::ReadClearImm => "csrrci",
        }
    }
}

/// A single decoded (or to-be-encoded) RV32IM/Zicsr instruction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Instruction {
    /// `imm` is the 20-bit value placed in bits 31:12.
    Lui { rd: Reg, imm: u32 },
    Auipc { rd: Reg, imm: u32 },
    Jal { rd: Reg, offset: i32 },
    Jalr { rd: Reg, rs1: Reg, offset: i32 },
    Branch { cond: BranchCond, rs1: Reg, rs2: Reg, offset: i32 },
    Load { width: LoadWidth, rd: Reg, rs1: Reg, offset: i32 },
    Store { width: StoreWidth, rs1: Reg, rs2: Reg, offset: i32 },
    /// For shifts `imm` is the shift amount.
    OpImm { op: ImmOp, rd: Reg, rs1: Reg, imm: i32 },
    Op { op: RegOp, rd: Reg, rs1: Reg, rs2: Reg },
    Fence { pred: u8, succ: u8 },
    Ecall,
    Ebreak,
    Mret,
    Wfi,
    /// `src` is `rs1` for register forms and the 5-bit `uimm` for immediate forms.
    Csr { op: CsrOp, rd: Reg, csr: u16, src: u8 },
}

pub mod opcode {
    pub const LOAD: u32 = 0x03;
    pub const MISC_MEM: u32 = 0x0f;
    pub const OP_IMM: u32 = 0x13;
    pub const AUIPC: u32 = 0x17;
    pub const STORE: u32 = 0x23;
    pub const OP: u32 = 0x33;
    pub const LUI: u32 = 0x37;
    pub const BRANCH: u32 = 0x63;
    pub const JALR: u32 = 0x67;
    pub const JAL: u32 = 0x6f;
    pub const SYSTEM: u32 = 0x73;
}

pub const NOP: u32 = 0x0000_0013;
pub const ECALL: u32 = 0x0000_0073;
pub const EBREAK: u32 = 0x0010_0073;
pub const MRET: u32 = 0x3020_0073;
pub const WFI: u32 = 0x1050_0073;

/// Immediate field that does not fit its instruction format.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{format} immediate {value} out of range ({constraint})")]
pub struct RangeError {
    pub format: &'static str,
    pub value: i64,
    pub constraint: &'static str,
}

pub fn check_i_imm(value: i64) -> Result<i32, RangeError> {
    if (-2048..=2047).contains(&value) {
        Ok(value as i32)
    } else {
        Err(RangeError { format: "I-type", value, constraint: "-2048..=2047" })
    }
}

pub fn check_s_imm(value: i64) -> Result<i32, RangeError> {
    if (-2048..=2047).contains(&value) {
        Ok(value as i32)
    } else {
        Err(RangeError { format: "S-type", value, constraint: "-2048..=2047" })
    }
}

pub fn check_b_offset(value: i64) -> Result<i32, RangeError> {
    if (-4096..=4094).contains(&value) && value % 2 == 0 {
        Ok(value as i32)
    } else {
        Err(RangeError { format: "B-type", value, constraint: "even, -4096..=4094" })
    }
}

pub fn check_j_offset(value: i64) -> Result<i32, RangeError> {
    if (-(1 << 20)..(1 << 20)).contains(&value) && value % 2 == 0 {
        Ok(value as i32)
    } else {
        Err(RangeError { format: "J-type", value, constraint: "even, -1MiB..1MiB" })
    }
}

pub fn check_u_imm(value: i64) -> Result<u32, RangeError> {
    if (0..=0xfffff).contains(&value) {
        Ok(value as u32)
    } else {
        Err(RangeError { format: "U-type", value, constraint: "0..=0xfffff" })
    }
}

fn check_shamt(value: i32) -> Result<u32, RangeError> {
    if (0..32).contains(&value) {
        Ok(value as u32)
    } else {
        Err(RangeError { format: "shift", value: value.into(), constraint: "0..=31" })
    }
}

fn check_csr_src(op: CsrOp, src: u8) -> Result<u32, RangeError> {
    if src < 32 {
        Ok(src.into())
    } else {
        let format = if op.is_imm() { "CSR uimm" } else { "CSR rs1" };
        Err(RangeError { format, value: src.into(), constraint: "0..=31" })
    }
}

fn r_type(funct7: u32, rs2: Reg, rs1: Reg, funct3: u32, rd: Reg, opcode: u32) -> u32 {
    (funct7 << 25) | ((rs2.0 as u32) << 20) | ((rs1.0 as u32) << 15) | (funct3 << 12) | ((rd.0 as u32) << 7) | opcode
}

fn i_type(imm: i32, rs1: Reg, funct3: u32, rd: Reg, opcode: u32) -> u32 {
    ((imm as u32 & 0xfff) << 20) | ((rs1.0 as u32) << 15) | (funct3 << 12) | ((rd.0 as u32) << 7) | opcode
}

pub(crate) fn s_fields(imm: i32) -> u32 {
    let imm = imm as u32;
    (((imm >> 5) & 0x7f) << 25) | ((imm & 0x1f) << 7)
}

pub(crate) fn b_fields(offset: i32) -> u32 {
    let imm = offset as u32;
    (((imm >> 12) & 1) << 31) | (((imm >> 5) & 0x3f) << 25) | (((imm >> 1) & 0xf) << 8) | (((imm >> 11) & 1) << 7)
}

pub(crate) fn j_fields(offset: i32) -> u32 {
    let imm = offset as u32;
    (((imm >> 20) & 1) << 31) | (((imm >> 1) & 0x3ff) << 21) | (((imm >> 11) & 1) << 20) | (((imm >> 12) & 0xff) << 12)
}

/// Encodes `instr` into its 32-bit machine word.
pub fn encode(instr: &Instruction) -> Result<u32, RangeError> {
    use Instruction::*;
    Ok(match *instr {
        Lui { rd, imm } => (check_u_imm(imm.into())? << 12) | ((rd.0 as u32) << 7) | opcode::LUI,
        Auipc { rd, imm } => (check_u_imm(imm.into())? << 12) | ((rd.0 as u32) << 7) | opcode::AUIPC,
        Jal { rd, offset } => j_fields(check_j_offset(offset.into())?) | ((rd.0 as u32) << 7) | opcode::JAL,
        Jalr { rd, rs1, offset } => i_type(check_i_imm(offset.into())?, rs1, 0, rd, opcode::JALR),
        Branch { cond, rs1, rs2, offset } => {
            b_fields(check_b_offset(offset.into())?)
                | ((rs2.0 as u32) << 20)
                | ((rs1.0 as u32) << 15)
                | (cond.funct3() << 12)
                | opcode::BRANCH
        }
        Load { width, rd, rs1, offset } => i_type(check_i_imm(offset.into())?, rs1, width.funct3(), rd, opcode::LOAD),
        Store { width, rs1, rs2, offset } => {
            s_fields(check_s_imm(offset.into())?)
                | ((rs2.0 as u32) << 20)
                | ((rs1.0 as u32) << 15)
                | (width.funct3() << 12)
                | opcode::STORE
        }
        OpImm { op, rd, rs1, imm } => match op {
            ImmOp::Slli => r_type(0x00, Reg(check_shamt(imm)? as u8), rs1, 1, rd, opcode::OP_IMM),
            ImmOp::Srli => r_type(0x00, Reg(check_shamt(imm)? as u8), rs1, 5, rd, opcode::OP_IMM),
            ImmOp::Srai => r_type(0x20, Reg(check_shamt(imm)? as u8), rs1, 5, rd, opcode::OP_IMM),
            _ => {
                let funct3 = match op {
                    ImmOp::Addi => 0,
                    ImmOp::Slti => 2,
                    ImmOp::Sltiu => 3,
                    ImmOp::Xori => 4,
                    ImmOp::Ori => 6,
                    ImmOp::Andi => 7,
                    ImmOp::Slli | ImmOp::Srli | ImmOp::Srai => unreachable!(),
                };
                i_type(check_i_imm(imm.into())?, rs1, funct3, rd, opcode::OP_IMM)
            }
        },
        Op { op, rd, rs1, rs2 } => {
            let (funct7, funct3) = op.functs();
            r_type(funct7, rs2, rs1, funct3, rd, opcode::OP)
        }
        Fence { pred, succ } => (((pred & 0xf) as u32) << 24) | (((succ & 0xf) as u32) << 20) | opcode::MISC_MEM,
        Ecall => ECALL,
        Ebreak => EBREAK,
        Mret => MRET,
        Wfi => WFI,
        Csr { op, rd, csr, src } => {
            if csr > 0xfff {
                return Err(RangeError { format: "CSR address", value: csr.into(), constraint: "0..=0xfff" });
            }
            ((csr as u32) << 20) | (check_csr_src(op, src)? << 15) | (op.funct3() << 12) | ((rd.0 as u32) << 7) | opcode::SYSTEM
        }
    })
}

impl fmt::Display for Instruction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Instruction::*;
        match *self {
            Lui { rd, imm } => write!(f, "lui {rd}, {imm:#x}"),
            Auipc { rd, imm } => write!(f, "auipc {rd}, {imm:#x}"),
            Jal { rd, offset } => write!(f, "jal {rd}, {offset}"),
            Jalr { rd, rs1, offset } => write!(f, "jalr {rd}, {offset}({rs1})"),
            Branch { cond, rs1, rs2, offset } => write!(f, "{} {rs1}, {rs2}, {offset}", cond.mnemonic()),
            Load { width, rd, rs1, offset } => write!(f, "{} {rd}, {offset}({rs1})", width.mnemonic()),
            Store { width, rs1, rs2, offset } => write!(f, "{} {rs2}, {offset}({rs1})", width.mnemonic()),
            OpImm { op, rd, rs1, imm } => write!(f, "{} {rd}, {rs1}, {imm}", op.mnemonic()),
            Op { op, rd, rs1, rs2 } => write!(f, "{} {rd}, {rs1}, {rs2}", op.mnemonic()),
            Fence { pred, succ } => write!(f, "fence {pred:#x}, {succ:#x}"),
            Ecall => f.write_str("ecall"),
            Ebreak => f.write_str("ebreak"),
            Mret => f.write_str("mret"),
            Wfi => f.write_str("wfi"),
            Csr { op, rd, csr, src } => {
                let name = csr::name(csr).map(str::to_owned).unwrap_or_else(|| format!("{csr:#x}"));
                if op.is_imm() {
                    write!(f, "{} {rd}, {name}, {src}", op.mnemonic())
                } else {
                    write!(f, "{} {rd}, {name}, x{src}", op.mnemonic())
                }
            }
        }
    }
}

/// Sign-extends the low `bits` bits of `value`.
pub const fn sign_extend(value: u32, bits: u32) -> i32 {
    let shift = 32 - bits;
    ((value << shift) as i32) >> shift
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x(i: u8) -> Reg {
        Reg::new(i).unwrap()
    }

    #[test]
    fn register_names() {
        assert_eq!(Reg::parse("zero"), Some(x(0)));
        assert_eq!(Reg::parse("fp"), Some(x(8)));
        assert_eq!(Reg::parse("s0"), Some(x(8)));
        assert_eq!(Reg::parse("t6"), Some(x(31)));
        assert_eq!(Reg::parse("x31"), Some(x(31)));
        assert_eq!(Reg::parse("x32"), None);
        assert_eq!(Reg::parse("x01"), None);
        assert_eq!(Reg::parse("a8"), None);
    }

    #[test]
    fn immediate_bounds() {
        assert!(check_i_imm(2047).is_ok());
        assert!(check_i_imm(2048).is_err());
        assert!(check_i_imm(-2048).is_ok());
        assert!(check_b_offset(4094).is_ok());
        assert!(check_b_offset(4096).is_err());
        assert!(check_b_offset(-4096).is_ok());
        assert!(check_b_offset(3).is_err());
        assert!(check_j_offset((1 << 20) - 2).is_ok());
        assert!(check_j_offset(1 << 20).is_err());
        assert!(check_u_imm(0x100000).is_err());
    }

    #[test]
    fn shift_amount_range_is_enforced() {
        let bad = Instruction::OpImm { op: ImmOp::Slli, rd: x(1), rs1: x(1), imm: 32 };
        assert!(encode(&bad).is_err());
    }

    #[test]
    fn fixed_system_words() {
        assert_eq!(encode(&Instruction::Mret).unwrap(), 0x3020_0073);
        assert_eq!(encode(&Instruction::Wfi).unwrap(), 0x1050_0073);
        assert_eq!(encode(&Instruction::Ecall).unwrap(), 0x0000_0073);
        assert_eq!(encode(&Instruction::Ebreak).unwrap(), 0x0010_0073);
    }

    #[test]
    fn sign_extension() {
        assert_eq!(sign_extend(0xfff, 12), -1);
        assert_eq!(sign_extend(0x7ff, 12), 2047);
        assert_eq!(sign_extend(0x800, 12), -2048);
    }
}
