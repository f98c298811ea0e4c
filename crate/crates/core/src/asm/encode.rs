// Licensed under the Apache-2.0 license

use super::parse::{Expr, Modifier, Operand, Statement};
use super::RelocKind;
use crate::isa::{
    check_b_offset, check_i_imm, check_j_offset, check_s_imm, check_u_imm, csr, encode, BranchCond, CsrOp, ImmOp,
    Instruction, LoadWidth, Reg, RegOp, StoreWidth,
};

/// An encoded word, plus the relocation still needed when the symbolic
/// operand was not resolvable at assembly time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Encoded {
    pub word: u32,
    pub reloc: Option<RelocKind>,
}

/// Where a symbolic immediate ends up.
#[derive(Clone, Copy, PartialEq, Eq)]
enum Slot {
    I,
    S,
    B,
    J,
    U,
}

/// Computes the field value for `e`. `symval` is the resolved target
/// (symbol plus addend) when known, in the same address space as `pc`.
fn field(e: &Expr, slot: Slot, pc: u32, symval: Option<i64>) -> Result<(i64, Option<RelocKind>), String> {
    let Some(name) = &e.symbol else {
        if e.modifier != Modifier::None {
            return Err("relocation modifier needs a symbol".to_string());
        }
        return Ok((e.addend, None));
    };
    let kind = match (slot, e.modifier) {
        (Slot::B, Modifier::None) => RelocKind::Branch,
        (Slot::J, Modifier::None) => RelocKind::Jal,
        (Slot::U, Modifier::PcrelHi) => RelocKind::Hi20,
        (Slot::I, Modifier::PcrelLo) => RelocKind::Lo12I,
        (Slot::S, Modifier::PcrelLo) => RelocKind::Lo12S,
        _ => return Err(format!("symbol `{name}` cannot be used here")),
    };
    let Some(target) = symval else {
        return Ok((0, Some(kind)));
    };
    let pc = pc as i64;
    let value = match kind {
        RelocKind::Branch | RelocKind::Jal => target - pc,
        RelocKind::Hi20 => hi20(target - pc)? as i64,
        RelocKind::Lo12I | RelocKind::Lo12S => lo12(target - (pc - 4)) as i64,
        RelocKind::Abs32 => unreachable!(),
    };
    Ok((value, None))
}

/// Upper immediate of a pc-relative pair for displacement `delta`.
pub fn hi20(delta: i64) -> Result<u32, String> {
    if !(i32::MIN as i64..=i32::MAX as i64).contains(&delta) {
        return Err(format!("pc-relative displacement {delta:#x} out of range"));
    }
    Ok((((delta + 0x800) >> 12) as u32) & 0xfffff)
}

/// Lower immediate of a pc-relative pair for displacement `delta`,
/// consistent with [`hi20`].
pub fn lo12(delta: i64) -> i32 {
    (delta - (((delta + 0x800) >> 12) << 12)) as i32
}

fn want_reg(op: Option<&Operand>, what: &str) -> Result<Reg, String> {
    match op {
        Some(Operand::Reg(r)) => Ok(*r),
        Some(other) => Err(format!("expected register for {what}, got `{other}`")),
        None => Err(format!("missing {what}")),
    }
}

fn want_expr<'a>(op: Option<&'a Operand>, what: &str) -> Result<&'a Expr, String> {
    match op {
        Some(Operand::Expr(e)) => Ok(e),
        Some(other) => Err(format!("expected {what}, got `{other}`")),
        None => Err(format!("missing {what}")),
    }
}

fn want_mem(op: Option<&Operand>) -> Result<(&Expr, Reg), String> {
    match op {
        Some(Operand::Mem { offset, base }) => Ok((offset, *base)),
        Some(other) => Err(format!("expected `offset(reg)`, got `{other}`")),
        None => Err("missing memory operand".to_string()),
    }
}

fn want_csr(op: Option<&Operand>) -> Result<u16, String> {
    let e = want_expr(op, "CSR")?;
    match &e.symbol {
        Some(name) if e.addend == 0 => csr::by_name(name).ok_or_else(|| format!("unknown CSR `{name}`")),
        Some(_) => Err(format!("bad CSR `{e}`")),
        None if (0..=0xfff).contains(&e.addend) => Ok(e.addend as u16),
        None => Err(format!("CSR number {} out of range", e.addend)),
    }
}

fn arity(s: &Statement, n: usize) -> Result<(), String> {
    if s.operands.len() == n {
        Ok(())
    } else {
        Err(format!("`{}` takes {n} operands, got {}", s.mnemonic, s.operands.len()))
    }
}

fn fence_set(e: &Expr) -> Result<u8, String> {
    let Some(name) = &e.symbol else {
        return Err(format!("bad fence set `{e}`"));
    };
    let mut bits = 0u8;
    for c in name.chars() {
        bits |= match c {
            'i' => 8,
            'o' => 4,
            'r' => 2,
            'w' => 1,
            _ => return Err(format!("bad fence set `{name}`")),
        };
    }
    Ok(bits)
}

/// Lowers a real (already expanded) instruction statement to an
/// [`Instruction`], returning the relocation kind it still needs.
pub fn lower(s: &Statement, pc: u32, symval: Option<i64>) -> Result<(Instruction, Option<RelocKind>), String> {
    let m = s.mnemonic.as_str();
    let ops = &s.operands;
    let op = |i: usize| ops.get(i);

    if let Some(op3) = RegOp::ALL.into_iter().find(|o| o.mnemonic() == m) {
        arity(s, 3)?;
        let (rd, rs1, rs2) = (want_reg(op(0), "rd")?, want_reg(op(1), "rs1")?, want_reg(op(2), "rs2")?);
        return Ok((Instruction::Op { op: op3, rd, rs1, rs2 }, None));
    }
    if let Some(iop) = ImmOp::ALL.into_iter().find(|o| o.mnemonic() == m) {
        arity(s, 3)?;
        let (rd, rs1) = (want_reg(op(0), "rd")?, want_reg(op(1), "rs1")?);
        let e = want_expr(op(2), "immediate")?;
        let (v, reloc) = field(e, Slot::I, pc, symval)?;
        if reloc.is_some() && iop != ImmOp::Addi {
            return Err(format!("symbol cannot be used with `{m}`"));
        }
        let imm = if iop.is_shift() {
            if !(0..32).contains(&v) {
                return Err(format!("shift amount {v} out of range 0..=31"));
            }
            v as i32
        } else {
            check_i_imm(v).map_err(|e| e.to_string())?
        };
        return Ok((Instruction::OpImm { op: iop, rd, rs1, imm }, reloc));
    }
    if let Some(width) = LoadWidth::ALL.into_iter().find(|w| w.mnemonic() == m) {
        arity(s, 2)?;
        let rd = want_reg(op(0), "rd")?;
        let (e, rs1) = want_mem(op(1))?;
        let (v, reloc) = field(e, Slot::I, pc, symval)?;
        let offset = check_i_imm(v).map_err(|e| e.to_string())?;
        return Ok((Instruction::Load { width, rd, rs1, offset }, reloc));
    }
    if let Some(width) = StoreWidth::ALL.into_iter().find(|w| w.mnemonic() == m) {
        arity(s, 2)?;
        let rs2 = want_reg(op(0), "rs2")?;
        let (e, rs1) = want_mem(op(1))?;
        let (v, reloc) = field(e, Slot::S, pc, symval)?;
        let offset = check_s_imm(v).map_err(|e| e.to_string())?;
        return Ok((Instruction::Store { width, rs1, rs2, offset }, reloc));
    }
    if let Some(cond) = BranchCond::ALL.into_iter().find(|c| c.mnemonic() == m) {
        arity(s, 3)?;
        let (rs1, rs2) = (want_reg(op(0), "rs1")?, want_reg(op(1), "rs2")?);
        let (v, reloc) = field(want_expr(op(2), "branch target")?, Slot::B, pc, symval)?;
        let offset = check_b_offset(v).map_err(|e| e.to_string())?;
        return Ok((Instruction::Branch { cond, rs1, rs2, offset }, reloc));
    }
    if let Some(cop) = CsrOp::ALL.into_iter().find(|o| o.mnemonic() == m) {
        arity(s, 3)?;
        let rd = want_reg(op(0), "rd")?;
        let csr = want_csr(op(1))?;
        let src = if cop.is_imm() {
            let v = want_expr(op(2), "5-bit immediate")?.as_constant().ok_or("CSR immediate must be a constant")?;
            if !(0..32).contains(&v) {
                return Err(format!("CSR immediate {v} out of range 0..=31"));
            }
            v as u8
        } else {
            want_reg(op(2), "rs1")?.index() as u8
        };
        return Ok((Instruction::Csr { op: cop, rd, csr, src }, None));
    }
    let instr = match m {
        "lui" | "auipc" => {
            arity(s, 2)?;
            let rd = want_reg(op(0), "rd")?;
            let e = want_expr(op(1), "upper immediate")?;
            if m == "lui" && e.symbol.is_some() {
                return Err("symbol cannot be used with `lui`".to_string());
            }
            let (v, reloc) = field(e, Slot::U, pc, symval)?;
            let imm = check_u_imm(v).map_err(|e| e.to_string())?;
            let i = if m == "lui" { Instruction::Lui { rd, imm } } else { Instruction::Auipc { rd, imm } };
            return Ok((i, reloc));
        }
        "jal" => {
            arity(s, 2)?;
            let rd = want_reg(op(0), "rd")?;
            let (v, reloc) = field(want_expr(op(1), "jump target")?, Slot::J, pc, symval)?;
            let offset = check_j_offset(v).map_err(|e| e.to_string())?;
            return Ok((Instruction::Jal { rd, offset }, reloc));
        }
        "jalr" => {
            let rd = want_reg(op(0), "rd")?;
            let (e, rs1) = match ops.len() {
                2 => want_mem(op(1))?,
                3 => (want_expr(op(2), "offset")?, want_reg(op(1), "rs1")?),
                n => return Err(format!("`jalr` takes 2 or 3 operands, got {n}")),
            };
            let (v, reloc) = field(e, Slot::I, pc, symval)?;
            let offset = check_i_imm(v).map_err(|e| e.to_string())?;
            return Ok((Instruction::Jalr { rd, rs1, offset }, reloc));
        }
        "fence" => match ops.len() {
            0 => Instruction::Fence { pred: 0xf, succ: 0xf },
            2 => Instruction::Fence { pred: fence_set(want_expr(op(0), "fence set")?)?, succ: fence_set(want_expr(op(1), "fence set")?)? },
            n => return Err(format!("`fence` takes 0 or 2 operands, got {n}")),
        },
        "ecall" | "ebreak" | "mret" | "wfi" => {
            arity(s, 0)?;
            match m {
                "ecall" => Instruction::Ecall,
                "ebreak" => Instruction::Ebreak,
                "mret" => Instruction::Mret,
                _ => Instruction::Wfi,
            }
        }
        _ if super::PSEUDOS.contains(&m) => return Err(format!("bad operands for `{m}`")),
        _ => return Err(format!("unknown mnemonic `{m}`")),
    };
    Ok((instr, None))
}

/// Encodes one real instruction at `pc`. When the instruction has a
/// symbolic operand, `symval` is its resolved value (symbol plus addend)
/// or `None`, in which case the field is left zero and the needed
/// relocation kind is returned.
pub fn encode_instruction(s: &Statement, pc: u32, symval: Option<i64>) -> Result<Encoded, String> {
    let (instr, reloc) = lower(s, pc, symval)?;
    let word = encode(&instr).map_err(|e| e.to_string())?;
    Ok(Encoded { word, reloc })
}
