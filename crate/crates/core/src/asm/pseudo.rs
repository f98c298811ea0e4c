// Licensed under the Apache-2.0 license

use super::parse::{Expr, Modifier, Operand, Statement};
use crate::isa::{sign_extend, Reg};

fn reg(r: Reg) -> Operand {
    Operand::Reg(r)
}

fn imm(v: i64) -> Operand {
    Operand::Expr(Expr::constant(v))
}

fn zero() -> Operand {
    reg(Reg::ZERO)
}

fn stmt(m: &str, ops: Vec<Operand>) -> Statement {
    Statement::new(m, ops)
}

fn hi(e: &Expr) -> Operand {
    Operand::Expr(e.clone().with_modifier(Modifier::PcrelHi))
}

fn lo_mem(e: &Expr, base: Reg) -> Operand {
    Operand::Mem { offset: e.clone().with_modifier(Modifier::PcrelLo), base }
}

/// Splits a 32-bit value into `lui`/`addi` immediates such that
/// `(hi << 12) + sign_extend(lo)` wraps to `value`.
pub fn split_hi_lo(value: u32) -> (u32, i32) {
    let lo = sign_extend(value & 0xfff, 12);
    let hi = value.wrapping_sub(lo as u32) >> 12;
    (hi, lo)
}

/// Expands a pseudo-instruction into real instructions. Statements that
/// are not pseudo-instructions, or whose operands do not fit any pseudo
/// form, come back unchanged for the encoder to accept or reject.
pub fn expand_pseudo(s: &Statement) -> Vec<Statement> {
    use Operand::{Expr as E, Reg as R};
    let ops = s.operands.as_slice();
    let one = |m: &str, ops: Vec<Operand>| vec![stmt(m, ops)];
    match (s.mnemonic.as_str(), ops) {
        ("nop", []) => one("addi", vec![zero(), zero(), imm(0)]),
        ("li", [R(rd), E(e)]) => match e.as_constant() {
            Some(v) if (-2048..=2047).contains(&v) => one("addi", vec![reg(*rd), zero(), imm(v)]),
            Some(v) if (i32::MIN as i64..=u32::MAX as i64).contains(&v) => {
                let (h, l) = split_hi_lo(v as u32);
                let mut out = vec![stmt("lui", vec![reg(*rd), imm(h as i64)])];
                if l != 0 {
                    out.push(stmt("addi", vec![reg(*rd), reg(*rd), imm(l as i64)]));
                }
                out
            }
            _ => vec![s.clone()],
        },
        ("la", [R(rd), E(e)]) if e.symbol.is_some() => {
            vec![stmt("auipc", vec![reg(*rd), hi(e)]), stmt("addi", vec![reg(*rd), reg(*rd), E(e.clone().with_modifier(Modifier::PcrelLo))])]
        }
        ("mv", [R(rd), R(rs)]) => one("addi", vec![reg(*rd), reg(*rs), imm(0)]),
        ("not", [R(rd), R(rs)]) => one("xori", vec![reg(*rd), reg(*rs), imm(-1)]),
        ("neg", [R(rd), R(rs)]) => one("sub", vec![reg(*rd), zero(), reg(*rs)]),
        ("seqz", [R(rd), R(rs)]) => one("sltiu", vec![reg(*rd), reg(*rs), imm(1)]),
        ("snez", [R(rd), R(rs)]) => one("sltu", vec![reg(*rd), zero(), reg(*rs)]),
        ("j", [E(t)]) => one("jal", vec![zero(), E(t.clone())]),
        ("jal", [E(t)]) => one("jal", vec![reg(Reg::RA), E(t.clone())]),
        ("jr", [R(rs)]) => one("jalr", vec![zero(), Operand::Mem { offset: Expr::constant(0), base: *rs }]),
        ("jalr", [R(rs)]) => one("jalr", vec![reg(Reg::RA), Operand::Mem { offset: Expr::constant(0), base: *rs }]),
        ("ret", []) => one("jalr", vec![zero(), Operand::Mem { offset: Expr::constant(0), base: Reg::RA }]),
        ("call", [E(t)]) if t.symbol.is_some() => {
            vec![stmt("auipc", vec![reg(Reg::RA), hi(t)]), stmt("jalr", vec![reg(Reg::RA), lo_mem(t, Reg::RA)])]
        }
        ("tail", [E(t)]) if t.symbol.is_some() => {
            let t1 = Reg::new(6).unwrap();
            vec![stmt("auipc", vec![reg(t1), hi(t)]), stmt("jalr", vec![zero(), lo_mem(t, t1)])]
        }
        ("csrr", [R(rd), E(c)]) => one("csrrs", vec![reg(*rd), E(c.clone()), zero()]),
        ("csrw", [E(c), R(rs)]) => one("csrrw", vec![zero(), E(c.clone()), reg(*rs)]),
        ("csrs", [E(c), R(rs)]) => one("csrrs", vec![zero(), E(c.clone()), reg(*rs)]),
        ("csrc", [E(c), R(rs)]) => one("csrrc", vec![zero(), E(c.clone()), reg(*rs)]),
        ("csrwi", [E(c), E(u)]) => one("csrrwi", vec![zero(), E(c.clone()), E(u.clone())]),
        ("csrsi", [E(c), E(u)]) => one("csrrsi", vec![zero(), E(c.clone()), E(u.clone())]),
        ("csrci", [E(c), E(u)]) => one("csrrci", vec![zero(), E(c.clone()), E(u.clone())]),
        ("beqz", [R(rs), E(t)]) => one("beq", vec![reg(*rs), zero(), E(t.clone())]),
        ("bnez", [R(rs), E(t)]) => one("bne", vec![reg(*rs), zero(), E(t.clone())]),
        ("bltz", [R(rs), E(t)]) => one("blt", vec![reg(*rs), zero(), E(t.clone())]),
        ("bgez", [R(rs), E(t)]) => one("bge", vec![reg(*rs), zero(), E(t.clone())]),
        ("blez", [R(rs), E(t)]) => one("bge", vec![zero(), reg(*rs), E(t.clone())]),
        ("bgtz", [R(rs), E(t)]) => one("blt", vec![zero(), reg(*rs), E(t.clone())]),
        ("bgt", [R(a), R(b), E(t)]) => one("blt", vec![reg(*b), reg(*a), E(t.clone())]),
        ("ble", [R(a), R(b), E(t)]) => one("bge", vec![reg(*b), reg(*a), E(t.clone())]),
        ("bgtu", [R(a), R(b), E(t)]) => one("bltu", vec![reg(*b), reg(*a), E(t.clone())]),
        ("bleu", [R(a), R(b), E(t)]) => one("bgeu", vec![reg(*b), reg(*a), E(t.clone())]),
        ("lb" | "lh" | "lw" | "lbu" | "lhu", [R(rd), E(sym)]) if sym.symbol.is_some() => {
            vec![stmt("auipc", vec![reg(*rd), hi(sym)]), stmt(&s.mnemonic, vec![reg(*rd), lo_mem(sym, *rd)])]
        }
        ("sb" | "sh" | "sw", [R(rs), E(sym), R(rt)]) if sym.symbol.is_some() => {
            vec![stmt("auipc", vec![reg(*rt), hi(sym)]), stmt(&s.mnemonic, vec![reg(*rs), lo_mem(sym, *rt)])]
        }
        _ => vec![s.clone()],
    }
}
