// Licensed under the Apache-2.0 license

use thiserror::Error;

use crate::isa::{
    opcode, sign_extend, BranchCond, CsrOp, ImmOp, Instruction, LoadWidth, Reg, RegOp, StoreWidth, EBREAK, ECALL, MRET,
    WFI,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("illegal instruction {0:#010x}")]
pub struct IllegalInstruction(pub u32);

/// Decodes one 32-bit instruction word. Anything outside RV32IM + Zicsr +
/// `mret`/`wfi` is illegal, including every compressed encoding.
pub fn decode(word: u32) -> Result<Instruction, IllegalInstruction> {
    let illegal = Err(IllegalInstruction(word));
    let rd = Reg::from_bits(word >> 7);
    let rs1 = Reg::from_bits(word >> 15);
    let rs2 = Reg::from_bits(word >> 20);
    let funct3 = (word >> 12) & 7;
    let funct7 = word >> 25;
    let i_imm = sign_extend(word >> 20, 12);
    let s_imm = sign_extend(((word >> 25) << 5) | ((word >> 7) & 0x1f), 12);
    let b_imm = sign_extend(
        (((word >> 31) & 1) << 12) | (((word >> 7) & 1) << 11) | (((word >> 25) & 0x3f) << 5) | (((word >> 8) & 0xf) << 1),
        13,
    );
    let j_imm = sign_extend(
        (((word >> 31) & 1) << 20) | (((word >> 12) & 0xff) << 12) | (((word >> 20) & 1) << 11) | (((word >> 21) & 0x3ff) << 1),
        21,
    );

    Ok(match word & 0x7f {
        opcode::LUI => Instruction::Lui { rd, imm: word >> 12 },
        opcode::AUIPC => Instruction::Auipc { rd, imm: word >> 12 },
        opcode::JAL => Instruction::Jal { rd, offset: j_imm },
        opcode::JALR if funct3 == 0 => Instruction::Jalr { rd, rs1, offset: i_imm },
        opcode::BRANCH => {
            let Some(cond) = BranchCond::ALL.into_iter().find(|c| c.funct3() == funct3) else {
                return illegal;
            };
            Instruction::Branch { cond, rs1, rs2, offset: b_imm }
        }
        opcode::LOAD => {
            let Some(width) = LoadWidth::ALL.into_iter().find(|w| w.funct3() == funct3) else {
                return illegal;
            };
            Instruction::Load { width, rd, rs1, offset: i_imm }
        }
        opcode::STORE => {
            let Some(width) = StoreWidth::ALL.into_iter().find(|w| w.funct3() == funct3) else {
                return illegal;
            };
            Instruction::Store { width, rs1, rs2, offset: s_imm }
        }
        opcode::OP_IMM => {
            let shamt = ((word >> 20) & 0x1f) as i32;
            let op = match (funct3, funct7) {
                (0, _) => ImmOp::Addi,
                (2, _) => ImmOp::Slti,
                (3, _) => ImmOp::Sltiu,
                (4, _) => ImmOp::Xori,
                (6, _) => ImmOp::Ori,
                (7, _) => ImmOp::Andi,
                (1, 0x00) => ImmOp::Slli,
                (5, 0x00) => ImmOp::Srli,
                (5, 0x20) => ImmOp::Srai,
                _ => return illegal,
            };
            let imm = if op.is_shift() { shamt } else { i_imm };
            Instruction::OpImm { op, rd, rs1, imm }
        }
        opcode::OP => match RegOp::from_functs(funct7, funct3) {
            Some(op) => Instruction::Op { op, rd, rs1, rs2 },
            None => return illegal,
        },
        opcode::MISC_MEM if funct3 == 0 => Instruction::Fence { pred: ((word >> 24) & 0xf) as u8, succ: ((word >> 20) & 0xf) as u8 },
        opcode::SYSTEM => match word {
            ECALL => Instruction::Ecall,
            EBREAK => Instruction::Ebreak,
            MRET => Instruction::Mret,
            WFI => Instruction::Wfi,
            _ => {
                let Some(op) = CsrOp::ALL.into_iter().find(|o| o.funct3() == funct3) else {
                    return illegal;
                };
                Instruction::Csr { op, rd, csr: (word >> 20) as u16, src: ((word >> 15) & 0x1f) as u8 }
            }
        },
        _ => return illegal,
    })
}
