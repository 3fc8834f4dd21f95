//! RV32C (integer subset).

use std::fmt;

use super::{reg_name, sext, AluOp, BranchOp, EncodeError, Instr, LoadOp, Reg, StoreOp};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CInstr {
    Addi4spn { rd: Reg, imm: u32 },
    Lw { rd: Reg, rs1: Reg, offset: u32 },
    Sw { rs1: Reg, rs2: Reg, offset: u32 },
    Nop,
    Addi { rd: Reg, imm: i32 },
    Jal { offset: i32 },
    Li { rd: Reg, imm: i32 },
    Addi16sp { imm: i32 },
    /// `imm` is the 6-bit sign-extended upper immediate (bits 17:12).
    Lui { rd: Reg, imm: i32 },
    Srli { rd: Reg, shamt: u32 },
    Srai { rd: Reg, shamt: u32 },
    Andi { rd: Reg, imm: i32 },
    Sub { rd: Reg, rs2: Reg },
    Xor { rd: Reg, rs2: Reg },
    Or { rd: Reg, rs2: Reg },
    And { rd: Reg, rs2: Reg },
    J { offset: i32 },
    Beqz { rs1: Reg, offset: i32 },
    Bnez { rs1: Reg, offset: i32 },
    Slli { rd: Reg, shamt: u32 },
    Lwsp { rd: Reg, offset: u32 },
    Jr { rs1: Reg },
    Mv { rd: Reg, rs2: Reg },
    Ebreak,
    Jalr { rs1: Reg },
    Add { rd: Reg, rs2: Reg },
    Swsp { rs2: Reg, offset: u32 },
}

fn bit(v: u32, b: u32) -> u32 {
    (v >> b) & 1
}

fn bits(v: u32, hi: u32, lo: u32) -> u32 {
    (v >> lo) & ((1 << (hi - lo + 1)) - 1)
}

/// Register number for the 3-bit `x8..x15` fields.
fn creg(field: u32) -> Reg {
    (field + 8) as Reg
}

fn cfield(what: &'static str, r: Reg) -> Result<u32, EncodeError> {
    if (8..16).contains(&r) {
        Ok(u32::from(r) - 8)
    } else {
        Err(EncodeError::Register { what, reg: r })
    }
}

fn nonzero(what: &'static str, r: Reg) -> Result<u32, EncodeError> {
    if r == 0 {
        Err(EncodeError::Register { what, reg: r })
    } else {
        Ok(u32::from(r))
    }
}

fn range(what: &'static str, v: i64, min: i64, max: i64, align: i64) -> Result<(), EncodeError> {
    if v < min || v > max {
        return Err(EncodeError::ImmediateRange { what, value: v });
    }
    if v % align != 0 {
        return Err(EncodeError::Misaligned { what, value: v });
    }
    Ok(())
}

fn cj_imm(offset: i32) -> u32 {
    let o = offset as u32;
    (bit(o, 11) << 12)
        | (bit(o, 4) << 11)
        | (bits(o, 9, 8) << 9)
        | (bit(o, 10) << 8)
        | (bit(o, 6) << 7)
        | (bit(o, 7) << 6)
        | (bits(o, 3, 1) << 3)
        | (bit(o, 5) << 2)
}

fn cj_offset(raw: u32) -> i32 {
    let imm = (bit(raw, 12) << 11)
        | (bit(raw, 11) << 4)
        | (bits(raw, 10, 9) << 8)
        | (bit(raw, 8) << 10)
        | (bit(raw, 7) << 6)
        | (bit(raw, 6) << 7)
        | (bits(raw, 5, 3) << 1)
        | (bit(raw, 2) << 5);
    sext(imm, 12)
}

fn cb_imm(offset: i32) -> u32 {
    let o = offset as u32;
    (bit(o, 8) << 12)
        | (bits(o, 4, 3) << 10)
        | (bits(o, 7, 6) << 5)
        | (bits(o, 2, 1) << 3)
        | (bit(o, 5) << 2)
}

fn cb_offset(raw: u32) -> i32 {
    let imm = (bit(raw, 12) << 8)
        | (bits(raw, 11, 10) << 3)
        | (bits(raw, 6, 5) << 6)
        | (bits(raw, 4, 3) << 1)
        | (bit(raw, 2) << 5);
    sext(imm, 9)
}

fn ci_imm6(imm: i32) -> u32 {
    let i = imm as u32;
    (bit(i, 5) << 12) | (bits(i, 4, 0) << 2)
}

fn ci_value(raw: u32) -> i32 {
    sext((bit(raw, 12) << 5) | bits(raw, 6, 2), 6)
}

impl CInstr {
    pub fn encode(&self) -> Result<u16, EncodeError> {
        let raw: u32 = match *self {
            CInstr::Addi4spn { rd, imm } => {
                range("c.addi4spn immediate", imm.into(), 4, 1020, 4)?;
                (bits(imm, 5, 4) << 11)
                    | (bits(imm, 9, 6) << 7)
                    | (bit(imm, 2) << 6)
                    | (bit(imm, 3) << 5)
                    | (cfield("c.addi4spn rd", rd)? << 2)
            }
            CInstr::Lw { rd, rs1, offset } => {
                range("c.lw offset", offset.into(), 0, 124, 4)?;
                (0b010 << 13)
                    | (bits(offset, 5, 3) << 10)
                    | (cfield("c.lw rs1", rs1)? << 7)
                    | (bit(offset, 2) << 6)
                    | (bit(offset, 6) << 5)
                    | (cfield("c.lw rd", rd)? << 2)
            }
            CInstr::Sw { rs1, rs2, offset } => {
                range("c.sw offset", offset.into(), 0, 124, 4)?;
                (0b110 << 13)
                    | (bits(offset, 5, 3) << 10)
                    | (cfield("c.sw rs1", rs1)? << 7)
                    | (bit(offset, 2) << 6)
                    | (bit(offset, 6) << 5)
                    | (cfield("c.sw rs2", rs2)? << 2)
            }
            CInstr::Nop => 0b01,
            CInstr::Addi { rd, imm } => {
                range("c.addi immediate", imm.into(), -32, 31, 1)?;
                if imm == 0 {
                    return Err(EncodeError::ImmediateRange {
                        what: "c.addi immediate",
                        value: 0,
                    });
                }
                (nonzero("c.addi rd", rd)? << 7) | ci_imm6(imm) | 0b01
            }
            CInstr::Jal { offset } => {
                range("c.jal offset", offset.into(), -2048, 2046, 2)?;
                (0b001 << 13) | cj_imm(offset) | 0b01
            }
            CInstr::Li { rd, imm } => {
                range("c.li immediate", imm.into(), -32, 31, 1)?;
                (0b010 << 13) | (nonzero("c.li rd", rd)? << 7) | ci_imm6(imm) | 0b01
            }
            CInstr::Addi16sp { imm } => {
                range("c.addi16sp immediate", imm.into(), -512, 496, 16)?;
                if imm == 0 {
                    return Err(EncodeError::ImmediateRange {
                        what: "c.addi16sp immediate",
                        value: 0,
                    });
                }
                let i = imm as u32;
                (0b011 << 13)
                    | (bit(i, 9) << 12)
                    | (2 << 7)
                    | (bit(i, 4) << 6)
                    | (bit(i, 6) << 5)
                    | (bits(i, 8, 7) << 3)
                    | (bit(i, 5) << 2)
                    | 0b01
            }
            CInstr::Lui { rd, imm } => {
                range("c.lui immediate", imm.into(), -32, 31, 1)?;
                if imm == 0 || rd == 2 {
                    return Err(EncodeError::ImmediateRange {
                        what: "c.lui immediate",
                        value: imm.into(),
                    });
                }
                (0b011 << 13) | (nonzero("c.lui rd", rd)? << 7) | ci_imm6(imm) | 0b01
            }
            CInstr::Srli { rd, shamt } | CInstr::Srai { rd, shamt } => {
                range("c.srli/c.srai shamt", shamt.into(), 1, 31, 1)?;
                let f2 = if matches!(self, CInstr::Srai { .. }) { 1 } else { 0 };
                (0b100 << 13)
                    | (f2 << 10)
                    | (cfield("c.srli/c.srai rd", rd)? << 7)
                    | (shamt << 2)
                    | 0b01
            }
            CInstr::Andi { rd, imm } => {
                range("c.andi immediate", imm.into(), -32, 31, 1)?;
                (0b100 << 13) | (0b10 << 10) | (cfield("c.andi rd", rd)? << 7) | ci_imm6(imm) | 0b01
            }
            CInstr::Sub { rd, rs2 }
            | CInstr::Xor { rd, rs2 }
            | CInstr::Or { rd, rs2 }
            | CInstr::And { rd, rs2 } => {
                let f = match self {
                    CInstr::Sub { .. } => 0,
                    CInstr::Xor { .. } => 1,
                    CInstr::Or { .. } => 2,
                    _ => 3,
                };
                (0b100 << 13)
                    | (0b11 << 10)
                    | (cfield("c.alu rd", rd)? << 7)
                    | (f << 5)
                    | (cfield("c.alu rs2", rs2)? << 2)
                    | 0b01
            }
            CInstr::J { offset } => {
                range("c.j offset", offset.into(), -2048, 2046, 2)?;
                (0b101 << 13) | cj_imm(offset) | 0b01
            }
            CInstr::Beqz { rs1, offset } | CInstr::Bnez { rs1, offset } => {
                range("c.beqz/c.bnez offset", offset.into(), -256, 254, 2)?;
                let f3 = if matches!(self, CInstr::Beqz { .. }) {
                    0b110
                } else {
                    0b111
                };
                (f3 << 13) | (cfield("c.beqz/c.bnez rs1", rs1)? << 7) | cb_imm(offset) | 0b01
            }
            CInstr::Slli { rd, shamt } => {
                range("c.slli shamt", shamt.into(), 1, 31, 1)?;
                (nonzero("c.slli rd", rd)? << 7) | (shamt << 2) | 0b10
            }
            CInstr::Lwsp { rd, offset } => {
                range("c.lwsp offset", offset.into(), 0, 252, 4)?;
                (0b010 << 13)
                    | (bit(offset, 5) << 12)
                    | (nonzero("c.lwsp rd", rd)? << 7)
                    | (bits(offset, 4, 2) << 4)
                    | (bits(offset, 7, 6) << 2)
                    | 0b10
            }
            CInstr::Jr { rs1 } => (0b100 << 13) | (nonzero("c.jr rs1", rs1)? << 7) | 0b10,
            CInstr::Mv { rd, rs2 } => {
                (0b100 << 13)
                    | (nonzero("c.mv rd", rd)? << 7)
                    | (nonzero("c.mv rs2", rs2)? << 2)
                    | 0b10
            }
            CInstr::Ebreak => 0x9002,
            CInstr::Jalr { rs1 } => {
                (0b100 << 13) | (1 << 12) | (nonzero("c.jalr rs1", rs1)? << 7) | 0b10
            }
            CInstr::Add { rd, rs2 } => {
                (0b100 << 13)
                    | (1 << 12)
                    | (nonzero("c.add rd", rd)? << 7)
                    | (nonzero("c.add rs2", rs2)? << 2)
                    | 0b10
            }
            CInstr::Swsp { rs2, offset } => {
                range("c.swsp offset", offset.into(), 0, 252, 4)?;
                (0b110 << 13)
                    | (bits(offset, 5, 2) << 9)
                    | (bits(offset, 7, 6) << 7)
                    | (u32::from(rs2) << 2)
                    | 0b10
            }
        };
        Ok(raw as u16)
    }

    /// Decodes a 16-bit instruction; `None` means illegal or reserved.
    pub fn decode(half: u16) -> Option<CInstr> {
        let raw = u32::from(half);
        let f3 = bits(raw, 15, 13);
        let rd_full = bits(raw, 11, 7) as Reg;
        let rs2_full = bits(raw, 6, 2) as Reg;
        let rd_c = creg(bits(raw, 4, 2));
        let rs1_c = creg(bits(raw, 9, 7));
        Some(match (raw & 3, f3) {
            (0, 0b000) => {
                let imm = (bits(raw, 12, 11) << 4)
                    | (bits(raw, 10, 7) << 6)
                    | (bit(raw, 6) << 2)
                    | (bit(raw, 5) << 3);
                if imm == 0 {
                    return None;
                }
                CInstr::Addi4spn { rd: rd_c, imm }
            }
            (0, 0b010) | (0, 0b110) => {
                let offset = (bits(raw, 12, 10) << 3) | (bit(raw, 6) << 2) | (bit(raw, 5) << 6);
                if f3 == 0b010 {
                    CInstr::Lw {
                        rd: rd_c,
                        rs1: rs1_c,
                        offset,
                    }
                } else {
                    CInstr::Sw {
                        rs1: rs1_c,
                        rs2: rd_c,
                        offset,
                    }
                }
            }
            (1, 0b000) => {
                let imm = ci_value(raw);
                match (rd_full, imm) {
                    (0, 0) => CInstr::Nop,
                    // Hint encodings are not supported.
                    (0, _) | (_, 0) => return None,
                    (rd, imm) => CInstr::Addi { rd, imm },
                }
            }
            (1, 0b001) => CInstr::Jal {
                offset: cj_offset(raw),
            },
            (1, 0b010) => {
                if rd_full == 0 {
                    return None;
                }
                CInstr::Li {
                    rd: rd_full,
                    imm: ci_value(raw),
                }
            }
            (1, 0b011) => {
                if rd_full == 2 {
                    let imm = (bit(raw, 12) << 9)
                        | (bit(raw, 6) << 4)
                        | (bit(raw, 5) << 6)
                        | (bits(raw, 4, 3) << 7)
                        | (bit(raw, 2) << 5);
                    let imm = sext(imm, 10);
                    if imm == 0 {
                        return None;
                    }
                    CInstr::Addi16sp { imm }
                } else {
                    let imm = ci_value(raw);
                    if imm == 0 || rd_full == 0 {
                        return None;
                    }
                    CInstr::Lui { rd: rd_full, imm }
                }
            }
            (1, 0b100) => {
                let rd = rs1_c;
                match bits(raw, 11, 10) {
                    0b00 | 0b01 => {
                        let shamt = bits(raw, 6, 2);
                        if bit(raw, 12) != 0 || shamt == 0 {
                            return None;
                        }
                        if bits(raw, 11, 10) == 0 {
                            CInstr::Srli { rd, shamt }
                        } else {
                            CInstr::Srai { rd, shamt }
                        }
                    }
                    0b10 => CInstr::Andi {
                        rd,
                        imm: ci_value(raw),
                    },
                    _ => {
                        if bit(raw, 12) != 0 {
                            return None;
                        }
                        let rs2 = rd_c;
                        match bits(raw, 6, 5) {
                            0 => CInstr::Sub { rd, rs2 },
                            1 => CInstr::Xor { rd, rs2 },
                            2 => CInstr::Or { rd, rs2 },
                            _ => CInstr::And { rd, rs2 },
                        }
                    }
                }
            }
            (1, 0b101) => CInstr::J {
                offset: cj_offset(raw),
            },
            (1, 0b110) => CInstr::Beqz {
                rs1: rs1_c,
                offset: cb_offset(raw),
            },
            (1, 0b111) => CInstr::Bnez {
                rs1: rs1_c,
                offset: cb_offset(raw),
            },
            (2, 0b000) => {
                let shamt = bits(raw, 6, 2);
                if bit(raw, 12) != 0 || shamt == 0 || rd_full == 0 {
                    return None;
                }
                CInstr::Slli { rd: rd_full, shamt }
            }
            (2, 0b010) => {
                if rd_full == 0 {
                    return None;
                }
                let offset = (bit(raw, 12) << 5) | (bits(raw, 6, 4) << 2) | (bits(raw, 3, 2) << 6);
                CInstr::Lwsp {
                    rd: rd_full,
                    offset,
                }
            }
            (2, 0b100) => match (bit(raw, 12), rd_full, rs2_full) {
                (0, 0, _) => return None,
                (0, rs1, 0) => CInstr::Jr { rs1 },
                (0, rd, rs2) => CInstr::Mv { rd, rs2 },
                (1, 0, 0) => CInstr::Ebreak,
                (1, rs1, 0) => CInstr::Jalr { rs1 },
                (1, 0, _) => return None,
                (_, rd, rs2) => CInstr::Add { rd, rs2 },
            },
            (2, 0b110) => {
                let offset = (bits(raw, 12, 9) << 2) | (bits(raw, 8, 7) << 6);
                CInstr::Swsp {
                    rs2: rs2_full,
                    offset,
                }
            }
            _ => return None,
        })
    }

    pub fn expand(&self) -> Instr {
        match *self {
            CInstr::Addi4spn { rd, imm } => Instr::OpImm {
                op: AluOp::Add,
                rd,
                rs1: 2,
                imm: imm as i32,
            },
            CInstr::Lw { rd, rs1, offset } => Instr::Load {
                op: LoadOp::Word,
                rd,
                rs1,
                offset: offset as i32,
            },
            CInstr::Sw { rs1, rs2, offset } => Instr::Store {
                op: StoreOp::Word,
                rs1,
                rs2,
                offset: offset as i32,
            },
            CInstr::Nop => Instr::OpImm {
                op: AluOp::Add,
                rd: 0,
                rs1: 0,
                imm: 0,
            },
            CInstr::Addi { rd, imm } => Instr::OpImm {
                op: AluOp::Add,
                rd,
                rs1: rd,
                imm,
            },
            CInstr::Jal { offset } => Instr::Jal { rd: 1, offset },
            CInstr::Li { rd, imm } => Instr::OpImm {
                op: AluOp::Add,
                rd,
                rs1: 0,
                imm,
            },
            CInstr::Addi16sp { imm } => Instr::OpImm {
                op: AluOp::Add,
                rd: 2,
                rs1: 2,
                imm,
            },
            CInstr::Lui { rd, imm } => Instr::Lui {
                rd,
                imm: (imm << 12) as u32,
            },
            CInstr::Srli { rd, shamt } => Instr::OpImm {
                op: AluOp::Srl,
                rd,
                rs1: rd,
                imm: shamt as i32,
            },
            CInstr::Srai { rd, shamt } => Instr::OpImm {
                op: AluOp::Sra,
                rd,
                rs1: rd,
                imm: shamt as i32,
            },
            CInstr::Andi { rd, imm } => Instr::OpImm {
                op: AluOp::And,
                rd,
                rs1: rd,
                imm,
            },
            CInstr::Sub { rd, rs2 } => alu(AluOp::Sub, rd, rd, rs2),
            CInstr::Xor { rd, rs2 } => alu(AluOp::Xor, rd, rd, rs2),
            CInstr::Or { rd, rs2 } => alu(AluOp::Or, rd, rd, rs2),
            CInstr::And { rd, rs2 } => alu(AluOp::And, rd, rd, rs2),
            CInstr::J { offset } => Instr::Jal { rd: 0, offset },
            CInstr::Beqz { rs1, offset } => Instr::Branch {
                op: BranchOp::Eq,
                rs1,
                rs2: 0,
                offset,
            },
            CInstr::Bnez { rs1, offset } => Instr::Branch {
                op: BranchOp::Ne,
                rs1,
                rs2: 0,
                offset,
            },
            CInstr::Slli { rd, shamt } => Instr::OpImm {
                op: AluOp::Sll,
                rd,
                rs1: rd,
                imm: shamt as i32,
            },
            CInstr::Lwsp { rd, offset } => Instr::Load {
                op: LoadOp::Word,
                rd,
                rs1: 2,
                offset: offset as i32,
            },
            CInstr::Jr { rs1 } => Instr::Jalr {
                rd: 0,
                rs1,
                offset: 0,
            },
            CInstr::Mv { rd, rs2 } => alu(AluOp::Add, rd, 0, rs2),
            CInstr::Ebreak => Instr::Ebreak,
            CInstr::Jalr { rs1 } => Instr::Jalr {
                rd: 1,
                rs1,
                offset: 0,
            },
            CInstr::Add { rd, rs2 } => alu(AluOp::Add, rd, rd, rs2),
            CInstr::Swsp { rs2, offset } => Instr::Store {
                op: StoreOp::Word,
                rs1: 2,
                rs2,
                offset: offset as i32,
            },
        }
    }

    pub fn mnemonic(&self) -> &'static str {
        match self {
            CInstr::Addi4spn { .. } => "c.addi4spn",
            CInstr::Lw { .. } => "c.lw",
            CInstr::Sw { .. } => "c.sw",
            CInstr::Nop => "c.nop",
            CInstr::Addi { .. } => "c.addi",
            CInstr::Jal { .. } => "c.jal",
            CInstr::Li { .. } => "c.li",
            CInstr::Addi16sp { .. } => "c.addi16sp",
            CInstr::Lui { .. } => "c.lui",
            CInstr::Srli { .. } => "c.srli",
            CInstr::Srai { .. } => "c.srai",
            CInstr::Andi { .. } => "c.andi",
            CInstr::Sub { .. } => "c.sub",
            CInstr::Xor { .. } => "c.xor",
            CInstr::Or { .. } => "c.or",
            CInstr::And { .. } => "c.and",
            CInstr::J { .. } => "c.j",
            CInstr::Beqz { .. } => "c.beqz",
            CInstr::Bnez { .. } => "c.bnez",
            CInstr::Slli { .. } => "c.slli",
            CInstr::Lwsp { .. } => "c.lwsp",
            CInstr::Jr { .. } => "c.jr",
            CInstr::Mv { .. } => "c.mv",
            CInstr::Ebreak => "c.ebreak",
            CInstr::Jalr { .. } => "c.jalr",
            CInstr::Add { .. } => "c.add",
            CInstr::Swsp { .. } => "c.swsp",
        }
    }
}

fn alu(op: AluOp, rd: Reg, rs1: Reg, rs2: Reg) -> Instr {
    Instr::Op { op, rd, rs1, rs2 }
}

impl fmt::Display for CInstr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let m = self.mnemonic();
        match *self {
            CInstr::Addi4spn { rd, imm } => write!(f, "{m} {}, sp, {imm}", reg_name(rd)),
            CInstr::Lw { rd, rs1, offset } => {
                write!(f, "{m} {}, {offset}({})", reg_name(rd), reg_name(rs1))
            }
            CInstr::Sw { rs1, rs2, offset } => {
                write!(f, "{m} {}, {offset}({})", reg_name(rs2), reg_name(rs1))
            }
            CInstr::Addi { rd, imm } | CInstr::Li { rd, imm } | CInstr::Andi { rd, imm } => {
                write!(f, "{m} {}, {imm}", reg_name(rd))
            }
            CInstr::Lui { rd, imm } => write!(f, "{m} {}, {:#x}", reg_name(rd), (imm as u32) & 0xFFFFF),
            CInstr::Jal { offset } | CInstr::J { offset } => write!(f, "{m} {offset}"),
            CInstr::Addi16sp { imm } => write!(f, "{m} sp, {imm}"),
            CInstr::Srli { rd, shamt } | CInstr::Srai { rd, shamt } | CInstr::Slli { rd, shamt } => {
                write!(f, "{m} {}, {shamt}", reg_name(rd))
            }
            CInstr::Sub { rd, rs2 }
            | CInstr::Xor { rd, rs2 }
            | CInstr::Or { rd, rs2 }
            | CInstr::And { rd, rs2 }
            | CInstr::Mv { rd, rs2 }
            | CInstr::Add { rd, rs2 } => write!(f, "{m} {}, {}", reg_name(rd), reg_name(rs2)),
            CInstr::Beqz { rs1, offset } | CInstr::Bnez { rs1, offset } => {
                write!(f, "{m} {}, {offset}", reg_name(rs1))
            }
            CInstr::Lwsp { rd, offset } => write!(f, "{m} {}, {offset}(sp)", reg_name(rd)),
            CInstr::Swsp { rs2, offset } => write!(f, "{m} {}, {offset}(sp)", reg_name(rs2)),
            CInstr::Jr { rs1 } | CInstr::Jalr { rs1 } => write!(f, "{m} {}", reg_name(rs1)),
            CInstr::Nop | CInstr::Ebreak => f.write_str(m),
        }
    }
}
