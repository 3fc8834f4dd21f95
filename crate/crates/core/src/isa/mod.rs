//! RV32IMC instruction model shared by the core (decode) and the assembler
//! (encode).

mod compressed;

use std::fmt;

use thiserror::Error;

pub use compressed::CInstr;

pub type Reg = u8;

const ABI_NAMES: [&str; 32] = [
    "zero", "ra", "sp", "gp", "tp", "t0", "t1", "t2", "s0", "s1", "a0", "a1", "a2", "a3", "a4",
    "a5", "a6", "a7", "s2", "s3", "s4", "s5", "s6", "s7", "s8", "s9", "s10", "s11", "t3", "t4",
    "t5", "t6",
];

pub fn reg_name(r: Reg) -> &'static str {
    ABI_NAMES[r as usize & 31]
}

/// Parses `x0`..`x31`, ABI names and `fp`.
pub fn parse_reg(s: &str) -> Option<Reg> {
    let s = s.trim();
    if let Some(n) = s.strip_prefix('x') {
        if let Ok(n) = n.parse::<u8>() {
            return (n < 32).then_some(n);
        }
    }
    if s == "fp" {
        return Some(8);
    }
    ABI_NAMES.iter().position(|&n| n == s).map(|p| p as Reg)
}

pub mod csr {
    pub const MSTATUS: u16 = 0x300;
    pub const MIE: u16 = 0x304;
    pub const MTVEC: u16 = 0x305;
    pub const MEPC: u16 = 0x341;
    pub const MCAUSE: u16 = 0x342;
    pub const MIP: u16 = 0x344;
    pub const MCYCLE: u16 = 0xB00;
    pub const MINSTRET: u16 = 0xB02;
    pub const MCYCLEH: u16 = 0xB80;
    pub const MINSTRETH: u16 = 0xB82;
    pub const CYCLE: u16 = 0xC00;
    pub const INSTRET: u16 = 0xC02;
    pub const CYCLEH: u16 = 0xC80;
    pub const INSTRETH: u16 = 0xC82;
    pub const MHARTID: u16 = 0xF14;

    pub const NAMES: [(&str, u16); 15] = [
        ("mstatus", MSTATUS),
        ("mie", MIE),
        ("mtvec", MTVEC),
        ("mepc", MEPC),
        ("mcause", MCAUSE),
        ("mip", MIP),
        ("mcycle", MCYCLE),
        ("minstret", MINSTRET),
        ("mcycleh", MCYCLEH),
        ("minstreth", MINSTRETH),
        ("cycle", CYCLE),
        ("instret", INSTRET),
        ("cycleh", CYCLEH),
        ("instreth", INSTRETH),
        ("mhartid", MHARTID),
    ];

    pub fn name(addr: u16) -> Option<&'static str> {
        NAMES.iter().find(|(_, a)| *a == addr).map(|(n, _)| *n)
    }

    pub fn parse(s: &str) -> Option<u16> {
        NAMES.iter().find(|(n, _)| *n == s).map(|(_, a)| *a)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BranchOp {
    Eq,
    Ne,
    Lt,
    Ge,
    Ltu,
    Geu,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LoadOp {
    Byte,
    Half,
    Word,
    ByteU,
    HalfU,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum StoreOp {
    Byte,
    Half,
    Word,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AluOp {
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
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MulOp {
    Mul,
    Mulh,
    Mulhsu,
    Mulhu,
    Div,
    Divu,
    Rem,
    Remu,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CsrOp {
    Write,
    Set,
    Clear,
}

/// A base (32-bit) instruction. Compressed instructions expand into these.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Instr {
    Lui { rd: Reg, imm: u32 },
    Auipc { rd: Reg, imm: u32 },
    Jal { rd: Reg, offset: i32 },
    Jalr { rd: Reg, rs1: Reg, offset: i32 },
    Branch { op: BranchOp, rs1: Reg, rs2: Reg, offset: i32 },
    Load { op: LoadOp, rd: Reg, rs1: Reg, offset: i32 },
    Store { op: StoreOp, rs1: Reg, rs2: Reg, offset: i32 },
    OpImm { op: AluOp, rd: Reg, rs1: Reg, imm: i32 },
    Op { op: AluOp, rd: Reg, rs1: Reg, rs2: Reg },
    MulDiv { op: MulOp, rd: Reg, rs1: Reg, rs2: Reg },
    /// `src` is a register for the register forms, a 5-bit immediate for the
    /// `*i` forms.
    Csr { op: CsrOp, rd: Reg, src: u8, csr: u16, imm: bool },
    Fence,
    Ecall,
    Ebreak,
    Mret,
    Wfi,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EncodeError {
    #[error("immediate {value} out of range for {what}")]
    ImmediateRange { what: &'static str, value: i64 },
    #[error("misaligned offset {value} for {what}")]
    Misaligned { what: &'static str, value: i64 },
    #[error("register {reg} not allowed for {what}")]
    Register { what: &'static str, reg: Reg },
}

fn check_signed(what: &'static str, value: i32, bits: u32) -> Result<(), EncodeError> {
    let min = -(1i64 << (bits - 1));
    let max = (1i64 << (bits - 1)) - 1;
    if (min..=max).contains(&i64::from(value)) {
        Ok(())
    } else {
        Err(EncodeError::ImmediateRange {
            what,
            value: value.into(),
        })
    }
}

fn check_even(what: &'static str, value: i32) -> Result<(), EncodeError> {
    if value & 1 == 0 {
        Ok(())
    } else {
        Err(EncodeError::Misaligned {
            what,
            value: value.into(),
        })
    }
}

fn sext(value: u32, bits: u32) -> i32 {
    let shift = 32 - bits;
    ((value << shift) as i32) >> shift
}

fn r_type(f7: u32, rs2: Reg, rs1: Reg, f3: u32, rd: Reg, opcode: u32) -> u32 {
    (f7 << 25)
        | (u32::from(rs2) << 20)
        | (u32::from(rs1) << 15)
        | (f3 << 12)
        | (u32::from(rd) << 7)
        | opcode
}

fn i_type(imm: i32, rs1: Reg, f3: u32, rd: Reg, opcode: u32) -> u32 {
    (((imm as u32) & 0xFFF) << 20)
        | (u32::from(rs1) << 15)
        | (f3 << 12)
        | (u32::from(rd) << 7)
        | opcode
}

fn s_type(imm: i32, rs2: Reg, rs1: Reg, f3: u32, opcode: u32) -> u32 {
    let imm = imm as u32;
    (((imm >> 5) & 0x7F) << 25)
        | (u32::from(rs2) << 20)
        | (u32::from(rs1) << 15)
        | (f3 << 12)
        | ((imm & 0x1F) << 7)
        | opcode
}

fn b_type(imm: i32, rs2: Reg, rs1: Reg, f3: u32) -> u32 {
    let imm = imm as u32;
    (((imm >> 12) & 1) << 31)
        | (((imm >> 5) & 0x3F) << 25)
        | (u32::from(rs2) << 20)
        | (u32::from(rs1) << 15)
        | (f3 << 12)
        | (((imm >> 1) & 0xF) << 8)
        | (((imm >> 11) & 1) << 7)
        | 0x63
}

fn j_type(imm: i32, rd: Reg) -> u32 {
    let imm = imm as u32;
    (((imm >> 20) & 1) << 31)
        | (((imm >> 1) & 0x3FF) << 21)
        | (((imm >> 11) & 1) << 20)
        | (((imm >> 12) & 0xFF) << 12)
        | (u32::from(rd) << 7)
        | 0x6F
}

impl BranchOp {
    fn funct3(self) -> u32 {
        match self {
            BranchOp::Eq => 0,
            BranchOp::Ne => 1,
            BranchOp::Lt => 4,
            BranchOp::Ge => 5,
            BranchOp::Ltu => 6,
            BranchOp::Geu => 7,
        }
    }

    pub fn mnemonic(self) -> &'static str {
        match self {
            BranchOp::Eq => "beq",
            BranchOp::Ne => "bne",
            BranchOp::Lt => "blt",
            BranchOp::Ge => "bge",
            BranchOp::Ltu => "bltu",
            BranchOp::Geu => "bgeu",
        }
    }

    pub fn taken(self, a: u32, b: u32) -> bool {
        match self {
            BranchOp::Eq => a == b,
            BranchOp::Ne => a != b,
            BranchOp::Lt => (a as i32) < (b as i32),
            BranchOp::Ge => (a as i32) >= (b as i32),
            BranchOp::Ltu => a < b,
            BranchOp::Geu => a >= b,
        }
    }
}

impl LoadOp {
    fn funct3(self) -> u32 {
        match self {
            LoadOp::Byte => 0,
            LoadOp::Half => 1,
            LoadOp::Word => 2,
            LoadOp::ByteU => 4,
            LoadOp::HalfU => 5,
        }
    }

    pub fn mnemonic(self) -> &'static str {
        match self {
            LoadOp::Byte => "lb",
            LoadOp::Half => "lh",
            LoadOp::Word => "lw",
            LoadOp::ByteU => "lbu",
            LoadOp::HalfU => "lhu",
        }
    }

    pub fn size(self) -> u32 {
        match self {
            LoadOp::Byte | LoadOp::ByteU => 1,
            LoadOp::Half | LoadOp::HalfU => 2,
            LoadOp::Word => 4,
        }
    }

    /// Extracts the loaded value from the aligned word containing `addr`.
    pub fn extract(self, word: u32, addr: u32) -> u32 {
        let shifted = word >> ((addr & 3) * 8);
        match self {
            LoadOp::Byte => shifted as u8 as i8 as i32 as u32,
            LoadOp::ByteU => shifted & 0xFF,
            LoadOp::Half => shifted as u16 as i16 as i32 as u32,
            LoadOp::HalfU => shifted & 0xFFFF,
            LoadOp::Word => word,
        }
    }
}

impl StoreOp {
    fn funct3(self) -> u32 {
        match self {
            StoreOp::Byte => 0,
            StoreOp::Half => 1,
            StoreOp::Word => 2,
        }
    }

    pub fn mnemonic(self) -> &'static str {
        match self {
            StoreOp::Byte => "sb",
            StoreOp::Half => "sh",
            StoreOp::Word => "sw",
        }
    }

    pub fn size(self) -> u32 {
        match self {
            StoreOp::Byte => 1,
            StoreOp::Half => 2,
            StoreOp::Word => 4,
        }
    }

    /// Byte strobes and the write data positioned within the aligned word.
    pub fn lanes(self, addr: u32, value: u32) -> (u8, u32) {
        let shift = (addr & 3) * 8;
        match self {
            StoreOp::Byte => (1 << (addr & 3), (value & 0xFF) << shift),
            StoreOp::Half => (0b11 << (addr & 3), (value & 0xFFFF) << shift),
            StoreOp::Word => (0xF, value),
        }
    }
}

impl AluOp {
    fn funct3(self) -> u32 {
        match self {
            AluOp::Add | AluOp::Sub => 0,
            AluOp::Sll => 1,
            AluOp::Slt => 2,
            AluOp::Sltu => 3,
            AluOp::Xor => 4,
            AluOp::Srl | AluOp::Sra => 5,
            AluOp::Or => 6,
            AluOp::And => 7,
        }
    }

    fn funct7(self) -> u32 {
        match self {
            AluOp::Sub | AluOp::Sra => 0x20,
            _ => 0,
        }
    }

    pub fn mnemonic(self) -> &'static str {
        match self {
            AluOp::Add => "add",
            AluOp::Sub => "sub",
            AluOp::Sll => "sll",
            AluOp::Slt => "slt",
            AluOp::Sltu => "sltu",
            AluOp::Xor => "xor",
            AluOp::Srl => "srl",
            AluOp::Sra => "sra",
            AluOp::Or => "or",
            AluOp::And => "and",
        }
    }

    pub fn is_shift(self) -> bool {
        matches!(self, AluOp::Sll | AluOp::Srl | AluOp::Sra)
    }

    pub fn apply(self, a: u32, b: u32) -> u32 {
        match self {
            AluOp::Add => a.wrapping_add(b),
            AluOp::Sub => a.wrapping_sub(b),
            AluOp::Sll => a << (b & 31),
            AluOp::Slt => u32::from((a as i32) < (b as i32)),
            AluOp::Sltu => u32::from(a < b),
            AluOp::Xor => a ^ b,
            AluOp::Srl => a >> (b & 31),
            AluOp::Sra => ((a as i32) >> (b & 31)) as u32,
            AluOp::Or => a | b,
            AluOp::And => a & b,
        }
    }
}

impl MulOp {
    fn funct3(self) -> u32 {
        match self {
            MulOp::Mul => 0,
            MulOp::Mulh => 1,
            MulOp::Mulhsu => 2,
            MulOp::Mulhu => 3,
            MulOp::Div => 4,
            MulOp::Divu => 5,
            MulOp::Rem => 6,
            MulOp::Remu => 7,
        }
    }

    pub fn mnemonic(self) -> &'static str {
        match self {
            MulOp::Mul => "mul",
            MulOp::Mulh => "mulh",
            MulOp::Mulhsu => "mulhsu",
            MulOp::Mulhu => "mulhu",
            MulOp::Div => "div",
            MulOp::Divu => "divu",
            MulOp::Rem => "rem",
            MulOp::Remu => "remu",
        }
    }

    pub fn is_divide(self) -> bool {
        self.funct3() >= 4
    }

    pub fn apply(self, a: u32, b: u32) -> u32 {
        let (sa, sb) = (a as i32, b as i32);
        match self {
            MulOp::Mul => a.wrapping_mul(b),
            MulOp::Mulh => ((i64::from(sa) * i64::from(sb)) >> 32) as u32,
            MulOp::Mulhsu => ((i64::from(sa) * i64::from(b)) >> 32) as u32,
            MulOp::Mulhu => ((u64::from(a) * u64::from(b)) >> 32) as u32,
            MulOp::Div => {
                if b == 0 {
                    u32::MAX
                } else {
                    sa.wrapping_div(sb) as u32
                }
            }
            MulOp::Divu => a.checked_div(b).unwrap_or(u32::MAX),
            MulOp::Rem => {
                if b == 0 {
                    a
                } else {
                    sa.wrapping_rem(sb) as u32
                }
            }
            MulOp::Remu => a.checked_rem(b).unwrap_or(a),
        }
    }
}

impl CsrOp {
    fn funct3(self, imm: bool) -> u32 {
        let base = match self {
            CsrOp::Write => 1,
            CsrOp::Set => 2,
            CsrOp::Clear => 3,
        };
        if imm {
            base | 4
        } else {
            base
        }
    }

    pub fn mnemonic(self, imm: bool) -> &'static str {
        match (self, imm) {
            (CsrOp::Write, false) => "csrrw",
            (CsrOp::Set, false) => "csrrs",
            (CsrOp::Clear, false) => "csrrc",
            (CsrOp::Write, true) => "csrrwi",
            (CsrOp::Set, true) => "csrrsi",
            (CsrOp::Clear, true) => "csrrci",
        }
    }
}

impl Instr {
    pub fn encode(&self) -> Result<u32, EncodeError> {
        Ok(match *self {
            Instr::Lui { rd, imm } => (imm & 0xFFFF_F000) | (u32::from(rd) << 7) | 0x37,
            Instr::Auipc { rd, imm } => (imm & 0xFFFF_F000) | (u32::from(rd) << 7) | 0x17,
            Instr::Jal { rd, offset } => {
                check_signed("jal offset", offset, 21)?;
                check_even("jal offset", offset)?;
                j_type(offset, rd)
            }
            Instr::Jalr { rd, rs1, offset } => {
                check_signed("jalr offset", offset, 12)?;
                i_type(offset, rs1, 0, rd, 0x67)
            }
            Instr::Branch {
                op,
                rs1,
                rs2,
                offset,
            } => {
                check_signed("branch offset", offset, 13)?;
                check_even("branch offset", offset)?;
                b_type(offset, rs2, rs1, op.funct3())
            }
            Instr::Load {
                op,
                rd,
                rs1,
                offset,
            } => {
                check_signed("load offset", offset, 12)?;
                i_type(offset, rs1, op.funct3(), rd, 0x03)
            }
            Instr::Store {
                op,
                rs1,
                rs2,
                offset,
            } => {
                check_signed("store offset", offset, 12)?;
                s_type(offset, rs2, rs1, op.funct3(), 0x23)
            }
            Instr::OpImm { op, rd, rs1, imm } => {
                if op.is_shift() {
                    if !(0..32).contains(&imm) {
                        return Err(EncodeError::ImmediateRange {
                            what: "shift amount",
                            value: imm.into(),
                        });
                    }
                    r_type(op.funct7(), imm as Reg, rs1, op.funct3(), rd, 0x13)
                } else if op == AluOp::Sub {
                    return Err(EncodeError::ImmediateRange {
                        what: "subi (no such instruction)",
                        value: imm.into(),
                    });
                } else {
                    check_signed("immediate", imm, 12)?;
                    i_type(imm, rs1, op.funct3(), rd, 0x13)
                }
            }
            Instr::Op { op, rd, rs1, rs2 } => {
                r_type(op.funct7(), rs2, rs1, op.funct3(), rd, 0x33)
            }
            Instr::MulDiv { op, rd, rs1, rs2 } => r_type(1, rs2, rs1, op.funct3(), rd, 0x33),
            Instr::Csr {
                op,
                rd,
                src,
                csr,
                imm,
            } => {
                if src > 31 {
                    return Err(EncodeError::ImmediateRange {
                        what: "csr source",
                        value: src.into(),
                    });
                }
                (u32::from(csr & 0xFFF) << 20)
                    | (u32::from(src) << 15)
                    | (op.funct3(imm) << 12)
                    | (u32::from(rd) << 7)
                    | 0x73
            }
            Instr::Fence => 0x0FF0_000F,
            Instr::Ecall => 0x0000_0073,
            Instr::Ebreak => 0x0010_0073,
            Instr::Mret => 0x3020_0073,
            Instr::Wfi => 0x1050_0073,
        })
    }

    /// Decodes a 32-bit instruction; `None` means illegal.
    pub fn decode(raw: u32) -> Option<Instr> {
        let opcode = raw & 0x7F;
        let rd = ((raw >> 7) & 31) as Reg;
        let f3 = (raw >> 12) & 7;
        let rs1 = ((raw >> 15) & 31) as Reg;
        let rs2 = ((raw >> 20) & 31) as Reg;
        let f7 = raw >> 25;
        let imm_i = (raw as i32) >> 20;
        Some(match opcode {
            0x37 => Instr::Lui {
                rd,
                imm: raw & 0xFFFF_F000,
            },
            0x17 => Instr::Auipc {
                rd,
                imm: raw & 0xFFFF_F000,
            },
            0x6F => {
                let imm = ((raw >> 31) << 20)
                    | (((raw >> 21) & 0x3FF) << 1)
                    | (((raw >> 20) & 1) << 11)
                    | (((raw >> 12) & 0xFF) << 12);
                Instr::Jal {
                    rd,
                    offset: sext(imm, 21),
                }
            }
            0x67 if f3 == 0 => Instr::Jalr {
                rd,
                rs1,
                offset: imm_i,
            },
            0x63 => {
                let op = match f3 {
                    0 => BranchOp::Eq,
                    1 => BranchOp::Ne,
                    4 => BranchOp::Lt,
                    5 => BranchOp::Ge,
                    6 => BranchOp::Ltu,
                    7 => BranchOp::Geu,
                    _ => return None,
                };
                let imm = ((raw >> 31) << 12)
                    | (((raw >> 25) & 0x3F) << 5)
                    | (((raw >> 8) & 0xF) << 1)
                    | (((raw >> 7) & 1) << 11);
                Instr::Branch {
                    op,
                    rs1,
                    rs2,
                    offset: sext(imm, 13),
                }
            }
            0x03 => {
                let op = match f3 {
                    0 => LoadOp::Byte,
                    1 => LoadOp::Half,
                    2 => LoadOp::Word,
                    4 => LoadOp::ByteU,
                    5 => LoadOp::HalfU,
                    _ => return None,
                };
                Instr::Load {
                    op,
                    rd,
                    rs1,
                    offset: imm_i,
                }
            }
            0x23 => {
                let op = match f3 {
                    0 => StoreOp::Byte,
                    1 => StoreOp::Half,
                    2 => StoreOp::Word,
                    _ => return None,
                };
                let imm = ((raw >> 25) << 5) | ((raw >> 7) & 0x1F);
                Instr::Store {
                    op,
                    rs1,
                    rs2,
                    offset: sext(imm, 12),
                }
            }
            0x13 => {
                let (op, imm) = match f3 {
                    0 => (AluOp::Add, imm_i),
                    2 => (AluOp::Slt, imm_i),
                    3 => (AluOp::Sltu, imm_i),
                    4 => (AluOp::Xor, imm_i),
                    6 => (AluOp::Or, imm_i),
                    7 => (AluOp::And, imm_i),
                    1 if f7 == 0 => (AluOp::Sll, rs2 as i32),
                    5 if f7 == 0 => (AluOp::Srl, rs2 as i32),
                    5 if f7 == 0x20 => (AluOp::Sra, rs2 as i32),
                    _ => return None,
                };
                Instr::OpImm { op, rd, rs1, imm }
            }
            0x33 if f7 == 1 => {
                let op = match f3 {
                    0 => MulOp::Mul,
                    1 => MulOp::Mulh,
                    2 => MulOp::Mulhsu,
                    3 => MulOp::Mulhu,
                    4 => MulOp::Div,
                    5 => MulOp::Divu,
                    6 => MulOp::Rem,
                    _ => MulOp::Remu,
                };
                Instr::MulDiv { op, rd, rs1, rs2 }
            }
            0x33 => {
                let op = match (f3, f7) {
                    (0, 0) => AluOp::Add,
                    (0, 0x20) => AluOp::Sub,
                    (1, 0) => AluOp::Sll,
                    (2, 0) => AluOp::Slt,
                    (3, 0) => AluOp::Sltu,
                    (4, 0) => AluOp::Xor,
                    (5, 0) => AluOp::Srl,
                    (5, 0x20) => AluOp::Sra,
                    (6, 0) => AluOp::Or,
                    (7, 0) => AluOp::And,
                    _ => return None,
                };
                Instr::Op { op, rd, rs1, rs2 }
            }
            0x0F if f3 == 0 => Instr::Fence,
            0x73 => match f3 {
                0 => match raw {
                    0x0000_0073 => Instr::Ecall,
                    0x0010_0073 => Instr::Ebreak,
                    0x3020_0073 => Instr::Mret,
                    0x1050_0073 => Instr::Wfi,
                    _ => return None,
                },
                4 => return None,
                _ => {
                    let op = match f3 & 3 {
                        1 => CsrOp::Write,
                        2 => CsrOp::Set,
                        _ => CsrOp::Clear,
                    };
                    Instr::Csr {
                        op,
                        rd,
                        src: rs1,
                        csr: (raw >> 20) as u16,
                        imm: f3 & 4 != 0,
                    }
                }
            },
            _ => return None,
        })
    }

    pub fn mnemonic(&self) -> &'static str {
        match *self {
            Instr::Lui { .. } => "lui",
            Instr::Auipc { .. } => "auipc",
            Instr::Jal { .. } => "jal",
            Instr::Jalr { .. } => "jalr",
            Instr::Branch { op, .. } => op.mnemonic(),
            Instr::Load { op, .. } => op.mnemonic(),
            Instr::Store { op, .. } => op.mnemonic(),
            Instr::OpImm { op, .. } => match op {
                AluOp::Add => "addi",
                AluOp::Slt => "slti",
                AluOp::Sltu => "sltiu",
                AluOp::Xor => "xori",
                AluOp::Or => "ori",
                AluOp::And => "andi",
                AluOp::Sll => "slli",
                AluOp::Srl => "srli",
                AluOp::Sra => "srai",
                AluOp::Sub => "subi?",
            },
            Instr::Op { op, .. } => op.mnemonic(),
            Instr::MulDiv { op, .. } => op.mnemonic(),
            Instr::Csr { op, imm, .. } => op.mnemonic(imm),
            Instr::Fence => "fence",
            Instr::Ecall => "ecall",
            Instr::Ebreak => "ebreak",
            Instr::Mret => "mret",
            Instr::Wfi => "wfi",
        }
    }
}

fn csr_label(addr: u16) -> String {
    csr::name(addr).map_or_else(|| format!("{addr:#x}"), str::to_owned)
}

impl fmt::Display for Instr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let m = self.mnemonic();
        match *self {
            Instr::Lui { rd, imm } | Instr::Auipc { rd, imm } => {
                write!(f, "{m} {}, {:#x}", reg_name(rd), imm >> 12)
            }
            Instr::Jal { rd, offset } => write!(f, "{m} {}, {offset}", reg_name(rd)),
            Instr::Jalr { rd, rs1, offset } => {
                write!(f, "{m} {}, {offset}({})", reg_name(rd), reg_name(rs1))
            }
            Instr::Branch {
                rs1, rs2, offset, ..
            } => write!(f, "{m} {}, {}, {offset}", reg_name(rs1), reg_name(rs2)),
            Instr::Load {
                rd, rs1, offset, ..
            } => write!(f, "{m} {}, {offset}({})", reg_name(rd), reg_name(rs1)),
            Instr::Store {
                rs1, rs2, offset, ..
            } => write!(f, "{m} {}, {offset}({})", reg_name(rs2), reg_name(rs1)),
            Instr::OpImm { rd, rs1, imm, .. } => {
                write!(f, "{m} {}, {}, {imm}", reg_name(rd), reg_name(rs1))
            }
            Instr::Op { rd, rs1, rs2, .. } | Instr::MulDiv { rd, rs1, rs2, .. } => write!(
                f,
                "{m} {}, {}, {}",
                reg_name(rd),
                reg_name(rs1),
                reg_name(rs2)
            ),
            Instr::Csr {
                rd, src, csr, imm, ..
            } => {
                if imm {
                    write!(f, "{m} {}, {}, {src}", reg_name(rd), csr_label(csr))
                } else {
                    write!(
                        f,
                        "{m} {}, {}, {}",
                        reg_name(rd),
                        csr_label(csr),
                        reg_name(src)
                    )
                }
            }
            _ => f.write_str(m),
        }
    }
}

/// Instruction as fetched: either form, with its encoded length.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Decoded {
    Full(Instr),
    Compressed(CInstr),
}

impl Decoded {
    /// Decodes the instruction whose low halfword is the low 16 bits of `raw`.
    pub fn decode(raw: u32) -> Option<Decoded> {
        if is_compressed(raw as u16) {
            CInstr::decode(raw as u16).map(Decoded::Compressed)
        } else {
            Instr::decode(raw).map(Decoded::Full)
        }
    }

    pub fn expand(&self) -> Instr {
        match self {
            Decoded::Full(i) => *i,
            Decoded::Compressed(c) => c.expand(),
        }
    }

    pub fn len(&self) -> u32 {
        match self {
            Decoded::Full(_) => 4,
            Decoded::Compressed(_) => 2,
        }
    }

    pub fn mnemonic(&self) -> &'static str {
        match self {
            Decoded::Full(i) => i.mnemonic(),
            Decoded::Compressed(c) => c.mnemonic(),
        }
    }
}

impl fmt::Display for Decoded {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Decoded::Full(i) => i.fmt(f),
            Decoded::Compressed(c) => c.fmt(f),
        }
    }
}

pub fn is_compressed(low_half: u16) -> bool {
    low_half & 3 != 3
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn known_encodings() {
        let addi = Instr::OpImm {
            op: AluOp::Add,
            rd: 1,
            rs1: 0,
            imm: 5,
        };
        assert_eq!(addi.encode().unwrap(), 0x0050_0093);
        let lw = Instr::Load {
            op: LoadOp::Word,
            rd: 10,
            rs1: 2,
            offset: -4,
        };
        assert_eq!(lw.encode().unwrap(), 0xFFC1_2503);
        let sw = Instr::Store {
            op: StoreOp::Word,
            rs1: 2,
            rs2: 10,
            offset: 8,
        };
        assert_eq!(sw.encode().unwrap(), 0x00A1_2423);
        let beq = Instr::Branch {
            op: BranchOp::Eq,
            rs1: 1,
            rs2: 2,
            offset: -8,
        };
        assert_eq!(beq.encode().unwrap(), 0xFE20_8CE3);
        let jal = Instr::Jal { rd: 1, offset: 2048 };
        assert_eq!(jal.encode().unwrap(), 0x0010_00EF);
        let mul = Instr::MulDiv {
            op: MulOp::Mul,
            rd: 3,
            rs1: 1,
            rs2: 2,
        };
        assert_eq!(mul.encode().unwrap(), 0x0220_81B3);
        let csrr = Instr::Csr {
            op: CsrOp::Set,
            rd: 10,
            src: 0,
            csr: csr::MHARTID,
            imm: false,
        };
        assert_eq!(csrr.encode().unwrap(), 0xF140_2573);
    }

    #[test]
    fn range_errors() {
        let bad = Instr::OpImm {
            op: AluOp::Add,
            rd: 1,
            rs1: 0,
            imm: 2048,
        };
        assert!(bad.encode().is_err());
        let odd = Instr::Branch {
            op: BranchOp::Ne,
            rs1: 1,
            rs2: 0,
            offset: 3,
        };
        assert!(odd.encode().is_err());
        let far = Instr::Branch {
            op: BranchOp::Ne,
            rs1: 1,
            rs2: 0,
            offset: 4096,
        };
        assert!(far.encode().is_err());
    }

    #[test]
    fn division_corner_cases() {
        assert_eq!(MulOp::Div.apply(7, 0), u32::MAX);
        assert_eq!(MulOp::Divu.apply(7, 0), u32::MAX);
        assert_eq!(MulOp::Rem.apply(7, 0), 7);
        assert_eq!(MulOp::Remu.apply(7, 0), 7);
        assert_eq!(MulOp::Div.apply(0x8000_0000, u32::MAX), 0x8000_0000);
        assert_eq!(MulOp::Rem.apply(0x8000_0000, u32::MAX), 0);
        assert_eq!(MulOp::Div.apply((-7i32) as u32, 2), (-3i32) as u32);
        assert_eq!(MulOp::Rem.apply((-7i32) as u32, 2), (-1i32) as u32);
        assert_eq!(MulOp::Mulh.apply((-1i32) as u32, (-1i32) as u32), 0);
        assert_eq!(MulOp::Mulhu.apply(u32::MAX, u32::MAX), 0xFFFF_FFFE);
        assert_eq!(MulOp::Mulhsu.apply((-1i32) as u32, u32::MAX), u32::MAX);
    }

    #[test]
    fn reg_parsing() {
        assert_eq!(parse_reg("x0"), Some(0));
        assert_eq!(parse_reg("a0"), Some(10));
        assert_eq!(parse_reg("fp"), Some(8));
        assert_eq!(parse_reg("t6"), Some(31));
        assert_eq!(parse_reg("x32"), None);
        assert_eq!(parse_reg("q1"), None);
    }

    proptest! {
        #[test]
        fn decode_encode_roundtrip(raw: u32) {
            let raw = raw | 3;
            if let Some(i) = Instr::decode(raw) {
                let again = i.encode().unwrap();
                prop_assert_eq!(Instr::decode(again), Some(i));
            }
        }
    }
}
