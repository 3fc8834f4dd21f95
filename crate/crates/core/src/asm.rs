//! Two-pass text assembler for RV32IMC.
//!
//! Syntax: one statement per line, `#` comments, `label:` prefixes, ABI or
//! `xN` register names, `offset(reg)` memory operands. Branch and jump
//! targets are labels (resolved PC-relative) or literal byte offsets.
//! Directives: `.equ name, expr`, `.word expr, ...`, `.align n`.
//! Pseudo-instructions expand to a size fixed in the first pass.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::isa::{
    csr, parse_reg, AluOp, BranchOp, CInstr, CsrOp, EncodeError, Instr, LoadOp, MulOp, Reg,
    StoreOp,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AsmError {
    #[error("line {line}: unknown mnemonic `{mnemonic}`")]
    UnknownMnemonic { line: usize, mnemonic: String },
    #[error("line {line}: {source}")]
    Encode { line: usize, source: EncodeError },
    #[error("line {line}: unresolved label `{label}`")]
    UnresolvedLabel { line: usize, label: String },
    #[error("line {line}: duplicate label `{label}`")]
    DuplicateLabel { line: usize, label: String },
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("entry label `{0}` not defined")]
    MissingEntry(String),
}

/// A block of initialized words placed after the code.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataBlock {
    pub label: String,
    pub words: Vec<u32>,
}

/// Source program: code text, data blocks and an entry label.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Program {
    pub name: String,
    pub source: String,
    pub data: Vec<DataBlock>,
    pub entry: String,
}

impl Program {
    pub fn new(name: &str, source: impl Into<String>) -> Self {
        Program {
            name: name.to_owned(),
            source: source.into(),
            data: Vec::new(),
            entry: "_start".to_owned(),
        }
    }

    pub fn with_data(mut self, label: &str, words: Vec<u32>) -> Self {
        self.data.push(DataBlock {
            label: label.to_owned(),
            words,
        });
        self
    }
}

/// Assembled little-endian image.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Image {
    pub base: u32,
    pub bytes: Vec<u8>,
    pub entry: u32,
    pub symbols: BTreeMap<String, u32>,
}

impl Image {
    pub fn symbol(&self, name: &str) -> Option<u32> {
        self.symbols.get(name).copied()
    }

    pub fn end(&self) -> u32 {
        self.base + self.bytes.len() as u32
    }

    /// Words starting at `addr` (which must lie inside the image).
    pub fn words_at(&self, addr: u32, count: usize) -> Vec<u32> {
        let off = (addr - self.base) as usize;
        self.bytes[off..off + 4 * count]
            .chunks(4)
            .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect()
    }
}

pub fn assemble(program: &Program, base: u32) -> Result<Image, AsmError> {
    let mut asm = Assembler::parse(&program.source)?;
    for block in &program.data {
        asm.stmts.push(Stmt {
            line: 0,
            labels: Vec::new(),
            body: Body::Align(2),
        });
        asm.stmts.push(Stmt {
            line: 0,
            labels: vec![block.label.clone()],
            body: Body::Words(block.words.iter().map(|&w| Expr::Num(w.into())).collect()),
        });
    }
    let mut image = asm.run(base)?;
    image.entry = image
        .symbol(&program.entry)
        .ok_or_else(|| AsmError::MissingEntry(program.entry.clone()))?;
    Ok(image)
}

/// Assembles bare source; the entry is `base`.
pub fn assemble_source(source: &str, base: u32) -> Result<Image, AsmError> {
    let mut image = Assembler::parse(source)?.run(base)?;
    image.entry = base;
    Ok(image)
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Expr {
    Num(i64),
    Sym(String),
    Sum(Vec<(bool, Expr)>),
}

#[derive(Clone, Debug)]
enum Body {
    None,
    Instr { mnemonic: String, operands: Vec<String> },
    Words(Vec<Expr>),
    Align(u32),
    Equ(String, Expr),
}

#[derive(Clone, Debug)]
struct Stmt {
    line: usize,
    labels: Vec<String>,
    body: Body,
}

struct Assembler {
    stmts: Vec<Stmt>,
}

fn syntax(line: usize, message: impl Into<String>) -> AsmError {
    AsmError::Syntax {
        line,
        message: message.into(),
    }
}

fn split_operands(s: &str) -> Vec<String> {
    if s.trim().is_empty() {
        return Vec::new();
    }
    s.split(',').map(|o| o.trim().to_owned()).collect()
}

fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    chars
        .next()
        .is_some_and(|c| c.is_ascii_alphabetic() || c == '_' || c == '.')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.')
}

fn parse_number(s: &str) -> Option<i64> {
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s),
    };
    let v = if let Some(h) = body.strip_prefix("0x").or_else(|| body.strip_prefix("0X")) {
        i64::from_str_radix(&h.replace('_', ""), 16).ok()?
    } else if let Some(b) = body.strip_prefix("0b") {
        i64::from_str_radix(&b.replace('_', ""), 2).ok()?
    } else {
        body.replace('_', "").parse::<i64>().ok()?
    };
    Some(if neg { -v } else { v })
}

fn parse_expr(s: &str, line: usize) -> Result<Expr, AsmError> {
    let s = s.trim();
    if s.is_empty() {
        return Err(syntax(line, "missing operand"));
    }
    if let Some(n) = parse_number(s) {
        return Ok(Expr::Num(n));
    }
    let mut terms = Vec::new();
    let (mut negative, mut start) = match s.as_bytes()[0] {
        b'-' => (true, 1),
        b'+' => (false, 1),
        _ => (false, 0),
    };
    let bytes = s.as_bytes();
    for i in start + 1..=bytes.len() {
        if i == bytes.len() || bytes[i] == b'+' || bytes[i] == b'-' {
            let term = s[start..i].trim();
            let e = if let Some(n) = parse_number(term) {
                Expr::Num(n)
            } else if is_ident(term) {
                Expr::Sym(term.to_owned())
            } else {
                return Err(syntax(line, format!("bad expression `{s}`")));
            };
            terms.push((negative, e));
            if i < bytes.len() {
                negative = bytes[i] == b'-';
                start = i + 1;
            }
        }
    }
    Ok(if terms.len() == 1 && !terms[0].0 {
        terms.pop().unwrap().1
    } else {
        Expr::Sum(terms)
    })
}

impl Assembler {
    fn parse(source: &str) -> Result<Self, AsmError> {
        let mut stmts = Vec::new();
        for (i, raw) in source.lines().enumerate() {
            let line = i + 1;
            let mut text = raw.split('#').next().unwrap_or("").trim();
            let mut labels = Vec::new();
            while let Some(colon) = text.find(':') {
                let name = text[..colon].trim();
                if !is_ident(name) {
                    break;
                }
                labels.push(name.to_owned());
                text = text[colon + 1..].trim();
            }
            let body = if text.is_empty() {
                Body::None
            } else {
                let (head, rest) = match text.find(char::is_whitespace) {
                    Some(p) => (&text[..p], text[p..].trim()),
                    None => (text, ""),
                };
                let head = head.to_ascii_lowercase();
                match head.as_str() {
                    ".word" => Body::Words(
                        split_operands(rest)
                            .iter()
                            .map(|o| parse_expr(o, line))
                            .collect::<Result<_, _>>()?,
                    ),
                    ".align" => Body::Align(
                        parse_number(rest)
                            .filter(|n| (0..=12).contains(n))
                            .ok_or_else(|| syntax(line, "bad .align"))? as u32,
                    ),
                    ".equ" | ".set" => {
                        let ops = split_operands(rest);
                        if ops.len() != 2 || !is_ident(&ops[0]) {
                            return Err(syntax(line, "expected .equ name, value"));
                        }
                        Body::Equ(ops[0].clone(), parse_expr(&ops[1], line)?)
                    }
                    _ => Body::Instr {
                        mnemonic: head,
                        operands: split_operands(rest),
                    },
                }
            };
            stmts.push(Stmt { line, labels, body });
        }
        Ok(Assembler { stmts })
    }

    fn run(&self, base: u32) -> Result<Image, AsmError> {
        // Pass 1: sizes and symbol addresses.
        let mut symbols: BTreeMap<String, i64> = BTreeMap::new();
        let mut sizes = Vec::with_capacity(self.stmts.len());
        let mut pc = base;
        for st in &self.stmts {
            for l in &st.labels {
                if symbols.insert(l.clone(), i64::from(pc)).is_some() {
                    return Err(AsmError::DuplicateLabel {
                        line: st.line,
                        label: l.clone(),
                    });
                }
            }
            let size = match &st.body {
                Body::None => 0,
                Body::Words(w) => 4 * w.len() as u32,
                Body::Align(n) => align_pad(pc, *n),
                Body::Equ(name, e) => {
                    let v = eval(e, &symbols, st.line)?;
                    if symbols.insert(name.clone(), v).is_some() {
                        return Err(AsmError::DuplicateLabel {
                            line: st.line,
                            label: name.clone(),
                        });
                    }
                    0
                }
                Body::Instr { mnemonic, operands } => {
                    size_of(mnemonic, operands, &symbols, st.line)?
                }
            };
            sizes.push(size);
            pc += size;
        }

        // Pass 2: encode.
        let mut bytes = Vec::with_capacity((pc - base) as usize);
        let mut pc = base;
        for (st, &size) in self.stmts.iter().zip(&sizes) {
            match &st.body {
                Body::None | Body::Equ(..) => {}
                Body::Words(ws) => {
                    for w in ws {
                        let v = eval(w, &symbols, st.line)?;
                        bytes.extend_from_slice(&(v as u32).to_le_bytes());
                    }
                }
                Body::Align(_) => {
                    for _ in 0..size / 2 {
                        bytes.extend_from_slice(&0x0001u16.to_le_bytes());
                    }
                }
                Body::Instr { mnemonic, operands } => {
                    let ctx = Ctx {
                        line: st.line,
                        pc,
                        symbols: &symbols,
                    };
                    let out = ctx.expand(mnemonic, operands, size)?;
                    let start = bytes.len();
                    for item in out {
                        match item {
                            Emit::Full(i) => bytes.extend_from_slice(
                                &i.encode()
                                    .map_err(|source| AsmError::Encode {
                                        line: st.line,
                                        source,
                                    })?
                                    .to_le_bytes(),
                            ),
                            Emit::Compressed(c) => bytes.extend_from_slice(
                                &c.encode()
                                    .map_err(|source| AsmError::Encode {
                                        line: st.line,
                                        source,
                                    })?
                                    .to_le_bytes(),
                            ),
                        }
                    }
                    debug_assert_eq!(bytes.len() - start, size as usize, "{mnemonic}");
                }
            }
            pc += size;
        }

        Ok(Image {
            base,
            bytes,
            entry: base,
            symbols: symbols
                .into_iter()
                .map(|(k, v)| (k, v as u32))
                .collect(),
        })
    }
}

fn align_pad(pc: u32, n: u32) -> u32 {
    let a = 1u32 << n.max(1);
    (a - pc % a) % a
}

fn eval(e: &Expr, symbols: &BTreeMap<String, i64>, line: usize) -> Result<i64, AsmError> {
    match e {
        Expr::Num(n) => Ok(*n),
        Expr::Sym(s) => symbols
            .get(s)
            .copied()
            .ok_or_else(|| AsmError::UnresolvedLabel {
                line,
                label: s.clone(),
            }),
        Expr::Sum(terms) => terms.iter().try_fold(0i64, |acc, (neg, t)| {
            let v = eval(t, symbols, line)?;
            Ok(if *neg { acc - v } else { acc + v })
        }),
    }
}

fn li_fits_addi(v: i64) -> bool {
    (-2048..=2047).contains(&(v as i32 as i64)) && (v as i32 as i64 == v || v as u32 as i64 == v)
}

fn size_of(
    mnemonic: &str,
    operands: &[String],
    symbols: &BTreeMap<String, i64>,
    line: usize,
) -> Result<u32, AsmError> {
    if mnemonic.starts_with("c.") {
        return if C_MNEMONICS.contains(&mnemonic) {
            Ok(2)
        } else {
            Err(AsmError::UnknownMnemonic {
                line,
                mnemonic: mnemonic.to_owned(),
            })
        };
    }
    match mnemonic {
        "la" => Ok(8),
        "li" => {
            let value = operands
                .get(1)
                .map(|o| parse_expr(o, line))
                .transpose()?
                .and_then(|e| eval(&e, symbols, line).ok());
            Ok(match value {
                Some(v) if li_fits_addi(v) => 4,
                _ => 8,
            })
        }
        m if BASE_MNEMONICS.contains(&m) || PSEUDO_MNEMONICS.contains(&m) => Ok(4),
        _ => Err(AsmError::UnknownMnemonic {
            line,
            mnemonic: mnemonic.to_owned(),
        }),
    }
}

const C_MNEMONICS: &[&str] = &[
    "c.addi4spn",
    "c.lw",
    "c.sw",
    "c.nop",
    "c.addi",
    "c.jal",
    "c.li",
    "c.addi16sp",
    "c.lui",
    "c.srli",
    "c.srai",
    "c.andi",
    "c.sub",
    "c.xor",
    "c.or",
    "c.and",
    "c.j",
    "c.beqz",
    "c.bnez",
    "c.slli",
    "c.lwsp",
    "c.jr",
    "c.mv",
    "c.ebreak",
    "c.jalr",
    "c.add",
    "c.swsp",
];

const BASE_MNEMONICS: &[&str] = &[
    "lui", "auipc", "jal", "jalr", "beq", "bne", "blt", "bge", "bltu", "bgeu", "lb", "lh", "lw",
    "lbu", "lhu", "sb", "sh", "sw", "addi", "slti", "sltiu", "xori", "ori", "andi", "slli",
    "srli", "srai", "add", "sub", "sll", "slt", "sltu", "xor", "srl", "sra", "or", "and", "mul",
    "mulh", "mulhsu", "mulhu", "div", "divu", "rem", "remu", "csrrw", "csrrs", "csrrc", "csrrwi",
    "csrrsi", "csrrci", "fence", "ecall", "ebreak", "mret", "wfi",
];

const PSEUDO_MNEMONICS: &[&str] = &[
    "nop", "mv", "not", "neg", "seqz", "snez", "j", "jr", "ret", "call", "beqz", "bnez", "blez",
    "bgez", "bltz", "bgtz", "bgt", "ble", "bgtu", "bleu", "csrr", "csrw", "csrs", "csrc", "csrwi",
    "csrsi", "csrci",
];

enum Emit {
    Full(Instr),
    Compressed(CInstr),
}

struct Ctx<'a> {
    line: usize,
    pc: u32,
    symbols: &'a BTreeMap<String, i64>,
}

impl Ctx<'_> {
    fn err(&self, message: impl Into<String>) -> AsmError {
        syntax(self.line, message)
    }

    fn arity(&self, ops: &[String], n: usize) -> Result<(), AsmError> {
        if ops.len() == n {
            Ok(())
        } else {
            Err(self.err(format!("expected {n} operands, found {}", ops.len())))
        }
    }

    fn reg(&self, s: &str) -> Result<Reg, AsmError> {
        parse_reg(s).ok_or_else(|| self.err(format!("bad register `{s}`")))
    }

    fn value(&self, s: &str) -> Result<i64, AsmError> {
        eval(&parse_expr(s, self.line)?, self.symbols, self.line)
    }

    fn imm(&self, s: &str) -> Result<i32, AsmError> {
        let v = self.value(s)?;
        if v < i64::from(i32::MIN) || v > i64::from(u32::MAX) {
            return Err(AsmError::Encode {
                line: self.line,
                source: EncodeError::ImmediateRange {
                    what: "immediate",
                    value: v,
                },
            });
        }
        Ok(v as i32)
    }

    fn uimm(&self, s: &str) -> Result<u32, AsmError> {
        let v = self.value(s)?;
        if v < 0 || v > i64::from(u32::MAX) {
            return Err(AsmError::Encode {
                line: self.line,
                source: EncodeError::ImmediateRange {
                    what: "unsigned immediate",
                    value: v,
                },
            });
        }
        Ok(v as u32)
    }

    /// PC-relative offset of a label, or a literal offset.
    fn target(&self, s: &str) -> Result<i32, AsmError> {
        match parse_expr(s, self.line)? {
            Expr::Num(n) => Ok(n as i32),
            e => Ok((eval(&e, self.symbols, self.line)? - i64::from(self.pc)) as i32),
        }
    }

    fn mem(&self, s: &str) -> Result<(i32, Reg), AsmError> {
        let open = s.find('(').ok_or_else(|| self.err(format!("expected offset(reg), got `{s}`")))?;
        let close = s.rfind(')').ok_or_else(|| self.err("missing `)`"))?;
        let reg = self.reg(&s[open + 1..close])?;
        let off = s[..open].trim();
        let off = if off.is_empty() { 0 } else { self.imm(off)? };
        Ok((off, reg))
    }

    fn csr(&self, s: &str) -> Result<u16, AsmError> {
        if let Some(a) = csr::parse(s) {
            return Ok(a);
        }
        match parse_number(s) {
            Some(n) if (0..4096).contains(&n) => Ok(n as u16),
            _ => Err(self.err(format!("unknown CSR `{s}`"))),
        }
    }

    fn expand(&self, m: &str, ops: &[String], size: u32) -> Result<Vec<Emit>, AsmError> {
        if m.starts_with("c.") {
            return Ok(vec![Emit::Compressed(self.compressed(m, ops)?)]);
        }
        let full = |i: Instr| Ok(vec![Emit::Full(i)]);
        match m {
            "li" => {
                self.arity(ops, 2)?;
                let rd = self.reg(&ops[0])?;
                let v = self.imm(&ops[1])?;
                Ok(load_immediate(rd, v, size == 8)
                    .into_iter()
                    .map(Emit::Full)
                    .collect())
            }
            "la" => {
                self.arity(ops, 2)?;
                let rd = self.reg(&ops[0])?;
                let v = self.imm(&ops[1])?;
                Ok(load_immediate(rd, v, true)
                    .into_iter()
                    .map(Emit::Full)
                    .collect())
            }
            _ => full(self.base_or_pseudo(m, ops)?),
        }
    }

    fn base_or_pseudo(&self, m: &str, ops: &[String]) -> Result<Instr, AsmError> {
        if let Some(op) = branch_op(m) {
            self.arity(ops, 3)?;
            return Ok(Instr::Branch {
                op,
                rs1: self.reg(&ops[0])?,
                rs2: self.reg(&ops[1])?,
                offset: self.target(&ops[2])?,
            });
        }
        if let Some(op) = load_op(m) {
            self.arity(ops, 2)?;
            let (offset, rs1) = self.mem(&ops[1])?;
            return Ok(Instr::Load {
                op,
                rd: self.reg(&ops[0])?,
                rs1,
                offset,
            });
        }
        if let Some(op) = store_op(m) {
            self.arity(ops, 2)?;
            let (offset, rs1) = self.mem(&ops[1])?;
            return Ok(Instr::Store {
                op,
                rs1,
                rs2: self.reg(&ops[0])?,
                offset,
            });
        }
        if let Some(op) = op_imm(m) {
            self.arity(ops, 3)?;
            return Ok(Instr::OpImm {
                op,
                rd: self.reg(&ops[0])?,
                rs1: self.reg(&ops[1])?,
                imm: self.imm(&ops[2])?,
            });
        }
        if let Some(op) = alu_op(m) {
            self.arity(ops, 3)?;
            return Ok(Instr::Op {
                op,
                rd: self.reg(&ops[0])?,
                rs1: self.reg(&ops[1])?,
                rs2: self.reg(&ops[2])?,
            });
        }
        if let Some(op) = mul_op(m) {
            self.arity(ops, 3)?;
            return Ok(Instr::MulDiv {
                op,
                rd: self.reg(&ops[0])?,
                rs1: self.reg(&ops[1])?,
                rs2: self.reg(&ops[2])?,
            });
        }
        if let Some((op, imm)) = csr_op(m) {
            self.arity(ops, 3)?;
            let src = if imm {
                self.csr_uimm(&ops[2])?
            } else {
                self.reg(&ops[2])?
            };
            return Ok(Instr::Csr {
                op,
                rd: self.reg(&ops[0])?,
                src,
                csr: self.csr(&ops[1])?,
                imm,
            });
        }
        let r = |i: usize| self.reg(&ops[i]);
        let branch = |op, a: Reg, b: Reg, t: &str| -> Result<Instr, AsmError> {
            Ok(Instr::Branch {
                op,
                rs1: a,
                rs2: b,
                offset: self.target(t)?,
            })
        };
        let csr_pseudo = |op, imm: bool| -> Result<Instr, AsmError> {
            self.arity(ops, 2)?;
            Ok(Instr::Csr {
                op,
                rd: 0,
                src: if imm { self.csr_uimm(&ops[1])? } else { r(1)? },
                csr: self.csr(&ops[0])?,
                imm,
            })
        };
        match m {
            "lui" | "auipc" => {
                self.arity(ops, 2)?;
                let v = self.uimm(&ops[1])?;
                if v > 0xFFFFF {
                    return Err(AsmError::Encode {
                        line: self.line,
                        source: EncodeError::ImmediateRange {
                            what: "upper immediate",
                            value: v.into(),
                        },
                    });
                }
                let rd = r(0)?;
                Ok(if m == "lui" {
                    Instr::Lui { rd, imm: v << 12 }
                } else {
                    Instr::Auipc { rd, imm: v << 12 }
                })
            }
            "jal" | "call" => match ops.len() {
                1 => Ok(Instr::Jal {
                    rd: 1,
                    offset: self.target(&ops[0])?,
                }),
                2 if m == "jal" => Ok(Instr::Jal {
                    rd: r(0)?,
                    offset: self.target(&ops[1])?,
                }),
                _ => Err(self.err("expected jal [rd,] target")),
            },
            "jalr" => match ops.len() {
                1 => Ok(Instr::Jalr {
                    rd: 1,
                    rs1: r(0)?,
                    offset: 0,
                }),
                2 => {
                    let (offset, rs1) = self.mem(&ops[1])?;
                    Ok(Instr::Jalr {
                        rd: r(0)?,
                        rs1,
                        offset,
                    })
                }
                _ => Err(self.err("expected jalr rd, offset(rs1)")),
            },
            "fence" => Ok(Instr::Fence),
            "ecall" => Ok(Instr::Ecall),
            "ebreak" => Ok(Instr::Ebreak),
            "mret" => Ok(Instr::Mret),
            "wfi" => Ok(Instr::Wfi),
            "nop" => Ok(addi(0, 0, 0)),
            "mv" => {
                self.arity(ops, 2)?;
                Ok(addi(r(0)?, r(1)?, 0))
            }
            "not" => {
                self.arity(ops, 2)?;
                Ok(Instr::OpImm {
                    op: AluOp::Xor,
                    rd: r(0)?,
                    rs1: r(1)?,
                    imm: -1,
                })
            }
            "neg" => {
                self.arity(ops, 2)?;
                Ok(Instr::Op {
                    op: AluOp::Sub,
                    rd: r(0)?,
                    rs1: 0,
                    rs2: r(1)?,
                })
            }
            "seqz" => {
                self.arity(ops, 2)?;
                Ok(Instr::OpImm {
                    op: AluOp::Sltu,
                    rd: r(0)?,
                    rs1: r(1)?,
                    imm: 1,
                })
            }
            "snez" => {
                self.arity(ops, 2)?;
                Ok(Instr::Op {
                    op: AluOp::Sltu,
                    rd: r(0)?,
                    rs1: 0,
                    rs2: r(1)?,
                })
            }
            "j" => {
                self.arity(ops, 1)?;
                Ok(Instr::Jal {
                    rd: 0,
                    offset: self.target(&ops[0])?,
                })
            }
            "jr" => {
                self.arity(ops, 1)?;
                Ok(Instr::Jalr {
                    rd: 0,
                    rs1: r(0)?,
                    offset: 0,
                })
            }
            "ret" => Ok(Instr::Jalr {
                rd: 0,
                rs1: 1,
                offset: 0,
            }),
            "beqz" | "bnez" | "blez" | "bgez" | "bltz" | "bgtz" => {
                self.arity(ops, 2)?;
                let a = r(0)?;
                let t = &ops[1];
                match m {
                    "beqz" => branch(BranchOp::Eq, a, 0, t),
                    "bnez" => branch(BranchOp::Ne, a, 0, t),
                    "blez" => branch(BranchOp::Ge, 0, a, t),
                    "bgez" => branch(BranchOp::Ge, a, 0, t),
                    "bltz" => branch(BranchOp::Lt, a, 0, t),
                    _ => branch(BranchOp::Lt, 0, a, t),
                }
            }
            "bgt" | "ble" | "bgtu" | "bleu" => {
                self.arity(ops, 3)?;
                let (a, b, t) = (r(0)?, r(1)?, &ops[2]);
                match m {
                    "bgt" => branch(BranchOp::Lt, b, a, t),
                    "ble" => branch(BranchOp::Ge, b, a, t),
                    "bgtu" => branch(BranchOp::Ltu, b, a, t),
                    _ => branch(BranchOp::Geu, b, a, t),
                }
            }
            "csrr" => {
                self.arity(ops, 2)?;
                Ok(Instr::Csr {
                    op: CsrOp::Set,
                    rd: r(0)?,
                    src: 0,
                    csr: self.csr(&ops[1])?,
                    imm: false,
                })
            }
            "csrw" => csr_pseudo(CsrOp::Write, false),
            "csrs" => csr_pseudo(CsrOp::Set, false),
            "csrc" => csr_pseudo(CsrOp::Clear, false),
            "csrwi" => csr_pseudo(CsrOp::Write, true),
            "csrsi" => csr_pseudo(CsrOp::Set, true),
            "csrci" => csr_pseudo(CsrOp::Clear, true),
            _ => Err(AsmError::UnknownMnemonic {
                line: self.line,
                mnemonic: m.to_owned(),
            }),
        }
    }

    fn csr_uimm(&self, s: &str) -> Result<u8, AsmError> {
        let v = self.value(s)?;
        if (0..32).contains(&v) {
            Ok(v as u8)
        } else {
            Err(AsmError::Encode {
                line: self.line,
                source: EncodeError::ImmediateRange {
                    what: "CSR immediate",
                    value: v,
                },
            })
        }
    }

    fn compressed(&self, m: &str, ops: &[String]) -> Result<CInstr, AsmError> {
        let r = |i: usize| self.reg(&ops[i]);
        let n = |k: usize| self.arity(ops, k);
        let sp = |i: usize| -> Result<(), AsmError> {
            if self.reg(&ops[i])? == 2 {
                Ok(())
            } else {
                Err(self.err(format!("{m} requires sp")))
            }
        };
        let mem = |i: usize| -> Result<(u32, Reg), AsmError> {
            let (off, reg) = self.mem(&ops[i])?;
            if off < 0 {
                return Err(AsmError::Encode {
                    line: self.line,
                    source: EncodeError::ImmediateRange {
                        what: "compressed offset",
                        value: off.into(),
                    },
                });
            }
            Ok((off as u32, reg))
        };
        Ok(match m {
            "c.addi4spn" => {
                n(3)?;
                sp(1)?;
                CInstr::Addi4spn {
                    rd: r(0)?,
                    imm: self.uimm(&ops[2])?,
                }
            }
            "c.lw" | "c.sw" => {
                n(2)?;
                let (offset, rs1) = mem(1)?;
                if m == "c.lw" {
                    CInstr::Lw {
                        rd: r(0)?,
                        rs1,
                        offset,
                    }
                } else {
                    CInstr::Sw {
                        rs1,
                        rs2: r(0)?,
                        offset,
                    }
                }
            }
            "c.nop" => {
                n(0)?;
                CInstr::Nop
            }
            "c.ebreak" => {
                n(0)?;
                CInstr::Ebreak
            }
            "c.addi" | "c.li" | "c.andi" => {
                n(2)?;
                let (rd, imm) = (r(0)?, self.imm(&ops[1])?);
                match m {
                    "c.addi" => CInstr::Addi { rd, imm },
                    "c.li" => CInstr::Li { rd, imm },
                    _ => CInstr::Andi { rd, imm },
                }
            }
            "c.jal" | "c.j" => {
                n(1)?;
                let offset = self.target(&ops[0])?;
                if m == "c.jal" {
                    CInstr::Jal { offset }
                } else {
                    CInstr::J { offset }
                }
            }
            "c.addi16sp" => {
                n(2)?;
                sp(0)?;
                CInstr::Addi16sp {
                    imm: self.imm(&ops[1])?,
                }
            }
            "c.lui" => {
                n(2)?;
                let v = self.uimm(&ops[1])?;
                // Written as the 20-bit upper immediate, like `lui`.
                let imm = if (0xFFFE0..=0xFFFFF).contains(&v) {
                    v as i32 - 0x100000
                } else {
                    v as i32
                };
                CInstr::Lui { rd: r(0)?, imm }
            }
            "c.srli" | "c.srai" | "c.slli" => {
                n(2)?;
                let (rd, shamt) = (r(0)?, self.uimm(&ops[1])?);
                match m {
                    "c.srli" => CInstr::Srli { rd, shamt },
                    "c.srai" => CInstr::Srai { rd, shamt },
                    _ => CInstr::Slli { rd, shamt },
                }
            }
            "c.sub" | "c.xor" | "c.or" | "c.and" | "c.mv" | "c.add" => {
                n(2)?;
                let (rd, rs2) = (r(0)?, r(1)?);
                match m {
                    "c.sub" => CInstr::Sub { rd, rs2 },
                    "c.xor" => CInstr::Xor { rd, rs2 },
                    "c.or" => CInstr::Or { rd, rs2 },
                    "c.and" => CInstr::And { rd, rs2 },
                    "c.mv" => CInstr::Mv { rd, rs2 },
                    _ => CInstr::Add { rd, rs2 },
                }
            }
            "c.beqz" | "c.bnez" => {
                n(2)?;
                let (rs1, offset) = (r(0)?, self.target(&ops[1])?);
                if m == "c.beqz" {
                    CInstr::Beqz { rs1, offset }
                } else {
                    CInstr::Bnez { rs1, offset }
                }
            }
            "c.lwsp" | "c.swsp" => {
                n(2)?;
                let (offset, base) = mem(1)?;
                if base != 2 {
                    return Err(self.err(format!("{m} requires sp")));
                }
                if m == "c.lwsp" {
                    CInstr::Lwsp { rd: r(0)?, offset }
                } else {
                    CInstr::Swsp { rs2: r(0)?, offset }
                }
            }
            "c.jr" | "c.jalr" => {
                n(1)?;
                let rs1 = r(0)?;
                if m == "c.jr" {
                    CInstr::Jr { rs1 }
                } else {
                    CInstr::Jalr { rs1 }
                }
            }
            _ => {
                return Err(AsmError::UnknownMnemonic {
                    line: self.line,
                    mnemonic: m.to_owned(),
                })
            }
        })
    }
}

fn addi(rd: Reg, rs1: Reg, imm: i32) -> Instr {
    Instr::OpImm {
        op: AluOp::Add,
        rd,
        rs1,
        imm,
    }
}

fn load_immediate(rd: Reg, v: i32, long: bool) -> Vec<Instr> {
    if !long {
        return vec![addi(rd, 0, v)];
    }
    let v = v as u32;
    let hi = v.wrapping_add(0x800) & 0xFFFF_F000;
    let lo = v.wrapping_sub(hi) as i32;
    vec![Instr::Lui { rd, imm: hi }, addi(rd, rd, lo)]
}

fn branch_op(m: &str) -> Option<BranchOp> {
    Some(match m {
        "beq" => BranchOp::Eq,
        "bne" => BranchOp::Ne,
        "blt" => BranchOp::Lt,
        "bge" => BranchOp::Ge,
        "bltu" => BranchOp::Ltu,
        "bgeu" => BranchOp::Geu,
        _ => return None,
    })
}

fn load_op(m: &str) -> Option<LoadOp> {
    Some(match m {
        "lb" => LoadOp::Byte,
        "lh" => LoadOp::Half,
        "lw" => LoadOp::Word,
        "lbu" => LoadOp::ByteU,
        "lhu" => LoadOp::HalfU,
        _ => return None,
    })
}

fn store_op(m: &str) -> Option<StoreOp> {
    Some(match m {
        "sb" => StoreOp::Byte,
        "sh" => StoreOp::Half,
        "sw" => StoreOp::Word,
        _ => return None,
    })
}

fn op_imm(m: &str) -> Option<AluOp> {
    Some(match m {
        "addi" => AluOp::Add,
        "slti" => AluOp::Slt,
        "sltiu" => AluOp::Sltu,
        "xori" => AluOp::Xor,
        "ori" => AluOp::Or,
        "andi" => AluOp::And,
        "slli" => AluOp::Sll,
        "srli" => AluOp::Srl,
        "srai" => AluOp::Sra,
        _ => return None,
    })
}

fn alu_op(m: &str) -> Option<AluOp> {
    Some(match m {
        "add" => AluOp::Add,
        "sub" => AluOp::Sub,
        "sll" => AluOp::Sll,
        "slt" => AluOp::Slt,
        "sltu" => AluOp::Sltu,
        "xor" => AluOp::Xor,
        "srl" => AluOp::Srl,
        "sra" => AluOp::Sra,
        "or" => AluOp::Or,
        "and" => AluOp::And,
        _ => return None,
    })
}

fn mul_op(m: &str) -> Option<MulOp> {
    Some(match m {
        "mul" => MulOp::Mul,
        "mulh" => MulOp::Mulh,
        "mulhsu" => MulOp::Mulhsu,
        "mulhu" => MulOp::Mulhu,
        "div" => MulOp::Div,
        "divu" => MulOp::Divu,
        "rem" => MulOp::Rem,
        "remu" => MulOp::Remu,
        _ => return None,
    })
}

fn csr_op(m: &str) -> Option<(CsrOp, bool)> {
    Some(match m {
        "csrrw" => (CsrOp::Write, false),
        "csrrs" => (CsrOp::Set, false),
        "csrrc" => (CsrOp::Clear, false),
        "csrrwi" => (CsrOp::Write, true),
        "csrrsi" => (CsrOp::Set, true),
        "csrrci" => (CsrOp::Clear, true),
        _ => return None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isa::Decoded;
    use proptest::prelude::*;

    fn words(src: &str) -> Vec<u32> {
        let img = assemble_source(src, 0).unwrap();
        img.words_at(0, img.bytes.len() / 4)
    }

    fn halves(src: &str) -> Vec<u16> {
        let img = assemble_source(src, 0).unwrap();
        img.bytes
            .chunks(2)
            .map(|c| u16::from_le_bytes([c[0], c[1]]))
            .collect()
    }

    #[test]
    fn addi_encoding() {
        assert_eq!(words("addi x1, x0, 5"), vec![0x0050_0093]);
    }

    #[test]
    fn negated_symbol_operand() {
        assert_eq!(
            words(".equ F, 128\naddi sp, sp, -F"),
            words("addi sp, sp, -128")
        );
    }

    #[test]
    fn c_nop_encoding() {
        assert_eq!(halves("c.nop"), vec![0x0001]);
    }

    #[test]
    fn unresolved_label_is_an_error() {
        assert_eq!(
            assemble_source("beq a0, a1, nowhere", 0),
            Err(AsmError::UnresolvedLabel {
                line: 1,
                label: "nowhere".into()
            })
        );
    }

    #[test]
    fn unknown_mnemonic_is_an_error() {
        assert!(matches!(
            assemble_source("nop\nfrobnicate a0", 0),
            Err(AsmError::UnknownMnemonic { line: 2, .. })
        ));
        assert!(matches!(
            assemble_source("c.frob", 0),
            Err(AsmError::UnknownMnemonic { line: 1, .. })
        ));
    }

    #[test]
    fn out_of_range_immediate_is_an_error() {
        assert!(matches!(
            assemble_source("addi a0, a0, 4096", 0),
            Err(AsmError::Encode { line: 1, .. })
        ));
        assert!(matches!(
            assemble_source("c.li a0, 40", 0),
            Err(AsmError::Encode { line: 1, .. })
        ));
        assert!(matches!(
            assemble_source("csrwi mie, 32", 0),
            Err(AsmError::Encode { line: 1, .. })
        ));
    }

    #[test]
    fn labels_resolve_pc_relative() {
        let src = "
        top:
            addi a0, a0, -1
            c.nop
            bnez a0, top
            j end
            nop
        end:
            ret
        ";
        let img = assemble_source(src, 0x100).unwrap();
        assert_eq!(img.symbol("top"), Some(0x100));
        assert_eq!(img.symbol("end"), Some(0x112));
        let bnez = u32::from_le_bytes(img.bytes[6..10].try_into().unwrap());
        assert_eq!(
            Instr::decode(bnez),
            Some(Instr::Branch {
                op: BranchOp::Ne,
                rs1: 10,
                rs2: 0,
                offset: -6
            })
        );
    }

    #[test]
    fn li_picks_short_or_long_form() {
        assert_eq!(words("li a0, 2047").len(), 1);
        assert_eq!(words("li a0, -2048").len(), 1);
        assert_eq!(words("li a0, 2048").len(), 2);
        assert_eq!(words("li a0, 0x1B100000").len(), 2);
        // Forward references always take the long form.
        assert_eq!(words("li a0, later\n.equ later, 1").len(), 2);
    }

    /// Runs straight-line `li`/`la` expansions on a tiny interpreter.
    fn loaded_value(src: &str) -> u32 {
        let mut regs = [0u32; 32];
        for w in words(src) {
            match Instr::decode(w).unwrap() {
                Instr::Lui { rd, imm } => regs[rd as usize] = imm,
                Instr::OpImm { op, rd, rs1, imm } => {
                    regs[rd as usize] = op.apply(regs[rs1 as usize], imm as u32)
                }
                other => panic!("unexpected {other}"),
            }
        }
        regs[10]
    }

    #[test]
    fn li_values() {
        for v in [0u32, 1, 0x7FF, 0x800, 0xFFF, 0x1000, 0x1C00_0000, 0xDEAD_BEEF, 0xFFFF_F800, u32::MAX] {
            assert_eq!(loaded_value(&format!("li a0, {v:#x}")), v, "{v:#x}");
        }
        assert_eq!(loaded_value("li a0, -1"), u32::MAX);
        assert_eq!(loaded_value(".equ BASE, 0x1B300000\nli a0, BASE+4"), 0x1B30_0004);
    }

    #[test]
    fn la_loads_label_address() {
        let img = assemble_source("la a0, data\nnop\ndata: .word 7", 0x1C00_0000).unwrap();
        assert_eq!(img.symbol("data"), Some(0x1C00_000C));
        let mut regs = [0u32; 32];
        for w in img.words_at(img.base, 2) {
            match Instr::decode(w).unwrap() {
                Instr::Lui { rd, imm } => regs[rd as usize] = imm,
                Instr::OpImm { rd, rs1, imm, .. } => {
                    regs[rd as usize] = regs[rs1 as usize].wrapping_add(imm as u32)
                }
                _ => unreachable!(),
            }
        }
        assert_eq!(regs[10], 0x1C00_000C);
    }

    #[test]
    fn program_data_and_entry() {
        let p = Program::new("t", "nop\n_start: wfi").with_data("tbl", vec![1, 2, 3]);
        let img = assemble(&p, 0x1000).unwrap();
        assert_eq!(img.entry, 0x1004);
        let tbl = img.symbol("tbl").unwrap();
        assert_eq!(tbl % 4, 0);
        assert_eq!(img.words_at(tbl, 3), vec![1, 2, 3]);
        let mut bad = p.clone();
        bad.entry = "main".into();
        assert_eq!(assemble(&bad, 0), Err(AsmError::MissingEntry("main".into())));
    }

    #[test]
    fn duplicate_label_rejected() {
        assert!(matches!(
            assemble_source("a: nop\na: nop", 0),
            Err(AsmError::DuplicateLabel { line: 2, .. })
        ));
    }

    #[test]
    fn align_pads_with_compressed_nops() {
        let img = assemble_source("c.nop\n.align 2\nx: nop", 0).unwrap();
        assert_eq!(img.symbol("x"), Some(4));
        assert_eq!(&img.bytes[2..4], &[0x01, 0x00]);
    }

    #[test]
    fn decode_rederives_mnemonic_stream() {
        let src = "
            lui a0, 0x12345
            auipc a1, 1
            jal ra, 8
            jalr t0, 4(a0)
            beq a0, a1, -4
            bne a0, a1, 4
            blt a0, a1, 4
            bge a0, a1, 4
            bltu a0, a1, 4
            bgeu a0, a1, 4
            lb a0, 0(sp)
            lh a0, 2(sp)
            lw a0, 4(sp)
            lbu a0, 1(sp)
            lhu a0, 2(sp)
            sb a0, 1(sp)
            sh a0, 2(sp)
            sw a0, -4(sp)
            addi a0, a0, -1
            slti a0, a0, 1
            sltiu a0, a0, 1
            xori a0, a0, 1
            ori a0, a0, 1
            andi a0, a0, 1
            slli a0, a0, 31
            srli a0, a0, 1
            srai a0, a0, 1
            add a0, a1, a2
            sub a0, a1, a2
            sll a0, a1, a2
            slt a0, a1, a2
            sltu a0, a1, a2
            xor a0, a1, a2
            srl a0, a1, a2
            sra a0, a1, a2
            or a0, a1, a2
            and a0, a1, a2
            mul a0, a1, a2
            mulh a0, a1, a2
            mulhsu a0, a1, a2
            mulhu a0, a1, a2
            div a0, a1, a2
            divu a0, a1, a2
            rem a0, a1, a2
            remu a0, a1, a2
            csrrw a0, mstatus, a1
            csrrs a0, mepc, zero
            csrrc a0, mie, a1
            csrrwi a0, mtvec, 4
            csrrsi a0, mie, 8
            csrrci a0, mstatus, 8
            fence
            ecall
            ebreak
            mret
            wfi
            c.addi4spn s0, sp, 16
            c.lw a0, 4(a1)
            c.sw a0, 8(a1)
            c.nop
            c.addi a0, -3
            c.jal 16
            c.li a0, 5
            c.addi16sp sp, -32
            c.lui a0, 0xfffff
            c.srli a0, 3
            c.srai a0, 3
            c.andi a0, -1
            c.sub a0, a1
            c.xor a0, a1
            c.or a0, a1
            c.and a0, a1
            c.j -8
            c.beqz a0, 8
            c.bnez a0, -8
            c.slli a0, 2
            c.lwsp a0, 12(sp)
            c.jr ra
            c.mv a0, a1
            c.ebreak
            c.jalr a0
            c.add a0, a1
            c.swsp ra, 12(sp)
        ";
        let expected: Vec<&str> = src
            .lines()
            .filter_map(|l| l.split_whitespace().next())
            .collect();
        let img = assemble_source(src, 0).unwrap();
        let mut got = Vec::new();
        let mut off = 0;
        while off < img.bytes.len() {
            let lo = u16::from_le_bytes([img.bytes[off], img.bytes[off + 1]]);
            let raw = if crate::isa::is_compressed(lo) {
                u32::from(lo)
            } else {
                u32::from_le_bytes(img.bytes[off..off + 4].try_into().unwrap())
            };
            let d = Decoded::decode(raw).unwrap();
            got.push(d.mnemonic());
            off += d.len() as usize;
        }
        assert_eq!(got, expected);
    }

    fn arb_instr() -> impl Strategy<Value = u32> {
        any::<u32>().prop_filter_map("decodable", |w| {
            let w = w | 3;
            Instr::decode(w).map(|i| i.encode().unwrap())
        })
    }

    fn arb_cinstr() -> impl Strategy<Value = u16> {
        any::<u16>().prop_filter_map("decodable", |h| {
            (h & 3 != 3)
                .then(|| CInstr::decode(h))
                .flatten()
                .map(|c| c.encode().unwrap())
        })
    }

    proptest! {
        #[test]
        fn disassembly_reassembles(raw in arb_instr()) {
            let text = Instr::decode(raw).unwrap().to_string();
            let img = assemble_source(&text, 0).map_err(|e| TestCaseError::fail(format!("{text}: {e}")))?;
            prop_assert_eq!(img.words_at(0, 1), vec![raw], "{}", text);
        }

        #[test]
        fn compressed_disassembly_reassembles(raw in arb_cinstr()) {
            let text = CInstr::decode(raw).unwrap().to_string();
            let img = assemble_source(&text, 0).map_err(|e| TestCaseError::fail(format!("{text}: {e}")))?;
            prop_assert_eq!(u16::from_le_bytes([img.bytes[0], img.bytes[1]]), raw, "{}", text);
        }
    }
}
