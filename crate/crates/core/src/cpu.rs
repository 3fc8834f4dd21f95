//! RV32IMC machine-mode core with a two-stage pipeline (fetch, execute).
//!
//! Each cycle the owner calls [`Core::outputs`] to get this cycle's bus
//! requests, resolves them, then calls [`Core::commit`] with the responses.
//! A request that is not granted is simply repeated the next cycle.
//!
//! Cycle costs fall out of the pipeline: one cycle per instruction when the
//! next one is already fetched, a refetch bubble after a taken branch or jump,
//! two cycles for loads, three for multiplies and 37 for divides.

use serde::{Deserialize, Serialize};

use crate::isa::{self, csr, CsrOp, Decoded, Instr, Reg};

pub mod cause {
    pub const INSTR_MISALIGNED: u32 = 0;
    pub const INSTR_ACCESS: u32 = 1;
    pub const ILLEGAL: u32 = 2;
    pub const BREAKPOINT: u32 = 3;
    pub const LOAD_MISALIGNED: u32 = 4;
    pub const LOAD_ACCESS: u32 = 5;
    pub const STORE_MISALIGNED: u32 = 6;
    pub const STORE_ACCESS: u32 = 7;
    pub const ECALL_M: u32 = 11;
    pub const INTERRUPT: u32 = 1 << 31;
    pub const SOFTWARE_INTERRUPT: u32 = INTERRUPT | 3;
    pub const EXTERNAL_INTERRUPT: u32 = INTERRUPT | 11;

    pub fn name(cause: u32) -> &'static str {
        match cause {
            INSTR_MISALIGNED => "instruction address misaligned",
            INSTR_ACCESS => "instruction access fault",
            ILLEGAL => "illegal instruction",
            BREAKPOINT => "breakpoint",
            LOAD_MISALIGNED => "load address misaligned",
            LOAD_ACCESS => "load access fault",
            STORE_MISALIGNED => "store address misaligned",
            STORE_ACCESS => "store access fault",
            ECALL_M => "environment call",
            SOFTWARE_INTERRUPT => "software interrupt",
            EXTERNAL_INTERRUPT => "external interrupt",
            _ => "unknown",
        }
    }
}

pub const MSTATUS_MIE: u32 = 1 << 3;
pub const MSTATUS_MPIE: u32 = 1 << 7;
const MSTATUS_MPP: u32 = 3 << 11;
pub const MIP_MSIP: u32 = 1 << 3;
pub const MIP_MEIP: u32 = 1 << 11;
const MIE_MASK: u32 = MIP_MSIP | MIP_MEIP;

const MUL_EXTRA: u8 = 2;
const DIV_EXTRA: u8 = 36;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BusRequest {
    /// Byte address of the access. Reads return the whole aligned word.
    pub addr: u32,
    pub write: bool,
    /// Byte lanes touched within the aligned word.
    pub strobes: u8,
    /// Write data positioned within the aligned word.
    pub wdata: u32,
}

impl BusRequest {
    pub fn fetch(addr: u32) -> Self {
        BusRequest {
            addr,
            write: false,
            strobes: 0xF,
            wdata: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BusResponse {
    pub rdata: u32,
    pub error: bool,
}

impl BusResponse {
    pub fn ok(rdata: u32) -> Self {
        BusResponse { rdata, error: false }
    }

    pub fn error() -> Self {
        BusResponse {
            rdata: 0,
            error: true,
        }
    }
}

/// Everything a core drives onto its ports in one cycle.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct CoreOutputs {
    pub instr_req: Option<BusRequest>,
    pub data_req: Option<BusRequest>,
    pub sleeping: bool,
}

/// Responses for the requests in [`CoreOutputs`]; `None` means not granted.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Responses {
    pub instr: Option<BusResponse>,
    pub data: Option<BusResponse>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Csrs {
    pub mstatus: u32,
    pub mie: u32,
    pub mtvec: u32,
    pub mepc: u32,
    pub mcause: u32,
    pub mip: u32,
    pub mcycle: u64,
    pub minstret: u64,
    pub mhartid: u32,
}

/// Prefetched instruction waiting for execute.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Slot {
    pub pc: u32,
    pub raw: u32,
    /// Set when the fetch itself failed.
    pub fault: Option<u32>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExPhase {
    /// Cycles left before the instruction retires.
    Countdown(u8),
    AwaitData(BusRequest),
}

/// Instruction occupying execute for more than one cycle.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExOp {
    pub pc: u32,
    pub raw: u32,
    pub rd: Reg,
    pub value: u32,
    pub phase: ExPhase,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pipeline {
    pub fetch_pc: u32,
    /// Last fetched word and its address.
    pub fetch_buf: Option<(u32, u32)>,
    pub slot: Option<Slot>,
    pub ex: Option<ExOp>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoreState {
    /// Address of the instruction in execute, or of the next one to enter.
    pub pc: u32,
    pub regs: [u32; 32],
    pub csr: Csrs,
    pub sleeping: bool,
    pub pipeline: Pipeline,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Retired {
    pub pc: u32,
    pub raw: u32,
    /// Destination register, 0 when nothing was written.
    pub rd: Reg,
    pub value: u32,
}

impl Retired {
    pub fn disasm(&self) -> String {
        match Decoded::decode(self.raw) {
            Some(d) => d.to_string(),
            None => format!(".word {:#x}", self.raw),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct StepInfo {
    pub retired: Option<Retired>,
    /// Cause of a trap or interrupt taken this cycle.
    pub trap: Option<u32>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum IfPlan {
    Idle,
    Ready { raw: u32, len: u32 },
    Fault(u32),
    /// `low` holds the first half of a 32-bit instruction that straddles
    /// the word boundary.
    Request { addr: u32, low: Option<u16> },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum ExPlan {
    Sleep,
    Idle,
    Redirect,
    Interrupt(u32),
    Trap(u32),
    Start {
        decoded: Decoded,
        access: Option<BusRequest>,
    },
    Continue,
    AwaitData(BusRequest),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Plan {
    ex: ExPlan,
    fetch: IfPlan,
}

#[derive(Clone, Debug)]
pub struct Core {
    state: CoreState,
    plan: Option<Plan>,
}

impl Core {
    pub fn new(hartid: u32, boot_addr: u32) -> Self {
        let mut core = Core {
            state: CoreState::default(),
            plan: None,
        };
        core.reset(hartid, boot_addr);
        core
    }

    /// Architectural reset. Counters are kept.
    pub fn reset(&mut self, hartid: u32, boot_addr: u32) {
        let csr = Csrs {
            mhartid: hartid,
            mcycle: self.state.csr.mcycle,
            minstret: self.state.csr.minstret,
            ..Csrs::default()
        };
        self.state = CoreState {
            pc: boot_addr,
            regs: [0; 32],
            csr,
            sleeping: false,
            pipeline: Pipeline {
                fetch_pc: boot_addr,
                ..Pipeline::default()
            },
        };
        self.plan = None;
    }

    pub fn state(&self) -> &CoreState {
        &self.state
    }

    pub fn dump_state(&self) -> CoreState {
        self.state
    }

    pub fn load_state(&mut self, state: CoreState) {
        self.state = state;
        self.plan = None;
    }

    pub fn pc(&self) -> u32 {
        self.state.pc
    }

    pub fn reg(&self, r: Reg) -> u32 {
        self.state.regs[r as usize]
    }

    pub fn is_sleeping(&self) -> bool {
        self.state.sleeping
    }

    pub fn set_sleeping(&mut self, sleeping: bool) {
        self.state.sleeping = sleeping;
    }

    pub fn set_counters(&mut self, mcycle: u64, minstret: u64) {
        self.state.csr.mcycle = mcycle;
        self.state.csr.minstret = minstret;
    }

    /// Drives the interrupt lines for the coming cycle.
    pub fn set_irq(&mut self, external: bool, software: bool) {
        let mut mip = 0;
        if external {
            mip |= MIP_MEIP;
        }
        if software {
            mip |= MIP_MSIP;
        }
        self.state.csr.mip = mip;
    }

    pub fn flip_reg(&mut self, r: Reg, bit: u32) {
        if r != 0 {
            self.state.regs[r as usize] ^= 1 << bit;
        }
    }

    pub fn flip_pc(&mut self, bit: u32) {
        self.state.pc ^= 1 << bit;
    }

    /// Flips a bit in one of the fault-injectable CSRs. Returns false for
    /// any other address.
    pub fn flip_csr(&mut self, addr: u16, bit: u32) -> bool {
        let c = &mut self.state.csr;
        let field = match addr {
            csr::MSTATUS => &mut c.mstatus,
            csr::MTVEC => &mut c.mtvec,
            csr::MEPC => &mut c.mepc,
            csr::MCAUSE => &mut c.mcause,
            csr::MIE => &mut c.mie,
            _ => return false,
        };
        *field ^= 1 << bit;
        true
    }

    fn fetch_plan(&self) -> IfPlan {
        let p = &self.state.pipeline;
        let pc = p.fetch_pc;
        if pc & 1 != 0 {
            return IfPlan::Fault(cause::INSTR_MISALIGNED);
        }
        let waddr = pc & !3;
        match p.fetch_buf {
            Some((addr, word)) if addr == waddr => {
                let half = (word >> ((pc & 2) * 8)) as u16;
                if isa::is_compressed(half) {
                    IfPlan::Ready {
                        raw: u32::from(half),
                        len: 2,
                    }
                } else if pc & 2 == 0 {
                    IfPlan::Ready { raw: word, len: 4 }
                } else {
                    IfPlan::Request {
                        addr: waddr.wrapping_add(4),
                        low: Some(half),
                    }
                }
            }
            _ => IfPlan::Request {
                addr: waddr,
                low: None,
            },
        }
    }

    fn interrupt_pending(&self) -> Option<u32> {
        let c = &self.state.csr;
        if c.mstatus & MSTATUS_MIE == 0 {
            return None;
        }
        let pending = c.mip & c.mie;
        if pending & MIP_MEIP != 0 {
            Some(cause::EXTERNAL_INTERRUPT)
        } else if pending & MIP_MSIP != 0 {
            Some(cause::SOFTWARE_INTERRUPT)
        } else {
            None
        }
    }

    fn data_access(&self, instr: &Instr) -> Result<Option<BusRequest>, u32> {
        let regs = &self.state.regs;
        match *instr {
            Instr::Load { op, rs1, offset, .. } => {
                let addr = regs[rs1 as usize].wrapping_add(offset as u32);
                if !addr.is_multiple_of(op.size()) {
                    return Err(cause::LOAD_MISALIGNED);
                }
                let (strobes, _) = match op.size() {
                    1 => isa::StoreOp::Byte,
                    2 => isa::StoreOp::Half,
                    _ => isa::StoreOp::Word,
                }
                .lanes(addr, 0);
                Ok(Some(BusRequest {
                    addr,
                    write: false,
                    strobes,
                    wdata: 0,
                }))
            }
            Instr::Store {
                op,
                rs1,
                rs2,
                offset,
            } => {
                let addr = regs[rs1 as usize].wrapping_add(offset as u32);
                if !addr.is_multiple_of(op.size()) {
                    return Err(cause::STORE_MISALIGNED);
                }
                let (strobes, wdata) = op.lanes(addr, regs[rs2 as usize]);
                Ok(Some(BusRequest {
                    addr,
                    write: true,
                    strobes,
                    wdata,
                }))
            }
            _ => Ok(None),
        }
    }

    fn ex_plan(&self) -> ExPlan {
        let s = &self.state;
        if s.sleeping {
            return ExPlan::Sleep;
        }
        if let Some(ex) = &s.pipeline.ex {
            return match ex.phase {
                ExPhase::Countdown(_) => ExPlan::Continue,
                ExPhase::AwaitData(req) => ExPlan::AwaitData(req),
            };
        }
        if let Some(cause) = self.interrupt_pending() {
            return ExPlan::Interrupt(cause);
        }
        let Some(slot) = s.pipeline.slot else {
            return ExPlan::Idle;
        };
        if slot.pc != s.pc {
            return ExPlan::Redirect;
        }
        if let Some(cause) = slot.fault {
            return ExPlan::Trap(cause);
        }
        let Some(decoded) = Decoded::decode(slot.raw) else {
            return ExPlan::Trap(cause::ILLEGAL);
        };
        match self.data_access(&decoded.expand()) {
            Ok(access) => ExPlan::Start { decoded, access },
            Err(cause) => ExPlan::Trap(cause),
        }
    }

    /// Computes this cycle's requests. Must be followed by [`Core::commit`].
    pub fn outputs(&mut self) -> CoreOutputs {
        let ex = self.ex_plan();
        let fetch = match ex {
            ExPlan::Sleep | ExPlan::Redirect | ExPlan::Interrupt(_) | ExPlan::Trap(_) => {
                IfPlan::Idle
            }
            ExPlan::Start { .. } => self.fetch_plan(),
            _ if self.state.pipeline.slot.is_none() => self.fetch_plan(),
            _ => IfPlan::Idle,
        };
        self.plan = Some(Plan { ex, fetch });
        CoreOutputs {
            instr_req: match fetch {
                IfPlan::Request { addr, .. } => Some(BusRequest::fetch(addr)),
                _ => None,
            },
            data_req: match ex {
                ExPlan::Start { access, .. } => access,
                ExPlan::AwaitData(req) => Some(req),
                _ => None,
            },
            sleeping: matches!(ex, ExPlan::Sleep),
        }
    }

    fn take_trap(&mut self, cause: u32, epc: u32) -> u32 {
        let c = &mut self.state.csr;
        c.mepc = epc;
        c.mcause = cause;
        let mie = c.mstatus & MSTATUS_MIE != 0;
        c.mstatus &= !(MSTATUS_MIE | MSTATUS_MPIE);
        if mie {
            c.mstatus |= MSTATUS_MPIE;
        }
        c.mtvec & !3
    }

    fn write_reg(&mut self, rd: Reg, value: u32) {
        if rd != 0 {
            self.state.regs[rd as usize] = value;
        }
    }

    fn retire(&mut self, pc: u32, raw: u32, rd: Reg, value: u32) -> Retired {
        self.write_reg(rd, value);
        self.state.csr.minstret = self.state.csr.minstret.wrapping_add(1);
        Retired {
            pc,
            raw,
            rd: if rd == 0 { 0 } else { rd },
            value: if rd == 0 { 0 } else { value },
        }
    }

    fn csr_read(&self, addr: u16) -> Option<u32> {
        let c = &self.state.csr;
        Some(match addr {
            csr::MSTATUS => c.mstatus | MSTATUS_MPP,
            csr::MIE => c.mie,
            csr::MTVEC => c.mtvec,
            csr::MEPC => c.mepc,
            csr::MCAUSE => c.mcause,
            csr::MIP => c.mip,
            csr::MCYCLE | csr::CYCLE => c.mcycle as u32,
            csr::MCYCLEH | csr::CYCLEH => (c.mcycle >> 32) as u32,
            csr::MINSTRET | csr::INSTRET => c.minstret as u32,
            csr::MINSTRETH | csr::INSTRETH => (c.minstret >> 32) as u32,
            csr::MHARTID => c.mhartid,
            _ => return None,
        })
    }

    /// Counters and `mip` ignore writes.
    fn csr_write(&mut self, addr: u16, value: u32) {
        let c = &mut self.state.csr;
        match addr {
            csr::MSTATUS => c.mstatus = value & (MSTATUS_MIE | MSTATUS_MPIE),
            csr::MIE => c.mie = value & MIE_MASK,
            csr::MTVEC => c.mtvec = value & !3,
            csr::MEPC => c.mepc = value & !1,
            csr::MCAUSE => c.mcause = value,
            _ => {}
        }
    }

    /// Executes the first cycle of an instruction. Returns the redirect
    /// target, if any.
    fn start(
        &mut self,
        decoded: Decoded,
        raw: u32,
        data: Option<BusResponse>,
        info: &mut StepInfo,
    ) -> Option<u32> {
        let pc = self.state.pc;
        let next = pc.wrapping_add(decoded.len());
        let regs = self.state.regs;
        let r = |x: Reg| regs[x as usize];
        let mut done = |core: &mut Core, rd: Reg, value: u32| {
            info.retired = Some(core.retire(pc, raw, rd, value));
        };
        match decoded.expand() {
            Instr::Lui { rd, imm } => done(self, rd, imm),
            Instr::Auipc { rd, imm } => done(self, rd, pc.wrapping_add(imm)),
            Instr::Jal { rd, offset } => {
                done(self, rd, next);
                return Some(pc.wrapping_add(offset as u32));
            }
            Instr::Jalr { rd, rs1, offset } => {
                let target = r(rs1).wrapping_add(offset as u32) & !1;
                done(self, rd, next);
                return Some(target);
            }
            Instr::Branch {
                op,
                rs1,
                rs2,
                offset,
            } => {
                done(self, 0, 0);
                if op.taken(r(rs1), r(rs2)) {
                    return Some(pc.wrapping_add(offset as u32));
                }
            }
            Instr::Load { op, rd, .. } => {
                let req = self.data_access(&decoded.expand()).ok().flatten().unwrap();
                match data {
                    None => self.begin_wait(pc, raw, rd, req),
                    Some(resp) if resp.error => {
                        info.trap = Some(cause::LOAD_ACCESS);
                        return Some(self.take_trap(cause::LOAD_ACCESS, pc));
                    }
                    Some(resp) => {
                        self.state.pipeline.ex = Some(ExOp {
                            pc,
                            raw,
                            rd,
                            value: op.extract(resp.rdata, req.addr),
                            phase: ExPhase::Countdown(1),
                        });
                    }
                }
            }
            Instr::Store { .. } => {
                let req = self.data_access(&decoded.expand()).ok().flatten().unwrap();
                match data {
                    None => self.begin_wait(pc, raw, 0, req),
                    Some(resp) if resp.error => {
                        info.trap = Some(cause::STORE_ACCESS);
                        return Some(self.take_trap(cause::STORE_ACCESS, pc));
                    }
                    Some(_) => {
                        self.note_store(req.addr);
                        done(self, 0, 0);
                    }
                }
            }
            Instr::OpImm { op, rd, rs1, imm } => done(self, rd, op.apply(r(rs1), imm as u32)),
            Instr::Op { op, rd, rs1, rs2 } => done(self, rd, op.apply(r(rs1), r(rs2))),
            Instr::MulDiv { op, rd, rs1, rs2 } => {
                let extra = if op.is_divide() { DIV_EXTRA } else { MUL_EXTRA };
                self.state.pipeline.ex = Some(ExOp {
                    pc,
                    raw,
                    rd,
                    value: op.apply(r(rs1), r(rs2)),
                    phase: ExPhase::Countdown(extra),
                });
            }
            Instr::Csr {
                op,
                rd,
                src,
                csr: addr,
                imm,
            } => {
                let writes = op == CsrOp::Write || src != 0;
                let read_only = (addr >> 10) & 3 == 3;
                let Some(old) = self.csr_read(addr).filter(|_| !(writes && read_only)) else {
                    info.trap = Some(cause::ILLEGAL);
                    return Some(self.take_trap(cause::ILLEGAL, pc));
                };
                let operand = if imm { u32::from(src) } else { r(src) };
                if writes {
                    let new = match op {
                        CsrOp::Write => operand,
                        CsrOp::Set => old | operand,
                        CsrOp::Clear => old & !operand,
                    };
                    self.csr_write(addr, new);
                }
                done(self, rd, old);
            }
            Instr::Fence => done(self, 0, 0),
            Instr::Ecall => {
                info.trap = Some(cause::ECALL_M);
                return Some(self.take_trap(cause::ECALL_M, pc));
            }
            Instr::Ebreak => {
                info.trap = Some(cause::BREAKPOINT);
                return Some(self.take_trap(cause::BREAKPOINT, pc));
            }
            Instr::Mret => {
                let c = &mut self.state.csr;
                let mpie = c.mstatus & MSTATUS_MPIE != 0;
                c.mstatus = (c.mstatus & !MSTATUS_MIE) | MSTATUS_MPIE;
                if mpie {
                    c.mstatus |= MSTATUS_MIE;
                }
                let target = c.mepc;
                done(self, 0, 0);
                return Some(target);
            }
            Instr::Wfi => {
                done(self, 0, 0);
                self.state.sleeping = true;
            }
        }
        if self.state.pipeline.ex.is_none() {
            self.state.pc = next;
        }
        None
    }

    fn begin_wait(&mut self, pc: u32, raw: u32, rd: Reg, req: BusRequest) {
        self.state.pipeline.ex = Some(ExOp {
            pc,
            raw,
            rd,
            value: 0,
            phase: ExPhase::AwaitData(req),
        });
    }

    fn note_store(&mut self, addr: u32) {
        let p = &mut self.state.pipeline;
        if p.fetch_buf.is_some_and(|(a, _)| a == addr & !3) {
            p.fetch_buf = None;
        }
    }

    /// Finishes an instruction that sat in execute; returns it.
    fn finish_ex(&mut self, ex: ExOp) -> Retired {
        self.state.pipeline.ex = None;
        let len = Decoded::decode(ex.raw).map_or(4, |d| d.len());
        self.state.pc = ex.pc.wrapping_add(len);
        self.retire(ex.pc, ex.raw, ex.rd, ex.value)
    }

    /// Applies this cycle's responses and advances one cycle.
    pub fn commit(&mut self, resp: Responses) -> StepInfo {
        let info = self.advance(resp);
        self.state.csr.mcycle = self.state.csr.mcycle.wrapping_add(1);
        info
    }

    fn advance(&mut self, resp: Responses) -> StepInfo {
        let plan = self.plan.take().expect("outputs() before commit()");
        let mut info = StepInfo::default();

        let redirect = match plan.ex {
            ExPlan::Sleep => {
                let c = &self.state.csr;
                if c.mip & c.mie != 0 {
                    self.state.sleeping = false;
                }
                None
            }
            ExPlan::Idle => None,
            ExPlan::Redirect => Some(self.state.pc),
            ExPlan::Interrupt(cause) | ExPlan::Trap(cause) => {
                info.trap = Some(cause);
                Some(self.take_trap(cause, self.state.pc))
            }
            ExPlan::Start { decoded, .. } => {
                let slot = self.state.pipeline.slot.take().expect("slot present");
                self.start(decoded, slot.raw, resp.data, &mut info)
            }
            ExPlan::Continue => {
                let mut ex = self.state.pipeline.ex.expect("busy execute");
                if let ExPhase::Countdown(n) = &mut ex.phase {
                    *n -= 1;
                    if *n == 0 {
                        info.retired = Some(self.finish_ex(ex));
                    } else {
                        self.state.pipeline.ex = Some(ex);
                    }
                }
                None
            }
            ExPlan::AwaitData(req) => {
                let mut ex = self.state.pipeline.ex.expect("waiting execute");
                match resp.data {
                    None => None,
                    Some(r) if r.error => {
                        self.state.pipeline.ex = None;
                        let c = if req.write {
                            cause::STORE_ACCESS
                        } else {
                            cause::LOAD_ACCESS
                        };
                        info.trap = Some(c);
                        Some(self.take_trap(c, ex.pc))
                    }
                    Some(_) if req.write => {
                        self.note_store(req.addr);
                        info.retired = Some(self.finish_ex(ex));
                        None
                    }
                    Some(r) => {
                        if let Some(Instr::Load { op, .. }) =
                            Decoded::decode(ex.raw).map(|d| d.expand())
                        {
                            ex.value = op.extract(r.rdata, req.addr);
                        }
                        ex.phase = ExPhase::Countdown(1);
                        self.state.pipeline.ex = Some(ex);
                        None
                    }
                }
            }
        };

        if let Some(target) = redirect {
            let p = &mut self.state.pipeline;
            self.state.pc = target;
            p.fetch_pc = target;
            p.slot = None;
            p.fetch_buf = None;
            return info;
        }

        let fetch = match plan.fetch {
            IfPlan::Request { addr, low } => match resp.instr {
                None => IfPlan::Idle,
                Some(r) if r.error => IfPlan::Fault(cause::INSTR_ACCESS),
                Some(r) => {
                    self.state.pipeline.fetch_buf = Some((addr, r.rdata));
                    match low {
                        Some(lo) => IfPlan::Ready {
                            raw: u32::from(lo) | (r.rdata << 16),
                            len: 4,
                        },
                        None => match self.fetch_plan() {
                            ready @ IfPlan::Ready { .. } => ready,
                            _ => IfPlan::Idle,
                        },
                    }
                }
            },
            other => other,
        };
        let p = &mut self.state.pipeline;
        match fetch {
            IfPlan::Ready { raw, len } => {
                p.slot = Some(Slot {
                    pc: p.fetch_pc,
                    raw,
                    fault: None,
                });
                p.fetch_pc = p.fetch_pc.wrapping_add(len);
            }
            IfPlan::Fault(cause) => {
                p.slot = Some(Slot {
                    pc: p.fetch_pc,
                    raw: 0,
                    fault: Some(cause),
                });
            }
            IfPlan::Idle | IfPlan::Request { .. } => {}
        }
        info
    }
}
