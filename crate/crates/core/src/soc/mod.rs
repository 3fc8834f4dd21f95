//! The whole chip: three cores behind the redundancy wrapper, the banked
//! SRAM with its scrubber, the crossbar, boot ROM and peripheral registers.
//!
//! One call to [`Soc::step`] is one clock cycle:
//! 1. drive interrupt lines, collect each core's requests;
//! 2. in lockstep, vote the three bundles into one logical initiator;
//! 3. serve ROM and register accesses, arbitrate SRAM banks, run the scrubber;
//! 4. hand responses back (the voted ones to all cores in lockstep);
//! 5. apply reset pulses and mode changes at the end of the cycle.

pub mod map;
pub mod rom;

use std::fmt;
use std::hash::Hasher;
use std::str::FromStr;

use fnv::FnvHasher;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::asm::Image;
use crate::cpu::{BusRequest, BusResponse, Core, CoreOutputs, Responses, Retired};
use crate::ecc::EccStatus;
use crate::interconnect::{BankRequest, Interconnect, PortId, XbarStats};
use crate::memory::{
    bank_of, BankArray, BankCounters, Initiator, MemAccess, ScrubStats, ScrubberState,
    DEFAULT_SCRUB_INTERVAL, NUM_BANKS,
};
use crate::odrg::{vote, Disagreement, Mode, OdrgConfig};

use map::Region;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    /// Three cores voted as one.
    #[default]
    Lockstep,
    /// Performance mode with only hart 0 running.
    /// The other two harts stay parked in `wfi`.
    Single,
    /// Performance mode with all three harts running.
    Parallel,
}

impl RunMode {
    pub fn odrg_mode(self) -> Mode {
        match self {
            RunMode::Lockstep => Mode::Lockstep,
            RunMode::Single | RunMode::Parallel => Mode::Performance,
        }
    }

    pub fn hart_mask(self) -> u8 {
        match self {
            RunMode::Single => 0b001,
            _ => 0b111,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RunMode::Lockstep => "lockstep",
            RunMode::Single => "single",
            RunMode::Parallel => "parallel",
        }
    }
}

impl fmt::Display for RunMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RunMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "lockstep" => Ok(RunMode::Lockstep),
            "single" => Ok(RunMode::Single),
            "parallel" => Ok(RunMode::Parallel),
            _ => Err(format!("unknown mode `{s}` (lockstep|single|parallel)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SocConfig {
    pub mode: RunMode,
    pub scrub_enabled: bool,
    pub scrub_interval: u64,
    pub trace: bool,
}

impl Default for SocConfig {
    fn default() -> Self {
        SocConfig {
            mode: RunMode::Lockstep,
            scrub_enabled: true,
            scrub_interval: DEFAULT_SCRUB_INTERVAL,
            trace: false,
        }
    }
}

impl SocConfig {
    pub fn new(mode: RunMode) -> Self {
        SocConfig {
            mode,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LoadError {
    #[error("image {base:#x}..{end:#x} lies outside SRAM")]
    OutsideSram { base: u32, end: u64 },
    #[error("image end {end:#x} overlaps the stack reservation at {stacks:#x}")]
    StackOverlap { end: u64, stacks: u32 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Running,
    Exited,
    Timeout,
    Unrecoverable,
    GuestTrap,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub cycle: u64,
    pub hart: u8,
    pub pc: u32,
    pub raw: u32,
    pub rd: u8,
    pub value: u32,
}

impl TraceRecord {
    fn hash_into(&self, h: &mut FnvHasher) {
        h.write(&self.cycle.to_le_bytes());
        h.write(&[self.hart]);
        h.write(&self.pc.to_le_bytes());
        h.write(&self.raw.to_le_bytes());
        h.write(&[self.rd]);
        h.write(&self.value.to_le_bytes());
    }
}

impl fmt::Display for TraceRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let r = Retired {
            pc: self.pc,
            raw: self.raw,
            rd: self.rd,
            value: self.value,
        };
        let raw = if self.raw & 3 == 3 {
            format!("{:08x}", self.raw)
        } else {
            format!("    {:04x}", self.raw)
        };
        write!(
            f,
            "{:>9} h{} {:08x} {raw}  {:<28}",
            self.cycle,
            self.hart,
            self.pc,
            r.disasm()
        )?;
        if self.rd != 0 {
            write!(f, " {}={:#010x}", crate::isa::reg_name(self.rd), self.value)?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EccReport {
    pub correctable: u64,
    pub uncorrectable: u64,
    pub per_bank: Vec<BankCounters>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OdrgReport {
    pub mode: Mode,
    pub mismatch_count: [u32; 3],
    pub resync_events: u32,
    pub unrecoverable: bool,
}

/// Outcome of a run. Field order is the JSON key order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunResult {
    pub program: String,
    pub mode: RunMode,
    pub status: RunStatus,
    pub exit_code: Option<u32>,
    pub cycles: u64,
    pub region_cycles: Option<u32>,
    pub signature: Option<u32>,
    pub instret: [u64; 3],
    pub uart: String,
    pub guest_trap: Option<u32>,
    pub ecc: EccReport,
    pub scrubber: ScrubStats,
    pub odrg: OdrgReport,
    pub interconnect: XbarStats,
    pub trace_hash: String,
}

impl RunResult {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("run result serializes")
    }
}

/// Architecturally visible outputs compared against a golden run.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Observables {
    pub exit_code: Option<u32>,
    pub uart: Vec<u8>,
    pub signature: Option<u32>,
    /// SRAM contents below the stack reservation.
    pub sram: Vec<u8>,
}

#[derive(Clone, Debug, Default)]
struct SimCtl {
    exit: Option<u32>,
    signature: Option<u32>,
    region_cycles: Option<u32>,
    trap: Option<u32>,
    boot_entry: u32,
    hart_mask: u8,
}

#[derive(Clone, Debug)]
pub struct Soc {
    config: SocConfig,
    program: String,
    cores: [Core; 3],
    odrg: OdrgConfig,
    mem: BankArray,
    scrubber: ScrubberState,
    xbar: Interconnect,
    uart: Vec<u8>,
    simctl: SimCtl,
    cycle: u64,
    status: RunStatus,
    /// Running FNV-1a state over retire records.
    hash: u64,
    trace: Vec<TraceRecord>,
}

fn to_bits(b: bool) -> u32 {
    u32::from(b)
}

impl Soc {
    pub fn new(config: SocConfig) -> Self {
        let mut scrubber = ScrubberState::new(config.scrub_interval);
        scrubber.enabled = config.scrub_enabled;
        let mut soc = Soc {
            program: String::new(),
            cores: std::array::from_fn(|h| Core::new(h as u32, map::ROM_BASE)),
            odrg: OdrgConfig::new(config.mode.odrg_mode()),
            mem: BankArray::new(),
            scrubber,
            xbar: Interconnect::new(),
            uart: Vec::new(),
            simctl: SimCtl {
                boot_entry: map::SRAM_BASE,
                hart_mask: config.mode.hart_mask(),
                ..SimCtl::default()
            },
            cycle: 0,
            status: RunStatus::Running,
            hash: FnvHasher::default().finish(),
            trace: Vec::new(),
            config,
        };
        soc.reset_cores(false);
        soc
    }

    pub fn config(&self) -> &SocConfig {
        &self.config
    }

    /// Places an assembled image in SRAM through the loader port and sets
    /// the boot entry.
    pub fn load_image(&mut self, name: &str, image: &Image) -> Result<(), LoadError> {
        self.load_bytes(name, image.base, &image.bytes, image.entry)
    }

    pub fn load_bytes(&mut self, name: &str, base: u32, bytes: &[u8], entry: u32) -> Result<(), LoadError> {
        let end = u64::from(base) + bytes.len() as u64;
        if base < map::SRAM_BASE || end > u64::from(map::STACK_TOP) {
            return Err(LoadError::OutsideSram { base, end });
        }
        if end > u64::from(map::STACK_REGION) {
            return Err(LoadError::StackOverlap {
                end,
                stacks: map::STACK_REGION,
            });
        }
        self.mem
            .load(base - map::SRAM_BASE, bytes)
            .expect("range checked above");
        self.simctl.boot_entry = entry;
        self.program = name.to_owned();
        Ok(())
    }

    pub fn cycle(&self) -> u64 {
        self.cycle
    }

    pub fn status(&self) -> RunStatus {
        self.status
    }

    pub fn is_running(&self) -> bool {
        self.status == RunStatus::Running
    }

    pub fn core(&self, hart: usize) -> &Core {
        &self.cores[hart]
    }

    pub fn core_mut(&mut self, hart: usize) -> &mut Core {
        &mut self.cores[hart]
    }

    pub fn memory(&self) -> &BankArray {
        &self.mem
    }

    pub fn memory_mut(&mut self) -> &mut BankArray {
        &mut self.mem
    }

    pub fn odrg(&self) -> &OdrgConfig {
        &self.odrg
    }

    pub fn odrg_mut(&mut self) -> &mut OdrgConfig {
        &mut self.odrg
    }

    pub fn scrubber(&self) -> &ScrubberState {
        &self.scrubber
    }

    pub fn uart(&self) -> &[u8] {
        &self.uart
    }

    pub fn trace(&self) -> &[TraceRecord] {
        &self.trace
    }

    pub fn trace_hash(&self) -> u64 {
        self.hash
    }

    fn voted_minstret(&self) -> u64 {
        let c = |h: usize| self.cores[h].state().csr.minstret;
        vote(&c(0), &c(1), &c(2)).value
    }

    /// Resets all cores to the boot vector for the current mode. Counters
    /// continue from the voted values in lockstep.
    fn reset_cores(&mut self, keep_counters: bool) {
        let lockstep = self.odrg.mode == Mode::Lockstep;
        let minstret = self.voted_minstret();
        for h in 0..3 {
            let core = &mut self.cores[h];
            let own = core.state().csr.minstret;
            core.reset(if lockstep { 0 } else { h as u32 }, map::ROM_BASE);
            let instret = match (keep_counters, lockstep) {
                (false, _) => 0,
                (true, true) => minstret,
                (true, false) => own,
            };
            core.set_counters(self.cycle, instret);
            if !lockstep && self.simctl.hart_mask & (1 << h) == 0 {
                core.set_sleeping(true);
            }
        }
    }

    fn device_read(&mut self, region: Region) -> Option<u32> {
        match region {
            Region::Rom(off) => {
                let rom = rom::boot_rom_image();
                let o = (off & !3) as usize;
                Some(u32::from_le_bytes(rom.bytes[o..o + 4].try_into().unwrap()))
            }
            Region::Odrg(off) => self.odrg.read(off),
            Region::MemCtl(off) => {
                use map::memctl::*;
                let bank = |base: u32| ((off - base) / 4) as usize;
                let in_bank = |base: u32| (base..base + 4 * NUM_BANKS as u32).contains(&off);
                Some(match off {
                    _ if in_bank(WRITE_DISABLE_LO) => {
                        self.mem.write_disable_mask(bank(WRITE_DISABLE_LO)) as u32
                    }
                    _ if in_bank(WRITE_DISABLE_HI) => {
                        (self.mem.write_disable_mask(bank(WRITE_DISABLE_HI)) >> 32) as u32
                    }
                    _ if in_bank(CORRECTABLE) => {
                        self.mem.counters(bank(CORRECTABLE)).correctable as u32
                    }
                    _ if in_bank(UNCORRECTABLE) => {
                        self.mem.counters(bank(UNCORRECTABLE)).uncorrectable as u32
                    }
                    SCRUB_ENABLE => to_bits(self.scrubber.enabled),
                    SCRUB_INTERVAL => self.scrubber.interval as u32,
                    SCRUB_NEXT => self.scrubber.next_address,
                    _ => return None,
                })
            }
            Region::Uart(off) => match off {
                map::uart::DATA => Some(0),
                map::uart::STATUS => Some(1),
                _ => None,
            },
            Region::SimCtl(off) => {
                use map::simctl::*;
                let s = &self.simctl;
                Some(match off {
                    EXIT => s.exit.unwrap_or(0),
                    SIGNATURE => s.signature.unwrap_or(0),
                    REGION_CYCLES => s.region_cycles.unwrap_or(0),
                    TRAP => s.trap.unwrap_or(0),
                    BOOT_ENTRY => s.boot_entry,
                    HART_MASK => u32::from(s.hart_mask),
                    _ => return None,
                })
            }
            Region::Sram(_) | Region::Unmapped => None,
        }
    }

    fn device_write(&mut self, region: Region, value: u32) -> bool {
        match region {
            Region::Odrg(off) => self.odrg.write(off, value),
            Region::MemCtl(off) => {
                use map::memctl::*;
                let in_bank = |base: u32| (base..base + 4 * NUM_BANKS as u32).contains(&off);
                if in_bank(WRITE_DISABLE_LO) {
                    let b = ((off - WRITE_DISABLE_LO) / 4) as usize;
                    let m = self.mem.write_disable_mask(b);
                    self.mem
                        .set_write_disable_mask(b, (m & !0xFFFF_FFFF) | u64::from(value));
                } else if in_bank(WRITE_DISABLE_HI) {
                    let b = ((off - WRITE_DISABLE_HI) / 4) as usize;
                    let m = self.mem.write_disable_mask(b);
                    self.mem
                        .set_write_disable_mask(b, (m & 0xFFFF_FFFF) | (u64::from(value) << 32));
                } else {
                    match off {
                        SCRUB_ENABLE => self.scrubber.enabled = value & 1 == 1,
                        SCRUB_INTERVAL => self.scrubber.set_interval(value.into()),
                        _ => return false,
                    }
                }
                true
            }
            Region::Uart(map::uart::DATA) => {
                self.uart.push(value as u8);
                true
            }
            Region::SimCtl(off) => {
                use map::simctl::*;
                let s = &mut self.simctl;
                match off {
                    EXIT => s.exit = Some(value),
                    SIGNATURE => s.signature = Some(value),
                    REGION_CYCLES => s.region_cycles = Some(value),
                    TRAP => s.trap = Some(value),
                    BOOT_ENTRY => s.boot_entry = value,
                    HART_MASK => s.hart_mask = (value & 0b111) as u8,
                    _ => return false,
                }
                true
            }
            _ => false,
        }
    }

    /// Serves a non-SRAM access. Register blocks take word accesses only;
    /// the ROM is read-only.
    fn device_access(&mut self, region: Region, req: &BusRequest) -> BusResponse {
        let ok = match region {
            Region::Rom(_) if !req.write => self.device_read(region),
            Region::Rom(_) | Region::Unmapped | Region::Sram(_) => None,
            _ if req.strobes != 0xF || req.addr & 3 != 0 => None,
            _ if req.write => self.device_write(region, req.wdata).then_some(0),
            _ => self.device_read(region),
        };
        match ok {
            Some(v) => BusResponse::ok(v),
            None => BusResponse::error(),
        }
    }

    fn record_retire(&mut self, hart: u8, r: &Retired) {
        let rec = TraceRecord {
            cycle: self.cycle,
            hart,
            pc: r.pc,
            raw: r.raw,
            rd: r.rd,
            value: r.value,
        };
        let mut h = FnvHasher::with_key(self.hash);
        rec.hash_into(&mut h);
        self.hash = h.finish();
        if self.config.trace {
            self.trace.push(rec);
        }
    }

    /// Advances one clock cycle.
    pub fn step(&mut self) {
        if !self.is_running() {
            return;
        }
        let now = self.cycle;
        let lockstep = self.odrg.mode == Mode::Lockstep;

        for h in 0..3 {
            let (ext, sw) = if lockstep {
                (self.odrg.resync_irq(), self.odrg.sw_irq[0])
            } else {
                (false, self.odrg.sw_irq[h])
            };
            self.cores[h].set_irq(ext, sw);
        }
        let outs: [CoreOutputs; 3] = std::array::from_fn(|h| self.cores[h].outputs());

        // Logical initiators in priority order.
        let mut ports: Vec<(PortId, BusRequest)> = Vec::with_capacity(6);
        let mut voted_sleeping = false;
        if lockstep {
            let v = vote(&outs[0], &outs[1], &outs[2]);
            self.odrg.record(v.disagreeing);
            if v.disagreeing == Disagreement::AllDiffer || self.odrg.unrecoverable {
                self.status = RunStatus::Unrecoverable;
                return;
            }
            voted_sleeping = v.value.sleeping;
            ports.extend(v.value.data_req.map(|r| (PortId::VotedData, r)));
            ports.extend(v.value.instr_req.map(|r| (PortId::VotedInstr, r)));
        } else {
            for (h, o) in outs.iter().enumerate() {
                ports.extend(o.data_req.map(|r| (PortId::CoreData(h as u8), r)));
                ports.extend(o.instr_req.map(|r| (PortId::CoreInstr(h as u8), r)));
            }
        }

        let mut resp: Vec<Option<BusResponse>> = vec![None; ports.len()];
        let mut bank_reqs = Vec::with_capacity(ports.len() + 1);
        let mut bank_owner = Vec::with_capacity(ports.len() + 1);
        for (i, (port, req)) in ports.iter().enumerate() {
            match map::decode(req.addr) {
                Region::Sram(off) => {
                    let (bank, _) = bank_of(off).expect("inside SRAM");
                    bank_reqs.push(BankRequest { port: *port, bank });
                    bank_owner.push(Some(i));
                }
                region => resp[i] = Some(self.device_access(region, req)),
            }
        }
        if let Some(addr) = self.scrubber.due(now) {
            let (bank, _) = bank_of(addr).expect("scrub address inside SRAM");
            bank_reqs.push(BankRequest {
                port: PortId::Scrubber,
                bank,
            });
            bank_owner.push(None);
        }
        let busy: [bool; NUM_BANKS] = std::array::from_fn(|b| self.mem.is_busy(b, now));
        let grants = self.xbar.arbitrate(&bank_reqs, &busy);
        for ((breq, owner), granted) in bank_reqs.iter().zip(&bank_owner).zip(grants) {
            match owner {
                None => {
                    self.scrubber.scrub_step(&mut self.mem, now, !granted);
                }
                Some(i) if granted => {
                    let (_, req) = ports[*i];
                    let off = (req.addr - map::SRAM_BASE) & !3;
                    let init: Initiator = breq.port.initiator();
                    resp[*i] = Some(if req.write {
                        self.mem
                            .write_word(MemAccess::write(off, req.strobes, req.wdata, init), now)
                            .expect("inside SRAM");
                        BusResponse::ok(0)
                    } else {
                        let r = self
                            .mem
                            .read_word(MemAccess::read(off, init), now)
                            .expect("inside SRAM");
                        if r.status == EccStatus::Uncorrectable {
                            BusResponse::error()
                        } else {
                            BusResponse::ok(r.data)
                        }
                    });
                }
                Some(_) => {}
            }
        }

        let find = |port: PortId| {
            ports
                .iter()
                .position(|(p, _)| *p == port)
                .and_then(|i| resp[i])
        };
        if lockstep {
            let r = Responses {
                instr: find(PortId::VotedInstr),
                data: find(PortId::VotedData),
            };
            let infos: [_; 3] = std::array::from_fn(|h| self.cores[h].commit(r).retired);
            if let Some(ret) = vote(&infos[0], &infos[1], &infos[2]).value {
                self.record_retire(0, &ret);
            }
        } else {
            for h in 0..3 {
                let r = Responses {
                    instr: find(PortId::CoreInstr(h as u8)),
                    data: find(PortId::CoreData(h as u8)),
                };
                if let Some(ret) = self.cores[h].commit(r).retired {
                    self.record_retire(h as u8, &ret);
                }
            }
        }

        self.cycle += 1;
        if self.odrg.take_reset_pulse() {
            self.reset_cores(true);
        }
        let all_sleeping = if lockstep {
            voted_sleeping
        } else {
            self.cores.iter().all(Core::is_sleeping)
        };
        if self.odrg.try_switch(all_sleeping).is_some() {
            self.reset_cores(true);
        }
        if self.simctl.trap.is_some() {
            self.status = RunStatus::GuestTrap;
        } else if self.simctl.exit.is_some() {
            self.status = RunStatus::Exited;
        }
    }

    /// Steps until the guest exits, an unrecoverable error occurs or the
    /// cycle count reaches `max_cycles`.
    pub fn run(&mut self, max_cycles: u64) -> RunResult {
        self.run_until(max_cycles);
        if self.is_running() {
            self.status = RunStatus::Timeout;
        }
        self.result()
    }

    /// Steps while running and `cycle < until`. Does not flag a timeout.
    pub fn run_until(&mut self, until: u64) {
        while self.is_running() && self.cycle < until {
            self.step();
        }
    }

    pub fn result(&self) -> RunResult {
        let ecc = EccReport {
            correctable: self.mem.total_counters().correctable,
            uncorrectable: self.mem.total_counters().uncorrectable,
            per_bank: (0..NUM_BANKS).map(|b| self.mem.counters(b).clone()).collect(),
        };
        RunResult {
            program: self.program.clone(),
            mode: self.config.mode,
            status: self.status,
            exit_code: self.simctl.exit,
            cycles: self.cycle,
            region_cycles: self.simctl.region_cycles,
            signature: self.simctl.signature,
            instret: std::array::from_fn(|h| self.cores[h].state().csr.minstret),
            uart: String::from_utf8_lossy(&self.uart).into_owned(),
            guest_trap: self.simctl.trap,
            ecc,
            scrubber: self.scrubber.stats.clone(),
            odrg: OdrgReport {
                mode: self.odrg.mode,
                mismatch_count: self.odrg.mismatch_count,
                resync_events: self.odrg.resync_events,
                unrecoverable: self.odrg.unrecoverable,
            },
            interconnect: self.xbar.stats.clone(),
            trace_hash: format!("{:016x}", self.trace_hash()),
        }
    }

    pub fn observables(&self) -> Observables {
        let mut sram = self.mem.dump();
        sram.truncate((map::STACK_REGION - map::SRAM_BASE) as usize);
        Observables {
            exit_code: self.simctl.exit,
            uart: self.uart.clone(),
            signature: self.simctl.signature,
            sram,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::asm::{assemble, Program};

    fn boot(src: &str, mode: RunMode) -> Soc {
        let image = assemble(&Program::new("t", src), map::SRAM_BASE).unwrap();
        let mut soc = Soc::new(SocConfig::new(mode));
        soc.load_image("t", &image).unwrap();
        soc
    }

    const EXIT0: &str = "
    _start:
        li t0, 0x1B400000
        sw zero, 0(t0)
    ";

    #[test]
    fn empty_program_exits_quickly() {
        for mode in [RunMode::Lockstep, RunMode::Single] {
            let r = boot(EXIT0, mode).run(1000);
            assert_eq!(r.status, RunStatus::Exited);
            assert_eq!(r.exit_code, Some(0));
            assert!(r.cycles < 100, "{}", r.cycles);
        }
    }

    #[test]
    fn lockstep_and_single_agree_on_empty_program() {
        let a = boot(EXIT0, RunMode::Lockstep).run(1000);
        let b = boot(EXIT0, RunMode::Single).run(1000);
        assert_eq!(a.cycles, b.cycles);
        assert_eq!(a.trace_hash, b.trace_hash);
    }

    #[test]
    fn uart_bytes_in_order() {
        let src = "
        _start:
            li t0, 0x1B300000
            li t1, 0x68
            sw t1, 0(t0)
            li t1, 0x69
            sw t1, 0(t0)
            li t0, 0x1B400000
            sw zero, 0(t0)
        ";
        let r = boot(src, RunMode::Lockstep).run(1000);
        assert_eq!(r.uart, "hi");
    }

    #[test]
    fn boot_sets_stack_and_hartid() {
        let src = "
        _start:
            la t0, out
            slli t1, a0, 3
            add t0, t0, t1
            sw sp, 0(t0)
            sw a0, 4(t0)
            bnez a0, park
            li t2, 20000
        spin:
            addi t2, t2, -1
            bnez t2, spin
            li t0, 0x1B400000
            sw zero, 0(t0)
        park:
            wfi
            j park
        .align 2
        out: .word 0, 0, 0, 0, 0, 0
        ";
        let image = assemble(&Program::new("t", src), map::SRAM_BASE).unwrap();
        let out = image.symbol("out").unwrap();
        let mut soc = Soc::new(SocConfig::new(RunMode::Parallel));
        soc.load_image("t", &image).unwrap();
        let r = soc.run(100_000);
        assert_eq!(r.status, RunStatus::Exited);
        let words: Vec<u32> = (0..6)
            .map(|i| soc.memory().peek(((out - map::SRAM_BASE) / 4 + i) as usize))
            .collect();
        for h in 0..3u32 {
            assert_eq!(words[2 * h as usize], map::STACK_TOP - h * map::STACK_SIZE);
            assert_eq!(words[2 * h as usize + 1], h);
        }
    }

    #[test]
    fn guest_trap_ends_run() {
        let r = boot("_start:\n ecall", RunMode::Lockstep).run(1000);
        assert_eq!(r.status, RunStatus::GuestTrap);
        assert_eq!(r.guest_trap, Some(crate::cpu::cause::ECALL_M));
    }

    #[test]
    fn unmapped_and_sub_word_register_accesses_fault() {
        let r = boot("_start:\n lw t0, 0(zero)", RunMode::Lockstep).run(1000);
        assert_eq!(r.guest_trap, Some(crate::cpu::cause::LOAD_ACCESS));
        let r = boot("_start:\n li t0, 0x1B300000\n sb zero, 0(t0)", RunMode::Lockstep).run(1000);
        assert_eq!(r.guest_trap, Some(crate::cpu::cause::STORE_ACCESS));
        let r = boot("_start:\n li t0, 0x1A000000\n sw zero, 0(t0)", RunMode::Lockstep).run(1000);
        assert_eq!(r.guest_trap, Some(crate::cpu::cause::STORE_ACCESS));
    }

    #[test]
    fn timeout_is_flagged() {
        let r = boot("_start:\n j _start", RunMode::Lockstep).run(500);
        assert_eq!(r.status, RunStatus::Timeout);
        assert_eq!(r.cycles, 500);
    }

    #[test]
    fn mcycle_matches_scheduler_cycle() {
        let src = "
        _start:
            csrr t1, mcycle
            la t0, out
            sw t1, 0(t0)
            li t0, 0x1B400000
            sw zero, 0(t0)
        .align 2
        out: .word 0
        ";
        let image = assemble(&Program::new("t", src), map::SRAM_BASE).unwrap();
        let mut soc = Soc::new(SocConfig {
            trace: true,
            ..SocConfig::default()
        });
        soc.load_image("t", &image).unwrap();
        soc.run(1000);
        let first = soc
            .trace()
            .iter()
            .find(|t| t.pc == image.entry)
            .copied()
            .unwrap();
        // The csrr retires in the cycle it executes.
        assert_eq!(u64::from(first.value), first.cycle);
    }

    #[test]
    fn load_errors() {
        let mut soc = Soc::new(SocConfig::default());
        let big = vec![0u8; map::SRAM_SIZE as usize + 4];
        assert!(matches!(
            soc.load_bytes("big", map::SRAM_BASE, &big, map::SRAM_BASE),
            Err(LoadError::OutsideSram { .. })
        ));
        assert!(matches!(
            soc.load_bytes("rom", map::ROM_BASE, &[0; 4], map::ROM_BASE),
            Err(LoadError::OutsideSram { .. })
        ));
        assert!(matches!(
            soc.load_bytes("stk", map::STACK_REGION - 4, &[0; 8], map::SRAM_BASE),
            Err(LoadError::StackOverlap { .. })
        ));
    }

    #[test]
    fn load_then_dump_roundtrip() {
        let mut soc = Soc::new(SocConfig::default());
        let bytes: Vec<u8> = (0..1000u32).map(|i| (i * 7) as u8).collect();
        soc.load_bytes("x", map::SRAM_BASE + 0x100, &bytes, map::SRAM_BASE).unwrap();
        assert_eq!(&soc.observables().sram[0x100..0x100 + 1000], &bytes[..]);
    }

    #[test]
    fn result_json_key_order_is_stable() {
        let r = boot(EXIT0, RunMode::Lockstep).run(1000);
        let json = r.to_json();
        let keys: Vec<usize> = ["\"program\"", "\"mode\"", "\"status\"", "\"exit_code\"", "\"cycles\"", "\"trace_hash\""]
            .iter()
            .map(|k| json.find(k).unwrap())
            .collect();
        assert!(keys.windows(2).all(|w| w[0] < w[1]));
        let back: RunResult = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
    }
}
