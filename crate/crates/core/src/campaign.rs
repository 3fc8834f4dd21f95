//! Fault injection: targets, schedules, outcome classification and the
//! campaign runner.
//!
//! Every run starts from the same loaded image, steps to each fault's cycle,
//! applies it between cycles and runs to completion. The result is diffed
//! against a fault-free golden run.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::asm::Image;
use crate::ecc::CODE_BITS;
use crate::isa::{csr, parse_reg};
use crate::kernels;
use crate::memory::{NUM_BANKS, ROWS_PER_BANK};
use crate::soc::{LoadError, Observables, RunMode, RunResult, RunStatus, Soc, SocConfig};

pub const SCHEMA_VERSION: u32 = 1;

/// Core state element a fault can hit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum CoreField {
    Reg(u8),
    Pc,
    Csr(u16),
}

/// CSRs open to injection. Counters and `mip` are rewritten every cycle.
pub const INJECTABLE_CSRS: [u16; 5] = [csr::MSTATUS, csr::MIE, csr::MTVEC, csr::MEPC, csr::MCAUSE];

impl FromStr for CoreField {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s == "pc" {
            return Ok(CoreField::Pc);
        }
        if let Some(c) = csr::parse(s).filter(|c| INJECTABLE_CSRS.contains(c)) {
            return Ok(CoreField::Csr(c));
        }
        match parse_reg(s) {
            Some(0) => Err("x0 is hardwired and cannot be a fault target".into()),
            Some(r) => Ok(CoreField::Reg(r)),
            None => Err(format!("unknown core field `{s}`")),
        }
    }
}

impl TryFrom<String> for CoreField {
    type Error = String;

    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

impl From<CoreField> for String {
    fn from(f: CoreField) -> String {
        f.to_string()
    }
}

impl fmt::Display for CoreField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoreField::Reg(r) => write!(f, "x{r}"),
            CoreField::Pc => f.write_str("pc"),
            CoreField::Csr(c) => f.write_str(csr::name(*c).unwrap_or("csr?")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultTarget {
    Core { hart: u8, field: CoreField, bit: u8 },
    Memory { bank: u8, row: u16, bit: u8 },
    WriteMask { bank: u8, bit: u8 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    CoreReg,
    CorePc,
    CoreCsr,
    Memory,
    WriteMask,
}

impl Category {
    pub const ALL: [Category; 5] = [
        Category::CoreReg,
        Category::CorePc,
        Category::CoreCsr,
        Category::Memory,
        Category::WriteMask,
    ];

    pub const CORE: [Category; 3] = [Category::CoreReg, Category::CorePc, Category::CoreCsr];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::CoreReg => "core_reg",
            Category::CorePc => "core_pc",
            Category::CoreCsr => "core_csr",
            Category::Memory => "memory",
            Category::WriteMask => "write_mask",
        }
    }
}

impl FaultTarget {
    pub fn category(&self) -> Category {
        match self {
            FaultTarget::Core { field: CoreField::Reg(_), .. } => Category::CoreReg,
            FaultTarget::Core { field: CoreField::Pc, .. } => Category::CorePc,
            FaultTarget::Core { field: CoreField::Csr(_), .. } => Category::CoreCsr,
            FaultTarget::Memory { .. } => Category::Memory,
            FaultTarget::WriteMask { .. } => Category::WriteMask,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let ok = match *self {
            FaultTarget::Core { hart, field, bit } => {
                hart < 3
                    && bit < 32
                    && match field {
                        CoreField::Reg(r) => (1..32).contains(&r),
                        CoreField::Pc => true,
                        CoreField::Csr(c) => INJECTABLE_CSRS.contains(&c),
                    }
            }
            FaultTarget::Memory { bank, row, bit } => {
                usize::from(bank) < NUM_BANKS
                    && usize::from(row) < ROWS_PER_BANK
                    && usize::from(bit) < CODE_BITS
            }
            FaultTarget::WriteMask { bank, bit } => {
                usize::from(bank) < NUM_BANKS && usize::from(bit) < CODE_BITS
            }
        };
        if ok {
            Ok(())
        } else {
            Err(format!("fault target out of range: {self}"))
        }
    }
}

impl fmt::Display for FaultTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FaultTarget::Core { hart, field, bit } => write!(f, "core:{hart}:{field}:{bit}"),
            FaultTarget::Memory { bank, row, bit } => write!(f, "mem:{bank}:{row}:{bit}"),
            FaultTarget::WriteMask { bank, bit } => write!(f, "wmask:{bank}:{bit}"),
        }
    }
}

/// One SEU, applied between cycle `at_cycle - 1` and `at_cycle`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FaultEvent {
    pub at_cycle: u64,
    pub target: FaultTarget,
}

impl fmt::Display for FaultEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.target, self.at_cycle)
    }
}

/// Compact form: `core:HART:FIELD:BIT@CYCLE`, `mem:BANK:ROW:BIT@CYCLE` or
/// `wmask:BANK:BIT@CYCLE`.
impl FromStr for FaultEvent {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (t, cycle) = s
            .split_once('@')
            .ok_or_else(|| format!("fault `{s}` lacks @CYCLE"))?;
        let at_cycle = cycle
            .parse()
            .map_err(|_| format!("bad cycle in fault `{s}`"))?;
        let parts: Vec<&str> = t.split(':').collect();
        let num = |p: &str| -> Result<u64, String> {
            p.parse().map_err(|_| format!("bad number `{p}` in fault `{s}`"))
        };
        let narrow = |v: u64| -> Result<u8, String> {
            u8::try_from(v).map_err(|_| format!("value {v} out of range in fault `{s}`"))
        };
        let target = match parts.as_slice() {
            ["core", hart, field, bit] => FaultTarget::Core {
                hart: narrow(num(hart)?)?,
                field: field.parse()?,
                bit: narrow(num(bit)?)?,
            },
            ["mem", bank, row, bit] => FaultTarget::Memory {
                bank: narrow(num(bank)?)?,
                row: u16::try_from(num(row)?).map_err(|_| format!("row out of range in `{s}`"))?,
                bit: narrow(num(bit)?)?,
            },
            ["wmask", bank, bit] => FaultTarget::WriteMask {
                bank: narrow(num(bank)?)?,
                bit: narrow(num(bit)?)?,
            },
            _ => return Err(format!("unrecognised fault `{s}`")),
        };
        target.validate()?;
        Ok(FaultEvent { at_cycle, target })
    }
}

/// Applies one fault to a paused simulation.
pub fn inject(soc: &mut Soc, target: &FaultTarget) {
    match *target {
        FaultTarget::Core { hart, field, bit } => {
            let core = soc.core_mut(usize::from(hart));
            let mut state = core.dump_state();
            let mask = 1u32 << bit;
            match field {
                CoreField::Reg(r) => state.regs[usize::from(r)] ^= mask,
                CoreField::Pc => state.pc ^= mask,
                CoreField::Csr(c) => {
                    let f = &mut state.csr;
                    match c {
                        csr::MSTATUS => f.mstatus ^= mask,
                        csr::MIE => f.mie ^= mask,
                        csr::MTVEC => f.mtvec ^= mask,
                        csr::MEPC => f.mepc ^= mask,
                        csr::MCAUSE => f.mcause ^= mask,
                        _ => unreachable!("validated target"),
                    }
                }
            }
            core.load_state(state);
        }
        FaultTarget::Memory { bank, row, bit } => soc
            .memory_mut()
            .flip_bit(usize::from(bank), usize::from(row), usize::from(bit))
            .expect("validated target"),
        FaultTarget::WriteMask { bank, bit } => {
            let mem = soc.memory_mut();
            let m = mem.write_disable_mask(usize::from(bank));
            mem.set_write_disable_mask(usize::from(bank), m | (1 << bit));
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeClass {
    MaskedVoter,
    CorrectedEcc,
    Resynced,
    DetectedUncorrectable,
    SilentDataCorruption,
    Crash,
    Timeout,
}

impl OutcomeClass {
    pub fn as_str(self) -> &'static str {
        match self {
            OutcomeClass::MaskedVoter => "masked_voter",
            OutcomeClass::CorrectedEcc => "corrected_ecc",
            OutcomeClass::Resynced => "resynced",
            OutcomeClass::DetectedUncorrectable => "detected_uncorrectable",
            OutcomeClass::SilentDataCorruption => "silent_data_corruption",
            OutcomeClass::Crash => "crash",
            OutcomeClass::Timeout => "timeout",
        }
    }
}

impl fmt::Display for OutcomeClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// What a finished run leaves behind for classification.
#[derive(Clone, Debug)]
pub struct RunArtifacts {
    pub result: RunResult,
    pub observables: Observables,
}

impl RunArtifacts {
    pub fn capture(soc: &Soc) -> Self {
        RunArtifacts {
            result: soc.result(),
            observables: soc.observables(),
        }
    }
}

/// Classifies a faulty run against the golden one. First match wins:
/// timeout, detected uncorrectable, crash, SDC, resynced, corrected ECC,
/// masked.
pub fn classify(golden: &RunArtifacts, run: &RunArtifacts) -> OutcomeClass {
    let (g, r) = (&golden.result, &run.result);
    match r.status {
        RunStatus::Timeout | RunStatus::Running => return OutcomeClass::Timeout,
        _ if r.ecc.uncorrectable > g.ecc.uncorrectable => {
            return OutcomeClass::DetectedUncorrectable
        }
        RunStatus::Unrecoverable | RunStatus::GuestTrap => return OutcomeClass::Crash,
        RunStatus::Exited => {}
    }
    if run.observables != golden.observables {
        OutcomeClass::SilentDataCorruption
    } else if r.odrg.resync_events > g.odrg.resync_events {
        OutcomeClass::Resynced
    } else if r.ecc.correctable > g.ecc.correctable {
        OutcomeClass::CorrectedEcc
    } else {
        OutcomeClass::MaskedVoter
    }
}

#[derive(Debug, Error)]
pub enum CampaignError {
    #[error("invalid campaign spec: {0}")]
    Spec(String),
    #[error("golden run failed: {0}")]
    Golden(String),
    #[error(transparent)]
    Load(#[from] LoadError),
    #[error(transparent)]
    Asm(#[from] crate::asm::AsmError),
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("campaign spec JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("worker pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

/// A loaded program plus the SoC configuration to run it under.
#[derive(Clone, Debug)]
pub struct Target {
    pub name: String,
    pub image: Image,
    pub config: SocConfig,
}

impl Target {
    pub fn kernel(name: &str, config: SocConfig) -> Result<Self, CampaignError> {
        let p = kernels::build(name)
            .ok_or_else(|| CampaignError::Spec(format!("unknown kernel `{name}`")))?;
        Ok(Target {
            name: name.to_owned(),
            image: kernels::assemble_at_sram(&p)?,
            config,
        })
    }

    /// A raw little-endian binary loaded at `base` with entry `entry`.
    pub fn binary(path: &std::path::Path, base: u32, entry: u32, config: SocConfig) -> Result<Self, CampaignError> {
        let bytes = std::fs::read(path).map_err(|source| CampaignError::Io {
            path: path.to_owned(),
            source,
        })?;
        Ok(Target {
            name: path.display().to_string(),
            image: Image {
                base,
                bytes,
                entry,
                symbols: BTreeMap::new(),
            },
            config,
        })
    }

    pub fn boot(&self) -> Result<Soc, LoadError> {
        let mut soc = Soc::new(self.config.clone());
        soc.load_image(&self.name, &self.image)?;
        Ok(soc)
    }

    /// Runs with the given faults applied at their cycles.
    pub fn run_with_faults(&self, faults: &[FaultEvent], max_cycles: u64) -> Result<RunArtifacts, LoadError> {
        Ok(RunArtifacts::capture(&self.simulate(faults, max_cycles)?))
    }

    /// Like [`Target::run_with_faults`] but hands back the finished SoC.
    pub fn simulate(&self, faults: &[FaultEvent], max_cycles: u64) -> Result<Soc, LoadError> {
        let mut soc = self.boot()?;
        let mut order: Vec<&FaultEvent> = faults.iter().collect();
        order.sort_by_key(|f| f.at_cycle);
        for f in order {
            soc.run_until(f.at_cycle.min(max_cycles));
            if !soc.is_running() || soc.cycle() >= max_cycles {
                break;
            }
            inject(&mut soc, &f.target);
        }
        soc.run(max_cycles);
        Ok(soc)
    }

    /// Fault-free reference run. Fails unless the guest exits with code 0.
    pub fn golden(&self, max_cycles: u64) -> Result<RunArtifacts, CampaignError> {
        let g = self.run_with_faults(&[], max_cycles)?;
        let r = &g.result;
        if r.status != RunStatus::Exited || r.exit_code != Some(0) {
            return Err(CampaignError::Golden(format!(
                "status {:?}, exit code {:?}, trap {:?}",
                r.status, r.exit_code, r.guest_trap
            )));
        }
        Ok(g)
    }
}

pub const GOLDEN_CYCLE_LIMIT: u64 = 50_000_000;

/// Default per-run budget: twice the golden length plus slack for resyncs.
pub fn default_max_cycles(golden_cycles: u64) -> u64 {
    2 * golden_cycles + 10_000
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FaultPlan {
    /// Uniform over targets in `categories` and over golden-run cycles.
    Random {
        runs: u32,
        #[serde(default = "default_categories")]
        categories: Vec<Category>,
        #[serde(default = "one")]
        faults_per_run: u32,
    },
    /// Every bit of one core field at `cycle_points` evenly spaced cycles.
    Sweep {
        hart: u8,
        field: CoreField,
        #[serde(default = "fifty")]
        cycle_points: u32,
    },
    /// Explicit fault lists, one per run.
    Explicit { runs: Vec<Vec<FaultEvent>> },
}

fn default_categories() -> Vec<Category> {
    Category::CORE.to_vec()
}

fn one() -> u32 {
    1
}

fn fifty() -> u32 {
    50
}

fn default_scrub_interval() -> u64 {
    crate::memory::DEFAULT_SCRUB_INTERVAL
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignSpec {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<String>,
    /// Raw binary loaded at the start of SRAM, entered at its first byte.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub binary: Option<PathBuf>,
    pub mode: RunMode,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_cycles: Option<u64>,
    #[serde(default = "yes")]
    pub scrub_enabled: bool,
    #[serde(default = "default_scrub_interval")]
    pub scrub_interval: u64,
    pub plan: FaultPlan,
}

impl CampaignSpec {
    pub fn from_json(s: &str) -> Result<Self, CampaignError> {
        let spec: CampaignSpec = serde_json::from_str(s)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn random_core(kernel: &str, mode: RunMode, runs: u32, seed: u64) -> Self {
        CampaignSpec {
            schema_version: SCHEMA_VERSION,
            kernel: Some(kernel.into()),
            binary: None,
            mode,
            seed,
            max_cycles: None,
            scrub_enabled: true,
            scrub_interval: default_scrub_interval(),
            plan: FaultPlan::Random {
                runs,
                categories: default_categories(),
                faults_per_run: 1,
            },
        }
    }

    pub fn validate(&self) -> Result<(), CampaignError> {
        let err = |m: String| Err(CampaignError::Spec(m));
        if self.schema_version != SCHEMA_VERSION {
            return err(format!(
                "schema_version {} unsupported (expected {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        match (&self.kernel, &self.binary) {
            (Some(k), None) if kernels::info(k).is_none() => return err(format!("unknown kernel `{k}`")),
            (Some(_), None) | (None, Some(_)) => {}
            _ => return err("exactly one of `kernel` and `binary` is required".into()),
        }
        if self.scrub_interval == 0 {
            return err("scrub_interval must be positive".into());
        }
        match &self.plan {
            FaultPlan::Random {
                categories,
                faults_per_run,
                ..
            } => {
                if categories.is_empty() {
                    return err("random plan needs at least one category".into());
                }
                if *faults_per_run == 0 {
                    return err("faults_per_run must be positive".into());
                }
            }
            FaultPlan::Sweep {
                hart,
                field,
                cycle_points,
            } => {
                FaultTarget::Core {
                    hart: *hart,
                    field: *field,
                    bit: 0,
                }
                .validate()
                .map_err(CampaignError::Spec)?;
                if *cycle_points == 0 {
                    return err("cycle_points must be positive".into());
                }
            }
            FaultPlan::Explicit { runs } => {
                for f in runs.iter().flatten() {
                    f.target.validate().map_err(CampaignError::Spec)?;
                    if let Some(max) = self.max_cycles {
                        if f.at_cycle >= max {
                            return err(format!("fault {f} is past max_cycles {max}"));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    pub fn soc_config(&self) -> SocConfig {
        SocConfig {
            mode: self.mode,
            scrub_enabled: self.scrub_enabled,
            scrub_interval: self.scrub_interval,
            trace: false,
        }
    }

    pub fn target(&self) -> Result<Target, CampaignError> {
        match (&self.kernel, &self.binary) {
            (Some(k), _) => Target::kernel(k, self.soc_config()),
            (None, Some(path)) => {
                let base = crate::soc::map::SRAM_BASE;
                Target::binary(path, base, base, self.soc_config())
            }
            (None, None) => Err(CampaignError::Spec("no program given".into())),
        }
    }

    pub fn run_count(&self) -> usize {
        match &self.plan {
            FaultPlan::Random { runs, .. } => *runs as usize,
            FaultPlan::Sweep { cycle_points, .. } => 32 * *cycle_points as usize,
            FaultPlan::Explicit { runs } => runs.len(),
        }
    }

    /// Faults for run `index`. Depends only on the spec, the golden length
    /// and `index`.
    pub fn faults_for(&self, index: usize, golden_cycles: u64) -> Vec<FaultEvent> {
        match &self.plan {
            FaultPlan::Random {
                categories,
                faults_per_run,
                ..
            } => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                rng.set_stream(index as u64);
                (0..*faults_per_run)
                    .map(|_| random_fault(&mut rng, categories, self.mode, golden_cycles))
                    .collect()
            }
            FaultPlan::Sweep {
                hart,
                field,
                cycle_points,
            } => {
                let points = u64::from(*cycle_points);
                let (point, bit) = (index as u64 / 32, (index % 32) as u8);
                vec![FaultEvent {
                    at_cycle: point * golden_cycles / points,
                    target: FaultTarget::Core {
                        hart: *hart,
                        field: *field,
                        bit,
                    },
                }]
            }
            FaultPlan::Explicit { runs } => runs[index].clone(),
        }
    }
}

fn random_fault(rng: &mut ChaCha8Rng, categories: &[Category], mode: RunMode, cycles: u64) -> FaultEvent {
    let at_cycle = rng.random_range(0..cycles.max(1));
    // In single mode harts 1 and 2 are parked and carry no live state.
    let harts = if mode == RunMode::Single { 1 } else { 3 };
    let hart = rng.random_range(0..harts);
    let bit32 = rng.random_range(0..32u8);
    let target = match categories[rng.random_range(0..categories.len())] {
        Category::CoreReg => FaultTarget::Core {
            hart,
            field: CoreField::Reg(rng.random_range(1..32)),
            bit: bit32,
        },
        Category::CorePc => FaultTarget::Core {
            hart,
            field: CoreField::Pc,
            bit: bit32,
        },
        Category::CoreCsr => FaultTarget::Core {
            hart,
            field: CoreField::Csr(INJECTABLE_CSRS[rng.random_range(0..INJECTABLE_CSRS.len())]),
            bit: bit32,
        },
        Category::Memory => FaultTarget::Memory {
            bank: rng.random_range(0..NUM_BANKS as u8),
            row: rng.random_range(0..ROWS_PER_BANK as u16),
            bit: rng.random_range(0..CODE_BITS as u8),
        },
        Category::WriteMask => FaultTarget::WriteMask {
            bank: rng.random_range(0..NUM_BANKS as u8),
            bit: rng.random_range(0..CODE_BITS as u8),
        },
    };
    FaultEvent { at_cycle, target }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunRecord {
    pub index: usize,
    pub faults: Vec<FaultEvent>,
    pub outcome: OutcomeClass,
    pub status: RunStatus,
    pub cycles: u64,
    pub resync_events: u32,
    pub mismatches: [u32; 3],
    pub correctable: u64,
    pub uncorrectable: u64,
}

/// Per-class counts in fixed key order.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeCounts {
    pub masked_voter: u64,
    pub corrected_ecc: u64,
    pub resynced: u64,
    pub detected_uncorrectable: u64,
    pub silent_data_corruption: u64,
    pub crash: u64,
    pub timeout: u64,
}

impl OutcomeCounts {
    pub fn add(&mut self, c: OutcomeClass) {
        *self.slot(c) += 1;
    }

    fn slot(&mut self, c: OutcomeClass) -> &mut u64 {
        match c {
            OutcomeClass::MaskedVoter => &mut self.masked_voter,
            OutcomeClass::CorrectedEcc => &mut self.corrected_ecc,
            OutcomeClass::Resynced => &mut self.resynced,
            OutcomeClass::DetectedUncorrectable => &mut self.detected_uncorrectable,
            OutcomeClass::SilentDataCorruption => &mut self.silent_data_corruption,
            OutcomeClass::Crash => &mut self.crash,
            OutcomeClass::Timeout => &mut self.timeout,
        }
    }

    pub fn get(&self, c: OutcomeClass) -> u64 {
        *self.clone().slot(c)
    }

    pub fn total(&self) -> u64 {
        self.masked_voter
            + self.corrected_ecc
            + self.resynced
            + self.detected_uncorrectable
            + self.silent_data_corruption
            + self.crash
            + self.timeout
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CounterTotals {
    pub resync_events: u64,
    pub mismatches: u64,
    pub correctable: u64,
    pub uncorrectable: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldenSummary {
    pub cycles: u64,
    pub exit_code: Option<u32>,
    pub signature: Option<u32>,
    pub trace_hash: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CampaignReport {
    pub schema_version: u32,
    pub program: String,
    pub mode: RunMode,
    pub seed: u64,
    pub runs: usize,
    pub max_cycles: u64,
    pub golden: GoldenSummary,
    pub outcomes: OutcomeCounts,
    pub by_category: BTreeMap<Category, OutcomeCounts>,
    pub totals: CounterTotals,
    pub records: Vec<RunRecord>,
}

impl CampaignReport {
    /// Builds the report from records in any order.
    pub fn aggregate(spec: &CampaignSpec, program: String, max_cycles: u64, golden: GoldenSummary, mut records: Vec<RunRecord>) -> Self {
        records.sort_by_key(|r| r.index);
        let mut outcomes = OutcomeCounts::default();
        let mut by_category: BTreeMap<Category, OutcomeCounts> = BTreeMap::new();
        let mut totals = CounterTotals::default();
        for r in &records {
            outcomes.add(r.outcome);
            let mut cats: Vec<Category> = r.faults.iter().map(|f| f.target.category()).collect();
            cats.sort();
            cats.dedup();
            for c in cats {
                by_category.entry(c).or_default().add(r.outcome);
            }
            totals.resync_events += u64::from(r.resync_events);
            totals.mismatches += r.mismatches.iter().map(|&m| u64::from(m)).sum::<u64>();
            totals.correctable += r.correctable;
            totals.uncorrectable += r.uncorrectable;
        }
        CampaignReport {
            schema_version: SCHEMA_VERSION,
            program,
            mode: spec.mode,
            seed: spec.seed,
            runs: records.len(),
            max_cycles,
            golden,
            outcomes,
            by_category,
            totals,
            records,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

fn record(index: usize, faults: Vec<FaultEvent>, golden: &RunArtifacts, run: &RunArtifacts) -> RunRecord {
    let r = &run.result;
    RunRecord {
        index,
        outcome: classify(golden, run),
        status: r.status,
        cycles: r.cycles,
        resync_events: r.odrg.resync_events,
        mismatches: r.odrg.mismatch_count,
        correctable: r.ecc.correctable,
        uncorrectable: r.ecc.uncorrectable,
        faults,
    }
}

/// Runs the golden reference, then every faulty run on `jobs` workers.
pub fn run_campaign(spec: &CampaignSpec, jobs: usize) -> Result<CampaignReport, CampaignError> {
    spec.validate()?;
    let target = spec.target()?;
    let golden = target.golden(spec.max_cycles.unwrap_or(GOLDEN_CYCLE_LIMIT))?;
    let golden_cycles = golden.result.cycles;
    let max_cycles = spec.max_cycles.unwrap_or_else(|| default_max_cycles(golden_cycles));
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build()?;
    let records: Vec<RunRecord> = pool.install(|| {
        (0..spec.run_count())
            .into_par_iter()
            .map(|i| {
                let faults = spec.faults_for(i, golden_cycles);
                let run = target
                    .run_with_faults(&faults, max_cycles)
                    .expect("image loaded for golden run");
                record(i, faults, &golden, &run)
            })
            .collect()
    });
    let summary = GoldenSummary {
        cycles: golden_cycles,
        exit_code: golden.result.exit_code,
        signature: golden.result.signature,
        trace_hash: golden.result.trace_hash.clone(),
    };
    Ok(CampaignReport::aggregate(spec, target.name.clone(), max_cycles, summary, records))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn target(kernel: &str, mode: RunMode) -> Target {
        Target::kernel(kernel, SocConfig::new(mode)).unwrap()
    }

    #[test]
    fn fault_strings_roundtrip() {
        for s in ["core:1:x10:3@100", "core:0:pc:31@0", "core:2:mstatus:3@7", "mem:7:8191:38@5", "wmask:0:12@9"] {
            let f: FaultEvent = s.parse().unwrap();
            assert_eq!(f.to_string(), s);
        }
        assert_eq!(
            "core:1:a0:3@100".parse::<FaultEvent>().unwrap().to_string(),
            "core:1:x10:3@100"
        );
    }

    #[test]
    fn invalid_targets_rejected() {
        for s in [
            "core:3:x10:3@1",
            "core:0:x0:3@1",
            "core:0:x10:32@1",
            "core:0:mcycle:0@1",
            "mem:8:0:0@1",
            "mem:0:8192:0@1",
            "mem:0:0:39@1",
            "wmask:0:39@1",
            "core:0:x10:3",
            "disk:0@1",
        ] {
            assert!(s.parse::<FaultEvent>().is_err(), "{s}");
        }
    }

    #[test]
    fn spec_json_roundtrip_and_validation() {
        let spec = CampaignSpec::random_core("matmul3", RunMode::Lockstep, 10, 7);
        let json = serde_json::to_string(&spec).unwrap();
        assert_eq!(CampaignSpec::from_json(&json).unwrap(), spec);

        let bad = json.replace("\"schema_version\":1", "\"schema_version\":9");
        assert!(matches!(CampaignSpec::from_json(&bad), Err(CampaignError::Spec(_))));
        let bad = json.replace("matmul3", "nope");
        assert!(CampaignSpec::from_json(&bad).is_err());
        let bad = json.replace("\"seed\"", "\"sed\"");
        assert!(CampaignSpec::from_json(&bad).is_err());
    }

    #[test]
    fn explicit_fault_past_budget_rejected() {
        let mut spec = CampaignSpec::random_core("matmul3", RunMode::Lockstep, 1, 0);
        spec.max_cycles = Some(100);
        spec.plan = FaultPlan::Explicit {
            runs: vec![vec!["mem:0:0:0@100".parse().unwrap()]],
        };
        assert!(spec.validate().is_err());
    }

    #[test]
    fn lockstep_register_fault_is_masked() {
        let t = target("matmul8", RunMode::Lockstep);
        let golden = t.golden(1_000_000).unwrap();
        let f: FaultEvent = "core:1:x10:3@3000".parse().unwrap();
        let run = t.run_with_faults(&[f], 100_000).unwrap();
        let c = classify(&golden, &run);
        assert!(matches!(c, OutcomeClass::MaskedVoter | OutcomeClass::Resynced), "{c}");
    }

    #[test]
    fn single_memory_flip_is_corrected() {
        let t = target("matmul3", RunMode::Lockstep);
        let golden = t.golden(1_000_000).unwrap();
        let a = t.image.symbol("mat_a").unwrap() - crate::soc::map::SRAM_BASE;
        let (bank, row) = crate::memory::bank_of(a).unwrap();
        let f = FaultEvent {
            at_cycle: 0,
            target: FaultTarget::Memory {
                bank: bank as u8,
                row: row as u16,
                bit: 5,
            },
        };
        let run = t.run_with_faults(&[f], 100_000).unwrap();
        assert_eq!(classify(&golden, &run), OutcomeClass::CorrectedEcc);
    }

    #[test]
    fn double_memory_flip_is_detected() {
        let t = target("matmul3", RunMode::Lockstep);
        let golden = t.golden(1_000_000).unwrap();
        let a = t.image.symbol("mat_a").unwrap() - crate::soc::map::SRAM_BASE;
        let (bank, row) = crate::memory::bank_of(a).unwrap();
        let faults: Vec<FaultEvent> = [5, 9]
            .iter()
            .map(|&bit| FaultEvent {
                at_cycle: 0,
                target: FaultTarget::Memory {
                    bank: bank as u8,
                    row: row as u16,
                    bit,
                },
            })
            .collect();
        let run = t.run_with_faults(&faults, 100_000).unwrap();
        assert_eq!(classify(&golden, &run), OutcomeClass::DetectedUncorrectable);
    }

    #[test]
    fn unprotected_single_mode_shows_sdc() {
        let spec = CampaignSpec {
            plan: FaultPlan::Random {
                runs: 60,
                categories: vec![Category::CoreReg],
                faults_per_run: 1,
            },
            ..CampaignSpec::random_core("matmul3", RunMode::Single, 0, 11)
        };
        let report = run_campaign(&spec, 2).unwrap();
        assert!(report.outcomes.silent_data_corruption > 0, "{:?}", report.outcomes);
    }

    #[test]
    fn report_independent_of_jobs_and_order() {
        let spec = CampaignSpec::random_core("matmul3", RunMode::Lockstep, 24, 3);
        let a = run_campaign(&spec, 1).unwrap();
        let b = run_campaign(&spec, 4).unwrap();
        assert_eq!(a, b);
        let mut shuffled = a.records.clone();
        shuffled.reverse();
        shuffled.swap(0, 5);
        let c = CampaignReport::aggregate(&spec, a.program.clone(), a.max_cycles, a.golden.clone(), shuffled);
        assert_eq!(a, c);
        assert_eq!(a.outcomes.total(), 24);
    }

    #[test]
    fn runs_are_independent() {
        let spec = CampaignSpec::random_core("matmul3", RunMode::Lockstep, 8, 21);
        let full = run_campaign(&spec, 2).unwrap();
        let t = spec.target().unwrap();
        let golden = t.golden(GOLDEN_CYCLE_LIMIT).unwrap();
        let r = &full.records[5];
        let alone = t.run_with_faults(&spec.faults_for(5, golden.result.cycles), full.max_cycles).unwrap();
        assert_eq!(classify(&golden, &alone), r.outcome);
    }

    #[test]
    fn failing_golden_aborts() {
        let spec = CampaignSpec {
            max_cycles: Some(50),
            ..CampaignSpec::random_core("matmul3", RunMode::Lockstep, 1, 0)
        };
        assert!(matches!(run_campaign(&spec, 1), Err(CampaignError::Golden(_))));
    }

    proptest! {
        #[test]
        fn random_faults_are_valid(seed in any::<u64>(), index in 0usize..1000, cycles in 1u64..1_000_000) {
            let mut spec = CampaignSpec::random_core("matmul3", RunMode::Lockstep, 1, seed);
            spec.plan = FaultPlan::Random { runs: 1, categories: Category::ALL.to_vec(), faults_per_run: 3 };
            let faults = spec.faults_for(index, cycles);
            prop_assert_eq!(faults.len(), 3);
            for f in &faults {
                prop_assert!(f.target.validate().is_ok());
                prop_assert!(f.at_cycle < cycles);
            }
            prop_assert_eq!(spec.faults_for(index, cycles), faults);
        }

        #[test]
        fn sweep_covers_every_bit(points in 1u32..60, cycles in 100u64..100_000) {
            let mut spec = CampaignSpec::random_core("matmul3", RunMode::Lockstep, 1, 0);
            spec.plan = FaultPlan::Sweep { hart: 1, field: CoreField::Reg(10), cycle_points: points };
            let all: Vec<FaultEvent> = (0..spec.run_count()).flat_map(|i| spec.faults_for(i, cycles)).collect();
            let distinct: std::collections::BTreeSet<_> = all.iter().collect();
            prop_assert_eq!(distinct.len(), 32 * points as usize);
        }
    }
}
