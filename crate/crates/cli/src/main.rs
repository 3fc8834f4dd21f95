//! `lsim`: run guest programs, inspect kernels and the ECC code, and drive
//! fault-injection campaigns. JSON goes to stdout, human summaries to stderr.

use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use lockstep_sim::asm::Image;
use lockstep_sim::campaign::{self, CampaignSpec, FaultEvent, FaultPlan, OutcomeClass, Target};
use lockstep_sim::ecc::{self, Codeword39, EccStatus};
use lockstep_sim::kernels;
use lockstep_sim::memory::DEFAULT_SCRUB_INTERVAL;
use lockstep_sim::soc::{map, RunMode, RunResult, RunStatus, SocConfig};

mod exit {
    pub const OK: u8 = 0;
    /// Guest trap, nonzero guest exit code, or a host-side error.
    pub const FAILURE: u8 = 1;
    pub const TIMEOUT: u8 = 2;
    pub const UNRECOVERABLE: u8 = 3;
    pub const SDC: u8 = 4;
    pub const USAGE: u8 = 64;
}

#[derive(Parser, Debug)]
#[command(name = "lsim", version, about = "Triple-core lockstep RV32IMC microcontroller simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one program and print its report as JSON.
    Run(RunArgs),
    /// List or emit the built-in kernels.
    #[command(subcommand)]
    Kernels(KernelsCmd),
    /// Encode, decode or show the SEC-DED code.
    #[command(subcommand)]
    Ecc(EccCmd),
    /// Fault-injection campaigns.
    #[command(subcommand)]
    Campaign(CampaignCmd),
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Built-in kernel name (see `kernels list`).
    #[arg(long, value_parser = kernel_names(), conflicts_with = "binary", required_unless_present = "binary")]
    kernel: Option<String>,
    /// Raw little-endian binary loaded at the start of SRAM.
    #[arg(long)]
    binary: Option<PathBuf>,
    /// Entry address for --binary (defaults to the load address).
    #[arg(long, value_parser = parse_u32, requires = "binary")]
    entry: Option<u32>,
    /// lockstep | single | parallel. Defaults to the kernel's own mode.
    #[arg(long)]
    mode: Option<RunMode>,
    #[arg(long, default_value_t = 10_000_000)]
    max_cycles: u64,
    /// Cycles between scrubber steps.
    #[arg(long, default_value_t = DEFAULT_SCRUB_INTERVAL, value_parser = clap::value_parser!(u64).range(1..))]
    scrub_interval: u64,
    #[arg(long)]
    no_scrub: bool,
    /// Print the retire trace to stderr.
    #[arg(long)]
    trace: bool,
    /// Write the retire trace to a file.
    #[arg(long)]
    trace_file: Option<PathBuf>,
    /// Also write the JSON report here.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Inject a fault: core:HART:FIELD:BIT@CYCLE, mem:BANK:ROW:BIT@CYCLE or
    /// wmask:BANK:BIT@CYCLE. Repeatable. Triggers a golden comparison.
    #[arg(long = "fault")]
    faults: Vec<FaultEvent>,
    /// Inject this many random core-state faults drawn from --seed.
    #[arg(long, default_value_t = 0)]
    random_faults: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// No summary on stderr.
    #[arg(short, long)]
    quiet: bool,
}

#[derive(Subcommand, Debug)]
enum KernelsCmd {
    /// Print the catalog as JSON.
    List,
    /// Assemble a kernel and write the raw image (loads at the start of SRAM).
    Emit {
        #[arg(value_parser = kernel_names())]
        name: String,
        #[arg(short, long)]
        output: PathBuf,
        /// Also write an address/word listing next to the image.
        #[arg(long)]
        listing: bool,
    },
}

#[derive(Subcommand, Debug)]
enum EccCmd {
    /// Encode a 32-bit word.
    Encode {
        #[arg(value_parser = parse_u32)]
        word: u32,
    },
    /// Decode a 39-bit codeword (data in bits 0..32, parity in 32..39).
    Decode {
        #[arg(value_parser = parse_u64)]
        codeword: u64,
    },
    /// Print the parity-check matrix.
    Matrix,
}

#[derive(Subcommand, Debug)]
enum CampaignCmd {
    /// Run a campaign described by a JSON spec.
    Run {
        spec: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Worker threads.
        #[arg(short, long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
        jobs: u64,
        /// Override the spec's seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(short, long)]
        quiet: bool,
    },
}

fn kernel_names() -> clap::builder::PossibleValuesParser {
    clap::builder::PossibleValuesParser::new(kernels::CATALOG.iter().map(|k| k.name))
}

fn parse_u64(s: &str) -> Result<u64, String> {
    let t = s.replace('_', "");
    match t.strip_prefix("0x").or_else(|| t.strip_prefix("0X")) {
        Some(h) => u64::from_str_radix(h, 16),
        None => t.parse(),
    }
    .map_err(|e| format!("`{s}`: {e}"))
}

fn parse_u32(s: &str) -> Result<u32, String> {
    u32::try_from(parse_u64(s)?).map_err(|_| format!("`{s}` does not fit in 32 bits"))
}

fn write_out(path: &PathBuf, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn print_json(text: &str) -> Result<()> {
    let mut out = io::stdout().lock();
    match writeln!(out, "{text}") {
        Err(e) if e.kind() == io::ErrorKind::BrokenPipe => Ok(()),
        r => Ok(r?),
    }
}

fn status_exit(r: &RunResult) -> u8 {
    match r.status {
        RunStatus::Exited if r.exit_code == Some(0) => exit::OK,
        RunStatus::Timeout | RunStatus::Running => exit::TIMEOUT,
        RunStatus::Unrecoverable => exit::UNRECOVERABLE,
        RunStatus::Exited | RunStatus::GuestTrap => exit::FAILURE,
    }
}

fn summary(r: &RunResult) -> String {
    let mut s = format!(
        "{} [{}] {:?} after {} cycles",
        r.program, r.mode, r.status, r.cycles
    );
    if let Some(c) = r.exit_code {
        s += &format!(", exit {c}");
    }
    if let Some(t) = r.guest_trap {
        s += &format!(", trap {t} ({})", lockstep_sim::cpu::cause::name(t));
    }
    if let Some(c) = r.region_cycles {
        s += &format!(", region {c} cycles");
    }
    if let Some(sig) = r.signature {
        s += &format!(", signature {sig:#010x}");
    }
    s += &format!(
        "\n  ecc corrected {} uncorrectable {}; resyncs {}; mismatches {:?}",
        r.ecc.correctable, r.ecc.uncorrectable, r.odrg.resync_events, r.odrg.mismatch_count
    );
    s
}

fn cmd_run(a: RunArgs) -> Result<u8> {
    let mode = match (&a.mode, &a.kernel) {
        (Some(m), _) => *m,
        (None, Some(k)) => kernels::info(k).map_or(RunMode::Lockstep, |i| i.mode),
        (None, None) => RunMode::Lockstep,
    };
    let config = SocConfig {
        mode,
        scrub_enabled: !a.no_scrub,
        scrub_interval: a.scrub_interval,
        trace: a.trace || a.trace_file.is_some(),
    };
    let target = match (&a.kernel, &a.binary) {
        (Some(k), _) => Target::kernel(k, config)?,
        (None, Some(p)) => Target::binary(p, map::SRAM_BASE, a.entry.unwrap_or(map::SRAM_BASE), config)?,
        (None, None) => unreachable!("clap requires one"),
    };

    let mut faults = a.faults.clone();
    let golden = if !faults.is_empty() || a.random_faults > 0 {
        let mut gt = target.clone();
        gt.config.trace = false;
        let g = gt.golden(a.max_cycles).context("golden reference run")?;
        if a.random_faults > 0 {
            let spec = CampaignSpec {
                plan: FaultPlan::Random {
                    runs: 1,
                    categories: campaign::Category::CORE.to_vec(),
                    faults_per_run: a.random_faults,
                },
                ..CampaignSpec::random_core("empty", mode, 1, a.seed)
            };
            faults.extend(spec.faults_for(0, g.result.cycles));
        }
        Some(g)
    } else {
        None
    };

    let soc = target.simulate(&faults, a.max_cycles)?;
    let result = soc.result();

    if soc.config().trace {
        let text: String = soc.trace().iter().map(|t| format!("{t}\n")).collect();
        if let Some(p) = &a.trace_file {
            write_out(p, &text)?;
        }
        if a.trace {
            io::stderr().write_all(text.as_bytes())?;
        }
    }
    let json = result.to_json();
    if let Some(p) = &a.report {
        write_out(p, &format!("{json}\n"))?;
    }
    print_json(&json)?;

    let mut code = status_exit(&result);
    if !a.quiet {
        eprintln!("{}", summary(&result));
    }
    if let Some(g) = golden {
        let run = campaign::RunArtifacts::capture(&soc);
        let outcome = campaign::classify(&g, &run);
        if !a.quiet {
            let list: Vec<String> = faults.iter().map(ToString::to_string).collect();
            eprintln!("  faults [{}] -> {outcome}", list.join(", "));
        }
        if outcome == OutcomeClass::SilentDataCorruption {
            code = exit::SDC;
        }
    }
    Ok(code)
}

fn cmd_kernels(k: KernelsCmd) -> Result<u8> {
    match k {
        KernelsCmd::List => {
            print_json(&serde_json::to_string_pretty(kernels::CATALOG)?)?;
        }
        KernelsCmd::Emit { name, output, listing } => {
            let Some(p) = kernels::build(&name) else {
                bail!("unknown kernel `{name}`");
            };
            let image: Image = kernels::assemble_at_sram(&p)?;
            fs::write(&output, &image.bytes).with_context(|| format!("writing {}", output.display()))?;
            if listing {
                let mut text = String::new();
                for (i, w) in image.words_at(image.base, image.bytes.len() / 4).iter().enumerate() {
                    text += &format!("{:08x}: {w:08x}\n", image.base + 4 * i as u32);
                }
                let mut lst = output.clone().into_os_string();
                lst.push(".lst");
                write_out(&PathBuf::from(lst), &text)?;
            }
            eprintln!(
                "{name}: {} bytes at {:#010x}, entry {:#010x}",
                image.bytes.len(),
                image.base,
                image.entry
            );
        }
    }
    Ok(exit::OK)
}

fn codeword_json(cw: Codeword39) -> serde_json::Value {
    serde_json::json!({
        "codeword": format!("{:#012x}", cw.bits()),
        "data": format!("{:#010x}", cw.data()),
        "parity": format!("{:#04x}", cw.parity()),
        "bits": format!("{:039b}", cw.bits()),
    })
}

fn cmd_ecc(e: EccCmd) -> Result<u8> {
    let v = match e {
        EccCmd::Encode { word } => codeword_json(ecc::encode(word)),
        EccCmd::Decode { codeword } => {
            if codeword >> ecc::CODE_BITS != 0 {
                bail!("codeword {codeword:#x} is wider than {} bits", ecc::CODE_BITS);
            }
            let r = ecc::decode(Codeword39::from_bits(codeword));
            let (status, bit) = match r.status {
                EccStatus::Clean => ("clean", None),
                EccStatus::Corrected(b) => ("corrected", Some(b)),
                EccStatus::Uncorrectable => ("uncorrectable", None),
            };
            serde_json::json!({
                "data": format!("{:#010x}", r.data),
                "status": status,
                "corrected_bit": bit,
            })
        }
        EccCmd::Matrix => {
            let m = ecc::codec().matrix();
            serde_json::json!({
                "columns": m.columns.iter().map(|c| format!("{c:07b}")).collect::<Vec<_>>(),
                "row_weights": m.row_weights(),
                "row_data_masks": (0..ecc::PARITY_BITS)
                    .map(|r| format!("{:#010x}", m.row_data_mask(r)))
                    .collect::<Vec<_>>(),
            })
        }
    };
    print_json(&serde_json::to_string_pretty(&v)?)?;
    Ok(exit::OK)
}

fn cmd_campaign(c: CampaignCmd) -> Result<u8> {
    let CampaignCmd::Run {
        spec,
        output,
        jobs,
        seed,
        quiet,
    } = c;
    let text = fs::read_to_string(&spec).with_context(|| format!("reading {}", spec.display()))?;
    let mut s = CampaignSpec::from_json(&text)?;
    if let Some(seed) = seed {
        s.seed = seed;
    }
    // Binary paths in the spec are relative to the spec file.
    if let (Some(b), Some(dir)) = (&s.binary, spec.parent()) {
        if b.is_relative() {
            s.binary = Some(dir.join(b));
        }
    }
    let report = campaign::run_campaign(&s, jobs as usize)?;
    let json = report.to_json();
    if let Some(p) = &output {
        write_out(p, &format!("{json}\n"))?;
    } else {
        print_json(&json)?;
    }
    if !quiet {
        let o = &report.outcomes;
        eprintln!(
            "{} [{}] {} runs: masked {} corrected_ecc {} resynced {} detected {} sdc {} crash {} timeout {}",
            report.program,
            report.mode,
            report.runs,
            o.masked_voter,
            o.corrected_ecc,
            o.resynced,
            o.detected_uncorrectable,
            o.silent_data_corruption,
            o.crash,
            o.timeout
        );
    }
    Ok(exit::OK)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { exit::USAGE } else { exit::OK };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let r = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Kernels(k) => cmd_kernels(k),
        Command::Ecc(e) => cmd_ecc(e),
        Command::Campaign(c) => cmd_campaign(c),
    };
    match r {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("lsim: {e:#}");
            ExitCode::from(exit::FAILURE)
        }
    }
}
