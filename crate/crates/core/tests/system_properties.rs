//! Whole-system invariants checked on the assembled SoC.

use std::collections::BTreeSet;

use proptest::prelude::*;

use lockstep_sim::asm::assemble_source;
use lockstep_sim::campaign::{CoreField, FaultEvent, FaultTarget, Target};
use lockstep_sim::ecc;
use lockstep_sim::kernels;
use lockstep_sim::memory::{NUM_BANKS, ROWS_PER_BANK};
use lockstep_sim::soc::{map, RunMode, RunResult, RunStatus, Soc, SocConfig};

fn run_kernel(name: &str, mode: RunMode) -> RunResult {
    Target::kernel(name, SocConfig::new(mode))
        .unwrap()
        .boot()
        .unwrap()
        .run(50_000_000)
}

fn core_fault(hart: u8, reg: u8, bit: u8, at_cycle: u64) -> FaultEvent {
    FaultEvent {
        at_cycle,
        target: FaultTarget::Core {
            hart,
            field: CoreField::Reg(reg),
            bit,
        },
    }
}

#[test]
fn lockstep_retires_what_single_retires() {
    let single = run_kernel("matmul24", RunMode::Single);
    let lock = run_kernel("matmul24", RunMode::Lockstep);
    assert_eq!(single.signature, lock.signature);
    assert_eq!(lock.instret, [single.instret[0]; 3]);
    assert_eq!(lock.region_cycles, single.region_cycles);
}

#[test]
fn parallel_work_stays_close_to_single() {
    let single = run_kernel("matmul24", RunMode::Single);
    let par = run_kernel("matmul24-par", RunMode::Parallel);
    assert_eq!(par.signature, single.signature);
    let total: u64 = par.instret.iter().sum();
    let base = single.instret[0] as f64;
    assert!(
        (total as f64 - base).abs() / base <= 0.05,
        "parallel {total} vs single {base}"
    );
}

#[test]
fn mode_switch_speedup() {
    let single = run_kernel("matmul24", RunMode::Single);
    let switched = run_kernel("mode-switch", RunMode::Lockstep);
    assert_eq!(switched.status, RunStatus::Exited);
    assert_eq!(switched.signature, single.signature);
    let speedup = single.region_cycles.unwrap() as f64 / switched.region_cycles.unwrap() as f64;
    assert!((speedup - 2.96).abs() <= 0.15, "speedup {speedup:.3}");
}

#[test]
fn same_inputs_same_run() {
    let t = Target::kernel("matmul8", SocConfig::new(RunMode::Lockstep)).unwrap();
    let faults = [core_fault(2, 10, 7, 900)];
    let a = t.simulate(&faults, 100_000).unwrap();
    let b = t.simulate(&faults, 100_000).unwrap();
    assert_eq!(a.result().to_json(), b.result().to_json());
    assert_eq!(a.observables(), b.observables());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn uart_bytes_leave_in_order_exactly_once(text in "[ -~]{1,24}") {
        let mut src = format!("_start:\n li t0, {:#x}\n", map::UART_BASE);
        for b in text.bytes() {
            src += &format!(" li t1, {b}\n sw t1, 0(t0)\n");
        }
        src += &format!(" li t0, {:#x}\n sw zero, 0(t0)\n", map::SIMCTL_BASE);
        let image = assemble_source(&src, map::SRAM_BASE).unwrap();
        for mode in [RunMode::Lockstep, RunMode::Single] {
            let mut soc = Soc::new(SocConfig::new(mode));
            soc.load_image("uart", &image).unwrap();
            let r = soc.run(100_000);
            prop_assert_eq!(r.status, RunStatus::Exited);
            prop_assert_eq!(&r.uart, &text);
        }
    }

    #[test]
    fn one_faulty_core_is_outvoted(
        hart in 0u8..3,
        reg in 1u8..32,
        bit in 0u8..32,
        at in 1u64..1500,
    ) {
        let t = Target::kernel("matmul3", SocConfig::new(RunMode::Lockstep)).unwrap();
        let golden = t.golden(1_000_000).unwrap();
        let soc = t.simulate(&[core_fault(hart, reg, bit, at)], 1_000_000).unwrap();
        let r = soc.result();
        prop_assert_eq!(r.status, RunStatus::Exited);
        prop_assert_eq!(soc.observables(), golden.observables);
        prop_assert_eq!(r.signature, Some(kernels::expected_checksum(3)));
    }

    #[test]
    fn each_repaired_word_is_counted_once(
        words in proptest::collection::btree_set(0usize..NUM_BANKS * ROWS_PER_BANK, 1..12),
        bit in 0usize..ecc::CODE_BITS,
    ) {
        // Words are scattered over the whole array; a fast scrubber visits
        // each of them within one sweep.
        let mut cfg = SocConfig::new(RunMode::Lockstep);
        cfg.scrub_interval = 1;
        let mut soc = Target::kernel("idle", cfg).unwrap().boot().unwrap();
        let code_end = kernels::assemble_at_sram(&kernels::build("idle").unwrap()).unwrap().bytes.len().div_ceil(4);
        let words: BTreeSet<usize> = words.into_iter().filter(|&w| w >= code_end).collect();
        for &w in &words {
            soc.memory_mut().flip_bit(w % NUM_BANKS, w / NUM_BANKS, bit).unwrap();
        }
        soc.run_until((NUM_BANKS * ROWS_PER_BANK) as u64 * 2);
        let r = soc.result();
        prop_assert_eq!(r.ecc.correctable, words.len() as u64);
        prop_assert_eq!(r.ecc.uncorrectable, 0);
        for &w in &words {
            let cw = soc.memory().codeword(w % NUM_BANKS, w / NUM_BANKS);
            prop_assert_eq!(ecc::decode(cw).status, ecc::EccStatus::Clean);
        }
    }
}
