//! Built-in guest programs.
//!
//! Matrix data comes from the classic ANSI C `rand()` LCG
//! (`x = 1103515245 * x + 12345 mod 2^31`, seed 1): each element is
//! `((x >> 16) & 0xff) - 128`. A is drawn first, then B, both row-major.
//! The guest checksum over C is `h = h * 31 + c` with wrapping arithmetic.

use serde::Serialize;

use crate::asm::{assemble, AsmError, Image, Program};
use crate::soc::map::{self, SRAM_BASE};
use crate::soc::RunMode;

pub const LCG_SEED: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Single,
    Parallel3,
}

/// `n * n` matrices A and B.
pub fn lcg_matrices(n: usize) -> (Vec<i32>, Vec<i32>) {
    let mut x = LCG_SEED;
    let mut next = || {
        x = x.wrapping_mul(1_103_515_245).wrapping_add(12_345) & 0x7fff_ffff;
        ((x >> 16) & 0xff) as i32 - 128
    };
    let a = (0..n * n).map(|_| next()).collect();
    let b = (0..n * n).map(|_| next()).collect();
    (a, b)
}

pub fn host_matmul(a: &[i32], b: &[i32], n: usize) -> Vec<i32> {
    let mut c = vec![0i32; n * n];
    for i in 0..n {
        for j in 0..n {
            c[i * n + j] = (0..n).fold(0i32, |acc, k| {
                acc.wrapping_add(a[i * n + k].wrapping_mul(b[k * n + j]))
            });
        }
    }
    c
}

pub fn checksum(c: &[i32]) -> u32 {
    c.iter()
        .fold(0u32, |h, &v| h.wrapping_mul(31).wrapping_add(v as u32))
}

/// Expected guest signature for the LCG-seeded `n × n` kernel.
pub fn expected_checksum(n: usize) -> u32 {
    let (a, b) = lcg_matrices(n);
    checksum(&host_matmul(&a, &b, n))
}

/// Contiguous row chunks for three harts; the first harts take the remainder.
pub fn row_starts(n: usize) -> [u32; 4] {
    let base = n / 3;
    let extra = n % 3;
    let mut s = [0u32; 4];
    for h in 0..3 {
        s[h + 1] = s[h] + (base + usize::from(h < extra)) as u32;
    }
    s
}

fn words(v: &[i32]) -> Vec<u32> {
    v.iter().map(|&x| x as u32).collect()
}

fn finish(n: usize) -> String {
    format!(
        "
    csrr t0, mcycle
    sub t0, t0, s0
    li t1, {simctl:#x}
    sw t0, 8(t1)
    la a2, mat_c
    li a4, {nn}
    li a5, 0
sum_loop:
    lw a0, 0(a2)
    slli t2, a5, 5
    sub a5, t2, a5
    add a5, a5, a0
    addi a2, a2, 4
    addi a4, a4, -1
    bnez a4, sum_loop
    sw a5, 4(t1)
    sw zero, 0(t1)
halt:
    j halt
",
        simctl = map::SIMCTL_BASE,
        nn = n * n
    )
}

/// The matmul body, starting at `matmul_main` with `a0 = mhartid`.
fn matmul_body(n: usize, variant: Variant) -> String {
    let row = 4 * n;
    let mut s = String::from("matmul_main:\n    csrr s0, mcycle\n");
    match variant {
        Variant::Single => s.push_str(&format!(
            "    li s1, 0
    li s2, {n}
    la s4, mat_a
    la s5, mat_c
"
        )),
        Variant::Parallel3 => s.push_str(&format!(
            "    mv s7, a0
    la t0, row_start
    slli t1, s7, 2
    add t0, t0, t1
    lw s1, 0(t0)
    lw s2, 4(t0)
    li t0, {row}
    mul t1, s1, t0
    la s4, mat_a
    add s4, s4, t1
    la s5, mat_c
    add s5, s5, t1
    beq s1, s2, rows_done
"
        )),
    }
    s.push_str(&format!(
        "i_loop:
    la s6, mat_b
    li s3, {n}
j_loop:
    mv a2, s4
    mv a3, s6
    li a4, {n}
    li a5, 0
k_loop:
    c.lw a0, 0(a2)
    c.lw a1, 0(a3)
    mul a0, a0, a1
    c.add a5, a0
    c.addi a2, 4
    addi a3, a3, {row}
    c.addi a4, -1
    c.bnez a4, k_loop
    sw a5, 0(s5)
    addi s5, s5, 4
    addi s6, s6, 4
    addi s3, s3, -1
    bnez s3, j_loop
    addi s4, s4, {row}
    addi s1, s1, 1
    bne s1, s2, i_loop
rows_done:
"
    ));
    if variant == Variant::Parallel3 {
        s.push_str(&format!(
            "    la t0, done_flags
    slli t1, s7, 2
    add t0, t0, t1
    li t1, 1
    sw t1, 0(t0)
    bnez s7, worker_done
    li t0, 8
    csrs mie, t0
    csrci mstatus, 8
barrier:
    la t0, done_flags
    lw t1, 0(t0)
    lw t2, 4(t0)
    and t1, t1, t2
    lw t2, 8(t0)
    and t1, t1, t2
    bnez t1, all_done
    wfi
    li t0, {swirq:#x}
    sw zero, 0(t0)
    j barrier
worker_done:
    li t0, {swirq:#x}
    li t1, 1
    sw t1, 0(t0)
park:
    wfi
    j park
all_done:
",
            swirq = map::ODRG_BASE + crate::odrg::reg::SW_IRQ
        ));
    }
    s.push_str(&finish(n));
    s
}

fn with_matmul_data(p: Program, a: &[i32], b: &[i32], n: usize) -> Program {
    p.with_data("mat_a", words(a))
        .with_data("mat_b", words(b))
        .with_data("mat_c", vec![0; n * n])
        .with_data("done_flags", vec![0; 3])
        .with_data("row_start", row_starts(n).to_vec())
}

/// `C = A · B` over explicit matrices. The signature is the checksum of C.
pub fn matmul_program(a: &[i32], b: &[i32], n: usize, variant: Variant) -> Program {
    assert!(n >= 3, "matmul needs n >= 3");
    assert_eq!(a.len(), n * n);
    assert_eq!(b.len(), n * n);
    let src = format!("_start:\n{}", matmul_body(n, variant));
    let name = match variant {
        Variant::Single => format!("matmul{n}"),
        Variant::Parallel3 => format!("matmul{n}-par"),
    };
    with_matmul_data(Program::new(&name, src), a, b, n)
}

/// The LCG-seeded matmul kernel.
pub fn matmul_kernel(n: usize, variant: Variant) -> Program {
    let (a, b) = lcg_matrices(n);
    matmul_program(&a, &b, n, variant)
}

/// Starts in lockstep, switches to performance mode at a `wfi` barrier and
/// runs the parallel matmul.
pub fn mode_switch_kernel(n: usize) -> Program {
    let (a, b) = lcg_matrices(n);
    let src = format!(
        "_start:
    li t0, {odrg:#x}
    lw t1, 0(t0)
    bnez t1, matmul_main
    csrw mie, zero
    li t1, 1
    sw t1, 0(t0)
switch_wait:
    wfi
    j switch_wait
{}",
        matmul_body(n, Variant::Parallel3),
        odrg = map::ODRG_BASE
    );
    with_matmul_data(Program::new("mode-switch", src), &a, &b, n)
}

pub const RESYNC_STRESS_ROUNDS: u32 = 4;

/// Requests `RESYNC_STRESS_ROUNDS` software resyncs and checks that register
/// state survives each round trip. Signature is the resync event count.
pub fn resync_stress_kernel() -> Program {
    let src = format!(
        "_start:
    li s0, 0x13579bdf
    li s1, 0x2468ace0
    li s2, -1
    li s3, 0x7fffffff
    li s4, 0
    li s5, {rounds}
    li t3, 3
round:
    li t0, {odrg:#x}
    li t1, 1
    sw t1, 4(t0)
wait:
    lw t1, 4(t0)
    bne t1, t3, wait
    addi s4, s4, 1
    bne s4, s5, round
    li a1, 0
    li t1, 0x13579bdf
    bne s0, t1, bad
    li t1, 0x2468ace0
    bne s1, t1, bad
    li t1, -1
    bne s2, t1, bad
    li t1, 0x7fffffff
    bne s3, t1, bad
    j report
bad:
    li a1, 1
report:
    li t0, {odrg:#x}
    lw t1, 0x1c(t0)
    li t0, {simctl:#x}
    sw t1, 4(t0)
    sw a1, 0(t0)
halt:
    j halt
",
        rounds = RESYNC_STRESS_ROUNDS,
        odrg = map::ODRG_BASE,
        simctl = map::SIMCTL_BASE
    );
    Program::new("resync-stress", src)
}

/// Plants one correctable error per bank with the write-disable mask, reads
/// each word back and checks the corrected value and the bank counters.
/// Signature is the summed correctable count.
pub fn ecc_walk_kernel() -> Program {
    let src = format!(
        "_start:
    li s0, {memctl:#x}
    la s1, walk
    li s2, 0
    li s3, -1
    li a1, 0
bank_loop:
    slli t0, s2, 2
    add t0, t0, s0
    li t1, 1
    sll t1, t1, s2
    sw t1, 0(t0)
    slli t2, s2, 2
    add t2, t2, s1
    sw s3, 0(t2)
    sw zero, 0(t0)
    lw t1, 0(t2)
    beq t1, s3, read_ok
    li a1, 1
read_ok:
    addi s2, s2, 1
    li t1, 8
    bne s2, t1, bank_loop
    li s2, 0
    li a2, 0
count_loop:
    slli t0, s2, 2
    add t0, t0, s0
    lw t1, 0x40(t0)
    add a2, a2, t1
    addi s2, s2, 1
    li t1, 8
    bne s2, t1, count_loop
    li t1, 8
    beq a2, t1, report
    li a1, 2
report:
    li t0, {simctl:#x}
    sw a2, 4(t0)
    sw a1, 0(t0)
halt:
    j halt
.align 5
walk:
    .word 0, 0, 0, 0, 0, 0, 0, 0
",
        memctl = map::MEMCTL_BASE,
        simctl = map::SIMCTL_BASE
    );
    Program::new("ecc-walk", src)
}

pub const HELLO_TEXT: &str = "hello from the lockstep core\n";

fn hello_kernel() -> Program {
    let bytes: Vec<u32> = HELLO_TEXT.bytes().map(u32::from).collect();
    let src = format!(
        "_start:
    la a2, text
    li a3, {len}
    li t0, {uart:#x}
loop:
    lw t1, 0(a2)
    sw t1, 0(t0)
    addi a2, a2, 4
    addi a3, a3, -1
    bnez a3, loop
    li t0, {simctl:#x}
    sw zero, 0(t0)
halt:
    j halt
",
        len = bytes.len(),
        uart = map::UART_BASE,
        simctl = map::SIMCTL_BASE
    );
    Program::new("hello", src).with_data("text", bytes)
}

fn empty_kernel() -> Program {
    let src = format!(
        "_start:
    li t0, {simctl:#x}
    sw zero, 0(t0)
halt:
    j halt
",
        simctl = map::SIMCTL_BASE
    );
    Program::new("empty", src)
}

fn idle_kernel() -> Program {
    Program::new("idle", "_start:\n    wfi\n    j _start\n")
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct KernelInfo {
    pub name: &'static str,
    pub mode: RunMode,
    pub description: &'static str,
}

pub const CATALOG: &[KernelInfo] = &[
    KernelInfo { name: "empty", mode: RunMode::Lockstep, description: "exit 0 immediately" },
    KernelInfo { name: "hello", mode: RunMode::Lockstep, description: "print a line on the UART" },
    KernelInfo { name: "idle", mode: RunMode::Lockstep, description: "sleep forever (scrubber tests)" },
    KernelInfo { name: "matmul3", mode: RunMode::Lockstep, description: "3x3 matmul, one hart" },
    KernelInfo { name: "matmul8", mode: RunMode::Lockstep, description: "8x8 matmul, one hart" },
    KernelInfo { name: "matmul24", mode: RunMode::Lockstep, description: "24x24 matmul, one hart" },
    KernelInfo { name: "matmul3-par", mode: RunMode::Parallel, description: "3x3 matmul split over three harts" },
    KernelInfo { name: "matmul8-par", mode: RunMode::Parallel, description: "8x8 matmul split over three harts" },
    KernelInfo { name: "matmul24-par", mode: RunMode::Parallel, description: "24x24 matmul split over three harts" },
    KernelInfo { name: "mode-switch", mode: RunMode::Lockstep, description: "switch lockstep to performance, then 24x24 parallel matmul" },
    KernelInfo { name: "resync-stress", mode: RunMode::Lockstep, description: "repeated software resyncs, checks register state" },
    KernelInfo { name: "ecc-walk", mode: RunMode::Lockstep, description: "plant one correctable error per bank and read it back" },
];

pub fn info(name: &str) -> Option<&'static KernelInfo> {
    CATALOG.iter().find(|k| k.name == name)
}

/// Builds a catalog kernel by name.
pub fn build(name: &str) -> Option<Program> {
    Some(match name {
        "empty" => empty_kernel(),
        "hello" => hello_kernel(),
        "idle" => idle_kernel(),
        "matmul3" => matmul_kernel(3, Variant::Single),
        "matmul8" => matmul_kernel(8, Variant::Single),
        "matmul24" => matmul_kernel(24, Variant::Single),
        "matmul3-par" => matmul_kernel(3, Variant::Parallel3),
        "matmul8-par" => matmul_kernel(8, Variant::Parallel3),
        "matmul24-par" => matmul_kernel(24, Variant::Parallel3),
        "mode-switch" => mode_switch_kernel(24),
        "resync-stress" => resync_stress_kernel(),
        "ecc-walk" => ecc_walk_kernel(),
        _ => return None,
    })
}

/// Expected signature of a catalog kernel run to completion, if it has one.
pub fn expected_signature(name: &str) -> Option<u32> {
    match name {
        "matmul3" | "matmul3-par" => Some(expected_checksum(3)),
        "matmul8" | "matmul8-par" => Some(expected_checksum(8)),
        "matmul24" | "matmul24-par" | "mode-switch" => Some(expected_checksum(24)),
        "resync-stress" => Some(RESYNC_STRESS_ROUNDS),
        "ecc-walk" => Some(8),
        _ => None,
    }
}

/// Assembles a program at the start of SRAM.
pub fn assemble_at_sram(p: &Program) -> Result<Image, AsmError> {
    assemble(p, SRAM_BASE)
}
