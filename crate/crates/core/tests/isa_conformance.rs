//! One encode-execute-check case per implemented instruction. Each case
//! assembles a short body, runs it on a single hart and inspects the
//! register file after the exit write.

use lockstep_sim::asm::assemble_source;
use lockstep_sim::cpu::cause;
use lockstep_sim::isa::parse_reg;
use lockstep_sim::soc::{map, RunMode, RunStatus, Soc, SocConfig};

const B: u32 = map::SRAM_BASE;

fn exec(body: &str) -> Soc {
    let src = format!(
        "_start:\n{body}\n    li t6, {exit:#x}\n    sw zero, 0(t6)\nhalt:\n    j halt\n\
         .align 2\nbuf:\n    .word 0x80402010, 0xfedcba98, 0, 0\n",
        exit = map::SIMCTL_BASE
    );
    let image = assemble_source(&src, B).unwrap_or_else(|e| panic!("{e}\n{src}"));
    let mut soc = Soc::new(SocConfig::new(RunMode::Single));
    soc.load_image("isa", &image).unwrap();
    soc.run(100_000);
    soc
}

#[track_caller]
fn check(body: &str, expect: &[(&str, u32)]) {
    let soc = exec(body);
    let r = soc.result();
    assert_eq!(r.status, RunStatus::Exited, "{body}\ntrap {:?}", r.guest_trap);
    for &(name, want) in expect {
        let got = soc.core(0).reg(parse_reg(name).unwrap());
        assert_eq!(got, want, "{name} = {got:#x}, want {want:#x}\n{body}");
    }
}

#[track_caller]
fn traps(body: &str, want: u32) {
    let r = exec(body).result();
    assert_eq!(r.status, RunStatus::GuestTrap);
    assert_eq!(r.guest_trap, Some(want));
}

#[test]
fn lui_auipc() {
    check("lui a0, 0x12345", &[("a0", 0x1234_5000)]);
    check("auipc a0, 1", &[("a0", B + 0x1000)]);
}

#[test]
fn jal_jalr() {
    check(
        "jal a0, l1\n li a1, 1\nl1:\n li a2, 2",
        &[("a0", B + 4), ("a1", 0), ("a2", 2)],
    );
    check(
        "la t0, tgt\n jalr a0, 0(t0)\n li a1, 1\ntgt:\n li a2, 2",
        &[("a0", B + 12), ("a1", 0), ("a2", 2)],
    );
}

#[test]
fn branches() {
    // (mnemonic, lhs, rhs, taken)
    let cases = [
        ("beq", 5, 5, true),
        ("beq", 5, 6, false),
        ("bne", 5, 6, true),
        ("bne", 5, 5, false),
        ("blt", -1, 1, true),
        ("blt", 1, -1, false),
        ("bge", 1, -1, true),
        ("bge", -1, 1, false),
        ("bge", 4, 4, true),
        ("bltu", 1, -1, true),
        ("bltu", -1, 1, false),
        ("bgeu", -1, 1, true),
        ("bgeu", 1, -1, false),
    ];
    for (m, x, y, taken) in cases {
        let body = format!("li a0, 0\n li t0, {x}\n li t1, {y}\n {m} t0, t1, l1\n li a0, 1\nl1:");
        check(&body, &[("a0", u32::from(!taken))]);
    }
}

#[test]
fn loads() {
    check(
        "la t0, buf\n lb a0, 3(t0)\n lbu a1, 3(t0)\n lh a2, 2(t0)\n lhu a3, 2(t0)\n lw a4, 4(t0)\n lb a5, 0(t0)",
        &[
            ("a0", 0xFFFF_FF80),
            ("a1", 0x80),
            ("a2", 0xFFFF_8040),
            ("a3", 0x8040),
            ("a4", 0xFEDC_BA98),
            ("a5", 0x10),
        ],
    );
}

#[test]
fn stores() {
    check(
        "la t0, buf\n li t1, 0x11223344\n sw t1, 8(t0)\n sb t1, 12(t0)\n sh t1, 14(t0)\n lw a0, 8(t0)\n lw a1, 12(t0)",
        &[("a0", 0x1122_3344), ("a1", 0x3344_0044)],
    );
}

#[test]
fn op_imm() {
    check(
        "addi a0, zero, -5\n slti a1, a0, -4\n sltiu a2, a0, 5\n xori a3, a0, 0xF\n ori a4, zero, 0x70F\n andi a5, a0, 0x7F0",
        &[
            ("a0", 0xFFFF_FFFB),
            ("a1", 1),
            ("a2", 0),
            ("a3", 0xFFFF_FFF4),
            ("a4", 0x70F),
            ("a5", 0x7F0),
        ],
    );
    check(
        "li t0, 0x80000001\n slli a0, t0, 4\n srli a1, t0, 4\n srai a2, t0, 4",
        &[("a0", 0x10), ("a1", 0x0800_0000), ("a2", 0xF800_0000)],
    );
}

#[test]
fn op_reg() {
    check(
        "li t0, 7\n li t1, -3\n add a0, t0, t1\n sub a1, t0, t1\n sll a2, t0, t1\n slt a3, t1, t0\n sltu a4, t1, t0\n xor a5, t0, t1",
        &[
            ("a0", 4),
            ("a1", 10),
            ("a2", 0xE000_0000),
            ("a3", 1),
            ("a4", 0),
            ("a5", 0xFFFF_FFFA),
        ],
    );
    check(
        "li t0, 7\n li t1, -3\n srl a0, t1, t0\n sra a1, t1, t0\n or a2, t0, t1\n and a3, t0, t1\n add zero, t0, t0",
        &[("a0", 0x01FF_FFFF), ("a1", 0xFFFF_FFFF), ("a2", 0xFFFF_FFFF), ("a3", 5), ("zero", 0)],
    );
}

#[test]
fn multiply() {
    check(
        "li t0, -7\n li t1, 3\n mul a0, t0, t1\n mulh a1, t0, t1\n mulhu a2, t0, t1\n mulhsu a3, t0, t1",
        &[("a0", 0xFFFF_FFEB), ("a1", 0xFFFF_FFFF), ("a2", 2), ("a3", 0xFFFF_FFFF)],
    );
    check(
        "li t0, 0x7fffffff\n mulh a0, t0, t0\n li t1, -1\n mulhu a1, t1, t1\n mulhsu a2, t1, t1",
        &[("a0", 0x3FFF_FFFF), ("a1", 0xFFFF_FFFE), ("a2", 0xFFFF_FFFF)],
    );
}

#[test]
fn divide() {
    check(
        "li t0, -7\n li t1, 3\n div a0, t0, t1\n rem a1, t0, t1\n divu a2, t0, t1\n remu a3, t0, t1",
        &[("a0", 0xFFFF_FFFE), ("a1", 0xFFFF_FFFF), ("a2", 0x5555_5553), ("a3", 0)],
    );
    // Division by zero and signed overflow do not trap.
    check(
        "li t0, -7\n div a0, t0, zero\n divu a1, t0, zero\n rem a2, t0, zero\n remu a3, t0, zero\n\
         li t0, 0x80000000\n li t1, -1\n div a4, t0, t1\n rem a5, t0, t1",
        &[
            ("a0", 0xFFFF_FFFF),
            ("a1", 0xFFFF_FFFF),
            ("a2", 0xFFFF_FFF9),
            ("a3", 0xFFFF_FFF9),
            ("a4", 0x8000_0000),
            ("a5", 0),
        ],
    );
}

#[test]
fn csr_ops() {
    check(
        "li t0, 0x808\n csrw mie, t0\n li t1, 0x1c000100\n\
         csrrw a0, mepc, t1\n csrr a1, mepc\n\
         li t2, 0x800\n csrrc a2, mie, t2\n csrr a3, mie\n\
         csrrs a4, mie, t2\n csrrwi a5, mie, 8\n csrrsi s2, mie, 0\n csrrci s3, mie, 8\n csrr s4, mie",
        &[
            ("a1", 0x1C00_0100),
            ("a2", 0x808),
            ("a3", 0x8),
            ("a4", 0x8),
            ("a5", 0x808),
            ("s2", 0x8),
            ("s3", 0x8),
            ("s4", 0),
        ],
    );
    // mstatus.MPP reads as machine mode.
    check("csrci mstatus, 8\n csrr a0, mstatus", &[("a0", 0x1800)]);
    check("csrr a0, mhartid", &[("a0", 0)]);
}

#[test]
fn fence_is_a_no_op() {
    check("li a0, 3\n fence\n addi a0, a0, 1", &[("a0", 4)]);
}

#[test]
fn mret_jumps_to_mepc() {
    check(
        "la t0, l1\n csrw mepc, t0\n mret\n li a0, 1\nl1:\n li a1, 2",
        &[("a0", 0), ("a1", 2)],
    );
}

#[test]
fn wfi_wakes_on_pending_interrupt_with_mie_clear() {
    let body = format!(
        "csrci mstatus, 8\n li t0, 8\n csrw mie, t0\n li t0, {sw:#x}\n li t1, 1\n sw t1, 0(t0)\n wfi\n li a0, 5",
        sw = map::ODRG_BASE + 0x30
    );
    check(&body, &[("a0", 5)]);
}

#[test]
fn system_traps() {
    traps("ecall", cause::ECALL_M);
    traps("ebreak", cause::BREAKPOINT);
    traps("c.ebreak", cause::BREAKPOINT);
    traps(".word 0", cause::ILLEGAL);
    traps("csrr a0, 0x7c0", cause::ILLEGAL);
    traps("la t0, buf\n lw a0, 1(t0)", cause::LOAD_MISALIGNED);
    traps("la t0, buf\n sh a0, 1(t0)", cause::STORE_MISALIGNED);
}

#[test]
fn compressed_alu() {
    check(
        "c.li a0, -3\n c.addi a0, 5\n c.lui a1, 1\n c.mv a2, a1\n c.add a2, a0\n c.slli a2, 4\n c.srli a2, 1\n\
         c.li a3, -16\n c.srai a3, 2\n c.andi a3, -8\n c.nop",
        &[("a0", 2), ("a1", 0x1000), ("a2", 0x8010), ("a3", 0xFFFF_FFF8)],
    );
    check(
        "li a4, 12\n li a5, 10\n mv s0, a4\n c.sub s0, a5\n mv s1, a4\n c.xor s1, a5\n mv a0, a4\n c.or a0, a5\n\
         mv a1, a4\n c.and a1, a5",
        &[("s0", 2), ("s1", 6), ("a0", 14), ("a1", 8)],
    );
}

#[test]
fn compressed_memory() {
    check(
        "c.addi16sp sp, -32\n c.addi4spn a0, sp, 8\n li t0, 0x55\n c.swsp t0, 4(sp)\n c.lwsp a1, 4(sp)\n\
         mv a2, sp\n c.addi16sp sp, 32",
        &[
            ("a0", map::STACK_TOP - 24),
            ("a1", 0x55),
            ("a2", map::STACK_TOP - 32),
            ("sp", map::STACK_TOP),
        ],
    );
    check(
        "la s0, buf\n c.lw a0, 4(s0)\n c.sw a0, 8(s0)\n lw a1, 8(s0)",
        &[("a0", 0xFEDC_BA98), ("a1", 0xFEDC_BA98)],
    );
}

#[test]
fn compressed_control() {
    check(
        "c.j l1\n li a0, 1\nl1:\n c.jal l2\nl2:\n mv a1, ra",
        &[("a0", 0), ("a1", B + 8)],
    );
    check(
        "la t0, l1\n c.jalr t0\nl1:\n mv a2, ra\n la t1, l2\n c.jr t1\n li a3, 1\nl2:",
        &[("a2", B + 10), ("a3", 0)],
    );
    check(
        "li a4, 0\n li a5, 0\n li s0, 0\n c.beqz a4, l1\n li a5, 1\nl1:\n c.bnez a4, l2\n li s0, 7\nl2:",
        &[("a5", 0), ("s0", 7)],
    );
}
