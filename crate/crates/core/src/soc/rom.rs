//! Boot ROM: reset stub, trap entry and the resync save/restore path.
//!
//! Cold boot sets up the hart's stack and trap vector, enables the resync
//! interrupt and jumps to `BOOT_ENTRY` with `a0 = mhartid`. In lockstep every
//! core reads `mhartid = 0`, so the three share one stack.
//!
//! On the resync interrupt the handler pushes a 128-byte frame (slot 0 is
//! `mepc`, slot `i` is `xi`), parks `sp` in `RESYNC_SP` and pulls the trigger.
//! All cores restart at the reset stub, which sees `RESYNC_STATE = 2`,
//! reloads the frame, acknowledges and returns with `mret`.

use std::sync::OnceLock;

use crate::asm::{assemble_source, Image};

use super::map;

pub const FRAME_SIZE: u32 = 128;

fn source() -> String {
    format!(
        "
.equ ODRG, {odrg:#x}
.equ SIMCTL, {simctl:#x}
.equ STACK_TOP, {stack_top:#x}
.equ STACK_SIZE, {stack_size:#x}
.equ FRAME, {frame}

reset:
    li t0, ODRG
    lw t1, 4(t0)
    li t2, 2
    beq t1, t2, warm
    csrr a0, mhartid
    li t1, STACK_SIZE
    mul t1, t1, a0
    li sp, STACK_TOP
    sub sp, sp, t1
    la t1, trap_entry
    csrw mtvec, t1
    li t1, 0x800
    csrw mie, t1
    csrsi mstatus, 8
    li t0, SIMCTL
    lw t1, 16(t0)
    li t0, 0
    li t2, 0
    jr t1

warm:
    lw sp, 12(t0)
    la t1, trap_entry
    csrw mtvec, t1
    li t1, 0x800
    csrw mie, t1
    li t1, 0x1880
    csrw mstatus, t1
    li t1, 3
    sw t1, 4(t0)
    j restore

.align 2
trap_entry:
    addi sp, sp, -FRAME
    sw x1, 4(sp)
    sw x3, 12(sp)
    sw x4, 16(sp)
    sw x5, 20(sp)
    sw x6, 24(sp)
    sw x7, 28(sp)
    sw x8, 32(sp)
    sw x9, 36(sp)
    sw x10, 40(sp)
    sw x11, 44(sp)
    sw x12, 48(sp)
    sw x13, 52(sp)
    sw x14, 56(sp)
    sw x15, 60(sp)
    sw x16, 64(sp)
    sw x17, 68(sp)
    sw x18, 72(sp)
    sw x19, 76(sp)
    sw x20, 80(sp)
    sw x21, 84(sp)
    sw x22, 88(sp)
    sw x23, 92(sp)
    sw x24, 96(sp)
    sw x25, 100(sp)
    sw x26, 104(sp)
    sw x27, 108(sp)
    sw x28, 112(sp)
    sw x29, 116(sp)
    sw x30, 120(sp)
    sw x31, 124(sp)
    csrr t0, mepc
    sw t0, 0(sp)
    csrr t0, mcause
    bgez t0, exception
    li t1, 0x8000000B
    beq t0, t1, resync
    li t1, 0x80000003
    beq t0, t1, soft
exception:
    li t1, SIMCTL
    sw t0, 12(t1)
hang:
    j hang

resync:
    li t0, ODRG
    sw sp, 12(t0)
    sw zero, 8(t0)
resync_wait:
    j resync_wait

soft:
    csrr t1, mhartid
    slli t1, t1, 2
    li t0, ODRG
    add t0, t0, t1
    sw zero, 0x30(t0)

restore:
    lw t0, 0(sp)
    csrw mepc, t0
    lw x1, 4(sp)
    lw x3, 12(sp)
    lw x4, 16(sp)
    lw x5, 20(sp)
    lw x6, 24(sp)
    lw x7, 28(sp)
    lw x8, 32(sp)
    lw x9, 36(sp)
    lw x10, 40(sp)
    lw x11, 44(sp)
    lw x12, 48(sp)
    lw x13, 52(sp)
    lw x14, 56(sp)
    lw x15, 60(sp)
    lw x16, 64(sp)
    lw x17, 68(sp)
    lw x18, 72(sp)
    lw x19, 76(sp)
    lw x20, 80(sp)
    lw x21, 84(sp)
    lw x22, 88(sp)
    lw x23, 92(sp)
    lw x24, 96(sp)
    lw x25, 100(sp)
    lw x26, 104(sp)
    lw x27, 108(sp)
    lw x28, 112(sp)
    lw x29, 116(sp)
    lw x30, 120(sp)
    lw x31, 124(sp)
    addi sp, sp, FRAME
    mret
",
        odrg = map::ODRG_BASE,
        simctl = map::SIMCTL_BASE,
        stack_top = map::STACK_TOP,
        stack_size = map::STACK_SIZE,
        frame = FRAME_SIZE,
    )
}

/// The assembled ROM, zero-padded to its full size.
pub fn boot_rom_image() -> &'static Image {
    static ROM: OnceLock<Image> = OnceLock::new();
    ROM.get_or_init(|| {
        let mut img = assemble_source(&source(), map::ROM_BASE).expect("boot ROM assembles");
        assert!(img.bytes.len() <= map::ROM_SIZE as usize);
        img.bytes.resize(map::ROM_SIZE as usize, 0);
        img
    })
}
