//! Physical address map.

use crate::memory::SRAM_BYTES;

pub const SRAM_BASE: u32 = 0x1C00_0000;
pub const SRAM_SIZE: u32 = SRAM_BYTES as u32;
pub const ROM_BASE: u32 = 0x1A00_0000;
pub const ROM_SIZE: u32 = 8 * 1024;
pub const ODRG_BASE: u32 = 0x1B10_0000;
pub const MEMCTL_BASE: u32 = 0x1B20_0000;
pub const UART_BASE: u32 = 0x1B30_0000;
pub const SIMCTL_BASE: u32 = 0x1B40_0000;
pub const REG_BLOCK_SIZE: u32 = 0x1000;

/// Per-hart stack size; hart `h` owns the block ending at
/// `STACK_TOP - h * STACK_SIZE`.
pub const STACK_SIZE: u32 = 0x800;
pub const STACK_TOP: u32 = SRAM_BASE + SRAM_SIZE;
/// Lowest stack address. Programs must end below this.
pub const STACK_REGION: u32 = STACK_TOP - 3 * STACK_SIZE;

pub mod memctl {
    pub const WRITE_DISABLE_LO: u32 = 0x00;
    pub const WRITE_DISABLE_HI: u32 = 0x20;
    pub const CORRECTABLE: u32 = 0x40;
    pub const UNCORRECTABLE: u32 = 0x60;
    pub const SCRUB_ENABLE: u32 = 0x80;
    pub const SCRUB_INTERVAL: u32 = 0x84;
    pub const SCRUB_NEXT: u32 = 0x88;
}

pub mod uart {
    pub const DATA: u32 = 0x00;
    pub const STATUS: u32 = 0x04;
}

pub mod simctl {
    pub const EXIT: u32 = 0x00;
    pub const SIGNATURE: u32 = 0x04;
    pub const REGION_CYCLES: u32 = 0x08;
    pub const TRAP: u32 = 0x0C;
    pub const BOOT_ENTRY: u32 = 0x10;
    pub const HART_MASK: u32 = 0x14;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Region {
    Sram(u32),
    Rom(u32),
    Odrg(u32),
    MemCtl(u32),
    Uart(u32),
    SimCtl(u32),
    Unmapped,
}

pub fn decode(addr: u32) -> Region {
    let within = |base: u32, size: u32| addr.wrapping_sub(base) < size;
    if within(SRAM_BASE, SRAM_SIZE) {
        Region::Sram(addr - SRAM_BASE)
    } else if within(ROM_BASE, ROM_SIZE) {
        Region::Rom(addr - ROM_BASE)
    } else if within(ODRG_BASE, REG_BLOCK_SIZE) {
        Region::Odrg(addr - ODRG_BASE)
    } else if within(MEMCTL_BASE, REG_BLOCK_SIZE) {
        Region::MemCtl(addr - MEMCTL_BASE)
    } else if within(UART_BASE, REG_BLOCK_SIZE) {
        Region::Uart(addr - UART_BASE)
    } else if within(SIMCTL_BASE, REG_BLOCK_SIZE) {
        Region::SimCtl(addr - SIMCTL_BASE)
    } else {
        Region::Unmapped
    }
}
