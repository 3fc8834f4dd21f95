pub mod asm;
pub mod campaign;
pub mod cpu;
pub mod ecc;
pub mod interconnect;
pub mod isa;
pub mod kernels;
pub mod memory;
pub mod odrg;
pub mod soc;
