//! Eight word-interleaved SRAM banks, each with its own ECC codec, write
//! inhibit register and error counters.
//!
//! Addresses here are byte offsets from the start of SRAM. Word `w` lives in
//! bank `w % 8`, row `w / 8`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ecc::{self, Codeword39, EccStatus, CODE_BITS};

pub const NUM_BANKS: usize = 8;
pub const ROWS_PER_BANK: usize = 8192;
pub const SRAM_WORDS: usize = NUM_BANKS * ROWS_PER_BANK;
pub const SRAM_BYTES: usize = SRAM_WORDS * 4;

const CODE_MASK: u64 = (1 << CODE_BITS) - 1;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MemError {
    #[error("address {0:#x} outside SRAM")]
    OutOfRange(u32),
    #[error("write with empty byte strobes at {0:#x}")]
    EmptyStrobes(u32),
    #[error("bank {bank} row {row} bit {bit} out of range")]
    BadIndex { bank: usize, row: usize, bit: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Initiator {
    Core(u8),
    Voted,
    Scrubber,
    Loader,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AccessKind {
    Read,
    Write,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MemAccess {
    pub addr: u32,
    pub kind: AccessKind,
    pub strobes: u8,
    pub wdata: u32,
    pub initiator: Initiator,
}

impl MemAccess {
    pub fn read(addr: u32, initiator: Initiator) -> Self {
        MemAccess {
            addr,
            kind: AccessKind::Read,
            strobes: 0xF,
            wdata: 0,
            initiator,
        }
    }

    pub fn write(addr: u32, strobes: u8, wdata: u32, initiator: Initiator) -> Self {
        MemAccess {
            addr,
            kind: AccessKind::Write,
            strobes,
            wdata,
            initiator,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ReadOutcome {
    pub data: u32,
    pub status: EccStatus,
    pub latency: u64,
}

impl ReadOutcome {
    /// Uncorrectable data is reported to the initiator as a bus error.
    pub fn bus_error(&self) -> bool {
        self.status == EccStatus::Uncorrectable
    }
}

pub fn bank_of(addr: u32) -> Result<(usize, usize), MemError> {
    if addr as usize >= SRAM_BYTES {
        return Err(MemError::OutOfRange(addr));
    }
    let word = (addr >> 2) as usize;
    Ok((word % NUM_BANKS, word / NUM_BANKS))
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BankCounters {
    pub correctable: u64,
    pub uncorrectable: u64,
}

#[derive(Clone, Debug)]
struct Bank {
    cells: Vec<Codeword39>,
    write_disable: u64,
    counters: BankCounters,
    /// Last cycle in which an internal read-modify-write occupies the bank.
    busy_until: Option<u64>,
}

impl Bank {
    fn new() -> Self {
        Bank {
            cells: vec![Codeword39::default(); ROWS_PER_BANK],
            write_disable: 0,
            counters: BankCounters::default(),
            busy_until: None,
        }
    }

    fn store(&mut self, row: usize, cw: Codeword39) {
        let old = self.cells[row].bits();
        let merged = (cw.bits() & !self.write_disable) | (old & self.write_disable);
        self.cells[row] = Codeword39::from_bits(merged);
    }

    /// Decodes a row, repairs a single-bit error in place and counts it.
    fn checked_read(&mut self, row: usize) -> (u32, EccStatus) {
        let result = ecc::decode(self.cells[row]);
        match result.status {
            EccStatus::Clean => {}
            EccStatus::Corrected(_) => {
                self.counters.correctable += 1;
                self.store(row, ecc::encode(result.data));
            }
            EccStatus::Uncorrectable => self.counters.uncorrectable += 1,
        }
        (result.data, result.status)
    }
}

/// The full SRAM: `NUM_BANKS` banks of `ROWS_PER_BANK` codewords.
#[derive(Clone, Debug)]
pub struct BankArray {
    banks: Vec<Bank>,
}

impl Default for BankArray {
    fn default() -> Self {
        Self::new()
    }
}

impl BankArray {
    pub fn new() -> Self {
        BankArray {
            banks: (0..NUM_BANKS).map(|_| Bank::new()).collect(),
        }
    }

    pub fn is_busy(&self, bank: usize, now: u64) -> bool {
        self.banks[bank].busy_until.is_some_and(|b| now <= b)
    }

    fn wait_cycles(&self, bank: usize, now: u64) -> u64 {
        match self.banks[bank].busy_until {
            Some(b) if now <= b => b - now + 1,
            _ => 0,
        }
    }

    pub fn read_word(&mut self, access: MemAccess, now: u64) -> Result<ReadOutcome, MemError> {
        debug_assert_eq!(access.kind, AccessKind::Read);
        let (bank, row) = bank_of(access.addr)?;
        let latency = 1 + self.wait_cycles(bank, now);
        let (data, status) = self.banks[bank].checked_read(row);
        Ok(ReadOutcome {
            data,
            status,
            latency,
        })
    }

    /// Stores a word. Full-word writes encode directly; sub-word writes merge
    /// with the stored word and keep the bank busy for one more cycle. The
    /// requester is acknowledged after one cycle either way.
    pub fn write_word(&mut self, access: MemAccess, now: u64) -> Result<u64, MemError> {
        debug_assert_eq!(access.kind, AccessKind::Write);
        let (bank, row) = bank_of(access.addr)?;
        if access.strobes & 0xF == 0 {
            return Err(MemError::EmptyStrobes(access.addr));
        }
        let latency = 1 + self.wait_cycles(bank, now);
        let b = &mut self.banks[bank];
        if access.strobes & 0xF == 0xF {
            b.store(row, ecc::encode(access.wdata));
        } else {
            let (old, _) = b.checked_read(row);
            let lanes = strobe_mask(access.strobes);
            let merged = (old & !lanes) | (access.wdata & lanes);
            b.store(row, ecc::encode(merged));
            b.busy_until = Some(now + latency);
        }
        Ok(latency)
    }

    pub fn flip_bit(&mut self, bank: usize, row: usize, bit: usize) -> Result<(), MemError> {
        if bank >= NUM_BANKS || row >= ROWS_PER_BANK || bit >= CODE_BITS {
            return Err(MemError::BadIndex { bank, row, bit });
        }
        let cell = &mut self.banks[bank].cells[row];
        *cell = cell.with_flipped(bit);
        Ok(())
    }

    pub fn codeword(&self, bank: usize, row: usize) -> Codeword39 {
        self.banks[bank].cells[row]
    }

    pub fn write_disable_mask(&self, bank: usize) -> u64 {
        self.banks[bank].write_disable
    }

    pub fn set_write_disable_mask(&mut self, bank: usize, mask: u64) {
        self.banks[bank].write_disable = mask & CODE_MASK;
    }

    pub fn counters(&self, bank: usize) -> &BankCounters {
        &self.banks[bank].counters
    }

    pub fn total_counters(&self) -> BankCounters {
        self.banks.iter().fold(BankCounters::default(), |acc, b| BankCounters {
            correctable: acc.correctable + b.counters.correctable,
            uncorrectable: acc.uncorrectable + b.counters.uncorrectable,
        })
    }

    /// Decoded data of one word with no side effects.
    pub fn peek(&self, word: usize) -> u32 {
        let cw = self.banks[word % NUM_BANKS].cells[word / NUM_BANKS];
        ecc::decode(cw).data
    }

    /// Writes an image through the loader port starting at byte offset
    /// `offset`. A trailing partial word is zero-padded.
    pub fn load(&mut self, offset: u32, bytes: &[u8]) -> Result<(), MemError> {
        let end = offset as usize + bytes.len();
        if end > SRAM_BYTES {
            return Err(MemError::OutOfRange(end as u32));
        }
        for (i, chunk) in bytes.chunks(4).enumerate() {
            let mut word = [0u8; 4];
            word[..chunk.len()].copy_from_slice(chunk);
            let access = MemAccess::write(
                offset + 4 * i as u32,
                0xF,
                u32::from_le_bytes(word),
                Initiator::Loader,
            );
            self.write_word(access, 0)?;
        }
        Ok(())
    }

    /// Decoded little-endian image of the whole SRAM.
    pub fn dump(&self) -> Vec<u8> {
        (0..SRAM_WORDS).flat_map(|w| self.peek(w).to_le_bytes()).collect()
    }
}

fn strobe_mask(strobes: u8) -> u32 {
    (0..4)
        .filter(|i| strobes & (1 << i) != 0)
        .fold(0u32, |m, i| m | (0xFF << (8 * i)))
}

/// Background sweep that reads every word and rewrites correctable ones.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScrubberState {
    pub enabled: bool,
    /// Word index of the next word to scrub.
    pub next_address: u32,
    /// Cycles between scrub steps.
    pub interval: u64,
    pub sweep_length: u32,
    next_due: u64,
    pub stats: ScrubStats,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScrubStats {
    pub steps: u64,
    pub deferrals: u64,
    pub corrected: u64,
    pub uncorrectable: u64,
    /// Word indices found uncorrectable, in discovery order.
    pub uncorrectable_words: Vec<u32>,
}

pub const DEFAULT_SCRUB_INTERVAL: u64 = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScrubOutcome {
    NotDue,
    Deferred,
    Scrubbed(EccStatus),
}

impl Default for ScrubberState {
    fn default() -> Self {
        Self::new(DEFAULT_SCRUB_INTERVAL)
    }
}

impl ScrubberState {
    pub fn new(interval: u64) -> Self {
        ScrubberState {
            enabled: true,
            next_address: 0,
            interval: interval.max(1),
            sweep_length: SRAM_WORDS as u32,
            next_due: 0,
            stats: ScrubStats::default(),
        }
    }

    pub fn disabled() -> Self {
        ScrubberState {
            enabled: false,
            ..Self::default()
        }
    }

    pub fn set_interval(&mut self, interval: u64) {
        self.interval = interval.max(1);
    }

    /// Byte offset of the word the scrubber wants this cycle, if any.
    pub fn due(&self, now: u64) -> Option<u32> {
        (self.enabled && now >= self.next_due).then_some(self.next_address * 4)
    }

    /// One scrub attempt. `contended` means the target bank is taken by an
    /// external access (or an internal write) this cycle; the scrubber then
    /// stays on the same word and tries again next cycle.
    pub fn scrub_step(&mut self, mem: &mut BankArray, now: u64, contended: bool) -> ScrubOutcome {
        let Some(addr) = self.due(now) else {
            return ScrubOutcome::NotDue;
        };
        if contended {
            self.stats.deferrals += 1;
            return ScrubOutcome::Deferred;
        }
        let (bank, row) = bank_of(addr).expect("scrub address within SRAM");
        let (_, status) = mem.banks[bank].checked_read(row);
        match status {
            EccStatus::Clean => {}
            EccStatus::Corrected(_) => self.stats.corrected += 1,
            EccStatus::Uncorrectable => {
                self.stats.uncorrectable += 1;
                self.stats.uncorrectable_words.push(self.next_address);
            }
        }
        self.stats.steps += 1;
        self.next_address = (self.next_address + 1) % self.sweep_length;
        self.next_due = now + self.interval;
        ScrubOutcome::Scrubbed(status)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rd(addr: u32) -> MemAccess {
        MemAccess::read(addr, Initiator::Core(0))
    }

    fn wr(addr: u32, strobes: u8, data: u32) -> MemAccess {
        MemAccess::write(addr, strobes, data, Initiator::Core(0))
    }

    #[test]
    fn interleaving() {
        assert_eq!(bank_of(0x000).unwrap(), (0, 0));
        assert_eq!(bank_of(0x004).unwrap(), (1, 0));
        assert_eq!(bank_of(0x020).unwrap(), (0, 1));
        assert_eq!(bank_of(0x03C).unwrap(), (7, 1));
        assert!(bank_of(SRAM_BYTES as u32).is_err());
    }

    #[test]
    fn capacity() {
        assert_eq!(SRAM_BYTES, 262_144);
    }

    #[test]
    fn clean_read() {
        let mut m = BankArray::new();
        m.write_word(wr(0x40, 0xF, 0x1234_5678), 0).unwrap();
        let r = m.read_word(rd(0x40), 1).unwrap();
        assert_eq!(
            r,
            ReadOutcome {
                data: 0x1234_5678,
                status: EccStatus::Clean,
                latency: 1
            }
        );
    }

    #[test]
    fn single_flip_is_corrected_and_counted() {
        let mut m = BankArray::new();
        m.write_word(wr(0x44, 0xF, 0xCAFE_F00D), 0).unwrap();
        let (bank, row) = bank_of(0x44).unwrap();
        m.flip_bit(bank, row, 17).unwrap();
        assert_eq!(m.counters(bank).correctable, 0);
        let r = m.read_word(rd(0x44), 1).unwrap();
        assert_eq!(r.data, 0xCAFE_F00D);
        assert_eq!(r.status, EccStatus::Corrected(17));
        assert_eq!(r.latency, 1);
        assert_eq!(m.counters(bank).correctable, 1);
        // Repaired in place.
        let r = m.read_word(rd(0x44), 2).unwrap();
        assert_eq!(r.status, EccStatus::Clean);
        assert_eq!(m.counters(bank).correctable, 1);
    }

    #[test]
    fn double_flip_is_a_bus_error() {
        let mut m = BankArray::new();
        m.write_word(wr(0x48, 0xF, 0x0BAD_CAFE), 0).unwrap();
        let (bank, row) = bank_of(0x48).unwrap();
        m.flip_bit(bank, row, 3).unwrap();
        m.flip_bit(bank, row, 35).unwrap();
        let r = m.read_word(rd(0x48), 1).unwrap();
        assert!(r.bus_error());
        assert_eq!(r.latency, 1);
        assert_eq!(m.counters(bank).uncorrectable, 1);
    }

    #[test]
    fn flip_twice_is_identity() {
        let mut m = BankArray::new();
        m.write_word(wr(0x0, 0xF, 77), 0).unwrap();
        m.flip_bit(0, 0, 38).unwrap();
        m.flip_bit(0, 0, 38).unwrap();
        assert_eq!(m.read_word(rd(0), 1).unwrap().status, EccStatus::Clean);
        assert!(m.flip_bit(0, 0, 39).is_err());
        assert!(m.flip_bit(8, 0, 0).is_err());
    }

    #[test]
    fn sub_word_write_merges_and_busies_the_bank() {
        let mut m = BankArray::new();
        m.write_word(wr(0x80, 0xF, 0xAABB_CCDD), 0).unwrap();
        let ack = m.write_word(wr(0x80, 0b0001, 0x0000_0011), 10).unwrap();
        assert_eq!(ack, 1);
        // Same bank, next cycle: one extra cycle.
        assert!(m.is_busy(0, 11));
        let r = m.read_word(rd(0x80), 11).unwrap();
        assert_eq!(r.data, 0xAABB_CC11);
        assert_eq!(r.status, EccStatus::Clean);
        assert_eq!(r.latency, 2);
        // Other banks are unaffected.
        assert!(!m.is_busy(1, 11));
        assert_eq!(m.read_word(rd(0x84), 11).unwrap().latency, 1);
        // Two cycles later the bank is free again.
        assert!(!m.is_busy(0, 12));
    }

    #[test]
    fn write_disable_freezes_bits() {
        let mut m = BankArray::new();
        // Bit 5 differs between the two data words only.
        m.write_word(wr(0x0, 0xF, 0x0000_0000), 0).unwrap();
        m.set_write_disable_mask(0, 1 << 5);
        m.write_word(wr(0x0, 0xF, 0x0000_0020), 1).unwrap();
        let stored = m.codeword(0, 0);
        assert_eq!((stored.bits() >> 5) & 1, 0);
        let r = m.read_word(rd(0), 2).unwrap();
        // Stored codeword is distance 1 from encode(0x20) and gets corrected;
        // the fix-up write is also inhibited so the bit stays stale.
        assert_eq!(r.data, 0x20);
        assert_eq!(r.status, EccStatus::Corrected(5));
        assert_eq!((m.codeword(0, 0).bits() >> 5) & 1, 0);
    }

    #[test]
    fn empty_strobes_rejected() {
        let mut m = BankArray::new();
        assert!(matches!(
            m.write_word(wr(0, 0, 1), 0),
            Err(MemError::EmptyStrobes(0))
        ));
        assert!(m.write_word(wr(SRAM_BYTES as u32, 0xF, 1), 0).is_err());
    }

    #[test]
    fn load_and_dump_roundtrip() {
        let mut m = BankArray::new();
        let image: Vec<u8> = (0..37u8).collect();
        m.load(0, &image).unwrap();
        assert_eq!(&m.dump()[..37], &image[..]);
        assert!(m.load(SRAM_BYTES as u32 - 2, &[1, 2, 3, 4]).is_err());
    }

    #[test]
    fn scrubber_fixes_a_latent_error_within_one_sweep() {
        let mut m = BankArray::new();
        m.write_word(wr(0x1234 * 4, 0xF, 0x5555_AAAA), 0).unwrap();
        let (bank, row) = bank_of(0x1234 * 4).unwrap();
        m.flip_bit(bank, row, 9).unwrap();
        let mut s = ScrubberState::new(2);
        let sweep = u64::from(s.sweep_length) * s.interval;
        for now in 0..sweep {
            s.scrub_step(&mut m, now, false);
        }
        assert_eq!(s.stats.corrected, 1);
        assert_eq!(m.counters(bank).correctable, 1);
        assert_eq!(ecc::decode(m.codeword(bank, row)).status, EccStatus::Clean);
        assert_eq!(s.next_address, 0);
    }

    #[test]
    fn scrubber_defers_without_advancing() {
        let mut m = BankArray::new();
        let mut s = ScrubberState::new(4);
        assert_eq!(s.scrub_step(&mut m, 0, true), ScrubOutcome::Deferred);
        assert_eq!(s.next_address, 0);
        assert_eq!(s.scrub_step(&mut m, 1, false), ScrubOutcome::Scrubbed(EccStatus::Clean));
        assert_eq!(s.next_address, 1);
        assert_eq!(s.scrub_step(&mut m, 2, false), ScrubOutcome::NotDue);
        assert_eq!(s.scrub_step(&mut m, 5, false), ScrubOutcome::Scrubbed(EccStatus::Clean));
        assert_eq!(m.total_counters(), BankCounters::default());
    }

    #[test]
    fn scrubber_logs_uncorrectable_and_leaves_word() {
        let mut m = BankArray::new();
        m.flip_bit(0, 0, 0).unwrap();
        m.flip_bit(0, 0, 1).unwrap();
        let before = m.codeword(0, 0);
        let mut s = ScrubberState::new(1);
        s.scrub_step(&mut m, 0, false);
        assert_eq!(s.stats.uncorrectable_words, vec![0]);
        assert_eq!(m.counters(0).uncorrectable, 1);
        assert_eq!(m.codeword(0, 0), before);
    }

    proptest! {
        #[test]
        fn read_after_write(word in 0u32..SRAM_WORDS as u32, strobes in 1u8..16, data: u32, init: u32) {
            let mut m = BankArray::new();
            let addr = word * 4;
            m.write_word(wr(addr, 0xF, init), 0).unwrap();
            m.write_word(wr(addr, strobes, data), 1).unwrap();
            let lanes = strobe_mask(strobes);
            let r = m.read_word(rd(addr), 3).unwrap();
            prop_assert_eq!(r.data, (init & !lanes) | (data & lanes));
            prop_assert_eq!(r.status, EccStatus::Clean);
        }

        #[test]
        fn one_flip_per_word_always_decodes(flips in proptest::collection::vec((0usize..64, 0usize..CODE_BITS), 1..40)) {
            let mut m = BankArray::new();
            let image: Vec<u8> = (0..256u32).flat_map(|i| (i.wrapping_mul(0x9E37_79B9)).to_le_bytes()).collect();
            m.load(0, &image).unwrap();
            let mut seen = std::collections::HashSet::new();
            for (w, bit) in flips {
                if seen.insert(w) {
                    m.flip_bit(w % NUM_BANKS, w / NUM_BANKS, bit).unwrap();
                }
            }
            for w in 0..64u32 {
                let r = m.read_word(rd(w * 4), 0).unwrap();
                prop_assert_eq!(r.data, w.wrapping_mul(0x9E37_79B9));
            }
            prop_assert_eq!(m.total_counters().correctable, seen.len() as u64);
        }
    }
}
