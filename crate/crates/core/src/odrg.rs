//! Redundancy grouping of the three cores: the majority voter and the
//! control block that tracks mismatches, resynchronization and mode changes.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Disagreement {
    None,
    Core(u8),
    AllDiffer,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct VoteResult<T> {
    pub value: T,
    pub disagreeing: Disagreement,
}

/// Majority vote over three same-cycle bundles, compared as whole values.
/// With no majority the first input is returned and `AllDiffer` flagged.
pub fn vote<T: PartialEq + Clone>(a: &T, b: &T, c: &T) -> VoteResult<T> {
    let (value, disagreeing) = match (a == b, a == c, b == c) {
        (true, true, _) => (a, Disagreement::None),
        (true, false, _) => (a, Disagreement::Core(2)),
        (false, true, _) => (a, Disagreement::Core(1)),
        (false, false, true) => (b, Disagreement::Core(0)),
        (false, false, false) => (a, Disagreement::AllDiffer),
    };
    VoteResult {
        value: value.clone(),
        disagreeing,
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Lockstep,
    Performance,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResyncState {
    #[default]
    Idle,
    Requested,
    InProgress,
    Done,
}

impl ResyncState {
    fn code(self) -> u32 {
        match self {
            ResyncState::Idle => 0,
            ResyncState::Requested => 1,
            ResyncState::InProgress => 2,
            ResyncState::Done => 3,
        }
    }
}

/// Register offsets within the block.
pub mod reg {
    pub const MODE: u32 = 0x00;
    pub const RESYNC_STATE: u32 = 0x04;
    pub const RESYNC_TRIGGER: u32 = 0x08;
    pub const RESYNC_SP: u32 = 0x0C;
    pub const MISMATCH_COUNT: u32 = 0x10;
    pub const RESYNC_EVENTS: u32 = 0x1C;
    pub const ERROR_OUTPUT_SELECT: u32 = 0x20;
    pub const ERROR_OUTPUT: u32 = 0x24;
    pub const SW_IRQ: u32 = 0x30;
    pub const PENDING_MODE: u32 = 0x40;
}

/// Internal error signals selectable onto the error output.
pub mod signal {
    pub const ANY_MISMATCH: u32 = 0;
    pub const CORE0_MISMATCH: u32 = 1;
    pub const RESYNC_REQUEST: u32 = 4;
    pub const UNRECOVERABLE: u32 = 5;
    pub const COUNT: u32 = 6;
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OdrgConfig {
    pub mode: Mode,
    pub pending_mode: Option<Mode>,
    pub mismatch_count: [u32; 3],
    pub resync_state: ResyncState,
    pub resync_events: u32,
    pub resync_sp: u32,
    pub error_output_select: u32,
    sticky: u32,
    /// Cores that disagreed in the current episode.
    faulty: u8,
    /// A mismatch arrived while a resync was in progress.
    rearm: bool,
    reset_pulse: bool,
    pub sw_irq: [bool; 3],
    pub unrecoverable: bool,
}

impl OdrgConfig {
    pub fn new(mode: Mode) -> Self {
        OdrgConfig {
            mode,
            ..Self::default()
        }
    }

    /// Level of the resync interrupt line shared by the voted core.
    pub fn resync_irq(&self) -> bool {
        self.mode == Mode::Lockstep && self.resync_state == ResyncState::Requested
    }

    fn raise(&mut self, sig: u32) {
        self.sticky |= 1 << sig;
    }

    pub fn error_output(&self) -> bool {
        (self.sticky >> self.error_output_select) & 1 == 1
    }

    fn request(&mut self) {
        match self.resync_state {
            ResyncState::Idle | ResyncState::Done => {
                self.resync_state = ResyncState::Requested;
                self.raise(signal::RESYNC_REQUEST);
            }
            ResyncState::InProgress => self.rearm = true,
            ResyncState::Requested => {}
        }
    }

    /// Accounts one cycle's vote. Only lockstep mode counts.
    pub fn record(&mut self, d: Disagreement) {
        if self.mode != Mode::Lockstep {
            return;
        }
        match d {
            Disagreement::None => {}
            Disagreement::AllDiffer => {
                self.unrecoverable = true;
                self.raise(signal::ANY_MISMATCH);
                self.raise(signal::UNRECOVERABLE);
            }
            Disagreement::Core(c) => {
                let c = c as usize;
                self.mismatch_count[c] = self.mismatch_count[c].saturating_add(1);
                self.raise(signal::ANY_MISMATCH);
                self.raise(signal::CORE0_MISMATCH + c as u32);
                self.faulty |= 1 << c;
                if self.faulty == 0b111 {
                    self.unrecoverable = true;
                    self.raise(signal::UNRECOVERABLE);
                }
                self.request();
            }
        }
    }

    /// Consumes the reset pulse raised by a trigger this cycle.
    pub fn take_reset_pulse(&mut self) -> bool {
        std::mem::take(&mut self.reset_pulse)
    }

    /// Applies a pending mode change if the barrier holds.
    pub fn try_switch(&mut self, all_sleeping: bool) -> Option<Mode> {
        let target = self.pending_mode?;
        if !all_sleeping {
            return None;
        }
        self.pending_mode = None;
        self.mode = target;
        self.resync_state = ResyncState::Idle;
        self.faulty = 0;
        self.rearm = false;
        self.sw_irq = [false; 3];
        Some(target)
    }

    pub fn read(&self, offset: u32) -> Option<u32> {
        Some(match offset {
            reg::MODE => u32::from(self.mode == Mode::Performance),
            reg::RESYNC_STATE => self.resync_state.code(),
            reg::RESYNC_TRIGGER => 0,
            reg::RESYNC_SP => self.resync_sp,
            o if (reg::MISMATCH_COUNT..reg::MISMATCH_COUNT + 12).contains(&o) && o % 4 == 0 => {
                self.mismatch_count[((o - reg::MISMATCH_COUNT) / 4) as usize]
            }
            reg::RESYNC_EVENTS => self.resync_events,
            reg::ERROR_OUTPUT_SELECT => self.error_output_select,
            reg::ERROR_OUTPUT => u32::from(self.error_output()),
            o if (reg::SW_IRQ..reg::SW_IRQ + 12).contains(&o) && o % 4 == 0 => {
                u32::from(self.sw_irq[((o - reg::SW_IRQ) / 4) as usize])
            }
            reg::PENDING_MODE => match self.pending_mode {
                None => 0,
                Some(Mode::Lockstep) => 1,
                Some(Mode::Performance) => 3,
            },
            _ => return None,
        })
    }

    /// Returns false for an unmapped or read-only offset.
    pub fn write(&mut self, offset: u32, value: u32) -> bool {
        match offset {
            reg::MODE => {
                let m = if value & 1 == 1 {
                    Mode::Performance
                } else {
                    Mode::Lockstep
                };
                self.pending_mode = (m != self.mode).then_some(m);
            }
            reg::RESYNC_STATE => match (self.resync_state, value) {
                (ResyncState::InProgress, 3) => {
                    if std::mem::take(&mut self.rearm) {
                        self.resync_state = ResyncState::Requested;
                        self.raise(signal::RESYNC_REQUEST);
                    } else {
                        self.resync_state = ResyncState::Done;
                        self.faulty = 0;
                    }
                }
                (ResyncState::Idle | ResyncState::Done, 1) if self.mode == Mode::Lockstep => {
                    self.request()
                }
                _ => {}
            },
            reg::RESYNC_TRIGGER => {
                if self.mode == Mode::Lockstep && self.resync_state != ResyncState::InProgress {
                    self.resync_state = ResyncState::InProgress;
                    self.resync_events = self.resync_events.saturating_add(1);
                    self.reset_pulse = true;
                }
            }
            reg::RESYNC_SP => self.resync_sp = value,
            o if (reg::MISMATCH_COUNT..reg::MISMATCH_COUNT + 12).contains(&o) && o % 4 == 0 => {
                self.mismatch_count[((o - reg::MISMATCH_COUNT) / 4) as usize] = 0;
            }
            reg::ERROR_OUTPUT_SELECT => {
                if value >= signal::COUNT {
                    return false;
                }
                self.error_output_select = value;
            }
            reg::ERROR_OUTPUT => self.sticky = 0,
            o if (reg::SW_IRQ..reg::SW_IRQ + 12).contains(&o) && o % 4 == 0 => {
                self.sw_irq[((o - reg::SW_IRQ) / 4) as usize] = value & 1 == 1;
            }
            _ => return false,
        }
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn unanimous() {
        assert_eq!(
            vote(&7, &7, &7),
            VoteResult {
                value: 7,
                disagreeing: Disagreement::None
            }
        );
    }

    #[test]
    fn minority_flagged() {
        assert_eq!(vote(&1, &1, &2).disagreeing, Disagreement::Core(2));
        assert_eq!(vote(&1, &2, &1).disagreeing, Disagreement::Core(1));
        assert_eq!(vote(&2, &1, &1).disagreeing, Disagreement::Core(0));
        assert_eq!(vote(&2, &1, &1).value, 1);
    }

    #[test]
    fn all_differ() {
        assert_eq!(vote(&1, &2, &3).disagreeing, Disagreement::AllDiffer);
    }

    #[test]
    fn mismatch_requests_resync() {
        let mut o = OdrgConfig::new(Mode::Lockstep);
        assert!(!o.resync_irq());
        o.record(Disagreement::Core(1));
        assert_eq!(o.mismatch_count, [0, 1, 0]);
        assert_eq!(o.resync_state, ResyncState::Requested);
        assert!(o.resync_irq());
        o.record(Disagreement::Core(1));
        assert_eq!(o.mismatch_count, [0, 2, 0]);
        assert!(!o.unrecoverable);
    }

    #[test]
    fn resync_flow() {
        let mut o = OdrgConfig::new(Mode::Lockstep);
        o.record(Disagreement::Core(0));
        assert!(o.write(reg::RESYNC_SP, 0x1234));
        assert!(o.write(reg::RESYNC_TRIGGER, 1));
        assert_eq!(o.resync_state, ResyncState::InProgress);
        assert_eq!(o.resync_events, 1);
        assert!(!o.resync_irq());
        assert!(o.take_reset_pulse());
        assert!(!o.take_reset_pulse());
        assert_eq!(o.read(reg::RESYNC_STATE), Some(2));
        assert_eq!(o.read(reg::RESYNC_SP), Some(0x1234));
        o.write(reg::RESYNC_STATE, 3);
        assert_eq!(o.resync_state, ResyncState::Done);
    }

    #[test]
    fn mismatch_during_resync_rearms() {
        let mut o = OdrgConfig::new(Mode::Lockstep);
        o.record(Disagreement::Core(0));
        o.write(reg::RESYNC_TRIGGER, 1);
        o.record(Disagreement::Core(2));
        assert_eq!(o.mismatch_count, [1, 0, 1]);
        o.write(reg::RESYNC_STATE, 3);
        assert_eq!(o.resync_state, ResyncState::Requested);
        assert!(!o.unrecoverable);
        // Third distinct core within the same episode.
        o.record(Disagreement::Core(1));
        assert!(o.unrecoverable);
    }

    #[test]
    fn all_differ_is_unrecoverable() {
        let mut o = OdrgConfig::new(Mode::Lockstep);
        o.record(Disagreement::AllDiffer);
        assert!(o.unrecoverable);
    }

    #[test]
    fn performance_mode_does_not_count() {
        let mut o = OdrgConfig::new(Mode::Performance);
        o.record(Disagreement::Core(1));
        assert_eq!(o.mismatch_count, [0, 0, 0]);
        assert_eq!(o.resync_state, ResyncState::Idle);
        o.write(reg::RESYNC_TRIGGER, 1);
        assert_eq!(o.resync_events, 0);
        assert!(!o.take_reset_pulse());
    }

    #[test]
    fn mode_change_waits_for_barrier() {
        let mut o = OdrgConfig::new(Mode::Lockstep);
        o.write(reg::MODE, 1);
        assert_eq!(o.mode, Mode::Lockstep);
        assert_eq!(o.read(reg::PENDING_MODE), Some(3));
        assert_eq!(o.try_switch(false), None);
        assert_eq!(o.mode, Mode::Lockstep);
        assert_eq!(o.try_switch(true), Some(Mode::Performance));
        assert_eq!(o.read(reg::MODE), Some(1));
        assert_eq!(o.try_switch(true), None);
        // Writing the current mode cancels a pending change.
        o.write(reg::MODE, 0);
        o.write(reg::MODE, 1);
        assert_eq!(o.pending_mode, None);
    }

    #[test]
    fn counters_clear_on_write() {
        let mut o = OdrgConfig::new(Mode::Lockstep);
        o.record(Disagreement::Core(2));
        assert_eq!(o.read(reg::MISMATCH_COUNT + 8), Some(1));
        o.write(reg::MISMATCH_COUNT + 8, 0);
        assert_eq!(o.read(reg::MISMATCH_COUNT + 8), Some(0));
    }

    #[test]
    fn error_output_is_selectable_and_sticky() {
        let mut o = OdrgConfig::new(Mode::Lockstep);
        o.write(reg::ERROR_OUTPUT_SELECT, signal::CORE0_MISMATCH + 1);
        o.record(Disagreement::Core(0));
        assert_eq!(o.read(reg::ERROR_OUTPUT), Some(0));
        o.record(Disagreement::Core(1));
        assert_eq!(o.read(reg::ERROR_OUTPUT), Some(1));
        o.write(reg::ERROR_OUTPUT, 0);
        assert_eq!(o.read(reg::ERROR_OUTPUT), Some(0));
        assert!(!o.write(reg::ERROR_OUTPUT_SELECT, signal::COUNT));
    }

    #[test]
    fn software_resync_request() {
        let mut o = OdrgConfig::new(Mode::Lockstep);
        o.write(reg::RESYNC_STATE, 1);
        assert!(o.resync_irq());
        assert_eq!(o.mismatch_count, [0, 0, 0]);
    }

    #[test]
    fn unmapped_offsets() {
        let mut o = OdrgConfig::new(Mode::Lockstep);
        assert_eq!(o.read(0x2C), None);
        assert!(!o.write(0x2C, 0));
        assert!(!o.write(reg::RESYNC_EVENTS, 0));
    }

    proptest! {
        #[test]
        fn permutation_invariance(a: u8, b: u8, c: u8) {
            let base = vote(&a, &b, &c);
            let perms = [((a, b, c), [0u8, 1, 2]), ((b, a, c), [1, 0, 2]), ((c, b, a), [2, 1, 0]),
                         ((a, c, b), [0, 2, 1]), ((b, c, a), [1, 2, 0]), ((c, a, b), [2, 0, 1])];
            for ((x, y, z), map) in perms {
                let r = vote(&x, &y, &z);
                match base.disagreeing {
                    Disagreement::AllDiffer => prop_assert_eq!(r.disagreeing, Disagreement::AllDiffer),
                    Disagreement::None => {
                        prop_assert_eq!(r.value, base.value);
                        prop_assert_eq!(r.disagreeing, Disagreement::None);
                    }
                    Disagreement::Core(k) => {
                        prop_assert_eq!(r.value, base.value);
                        let pos = map.iter().position(|&m| m == k).unwrap() as u8;
                        prop_assert_eq!(r.disagreeing, Disagreement::Core(pos));
                    }
                }
            }
        }

        #[test]
        fn none_iff_all_equal(a in 0u8..3, b in 0u8..3, c in 0u8..3) {
            let r = vote(&a, &b, &c);
            prop_assert_eq!(r.disagreeing == Disagreement::None, a == b && b == c);
        }
    }
}
