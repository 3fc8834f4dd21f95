//! Per-bank arbitration between the SRAM initiators.
//!
//! Fixed priority: voted data, voted instruction, the three cores, the image
//! loader, then the scrubber. Among cores the order rotates per bank: after a
//! cycle in which two or more cores wanted the same bank, the core after the
//! winner goes first next time.

use serde::{Deserialize, Serialize};

use crate::memory::{Initiator, NUM_BANKS};

pub const NUM_CORES: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PortId {
    VotedData,
    VotedInstr,
    CoreData(u8),
    CoreInstr(u8),
    Loader,
    Scrubber,
}

impl PortId {
    pub fn initiator(self) -> Initiator {
        match self {
            PortId::VotedData | PortId::VotedInstr => Initiator::Voted,
            PortId::CoreData(c) | PortId::CoreInstr(c) => Initiator::Core(c),
            PortId::Loader => Initiator::Loader,
            PortId::Scrubber => Initiator::Scrubber,
        }
    }

    fn core(self) -> Option<u8> {
        match self {
            PortId::CoreData(c) | PortId::CoreInstr(c) => Some(c),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BankRequest {
    pub port: PortId,
    pub bank: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct XbarStats {
    pub grants: u64,
    /// Requests that lost to another request for the same bank.
    pub conflict_stalls: u64,
    /// Requests refused because the bank was finishing an internal write.
    pub busy_stalls: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interconnect {
    rr_next: [u8; NUM_BANKS],
    pub stats: XbarStats,
}

impl Interconnect {
    pub fn new() -> Self {
        Self::default()
    }

    fn rank(&self, req: &BankRequest) -> u32 {
        match req.port {
            PortId::VotedData => 0,
            PortId::VotedInstr => 1,
            PortId::CoreData(c) | PortId::CoreInstr(c) => {
                let offset = (u32::from(c) + NUM_CORES as u32 - u32::from(self.rr_next[req.bank]))
                    % NUM_CORES as u32;
                let instr = u32::from(matches!(req.port, PortId::CoreInstr(_)));
                2 + 2 * offset + instr
            }
            PortId::Loader => 8,
            PortId::Scrubber => 9,
        }
    }

    /// Returns one grant flag per request. A bank that is not busy grants
    /// exactly one of its requesters; a busy bank grants none.
    pub fn arbitrate(&mut self, requests: &[BankRequest], busy: &[bool; NUM_BANKS]) -> Vec<bool> {
        let mut grants = vec![false; requests.len()];
        for bank in 0..NUM_BANKS {
            let mut winner: Option<usize> = None;
            let mut cores_seen = 0u8;
            let mut contenders = 0u64;
            for (i, req) in requests.iter().enumerate().filter(|(_, r)| r.bank == bank) {
                contenders += 1;
                if let Some(c) = req.port.core() {
                    cores_seen |= 1 << c;
                }
                if winner.is_none_or(|w| self.rank(req) < self.rank(&requests[w])) {
                    winner = Some(i);
                }
            }
            let Some(w) = winner else { continue };
            if busy[bank] {
                self.stats.busy_stalls += contenders;
                continue;
            }
            grants[w] = true;
            self.stats.grants += 1;
            self.stats.conflict_stalls += contenders - 1;
            if cores_seen.count_ones() >= 2 {
                if let Some(c) = requests[w].port.core() {
                    self.rr_next[bank] = (c + 1) % NUM_CORES as u8;
                }
            }
        }
        grants
    }
}
