//! Hsiao (39,32) SEC-DED code.
//!
//! Codeword layout: data bit `k` lives at position `k` (0..32), parity bit `j`
//! at position `32 + j` (32..39). The parity-check matrix has one 7-bit column
//! per codeword position; parity columns are the seven weight-1 vectors and the
//! 32 data columns are distinct odd-weight vectors chosen greedily so that the
//! seven row weights stay balanced.

use std::fmt;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

pub const DATA_BITS: usize = 32;
pub const PARITY_BITS: usize = 7;
pub const CODE_BITS: usize = DATA_BITS + PARITY_BITS;

const CODE_MASK: u64 = (1 << CODE_BITS) - 1;

/// Parity-check matrix of the code, stored column-wise.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParityMatrix {
    /// One 7-bit column per codeword position.
    pub columns: [u8; CODE_BITS],
    pub data_positions: [u8; DATA_BITS],
    pub parity_positions: [u8; PARITY_BITS],
}

impl ParityMatrix {
    /// Weight of each of the seven rows (number of set entries).
    pub fn row_weights(&self) -> [u32; PARITY_BITS] {
        let mut rows = [0u32; PARITY_BITS];
        for col in self.columns {
            for (r, w) in rows.iter_mut().enumerate() {
                *w += u32::from((col >> r) & 1);
            }
        }
        rows
    }

    /// Data-bit mask of row `r`: the data positions that feed parity bit `r`.
    pub fn row_data_mask(&self, r: usize) -> u32 {
        self.data_positions
            .iter()
            .enumerate()
            .filter(|(_, &pos)| (self.columns[pos as usize] >> r) & 1 == 1)
            .fold(0u32, |m, (k, _)| m | (1 << k))
    }

    /// Position whose column equals `syndrome`, if any.
    pub fn position_of(&self, syndrome: u8) -> Option<usize> {
        self.columns.iter().position(|&c| c == syndrome)
    }
}

/// Builds the parity-check matrix.
///
/// Candidates are odd-weight columns of weight at least 3. Each data column is
/// picked by the key `(weight, row imbalance after adding it, integer value)`,
/// so lighter columns are exhausted first and ties go to the column that keeps
/// the rows most even, then to the smallest value.
pub fn build_matrix() -> ParityMatrix {
    let candidates: Vec<u8> = (1u8..128)
        .filter(|v| v.count_ones() % 2 == 1 && v.count_ones() > 1)
        .collect();
    let mut used = [false; 128];
    let mut rows = [0u32; PARITY_BITS];
    let mut columns = [0u8; CODE_BITS];

    for slot in columns.iter_mut().take(DATA_BITS) {
        let best = candidates
            .iter()
            .copied()
            .filter(|&v| !used[v as usize])
            .min_by_key(|&v| {
                let after: Vec<u32> = (0..PARITY_BITS)
                    .map(|r| rows[r] + u32::from((v >> r) & 1))
                    .collect();
                let spread = after.iter().max().unwrap() - after.iter().min().unwrap();
                (v.count_ones(), spread, v)
            })
            .expect("35 weight-3 columns cover 32 data bits");
        used[best as usize] = true;
        for (r, w) in rows.iter_mut().enumerate() {
            *w += u32::from((best >> r) & 1);
        }
        *slot = best;
    }
    for j in 0..PARITY_BITS {
        columns[DATA_BITS + j] = 1 << j;
    }

    let mut data_positions = [0u8; DATA_BITS];
    for (k, p) in data_positions.iter_mut().enumerate() {
        *p = k as u8;
    }
    let mut parity_positions = [0u8; PARITY_BITS];
    for (j, p) in parity_positions.iter_mut().enumerate() {
        *p = (DATA_BITS + j) as u8;
    }
    ParityMatrix {
        columns,
        data_positions,
        parity_positions,
    }
}

/// A stored 39-bit word.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Codeword39(u64);

impl Codeword39 {
    pub fn from_bits(bits: u64) -> Self {
        Codeword39(bits & CODE_MASK)
    }

    pub fn bits(self) -> u64 {
        self.0
    }

    pub fn data(self) -> u32 {
        self.0 as u32
    }

    pub fn parity(self) -> u8 {
        (self.0 >> DATA_BITS) as u8 & 0x7F
    }

    pub fn with_flipped(self, bit: usize) -> Self {
        debug_assert!(bit < CODE_BITS);
        Codeword39(self.0 ^ (1 << bit))
    }
}

impl fmt::LowerHex for Codeword39 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::LowerHex::fmt(&self.0, f)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EccStatus {
    Clean,
    Corrected(u8),
    Uncorrectable,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DecodeResult {
    /// Corrected data. On `Uncorrectable` these are the raw stored data bits
    /// and must be treated as poisoned.
    pub data: u32,
    pub status: EccStatus,
}

/// Encoder/decoder tables derived from a [`ParityMatrix`].
pub struct Hsiao {
    matrix: ParityMatrix,
    row_masks: [u32; PARITY_BITS],
    /// Syndrome -> codeword position, `NO_POS` when not a column.
    syndrome_pos: [u8; 128],
}

const NO_POS: u8 = 0xFF;

impl Hsiao {
    pub fn new(matrix: ParityMatrix) -> Self {
        let mut row_masks = [0u32; PARITY_BITS];
        for (r, m) in row_masks.iter_mut().enumerate() {
            *m = matrix.row_data_mask(r);
        }
        let mut syndrome_pos = [NO_POS; 128];
        for (pos, &col) in matrix.columns.iter().enumerate() {
            syndrome_pos[col as usize] = pos as u8;
        }
        Hsiao {
            matrix,
            row_masks,
            syndrome_pos,
        }
    }

    pub fn matrix(&self) -> &ParityMatrix {
        &self.matrix
    }

    fn parity_of(&self, data: u32) -> u8 {
        self.row_masks
            .iter()
            .enumerate()
            .fold(0u8, |p, (r, &m)| p | ((((data & m).count_ones() & 1) as u8) << r))
    }

    pub fn encode(&self, data: u32) -> Codeword39 {
        Codeword39(u64::from(data) | (u64::from(self.parity_of(data)) << DATA_BITS))
    }

    pub fn syndrome(&self, cw: Codeword39) -> u8 {
        self.parity_of(cw.data()) ^ cw.parity()
    }

    pub fn decode(&self, cw: Codeword39) -> DecodeResult {
        let syndrome = self.syndrome(cw);
        if syndrome == 0 {
            return DecodeResult {
                data: cw.data(),
                status: EccStatus::Clean,
            };
        }
        let pos = self.syndrome_pos[syndrome as usize];
        if syndrome.count_ones() % 2 == 1 && pos != NO_POS {
            let fixed = cw.with_flipped(pos as usize);
            DecodeResult {
                data: fixed.data(),
                status: EccStatus::Corrected(pos),
            }
        } else {
            DecodeResult {
                data: cw.data(),
                status: EccStatus::Uncorrectable,
            }
        }
    }
}

/// Process-wide codec built from [`build_matrix`].
pub fn codec() -> &'static Hsiao {
    static CODEC: OnceLock<Hsiao> = OnceLock::new();
    CODEC.get_or_init(|| Hsiao::new(build_matrix()))
}

pub fn encode(data: u32) -> Codeword39 {
    codec().encode(data)
}

pub fn decode(cw: Codeword39) -> DecodeResult {
    codec().decode(cw)
}
