//! Bit matrices, sequential-XOR transition matrices and TANGs.
//!
//! Payloads are at most 64 bits, so every matrix row is one `u64` with bit
//! position 0 stored in the most significant bit. Column sums then reduce to
//! walking the set bits of each XOR word.

use std::io::Write;

use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::frame::IdTrace;

/// Widest payload a row word can hold.
pub const MAX_WIDTH: usize = 64;

#[inline]
fn position_mask(position: usize) -> u64 {
    1u64 << (63 - position)
}

#[inline]
fn width_mask(width: usize) -> u64 {
    if width == 0 {
        0
    } else {
        u64::MAX << (64 - width)
    }
}

/// M x N boolean matrix, one row per observed payload.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitMatrix {
    rows: Vec<u64>,
    width: usize,
}

impl BitMatrix {
    /// Builds a matrix from left-aligned row words; bits past `width` are cleared.
    pub fn from_words(width: usize, rows: Vec<u64>) -> Result<Self> {
        if width > MAX_WIDTH {
            return Err(Error::InvalidFrame(format!(
                "bit width {width} exceeds {MAX_WIDTH}"
            )));
        }
        let mask = width_mask(width);
        let rows = rows.into_iter().map(|r| r & mask).collect();
        Ok(BitMatrix { rows, width })
    }

    pub fn rows(&self) -> usize {
        self.rows.len()
    }

    pub fn cols(&self) -> usize {
        self.width
    }

    pub fn bit(&self, row: usize, position: usize) -> bool {
        assert!(
            position < self.width,
            "bit position {position} out of range"
        );
        self.rows[row] & position_mask(position) != 0
    }

    /// Row `row` as a left-aligned word.
    pub fn row_word(&self, row: usize) -> u64 {
        self.rows[row]
    }

    pub fn row_words(&self) -> &[u64] {
        &self.rows
    }

    pub fn row(&self, row: usize) -> Vec<bool> {
        (0..self.width).map(|p| self.bit(row, p)).collect()
    }
}

/// Expands an ID trace into its bit matrix.
pub fn build_bit_matrix(trace: &IdTrace) -> Result<BitMatrix> {
    if trace.is_empty() {
        return Err(Error::NoObservations);
    }
    BitMatrix::from_words(
        trace.bit_width(),
        trace.frames().iter().map(|f| f.bits()).collect(),
    )
}

/// (M - 1) x N matrix of sequential row XORs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransitionMatrix {
    rows: Vec<u64>,
    width: usize,
}

impl TransitionMatrix {
    pub fn rows(&self) -> usize {
        self.rows.len()
    }

    pub fn cols(&self) -> usize {
        self.width
    }

    pub fn bit(&self, row: usize, position: usize) -> bool {
        assert!(
            position < self.width,
            "bit position {position} out of range"
        );
        self.rows[row] & position_mask(position) != 0
    }

    pub fn row_words(&self) -> &[u64] {
        &self.rows
    }

    pub fn row(&self, row: usize) -> Vec<bool> {
        (0..self.width).map(|p| self.bit(row, p)).collect()
    }
}

pub fn transition_matrix(bm: &BitMatrix) -> Result<TransitionMatrix> {
    if bm.rows() < 2 {
        return Err(Error::InsufficientObservations(bm.rows()));
    }
    Ok(TransitionMatrix {
        rows: bm.rows.windows(2).map(|w| w[0] ^ w[1]).collect(),
        width: bm.width,
    })
}

/// Per-position transition counts for one arbitration ID.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tang {
    arbitration_id: u32,
    observations: usize,
    counts: Vec<u64>,
}

impl Tang {
    /// Validates `observations >= 2` and every count `<= observations - 1`.
    pub fn new(arbitration_id: u32, observations: usize, counts: Vec<u64>) -> Result<Self> {
        if observations < 2 {
            return Err(Error::InsufficientObservations(observations));
        }
        let limit = (observations - 1) as u64;
        if let Some((i, c)) = counts.iter().enumerate().find(|(_, &c)| c > limit) {
            return Err(Error::InvalidTang(format!(
                "position {i} has {c} transitions but only {limit} are possible"
            )));
        }
        Ok(Tang {
            arbitration_id,
            observations,
            counts,
        })
    }

    pub fn arbitration_id(&self) -> u32 {
        self.arbitration_id
    }

    /// Number of payloads M the counts were taken over.
    pub fn observations(&self) -> usize {
        self.observations
    }

    pub fn bit_width(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn count(&self, position: usize) -> u64 {
        self.counts[position]
    }

    pub fn max_count(&self) -> u64 {
        self.counts.iter().copied().max().unwrap_or(0)
    }

    /// The same statistics with position `i` moved to `N - 1 - i`.
    pub fn reversed(&self) -> Tang {
        let mut counts = self.counts.clone();
        counts.reverse();
        Tang {
            counts,
            ..self.clone()
        }
    }
}

/// Column sums of a transition matrix.
pub fn compute_tang(tm: &TransitionMatrix, arbitration_id: u32) -> Tang {
    let mut sums = [0u64; MAX_WIDTH];
    accumulate_xor_words(tm.row_words().iter().copied(), &mut sums);
    Tang {
        arbitration_id,
        observations: tm.rows() + 1,
        counts: sums[..tm.width].to_vec(),
    }
}

#[inline]
fn accumulate_xor_words(words: impl Iterator<Item = u64>, sums: &mut [u64; MAX_WIDTH]) {
    for mut w in words {
        while w != 0 {
            let lead = w.leading_zeros() as usize;
            sums[lead] += 1;
            w &= !position_mask(lead);
        }
    }
}

/// Frames per work item in [`tang_for`].
const TANG_CHUNK: usize = 1 << 16;

/// TANG straight from frames, without materializing either matrix.
pub fn tang_for(trace: &IdTrace, exec: Execution) -> Result<Tang> {
    if trace.is_empty() {
        return Err(Error::NoObservations);
    }
    if trace.len() < 2 {
        return Err(Error::InsufficientObservations(trace.len()));
    }
    let frames = trace.frames();
    let pairs = frames.len() - 1;
    let sums = exec::chunked_reduce(
        exec,
        pairs,
        TANG_CHUNK,
        [0u64; MAX_WIDTH],
        |range| {
            let mut local = [0u64; MAX_WIDTH];
            let words = frames[range.start..=range.end]
                .windows(2)
                .map(|w| w[0].bits() ^ w[1].bits());
            accumulate_xor_words(words, &mut local);
            local
        },
        |mut acc, part| {
            acc.iter_mut().zip(part).for_each(|(a, p)| *a += p);
            acc
        },
    );
    Ok(Tang {
        arbitration_id: trace.arbitration_id(),
        observations: frames.len(),
        counts: sums[..trace.bit_width()].to_vec(),
    })
}

/// Counts divided by the number of transition opportunities, M - 1.
pub fn normalize_tang(tang: &Tang) -> Vec<f64> {
    let opportunities = (tang.observations - 1) as f64;
    tang.counts
        .iter()
        .map(|&c| c as f64 / opportunities)
        .collect()
}

/// Writes `bit_position,transitions,normalized` rows.
pub fn write_tang_csv<W: Write>(tang: &Tang, mut w: W) -> Result<()> {
    writeln!(w, "bit_position,transitions,normalized")?;
    for (i, (c, n)) in tang.counts.iter().zip(normalize_tang(tang)).enumerate() {
        writeln!(w, "{i},{c},{n:.6}")?;
    }
    Ok(())
}
