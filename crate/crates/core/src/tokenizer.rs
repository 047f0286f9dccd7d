//! Greedy payload tokenization from a TANG.
//!
//! Bit positions are visited from the most to the least active. Each
//! position not yet claimed is taken as the LSB of a new signal, and the
//! cluster grows one neighbor at a time toward the MSB (lower positions for
//! big-endian, higher for little-endian) for as long as the neighbor's count
//! does not exceed the last absorbed position's count by more than the
//! threshold. Positions that never transitioned and were not absorbed are
//! pooled into padding runs.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::bitlab::Tang;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Endianness {
    /// Significance grows toward lower bit positions.
    #[default]
    Big,
    /// Significance grows toward higher bit positions.
    Little,
}

impl Endianness {
    /// Step from a bit toward the next more significant one.
    pub fn offset(self) -> isize {
        match self {
            Endianness::Big => -1,
            Endianness::Little => 1,
        }
    }

    pub fn opposite(self) -> Self {
        match self {
            Endianness::Big => Endianness::Little,
            Endianness::Little => Endianness::Big,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PaddingMode {
    /// Zero-transition positions stop cluster growth and become padding.
    #[default]
    Exclude,
    /// Zero-transition positions are absorbed whenever the comparison admits them.
    Strict,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct TokenizerConfig {
    pub endianness: Endianness,
    /// Absolute transition-count slack; 0 is the plain `<=` rule.
    pub threshold: u64,
    pub padding_mode: PaddingMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClusterKind {
    Signal,
    Padding,
}

/// A contiguous run of bit positions `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TokenCluster {
    pub kind: ClusterKind,
    pub lo: usize,
    pub hi: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lsb: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub msb: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lsb_transitions: Option<u64>,
}

impl TokenCluster {
    pub fn signal(lo: usize, hi: usize, endianness: Endianness, lsb_transitions: u64) -> Self {
        let (lsb, msb) = match endianness {
            Endianness::Big => (hi, lo),
            Endianness::Little => (lo, hi),
        };
        TokenCluster {
            kind: ClusterKind::Signal,
            lo,
            hi,
            lsb: Some(lsb),
            msb: Some(msb),
            lsb_transitions: Some(lsb_transitions),
        }
    }

    pub fn padding(lo: usize, hi: usize) -> Self {
        TokenCluster {
            kind: ClusterKind::Padding,
            lo,
            hi,
            lsb: None,
            msb: None,
            lsb_transitions: None,
        }
    }

    pub fn width(&self) -> usize {
        self.hi - self.lo + 1
    }

    pub fn is_signal(&self) -> bool {
        self.kind == ClusterKind::Signal
    }

    pub fn positions(&self) -> std::ops::RangeInclusive<usize> {
        self.lo..=self.hi
    }

    /// Positions ordered from the LSB to the MSB.
    pub fn lsb_to_msb(&self) -> Vec<usize> {
        match (self.lsb, self.msb) {
            (Some(l), Some(m)) if l > m => (m..=l).rev().collect(),
            _ => self.positions().collect(),
        }
    }

    /// The cluster as it appears after reversing a `width`-bit payload.
    pub fn mirrored(&self, width: usize) -> Self {
        let flip = |p: usize| width - 1 - p;
        TokenCluster {
            lo: flip(self.hi),
            hi: flip(self.lo),
            lsb: self.lsb.map(flip),
            msb: self.msb.map(flip),
            ..*self
        }
    }
}

/// A full partition of one arbitration ID's payload bits.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tokenization {
    #[serde(with = "crate::hexid")]
    pub id: u32,
    pub bit_width: usize,
    pub config: TokenizerConfig,
    pub clusters: Vec<TokenCluster>,
}

impl Tokenization {
    pub fn signals(&self) -> impl Iterator<Item = &TokenCluster> {
        self.clusters.iter().filter(|c| c.is_signal())
    }

    pub fn padding(&self) -> impl Iterator<Item = &TokenCluster> {
        self.clusters.iter().filter(|c| !c.is_signal())
    }

    /// Checks that clusters are sorted, disjoint and cover `0..bit_width`,
    /// and, given the TANG, that padding clusters never transitioned.
    pub fn validate(&self, tang: Option<&Tang>) -> Result<()> {
        let mut next = 0;
        for c in &self.clusters {
            if c.lo != next || c.hi < c.lo {
                return Err(Error::Invariant(format!(
                    "{}: cluster [{}..{}] breaks the partition at position {next}",
                    crate::format_id(self.id),
                    c.lo,
                    c.hi
                )));
            }
            next = c.hi + 1;
        }
        if next != self.bit_width {
            return Err(Error::Invariant(format!(
                "{}: clusters cover {next} of {} positions",
                crate::format_id(self.id),
                self.bit_width
            )));
        }
        if let Some(tang) = tang {
            if tang.bit_width() != self.bit_width {
                return Err(Error::Invariant(
                    "tang width differs from tokenization".into(),
                ));
            }
            for c in self.padding() {
                if c.positions().any(|p| tang.count(p) != 0) {
                    return Err(Error::Invariant(format!(
                        "{}: padding [{}..{}] contains a transitioning bit",
                        crate::format_id(self.id),
                        c.lo,
                        c.hi
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn write_json<W: Write>(&self, mut w: W) -> Result<()> {
        serde_json::to_writer_pretty(&mut w, self)?;
        writeln!(w)?;
        Ok(())
    }
}

/// Positions in pop order: descending count; ties pop first the position
/// lying further in the growth direction, so tokenization commutes with
/// mirroring the payload and flipping the endianness.
fn pop_order(counts: &[u64], endianness: Endianness) -> Vec<usize> {
    let mut order: Vec<usize> = (0..counts.len()).collect();
    match endianness {
        Endianness::Big => order.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then(a.cmp(&b))),
        Endianness::Little => order.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then(b.cmp(&a))),
    }
    order
}

/// Greedily clusters the TANG's bit positions into signals and padding.
pub fn tokenize(tang: &Tang, config: &TokenizerConfig) -> Tokenization {
    let counts = tang.counts();
    let width = counts.len();
    let mut assigned = vec![false; width];
    let mut clusters = Vec::new();

    for seed in pop_order(counts, config.endianness) {
        // a bit that never flipped cannot be an LSB
        if assigned[seed] || counts[seed] == 0 {
            continue;
        }
        assigned[seed] = true;
        let (mut lo, mut hi) = (seed, seed);
        let mut current = seed;
        while let Some(neighbor) = current
            .checked_add_signed(config.endianness.offset())
            .filter(|&n| n < width)
        {
            if assigned[neighbor] {
                break;
            }
            let count = counts[neighbor];
            if config.padding_mode == PaddingMode::Exclude && count == 0 {
                break;
            }
            if count > counts[current].saturating_add(config.threshold) {
                break;
            }
            assigned[neighbor] = true;
            lo = lo.min(neighbor);
            hi = hi.max(neighbor);
            current = neighbor;
        }
        clusters.push(TokenCluster::signal(
            lo,
            hi,
            config.endianness,
            counts[seed],
        ));
    }

    let mut p = 0;
    while p < width {
        if assigned[p] {
            p += 1;
            continue;
        }
        let start = p;
        while p < width && !assigned[p] {
            p += 1;
        }
        clusters.push(TokenCluster::padding(start, p - 1));
    }

    clusters.sort_by_key(|c| c.lo);
    Tokenization {
        id: tang.arbitration_id(),
        bit_width: width,
        config: *config,
        clusters,
    }
}

/// Positions that never transitioned.
pub fn classify_padding(tang: &Tang) -> Vec<usize> {
    (0..tang.bit_width())
        .filter(|&i| tang.count(i) == 0)
        .collect()
}
