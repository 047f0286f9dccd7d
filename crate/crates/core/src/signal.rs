//! Unsigned time series for tokenized signals.

use std::collections::HashSet;
use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::frame::IdTrace;
use crate::tokenizer::{Endianness, TokenCluster, Tokenization};

/// One signal's unsigned value per observed payload.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalSeries {
    pub arbitration_id: u32,
    pub cluster: TokenCluster,
    pub endianness: Endianness,
    pub values: Vec<u64>,
    pub timestamps: Vec<f64>,
}

impl SignalSeries {
    pub fn width(&self) -> usize {
        self.cluster.width()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Reads `[lo, hi]` out of a left-aligned payload word as an unsigned value.
#[inline]
pub fn read_field(word: u64, lo: usize, hi: usize, endianness: Endianness) -> u64 {
    let width = hi - lo + 1;
    let raw = (word << lo) >> (64 - width);
    match endianness {
        Endianness::Big => raw,
        Endianness::Little => raw.reverse_bits() >> (64 - width),
    }
}

/// Inverse of [`read_field`]: places `value` into `[lo, hi]` of a left-aligned word.
#[inline]
pub fn write_field(word: u64, lo: usize, hi: usize, endianness: Endianness, value: u64) -> u64 {
    let width = hi - lo + 1;
    let value = match endianness {
        Endianness::Big => value,
        Endianness::Little => value.reverse_bits() >> (64 - width),
    };
    let mask = (u64::MAX >> (64 - width)) << (64 - width - lo);
    (word & !mask) | ((value << (64 - width - lo)) & mask)
}

fn check_range(cluster: &TokenCluster, width: usize) -> Result<()> {
    if cluster.lo > cluster.hi || cluster.hi >= width {
        return Err(Error::ClusterOutOfRange {
            lo: cluster.lo,
            hi: cluster.hi,
            width,
        });
    }
    Ok(())
}

/// Unsigned interpretation of `cluster` in every frame, LSB per `endianness`.
pub fn extract_series(
    trace: &IdTrace,
    cluster: &TokenCluster,
    endianness: Endianness,
) -> Result<SignalSeries> {
    if !cluster.is_signal() {
        return Err(Error::PaddingExtraction);
    }
    check_range(cluster, trace.bit_width())?;
    let frames = trace.frames();
    Ok(SignalSeries {
        arbitration_id: trace.arbitration_id(),
        cluster: *cluster,
        endianness,
        values: frames
            .iter()
            .map(|f| read_field(f.bits(), cluster.lo, cluster.hi, endianness))
            .collect(),
        timestamps: frames.iter().map(|f| f.timestamp()).collect(),
    })
}

/// Every signal cluster of `tok`, in position order.
pub fn extract_all(trace: &IdTrace, tok: &Tokenization) -> Result<Vec<SignalSeries>> {
    tok.signals()
        .map(|c| extract_series(trace, c, tok.config.endianness))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SignalSummary {
    pub min: u64,
    pub max: u64,
    pub unique_values: usize,
    /// Adjacent pairs with differing values.
    pub value_transitions: usize,
    pub mean_abs_diff: f64,
}

pub fn summarize(series: &SignalSeries) -> Result<SignalSummary> {
    summarize_values(&series.values)
}

pub fn summarize_values(values: &[u64]) -> Result<SignalSummary> {
    let (&first, _) = values.split_first().ok_or(Error::EmptySeries)?;
    let (mut min, mut max) = (first, first);
    let mut unique = HashSet::new();
    for &v in values {
        min = min.min(v);
        max = max.max(v);
        unique.insert(v);
    }
    let mut transitions = 0usize;
    let mut total_diff = 0u128;
    for w in values.windows(2) {
        let d = w[0].abs_diff(w[1]);
        transitions += (d != 0) as usize;
        total_diff += d as u128;
    }
    let mean_abs_diff = if values.len() < 2 {
        0.0
    } else {
        total_diff as f64 / (values.len() - 1) as f64
    };
    Ok(SignalSummary {
        min,
        max,
        unique_values: unique.len(),
        value_transitions: transitions,
        mean_abs_diff,
    })
}

/// Writes `index,timestamp,value` rows.
pub fn export_series_csv<W: Write>(series: &SignalSeries, mut w: W) -> Result<()> {
    writeln!(w, "index,timestamp,value")?;
    for (k, (ts, v)) in series.timestamps.iter().zip(&series.values).enumerate() {
        writeln!(w, "{k},{ts:.6},{v}")?;
    }
    Ok(())
}

/// Constant value of each padding position, taken from the first frame.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PaddingConstants {
    pub bits: Vec<(usize, bool)>,
}

pub fn padding_constants(trace: &IdTrace, tok: &Tokenization) -> Result<PaddingConstants> {
    let first = trace.frames().first().ok_or(Error::NoObservations)?.bits();
    let mut bits = Vec::new();
    for c in tok.padding() {
        check_range(c, trace.bit_width())?;
        bits.extend(c.positions().map(|p| (p, first & (1u64 << (63 - p)) != 0)));
    }
    Ok(PaddingConstants { bits })
}

/// Repacks series values and padding constants into left-aligned payload words.
pub fn reconstruct_words(
    bit_width: usize,
    frames: usize,
    series: &[SignalSeries],
    padding: &PaddingConstants,
) -> Result<Vec<u64>> {
    if series.iter().any(|s| s.len() != frames) {
        return Err(Error::Invariant(format!(
            "series length differs from {frames} frames"
        )));
    }
    let mut pad_word = 0u64;
    for &(p, bit) in &padding.bits {
        if p >= bit_width {
            return Err(Error::ClusterOutOfRange {
                lo: p,
                hi: p,
                width: bit_width,
            });
        }
        if bit {
            pad_word |= 1u64 << (63 - p);
        }
    }
    let mut words = vec![pad_word; frames];
    for s in series {
        check_range(&s.cluster, bit_width)?;
        for (w, &v) in words.iter_mut().zip(&s.values) {
            *w = write_field(*w, s.cluster.lo, s.cluster.hi, s.endianness, v);
        }
    }
    Ok(words)
}

/// [`reconstruct_words`] as `dlc`-byte payloads.
pub fn reconstruct_payloads(
    dlc: usize,
    frames: usize,
    series: &[SignalSeries],
    padding: &PaddingConstants,
) -> Result<Vec<Vec<u8>>> {
    Ok(reconstruct_words(8 * dlc, frames, series, padding)?
        .into_iter()
        .map(|w| w.to_be_bytes()[..dlc].to_vec())
        .collect())
}
