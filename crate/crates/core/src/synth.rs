//! Synthetic traces with a known layout, and scoring against that layout.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bitlab::MAX_WIDTH;
use crate::error::{Error, Result};
use crate::frame::{CanFrame, Trace, MAX_STANDARD_ID};
use crate::signal::write_field;
use crate::tokenizer::{Endianness, Tokenization};

/// Frame period of generated traces.
pub const FRAME_PERIOD_US: u64 = 10_000;

/// How a signal's value evolves from frame to frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Generator {
    /// `start + k * step`, wrapping at the field width.
    Counter {
        #[serde(default = "one")]
        step: u64,
        #[serde(default)]
        start: u64,
    },
    /// Straight segments toward random targets, moving at most `step` per frame.
    Ramp {
        step: u64,
    },
    /// Uniform step in `[-step, step]`, clamped to the field range.
    RandomWalk {
        step: u64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        start: Option<u64>,
    },
    Constant {
        value: u64,
    },
    /// Uniformly random field value every frame.
    Noise,
}

fn one() -> u64 {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignalSpec {
    pub lo: usize,
    pub hi: usize,
    #[serde(flatten)]
    pub generator: Generator,
    #[serde(default)]
    pub endianness: Endianness,
}

impl SignalSpec {
    pub fn new(lo: usize, hi: usize, generator: Generator, endianness: Endianness) -> Self {
        SignalSpec {
            lo,
            hi,
            generator,
            endianness,
        }
    }

    pub fn counter(lo: usize, hi: usize, step: u64) -> Self {
        Self::new(
            lo,
            hi,
            Generator::Counter { step, start: 0 },
            Endianness::Big,
        )
    }

    pub fn width(&self) -> usize {
        self.hi - self.lo + 1
    }

    fn max_value(&self) -> u64 {
        u64::MAX >> (64 - self.width())
    }
}

/// Layout of one synthetic arbitration ID.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    #[serde(with = "crate::hexid")]
    pub id: u32,
    pub bit_width: usize,
    pub frames: usize,
    #[serde(default)]
    pub seed: u64,
    pub signals: Vec<SignalSpec>,
    /// Fill uncovered bits with 1 instead of 0.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub padding_ones: bool,
}

/// A contiguous piece of the ground-truth layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Segment {
    pub lo: usize,
    pub hi: usize,
    /// Index into `signals`, or `None` for a padding run.
    pub signal: Option<usize>,
}

impl GroundTruth {
    pub fn validate(&self) -> Result<()> {
        if self.bit_width == 0 || self.bit_width > MAX_WIDTH || !self.bit_width.is_multiple_of(8) {
            return Err(Error::GroundTruth(format!(
                "bit_width {} must be a multiple of 8 in 8..=64",
                self.bit_width
            )));
        }
        if self.id > crate::frame::MAX_EXTENDED_ID {
            return Err(Error::GroundTruth(format!(
                "id 0x{:X} out of range",
                self.id
            )));
        }
        let mut owner = vec![None; self.bit_width];
        for (i, s) in self.signals.iter().enumerate() {
            if s.lo > s.hi || s.hi >= self.bit_width {
                return Err(Error::GroundTruth(format!(
                    "signal {i} [{}..{}] out of range for {} bits",
                    s.lo, s.hi, self.bit_width
                )));
            }
            for (p, slot) in owner.iter_mut().enumerate().take(s.hi + 1).skip(s.lo) {
                if let Some(j) = slot.replace(i) {
                    return Err(Error::GroundTruth(format!(
                        "signals {j} and {i} overlap at bit {p}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn dlc(&self) -> usize {
        self.bit_width / 8
    }

    /// Signals and maximal padding runs in position order.
    pub fn segments(&self) -> Vec<Segment> {
        let mut owner = vec![None; self.bit_width];
        for (i, s) in self.signals.iter().enumerate() {
            for o in &mut owner[s.lo..=s.hi.min(self.bit_width.saturating_sub(1))] {
                *o = Some(i);
            }
        }
        let mut out = Vec::new();
        let mut p = 0;
        while p < self.bit_width {
            let start = p;
            let who = owner[p];
            while p < self.bit_width && owner[p] == who {
                p += 1;
            }
            out.push(Segment {
                lo: start,
                hi: p - 1,
                signal: who,
            });
        }
        out
    }

    /// Per-signal value sequences, `values[signal][frame]`.
    pub fn generate_values(&self) -> Result<Vec<Vec<u64>>> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut states: Vec<GenState> = self
            .signals
            .iter()
            .map(|s| GenState::new(s, &mut rng))
            .collect();
        let mut values: Vec<Vec<u64>> = self
            .signals
            .iter()
            .map(|_| Vec::with_capacity(self.frames))
            .collect();
        for _ in 0..self.frames {
            for ((spec, state), out) in self.signals.iter().zip(&mut states).zip(&mut values) {
                out.push(state.next(spec, &mut rng));
            }
        }
        Ok(values)
    }
}

struct GenState {
    value: u64,
    target: u64,
    rate: u64,
    started: bool,
}

impl GenState {
    fn new(spec: &SignalSpec, rng: &mut ChaCha8Rng) -> Self {
        let max = spec.max_value();
        let value = match spec.generator {
            Generator::Counter { start, .. } => start & max,
            Generator::RandomWalk { start, .. } => start.map_or(max / 2 + 1, |s| s.min(max)),
            Generator::Ramp { .. } => rng.random_range(0..=max),
            Generator::Constant { value } => value & max,
            Generator::Noise => 0,
        };
        GenState {
            value,
            target: value,
            rate: 0,
            started: false,
        }
    }

    fn next(&mut self, spec: &SignalSpec, rng: &mut ChaCha8Rng) -> u64 {
        let max = spec.max_value();
        if !self.started {
            self.started = true;
            if let Generator::Noise = spec.generator {
                self.value = rng.random_range(0..=max);
            }
            return self.value;
        }
        self.value = match spec.generator {
            Generator::Counter { step, .. } => self.value.wrapping_add(step) & max,
            Generator::Constant { .. } => self.value,
            Generator::Noise => rng.random_range(0..=max),
            Generator::RandomWalk { step, .. } => {
                let delta = rng.random_range(0..=step.saturating_mul(2)) as i128 - step as i128;
                (self.value as i128 + delta).clamp(0, max as i128) as u64
            }
            Generator::Ramp { step } => {
                if self.value == self.target {
                    self.target = rng.random_range(0..=max);
                    self.rate = rng.random_range(1..=step.max(1));
                }
                if self.target > self.value {
                    self.value + self.rate.min(self.target - self.value)
                } else {
                    self.value - self.rate.min(self.value - self.target)
                }
            }
        };
        self.value
    }
}

/// Packs every signal's value into each frame; deterministic in the seed.
pub fn generate_trace(gt: &GroundTruth) -> Result<Trace> {
    let frames = generate_frames(gt)?;
    Ok(Trace::new(
        frames,
        format!("synthetic {} seed {}", crate::format_id(gt.id), gt.seed),
    ))
}

fn generate_frames(gt: &GroundTruth) -> Result<Vec<CanFrame>> {
    let values = gt.generate_values()?;
    let base = if gt.padding_ones {
        u64::MAX << (64 - gt.bit_width)
    } else {
        0
    };
    let dlc = gt.dlc();
    let extended = gt.id > MAX_STANDARD_ID;
    (0..gt.frames)
        .map(|k| {
            let word = gt.signals.iter().zip(&values).fold(base, |w, (s, v)| {
                write_field(w, s.lo, s.hi, s.endianness, v[k])
            });
            CanFrame::new(
                k as u64 * FRAME_PERIOD_US,
                gt.id,
                extended,
                &word.to_be_bytes()[..dlc],
            )
        })
        .collect()
}

/// Generates every ground truth and merges them by timestamp.
///
/// Each ID is phase-shifted by its index in microseconds so timestamps stay
/// distinct within a period.
pub fn generate_interleaved(gts: &[GroundTruth]) -> Result<Trace> {
    let per_id: Vec<Vec<CanFrame>> = gts.iter().map(generate_frames).collect::<Result<_>>()?;
    let total = per_id.iter().map(Vec::len).sum();
    let mut frames = Vec::with_capacity(total);
    let longest = per_id.iter().map(Vec::len).max().unwrap_or(0);
    for k in 0..longest {
        for (i, fs) in per_id.iter().enumerate() {
            if let Some(f) = fs.get(k) {
                let shifted = CanFrame::new(
                    f.timestamp_us() + i as u64,
                    f.arbitration_id(),
                    f.is_extended(),
                    f.payload(),
                )?;
                frames.push(shifted);
            }
        }
    }
    Ok(Trace::new(
        frames,
        format!("synthetic interleave of {} ids", gts.len()),
    ))
}

/// Accepts either one ground-truth object or an array of them.
pub fn parse_ground_truths(json: &str) -> Result<Vec<GroundTruth>> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany {
        Many(Vec<GroundTruth>),
        One(GroundTruth),
    }
    let gts = match serde_json::from_str(json)? {
        OneOrMany::Many(v) => v,
        OneOrMany::One(g) => vec![g],
    };
    for gt in &gts {
        gt.validate()?;
    }
    Ok(gts)
}

pub fn load_ground_truths(path: &Path) -> Result<Vec<GroundTruth>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_ground_truths(&text)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    #[serde(with = "crate::hexid")]
    pub id: u32,
    pub true_signals: usize,
    pub exact_cluster_matches: usize,
    pub boundary_precision: f64,
    pub boundary_recall: f64,
    /// Tokenized clusters that span two or more true signals.
    pub merged: usize,
    /// True signals cut by two or more tokenized clusters.
    pub split: usize,
}

/// Cut points: `c` means a boundary between positions `c - 1` and `c`.
fn cuts(starts: impl Iterator<Item = usize>) -> BTreeSet<usize> {
    starts.filter(|&lo| lo > 0).collect()
}

fn fraction(num: usize, den: usize) -> f64 {
    if den == 0 {
        1.0
    } else {
        num as f64 / den as f64
    }
}

fn overlaps(a: (usize, usize), b: (usize, usize)) -> bool {
    a.0 <= b.1 && b.0 <= a.1
}

/// Compares a tokenization's boundaries and clusters with the truth.
pub fn score_tokenization(tok: &Tokenization, gt: &GroundTruth) -> Result<ScoreReport> {
    if tok.bit_width != gt.bit_width {
        return Err(Error::WidthMismatch {
            tokenization: tok.bit_width,
            truth: gt.bit_width,
        });
    }
    let predicted = cuts(tok.clusters.iter().map(|c| c.lo));
    let truth = cuts(gt.segments().iter().map(|s| s.lo));
    let hits = predicted.intersection(&truth).count();

    let exact = gt
        .signals
        .iter()
        .filter(|s| tok.signals().any(|c| c.lo == s.lo && c.hi == s.hi))
        .count();
    let merged = tok
        .clusters
        .iter()
        .filter(|c| {
            gt.signals
                .iter()
                .filter(|s| overlaps((c.lo, c.hi), (s.lo, s.hi)))
                .count()
                >= 2
        })
        .count();
    let split = gt
        .signals
        .iter()
        .filter(|s| {
            tok.clusters
                .iter()
                .filter(|c| overlaps((c.lo, c.hi), (s.lo, s.hi)))
                .count()
                >= 2
        })
        .count();

    Ok(ScoreReport {
        id: gt.id,
        true_signals: gt.signals.len(),
        exact_cluster_matches: exact,
        boundary_precision: fraction(hits, predicted.len()),
        boundary_recall: fraction(hits, truth.len()),
        merged,
        split,
    })
}
