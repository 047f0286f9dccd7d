//! Independent oracles and property checks shared by the integration suites.
//!
//! Nothing here calls into the bit-matrix, transition or field code of the
//! library; bits are read with plain byte arithmetic.

#![allow(dead_code)]

use std::collections::BTreeSet;

use cantok::frame::IdTrace;
use cantok::signal::{extract_all, padding_constants, reconstruct_payloads};
use cantok::synth::{GroundTruth, SignalSpec};
use cantok::tokenizer::tokenize;
use cantok::{CanFrame, Endianness, ScoreReport, Tang, Tokenization, TokenizerConfig};
use proptest::prelude::*;

pub fn bit_of(payload: &[u8], position: usize) -> bool {
    (payload[position / 8] >> (7 - position % 8)) & 1 == 1
}

/// Compares frame k with k + 1 bit by bit.
pub fn naive_tang(payloads: &[Vec<u8>]) -> Vec<u64> {
    let width = payloads.first().map_or(0, |p| p.len() * 8);
    let mut counts = vec![0u64; width];
    for k in 0..payloads.len().saturating_sub(1) {
        for (i, c) in counts.iter_mut().enumerate() {
            if bit_of(&payloads[k], i) != bit_of(&payloads[k + 1], i) {
                *c += 1;
            }
        }
    }
    counts
}

pub fn id_trace(id: u32, payloads: &[Vec<u8>]) -> IdTrace {
    let dlc = payloads.first().map_or(0, Vec::len);
    let frames = payloads
        .iter()
        .enumerate()
        .map(|(k, p)| CanFrame::with_id(k as u64 * 10_000, id, p).unwrap())
        .collect();
    IdTrace::new(id, dlc, frames).unwrap()
}

/// Big-endian unsigned value of `[lo, hi]` by summing powers of two.
pub fn naive_field(payload: &[u8], lo: usize, hi: usize, endianness: Endianness) -> u64 {
    let mut v = 0u64;
    for p in lo..=hi {
        let rank = match endianness {
            Endianness::Big => hi - p,
            Endianness::Little => p - lo,
        };
        if bit_of(payload, p) {
            v += 1u64 << rank;
        }
    }
    v
}

/// Boundary and cluster metrics from per-position labels.
pub fn naive_score(tok: &Tokenization, gt: &GroundTruth) -> ScoreReport {
    let n = gt.bit_width;
    let mut tok_label = vec![usize::MAX; n];
    for (i, c) in tok.clusters.iter().enumerate() {
        tok_label[c.lo..=c.hi].fill(i);
    }
    // padding runs share a label; signals get index + 1
    let mut gt_label = vec![0usize; n];
    for (i, s) in gt.signals.iter().enumerate() {
        gt_label[s.lo..=s.hi].fill(i + 1);
    }
    let tok_cuts: BTreeSet<usize> = (1..n)
        .filter(|&c| tok_label[c - 1] != tok_label[c])
        .collect();
    let gt_cuts: BTreeSet<usize> = (1..n).filter(|&c| gt_label[c - 1] != gt_label[c]).collect();
    let both = tok_cuts.intersection(&gt_cuts).count();
    let ratio = |a: usize, b: usize| if b == 0 { 1.0 } else { a as f64 / b as f64 };

    let exact = gt
        .signals
        .iter()
        .filter(|s| {
            let l = tok_label[s.lo];
            tok.clusters[l].is_signal()
                && (s.lo..=s.hi).all(|p| tok_label[p] == l)
                && (0..n)
                    .filter(|&p| tok_label[p] == l)
                    .all(|p| p >= s.lo && p <= s.hi)
        })
        .count();
    let merged = (0..tok.clusters.len())
        .filter(|&l| {
            (0..n)
                .filter(|&p| tok_label[p] == l && gt_label[p] != 0)
                .map(|p| gt_label[p])
                .collect::<BTreeSet<_>>()
                .len()
                >= 2
        })
        .count();
    let split = gt
        .signals
        .iter()
        .filter(|s| {
            (s.lo..=s.hi)
                .map(|p| tok_label[p])
                .collect::<BTreeSet<_>>()
                .len()
                >= 2
        })
        .count();

    ScoreReport {
        id: gt.id,
        true_signals: gt.signals.len(),
        exact_cluster_matches: exact,
        boundary_precision: ratio(both, tok_cuts.len()),
        boundary_recall: ratio(both, gt_cuts.len()),
        merged,
        split,
    }
}

pub fn arb_config() -> impl Strategy<Value = TokenizerConfig> {
    (
        prop_oneof![Just(Endianness::Big), Just(Endianness::Little)],
        prop_oneof![3 => Just(0u64), 1 => 0u64..5],
        prop_oneof![
            Just(cantok::PaddingMode::Exclude),
            Just(cantok::PaddingMode::Strict)
        ],
    )
        .prop_map(|(endianness, threshold, padding_mode)| TokenizerConfig {
            endianness,
            threshold,
            padding_mode,
        })
}

/// TANGs with plenty of zeros and ties.
pub fn arb_tang() -> impl Strategy<Value = Tang> {
    (2usize..40, 1usize..=64).prop_flat_map(|(m, n)| {
        let max = (m - 1) as u64;
        prop::collection::vec(
            prop_oneof![2 => Just(0u64), 1 => Just(max), 5 => 0..=max],
            n,
        )
        .prop_map(move |counts| Tang::new(0x123, m, counts).unwrap())
    })
}

/// Payload sequences: 1..=8 bytes, 2..=64 frames, with slowly changing and constant bytes.
pub fn arb_payloads() -> impl Strategy<Value = Vec<Vec<u8>>> {
    (1usize..=8, 2usize..=64).prop_flat_map(|(dlc, m)| {
        let byte = prop_oneof![Just(0u8), Just(0xFFu8), 0u8..4, any::<u8>()];
        (
            prop::collection::vec(prop::collection::vec(byte, dlc), m),
            prop::collection::vec(any::<bool>(), dlc),
        )
            .prop_map(|(mut rows, frozen)| {
                // freeze some columns to create padding
                for (b, &f) in frozen.iter().enumerate() {
                    if f {
                        let v = rows[0][b];
                        rows.iter_mut().for_each(|r| r[b] = v);
                    }
                }
                rows
            })
    })
}

pub fn check_partition(tok: &Tokenization, tang: &Tang) -> Result<(), String> {
    let mut seen = vec![0u32; tang.bit_width()];
    for c in &tok.clusters {
        if c.lo > c.hi || c.hi >= seen.len() {
            return Err(format!("cluster [{}..{}] malformed", c.lo, c.hi));
        }
        seen[c.lo..=c.hi].iter_mut().for_each(|s| *s += 1);
    }
    if let Some(p) = seen.iter().position(|&s| s != 1) {
        return Err(format!("position {p} covered {} times", seen[p]));
    }
    Ok(())
}

pub fn check_gradient(tok: &Tokenization, tang: &Tang) -> Result<(), String> {
    for c in tok.signals() {
        let (lsb, msb) = (c.lsb.unwrap(), c.msb.unwrap());
        let walk: Vec<usize> = if lsb >= msb {
            (msb..=lsb).rev().collect()
        } else {
            (lsb..=msb).collect()
        };
        if walk.len() != c.hi - c.lo + 1 {
            return Err(format!("lsb/msb do not span [{}..{}]", c.lo, c.hi));
        }
        for w in walk.windows(2) {
            if tang.count(w[1]) > tang.count(w[0]) {
                return Err(format!(
                    "count rises from {} to {} inside [{}..{}]",
                    w[0], w[1], c.lo, c.hi
                ));
            }
        }
    }
    Ok(())
}

pub fn check_padding_purity(tok: &Tokenization, tang: &Tang, exclude: bool) -> Result<(), String> {
    for c in &tok.clusters {
        let zeros = (c.lo..=c.hi).filter(|&p| tang.count(p) == 0).count();
        if c.is_signal() && exclude && zeros > 0 {
            return Err(format!(
                "signal [{}..{}] holds a zero-count bit",
                c.lo, c.hi
            ));
        }
        if !c.is_signal() && zeros != c.hi - c.lo + 1 {
            return Err(format!(
                "padding [{}..{}] holds a transitioning bit",
                c.lo, c.hi
            ));
        }
    }
    Ok(())
}

pub fn check_mirror(tang: &Tang, config: &TokenizerConfig) -> Result<(), String> {
    let n = tang.bit_width();
    let forward = tokenize(tang, config);
    let flipped = TokenizerConfig {
        endianness: config.endianness.opposite(),
        ..*config
    };
    let backward = tokenize(&tang.reversed(), &flipped);
    let mut mirrored: Vec<_> = forward.clusters.iter().map(|c| c.mirrored(n)).collect();
    mirrored.sort_by_key(|c| c.lo);
    if mirrored != backward.clusters {
        return Err(format!("{:?} vs {:?}", mirrored, backward.clusters));
    }
    Ok(())
}

pub fn check_seed(tok: &Tokenization, tang: &Tang) -> Result<(), String> {
    let max = tang.max_count();
    if max == 0 {
        return Ok(());
    }
    if tok
        .signals()
        .any(|c| c.lsb.map(|l| tang.count(l)) == Some(max))
    {
        Ok(())
    } else {
        Err("global maximum is not any cluster's LSB".into())
    }
}

pub fn check_tang_oracle(payloads: &[Vec<u8>]) -> Result<(), String> {
    let t = id_trace(0x42, payloads);
    let expect = naive_tang(payloads);
    let fused =
        cantok::bitlab::tang_for(&t, cantok::Execution::Parallel).map_err(|e| e.to_string())?;
    let bm = cantok::bitlab::build_bit_matrix(&t).map_err(|e| e.to_string())?;
    let tm = cantok::bitlab::transition_matrix(&bm).map_err(|e| e.to_string())?;
    let matrix = cantok::bitlab::compute_tang(&tm, 0x42);
    if fused.counts() != expect.as_slice() || matrix.counts() != expect.as_slice() {
        return Err(format!(
            "{:?} / {:?} vs oracle {expect:?}",
            fused.counts(),
            matrix.counts()
        ));
    }
    let limit = payloads.len() as u64 - 1;
    if expect.iter().any(|&c| c > limit) {
        return Err("count exceeds M - 1".into());
    }
    Ok(())
}

pub fn check_reconstruction(payloads: &[Vec<u8>], config: &TokenizerConfig) -> Result<(), String> {
    let t = id_trace(0x77, payloads);
    let tang =
        cantok::bitlab::tang_for(&t, cantok::Execution::Sequential).map_err(|e| e.to_string())?;
    let tok = tokenize(&tang, config);
    let series = extract_all(&t, &tok).map_err(|e| e.to_string())?;
    for s in &series {
        if s.width() < 64 && s.values.iter().any(|&v| v >> s.width() != 0) {
            return Err(format!("value exceeds 2^{}", s.width()));
        }
    }
    let pad = padding_constants(&t, &tok).map_err(|e| e.to_string())?;
    let rebuilt =
        reconstruct_payloads(t.dlc(), t.len(), &series, &pad).map_err(|e| e.to_string())?;
    if rebuilt != payloads {
        return Err("repacked payloads differ from the originals".into());
    }
    Ok(())
}

/// Layout for the counter recovery instances: 2-4 big-endian step-1 counters
/// of width 4..=12 in 64 bits, each pair separated by at least one padding bit.
pub fn recovery_instance(seed: u64) -> GroundTruth {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let k = rng.random_range(2..=4usize);
    let widths: Vec<usize> = (0..k).map(|_| rng.random_range(4..=12usize)).collect();
    let used: usize = widths.iter().sum::<usize>() + (k - 1);
    let mut slack = 64 - used;
    let mut gaps = vec![0usize; k + 1];
    for g in gaps.iter_mut() {
        let take = rng.random_range(0..=slack);
        *g += take;
        slack -= take;
    }
    gaps[k] += slack;
    let mut signals = Vec::new();
    let mut pos = gaps[0];
    for (i, &w) in widths.iter().enumerate() {
        signals.push(SignalSpec::counter(pos, pos + w - 1, 1));
        pos += w + 1 + gaps[i + 1];
    }
    let max_w = *widths.iter().max().unwrap();
    GroundTruth {
        id: 0x100 + seed as u32,
        bit_width: 64,
        frames: 2 << max_w,
        seed,
        signals,
        padding_ones: false,
    }
}
