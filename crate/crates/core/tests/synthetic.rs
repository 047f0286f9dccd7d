mod common;

use cantok::signal::extract_series;
use cantok::synth::{generate_trace, score_tokenization, Generator, GroundTruth, SignalSpec};
use cantok::{tokenize_trace, Endianness, TokenCluster, TokenizerConfig};
use common::*;

fn only_tokenization(gt: &GroundTruth) -> cantok::Tokenization {
    let trace = generate_trace(gt).unwrap();
    let map = tokenize_trace(&trace, &TokenizerConfig::default()).unwrap();
    assert_eq!(map.len(), 1);
    map.into_values().next().unwrap()
}

#[test]
fn two_counters_follow_closed_form() {
    let gt = GroundTruth {
        id: 0x200,
        bit_width: 16,
        frames: 256,
        seed: 1,
        signals: vec![SignalSpec::counter(0, 7, 1), SignalSpec::counter(8, 15, 3)],
        padding_ones: false,
    };
    let trace = generate_trace(&gt).unwrap();
    let group = cantok::frame::partition_by_id(&trace)
        .groups
        .into_values()
        .next()
        .unwrap();
    for (spec, step) in gt.signals.iter().zip([1u64, 3]) {
        let cluster = TokenCluster::signal(spec.lo, spec.hi, Endianness::Big, 0);
        let got = extract_series(&group, &cluster, Endianness::Big)
            .unwrap()
            .values;
        let want: Vec<u64> = (0..256u64).map(|k| (k * step) % 256).collect();
        assert_eq!(got, want);
    }
}

#[test]
fn extraction_returns_generating_sequences() {
    let gt = GroundTruth {
        id: 0x321,
        bit_width: 40,
        frames: 500,
        seed: 9,
        signals: vec![
            SignalSpec::new(
                0,
                11,
                Generator::Counter {
                    step: 5,
                    start: 100,
                },
                Endianness::Big,
            ),
            SignalSpec::new(
                14,
                21,
                Generator::Constant { value: 0x5A },
                Endianness::Little,
            ),
            SignalSpec::new(
                24,
                39,
                Generator::RandomWalk {
                    step: 50,
                    start: None,
                },
                Endianness::Little,
            ),
        ],
        padding_ones: true,
    };
    let values = gt.generate_values().unwrap();
    let trace = generate_trace(&gt).unwrap();
    let group = cantok::frame::partition_by_id(&trace)
        .groups
        .into_values()
        .next()
        .unwrap();
    for (spec, want) in gt.signals.iter().zip(&values) {
        let cluster = TokenCluster::signal(spec.lo, spec.hi, spec.endianness, 0);
        let got = extract_series(&group, &cluster, spec.endianness)
            .unwrap()
            .values;
        assert_eq!(&got, want);
    }
    assert_eq!(values[0][3], 115);
}

#[test]
fn recovery_of_padded_counters() {
    for seed in 0..10 {
        let gt = recovery_instance(seed);
        let tok = only_tokenization(&gt);
        let report = score_tokenization(&tok, &gt).unwrap();
        assert_eq!(
            report.exact_cluster_matches,
            gt.signals.len(),
            "seed {seed}: {tok:?}"
        );
        assert_eq!(
            (report.boundary_precision, report.boundary_recall),
            (1.0, 1.0)
        );
    }
}

#[test]
fn score_agrees_with_set_comparison_oracle() {
    // noisy and mixed layouts so the tokenizer gets things wrong
    for seed in 0..40u64 {
        let gends = [
            Generator::Noise,
            Generator::Ramp { step: 3 },
            Generator::RandomWalk {
                step: 4,
                start: None,
            },
            Generator::Counter { step: 1, start: 0 },
        ];
        let mut signals = Vec::new();
        let mut pos = (seed % 3) as usize;
        let mut i = seed as usize;
        while pos + 6 < 64 {
            let w = 3 + (i * 7 + seed as usize) % 9;
            let hi = (pos + w - 1).min(63);
            signals.push(SignalSpec::new(
                pos,
                hi,
                gends[i % gends.len()],
                Endianness::Big,
            ));
            pos = hi + 1 + (i % 2);
            i += 1;
        }
        let gt = GroundTruth {
            id: 0x400,
            bit_width: 64,
            frames: 300,
            seed,
            signals,
            padding_ones: seed % 2 == 0,
        };
        let tok = only_tokenization(&gt);
        let got = score_tokenization(&tok, &gt).unwrap();
        assert_eq!(got, naive_score(&tok, &gt), "seed {seed}");
    }
}

#[test]
fn noise_is_not_recovered_as_one_signal() {
    let gt = GroundTruth {
        id: 0x500,
        bit_width: 16,
        frames: 2000,
        seed: 3,
        signals: vec![SignalSpec::new(0, 15, Generator::Noise, Endianness::Big)],
        padding_ones: false,
    };
    let tok = only_tokenization(&gt);
    let report = score_tokenization(&tok, &gt).unwrap();
    assert_eq!(report.exact_cluster_matches, 0);
    assert_eq!(report.split, 1);
}
