//! Reverse-engineering CAN payload layouts from traffic alone.
//!
//! The pipeline mirrors how an analyst approaches an undocumented bus:
//!
//! 1. [`frame`] parses candump / CSV captures and splits them per arbitration ID.
//! 2. [`bitlab`] expands payloads into a bit matrix, XORs sequential rows and
//!    sums the columns into a [`Tang`] (transition aggregation n-gram).
//! 3. [`tokenizer`] greedily clusters bit positions into continuous numerical
//!    signals, seeding at the most active bits and growing toward the MSB while
//!    the transition counts keep decreasing.
//! 4. [`signal`] turns each signal cluster back into an unsigned time series.
//! 5. [`synth`] builds traces with a known layout and scores tokenizations
//!    against it.
//!
//! Bit position `i` always means bit `7 - i % 8` of byte `i / 8`: position 0 is
//! the MSB of the first transmitted byte.

pub mod bitlab;
pub mod error;
pub mod exec;
pub mod frame;
pub mod pipeline;
pub mod signal;
pub mod synth;
pub mod tokenizer;

pub use bitlab::{BitMatrix, Tang, TransitionMatrix};
pub use error::{Error, ParseFailure, Result};
pub use exec::Execution;
pub use frame::{CanFrame, IdKey, IdTrace, Trace};
pub use pipeline::{analyze_trace, tokenize_trace, IdAnalysis, TraceAnalysis};
pub use signal::{SignalSeries, SignalSummary};
pub use synth::{GroundTruth, ScoreReport, SignalSpec};
pub use tokenizer::{
    ClusterKind, Endianness, PaddingMode, TokenCluster, Tokenization, TokenizerConfig,
};

/// Formats an arbitration ID the way every exported artifact spells it.
pub fn format_id(id: u32) -> String {
    format!("0x{id:03X}")
}

/// Parses `0x`-prefixed or bare hexadecimal arbitration IDs.
pub fn parse_id(text: &str) -> Option<u32> {
    let digits = text
        .strip_prefix("0x")
        .or_else(|| text.strip_prefix("0X"))
        .unwrap_or(text);
    if digits.is_empty() || digits.len() > 8 || !digits.bytes().all(|b| b.is_ascii_hexdigit()) {
        return None;
    }
    u32::from_str_radix(digits, 16).ok()
}

pub(crate) mod hexid {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(id: &u32, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&crate::format_id(*id))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u32, D::Error> {
        let text = String::deserialize(d)?;
        crate::parse_id(&text)
            .ok_or_else(|| de::Error::custom(format!("invalid arbitration id {text:?}")))
    }
}
