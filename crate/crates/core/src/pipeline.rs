//! Whole-capture composition: partition, TANG and tokenize every ID.

use std::collections::BTreeMap;

use crate::bitlab::{tang_for, Tang};
use crate::error::Result;
use crate::exec::{self, Execution};
use crate::frame::{partition_by_id, IdKey, IdTrace, Trace};
use crate::tokenizer::{tokenize, Tokenization, TokenizerConfig};

/// Everything computed for one (ID, DLC) group.
#[derive(Debug, Clone)]
pub struct IdAnalysis {
    pub trace: IdTrace,
    pub tang: Tang,
    pub tokenization: Tokenization,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SkipReason {
    TooFewFrames(usize),
    EmptyPayload,
}

#[derive(Debug, Clone, Default)]
pub struct TraceAnalysis {
    /// Ascending by (ID, DLC).
    pub analyses: Vec<IdAnalysis>,
    pub skipped: Vec<(IdKey, SkipReason)>,
    pub mixed_dlc: Vec<u32>,
}

/// Runs TANG + tokenization over every group, optionally restricted to `ids`.
pub fn analyze_trace(
    trace: &Trace,
    config: &TokenizerConfig,
    ids: Option<&[u32]>,
    exec: Execution,
) -> Result<TraceAnalysis> {
    let partition = partition_by_id(trace);
    let mut work = Vec::new();
    let mut skipped = Vec::new();
    for (key, group) in partition.groups {
        if ids.is_some_and(|ids| !ids.contains(&key.id)) {
            continue;
        }
        if group.len() < 2 {
            skipped.push((key, SkipReason::TooFewFrames(group.len())));
        } else if group.dlc() == 0 {
            skipped.push((key, SkipReason::EmptyPayload));
        } else {
            work.push(group);
        }
    }
    for (key, reason) in &skipped {
        log::warn!("skipping {key}: {reason:?}");
    }

    // groups run in parallel; each TANG is then computed sequentially
    let analyses = exec::map_slice(exec, &work, |group| -> Result<IdAnalysis> {
        let tang = tang_for(group, Execution::Sequential)?;
        let tokenization = tokenize(&tang, config);
        tokenization.validate(Some(&tang))?;
        Ok(IdAnalysis {
            trace: group.clone(),
            tang,
            tokenization,
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    Ok(TraceAnalysis {
        analyses,
        skipped,
        mixed_dlc: partition.mixed_dlc,
    })
}

/// One tokenization per (ID, DLC) group with at least two frames.
pub fn tokenize_trace(
    trace: &Trace,
    config: &TokenizerConfig,
) -> Result<BTreeMap<IdKey, Tokenization>> {
    Ok(analyze_trace(trace, config, None, Execution::default())?
        .analyses
        .into_iter()
        .map(|a| (a.trace.key(), a.tokenization))
        .collect())
}
