//! Hypotheses, beams and the k-best store of ended sequences.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::logprob::LogProb;
use crate::vocab::LabelId;

/// Ranking used everywhere two scored sequences are compared: higher score
/// first, then shorter, then lexicographically smaller label ids.
/// `Ordering::Less` means `a` ranks ahead of `b`.
pub fn rank_order(a_score: f64, a_labels: &[LabelId], b_score: f64, b_labels: &[LabelId]) -> Ordering {
    b_score
        .total_cmp(&a_score)
        .then_with(|| a_labels.len().cmp(&b_labels.len()))
        .then_with(|| a_labels.cmp(b_labels))
}

/// A partial sequence `a_1..a_N` without the end label.
///
/// `state` is the scorer state *before* consuming the last label; the search
/// feeds `labels.last()` to the scorer when it expands the hypothesis.
#[derive(Clone, Debug, PartialEq)]
pub struct Hypothesis<St> {
    pub labels: Vec<LabelId>,
    pub score: LogProb,
    pub state: St,
}

impl<St> Hypothesis<St> {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// The pruned set of same-length hypotheses at one step.
#[derive(Clone, Debug, PartialEq)]
pub struct Beam<St> {
    pub step: usize,
    pub entries: Vec<Hypothesis<St>>,
}

impl<St> Beam<St> {
    /// `B_0 = {a_0}`: one empty hypothesis with probability one.
    pub fn initial(state: St) -> Self {
        Beam {
            step: 0,
            entries: vec![Hypothesis {
                labels: Vec::new(),
                score: LogProb::ONE,
                state,
            }],
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// A terminated sequence (last label is the end label).
///
/// For the length-modelled search `final_score = p_b + p_not_end`. Heuristic
/// searches store the raw score as `p_b`, an empty non-ending product, and
/// their ranking score (normalised and/or rewarded) as `final_score`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EndedHypothesis {
    pub labels: Vec<LabelId>,
    pub raw_score: LogProb,
    pub p_b: LogProb,
    pub p_not_end: LogProb,
    #[serde(with = "crate::logprob::extended_f64")]
    pub final_score: f64,
}

impl EndedHypothesis {
    pub fn reinterpreted(labels: Vec<LabelId>, raw_score: LogProb, p_b: LogProb, p_not_end: LogProb) -> Self {
        EndedHypothesis {
            labels,
            raw_score,
            p_b,
            p_not_end,
            final_score: (p_b + p_not_end).0,
        }
    }

    pub fn ranked(labels: Vec<LabelId>, raw_score: LogProb, ranking_score: f64) -> Self {
        EndedHypothesis {
            labels,
            raw_score,
            p_b: raw_score,
            p_not_end: LogProb::ONE,
            final_score: ranking_score,
        }
    }

    /// Sequence length including the end label.
    pub fn length(&self) -> usize {
        self.labels.len()
    }

    /// Labels without the trailing end label.
    pub fn output(&self) -> &[LabelId] {
        &self.labels[..self.labels.len().saturating_sub(1)]
    }

    pub fn rank_cmp(&self, other: &Self) -> Ordering {
        rank_order(self.final_score, &self.labels, other.final_score, &other.labels)
    }
}

/// The best `capacity` ended hypotheses, sorted by [`rank_order`].
#[derive(Clone, Debug, PartialEq)]
pub struct KBestStore {
    capacity: usize,
    entries: Vec<EndedHypothesis>,
}

impl KBestStore {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Config("k-best capacity must be at least 1".into()));
        }
        Ok(KBestStore {
            capacity,
            entries: Vec::new(),
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn entries(&self) -> &[EndedHypothesis] {
        &self.entries
    }

    pub fn into_entries(self) -> Vec<EndedHypothesis> {
        self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn best(&self) -> Option<&EndedHypothesis> {
        self.entries.first()
    }

    /// Best final score, `-inf` when empty.
    pub fn best_final(&self) -> f64 {
        self.best().map_or(f64::NEG_INFINITY, |h| h.final_score)
    }

    /// Inserts in sorted position and drops the worst entry beyond capacity.
    /// Returns whether `hyp` was kept.
    pub fn insert(&mut self, hyp: EndedHypothesis) -> bool {
        let pos = self
            .entries
            .binary_search_by(|probe| probe.rank_cmp(&hyp))
            .unwrap_or_else(|p| p);
        if pos >= self.capacity {
            return false;
        }
        self.entries.insert(pos, hyp);
        self.entries.truncate(self.capacity);
        true
    }

    /// Removes the entry with exactly these labels, if present.
    pub fn remove(&mut self, labels: &[LabelId]) -> Option<EndedHypothesis> {
        let pos = self.entries.iter().position(|h| h.labels == labels)?;
        Some(self.entries.remove(pos))
    }
}

/// Value-style insert.
pub fn kbest_insert(mut store: KBestStore, hyp: EndedHypothesis) -> KBestStore {
    store.insert(hyp);
    store
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    EarlyStop,
    MaxLength,
    BeamExhausted,
}

impl StopReason {
    pub fn as_str(self) -> &'static str {
        match self {
            StopReason::EarlyStop => "early_stop",
            StopReason::MaxLength => "max_length",
            StopReason::BeamExhausted => "beam_exhausted",
        }
    }
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecodeResult {
    pub kbest: KBestStore,
    pub steps_taken: usize,
    pub stop_reason: StopReason,
}

impl DecodeResult {
    /// MAP decision over the k-best store.
    pub fn best(&self) -> Result<&EndedHypothesis> {
        map_decision(&self.kbest)
    }
}

/// MAP decision: the highest final score, ties broken by [`rank_order`].
pub fn map_decision(kbest: &KBestStore) -> Result<&EndedHypothesis> {
    kbest.best().ok_or(Error::NoEndedHypothesis)
}
