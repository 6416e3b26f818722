//! Beam search regimes and the pieces they share.

mod proposed;
mod simple;

pub use proposed::{proposed_beam_search, proposed_beam_search_with, ProposedOptions, StepRecord};
pub use simple::simple_beam_search;

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hyp::{Beam, EndedHypothesis, Hypothesis, KBestStore};
use crate::logprob::{log_sum_exp, log_sum_exp_or_zero, LogProb};
use crate::scorer::Scorer;
use crate::vocab::LabelId;

/// A common score-threshold setting (log domain).
pub const DEFAULT_SCORE_THRESHOLD: f64 = 8.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PruneConfig {
    pub beam_size: usize,
    /// Drop hypotheses scoring below `best - threshold`.
    pub score_threshold: Option<f64>,
}

impl PruneConfig {
    pub fn new(beam_size: usize, score_threshold: Option<f64>) -> Result<Self> {
        let cfg = PruneConfig {
            beam_size,
            score_threshold,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn beam(beam_size: usize) -> Result<Self> {
        PruneConfig::new(beam_size, None)
    }

    /// No pruning at all.
    pub fn unlimited() -> Self {
        PruneConfig {
            beam_size: usize::MAX,
            score_threshold: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.beam_size == 0 {
            return Err(Error::Config("beam size must be at least 1".into()));
        }
        if let Some(t) = self.score_threshold {
            if t.is_nan() || t <= 0.0 {
                return Err(Error::Config(format!("score threshold must be positive, got {t}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct HeuristicConfig {
    pub length_normalize: bool,
    pub eos_threshold_factor: Option<f64>,
    pub length_reward: Option<f64>,
}

impl HeuristicConfig {
    pub fn none() -> Self {
        HeuristicConfig::default()
    }

    pub fn is_none(&self) -> bool {
        !self.length_normalize && self.eos_threshold_factor.is_none() && self.length_reward.is_none()
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(f) = self.eos_threshold_factor {
            if !(f > 0.0 && f.is_finite()) {
                return Err(Error::Config(format!("EOS threshold factor must be positive, got {f}")));
            }
        }
        if let Some(g) = self.length_reward {
            if !g.is_finite() {
                return Err(Error::Config(format!("length reward must be finite, got {g}")));
            }
        }
        Ok(())
    }

    /// Raw score plus the length reward.
    pub fn rewarded(&self, raw: LogProb, length: usize) -> f64 {
        raw.0 + self.length_reward.unwrap_or(0.0) * length as f64
    }

    /// Score used to rank hypotheses of different lengths.
    pub fn ranking_score(&self, raw: LogProb, length: usize) -> f64 {
        let s = self.rewarded(raw, length);
        if self.length_normalize && length > 0 {
            s / length as f64
        } else {
            s
        }
    }
}

/// Running state of the proposed search.
#[derive(Clone, Debug)]
pub struct SearchState<St> {
    pub beam: Beam<St>,
    /// Log of the product of non-ending probabilities so far; starts at 0
    /// and never increases.
    pub p_not_end_acc: LogProb,
    pub kbest: KBestStore,
    pub steps: usize,
}

impl<St> SearchState<St> {
    pub fn new(initial_state: St, k: usize) -> Result<Self> {
        Ok(SearchState {
            beam: Beam::initial(initial_state),
            p_not_end_acc: LogProb::ONE,
            kbest: KBestStore::new(k)?,
            steps: 0,
        })
    }

    /// Multiplies in one step's non-ending probability. Rounding can put a
    /// ratio a hair above 1; it is clamped so the product never grows.
    pub fn multiply_not_end(&mut self, factor: LogProb) {
        self.p_not_end_acc += LogProb(factor.0.min(0.0));
    }
}

/// One extension `parent ++ [label]` of a beam entry.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Candidate {
    pub parent: usize,
    pub label: LabelId,
    pub score: LogProb,
}

/// All extensions of a beam plus each parent's advanced scorer state.
#[derive(Clone, Debug)]
pub struct Expansion<St> {
    pub candidates: Vec<Candidate>,
    pub states: Vec<St>,
}

pub fn expand<S: Scorer>(beam: &Beam<S::State>, scorer: &S) -> Expansion<S::State> {
    let v = scorer.vocab().len();
    let mut candidates = Vec::with_capacity(beam.len() * v);
    let mut states = Vec::with_capacity(beam.len());
    let mut dist = Vec::with_capacity(v);
    for (parent, h) in beam.entries.iter().enumerate() {
        let next = scorer.step(&h.state, h.labels.last().copied(), &mut dist);
        candidates.extend(dist.iter().enumerate().map(|(label, &lp)| Candidate {
            parent,
            label,
            score: h.score + lp,
        }));
        states.push(next);
    }
    Expansion { candidates, states }
}

pub fn candidate_labels<St>(beam: &Beam<St>, c: &Candidate) -> Vec<LabelId> {
    let parent = &beam.entries[c.parent].labels;
    let mut labels = Vec::with_capacity(parent.len() + 1);
    labels.extend_from_slice(parent);
    labels.push(c.label);
    labels
}

/// [`crate::hyp::rank_order`] for candidates of one expansion (all the same length).
pub fn candidate_cmp<St>(beam: &Beam<St>, a: &Candidate, b: &Candidate) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| beam.entries[a.parent].labels.cmp(&beam.entries[b.parent].labels))
        .then_with(|| a.label.cmp(&b.label))
}

/// Threshold pruning, then beam-size pruning, over every candidate including
/// end-label extensions. Zero-probability candidates are always dropped.
/// Survivors come back best first.
pub fn prune_beam<St>(beam: &Beam<St>, mut candidates: Vec<Candidate>, cfg: &PruneConfig) -> Vec<Candidate> {
    candidates.retain(|c| c.score.0 > f64::NEG_INFINITY);
    if let (Some(t), Some(best)) = (
        cfg.score_threshold,
        candidates.iter().map(|c| c.score).max_by(LogProb::total_cmp),
    ) {
        candidates.retain(|c| c.score.0 >= best.0 - t);
    }
    select_top(&mut candidates, cfg.beam_size, |a, b| candidate_cmp(beam, a, b));
    candidates
}

/// Keeps the `k` smallest items under `cmp`, sorted.
pub(crate) fn select_top<T>(items: &mut Vec<T>, k: usize, cmp: impl Fn(&T, &T) -> Ordering) {
    if items.len() > k {
        items.select_nth_unstable_by(k - 1, &cmp);
        items.truncate(k);
    }
    items.sort_unstable_by(cmp);
}

/// Next beam from the surviving non-end candidates, in survivor order.
pub fn materialize<St: Clone>(beam: &Beam<St>, survivors: &[Candidate], states: &[St]) -> Beam<St> {
    Beam {
        step: beam.step + 1,
        entries: survivors
            .iter()
            .map(|c| Hypothesis {
                labels: candidate_labels(beam, c),
                score: c.score,
                state: states[c.parent].clone(),
            })
            .collect(),
    }
}

/// `score / length`, where `length` counts the end label.
pub fn length_normalized_score(score: LogProb, length: usize) -> Result<f64> {
    if length == 0 {
        return Err(Error::ZeroLength);
    }
    Ok(score.0 / length as f64)
}

/// Admit an end label iff `eos_score > factor * best_active_score`. With
/// negative log scores a factor above one loosens the test, below one
/// tightens it.
pub fn eos_admission(eos_score: LogProb, best_active_score: LogProb, factor: f64) -> bool {
    eos_score.0 > factor * best_active_score.0
}

/// `p_N($)`: surviving ended mass over all surviving mass at one step.
pub fn ending_probability(ended: &[LogProb], ongoing: &[LogProb]) -> Result<LogProb> {
    if ended.is_empty() && ongoing.is_empty() {
        return Err(Error::EmptyBeam);
    }
    let all: Vec<LogProb> = ended.iter().chain(ongoing).copied().collect();
    let total = log_sum_exp(&all)?;
    Ok(log_sum_exp_or_zero(ended.iter().copied()).ratio(total))
}

/// Final probability `p_B * p_!$` of a sequence ended at this step.
pub fn final_probability(
    labels: Vec<LabelId>,
    raw_score: LogProb,
    step_total_mass: LogProb,
    p_not_end_acc: LogProb,
) -> EndedHypothesis {
    EndedHypothesis::reinterpreted(labels, raw_score, raw_score.ratio(step_total_mass), p_not_end_acc)
}

/// Stop when the remaining non-ending mass cannot beat the best final
/// probability, or at the length cap.
pub fn should_stop(p_not_end_acc: LogProb, best_final: f64, step: usize, max_length: usize) -> bool {
    p_not_end_acc.0 <= best_final || step >= max_length
}
