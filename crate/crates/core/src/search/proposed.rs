use crate::error::{Error, Result};
use crate::hyp::{DecodeResult, EndedHypothesis, StopReason};
use crate::logprob::{log_sum_exp, log_sum_exp_or_zero, LogProb};
use crate::scorer::Scorer;
use crate::search::{
    candidate_labels, expand, final_probability, materialize, prune_beam, PruneConfig, SearchState,
};
use crate::vocab::LabelId;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ProposedOptions {
    /// Apply the non-ending-mass bound; when off the search runs to the cap.
    pub early_stop: bool,
    pub record_trace: bool,
}

impl Default for ProposedOptions {
    fn default() -> Self {
        ProposedOptions {
            early_stop: true,
            record_trace: false,
        }
    }
}

/// What happened at one step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    /// Log mass of every surviving hypothesis, ended and ongoing.
    pub p_sum: LogProb,
    /// Log mass of the surviving ended hypotheses.
    pub p_sum_end: LogProb,
    pub p_not_end_before: LogProb,
    pub p_not_end_after: LogProb,
    pub ongoing: Vec<(Vec<LabelId>, LogProb)>,
    pub ended: Vec<EndedHypothesis>,
}

/// Beam search with the reinterpreted final probability and early stopping.
pub fn proposed_beam_search<S: Scorer>(
    scorer: &S,
    cfg: &PruneConfig,
    max_length: usize,
    k: usize,
) -> Result<DecodeResult> {
    proposed_beam_search_with(scorer, cfg, max_length, k, ProposedOptions::default()).map(|(r, _)| r)
}

pub fn proposed_beam_search_with<S: Scorer>(
    scorer: &S,
    cfg: &PruneConfig,
    max_length: usize,
    k: usize,
    opts: ProposedOptions,
) -> Result<(DecodeResult, Vec<StepRecord>)> {
    cfg.validate()?;
    if max_length == 0 {
        return Err(Error::Config("maximum length must be at least 1".into()));
    }
    let eos = scorer.vocab().eos();
    let mut trace = Vec::new();
    let mut st: SearchState<S::State> = SearchState::new(scorer.initial_state(), k)?;

    loop {
        let n = st.beam.step + 1;
        st.steps = n;
        let expansion = expand(&st.beam, scorer);
        let survivors = prune_beam(&st.beam, expansion.candidates, cfg);
        if survivors.is_empty() {
            return Ok(finish(st, StopReason::BeamExhausted, trace));
        }
        let (ended, ongoing): (Vec<_>, Vec<_>) = survivors.into_iter().partition(|c| c.label == eos);

        let all_scores: Vec<LogProb> = ended.iter().chain(&ongoing).map(|c| c.score).collect();
        let p_sum = log_sum_exp(&all_scores)?;
        let p_sum_end = log_sum_exp_or_zero(ended.iter().map(|c| c.score));
        let p_not_end_before = st.p_not_end_acc;

        let mut ended_hyps = Vec::with_capacity(ended.len());
        for c in &ended {
            let h = final_probability(candidate_labels(&st.beam, c), c.score, p_sum, p_not_end_before);
            if opts.record_trace {
                ended_hyps.push(h.clone());
            }
            st.kbest.insert(h);
        }

        // 1 - p_end/p_sum as ongoing/p_sum: exact for an all-ongoing step and
        // -inf when nothing continues
        let ongoing_mass = log_sum_exp_or_zero(ongoing.iter().map(|c| c.score));
        st.multiply_not_end(ongoing_mass.ratio(p_sum));

        let next = materialize(&st.beam, &ongoing, &expansion.states);
        if opts.record_trace {
            trace.push(StepRecord {
                step: n,
                p_sum,
                p_sum_end,
                p_not_end_before,
                p_not_end_after: st.p_not_end_acc,
                ongoing: next.entries.iter().map(|h| (h.labels.clone(), h.score)).collect(),
                ended: ended_hyps,
            });
        }

        if ongoing.is_empty() {
            return Ok(finish(st, StopReason::BeamExhausted, trace));
        }
        if opts.early_stop && st.p_not_end_acc.0 <= st.kbest.best_final() {
            return Ok(finish(st, StopReason::EarlyStop, trace));
        }
        if n >= max_length {
            return Ok(finish(st, StopReason::MaxLength, trace));
        }
        st.beam = next;
    }
}

fn finish<St>(st: SearchState<St>, stop_reason: StopReason, trace: Vec<StepRecord>) -> (DecodeResult, Vec<StepRecord>) {
    (
        DecodeResult {
            kbest: st.kbest,
            steps_taken: st.steps,
            stop_reason,
        },
        trace,
    )
}
