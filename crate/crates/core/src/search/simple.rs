use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::hyp::{Beam, DecodeResult, EndedHypothesis, KBestStore, StopReason};
use crate::logprob::LogProb;
use crate::scorer::Scorer;
use crate::search::{
    candidate_labels, eos_admission, expand, materialize, select_top, Candidate, HeuristicConfig, PruneConfig,
};

/// Beam slot: a fresh extension, or an ended sequence held over from an
/// earlier step.
enum Slot {
    Fresh(Candidate),
    Held(usize),
}

struct Entry {
    slot: Slot,
    rank: f64,
}

/// Beam search ranked by raw score, optionally with length normalisation, an
/// EOS threshold and a length reward.
///
/// Ended sequences keep competing for beam slots; the search stops once no
/// slot holds an ongoing sequence, or after `max_steps`.
pub fn simple_beam_search<S: Scorer>(
    scorer: &S,
    cfg: &PruneConfig,
    heur: &HeuristicConfig,
    max_steps: usize,
    k: usize,
) -> Result<DecodeResult> {
    cfg.validate()?;
    heur.validate()?;
    if max_steps == 0 {
        return Err(Error::Config("maximum number of steps must be at least 1".into()));
    }
    let eos = scorer.vocab().eos();
    let mut kbest = KBestStore::new(k)?;
    let mut beam: Beam<S::State> = Beam::initial(scorer.initial_state());
    let mut held: Vec<EndedHypothesis> = Vec::new();

    loop {
        let n = beam.step + 1;
        let expansion = expand(&beam, scorer);
        let mut fresh: Vec<Candidate> = expansion
            .candidates
            .into_iter()
            .filter(|c| c.score.0 > f64::NEG_INFINITY)
            .collect();

        if let Some(factor) = heur.eos_threshold_factor {
            let best_active = fresh
                .iter()
                .filter(|c| c.label != eos)
                .map(|c| heur.rewarded(c.score, n))
                .fold(f64::NEG_INFINITY, f64::max);
            fresh.retain(|c| {
                c.label != eos || eos_admission(LogProb(heur.rewarded(c.score, n)), LogProb(best_active), factor)
            });
        }

        for c in fresh.iter().filter(|c| c.label == eos) {
            let labels = candidate_labels(&beam, c);
            kbest.insert(EndedHypothesis::ranked(labels, c.score, heur.ranking_score(c.score, n)));
        }

        let mut pool: Vec<Entry> = held
            .iter()
            .enumerate()
            .map(|(i, h)| Entry {
                slot: Slot::Held(i),
                rank: h.final_score,
            })
            .chain(fresh.iter().map(|&c| Entry {
                slot: Slot::Fresh(c),
                rank: heur.ranking_score(c.score, n),
            }))
            .collect();
        if pool.is_empty() {
            return Ok(done(kbest, n, StopReason::BeamExhausted));
        }
        if let Some(t) = cfg.score_threshold {
            let best = pool.iter().map(|e| e.rank).fold(f64::NEG_INFINITY, f64::max);
            pool.retain(|e| e.rank >= best - t);
        }
        select_top(&mut pool, cfg.beam_size, |a, b| entry_cmp(&beam, &held, a, b));

        let mut ongoing = Vec::new();
        let mut next_held = Vec::new();
        for e in pool {
            match e.slot {
                Slot::Held(i) => next_held.push(held[i].clone()),
                Slot::Fresh(c) if c.label == eos => next_held.push(EndedHypothesis::ranked(
                    candidate_labels(&beam, &c),
                    c.score,
                    e.rank,
                )),
                Slot::Fresh(c) => ongoing.push(c),
            }
        }
        if ongoing.is_empty() {
            return Ok(done(kbest, n, StopReason::EarlyStop));
        }
        if n >= max_steps {
            return Ok(done(kbest, n, StopReason::MaxLength));
        }
        beam = materialize(&beam, &ongoing, &expansion.states);
        held = next_held;
    }
}

fn entry_cmp<St>(beam: &Beam<St>, held: &[EndedHypothesis], a: &Entry, b: &Entry) -> Ordering {
    fn labels<'a, St>(
        beam: &'a Beam<St>,
        held: &'a [EndedHypothesis],
        e: &Entry,
    ) -> (&'a [usize], Option<usize>) {
        match e.slot {
            Slot::Held(i) => (&held[i].labels, None),
            Slot::Fresh(c) => (&beam.entries[c.parent].labels, Some(c.label)),
        }
    }
    let (pa, la) = labels(beam, held, a);
    let (pb, lb) = labels(beam, held, b);
    let len_a = pa.len() + la.is_some() as usize;
    let len_b = pb.len() + lb.is_some() as usize;
    b.rank
        .total_cmp(&a.rank)
        .then_with(|| len_a.cmp(&len_b))
        .then_with(|| pa.iter().chain(la.iter()).cmp(pb.iter().chain(lb.iter())))
}

fn done(kbest: KBestStore, steps_taken: usize, stop_reason: StopReason) -> DecodeResult {
    DecodeResult {
        kbest,
        steps_taken,
        stop_reason,
    }
}
