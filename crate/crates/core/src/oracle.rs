//! Brute-force ground truth over small models.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::hyp::{rank_order, EndedHypothesis};
use crate::logprob::{log_sum_exp, log_sum_exp_or_zero, LogProb};
use crate::scorer::{Scorer, TableModel};
use crate::search::{
    proposed_beam_search_with, simple_beam_search, HeuristicConfig, ProposedOptions, PruneConfig,
};
use crate::vocab::{LabelId, Vocabulary};

pub const DEFAULT_MAX_SEQUENCES: u64 = 1_000_000;
pub const DEFAULT_TOLERANCE: f64 = 1e-9;

/// Enumerate sequences up to `max_length` labels (end label included).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct EnumerationLimit {
    pub max_length: usize,
    pub max_sequences: u64,
}

impl EnumerationLimit {
    pub fn new(max_length: usize, max_sequences: u64) -> Result<Self> {
        if max_length == 0 {
            return Err(Error::Config("enumeration length must be at least 1".into()));
        }
        Ok(EnumerationLimit {
            max_length,
            max_sequences,
        })
    }

    pub fn with_length(max_length: usize) -> Result<Self> {
        EnumerationLimit::new(max_length, DEFAULT_MAX_SEQUENCES)
    }

    /// Refuses when `|V ∪ {$}|^L` exceeds the cap.
    pub fn check(&self, vocab_size: usize) -> Result<()> {
        let required = (vocab_size as u128).checked_pow(self.max_length as u32).unwrap_or(u128::MAX);
        if required > self.max_sequences as u128 {
            return Err(Error::EnumerationTooLarge {
                required,
                cap: self.max_sequences,
            });
        }
        Ok(())
    }
}

/// Raw posteriors of every ended sequence with nonzero probability, plus the
/// mass still ongoing after `max_length` labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Enumeration {
    pub endings: BTreeMap<Vec<LabelId>, LogProb>,
    pub residual: LogProb,
}

impl Enumeration {
    pub fn total_mass(&self) -> f64 {
        self.endings.values().map(|v| v.prob()).sum::<f64>() + self.residual.prob()
    }
}

/// Nonzero-probability prefixes of one length with their scorer states.
struct Level<St> {
    prefixes: Vec<(Vec<LabelId>, LogProb, St)>,
}

/// Walks the prefix tree level by level; `visit` sees each step's full
/// distribution for every live prefix.
fn walk<S: Scorer>(
    scorer: &S,
    limit: &EnumerationLimit,
    mut visit: impl FnMut(usize, &[LabelId], LogProb, &[LogProb]),
) -> Result<LogProb> {
    limit.check(scorer.vocab().len())?;
    let eos = scorer.vocab().eos();
    let mut level = Level {
        prefixes: vec![(Vec::new(), LogProb::ONE, scorer.initial_state())],
    };
    let mut dist = Vec::with_capacity(scorer.vocab().len());
    for n in 1..=limit.max_length {
        let mut next = Vec::new();
        for (labels, score, state) in &level.prefixes {
            let advanced = scorer.step(state, labels.last().copied(), &mut dist);
            visit(n, labels, *score, &dist);
            for (label, &lp) in dist.iter().enumerate() {
                let s = *score + lp;
                if label == eos || s.is_zero() {
                    continue;
                }
                let mut child = labels.clone();
                child.push(label);
                next.push((child, s, advanced.clone()));
            }
        }
        level = Level { prefixes: next };
    }
    Ok(log_sum_exp_or_zero(level.prefixes.iter().map(|p| p.1)))
}

pub fn enumerate_posteriors<S: Scorer>(scorer: &S, limit: &EnumerationLimit) -> Result<Enumeration> {
    let eos = scorer.vocab().eos();
    let mut endings = BTreeMap::new();
    let residual = walk(scorer, limit, |_, labels, score, dist| {
        let s = score + dist[eos];
        if !s.is_zero() {
            let mut l = labels.to_vec();
            l.push(eos);
            endings.insert(l, s);
        }
    })?;
    Ok(Enumeration { endings, residual })
}

/// Highest raw posterior among sequences ending within the limit.
pub fn exact_map<S: Scorer>(scorer: &S, limit: &EnumerationLimit) -> Result<EndedHypothesis> {
    let e = enumerate_posteriors(scorer, limit)?;
    e.endings
        .into_iter()
        .min_by(|a, b| rank_order(a.1 .0, &a.0, b.1 .0, &b.0))
        .map(|(labels, raw)| EndedHypothesis::ranked(labels, raw, raw.0))
        .ok_or(Error::NoEndedHypothesis)
}

/// `p(len = N)` for `N = 1..=L`, by the ending-probability chain and by
/// summing enumerated endings of each length.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LengthDistribution {
    pub by_chain: Vec<LogProb>,
    pub by_enumeration: Vec<LogProb>,
    pub max_deviation: f64,
}

fn length_distribution_unchecked<S: Scorer>(scorer: &S, limit: &EnumerationLimit) -> Result<LengthDistribution> {
    let eos = scorer.vocab().eos();
    let l = limit.max_length;
    let mut end_mass: Vec<Vec<LogProb>> = vec![Vec::new(); l];
    let mut cont_mass: Vec<Vec<LogProb>> = vec![Vec::new(); l];
    walk(scorer, limit, |n, _, score, dist| {
        for (label, &lp) in dist.iter().enumerate() {
            let bucket = if label == eos { &mut end_mass } else { &mut cont_mass };
            bucket[n - 1].push(score + lp);
        }
    })?;
    let mut by_chain = Vec::with_capacity(l);
    let mut by_enumeration = Vec::with_capacity(l);
    let mut not_ended = LogProb::ONE;
    for n in 0..l {
        let ended = log_sum_exp_or_zero(end_mass[n].iter().copied());
        let cont = log_sum_exp_or_zero(cont_mass[n].iter().copied());
        let total = log_sum_exp_or_zero([ended, cont]);
        by_chain.push(ended.ratio(total) + not_ended);
        not_ended += LogProb(cont.ratio(total).0.min(0.0));
        by_enumeration.push(ended);
    }
    let max_deviation = by_chain
        .iter()
        .zip(&by_enumeration)
        .map(|(a, b)| (a.prob() - b.prob()).abs())
        .fold(0.0, f64::max);
    Ok(LengthDistribution {
        by_chain,
        by_enumeration,
        max_deviation,
    })
}

/// Length distribution with the chain cross-checked against enumeration.
pub fn length_distribution<S: Scorer>(scorer: &S, limit: &EnumerationLimit) -> Result<LengthDistribution> {
    let d = length_distribution_unchecked(scorer, limit)?;
    if d.max_deviation > DEFAULT_TOLERANCE {
        return Err(Error::OracleViolation(format!(
            "length chain deviates from enumeration by {:e}",
            d.max_deviation
        )));
    }
    Ok(d)
}

/// Final probabilities under an unlimited beam, with the identity checks.
#[derive(Clone, Debug, PartialEq)]
pub struct Replay {
    pub endings: BTreeMap<Vec<LabelId>, EndedHypothesis>,
    /// Largest `|final - raw|` over all endings.
    pub max_final_deviation: f64,
    /// Largest `|log Π(1 - p_n($)) - log Σq|` over all steps.
    pub max_mass_deviation: f64,
}

fn replay_unchecked<S: Scorer>(scorer: &S, limit: &EnumerationLimit) -> Result<Replay> {
    limit.check(scorer.vocab().len())?;
    let opts = ProposedOptions {
        early_stop: false,
        record_trace: true,
    };
    let (_, trace) = proposed_beam_search_with(scorer, &PruneConfig::unlimited(), limit.max_length, 1, opts)?;
    let mut endings = BTreeMap::new();
    let mut max_final_deviation: f64 = 0.0;
    let mut max_mass_deviation: f64 = 0.0;
    for step in trace {
        max_mass_deviation = max_mass_deviation.max(log_gap(step.p_not_end_before, step.p_sum));
        for h in step.ended {
            max_final_deviation = max_final_deviation.max(log_gap(LogProb(h.final_score), h.raw_score));
            endings.insert(h.labels.clone(), h);
        }
    }
    Ok(Replay {
        endings,
        max_final_deviation,
        max_mass_deviation,
    })
}

fn log_gap(a: LogProb, b: LogProb) -> f64 {
    if a.is_zero() && b.is_zero() {
        0.0
    } else {
        (a.0 - b.0).abs()
    }
}

pub fn replay_with_unlimited_beam<S: Scorer>(scorer: &S, limit: &EnumerationLimit) -> Result<Replay> {
    let r = replay_unchecked(scorer, limit)?;
    if r.max_final_deviation >= DEFAULT_TOLERANCE || r.max_mass_deviation >= DEFAULT_TOLERANCE {
        return Err(Error::OracleViolation(format!(
            "unlimited-beam identity off by {:e} (final) / {:e} (mass)",
            r.max_final_deviation, r.max_mass_deviation
        )));
    }
    Ok(r)
}

/// Shape of the seeded random models.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RandomModelConfig {
    /// Largest `|V ∪ {$}|`.
    pub max_vocab: usize,
    pub max_context_len: usize,
    pub max_contexts: usize,
}

impl Default for RandomModelConfig {
    fn default() -> Self {
        RandomModelConfig {
            max_vocab: 4,
            max_context_len: 3,
            max_contexts: 8,
        }
    }
}

pub fn random_table_model(rng: &mut impl Rng, cfg: &RandomModelConfig) -> TableModel {
    let size = rng.gen_range(2..=cfg.max_vocab.max(2));
    let vocab = Vocabulary::alphabetic(size - 1).expect("alphabetic vocabulary");
    let eos = vocab.eos();
    let non_eos: Vec<LabelId> = vocab.non_eos().collect();
    // a per-model bias on the end label spreads expected lengths out
    let eos_weight = rng.gen_range(0.05..3.0);
    let dist = |rng: &mut dyn rand::RngCore| -> Vec<f64> {
        let mut w: Vec<f64> = (0..size)
            .map(|l| {
                if rng.gen_bool(0.1) {
                    0.0
                } else {
                    rng.gen_range(0.01..1.0) * if l == eos { eos_weight } else { 1.0 }
                }
            })
            .collect();
        if w.iter().all(|&x| x == 0.0) {
            w[rng.gen_range(0..size)] = 1.0;
        }
        let s: f64 = w.iter().sum();
        w.into_iter().map(|x| x / s).collect()
    };
    let mut contexts = vec![(Vec::new(), dist(rng))];
    for _ in 0..rng.gen_range(0..=cfg.max_contexts) {
        let len = rng.gen_range(1..=cfg.max_context_len.max(1));
        let key: Vec<LabelId> = (0..len).map(|_| non_eos[rng.gen_range(0..non_eos.len())]).collect();
        if contexts.iter().all(|(k, _)| *k != key) {
            let d = dist(rng);
            contexts.push((key, d));
        }
    }
    TableModel::new(vocab, contexts).expect("random model is valid")
}

/// `count` models from one seed.
pub fn random_models(seed: u64, count: usize, cfg: &RandomModelConfig) -> Vec<TableModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| random_table_model(&mut rng, cfg)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PropertyStatus {
    Pass,
    Fail,
    Skipped,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PropertyReport {
    pub name: String,
    pub status: PropertyStatus,
    pub checked: usize,
    pub skipped: usize,
    #[serde(with = "crate::logprob::extended_f64")]
    pub max_deviation: f64,
    pub failures: Vec<String>,
}

impl PropertyReport {
    fn new(name: &str) -> Self {
        PropertyReport {
            name: name.into(),
            status: PropertyStatus::Pass,
            checked: 0,
            skipped: 0,
            max_deviation: 0.0,
            failures: Vec::new(),
        }
    }

    fn record(&mut self, model: &str, deviation: f64, tolerance: f64) {
        self.checked += 1;
        self.max_deviation = self.max_deviation.max(deviation);
        if deviation.is_nan() || deviation >= tolerance {
            self.failures.push(format!("{model}: deviation {deviation:e}"));
        }
    }

    fn fail(&mut self, model: &str, message: String) {
        self.checked += 1;
        self.failures.push(format!("{model}: {message}"));
    }

    fn finish(mut self) -> Self {
        self.status = if !self.failures.is_empty() {
            PropertyStatus::Fail
        } else if self.checked == 0 {
            PropertyStatus::Skipped
        } else {
            PropertyStatus::Pass
        };
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OracleCheckConfig {
    pub seed: u64,
    pub models: usize,
    pub limit: EnumerationLimit,
    pub random: RandomModelConfig,
    pub tolerance: f64,
    /// Conservation is only claimed when the mass left after the limit is
    /// below this.
    pub residual_threshold: f64,
    pub early_stop_beams: Vec<usize>,
}

impl Default for OracleCheckConfig {
    fn default() -> Self {
        OracleCheckConfig {
            seed: 0,
            models: 100,
            limit: EnumerationLimit {
                max_length: 6,
                max_sequences: DEFAULT_MAX_SEQUENCES,
            },
            random: RandomModelConfig::default(),
            tolerance: DEFAULT_TOLERANCE,
            residual_threshold: 1e-3,
            early_stop_beams: vec![2, 4, 8],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OracleReport {
    pub config: OracleCheckConfig,
    pub extra_models: Vec<String>,
    pub properties: Vec<PropertyReport>,
    pub passed: bool,
}

/// Runs every oracle property over the seeded random models plus `extra`
/// (named) models.
pub fn oracle_check(cfg: &OracleCheckConfig, extra: &[(String, TableModel)]) -> Result<OracleReport> {
    let mut models: Vec<(String, TableModel)> = random_models(cfg.seed, cfg.models, &cfg.random)
        .into_iter()
        .enumerate()
        .map(|(i, m)| (format!("random#{i}"), m))
        .collect();
    models.extend(extra.iter().cloned());
    let tol = cfg.tolerance;

    let mut normalization = PropertyReport::new("local_normalization");
    let mut conservation = PropertyReport::new("conservation");
    let mut chain = PropertyReport::new("length_chain");
    let mut identity = PropertyReport::new("unlimited_beam_final");
    let mut mass = PropertyReport::new("unlimited_beam_mass");
    let mut map = PropertyReport::new("exact_map_agreement");
    let mut early = PropertyReport::new("early_stopping_exactness");

    for (name, model) in &models {
        cfg.limit.check(model.vocab().len())?;
        let worst = model
            .contexts()
            .map(|(key, _)| log_sum_exp(model.lookup(key)).map(|s| s.0.abs()).unwrap_or(f64::INFINITY))
            .fold(0.0, f64::max);
        normalization.record(name, worst, tol);

        let e = enumerate_posteriors(model, &cfg.limit)?;
        if e.residual.prob() < cfg.residual_threshold {
            conservation.record(name, (e.total_mass() - 1.0).abs(), tol);
        } else {
            conservation.skipped += 1;
        }

        let d = length_distribution_unchecked(model, &cfg.limit)?;
        chain.record(name, d.max_deviation, tol);

        let r = replay_unchecked(model, &cfg.limit)?;
        identity.record(name, r.max_final_deviation, tol);
        mass.record(name, r.max_mass_deviation, tol);
        if r.endings.len() != e.endings.len() {
            identity.fail(
                name,
                format!("replay saw {} endings, enumeration {}", r.endings.len(), e.endings.len()),
            );
        }

        let exhaustive = PruneConfig::beam(exhaustive_beam(model.vocab().len(), cfg.limit.max_length))?;
        match (
            exact_map(model, &cfg.limit),
            simple_beam_search(model, &exhaustive, &HeuristicConfig::none(), cfg.limit.max_length, 1),
        ) {
            (Ok(truth), Ok(found)) => match found.best() {
                Ok(b) if b.labels == truth.labels => map.record(name, (b.final_score - truth.final_score).abs(), tol),
                Ok(b) => map.fail(name, format!("search chose {:?}, oracle {:?}", b.labels, truth.labels)),
                Err(_) => map.fail(name, "search found no ending".into()),
            },
            (Err(Error::NoEndedHypothesis), Ok(found)) if found.kbest.is_empty() => map.record(name, 0.0, tol),
            (a, b) => map.fail(name, format!("oracle {:?} vs search {:?}", a.err(), b.err())),
        }

        for &beam in &cfg.early_stop_beams {
            let prune = PruneConfig::beam(beam)?;
            let run = |early_stop| {
                proposed_beam_search_with(
                    model,
                    &prune,
                    cfg.limit.max_length,
                    1,
                    ProposedOptions {
                        early_stop,
                        record_trace: false,
                    },
                )
            };
            let (stopped, _) = run(true)?;
            let (full, _) = run(false)?;
            if stopped.kbest == full.kbest {
                early.record(name, 0.0, tol);
            } else {
                early.fail(name, format!("beam {beam}: early-stopped k-best differs from the capped run"));
            }
        }
    }

    let properties: Vec<PropertyReport> = [normalization, conservation, chain, identity, mass, map, early]
        .into_iter()
        .map(PropertyReport::finish)
        .collect();
    let passed = properties.iter().all(|p| p.status != PropertyStatus::Fail);
    Ok(OracleReport {
        config: cfg.clone(),
        extra_models: extra.iter().map(|(n, _)| n.clone()).collect(),
        properties,
        passed,
    })
}

/// A beam that can hold every hypothesis of up to `max_length` labels.
pub fn exhaustive_beam(vocab_size: usize, max_length: usize) -> usize {
    (vocab_size as u128)
        .checked_pow(max_length as u32)
        .map_or(usize::MAX, |n| n.min(usize::MAX as u128) as usize)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scorer::{make_length_biased_model, BiasedModelSpec};

    fn uniform3() -> TableModel {
        TableModel::uniform(Vocabulary::with_eos(vec!["a".into(), "b".into()], "$").unwrap())
    }

    fn biased(target: Vec<LabelId>, nv: usize) -> TableModel {
        make_length_biased_model(&BiasedModelSpec {
            vocab: Vocabulary::alphabetic(nv).unwrap(),
            target,
            eos_leak: 0.1,
            on_target_mass: 0.5,
        })
        .unwrap()
    }

    fn lim(l: usize) -> EnumerationLimit {
        EnumerationLimit::with_length(l).unwrap()
    }

    #[test]
    fn uniform_enumeration() {
        let e = enumerate_posteriors(&uniform3(), &lim(2)).unwrap();
        let third = (1.0f64 / 3.0).ln();
        let got: Vec<(Vec<LabelId>, f64)> = e.endings.iter().map(|(k, v)| (k.clone(), v.0)).collect();
        assert_eq!(got.len(), 3);
        for (labels, v) in got {
            assert!((v - labels.len() as f64 * third).abs() < 1e-12);
        }
        assert!((e.total_mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn biased_enumeration_and_map() {
        let m = biased(vec![0, 1], 2);
        let e = enumerate_posteriors(&m, &lim(4)).unwrap();
        assert!((e.endings[&vec![2]].prob() - 0.1).abs() < 1e-12);
        assert!((e.endings[&vec![0, 1, 2]].prob() - 0.225).abs() < 1e-12);
        assert!((e.total_mass() - 1.0).abs() < 1e-12);
        assert_eq!(exact_map(&m, &lim(4)).unwrap().labels, vec![0, 1, 2]);
        assert_eq!(exact_map(&uniform3(), &lim(3)).unwrap().labels, vec![2]);
    }

    #[test]
    fn long_target_map_is_the_empty_output() {
        let m = biased(vec![0, 1, 0, 1, 0, 1, 0, 1, 0, 1], 2);
        let limit = EnumerationLimit::new(11, 1 << 20).unwrap();
        assert_eq!(exact_map(&m, &limit).unwrap().labels, vec![2]);
    }

    #[test]
    fn refuses_beyond_the_cap() {
        let limit = EnumerationLimit::new(30, 1000).unwrap();
        assert!(matches!(
            enumerate_posteriors(&uniform3(), &limit),
            Err(Error::EnumerationTooLarge { .. })
        ));
    }

    #[test]
    fn geometric_lengths_for_the_uniform_model() {
        let d = length_distribution(&uniform3(), &lim(6)).unwrap();
        for (n, p) in d.by_chain.iter().enumerate() {
            let expected = (2.0f64 / 3.0).powi(n as i32) / 3.0;
            assert!((p.prob() - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn biased_length_distribution() {
        let m = biased(vec![0, 1], 2);
        let d = length_distribution(&m, &lim(4)).unwrap();
        assert!((d.by_chain[0].prob() - 0.1).abs() < 1e-12);
        let e = enumerate_posteriors(&m, &lim(4)).unwrap();
        let len3: f64 = e.endings.iter().filter(|(k, _)| k.len() == 3).map(|(_, v)| v.prob()).sum();
        assert!((d.by_chain[2].prob() - len3).abs() < 1e-12);
        assert!(len3 > 0.225);
    }

    #[test]
    fn uniform_replay() {
        let r = replay_with_unlimited_beam(&uniform3(), &lim(4)).unwrap();
        let h = &r.endings[&vec![0, 2]];
        assert!((h.p_b.0 - (1.0f64 / 6.0).ln()).abs() < 1e-12);
        assert!((h.p_not_end.0 - (2.0f64 / 3.0).ln()).abs() < 1e-12);
        assert!((h.final_score - (1.0f64 / 9.0).ln()).abs() < 1e-12);
        assert_eq!(r.endings[&vec![2]].p_not_end, LogProb::ONE);
    }

    #[test]
    fn default_suite_passes() {
        let cfg = OracleCheckConfig {
            models: 20,
            ..OracleCheckConfig::default()
        };
        let report = oracle_check(&cfg, &[]).unwrap();
        for p in &report.properties {
            assert_ne!(p.status, PropertyStatus::Fail, "{p:?}");
        }
        assert!(report.passed);
    }

    #[test]
    fn random_models_are_reproducible() {
        let a = random_models(7, 5, &RandomModelConfig::default());
        let b = random_models(7, 5, &RandomModelConfig::default());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.to_json(), y.to_json());
        }
    }
}
