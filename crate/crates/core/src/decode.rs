//! Batch decoding of utterance sets and side-by-side comparison.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Utterance;
use crate::error::{Error, Result};
use crate::eval::{corpus_report, CorpusReport, UtteranceResult};
use crate::hyp::{DecodeResult, EndedHypothesis};
use crate::logprob::LogProb;
use crate::scorer::{FusedScorer, Scorer};
use crate::search::{proposed_beam_search, simple_beam_search, HeuristicConfig, PruneConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Simple,
    Heuristic,
    Proposed,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Simple => "simple",
            Mode::Heuristic => "heuristic",
            Mode::Proposed => "proposed",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "simple" => Ok(Mode::Simple),
            "heuristic" => Ok(Mode::Heuristic),
            "proposed" => Ok(Mode::Proposed),
            other => Err(Error::Config(format!("unknown mode {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecodeConfig {
    pub mode: Mode,
    pub prune: PruneConfig,
    pub heuristics: HeuristicConfig,
    pub k_best: usize,
    pub lm_scale: f64,
    /// Step cap as a multiple of the utterance's input length.
    pub max_steps_factor: f64,
}

impl DecodeConfig {
    pub fn new(mode: Mode, beam_size: usize) -> Self {
        DecodeConfig {
            mode,
            prune: PruneConfig {
                beam_size,
                score_threshold: None,
            },
            heuristics: HeuristicConfig::none(),
            k_best: 1,
            lm_scale: 0.0,
            max_steps_factor: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.prune.validate()?;
        self.heuristics.validate()?;
        if self.mode != Mode::Heuristic && !self.heuristics.is_none() {
            return Err(Error::Config(format!(
                "length normalisation, EOS threshold and length reward are only valid in heuristic mode, not {}",
                self.mode
            )));
        }
        if self.k_best == 0 {
            return Err(Error::Config("k-best must be at least 1".into()));
        }
        if !(self.lm_scale >= 0.0 && self.lm_scale.is_finite()) {
            return Err(Error::Config(format!("LM scale must be nonnegative, got {}", self.lm_scale)));
        }
        if !(self.max_steps_factor > 0.0 && self.max_steps_factor.is_finite()) {
            return Err(Error::Config(format!(
                "max-steps factor must be positive, got {}",
                self.max_steps_factor
            )));
        }
        Ok(())
    }

    /// `ceil(factor * T)`, at least one.
    pub fn max_steps(&self, input_length: usize) -> usize {
        ((self.max_steps_factor * input_length as f64).ceil() as usize).max(1)
    }
}

/// Decodes with any scorer under `cfg` (LM settings are the caller's job).
pub fn decode_with<S: Scorer>(scorer: &S, cfg: &DecodeConfig, input_length: usize) -> Result<DecodeResult> {
    let cap = cfg.max_steps(input_length);
    match cfg.mode {
        Mode::Proposed => proposed_beam_search(scorer, &cfg.prune, cap, cfg.k_best),
        Mode::Simple | Mode::Heuristic => simple_beam_search(scorer, &cfg.prune, &cfg.heuristics, cap, cfg.k_best),
    }
}

pub fn decode_utterance(u: &Utterance, cfg: &DecodeConfig) -> Result<DecodeResult> {
    let scorer = FusedScorer::new(&*u.model, u.lm.as_deref(), cfg.lm_scale)?;
    decode_with(&scorer, cfg, u.input_length)
}

/// Decode outcome for one utterance, labels rendered.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UtteranceDecode {
    pub id: String,
    pub reference: Vec<String>,
    pub kbest: Vec<RenderedHypothesis>,
    pub steps_taken: usize,
    pub stop_reason: Option<crate::hyp::StopReason>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RenderedHypothesis {
    /// Output labels, end label removed.
    pub output: Vec<String>,
    pub length: usize,
    pub raw_score: LogProb,
    pub p_b: LogProb,
    pub p_not_end: LogProb,
    #[serde(with = "crate::logprob::extended_f64")]
    pub final_score: f64,
}

impl RenderedHypothesis {
    fn new(u: &Utterance, h: &EndedHypothesis) -> Self {
        RenderedHypothesis {
            output: u.model.vocab().render(h.output()),
            length: h.length(),
            raw_score: h.raw_score,
            p_b: h.p_b,
            p_not_end: h.p_not_end,
            final_score: h.final_score,
        }
    }
}

impl UtteranceDecode {
    pub fn best(&self) -> Option<&RenderedHypothesis> {
        self.kbest.first()
    }

    pub fn as_result(&self) -> UtteranceResult {
        UtteranceResult {
            id: self.id.clone(),
            hypothesis: self.best().map(|h| h.output.clone()),
            steps_taken: self.steps_taken,
            stop_reason: self.stop_reason,
        }
    }
}

fn render(u: &Utterance, r: Result<DecodeResult>) -> UtteranceDecode {
    let reference = u.reference_labels();
    match r {
        Ok(res) => {
            let kbest: Vec<RenderedHypothesis> =
                res.kbest.entries().iter().map(|h| RenderedHypothesis::new(u, h)).collect();
            let error = kbest.is_empty().then(|| Error::NoEndedHypothesis.to_string());
            UtteranceDecode {
                id: u.id.clone(),
                reference,
                kbest,
                steps_taken: res.steps_taken,
                stop_reason: Some(res.stop_reason),
                error,
            }
        }
        Err(e) => UtteranceDecode {
            id: u.id.clone(),
            reference,
            kbest: Vec::new(),
            steps_taken: 0,
            stop_reason: None,
            error: Some(e.to_string()),
        },
    }
}

/// Decodes every utterance on up to `jobs` threads (0 = all cores). The
/// output is sorted by id.
pub fn decode_corpus(utterances: &[Utterance], cfg: &DecodeConfig, jobs: usize) -> Result<Vec<UtteranceDecode>> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let mut out: Vec<UtteranceDecode> = pool.install(|| {
        utterances
            .par_iter()
            .map(|u| render(u, decode_utterance(u, cfg)))
            .collect()
    });
    out.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(out)
}

pub fn report_for(decodes: &[UtteranceDecode]) -> Result<CorpusReport> {
    let results: Vec<UtteranceResult> = decodes.iter().map(UtteranceDecode::as_result).collect();
    let refs: Vec<(String, Vec<String>)> = decodes.iter().map(|d| (d.id.clone(), d.reference.clone())).collect();
    corpus_report(&results, &refs)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Choice {
    pub config: String,
    pub output: Option<Vec<String>>,
    pub raw_score: Option<LogProb>,
    pub final_score: Option<LogProb>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Disagreement {
    pub id: String,
    pub choices: Vec<Choice>,
}

/// A configuration chose an output although a hypothesis with a better raw
/// score was available to it (in its own k-best) or chosen by another
/// configuration.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Inversion {
    pub id: String,
    pub config: String,
    pub chosen: Vec<String>,
    pub chosen_raw: LogProb,
    pub chosen_final: LogProb,
    pub better: Vec<String>,
    pub better_raw: LogProb,
    pub better_source: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub config: String,
    pub report: CorpusReport,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
    pub disagreements: Vec<Disagreement>,
    pub inversions: Vec<Inversion>,
}

pub fn compare(utterances: &[Utterance], configs: &[(String, DecodeConfig)], jobs: usize) -> Result<Comparison> {
    if configs.len() < 2 {
        return Err(Error::Config("compare needs at least two configurations".into()));
    }
    let runs: Vec<Vec<UtteranceDecode>> = configs
        .iter()
        .map(|(_, cfg)| decode_corpus(utterances, cfg, jobs))
        .collect::<Result<_>>()?;
    let rows = configs
        .iter()
        .zip(&runs)
        .map(|((name, _), d)| {
            Ok(ComparisonRow {
                config: name.clone(),
                report: report_for(d)?,
            })
        })
        .collect::<Result<_>>()?;
    let (disagreements, inversions) = diagnose(configs, &runs);
    Ok(Comparison {
        rows,
        disagreements,
        inversions,
    })
}

fn diagnose(configs: &[(String, DecodeConfig)], runs: &[Vec<UtteranceDecode>]) -> (Vec<Disagreement>, Vec<Inversion>) {
    let mut disagreements = Vec::new();
    let mut inversions = Vec::new();
    let n_utts = runs.first().map_or(0, Vec::len);
    for i in 0..n_utts {
        let id = &runs[0][i].id;
        let choices: Vec<Choice> = configs
            .iter()
            .zip(runs)
            .map(|((name, _), run)| {
                let best = run[i].best();
                Choice {
                    config: name.clone(),
                    output: best.map(|h| h.output.clone()),
                    raw_score: best.map(|h| h.raw_score),
                    final_score: best.map(|h| LogProb(h.final_score)),
                }
            })
            .collect();
        if choices.iter().any(|c| c.output != choices[0].output) {
            disagreements.push(Disagreement {
                id: id.clone(),
                choices: choices.clone(),
            });
        }
        for (c, ((name, _), run)) in choices.iter().zip(configs.iter().zip(runs)) {
            let (Some(chosen), Some(raw)) = (&c.output, c.raw_score) else {
                continue;
            };
            let own = run[i].kbest.iter().skip(1).map(|h| (&h.output, h.raw_score, name.as_str()));
            let others = choices
                .iter()
                .filter_map(|o| Some((o.output.as_ref()?, o.raw_score?, o.config.as_str())));
            let better = own
                .chain(others)
                .filter(|(_, r, _)| r.0 > raw.0)
                .max_by(|a, b| a.1.total_cmp(&b.1).then_with(|| b.0.len().cmp(&a.0.len())));
            if let Some((out, r, source)) = better {
                inversions.push(Inversion {
                    id: id.clone(),
                    config: name.clone(),
                    chosen: chosen.clone(),
                    chosen_raw: raw,
                    chosen_final: c.final_score.unwrap_or(LogProb::ZERO),
                    better: out.clone(),
                    better_raw: r,
                    better_source: source.to_string(),
                });
            }
        }
    }
    (disagreements, inversions)
}
