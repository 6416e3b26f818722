//! Generated evaluation suites.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::dataset::{ModelRef, UtteranceRecord};
use crate::error::{Error, Result};
use crate::scorer::{make_length_biased_model, BiasedModelSpec, TableModel};
use crate::vocab::{LabelId, Vocabulary};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SuiteConfig {
    pub seed: u64,
    pub utterances: usize,
    pub min_length: usize,
    pub max_length: usize,
    pub num_labels: usize,
    pub eos_leak: f64,
    pub on_target_mass: f64,
    /// Input length `T` as a multiple of the target length.
    pub length_factor: usize,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            seed: 0,
            utterances: 50,
            min_length: 8,
            max_length: 16,
            num_labels: 8,
            eos_leak: 0.1,
            on_target_mass: 0.5,
            length_factor: 2,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SuiteItem {
    pub id: String,
    pub model: TableModel,
    pub reference: Vec<LabelId>,
    pub input_length: usize,
}

/// Utterances whose models give the empty output a higher posterior than
/// the reference.
pub fn biased_suite(cfg: &SuiteConfig) -> Result<Vec<SuiteItem>> {
    if cfg.min_length == 0 || cfg.min_length > cfg.max_length {
        return Err(Error::Config(format!(
            "invalid target length range {}..={}",
            cfg.min_length, cfg.max_length
        )));
    }
    let vocab = Vocabulary::alphabetic(cfg.num_labels)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let width = cfg.utterances.saturating_sub(1).to_string().len().max(3);
    (0..cfg.utterances)
        .map(|i| {
            let len = rng.gen_range(cfg.min_length..=cfg.max_length);
            let target: Vec<LabelId> = (0..len).map(|_| rng.gen_range(0..cfg.num_labels)).collect();
            let spec = BiasedModelSpec {
                vocab: vocab.clone(),
                target: target.clone(),
                eos_leak: cfg.eos_leak,
                on_target_mass: cfg.on_target_mass,
            };
            Ok(SuiteItem {
                id: format!("biased-{i:0width$}"),
                model: make_length_biased_model(&spec)?,
                input_length: cfg.length_factor * len,
                reference: target,
            })
        })
        .collect()
}

/// A short, well-scored target next to a self-loop that is cheap per label
/// but poor overall. Length normalisation prefers the loop; the raw
/// posterior (and the proposed search) prefer the target.
pub fn looping_instance() -> Result<SuiteItem> {
    let vocab = Vocabulary::alphabetic(4)?;
    let target = vec![0, 1, 2];
    let base = make_length_biased_model(&BiasedModelSpec {
        vocab: vocab.clone(),
        target: target.clone(),
        eos_leak: 0.1,
        on_target_mass: 0.5,
    })?;
    let (loop_label, eos) = (3, vocab.eos());
    let mut p = vec![0.01 / 3.0; vocab.len()];
    p[loop_label] = 0.95;
    p[eos] = 0.04;
    Ok(SuiteItem {
        id: "looping".into(),
        model: base.with_context(vec![loop_label], p)?,
        reference: target,
        input_length: 16,
    })
}

/// Writes `dataset.jsonl` plus one model file per item under `dir/models`.
pub fn write_suite(dir: &Path, items: &[SuiteItem]) -> Result<PathBuf> {
    let models = dir.join("models");
    std::fs::create_dir_all(&models).map_err(|e| Error::io(&models, e))?;
    let mut lines = String::new();
    for item in items {
        let rel = format!("models/{}.json", item.id);
        item.model.save(&dir.join(&rel))?;
        let rec = UtteranceRecord {
            id: item.id.clone(),
            model: ModelRef::Path(rel),
            lm: None,
            input_length: item.input_length,
            reference: item.model.vocab().render(&item.reference),
        };
        lines.push_str(&serde_json::to_string(&rec).expect("record serialises"));
        lines.push('\n');
    }
    let path = dir.join("dataset.jsonl");
    std::fs::write(&path, lines).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}
