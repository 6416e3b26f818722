//! JSONL utterance sets.

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scorer::{ModelFile, TableModel};
use crate::vocab::LabelId;

/// A model given by path (relative to the dataset file) or inline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelRef {
    Path(String),
    Inline(ModelFile),
}

/// One line of a dataset file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UtteranceRecord {
    pub id: String,
    pub model: ModelRef,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lm: Option<ModelRef>,
    #[serde(alias = "input_length_T")]
    pub input_length: usize,
    pub reference: Vec<String>,
}

/// A loaded utterance: models resolved, reference mapped to label ids.
#[derive(Clone, Debug)]
pub struct Utterance {
    pub id: String,
    pub model: Arc<TableModel>,
    pub lm: Option<Arc<TableModel>>,
    pub input_length: usize,
    pub reference: Vec<LabelId>,
}

impl Utterance {
    pub fn reference_labels(&self) -> Vec<String> {
        self.model.vocab().render(&self.reference)
    }
}

pub fn load_dataset(path: &Path) -> Result<Vec<Utterance>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    parse_dataset(&text, path, &base)
}

/// Parses dataset text; `base` resolves relative model paths.
pub fn parse_dataset(text: &str, path: &Path, base: &Path) -> Result<Vec<Utterance>> {
    let mut cache: BTreeMap<PathBuf, Arc<TableModel>> = BTreeMap::new();
    let mut ids = HashSet::new();
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fail = |message: String| Error::Dataset {
            path: path.to_path_buf(),
            line: line_no,
            message,
        };
        let rec: UtteranceRecord = serde_json::from_str(line).map_err(|e| fail(e.to_string()))?;
        if !ids.insert(rec.id.clone()) {
            return Err(fail(format!("duplicate id {:?}", rec.id)));
        }
        if rec.input_length == 0 {
            return Err(fail("input_length must be at least 1".into()));
        }
        let mut resolve = |r: &ModelRef| -> Result<Arc<TableModel>> {
            match r {
                ModelRef::Inline(file) => Ok(Arc::new(TableModel::from_file_model(file.clone())?)),
                ModelRef::Path(p) => {
                    let full = base.join(p);
                    if let Some(m) = cache.get(&full) {
                        return Ok(m.clone());
                    }
                    let m = Arc::new(TableModel::load(&full)?);
                    cache.insert(full, m.clone());
                    Ok(m)
                }
            }
        };
        let model = resolve(&rec.model).map_err(|e| fail(e.to_string()))?;
        let lm = match &rec.lm {
            Some(r) => Some(resolve(r).map_err(|e| fail(e.to_string()))?),
            None => None,
        };
        let reference = model
            .vocab()
            .ids(&rec.reference)
            .map_err(|e| fail(format!("reference: {e}")))?;
        if reference.contains(&model.vocab().eos()) {
            return Err(fail("reference must not contain the end label".into()));
        }
        out.push(Utterance {
            id: rec.id,
            model,
            lm,
            input_length: rec.input_length,
            reference,
        });
    }
    Ok(out)
}
