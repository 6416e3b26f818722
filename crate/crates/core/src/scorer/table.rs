use std::collections::{BTreeMap, HashMap, VecDeque};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::logprob::LogProb;
use crate::scorer::Scorer;
use crate::vocab::{LabelId, Vocabulary};

/// Tolerance on the linear-domain sum of a stored distribution.
const LOAD_TOLERANCE: f64 = 1e-6;

/// On-disk form of a [`TableModel`].
///
/// ```json
/// { "vocab": ["a", "b"], "eos": "<eos>",
///   "contexts": { "": [0.3, 0.3, 0.4], "a": [0.8, 0.1, 0.1] } }
/// ```
///
/// Probability vectors follow the vocabulary order, with the end label last
/// unless `vocab` lists it explicitly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub vocab: Vec<String>,
    pub eos: String,
    pub contexts: BTreeMap<String, Vec<f64>>,
}

/// Backoff table: the distribution of the longest context key that is a
/// suffix of the history, falling back to the empty context.
///
/// Lookups run on an Aho-Corasick automaton over the context keys, so a
/// scorer state is a single node id.
#[derive(Clone, Debug)]
pub struct TableModel {
    vocab: Vocabulary,
    keys: Vec<Vec<LabelId>>,
    probs: Vec<Vec<f64>>,
    logs: Vec<Vec<LogProb>>,
    // automaton
    goto: Vec<u32>,
    resolved: Vec<u32>,
}

impl TableModel {
    /// Builds a model from linear-domain distributions. The empty key must be
    /// present and every vector must sum to one within 1e-6.
    pub fn new(vocab: Vocabulary, contexts: Vec<(Vec<LabelId>, Vec<f64>)>) -> Result<Self> {
        let mut seen = HashMap::new();
        let mut keys = Vec::with_capacity(contexts.len());
        let mut probs = Vec::with_capacity(contexts.len());
        for (key, p) in contexts {
            if let Some(&bad) = key.iter().find(|&&l| l >= vocab.len() || l == vocab.eos()) {
                return Err(Error::InvalidModel(format!(
                    "context {key:?} contains label id {bad}, which is the end label or out of range"
                )));
            }
            if seen.insert(key.clone(), ()).is_some() {
                return Err(Error::InvalidModel(format!("duplicate context {:?}", vocab.join(&key))));
            }
            let p = normalise(&vocab, &key, p)?;
            keys.push(key);
            probs.push(p);
        }
        if !seen.contains_key(&Vec::new()) {
            return Err(Error::InvalidModel("missing the empty context \"\"".into()));
        }
        // deterministic layout regardless of input order
        let mut order: Vec<usize> = (0..keys.len()).collect();
        order.sort_by(|&a, &b| keys[a].len().cmp(&keys[b].len()).then_with(|| keys[a].cmp(&keys[b])));
        let keys: Vec<Vec<LabelId>> = order.iter().map(|&i| keys[i].clone()).collect();
        let probs: Vec<Vec<f64>> = order.iter().map(|&i| probs[i].clone()).collect();
        let logs = probs
            .iter()
            .map(|p| p.iter().map(|&x| LogProb::from_prob(x)).collect())
            .collect();
        let (goto, resolved) = build_automaton(vocab.len(), vocab.eos(), &keys);
        Ok(TableModel {
            vocab,
            keys,
            probs,
            logs,
            goto,
            resolved,
        })
    }

    /// A model whose every context is the same distribution.
    pub fn uniform(vocab: Vocabulary) -> Self {
        let n = vocab.len();
        TableModel::new(vocab, vec![(Vec::new(), vec![1.0 / n as f64; n])]).expect("uniform model is valid")
    }

    pub fn from_file_model(file: ModelFile) -> Result<Self> {
        let vocab = Vocabulary::with_eos(file.vocab, &file.eos)?;
        let mut contexts = Vec::with_capacity(file.contexts.len());
        for (key, p) in file.contexts {
            let labels: Vec<&str> = key.split_whitespace().collect();
            let ids = vocab
                .ids(&labels)
                .map_err(|e| Error::InvalidModel(format!("context {key:?}: {e}")))?;
            contexts.push((ids, p));
        }
        TableModel::new(vocab, contexts)
    }

    pub fn from_json_str(json: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(json).map_err(|source| Error::Json {
            path: "<inline>".into(),
            source,
        })?;
        TableModel::from_file_model(file)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: ModelFile = serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })?;
        TableModel::from_file_model(file).map_err(|e| match e {
            Error::InvalidModel(m) => Error::InvalidModel(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_file_model(&self) -> ModelFile {
        let eos = self.vocab.label(self.vocab.eos()).to_string();
        let eos_last = self.vocab.eos() == self.vocab.len() - 1;
        let vocab = if eos_last {
            self.vocab.labels()[..self.vocab.len() - 1].to_vec()
        } else {
            self.vocab.labels().to_vec()
        };
        let contexts = self
            .keys
            .iter()
            .zip(&self.probs)
            .map(|(k, p)| (self.vocab.join(k), p.clone()))
            .collect();
        ModelFile { vocab, eos, contexts }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file_model()).expect("model serialises")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json() + "\n").map_err(|e| Error::io(path, e))
    }

    /// Returns a copy with `key` set to the distribution `probs`.
    pub fn with_context(&self, key: Vec<LabelId>, probs: Vec<f64>) -> Result<Self> {
        let mut contexts: Vec<(Vec<LabelId>, Vec<f64>)> = self
            .keys
            .iter()
            .cloned()
            .zip(self.probs.iter().cloned())
            .filter(|(k, _)| *k != key)
            .collect();
        contexts.push((key, probs));
        TableModel::new(self.vocab.clone(), contexts)
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn contexts(&self) -> impl Iterator<Item = (&[LabelId], &[f64])> {
        self.keys.iter().map(Vec::as_slice).zip(self.probs.iter().map(Vec::as_slice))
    }

    /// Log distribution for `history` (which must not contain the end label).
    pub fn lookup(&self, history: &[LabelId]) -> &[LogProb] {
        let node = history.iter().fold(0u32, |node, &l| self.advance(node, l));
        &self.logs[self.resolved[node as usize] as usize]
    }

    fn advance(&self, node: u32, label: LabelId) -> u32 {
        debug_assert_ne!(label, self.vocab.eos(), "histories never contain the end label");
        self.goto[node as usize * self.vocab.len() + label]
    }
}

/// `table_model_step`: the stored distribution for `history`, in log domain.
pub fn table_model_step(model: &TableModel, history: &[LabelId]) -> Vec<LogProb> {
    model.lookup(history).to_vec()
}

impl Scorer for TableModel {
    type State = u32;

    fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    fn initial_state(&self) -> u32 {
        0
    }

    fn step(&self, state: &u32, last_label: Option<LabelId>, out: &mut Vec<LogProb>) -> u32 {
        let node = match last_label {
            Some(l) => self.advance(*state, l),
            None => *state,
        };
        out.clear();
        out.extend_from_slice(&self.logs[self.resolved[node as usize] as usize]);
        node
    }
}

fn normalise(vocab: &Vocabulary, key: &[LabelId], p: Vec<f64>) -> Result<Vec<f64>> {
    let name = vocab.join(key);
    if p.len() != vocab.len() {
        return Err(Error::InvalidModel(format!(
            "context {name:?} has {} probabilities, expected {}",
            p.len(),
            vocab.len()
        )));
    }
    if let Some(bad) = p.iter().find(|x| !x.is_finite() || **x < 0.0) {
        return Err(Error::InvalidModel(format!("context {name:?} has invalid probability {bad}")));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > LOAD_TOLERANCE {
        return Err(Error::InvalidModel(format!(
            "context {name:?} sums to {sum}, expected 1 within {LOAD_TOLERANCE}"
        )));
    }
    // keep already-normalised vectors bit-identical so save/load is stable
    if (sum - 1.0).abs() <= 1e-12 {
        Ok(p)
    } else {
        Ok(p.into_iter().map(|x| x / sum).collect())
    }
}

/// Full transition table plus, per node, the index of the deepest key on its
/// suffix chain. Node 0 is the root (the empty key).
fn build_automaton(num_labels: usize, eos: LabelId, keys: &[Vec<LabelId>]) -> (Vec<u32>, Vec<u32>) {
    const NONE: u32 = u32::MAX;
    let mut children: Vec<Vec<u32>> = vec![vec![NONE; num_labels]];
    let mut key_at: Vec<Option<u32>> = vec![None];
    for (idx, key) in keys.iter().enumerate() {
        let mut node = 0usize;
        for &l in key {
            if children[node][l] == NONE {
                children.push(vec![NONE; num_labels]);
                key_at.push(None);
                children[node][l] = (children.len() - 1) as u32;
            }
            node = children[node][l] as usize;
        }
        key_at[node] = Some(idx as u32);
    }

    let n = children.len();
    let mut goto = vec![0u32; n * num_labels];
    let mut fail = vec![0u32; n];
    let mut resolved = vec![0u32; n];
    resolved[0] = key_at[0].expect("empty context present");

    let mut queue = VecDeque::new();
    for l in 0..num_labels {
        let child = children[0][l];
        if child != NONE && l != eos {
            goto[l] = child;
            fail[child as usize] = 0;
            queue.push_back(child as usize);
        } else {
            goto[l] = 0;
        }
    }
    while let Some(node) = queue.pop_front() {
        resolved[node] = key_at[node].unwrap_or(resolved[fail[node] as usize]);
        for l in 0..num_labels {
            let child = children[node][l];
            let via_fail = goto[fail[node] as usize * num_labels + l];
            if child != NONE && l != eos {
                goto[node * num_labels + l] = child;
                fail[child as usize] = via_fail;
                queue.push_back(child as usize);
            } else {
                goto[node * num_labels + l] = via_fail;
            }
        }
    }
    (goto, resolved)
}
