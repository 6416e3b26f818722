use std::collections::HashMap;

use crate::error::{Error, Result};

/// Index into a [`Vocabulary`].
pub type LabelId = usize;

/// Output labels `V ∪ {$}`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    labels: Vec<String>,
    eos: LabelId,
    index: HashMap<String, LabelId>,
}

impl Vocabulary {
    pub fn new(labels: Vec<String>, eos: LabelId) -> Result<Self> {
        if labels.len() < 2 {
            return Err(Error::InvalidVocabulary(format!(
                "need at least one label besides the end label, got {} labels",
                labels.len()
            )));
        }
        if eos >= labels.len() {
            return Err(Error::InvalidVocabulary(format!(
                "end label index {eos} out of range for {} labels",
                labels.len()
            )));
        }
        let mut index = HashMap::with_capacity(labels.len());
        for (i, label) in labels.iter().enumerate() {
            if label.is_empty() || label.chars().any(char::is_whitespace) {
                return Err(Error::InvalidVocabulary(format!(
                    "label {label:?} must be non-empty and contain no whitespace"
                )));
            }
            if index.insert(label.clone(), i).is_some() {
                return Err(Error::InvalidVocabulary(format!("duplicate label {label:?}")));
            }
        }
        Ok(Vocabulary { labels, eos, index })
    }

    /// Vocabulary of `labels` followed by `eos` as the last entry, unless
    /// `eos` is already one of `labels`.
    pub fn with_eos(labels: Vec<String>, eos: &str) -> Result<Self> {
        match labels.iter().position(|l| l == eos) {
            Some(i) => Vocabulary::new(labels, i),
            None => {
                let mut labels = labels;
                labels.push(eos.to_string());
                let eos = labels.len() - 1;
                Vocabulary::new(labels, eos)
            }
        }
    }

    /// `n` labels named `a`, `b`, ... (then `l26`, `l27`, ...) plus `<eos>`.
    pub fn alphabetic(n: usize) -> Result<Self> {
        let labels = (0..n)
            .map(|i| {
                if i < 26 {
                    char::from(b'a' + i as u8).to_string()
                } else {
                    format!("l{i}")
                }
            })
            .collect();
        Vocabulary::with_eos(labels, "<eos>")
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn eos(&self) -> LabelId {
        self.eos
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Label ids other than the end label, in vocabulary order.
    pub fn non_eos(&self) -> impl Iterator<Item = LabelId> + '_ {
        (0..self.labels.len()).filter(move |&i| i != self.eos)
    }

    pub fn label(&self, id: LabelId) -> &str {
        &self.labels[id]
    }

    pub fn id(&self, label: &str) -> Option<LabelId> {
        self.index.get(label).copied()
    }

    pub fn ids<S: AsRef<str>>(&self, labels: &[S]) -> Result<Vec<LabelId>> {
        labels
            .iter()
            .map(|l| {
                self.id(l.as_ref())
                    .ok_or_else(|| Error::InvalidVocabulary(format!("unknown label {:?}", l.as_ref())))
            })
            .collect()
    }

    pub fn render(&self, ids: &[LabelId]) -> Vec<String> {
        ids.iter().map(|&i| self.labels[i].clone()).collect()
    }

    /// Space-joined rendering, `$` kept as the end label's own name.
    pub fn join(&self, ids: &[LabelId]) -> String {
        self.render(ids).join(" ")
    }
}
