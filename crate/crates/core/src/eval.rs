//! Edit-distance error analysis and corpus statistics.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hyp::StopReason;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlignmentCounts {
    pub ins: usize,
    pub del: usize,
    pub sub: usize,
    pub hits: usize,
    pub ref_len: usize,
    pub hyp_len: usize,
}

impl AlignmentCounts {
    pub fn errors(&self) -> usize {
        self.ins + self.del + self.sub
    }

    /// Errors per reference label; an empty reference gives 0 without errors
    /// and infinity with.
    pub fn error_rate(&self) -> f64 {
        match (self.errors(), self.ref_len) {
            (0, _) => 0.0,
            (_, 0) => f64::INFINITY,
            (e, r) => e as f64 / r as f64,
        }
    }

    pub fn consistent(&self) -> bool {
        self.hits + self.sub + self.del == self.ref_len && self.hits + self.sub + self.ins == self.hyp_len
    }
}

impl std::ops::Add for AlignmentCounts {
    type Output = AlignmentCounts;

    fn add(self, o: Self) -> Self {
        AlignmentCounts {
            ins: self.ins + o.ins,
            del: self.del + o.del,
            sub: self.sub + o.sub,
            hits: self.hits + o.hits,
            ref_len: self.ref_len + o.ref_len,
            hyp_len: self.hyp_len + o.hyp_len,
        }
    }
}

impl std::iter::Sum for AlignmentCounts {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(AlignmentCounts::default(), |a, b| a + b)
    }
}

/// Minimal unit-cost alignment. Among minimal alignments the one with the
/// most substitutions (fewest insertions plus deletions) is taken, which
/// fixes all three counts.
pub fn align<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> AlignmentCounts {
    let (r, h) = (reference.len(), hypothesis.len());
    // cost = (edits, indels), compared lexicographically
    let mut prev: Vec<(usize, usize)> = (0..=h).map(|j| (j, j)).collect();
    let mut cur = vec![(0, 0); h + 1];
    for i in 1..=r {
        cur[0] = (i, i);
        for j in 1..=h {
            let diag = if reference[i - 1] == hypothesis[j - 1] {
                prev[j - 1]
            } else {
                (prev[j - 1].0 + 1, prev[j - 1].1)
            };
            let del = (prev[j].0 + 1, prev[j].1 + 1);
            let ins = (cur[j - 1].0 + 1, cur[j - 1].1 + 1);
            cur[j] = diag.min(del).min(ins);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    let (edits, indels) = prev[h];
    // ins - del = h - r and ins + del = indels
    let ins = ((indels + h) - r) / 2;
    let del = indels - ins;
    let sub = edits - indels;
    AlignmentCounts {
        ins,
        del,
        sub,
        hits: r - sub - del,
        ref_len: r,
        hyp_len: h,
    }
}

/// Decode outcome of one utterance, labels rendered without the end label.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UtteranceResult {
    pub id: String,
    /// `None` when the decode produced no ended hypothesis.
    pub hypothesis: Option<Vec<String>>,
    pub steps_taken: usize,
    pub stop_reason: Option<StopReason>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UtteranceScore {
    pub id: String,
    pub counts: AlignmentCounts,
    pub steps_taken: usize,
    pub stop_reason: Option<StopReason>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusReport {
    pub utterances: Vec<UtteranceScore>,
    pub totals: AlignmentCounts,
    #[serde(with = "crate::logprob::extended_f64")]
    pub wer: f64,
    pub avg_hyp_length: f64,
    pub avg_ref_length: f64,
    pub avg_steps: f64,
    pub stop_reasons: BTreeMap<String, usize>,
    /// Utterances without an ended hypothesis; scored as empty outputs.
    pub failed: Vec<String>,
}

/// Aggregates per-utterance results against references, ordered by id.
pub fn corpus_report(results: &[UtteranceResult], references: &[(String, Vec<String>)]) -> Result<CorpusReport> {
    let mut refs: BTreeMap<&str, &[String]> = BTreeMap::new();
    for (id, labels) in references {
        if refs.insert(id, labels).is_some() {
            return Err(Error::IdMismatch(format!("duplicate reference id {id:?}")));
        }
    }
    let mut by_id: BTreeMap<&str, &UtteranceResult> = BTreeMap::new();
    for r in results {
        if by_id.insert(&r.id, r).is_some() {
            return Err(Error::IdMismatch(format!("duplicate result id {:?}", r.id)));
        }
    }
    let ref_ids: BTreeSet<&str> = refs.keys().copied().collect();
    let res_ids: BTreeSet<&str> = by_id.keys().copied().collect();
    if ref_ids != res_ids {
        let no_result: Vec<&str> = ref_ids.difference(&res_ids).copied().collect();
        let no_ref: Vec<&str> = res_ids.difference(&ref_ids).copied().collect();
        return Err(Error::IdMismatch(format!(
            "missing results for {no_result:?}, missing references for {no_ref:?}"
        )));
    }

    let mut utterances = Vec::with_capacity(results.len());
    let mut stop_reasons = BTreeMap::new();
    let mut failed = Vec::new();
    for (id, r) in by_id {
        let hyp: &[String] = r.hypothesis.as_deref().unwrap_or(&[]);
        if r.hypothesis.is_none() {
            failed.push(id.to_string());
        }
        let key = r.stop_reason.map_or("failed", StopReason::as_str);
        *stop_reasons.entry(key.to_string()).or_insert(0) += 1;
        utterances.push(UtteranceScore {
            id: id.to_string(),
            counts: align(refs[id], hyp),
            steps_taken: r.steps_taken,
            stop_reason: r.stop_reason,
        });
    }
    let totals: AlignmentCounts = utterances.iter().map(|u| u.counts).sum();
    let n = utterances.len().max(1) as f64;
    Ok(CorpusReport {
        wer: totals.error_rate(),
        avg_hyp_length: totals.hyp_len as f64 / n,
        avg_ref_length: totals.ref_len as f64 / n,
        avg_steps: utterances.iter().map(|u| u.steps_taken as f64).sum::<f64>() / n,
        totals,
        utterances,
        stop_reasons,
        failed,
    })
}

/// Plain-text summary with one row per named report.
pub fn render_table(rows: &[(String, &CorpusReport)]) -> String {
    let name_w = rows.iter().map(|(n, _)| n.len()).max().unwrap_or(0).max("config".len());
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<name_w$}  {:>8}  {:>6}  {:>6}  {:>6}  {:>7}  {:>7}  {:>7}",
        "config", "WER[%]", "ins", "del", "sub", "len", "ref_len", "steps"
    );
    for (name, r) in rows {
        let _ = writeln!(
            out,
            "{:<name_w$}  {:>8.2}  {:>6}  {:>6}  {:>6}  {:>7.2}  {:>7.2}  {:>7.2}",
            name,
            100.0 * r.wer,
            r.totals.ins,
            r.totals.del,
            r.totals.sub,
            r.avg_hyp_length,
            r.avg_ref_length,
            r.avg_steps
        );
    }
    out
}
