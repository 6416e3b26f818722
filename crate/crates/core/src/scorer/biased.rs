use crate::error::{Error, Result};
use crate::scorer::TableModel;
use crate::vocab::{LabelId, Vocabulary};

/// Parameters of a model that prefers short outputs.
///
/// Along the target prefix the next target label gets `on_target_mass` (ρ)
/// and the end label gets `eos_leak` (ε). After the full target the end label
/// gets `1 - ε`. Off the target, every context ends with probability ε.
///
/// Closed forms: `q("$") = ε` and `q(target $) = ρ^L (1 - ε)`, so the empty
/// output beats the target whenever `ε > ρ^L (1 - ε)`.
#[derive(Clone, Debug, PartialEq)]
pub struct BiasedModelSpec {
    pub vocab: Vocabulary,
    pub target: Vec<LabelId>,
    pub eos_leak: f64,
    pub on_target_mass: f64,
}

impl BiasedModelSpec {
    pub fn target_posterior(&self) -> f64 {
        self.on_target_mass.powi(self.target.len() as i32) * (1.0 - self.eos_leak)
    }

    pub fn empty_posterior(&self) -> f64 {
        self.eos_leak
    }
}

pub fn make_length_biased_model(spec: &BiasedModelSpec) -> Result<TableModel> {
    let vocab = &spec.vocab;
    let eos = vocab.eos();
    let (eps, rho) = (spec.eos_leak, spec.on_target_mass);
    let infeasible = |m: String| Err(Error::InfeasibleModel(m));
    if spec.target.is_empty() {
        return infeasible("target must be nonempty".into());
    }
    if spec.target.iter().any(|&l| l == eos || l >= vocab.len()) {
        return infeasible("target contains the end label or an unknown label".into());
    }
    if !(0.0..1.0).contains(&eps) {
        return infeasible(format!("eos_leak {eps} outside [0, 1)"));
    }
    if !(rho > 0.0 && rho <= 1.0) {
        return infeasible(format!("on_target_mass {rho} outside (0, 1]"));
    }
    let rest = 1.0 - rho - eps;
    if rest < -1e-12 {
        return infeasible(format!("eos_leak + on_target_mass = {} exceeds 1", eps + rho));
    }
    let rest = rest.max(0.0);
    let nv = vocab.len() - 1;
    if nv == 1 && rest > 1e-12 {
        return infeasible(format!("no other label to carry the remaining mass {rest}"));
    }

    let mut contexts: Vec<(Vec<LabelId>, Vec<f64>)> = Vec::new();
    for (i, &next) in spec.target.iter().enumerate() {
        let mut p = vec![0.0; vocab.len()];
        for l in vocab.non_eos() {
            p[l] = if nv > 1 { rest / (nv - 1) as f64 } else { 0.0 };
        }
        p[next] = rho;
        p[eos] = eps;
        contexts.push((spec.target[..i].to_vec(), p));
    }
    let mut done = vec![eps / nv as f64; vocab.len()];
    done[eos] = 1.0 - eps;
    contexts.push((spec.target.clone(), done));

    // off-target contexts keep ending with probability ε
    let mut off = vec![(1.0 - eps) / nv as f64; vocab.len()];
    off[eos] = eps;
    for l in vocab.non_eos() {
        if !contexts.iter().any(|(k, _)| k.as_slice() == [l]) {
            contexts.push((vec![l], off.clone()));
        }
    }
    TableModel::new(vocab.clone(), contexts)
}
