use crate::error::{Error, Result};
use crate::logprob::LogProb;
use crate::scorer::Scorer;
use crate::vocab::{LabelId, Vocabulary};

/// Shallow fusion: `log p_am + alpha * log p_lm` per label, not renormalised.
#[derive(Clone, Debug)]
pub struct FusedScorer<A, L = A> {
    acoustic: A,
    lm: Option<L>,
    alpha: f64,
}

impl<A: Scorer, L: Scorer> FusedScorer<A, L> {
    pub fn new(acoustic: A, lm: Option<L>, alpha: f64) -> Result<Self> {
        if !alpha.is_finite() || alpha < 0.0 {
            return Err(Error::Config(format!("LM scale must be a nonnegative number, got {alpha}")));
        }
        if let Some(lm) = &lm {
            if lm.vocab() != acoustic.vocab() {
                return Err(Error::VocabularyMismatch);
            }
        }
        Ok(FusedScorer { acoustic, lm, alpha })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn acoustic(&self) -> &A {
        &self.acoustic
    }

    pub fn lm(&self) -> Option<&L> {
        self.lm.as_ref()
    }

    fn lm_active(&self) -> Option<&L> {
        // alpha = 0 must reproduce the acoustic scores bit for bit; 0 * -inf is NaN
        self.lm.as_ref().filter(|_| self.alpha > 0.0)
    }
}

impl<A: Scorer> FusedScorer<A, A> {
    pub fn acoustic_only(acoustic: A) -> Self {
        FusedScorer {
            acoustic,
            lm: None,
            alpha: 0.0,
        }
    }
}

/// Acoustic state plus the LM state (absent when the LM is off).
pub type FusedState<A, L> = (<A as Scorer>::State, Option<<L as Scorer>::State>);

impl<A: Scorer, L: Scorer> Scorer for FusedScorer<A, L> {
    type State = FusedState<A, L>;

    fn vocab(&self) -> &Vocabulary {
        self.acoustic.vocab()
    }

    fn initial_state(&self) -> Self::State {
        (self.acoustic.initial_state(), self.lm_active().map(Scorer::initial_state))
    }

    fn step(&self, state: &Self::State, last_label: Option<LabelId>, out: &mut Vec<LogProb>) -> Self::State {
        let am_state = self.acoustic.step(&state.0, last_label, out);
        let lm_state = match (self.lm_active(), &state.1) {
            (Some(lm), Some(lm_state)) => {
                let mut lm_out = Vec::with_capacity(out.len());
                let next = lm.step(lm_state, last_label, &mut lm_out);
                for (am, l) in out.iter_mut().zip(&lm_out) {
                    *am += LogProb(self.alpha * l.0);
                }
                Some(next)
            }
            _ => None,
        };
        (am_state, lm_state)
    }
}

/// Vector form of one fused step.
pub fn fused_step<A: Scorer, L: Scorer>(
    scorer: &FusedScorer<A, L>,
    state: &FusedState<A, L>,
    last_label: Option<LabelId>,
) -> (Vec<LogProb>, FusedState<A, L>) {
    scorer.step_vec(state, last_label)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scorer::TableModel;
    use proptest::prelude::*;

    fn vocab3() -> Vocabulary {
        Vocabulary::with_eos(vec!["a".into(), "b".into()], "$").unwrap()
    }

    fn single(p: [f64; 3]) -> TableModel {
        TableModel::new(vocab3(), vec![(vec![], p.to_vec())]).unwrap()
    }

    #[test]
    fn product_of_uniforms() {
        let f = FusedScorer::new(TableModel::uniform(vocab3()), Some(TableModel::uniform(vocab3())), 1.0).unwrap();
        let (d, _) = fused_step(&f, &f.initial_state(), None);
        for x in d {
            assert!((x.0 - (1.0f64 / 9.0).ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn half_scaled_lm() {
        let f = FusedScorer::new(single([0.5, 0.3, 0.2]), Some(single([0.2, 0.3, 0.5])), 0.5).unwrap();
        let (d, _) = fused_step(&f, &f.initial_state(), None);
        // linear-domain oracle: 0.5 * sqrt(0.2)
        let expected = (0.5 * 0.2f64.sqrt()).ln();
        assert!((d[0].0 - expected).abs() < 1e-12);
        assert!((d[0].0 - (-1.4978)).abs() < 1e-4);
    }

    #[test]
    fn zero_scale_keeps_acoustic_exactly() {
        let am = single([0.5, 0.3, 0.2]);
        let lm = single([1.0, 0.0, 0.0]);
        let f = FusedScorer::new(am.clone(), Some(lm), 0.0).unwrap();
        let (d, _) = fused_step(&f, &f.initial_state(), None);
        assert_eq!(d, am.lookup(&[]));
    }

    #[test]
    fn zero_lm_probability_is_absorbing() {
        let f = FusedScorer::new(single([0.5, 0.3, 0.2]), Some(single([1.0, 0.0, 0.0])), 0.3).unwrap();
        let (d, _) = fused_step(&f, &f.initial_state(), None);
        assert!(d[1].is_zero() && d[2].is_zero());
    }

    #[test]
    fn construction_errors() {
        let other = TableModel::uniform(Vocabulary::alphabetic(3).unwrap());
        let err = FusedScorer::new(TableModel::uniform(vocab3()), Some(other), 1.0).unwrap_err();
        assert!(matches!(err, Error::VocabularyMismatch));
        assert!(FusedScorer::<TableModel>::new(TableModel::uniform(vocab3()), None, -1.0).is_err());
        assert!(FusedScorer::<TableModel>::new(TableModel::uniform(vocab3()), None, f64::NAN).is_err());
    }

    fn context_model(bias: f64) -> TableModel {
        TableModel::new(
            vocab3(),
            vec![
                (vec![], vec![0.2, 0.3, 0.5]),
                (vec![0], vec![bias, 0.9 - bias, 0.1]),
                (vec![1, 0], vec![0.1, 0.1, 0.8]),
            ],
        )
        .unwrap()
    }

    proptest! {
        #[test]
        fn zero_scale_is_the_acoustic_model(history in proptest::collection::vec(0usize..2, 0..8)) {
            let am = context_model(0.6);
            let f = FusedScorer::new(am.clone(), Some(context_model(0.05)), 0.0).unwrap();
            prop_assert_eq!(f.distribution(&history), am.distribution(&history));
        }

        #[test]
        fn fused_scores_add_up(history in proptest::collection::vec(0usize..2, 0..8), alpha in 0.01f64..2.0) {
            let am = context_model(0.6);
            let lm = context_model(0.05);
            let f = FusedScorer::new(am.clone(), Some(lm.clone()), alpha).unwrap();
            let fused = f.distribution(&history);
            for ((x, a), l) in fused.iter().zip(am.lookup(&history)).zip(lm.lookup(&history)) {
                prop_assert!((x.0 - (a.0 + alpha * l.0)).abs() < 1e-12);
            }
        }
    }
}
