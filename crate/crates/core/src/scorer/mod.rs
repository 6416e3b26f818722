//! Step-wise conditional label distributions.

mod biased;
mod fused;
mod table;

pub use biased::{make_length_biased_model, BiasedModelSpec};
pub use fused::{fused_step, FusedScorer, FusedState};
pub use table::{table_model_step, ModelFile, TableModel};

use crate::logprob::LogProb;
use crate::vocab::{LabelId, Vocabulary};

/// A locally normalised label model `p(a_n | a_0^{n-1})`.
///
/// The state is an explicit value owned by the caller, so one scorer can be
/// shared by concurrent decodes.
pub trait Scorer {
    type State: Clone + Send + Sync;

    fn vocab(&self) -> &Vocabulary;

    /// State for the empty history.
    fn initial_state(&self) -> Self::State;

    /// Consumes `last_label` (`None` at the sequence start), writes the
    /// distribution over the next label into `out` (one entry per label,
    /// end label included) and returns the advanced state.
    fn step(&self, state: &Self::State, last_label: Option<LabelId>, out: &mut Vec<LogProb>) -> Self::State;

    fn step_vec(&self, state: &Self::State, last_label: Option<LabelId>) -> (Vec<LogProb>, Self::State) {
        let mut out = Vec::with_capacity(self.vocab().len());
        let next = self.step(state, last_label, &mut out);
        (out, next)
    }

    /// Distribution after the full `history`, replayed from the initial state.
    fn distribution(&self, history: &[LabelId]) -> Vec<LogProb> {
        let mut out = Vec::with_capacity(self.vocab().len());
        let mut state = self.initial_state();
        let mut last = None;
        for &label in history {
            state = self.step(&state, last, &mut out);
            last = Some(label);
        }
        self.step(&state, last, &mut out);
        out
    }
}

impl<S: Scorer + ?Sized> Scorer for &S {
    type State = S::State;

    fn vocab(&self) -> &Vocabulary {
        (**self).vocab()
    }

    fn initial_state(&self) -> Self::State {
        (**self).initial_state()
    }

    fn step(&self, state: &Self::State, last_label: Option<LabelId>, out: &mut Vec<LogProb>) -> Self::State {
        (**self).step(state, last_label, out)
    }
}
