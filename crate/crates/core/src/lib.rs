//! Label-synchronous beam search with explicit length modelling.

pub mod cli;
pub mod dataset;
pub mod decode;
pub mod error;
pub mod eval;
pub mod hyp;
pub mod logprob;
pub mod oracle;
pub mod scorer;
pub mod search;
pub mod suite;
pub mod vocab;

pub use error::{Error, Result};
pub use hyp::{map_decision, DecodeResult, EndedHypothesis, KBestStore, StopReason};
pub use logprob::{log_sum_exp, LogProb};
pub use vocab::{LabelId, Vocabulary};
