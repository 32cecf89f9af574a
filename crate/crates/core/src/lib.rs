//! Iterative adversarial data augmentation for small ReLU classifiers.
//!
//! Training alternates gradient steps with exact verification: the verifier
//! finds the closest input that flips a training point's label, a labeler
//! decides that input's true class, and the labeled point joins the training
//! set.

pub mod checkpoint;
pub mod datasets;
pub mod engine;
pub mod error;
pub mod eval;
pub mod lp;
pub mod nn;
pub mod robust;
pub mod util;
pub mod verifier;

pub use error::{ConfigError, DatasetError, EngineError, ExperimentError, NnError, VerifyError};
pub use nn::{ModelParams, Sample};
pub use verifier::{min_adversary, AdversaryResult, InputBox, VerifierConfig, VerifyOutcome};
