use serde::{Deserialize, Serialize};

use crate::nn::ModelParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchedulerMode {
    /// Distance check plus ensemble agreement.
    Gate,
    AlwaysHuman,
    NeverHuman,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchedulerConfig {
    /// Adversaries farther than this from their root always go to a human.
    pub d: f64,
    /// Members of the agreement ensemble; 0 turns the agreement check off.
    pub ensemble_size: usize,
    /// Training epochs for each ensemble member, retrained every round.
    pub ensemble_epochs: usize,
    pub mode: SchedulerMode,
}

/// Whether an adversary needs a human label: it lies farther than `d` from
/// its root, or every ensemble member predicts the same class for it.
pub fn scheduler_decides(delta: f64, adversary: &[f64], ensemble: &[ModelParams], d: f64) -> bool {
    if delta > d {
        return true;
    }
    let mut classes = ensemble.iter().map(|m| m.predict(adversary).ok());
    match classes.next() {
        Some(Some(first)) => classes.all(|c| c == Some(first)),
        _ => false,
    }
}
