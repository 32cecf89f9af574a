use std::sync::Arc;
use std::time::Duration;

use super::board::{LabelBoard, LabelRequest, Resolution, TrainingStatus};
use crate::datasets::Ground2D;

/// Decides the labels of one round's human-path adversaries.
pub trait Labeler {
    /// One resolution per request, in order. May block.
    fn label_batch(&mut self, requests: &[LabelRequest]) -> Vec<Resolution>;

    /// Progress snapshot after every round and at the end of training.
    fn observe(&mut self, _status: &TrainingStatus) {}
}

/// Stands in for a human with a known labeling function.
pub struct OracleLabeler {
    f: Box<dyn Fn(&LabelRequest) -> usize + Send>,
}

impl OracleLabeler {
    pub fn new(f: impl Fn(&LabelRequest) -> usize + Send + 'static) -> Self {
        Self { f: Box::new(f) }
    }

    /// Ground truth of the 2D task.
    pub fn ground2d(truth: Ground2D) -> Self {
        Self::new(move |r| truth.label(&r.x_prime))
    }

    /// Every adversary keeps its root's class.
    pub fn same_as_root() -> Self {
        Self::new(|r| r.root.y)
    }
}

impl Labeler for OracleLabeler {
    fn label_batch(&mut self, requests: &[LabelRequest]) -> Vec<Resolution> {
        requests.iter().map(|r| Resolution::Labeled((self.f)(r))).collect()
    }
}

/// Declines everything, so every adversary takes its root's label in D_adv.
pub struct AlwaysAssume;

impl Labeler for AlwaysAssume {
    fn label_batch(&mut self, requests: &[LabelRequest]) -> Vec<Resolution> {
        vec![Resolution::Declined; requests.len()]
    }
}

/// Posts requests to a [`LabelBoard`] and waits for a person to answer.
pub struct HumanService {
    pub board: Arc<LabelBoard>,
    pub timeout: Duration,
}

impl HumanService {
    pub fn new(board: Arc<LabelBoard>) -> Self {
        Self {
            board,
            timeout: Duration::from_secs(120),
        }
    }
}

impl Labeler for HumanService {
    fn label_batch(&mut self, requests: &[LabelRequest]) -> Vec<Resolution> {
        if requests.is_empty() {
            return Vec::new();
        }
        let ids: Vec<u64> = requests.iter().map(|r| self.board.post(r)).collect();
        self.board.wait_all(&ids, self.timeout)
    }

    fn observe(&mut self, status: &TrainingStatus) {
        self.board.update_status(|s| *s = status.clone());
    }
}
