//! Shared label-request board between the training loop and a human.
//!
//! The engine posts requests and blocks on them; any number of other threads
//! (the HTTP service) list and resolve them. Each request resolves exactly
//! once, by a label, a decline or the engine's timeout.

use std::collections::BTreeMap;
use std::sync::{Condvar, Mutex, MutexGuard};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::Sample;

/// How a UI should draw a request's payload.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RenderHint {
    Point2d,
    DigitImage,
    Trajectory,
}

/// An adversary waiting for a label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRequest {
    pub root_id: u64,
    pub x_prime: Vec<f64>,
    pub root: Sample,
    pub delta: f64,
    pub hint: RenderHint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "class", rename_all = "snake_case")]
pub enum Resolution {
    Labeled(usize),
    Declined,
    TimedOut,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PendingView {
    pub id: u64,
    pub hint: RenderHint,
    /// The adversary.
    pub payload: Vec<f64>,
    pub root: Vec<f64>,
    pub root_label: usize,
    pub delta: f64,
    /// Milliseconds since the Unix epoch.
    pub enqueued_ms: u64,
}

/// Live training counters shown to the labeler.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingStatus {
    pub epoch: usize,
    pub round: usize,
    pub queue_depth: usize,
    pub d0_size: usize,
    pub d_adv_size: usize,
    pub adversaries_found: usize,
    pub human_labeled: usize,
    pub assumed: usize,
    pub true_adversary_fraction: Option<f64>,
    pub finished: bool,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BoardError {
    #[error("no request with id {0}")]
    NotFound(u64),
    #[error("class {class} out of range for {classes} classes")]
    BadClass { class: usize, classes: usize },
    #[error("request {0} is already resolved")]
    AlreadyResolved(u64),
}

struct Slot {
    view: PendingView,
    resolution: Option<Resolution>,
}

#[derive(Default)]
struct Inner {
    next_id: u64,
    slots: BTreeMap<u64, Slot>,
    status: TrainingStatus,
}

pub struct LabelBoard {
    classes: usize,
    inner: Mutex<Inner>,
    changed: Condvar,
}

impl LabelBoard {
    pub fn new(classes: usize) -> Self {
        Self {
            classes,
            inner: Mutex::new(Inner::default()),
            changed: Condvar::new(),
        }
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    fn lock(&self) -> MutexGuard<'_, Inner> {
        // A panicking holder cannot leave a slot half-written, so keep going.
        self.inner.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn post(&self, request: &LabelRequest) -> u64 {
        let enqueued_ms = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_millis() as u64);
        let mut g = self.lock();
        let id = g.next_id;
        g.next_id += 1;
        g.slots.insert(
            id,
            Slot {
                view: PendingView {
                    id,
                    hint: request.hint,
                    payload: request.x_prime.clone(),
                    root: request.root.x.clone(),
                    root_label: request.root.y,
                    delta: request.delta,
                    enqueued_ms,
                },
                resolution: None,
            },
        );
        id
    }

    /// Unresolved requests, oldest first.
    pub fn pending(&self) -> Vec<PendingView> {
        self.lock()
            .slots
            .values()
            .filter(|s| s.resolution.is_none())
            .map(|s| s.view.clone())
            .collect()
    }

    pub fn resolution(&self, id: u64) -> Option<Resolution> {
        self.lock().slots.get(&id).and_then(|s| s.resolution)
    }

    fn resolve(&self, id: u64, r: Resolution) -> Result<(), BoardError> {
        let mut g = self.lock();
        let slot = g.slots.get_mut(&id).ok_or(BoardError::NotFound(id))?;
        if slot.resolution.is_some() {
            return Err(BoardError::AlreadyResolved(id));
        }
        slot.resolution = Some(r);
        drop(g);
        self.changed.notify_all();
        Ok(())
    }

    pub fn label(&self, id: u64, class: usize) -> Result<(), BoardError> {
        if class >= self.classes {
            // An unknown id is reported first so clients can tell stale items apart.
            if !self.lock().slots.contains_key(&id) {
                return Err(BoardError::NotFound(id));
            }
            return Err(BoardError::BadClass {
                class,
                classes: self.classes,
            });
        }
        self.resolve(id, Resolution::Labeled(class))
    }

    pub fn decline(&self, id: u64) -> Result<(), BoardError> {
        self.resolve(id, Resolution::Declined)
    }

    pub fn expire(&self, id: u64) -> Result<(), BoardError> {
        self.resolve(id, Resolution::TimedOut)
    }

    /// Block until every request in `ids` is resolved or `timeout` passes;
    /// whatever is still open then times out.
    pub fn wait_all(&self, ids: &[u64], timeout: Duration) -> Vec<Resolution> {
        let deadline = Instant::now() + timeout;
        let mut g = self.lock();
        loop {
            let open = ids
                .iter()
                .any(|id| g.slots.get(id).is_some_and(|s| s.resolution.is_none()));
            let now = Instant::now();
            if !open || now >= deadline {
                break;
            }
            g = self
                .changed
                .wait_timeout(g, deadline - now)
                .unwrap_or_else(|e| e.into_inner())
                .0;
        }
        for id in ids {
            if let Some(s) = g.slots.get_mut(id) {
                s.resolution.get_or_insert(Resolution::TimedOut);
            }
        }
        ids.iter()
            .map(|id| {
                g.slots
                    .get(id)
                    .and_then(|s| s.resolution)
                    .unwrap_or(Resolution::TimedOut)
            })
            .collect()
    }

    pub fn update_status(&self, f: impl FnOnce(&mut TrainingStatus)) {
        f(&mut self.lock().status);
    }

    /// Latest status, with the queue depth taken from the board itself.
    pub fn status(&self) -> TrainingStatus {
        let g = self.lock();
        let mut s = g.status.clone();
        s.queue_depth = g.slots.values().filter(|s| s.resolution.is_none()).count();
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    fn request(k: usize) -> LabelRequest {
        LabelRequest {
            root_id: k as u64,
            x_prime: vec![0.1 * k as f64, 0.2],
            root: Sample::new(vec![0.0, 0.2], 1),
            delta: 0.1,
            hint: RenderHint::Point2d,
        }
    }

    #[test]
    fn label_then_conflict() {
        let b = LabelBoard::new(2);
        let id = b.post(&request(1));
        assert_eq!(b.pending().len(), 1);
        assert_eq!(b.label(id, 5), Err(BoardError::BadClass { class: 5, classes: 2 }));
        b.label(id, 0).unwrap();
        assert!(b.pending().is_empty());
        assert_eq!(b.label(id, 1), Err(BoardError::AlreadyResolved(id)));
        assert_eq!(b.decline(id), Err(BoardError::AlreadyResolved(id)));
        assert_eq!(b.decline(99), Err(BoardError::NotFound(99)));
        assert_eq!(b.label(99, 7), Err(BoardError::NotFound(99)));
    }

    #[test]
    fn pending_is_enqueue_ordered() {
        let b = LabelBoard::new(2);
        let ids: Vec<u64> = (0..3).map(|k| b.post(&request(k))).collect();
        b.decline(ids[1]).unwrap();
        let p: Vec<u64> = b.pending().iter().map(|v| v.id).collect();
        assert_eq!(p, vec![ids[0], ids[2]]);
        assert_eq!(b.status().queue_depth, 2);
    }

    #[test]
    fn wait_times_out_and_blocks_late_answers() {
        let b = LabelBoard::new(2);
        let id = b.post(&request(0));
        let r = b.wait_all(&[id], Duration::from_millis(20));
        assert_eq!(r, vec![Resolution::TimedOut]);
        assert_eq!(b.decline(id), Err(BoardError::AlreadyResolved(id)));
    }

    #[test]
    fn wait_wakes_on_answer_from_another_thread() {
        let b = Arc::new(LabelBoard::new(3));
        let ids = vec![b.post(&request(0)), b.post(&request(1))];
        let b2 = b.clone();
        let ids2 = ids.clone();
        let t = std::thread::spawn(move || {
            b2.label(ids2[0], 2).unwrap();
            b2.decline(ids2[1]).unwrap();
        });
        let r = b.wait_all(&ids, Duration::from_secs(10));
        t.join().unwrap();
        assert_eq!(r, vec![Resolution::Labeled(2), Resolution::Declined]);
    }
}
