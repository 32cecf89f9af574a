use serde::{Deserialize, Serialize};

use super::board::{LabelRequest, RenderHint, Resolution};
use super::labeler::Labeler;
use super::queue::{QueueEntry, VerifyQueue};
use super::sets::{Entry, LabeledSet, Provenance};
use crate::nn::Sample;
use crate::verifier::{AdversaryResult, VerifyOutcome};

/// Per-round settings the state machine needs.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundPolicy {
    pub eps: f64,
    pub classes: usize,
    /// Re-queue the root after an assumed-label adversary too.
    pub requeue_assumed: bool,
    pub hint: RenderHint,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub epoch: usize,
    pub popped: usize,
    pub found: usize,
    pub robust: usize,
    pub misclassified: usize,
    /// Searches that ran out of budget without any adversary.
    pub timeouts: usize,
    pub human_requests: usize,
    pub human_labeled: usize,
    pub declined: usize,
    pub timed_out: usize,
    /// Adversaries added to D_adv under their root's label.
    pub assumed: usize,
    /// Human labels equal to the root label.
    pub true_adversaries: usize,
    pub true_adversary_fraction: Option<f64>,
    pub d0_size: usize,
    pub d_adv_size: usize,
    pub mean_delta: Option<f64>,
    pub verify_ms: f64,
    pub ensemble_ms: f64,
    pub human_ms: f64,
}

/// D0, D_adv and Qv, mutated only through rounds.
#[derive(Default)]
pub struct EngineState {
    pub(crate) d0: LabeledSet,
    pub(crate) d_adv: LabeledSet,
    pub(crate) queue: VerifyQueue,
    next_id: u64,
    rounds: usize,
}

impl EngineState {
    /// Original data at level 0, all queued with unknown radius.
    pub fn new(initial: &[Sample]) -> Self {
        let mut s = Self::default();
        for x in initial {
            let id = s.fresh_id();
            s.d0.push(Entry {
                id,
                sample: x.clone(),
                provenance: Provenance::Original,
                level: 0,
                parent: None,
            });
            s.queue.push(id, 0, None);
        }
        s
    }

    fn fresh_id(&mut self) -> u64 {
        let id = self.next_id;
        self.next_id += 1;
        id
    }

    pub fn d0(&self) -> &LabeledSet {
        &self.d0
    }

    pub fn d_adv(&self) -> &LabeledSet {
        &self.d_adv
    }

    pub fn queue(&self) -> &VerifyQueue {
        &self.queue
    }

    pub fn rounds(&self) -> usize {
        self.rounds
    }

    /// The training set D0 ∪ D_adv, D0 first.
    pub fn training_samples(&self) -> Vec<&Sample> {
        self.d0.samples().chain(self.d_adv.samples()).collect()
    }

    /// Clear D_adv and pop up to `c` roots.
    pub fn begin_round(&mut self, c: usize) -> Vec<(QueueEntry, Sample)> {
        self.d_adv.clear();
        let mut out = Vec::with_capacity(c.min(self.queue.len()));
        while out.len() < c {
            let Some(e) = self.queue.pop() else { break };
            let sample = self.d0.get(e.id).expect("queue references D0").sample.clone();
            out.push((e, sample));
        }
        out
    }

    /// Route one round's outcomes. `outcomes` and `needs_human` align with
    /// `popped`; `needs_human` is read only for roots with an adversary.
    /// Queue pushes happen after every root is routed, so nothing is verified
    /// twice in one round.
    pub fn finish_round(
        &mut self,
        epoch: usize,
        popped: &[(QueueEntry, Sample)],
        outcomes: &[VerifyOutcome],
        needs_human: &[bool],
        labeler: &mut dyn Labeler,
        policy: &RoundPolicy,
    ) -> RoundRecord {
        assert_eq!(popped.len(), outcomes.len());
        assert_eq!(popped.len(), needs_human.len());
        let mut rec = RoundRecord {
            round: self.rounds,
            epoch,
            popped: popped.len(),
            ..RoundRecord::default()
        };
        self.rounds += 1;
        let mut pushes: Vec<(u64, u32, Option<f64>)> = Vec::new();
        let mut human: Vec<(&QueueEntry, &AdversaryResult)> = Vec::new();
        let mut requests = Vec::new();
        let mut deltas = Vec::new();

        for (((entry, root), outcome), &ask) in popped.iter().zip(outcomes).zip(needs_human) {
            match outcome {
                VerifyOutcome::RobustWithin { .. } => {
                    rec.robust += 1;
                    pushes.push((entry.id, entry.level, Some(policy.eps)));
                }
                VerifyOutcome::RootMisclassified { .. } => {
                    rec.misclassified += 1;
                    pushes.push((entry.id, entry.level, Some(0.0)));
                }
                VerifyOutcome::Timeout {
                    best: None,
                    lower_bound,
                } => {
                    rec.timeouts += 1;
                    pushes.push((entry.id, entry.level, Some(lower_bound.clamp(0.0, policy.eps))));
                }
                VerifyOutcome::Found(adv) | VerifyOutcome::Timeout { best: Some(adv), .. } => {
                    rec.found += 1;
                    deltas.push(adv.delta);
                    if ask {
                        requests.push(LabelRequest {
                            root_id: entry.id,
                            x_prime: adv.x_prime.clone(),
                            root: root.clone(),
                            delta: adv.delta,
                            hint: policy.hint,
                        });
                        human.push((entry, adv));
                    } else {
                        self.assume(entry, root, adv, policy, &mut pushes);
                        rec.assumed += 1;
                    }
                }
            }
        }

        rec.human_requests = requests.len();
        let clock = crate::util::Stopwatch::start();
        let answers = labeler.label_batch(&requests);
        rec.human_ms = clock.elapsed_ms();
        assert_eq!(answers.len(), requests.len(), "labeler must answer every request");
        for (((entry, adv), req), answer) in human.into_iter().zip(&requests).zip(answers) {
            match answer {
                Resolution::Labeled(class) if class < policy.classes => {
                    rec.human_labeled += 1;
                    if class == req.root.y {
                        rec.true_adversaries += 1;
                    }
                    let id = self.fresh_id();
                    self.d0.push(Entry {
                        id,
                        sample: Sample::new(adv.x_prime.clone(), class),
                        provenance: Provenance::HumanLabeled,
                        level: entry.level + 1,
                        parent: Some(entry.id),
                    });
                    pushes.push((entry.id, entry.level, Some(adv.delta)));
                    pushes.push((id, entry.level + 1, None));
                }
                other => {
                    if matches!(other, Resolution::TimedOut) {
                        rec.timed_out += 1;
                    } else {
                        rec.declined += 1;
                    }
                    self.assume(entry, &req.root, adv, policy, &mut pushes);
                    rec.assumed += 1;
                }
            }
        }

        for (id, level, delta) in pushes {
            self.queue.push(id, level, delta);
        }
        rec.true_adversary_fraction =
            (rec.human_labeled > 0).then(|| rec.true_adversaries as f64 / rec.human_labeled as f64);
        rec.mean_delta = (!deltas.is_empty()).then(|| deltas.iter().sum::<f64>() / deltas.len() as f64);
        rec.d0_size = self.d0.len();
        rec.d_adv_size = self.d_adv.len();
        rec
    }

    fn assume(
        &mut self,
        entry: &QueueEntry,
        root: &Sample,
        adv: &AdversaryResult,
        policy: &RoundPolicy,
        pushes: &mut Vec<(u64, u32, Option<f64>)>,
    ) {
        let id = self.fresh_id();
        self.d_adv.push(Entry {
            id,
            sample: Sample::new(adv.x_prime.clone(), root.y),
            provenance: Provenance::AssumedLabel,
            level: entry.level + 1,
            parent: Some(entry.id),
        });
        if policy.requeue_assumed {
            pushes.push((entry.id, entry.level, Some(adv.delta)));
        }
    }

    /// Structural invariants of the two sets and the queue.
    pub fn check_invariants(&self) -> Result<(), String> {
        for e in self.d0.iter() {
            if e.provenance == Provenance::AssumedLabel {
                return Err(format!("D0 entry {} has assumed provenance", e.id));
            }
            if self.d_adv.contains(e.id) {
                return Err(format!("id {} in both D0 and D_adv", e.id));
            }
        }
        for e in self.d_adv.iter() {
            if e.provenance != Provenance::AssumedLabel {
                return Err(format!("D_adv entry {} has provenance {:?}", e.id, e.provenance));
            }
        }
        for q in self.queue.iter() {
            let e = self
                .d0
                .get(q.id)
                .ok_or_else(|| format!("queued id {} not in D0", q.id))?;
            if e.level != q.level {
                return Err(format!(
                    "queued id {} at level {} but stored at {}",
                    q.id, q.level, e.level
                ));
            }
        }
        for e in self.d0.iter().chain(self.d_adv.iter()) {
            match (e.provenance, e.parent) {
                (Provenance::Original, None) if e.level == 0 => {}
                (Provenance::Original, _) => return Err(format!("original entry {} has a parent or level", e.id)),
                (_, None) => return Err(format!("adversary {} has no root", e.id)),
                (_, Some(p)) => {
                    let root = self
                        .d0
                        .get(p)
                        .ok_or_else(|| format!("root {p} of {} not in D0", e.id))?;
                    if e.level != root.level + 1 {
                        return Err(format!(
                            "adversary {} at level {} under root level {}",
                            e.id, e.level, root.level
                        ));
                    }
                }
            }
        }
        Ok(())
    }
}
