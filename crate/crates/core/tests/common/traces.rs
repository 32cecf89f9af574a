//! Generated round traces and the state-machine properties checked on them.

use std::collections::{HashMap, HashSet};

use iada_core::engine::{
    BoardError, EngineState, LabelBoard, LabelRequest, Labeler, Provenance, RenderHint, Resolution, RoundPolicy,
    VerifyQueue,
};
use iada_core::{AdversaryResult, Sample, VerifyOutcome};
use proptest::prelude::*;

pub const CLASSES: usize = 3;

#[derive(Debug, Clone)]
pub enum Kind {
    Robust,
    Misclassified,
    TimeoutEmpty(f64),
    Found(f64),
    TimeoutBest(f64),
}

#[derive(Debug, Clone)]
pub struct Step {
    kind: Kind,
    ask: bool,
    answer: Resolution,
}

pub fn kind() -> impl Strategy<Value = Kind> {
    prop_oneof![
        Just(Kind::Robust),
        Just(Kind::Misclassified),
        (0.0..0.1f64).prop_map(Kind::TimeoutEmpty),
        (0.0..0.1f64).prop_map(Kind::Found),
        (0.0..0.1f64).prop_map(Kind::TimeoutBest),
    ]
}

pub fn answer() -> impl Strategy<Value = Resolution> {
    prop_oneof![
        3 => (0..CLASSES).prop_map(Resolution::Labeled),
        1 => Just(Resolution::Declined),
        1 => Just(Resolution::TimedOut),
    ]
}

pub fn step() -> impl Strategy<Value = Step> {
    (kind(), any::<bool>(), answer()).prop_map(|(kind, ask, answer)| Step { kind, ask, answer })
}

#[derive(Debug, Clone)]
pub struct Trace {
    initial: Vec<Sample>,
    rounds: Vec<(usize, Vec<Step>)>,
    requeue_assumed: bool,
}

pub fn trace() -> impl Strategy<Value = Trace> {
    (
        prop::collection::vec(((0.0..1.0f64), (0..CLASSES)), 1..12),
        prop::collection::vec((1usize..10, prop::collection::vec(step(), 10)), 1..8),
        any::<bool>(),
    )
        .prop_map(|(pts, rounds, requeue_assumed)| Trace {
            initial: pts.into_iter().map(|(x, y)| Sample::new(vec![x, 1.0 - x], y)).collect(),
            rounds,
            requeue_assumed,
        })
}

pub fn outcome(kind: &Kind, root: &Sample, root_id: u64) -> VerifyOutcome {
    let adv = |delta: f64| AdversaryResult {
        x_prime: root.x.iter().map(|v| (v + delta).min(1.0)).collect(),
        delta,
        target_class: (root.y + 1) % CLASSES,
        root_id,
    };
    match *kind {
        Kind::Robust => VerifyOutcome::RobustWithin { eps: 0.1 },
        Kind::Misclassified => VerifyOutcome::RootMisclassified {
            predicted: (root.y + 1) % CLASSES,
        },
        Kind::TimeoutEmpty(lb) => VerifyOutcome::Timeout {
            best: None,
            lower_bound: lb,
        },
        Kind::Found(d) => VerifyOutcome::Found(adv(d)),
        Kind::TimeoutBest(d) => VerifyOutcome::Timeout {
            best: Some(adv(d)),
            lower_bound: d / 2.0,
        },
    }
}

/// Hands out pre-drawn answers in request order and records what it saw.
pub struct Scripted {
    answers: Vec<Resolution>,
    seen: Vec<(LabelRequest, Resolution)>,
}

impl Labeler for Scripted {
    fn label_batch(&mut self, requests: &[LabelRequest]) -> Vec<Resolution> {
        let out: Vec<Resolution> = requests
            .iter()
            .zip(
                self.answers
                    .drain(..requests.len().min(self.answers.len()))
                    .chain(std::iter::repeat(Resolution::Declined)),
            )
            .map(|(_, a)| a)
            .collect();
        self.seen.extend(requests.iter().cloned().zip(out.iter().copied()));
        out
    }
}

pub fn policy(requeue_assumed: bool) -> RoundPolicy {
    RoundPolicy {
        eps: 0.1,
        classes: CLASSES,
        requeue_assumed,
        hint: RenderHint::Point2d,
    }
}

pub fn key(level: u32, delta: Option<f64>) -> (u32, bool, f64) {
    (level, delta.is_some(), delta.unwrap_or(0.0))
}

/// Run a trace, checking every property after each round. `force` overrides
/// the per-root scheduler decision.
pub fn run_trace(t: &Trace, force: Option<bool>) -> Result<EngineState, TestCaseError> {
    let mut state = EngineState::new(&t.initial);
    prop_assert!(state.check_invariants().is_ok());
    let pol = policy(t.requeue_assumed);
    for (epoch, (c, steps)) in t.rounds.iter().enumerate() {
        let d0_before: Vec<_> = state.d0().iter().cloned().collect();
        let adv_before: HashSet<u64> = state.d_adv().ids().collect();
        let queued_before = state.queue().len();

        let popped = state.begin_round(*c);
        prop_assert!(state.d_adv().is_empty());
        prop_assert_eq!(popped.len(), (*c).min(queued_before));
        for w in popped.windows(2) {
            let (a, b) = (&w[0].0, &w[1].0);
            prop_assert!(
                key(a.level, a.last_delta) <= key(b.level, b.last_delta),
                "pop order {:?} then {:?}",
                a,
                b
            );
        }

        let outcomes: Vec<VerifyOutcome> = popped
            .iter()
            .zip(steps)
            .map(|((e, s), st)| outcome(&st.kind, s, e.id))
            .collect();
        let asks: Vec<bool> = steps
            .iter()
            .take(popped.len())
            .map(|s| force.unwrap_or(s.ask))
            .collect();
        let answers: Vec<Resolution> = steps
            .iter()
            .zip(&outcomes)
            .zip(&asks)
            .filter(|((_, o), &a)| a && o.adversary().is_some())
            .map(|((s, _), _)| s.answer)
            .collect();
        let mut lab = Scripted {
            answers,
            seen: Vec::new(),
        };
        let rec = state.finish_round(epoch, &popped, &outcomes, &asks, &mut lab, &pol);

        prop_assert!(state.check_invariants().is_ok(), "{:?}", state.check_invariants());
        // D_adv refresh: nothing survives from the previous round.
        prop_assert!(state.d_adv().ids().all(|id| !adv_before.contains(&id)));
        // D0 only grows and never changes what it held.
        prop_assert!(state.d0().len() >= d0_before.len());
        for (old, new) in d0_before.iter().zip(state.d0().iter()) {
            prop_assert_eq!(old, new);
        }
        let found = outcomes.iter().filter(|o| o.adversary().is_some()).count();
        prop_assert_eq!(rec.found, found);
        prop_assert_eq!(rec.human_labeled + rec.declined + rec.timed_out, rec.human_requests);
        prop_assert_eq!(state.d0().len() - d0_before.len(), rec.human_labeled);
        prop_assert_eq!(state.d_adv().len(), rec.assumed);
        prop_assert_eq!(rec.assumed + rec.human_labeled, found);
        if let Some(f) = rec.true_adversary_fraction {
            prop_assert!((0.0..=1.0).contains(&f));
        }

        // Labeled adversaries land in D0 with the given class; the rest in
        // D_adv with the root's class.
        let new_d0: Vec<_> = state.d0().iter().skip(d0_before.len()).collect();
        let mut labeled = new_d0.iter();
        let adv_by_parent: HashMap<u64, &Sample> =
            state.d_adv().iter().map(|e| (e.parent.unwrap(), &e.sample)).collect();
        for (req, res) in &lab.seen {
            match res {
                Resolution::Labeled(class) => {
                    let e = labeled.next().expect("labeled adversary in D0");
                    prop_assert_eq!(e.provenance, Provenance::HumanLabeled);
                    prop_assert_eq!(e.sample.y, *class);
                    prop_assert_eq!(&e.sample.x, &req.x_prime);
                    prop_assert_eq!(e.parent, Some(req.root_id));
                }
                _ => {
                    let s = adv_by_parent.get(&req.root_id).expect("declined adversary in D_adv");
                    prop_assert_eq!(s.y, req.root.y);
                    prop_assert_eq!(&s.x, &req.x_prime);
                }
            }
        }
        if force == Some(true) {
            prop_assert_eq!(rec.human_requests, found);
        }
        if force == Some(false) {
            prop_assert_eq!(rec.human_requests, 0);
            prop_assert_eq!(state.d_adv().len(), found);
        }
    }
    Ok(state)
}

/// The oracle answers every request.
pub fn always_labeled(t: &Trace) -> Trace {
    let mut t = t.clone();
    for (_, steps) in &mut t.rounds {
        for s in steps {
            if !matches!(s.answer, Resolution::Labeled(_)) {
                s.answer = Resolution::Labeled(0);
            }
        }
    }
    t
}

pub fn check_bookkeeping(t: &Trace) -> Result<(), TestCaseError> {
    run_trace(t, None).map(|_| ())
}

/// Always asking the human and always getting a label: nothing is assumed.
pub fn check_always_human(t: &Trace) -> Result<(), TestCaseError> {
    let state = run_trace(&always_labeled(t), Some(true))?;
    prop_assert!(state.d_adv().is_empty());
    Ok(())
}

/// Never asking: D0 stays the original data.
pub fn check_never_human(t: &Trace) -> Result<(), TestCaseError> {
    let state = run_trace(t, Some(false))?;
    prop_assert_eq!(state.d0().len(), t.initial.len());
    prop_assert!(state.d0().iter().all(|e| e.provenance == Provenance::Original));
    Ok(())
}

/// `Some((level, delta))` pushes, `None` pops.
pub type QueueOp = Option<(u32, Option<f64>)>;

pub fn queue_ops() -> impl Strategy<Value = Vec<QueueOp>> {
    prop::collection::vec(
        prop_oneof![(0u32..4, prop::option::of(0.0..0.1f64)).prop_map(Some), Just(None)],
        1..200,
    )
}

pub fn check_queue(ops: &[QueueOp]) -> Result<(), TestCaseError> {
    let mut q = VerifyQueue::new();
    let mut reference: Vec<(u32, bool, f64, u64)> = Vec::new();
    let mut seq = 0u64;
    for op in ops {
        match *op {
            Some((level, delta)) => {
                q.push(seq, level, delta);
                let (l, known, d) = key(level, delta);
                reference.push((l, known, d, seq));
                seq += 1;
            }
            None => {
                reference.sort_by(|a, b| a.partial_cmp(b).unwrap());
                let want = (!reference.is_empty()).then(|| reference.remove(0));
                let got = q.pop();
                prop_assert_eq!(got.map(|e| e.id), want.map(|w| w.3));
            }
        }
        prop_assert_eq!(q.len(), reference.len());
    }
    Ok(())
}

/// `(id, op, class)`: op 0 labels, 1 declines, 2 and 3 expire.
pub type BoardOp = (u64, usize, usize);

pub fn board_ops() -> impl Strategy<Value = Vec<BoardOp>> {
    prop::collection::vec((0u64..6, 0usize..3, 0usize..4), 1..60)
}

pub fn check_exactly_once(ops: &[BoardOp]) -> Result<(), TestCaseError> {
    let board = LabelBoard::new(CLASSES);
    let req = LabelRequest {
        root_id: 0,
        x_prime: vec![0.5, 0.5],
        root: Sample::new(vec![0.5, 0.4], 1),
        delta: 0.1,
        hint: RenderHint::Point2d,
    };
    let ids: Vec<u64> = (0..4).map(|_| board.post(&req)).collect();
    let mut first: HashMap<u64, Resolution> = HashMap::new();
    for &(id, op, class) in ops {
        let r = match op {
            0 => board.label(id, class),
            1 => board.decline(id),
            _ => board.expire(id),
        };
        if !ids.contains(&id) {
            prop_assert_eq!(r, Err(BoardError::NotFound(id)));
        } else if op == 0 && class >= CLASSES {
            prop_assert_eq!(
                r,
                Err(BoardError::BadClass {
                    class,
                    classes: CLASSES
                })
            );
        } else if let Some(prev) = first.get(&id) {
            prop_assert_eq!(r, Err(BoardError::AlreadyResolved(id)));
            prop_assert_eq!(board.resolution(id), Some(*prev));
        } else {
            prop_assert_eq!(r, Ok(()));
            first.insert(id, board.resolution(id).unwrap());
        }
    }
    prop_assert_eq!(board.pending().len(), ids.len() - first.len());
    Ok(())
}
