//! The augmentation loop: train, verify the weakest roots, route their
//! adversaries to a labeler or to the assumed-label set, repeat.

mod board;
mod labeler;
mod queue;
mod round;
mod scheduler;
mod sets;

pub use board::{BoardError, LabelBoard, LabelRequest, PendingView, RenderHint, Resolution, TrainingStatus};
pub use labeler::{AlwaysAssume, HumanService, Labeler, OracleLabeler};
pub use queue::{QueueEntry, VerifyQueue};
pub use round::{EngineState, RoundPolicy, RoundRecord};
pub use scheduler::{scheduler_decides, SchedulerConfig, SchedulerMode};
pub use sets::{Entry, LabeledSet, Provenance};

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, EngineError, NnError};
use crate::nn::{adam_step, backward_refs, mean_loss, AdamConfig, AdamState, ModelParams, Sample};
use crate::robust::robust_backward_refs;
use crate::util::{par_map, Stopwatch};
use crate::verifier::{verify_many, InputBox, QueryRecord, VerifierConfig, VerifyOutcome};

const SHUFFLE_STREAM: u64 = 1;
const ENSEMBLE_STREAM: u64 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub hidden: Vec<usize>,
    pub classes: usize,
    pub epochs: usize,
    /// Minibatch size; `None` trains on the full set each epoch.
    pub batch_size: Option<usize>,
    pub adam: AdamConfig,
    pub seed: u64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.classes < 2 {
            return Err(ConfigError::Invalid(format!(
                "classes must be at least 2, got {}",
                self.classes
            )));
        }
        if self.hidden.contains(&0) {
            return Err(ConfigError::Invalid("hidden layers must be non-empty".into()));
        }
        if self.batch_size == Some(0) {
            return Err(ConfigError::Invalid("batch_size must be positive".into()));
        }
        let a = &self.adam;
        if !(a.lr > 0.0 && a.lr.is_finite())
            || !(0.0..1.0).contains(&a.beta1)
            || !(0.0..1.0).contains(&a.beta2)
            || a.eps <= 0.0
        {
            return Err(ConfigError::Invalid(format!("bad Adam settings {a:?}")));
        }
        Ok(())
    }

    fn dims(&self, input: usize) -> Vec<usize> {
        let mut d = vec![input];
        d.extend(&self.hidden);
        d.push(self.classes);
        d
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Objective {
    CrossEntropy,
    Robust { eps: f64, domain: InputBox },
}

/// Parameters, optimizer state and the shuffle stream of one training run.
struct Trainer {
    params: ModelParams,
    adam: AdamState,
    shuffle: ChaCha8Rng,
    batch_size: Option<usize>,
    objective: Objective,
    order: Vec<usize>,
}

impl Trainer {
    fn new(input: usize, cfg: &TrainConfig, objective: Objective) -> Result<Self, NnError> {
        let params = ModelParams::init(&cfg.dims(input), cfg.seed)?;
        let adam = AdamState::new(&params, cfg.adam);
        let mut shuffle = ChaCha8Rng::seed_from_u64(cfg.seed);
        shuffle.set_stream(SHUFFLE_STREAM);
        Ok(Self {
            params,
            adam,
            shuffle,
            batch_size: cfg.batch_size,
            objective,
            order: Vec::new(),
        })
    }

    fn epoch(&mut self, data: &[&Sample]) -> Result<(), NnError> {
        if data.is_empty() {
            return Err(NnError::EmptyBatch);
        }
        self.order.clear();
        self.order.extend(0..data.len());
        let batch = self.batch_size.unwrap_or(data.len()).min(data.len());
        if batch < data.len() {
            self.order.shuffle(&mut self.shuffle);
        }
        for chunk in self.order.chunks(batch) {
            let refs = chunk.iter().map(|&i| data[i]);
            let grads = match &self.objective {
                Objective::CrossEntropy => backward_refs(&self.params, refs)?,
                Objective::Robust { eps, domain } => robust_backward_refs(&self.params, refs, *eps, domain)?,
            };
            adam_step(&mut self.params, &grads, &mut self.adam)?;
        }
        Ok(())
    }
}

fn input_dim(data: &[Sample]) -> Result<usize, EngineError> {
    let first = data.first().ok_or(NnError::EmptyBatch)?;
    Ok(first.x.len())
}

fn run(data: &[Sample], cfg: &TrainConfig, objective: Objective) -> Result<ModelParams, EngineError> {
    cfg.validate()?;
    let mut t = Trainer::new(input_dim(data)?, cfg, objective)?;
    let refs: Vec<&Sample> = data.iter().collect();
    for _ in 0..cfg.epochs {
        t.epoch(&refs)?;
    }
    Ok(t.params)
}

/// Plain cross-entropy training.
pub fn train_regular(data: &[Sample], cfg: &TrainConfig) -> Result<ModelParams, EngineError> {
    run(data, cfg, Objective::CrossEntropy)
}

/// Certified-robust training on the interval bound of each `eps`-ball.
pub fn train_robust(
    data: &[Sample],
    cfg: &TrainConfig,
    eps: f64,
    domain: &InputBox,
) -> Result<ModelParams, EngineError> {
    if !(eps >= 0.0 && eps.is_finite()) {
        return Err(ConfigError::Invalid(format!("robust eps must be finite and non-negative, got {eps}")).into());
    }
    run(
        data,
        cfg,
        Objective::Robust {
            eps,
            domain: domain.clone(),
        },
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct IadaConfig {
    pub train: TrainConfig,
    pub eps: f64,
    /// Verify every `r_v` epochs.
    pub r_v: usize,
    /// Roots verified per round.
    pub c: usize,
    pub scheduler: SchedulerConfig,
    pub verifier: VerifierConfig,
    pub domain: InputBox,
    pub requeue_assumed: bool,
    /// Also verify before the first epoch, on the untrained network.
    pub verify_at_start: bool,
    pub hint: RenderHint,
}

impl IadaConfig {
    pub fn validate(&self, input_dim: usize) -> Result<(), ConfigError> {
        self.train.validate()?;
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return bad(format!("eps must be positive, got {}", self.eps));
        }
        let d = self.scheduler.d;
        if !(d > 0.0 && d <= self.eps) {
            return bad(format!("scheduler d must lie in (0, eps = {}], got {d}", self.eps));
        }
        if self.c == 0 {
            return bad("C must be positive".into());
        }
        if self.r_v == 0 {
            return bad("r_v must be positive".into());
        }
        if self.scheduler.ensemble_size > 0 && self.scheduler.ensemble_epochs == 0 {
            return bad("ensemble_epochs must be positive when an ensemble is used".into());
        }
        if self.domain.dim() != input_dim {
            return bad(format!(
                "domain has {} coordinates, data has {input_dim}",
                self.domain.dim()
            ));
        }
        if self.verifier.node_budget == 0 {
            return bad("verifier node_budget must be positive".into());
        }
        Ok(())
    }
}

/// Wall-clock split of a run, in milliseconds.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTiming {
    pub verification_ms: f64,
    pub ensemble_ms: f64,
    pub human_ms: f64,
    pub update_ms: f64,
    pub total_ms: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub epochs: usize,
    pub rounds: Vec<RoundRecord>,
    pub initial_size: usize,
    pub final_d0_size: usize,
    pub final_d_adv_size: usize,
    pub adversaries_found: usize,
    pub human_labeled: usize,
    pub assumed: usize,
    /// Samples added to the final training set.
    pub augmented: usize,
    pub true_adversary_fraction: Option<f64>,
    pub final_train_loss: f64,
    pub timing: PhaseTiming,
}

pub struct IadaRun {
    pub params: ModelParams,
    pub report: RunReport,
    pub state: EngineState,
    pub queries: Vec<QueryRecord>,
}

fn train_ensemble(d0: &[Sample], cfg: &IadaConfig, seeds: &[u64]) -> Result<Vec<ModelParams>, EngineError> {
    let members: Vec<TrainConfig> = seeds
        .iter()
        .map(|&seed| TrainConfig {
            epochs: cfg.scheduler.ensemble_epochs,
            seed,
            ..cfg.train.clone()
        })
        .collect();
    par_map(&members, |m| train_regular(d0, m)).into_iter().collect()
}

fn status(state: &EngineState, epoch: usize, report: &RunReport, finished: bool) -> TrainingStatus {
    TrainingStatus {
        epoch,
        round: report.rounds.len(),
        queue_depth: 0,
        d0_size: state.d0().len(),
        d_adv_size: state.d_adv().len(),
        adversaries_found: report.adversaries_found,
        human_labeled: report.human_labeled,
        assumed: report.assumed,
        true_adversary_fraction: report.true_adversary_fraction,
        finished,
    }
}

/// Train on D0 ∪ D_adv, refreshing D_adv and growing D0 every `r_v` epochs.
pub fn train_iada(initial: &[Sample], cfg: &IadaConfig, labeler: &mut dyn Labeler) -> Result<IadaRun, EngineError> {
    let input = input_dim(initial)?;
    cfg.validate(input)?;
    for s in initial {
        if s.x.len() != input || !cfg.domain.contains(&s.x) || s.y >= cfg.train.classes {
            return Err(ConfigError::Invalid("training sample outside the input domain or class range".into()).into());
        }
    }
    let total = Stopwatch::start();
    let mut trainer = Trainer::new(input, &cfg.train, Objective::CrossEntropy)?;
    let mut ensemble_rng = ChaCha8Rng::seed_from_u64(cfg.train.seed);
    ensemble_rng.set_stream(ENSEMBLE_STREAM);
    let mut state = EngineState::new(initial);
    let mut report = RunReport {
        epochs: cfg.train.epochs,
        initial_size: initial.len(),
        ..RunReport::default()
    };
    let mut queries = Vec::new();
    let policy = RoundPolicy {
        eps: cfg.eps,
        classes: cfg.train.classes,
        requeue_assumed: cfg.requeue_assumed,
        hint: cfg.hint,
    };
    let mut human_total = 0usize;
    let mut true_total = 0usize;
    labeler.observe(&status(&state, 0, &report, false));

    for epoch in 0..cfg.train.epochs {
        if epoch % cfg.r_v == 0 && (epoch > 0 || cfg.verify_at_start) {
            let popped = state.begin_round(cfg.c);
            let roots: Vec<(u64, Sample)> = popped.iter().map(|(e, s)| (e.id, s.clone())).collect();
            let clock = Stopwatch::start();
            let reports = verify_many(&trainer.params, &roots, cfg.eps, &cfg.domain, &cfg.verifier);
            let mut outcomes = Vec::with_capacity(reports.len());
            for ((id, _), r) in roots.iter().zip(reports) {
                let r = r?;
                queries.push(QueryRecord::from_report(*id, &r));
                outcomes.push(r.outcome);
            }
            let verify_ms = clock.elapsed_ms();

            let clock = Stopwatch::start();
            let seeds: Vec<u64> = (0..cfg.scheduler.ensemble_size)
                .map(|_| ensemble_rng.next_u64())
                .collect();
            let close = outcomes
                .iter()
                .filter_map(VerifyOutcome::adversary)
                .any(|a| a.delta <= cfg.scheduler.d);
            let ensemble = if cfg.scheduler.mode == SchedulerMode::Gate && close && !seeds.is_empty() {
                let d0: Vec<Sample> = state.d0().samples().cloned().collect();
                train_ensemble(&d0, cfg, &seeds)?
            } else {
                Vec::new()
            };
            let needs_human: Vec<bool> = outcomes
                .iter()
                .map(|o| match (o.adversary(), cfg.scheduler.mode) {
                    (None, _) => false,
                    (Some(_), SchedulerMode::AlwaysHuman) => true,
                    (Some(_), SchedulerMode::NeverHuman) => false,
                    (Some(a), SchedulerMode::Gate) => {
                        scheduler_decides(a.delta, &a.x_prime, &ensemble, cfg.scheduler.d)
                    }
                })
                .collect();
            let ensemble_ms = clock.elapsed_ms();

            let mut rec = state.finish_round(epoch, &popped, &outcomes, &needs_human, labeler, &policy);
            rec.verify_ms = verify_ms;
            rec.ensemble_ms = ensemble_ms;
            report.timing.verification_ms += verify_ms;
            report.timing.ensemble_ms += ensemble_ms;
            report.timing.human_ms += rec.human_ms;
            report.adversaries_found += rec.found;
            report.human_labeled += rec.human_labeled;
            report.assumed += rec.assumed;
            human_total += rec.human_labeled;
            true_total += rec.true_adversaries;
            report.true_adversary_fraction = (human_total > 0).then(|| true_total as f64 / human_total as f64);
            report.rounds.push(rec);
            labeler.observe(&status(&state, epoch, &report, false));
        }
        let clock = Stopwatch::start();
        trainer.epoch(&state.training_samples())?;
        report.timing.update_ms += clock.elapsed_ms();
    }

    report.final_d0_size = state.d0().len();
    report.final_d_adv_size = state.d_adv().len();
    report.augmented = report.final_d0_size - report.initial_size + report.final_d_adv_size;
    let train: Vec<Sample> = state.training_samples().into_iter().cloned().collect();
    report.final_train_loss = mean_loss(&trainer.params, &train)?;
    report.timing.total_ms = total.elapsed_ms();
    labeler.observe(&status(&state, cfg.train.epochs, &report, true));
    Ok(IadaRun {
        params: trainer.params,
        report,
        state,
        queries,
    })
}
