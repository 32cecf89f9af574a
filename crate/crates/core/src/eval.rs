//! Experiment runner: train each requested method on identical data, score
//! accuracy and average perturbation bound, write reports.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::save_checkpoint;
use crate::datasets::{gen_trajectories, load_mnist, Ground2D};
use crate::engine::{
    train_iada, train_regular, train_robust, AlwaysAssume, HumanService, IadaConfig, LabelBoard, Labeler,
    OracleLabeler, RenderHint, RunReport, SchedulerConfig, SchedulerMode, TrainConfig,
};
use crate::error::{ConfigError, DatasetError, EngineError, ExperimentError, NnError};
use crate::nn::{AdamConfig, ModelParams, Sample};
use crate::util::Stopwatch;
use crate::verifier::{append_query_log, average_perturbation_bound, InputBox, VerifierConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Task {
    #[serde(rename = "2d")]
    Ground2d,
    #[serde(rename = "mnist")]
    Mnist,
    #[serde(rename = "trajectory")]
    Trajectory,
}

impl Task {
    pub fn default_eps(self) -> f64 {
        match self {
            Task::Ground2d | Task::Mnist => 0.1,
            Task::Trajectory => 0.05,
        }
    }

    pub fn default_c(self) -> usize {
        match self {
            Task::Ground2d | Task::Trajectory => 5000,
            Task::Mnist => 2000,
        }
    }

    pub fn classes(self) -> usize {
        match self {
            Task::Ground2d => 2,
            Task::Mnist => 10,
            Task::Trajectory => 4,
        }
    }

    pub fn input_dim(self) -> usize {
        match self {
            Task::Ground2d => 2,
            Task::Mnist => crate::datasets::mnist::PIXELS,
            Task::Trajectory => crate::datasets::trajectory::DIM,
        }
    }

    pub fn hint(self) -> RenderHint {
        match self {
            Task::Ground2d => RenderHint::Point2d,
            Task::Mnist => RenderHint::DigitImage,
            Task::Trajectory => RenderHint::Trajectory,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Reg,
    /// Regular training plus uniformly sampled, oracle-labeled data.
    RegDa,
    Robust,
    RobustDa,
    Iada,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Reg => "reg",
            Method::RegDa => "reg_da",
            Method::Robust => "robust",
            Method::RobustDa => "robust_da",
            Method::Iada => "iada",
        }
    }

    fn augments_uniformly(self) -> bool {
        matches!(self, Method::RegDa | Method::RobustDa)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelerMode {
    /// Ground truth on 2D, the root's label elsewhere.
    Oracle,
    AlwaysAssume,
    Human,
}

fn default_lr() -> f64 {
    0.01
}
fn default_r_v() -> usize {
    500
}
fn default_hidden() -> Vec<usize> {
    vec![32]
}
fn default_ensemble_size() -> usize {
    3
}
fn default_ensemble_epochs() -> usize {
    200
}
fn default_pb_subset() -> usize {
    200
}
fn default_raster() -> usize {
    200
}
fn default_mnist_dir() -> PathBuf {
    PathBuf::from("data/mnist")
}
fn default_noise() -> f64 {
    1.0
}
fn default_gate() -> SchedulerMode {
    SchedulerMode::Gate
}
fn default_labeler() -> LabelerMode {
    LabelerMode::Oracle
}

/// One experiment. Optional fields fall back to per-task defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: Task,
    pub data_size: usize,
    pub max_epoch: usize,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default)]
    pub eps: Option<f64>,
    #[serde(default = "default_r_v")]
    pub r_v: usize,
    #[serde(default)]
    pub c: Option<usize>,
    /// Scheduler distance threshold; required when IADA runs.
    #[serde(default)]
    pub d: Option<f64>,
    #[serde(default = "default_ensemble_size")]
    pub ensemble_size: usize,
    #[serde(default = "default_ensemble_epochs")]
    pub ensemble_epochs: usize,
    #[serde(default = "default_gate")]
    pub scheduler: SchedulerMode,
    pub seed: u64,
    #[serde(default = "default_labeler")]
    pub labeler: LabelerMode,
    pub methods: Vec<Method>,
    pub output_dir: PathBuf,
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    /// Minibatch size; absent means full batch.
    #[serde(default)]
    pub batch_size: Option<usize>,
    /// Ball radius of the robust baseline; defaults to `eps`.
    #[serde(default)]
    pub robust_eps: Option<f64>,
    /// Test points scored for `p_b`; 0 skips it.
    #[serde(default = "default_pb_subset")]
    pub pb_subset: usize,
    /// Test set size for generated tasks.
    #[serde(default)]
    pub test_size: Option<usize>,
    #[serde(default)]
    pub verifier: VerifierConfig,
    #[serde(default = "default_mnist_dir")]
    pub mnist_dir: PathBuf,
    #[serde(default = "default_noise")]
    pub trajectory_noise: f64,
    /// Boundary raster side for the 2D task; 0 skips it.
    #[serde(default = "default_raster")]
    pub raster_resolution: usize,
    #[serde(default)]
    pub requeue_assumed: bool,
    #[serde(default)]
    pub verify_at_start: bool,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn eps(&self) -> f64 {
        self.eps.unwrap_or(self.task.default_eps())
    }

    pub fn c(&self) -> usize {
        self.c.unwrap_or(self.task.default_c())
    }

    pub fn robust_eps(&self) -> f64 {
        self.robust_eps.unwrap_or(self.eps())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.methods.is_empty() {
            return bad("method list is empty".into());
        }
        for (i, m) in self.methods.iter().enumerate() {
            if self.methods[..i].contains(m) {
                return bad(format!("method {} listed twice", m.name()));
            }
        }
        if self.data_size == 0 {
            return bad("data_size must be positive".into());
        }
        if self.max_epoch == 0 {
            return bad("max_epoch must be positive".into());
        }
        let eps = self.eps();
        if !(eps > 0.0 && eps.is_finite()) {
            return bad(format!("eps must be positive, got {eps}"));
        }
        let re = self.robust_eps();
        if !(re >= 0.0 && re.is_finite()) {
            return bad(format!("robust_eps must be non-negative, got {re}"));
        }
        if self.task == Task::Trajectory && !(self.trajectory_noise >= 0.0 && self.trajectory_noise.is_finite()) {
            return bad("trajectory_noise must be non-negative".into());
        }
        if self.test_size == Some(0) {
            return bad("test_size must be positive".into());
        }
        self.train_config(self.seed).validate()?;
        if self.methods.contains(&Method::Iada) {
            let Some(d) = self.d else {
                return bad("d is required when iada runs".into());
            };
            self.iada_config(d).validate(self.task.input_dim())?;
        }
        Ok(())
    }

    fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            hidden: self.hidden.clone(),
            classes: self.task.classes(),
            epochs: self.max_epoch,
            batch_size: self.batch_size,
            adam: AdamConfig {
                lr: self.lr,
                ..AdamConfig::default()
            },
            seed,
        }
    }

    fn iada_config(&self, d: f64) -> IadaConfig {
        IadaConfig {
            train: self.train_config(self.seed),
            eps: self.eps(),
            r_v: self.r_v,
            c: self.c(),
            scheduler: SchedulerConfig {
                d,
                ensemble_size: self.ensemble_size,
                ensemble_epochs: self.ensemble_epochs,
                mode: self.scheduler,
            },
            verifier: self.verifier.clone(),
            domain: InputBox::unit(self.task.input_dim()),
            requeue_assumed: self.requeue_assumed,
            verify_at_start: self.verify_at_start,
            hint: self.task.hint(),
        }
    }
}

/// Training and test data of one experiment.
pub struct TaskData {
    pub train: Vec<Sample>,
    pub test: Vec<Sample>,
    pub ground: Option<Ground2D>,
}

const TEST_SALT: u64 = 0x7e57_5a17_0000_0001;

pub fn load_task(cfg: &ExperimentConfig) -> Result<TaskData, DatasetError> {
    match cfg.task {
        Task::Ground2d => {
            let g = Ground2D::default();
            let train = g.sample(cfg.data_size, cfg.seed);
            let test = match cfg.test_size {
                Some(n) => g.sample(n, cfg.seed ^ TEST_SALT),
                None => g.test_set(cfg.seed),
            };
            Ok(TaskData {
                train,
                test,
                ground: Some(g),
            })
        }
        Task::Mnist => {
            let dir = &cfg.mnist_dir;
            let train = load_mnist(
                &dir.join("train-images-idx3-ubyte"),
                &dir.join("train-labels-idx1-ubyte"),
                cfg.data_size,
                cfg.seed,
            )?;
            let test = load_mnist(
                &dir.join("test-images-idx3-ubyte"),
                &dir.join("test-labels-idx1-ubyte"),
                cfg.test_size.unwrap_or(usize::MAX),
                cfg.seed,
            )?;
            Ok(TaskData {
                train: train.samples(),
                test: test.samples(),
                ground: None,
            })
        }
        Task::Trajectory => Ok(TaskData {
            train: gen_trajectories(cfg.data_size, cfg.seed, cfg.trajectory_noise),
            test: gen_trajectories(
                cfg.test_size.unwrap_or(2000),
                cfg.seed ^ TEST_SALT,
                cfg.trajectory_noise,
            ),
            ground: None,
        }),
    }
}

/// Fraction of `testset` classified correctly.
pub fn accuracy(params: &ModelParams, testset: &[Sample]) -> Result<f64, NnError> {
    if testset.is_empty() {
        return Err(NnError::EmptyBatch);
    }
    let mut right = 0usize;
    for s in testset {
        right += (params.predict(&s.x)? == s.y) as usize;
    }
    Ok(right as f64 / testset.len() as f64)
}

/// Predicted classes at cell centers of a `resolution²` grid over `[0,1]²`.
/// Row `i` holds `x₂ = (i + ½) / resolution`, column `j` holds `x₁`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Raster {
    pub resolution: usize,
    pub cells: Vec<Vec<usize>>,
}

impl Raster {
    pub fn center(resolution: usize, i: usize, j: usize) -> [f64; 2] {
        let r = resolution as f64;
        [(j as f64 + 0.5) / r, (i as f64 + 0.5) / r]
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for row in &self.cells {
            let line: Vec<String> = row.iter().map(usize::to_string).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }
}

pub fn export_boundary_raster(params: &ModelParams, resolution: usize) -> Result<Raster, NnError> {
    if params.input_dim() != 2 {
        return Err(NnError::DimensionMismatch {
            expected: 2,
            got: params.input_dim(),
        });
    }
    if resolution == 0 {
        return Err(NnError::InvalidShape("raster resolution must be positive".into()));
    }
    let cells = (0..resolution)
        .map(|i| {
            (0..resolution)
                .map(|j| params.predict(&Raster::center(resolution, i, j)))
                .collect::<Result<Vec<_>, _>>()
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Raster { resolution, cells })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PbSummary {
    pub p_b: f64,
    pub points: usize,
    pub misclassified: usize,
    pub robust: usize,
    pub timeouts: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodResult {
    pub method: Method,
    pub accuracy: f64,
    pub p_b: Option<PbSummary>,
    pub train_size: usize,
    /// Samples added on top of the original data.
    pub augmented: usize,
    pub train_ms: f64,
    pub eval_ms: f64,
    /// Round-by-round record; IADA only.
    pub run: Option<RunReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub complete: bool,
    pub error: Option<String>,
    pub config: ExperimentConfig,
    pub eps: f64,
    pub test_size: usize,
    pub results: Vec<MethodResult>,
}

impl EvalReport {
    pub fn result(&self, method: Method) -> Option<&MethodResult> {
        self.results.iter().find(|r| r.method == method)
    }

    /// One row per method, Table-style.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,accuracy,p_b,train_size,augmented,true_adversary_fraction,train_ms\n");
        for r in &self.results {
            let pb = r.p_b.as_ref().map_or(String::new(), |p| format!("{:.6}", p.p_b));
            let taf = r
                .run
                .as_ref()
                .and_then(|run| run.true_adversary_fraction)
                .map_or(String::new(), |f| format!("{f:.4}"));
            out.push_str(&format!(
                "{},{:.6},{},{},{},{},{:.1}\n",
                r.method.name(),
                r.accuracy,
                pb,
                r.train_size,
                r.augmented,
                taf,
                r.train_ms
            ));
        }
        out
    }
}

/// Uniform augmentation: on 2D, points anywhere in the square labeled by the
/// ground truth; elsewhere, points in the ε-ball of a random training sample
/// keeping its label.
fn uniform_augmentation(data: &TaskData, n: usize, eps: f64, seed: u64) -> Vec<Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(3);
    match &data.ground {
        Some(g) => g.sample(n, rng.gen()),
        None => (0..n)
            .map(|_| {
                let root = data.train.choose(&mut rng).expect("non-empty training set");
                let x = root
                    .x
                    .iter()
                    .map(|v| (v + rng.gen_range(-eps..=eps)).clamp(0.0, 1.0))
                    .collect();
                Sample::new(x, root.y)
            })
            .collect(),
    }
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), ExperimentError> {
    fs::write(path, contents).map_err(|source| ExperimentError::Write {
        path: path.to_path_buf(),
        source,
    })
}

fn write_report(dir: &Path, report: &EvalReport) -> Result<(), ExperimentError> {
    let json = serde_json::to_vec_pretty(report).expect("report serializes");
    write_file(&dir.join("report.json"), &json)?;
    write_file(&dir.join("summary.csv"), report.to_csv().as_bytes())
}

fn make_labeler(
    cfg: &ExperimentConfig,
    data: &TaskData,
    board: Option<Arc<LabelBoard>>,
) -> Result<Box<dyn Labeler>, ConfigError> {
    Ok(match cfg.labeler {
        LabelerMode::AlwaysAssume => Box::new(AlwaysAssume),
        LabelerMode::Oracle => match &data.ground {
            Some(g) => Box::new(OracleLabeler::ground2d(g.clone())),
            None => Box::new(OracleLabeler::same_as_root()),
        },
        LabelerMode::Human => {
            let board =
                board.ok_or_else(|| ConfigError::Invalid("human labeler needs a running label service".into()))?;
            Box::new(HumanService::new(board))
        }
    })
}

/// Run every method in `cfg`, write `report.json`, `summary.csv`, one
/// checkpoint per method, the IADA query log and, on 2D, boundary rasters.
/// If a method fails the report is still written, marked incomplete.
pub fn run_experiment(cfg: &ExperimentConfig, board: Option<Arc<LabelBoard>>) -> Result<EvalReport, ExperimentError> {
    cfg.validate()?;
    if cfg.labeler == LabelerMode::Human && board.is_none() && cfg.methods.contains(&Method::Iada) {
        return Err(ConfigError::Invalid("human labeler needs a running label service".into()).into());
    }
    let data = load_task(cfg)?;
    let dir = &cfg.output_dir;
    fs::create_dir_all(dir).map_err(|source| ExperimentError::Write {
        path: dir.clone(),
        source,
    })?;
    let mut report = EvalReport {
        complete: false,
        error: None,
        config: cfg.clone(),
        eps: cfg.eps(),
        test_size: data.test.len(),
        results: Vec::new(),
    };
    let pb_points: Vec<Sample> = {
        let mut idx: Vec<usize> = (0..data.test.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed ^ TEST_SALT));
        idx.truncate(cfg.pb_subset);
        idx.sort_unstable();
        idx.into_iter().map(|i| data.test[i].clone()).collect()
    };

    // IADA goes first so the uniform arms can match its augmentation count.
    let mut order = cfg.methods.clone();
    order.sort_by_key(|m| *m != Method::Iada);
    let mut da_count = cfg.data_size;
    for method in order {
        match run_method(cfg, &data, &pb_points, method, board.clone(), &mut da_count) {
            Ok(r) => report.results.push(r),
            Err(e) => {
                report.error = Some(format!("{}: {e}", method.name()));
                write_report(dir, &report)?;
                return Err(e);
            }
        }
    }
    let rank = |m: Method| cfg.methods.iter().position(|x| *x == m);
    report.results.sort_by_key(|r| rank(r.method));
    report.complete = true;
    write_report(dir, &report)?;
    Ok(report)
}

fn run_method(
    cfg: &ExperimentConfig,
    data: &TaskData,
    pb_points: &[Sample],
    method: Method,
    board: Option<Arc<LabelBoard>>,
    da_count: &mut usize,
) -> Result<MethodResult, ExperimentError> {
    let dir = &cfg.output_dir;
    let domain = InputBox::unit(cfg.task.input_dim());
    let tc = cfg.train_config(cfg.seed);
    let clock = Stopwatch::start();
    let mut train = data.train.clone();
    if method.augments_uniformly() {
        train.extend(uniform_augmentation(data, *da_count, cfg.eps(), cfg.seed));
    }
    let (params, run) = match method {
        Method::Reg | Method::RegDa => (train_regular(&train, &tc)?, None),
        Method::Robust | Method::RobustDa => (train_robust(&train, &tc, cfg.robust_eps(), &domain)?, None),
        Method::Iada => {
            let d = cfg.d.expect("validated");
            let mut labeler = make_labeler(cfg, data, board).map_err(EngineError::from)?;
            let out = train_iada(&data.train, &cfg.iada_config(d), labeler.as_mut())?;
            let log = dir.join("queries.jsonl");
            if log.exists() {
                fs::remove_file(&log).map_err(|source| ExperimentError::Write {
                    path: log.clone(),
                    source,
                })?;
            }
            append_query_log(&log, &out.queries).map_err(|source| ExperimentError::Write { path: log, source })?;
            *da_count = out.report.augmented;
            (out.params, Some(out.report))
        }
    };
    let train_ms = clock.elapsed_ms();

    let clock = Stopwatch::start();
    let acc = accuracy(&params, &data.test).map_err(EngineError::from)?;
    let p_b = if pb_points.is_empty() {
        None
    } else {
        let b = average_perturbation_bound(&params, pb_points, cfg.eps(), &domain, &cfg.verifier)?;
        Some(PbSummary {
            p_b: b.p_b,
            points: b.deltas.len(),
            misclassified: b.misclassified,
            robust: b.robust,
            timeouts: b.timeouts,
        })
    };
    let eval_ms = clock.elapsed_ms();

    let config = serde_json::json!({ "method": method, "experiment": cfg });
    save_checkpoint(&dir.join(format!("model_{}.json", method.name())), &params, config).map_err(|e| {
        ExperimentError::Write {
            path: dir.join(format!("model_{}.json", method.name())),
            source: std::io::Error::other(e.to_string()),
        }
    })?;
    if cfg.task == Task::Ground2d && cfg.raster_resolution > 0 {
        let raster = export_boundary_raster(&params, cfg.raster_resolution).map_err(EngineError::from)?;
        let mut f = Vec::new();
        f.write_all(raster.to_csv().as_bytes()).expect("in-memory write");
        write_file(&dir.join(format!("raster_{}.csv", method.name())), &f)?;
    }
    let (train_size, augmented) = match &run {
        Some(r) => (r.final_d0_size + r.final_d_adv_size, r.augmented),
        None => (train.len(), train.len() - data.train.len()),
    };
    Ok(MethodResult {
        method,
        accuracy: acc,
        p_b,
        train_size,
        augmented,
        train_ms,
        eval_ms,
        run,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Layer;

    fn constant(class: usize) -> ModelParams {
        let mut l = Layer::zeros(2, 2);
        l.bias[class] = 1.0;
        ModelParams::new(vec![l]).unwrap()
    }

    #[test]
    fn accuracy_counts() {
        let p = constant(1);
        let all = vec![Sample::new(vec![0.1, 0.1], 1); 4];
        assert_eq!(accuracy(&p, &all).unwrap(), 1.0);
        let none = vec![Sample::new(vec![0.1, 0.1], 0); 4];
        assert_eq!(accuracy(&p, &none).unwrap(), 0.0);
        let mut mixed = all.clone();
        mixed[2].y = 0;
        assert_eq!(accuracy(&p, &mixed).unwrap(), 0.75);
    }

    #[test]
    fn constant_net_gives_uniform_raster() {
        let r = export_boundary_raster(&constant(1), 7).unwrap();
        assert!(r.cells.iter().flatten().all(|&c| c == 1));
        assert_eq!(r.cells.len(), 7);
    }

    #[test]
    fn resolution_two_is_four_forward_passes() {
        let p = ModelParams::init(&[2, 5, 2], 3).unwrap();
        let r = export_boundary_raster(&p, 2).unwrap();
        for (i, j) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
            let c = [[0.25, 0.25], [0.75, 0.25], [0.25, 0.75], [0.75, 0.75]][i * 2 + j];
            assert_eq!(r.cells[i][j], p.predict(&c).unwrap());
        }
    }

    #[test]
    fn empty_method_list_is_rejected() {
        let cfg = ExperimentConfig::from_json(
            r#"{"task":"2d","data_size":10,"max_epoch":5,"seed":1,"methods":[],"output_dir":"/nonexistent"}"#,
        )
        .unwrap();
        assert!(matches!(cfg.validate(), Err(ConfigError::Invalid(_))));
    }

    #[test]
    fn iada_needs_d_within_eps() {
        let base = r#"{"task":"2d","data_size":10,"max_epoch":5,"seed":1,"methods":["iada"],"output_dir":"x""#;
        let no_d = ExperimentConfig::from_json(&format!("{base}}}")).unwrap();
        assert!(no_d.validate().is_err());
        let big_d = ExperimentConfig::from_json(&format!(r#"{base},"d":0.2}}"#)).unwrap();
        assert!(big_d.validate().is_err());
        let ok = ExperimentConfig::from_json(&format!(r#"{base},"d":0.05}}"#)).unwrap();
        ok.validate().unwrap();
        assert_eq!(ok.c(), 5000);
        assert_eq!(ok.eps(), 0.1);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let r = ExperimentConfig::from_json(
            r#"{"task":"2d","data_size":10,"max_epoch":5,"seed":1,"methods":["reg"],"output_dir":"x","learning_rate":1}"#,
        );
        assert!(r.is_err());
    }
}
