//! `iada run | verify-one | export-raster`.
//!
//! Exit codes: 0 success, 2 invalid input, 3 runtime failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use iada_core::checkpoint::load_checkpoint;
use iada_core::engine::LabelBoard;
use iada_core::eval::{export_boundary_raster, run_experiment, ExperimentConfig, LabelerMode, Method, Task};
use iada_core::nn::{ModelParams, Sample};
use iada_core::verifier::{min_adversary, InputBox, VerifierConfig};
use serde::Deserialize;

#[derive(Parser)]
#[command(name = "iada", version, about = "Verification-guided adversarial data augmentation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train and compare the configured methods.
    Run(RunArgs),
    /// Minimal L∞ adversary of one input.
    VerifyOne {
        #[arg(long)]
        model: PathBuf,
        /// JSON: {"x": [...], "eps": r, "label"?: k, "domain"?: {"lower", "upper"}, "verifier"?: {...}}
        #[arg(long)]
        input: PathBuf,
    },
    /// Predicted class at every cell center of an n×n grid over the unit square, as CSV.
    ExportRaster {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        resolution: usize,
        /// Write here instead of stdout.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, value_parser = parse_task)]
    task: Option<Task>,
    #[arg(long)]
    seed: Option<u64>,
    /// Replaces the method list; repeat for several.
    #[arg(long = "method", value_parser = parse_method)]
    methods: Vec<Method>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    data_size: Option<usize>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    d: Option<f64>,
    #[arg(long)]
    r_v: Option<usize>,
    #[arg(long)]
    ensemble_size: Option<usize>,
    #[arg(long, value_parser = parse_labeler)]
    labeler: Option<LabelerMode>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Port of the label service started for the human labeler.
    #[arg(long, default_value_t = iada_label_service::DEFAULT_PORT)]
    port: u16,
    /// Static files served next to the label API.
    #[arg(long)]
    ui_dir: Option<PathBuf>,
}

fn parse_enum<T: for<'de> Deserialize<'de>>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|_| format!("unknown value {s:?}"))
}

fn parse_task(s: &str) -> Result<Task, String> {
    parse_enum(s)
}

fn parse_method(s: &str) -> Result<Method, String> {
    parse_enum(s)
}

fn parse_labeler(s: &str) -> Result<LabelerMode, String> {
    parse_enum(s)
}

/// A failure and the exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn invalid(message: impl ToString) -> Self {
        Self {
            code: 2,
            message: message.to_string(),
        }
    }

    fn runtime(message: impl ToString) -> Self {
        Self {
            code: 3,
            message: message.to_string(),
        }
    }
}

fn apply_overrides(cfg: &mut ExperimentConfig, a: &RunArgs) {
    if let Some(t) = a.task {
        cfg.task = t;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if !a.methods.is_empty() {
        cfg.methods = a.methods.clone();
    }
    if let Some(e) = a.epochs {
        cfg.max_epoch = e;
    }
    if let Some(n) = a.data_size {
        cfg.data_size = n;
    }
    if a.eps.is_some() {
        cfg.eps = a.eps;
    }
    if a.d.is_some() {
        cfg.d = a.d;
    }
    if let Some(r) = a.r_v {
        cfg.r_v = r;
    }
    if let Some(k) = a.ensemble_size {
        cfg.ensemble_size = k;
    }
    if let Some(l) = a.labeler {
        cfg.labeler = l;
    }
    if let Some(o) = &a.output_dir {
        cfg.output_dir = o.clone();
    }
}

fn run(a: RunArgs) -> Result<(), Failure> {
    let mut cfg = ExperimentConfig::load(&a.config).map_err(Failure::invalid)?;
    apply_overrides(&mut cfg, &a);
    cfg.validate().map_err(Failure::invalid)?;
    let service = if cfg.labeler == LabelerMode::Human && cfg.methods.contains(&Method::Iada) {
        let board = Arc::new(LabelBoard::new(cfg.task.classes()));
        let app = match &a.ui_dir {
            Some(dir) => iada_label_service::router_with_static(board.clone(), dir.clone()),
            None => iada_label_service::router(board.clone()),
        };
        let addr = std::net::SocketAddr::from(([127, 0, 0, 1], a.port));
        let handle = iada_label_service::spawn(app, addr)
            .map_err(|e| Failure::runtime(format!("label service on {addr}: {e}")))?;
        eprintln!("label service listening on http://{}", handle.addr);
        Some((board, handle))
    } else {
        None
    };
    let result = run_experiment(&cfg, service.as_ref().map(|(b, _)| b.clone()));
    if let Some((_, handle)) = service {
        let _ = handle.shutdown();
    }
    let report = result.map_err(|e| {
        if e.is_validation() {
            Failure::invalid(&e)
        } else {
            Failure::runtime(&e)
        }
    })?;
    print!("{}", report.to_csv());
    eprintln!("report written to {}", cfg.output_dir.join("report.json").display());
    Ok(())
}

fn load_model(path: &Path) -> Result<ModelParams, Failure> {
    load_checkpoint(path).map(|(p, _)| p).map_err(|e| {
        if e.is_validation() {
            Failure::invalid(&e)
        } else {
            Failure::runtime(&e)
        }
    })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct VerifyInput {
    x: Vec<f64>,
    eps: f64,
    /// Defaults to the network's own prediction.
    label: Option<usize>,
    domain: Option<InputBox>,
    #[serde(default)]
    verifier: VerifierConfig,
}

fn verify_one(model: &Path, input: &Path) -> Result<(), Failure> {
    let params = load_model(model)?;
    let text = fs::read_to_string(input).map_err(|e| Failure::runtime(format!("{}: {e}", input.display())))?;
    let q: VerifyInput =
        serde_json::from_str(&text).map_err(|e| Failure::invalid(format!("{}: {e}", input.display())))?;
    if q.x.iter().any(|v| !v.is_finite()) {
        return Err(Failure::invalid("input contains a non-finite value"));
    }
    let label = match q.label {
        Some(l) => l,
        None => params.predict(&q.x).map_err(Failure::invalid)?,
    };
    if label >= params.class_count() {
        return Err(Failure::invalid(format!(
            "label {label} out of range for {} classes",
            params.class_count()
        )));
    }
    if q.verifier.node_budget == 0 {
        return Err(Failure::invalid("verifier.node_budget must be positive"));
    }
    let domain = q.domain.unwrap_or_else(|| InputBox::unit(params.input_dim()));
    let root = Sample::new(q.x, label);
    let report = min_adversary(&params, &root, 0, q.eps, &domain, &q.verifier).map_err(Failure::invalid)?;
    println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    Ok(())
}

fn export_raster(model: &Path, resolution: usize, output: Option<&Path>) -> Result<(), Failure> {
    let params = load_model(model)?;
    let raster = export_boundary_raster(&params, resolution).map_err(Failure::invalid)?;
    let csv = raster.to_csv();
    match output {
        Some(p) => fs::write(p, csv).map_err(|e| Failure::runtime(format!("{}: {e}", p.display()))),
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::VerifyOne { model, input } => verify_one(&model, &input),
        Command::ExportRaster {
            model,
            resolution,
            output,
        } => export_raster(&model, resolution, output.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
