//! Browser bindings for a small 2D run: train, click to verify, augment.

use iada_core::datasets::Ground2D;
use iada_core::engine::{
    train_iada, train_regular, IadaConfig, OracleLabeler, RenderHint, SchedulerConfig, SchedulerMode, TrainConfig,
};
use iada_core::eval::{accuracy, export_boundary_raster};
use iada_core::nn::{AdamConfig, ModelParams, Sample};
use iada_core::verifier::{min_adversary, InputBox, VerifierConfig};
use wasm_bindgen::prelude::*;

// Errors cross into JS as plain strings.
fn js_err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

#[wasm_bindgen]
pub struct Demo {
    ground: Ground2D,
    data: Vec<Sample>,
    test: Vec<Sample>,
    params: Option<ModelParams>,
    seed: u64,
}

#[wasm_bindgen]
impl Demo {
    /// `n` ground-truth samples on the unit square.
    #[wasm_bindgen(constructor)]
    pub fn new(n: usize, seed: u64) -> Demo {
        let ground = Ground2D::default();
        let data = ground.sample(n, seed);
        let test = ground.sample(2000, seed ^ 0xface);
        Demo {
            ground,
            data,
            test,
            params: None,
            seed,
        }
    }

    fn train_config(&self, epochs: usize) -> TrainConfig {
        TrainConfig {
            hidden: vec![32],
            classes: 2,
            epochs,
            batch_size: None,
            adam: AdamConfig::default(),
            seed: self.seed,
        }
    }

    /// Regular training from scratch; returns test accuracy.
    pub fn train(&mut self, epochs: usize) -> Result<f64, String> {
        let p = train_regular(&self.data, &self.train_config(epochs)).map_err(js_err)?;
        let acc = accuracy(&p, &self.test).map_err(js_err)?;
        self.params = Some(p);
        Ok(acc)
    }

    /// Training with verification rounds every `r_v` epochs, labeling
    /// adversaries by the ground truth. Returns test accuracy; the training
    /// set grows by the labeled adversaries.
    pub fn train_augmented(&mut self, epochs: usize, r_v: usize, eps: f64) -> Result<f64, String> {
        let cfg = IadaConfig {
            train: self.train_config(epochs),
            eps,
            r_v,
            c: 200,
            scheduler: SchedulerConfig {
                d: eps / 2.0,
                ensemble_size: 0,
                ensemble_epochs: 0,
                mode: SchedulerMode::AlwaysHuman,
            },
            verifier: VerifierConfig {
                node_budget: 2000,
                ..VerifierConfig::default()
            },
            domain: InputBox::unit(2),
            requeue_assumed: false,
            verify_at_start: false,
            hint: RenderHint::Point2d,
        };
        let mut labeler = OracleLabeler::ground2d(self.ground.clone());
        let run = train_iada(&self.data, &cfg, &mut labeler).map_err(js_err)?;
        self.data = run.state.training_samples().into_iter().cloned().collect();
        let acc = accuracy(&run.params, &self.test).map_err(js_err)?;
        self.params = Some(run.params);
        Ok(acc)
    }

    /// Predicted class per cell, row-major, row 0 at the bottom (`x₂` small).
    pub fn raster(&self, resolution: usize) -> Result<Vec<u8>, String> {
        let p = self.params.as_ref().ok_or("train first")?;
        let r = export_boundary_raster(p, resolution).map_err(js_err)?;
        Ok(r.cells.iter().flatten().map(|&c| c as u8).collect())
    }

    /// Flattened `[x₁, x₂, y]` triples of the current training set.
    pub fn points(&self) -> Vec<f64> {
        self.data.iter().flat_map(|s| [s.x[0], s.x[1], s.y as f64]).collect()
    }

    /// Minimal L∞ adversary of the point under its predicted class, as JSON.
    pub fn verify(&self, x1: f64, x2: f64, eps: f64) -> Result<String, String> {
        let p = self.params.as_ref().ok_or("train first")?;
        let x = vec![x1, x2];
        let y = p.predict(&x).map_err(js_err)?;
        let cfg = VerifierConfig::default();
        let report = min_adversary(p, &Sample::new(x, y), 0, eps, &InputBox::unit(2), &cfg).map_err(js_err)?;
        serde_json::to_string(&report).map_err(js_err)
    }
}
