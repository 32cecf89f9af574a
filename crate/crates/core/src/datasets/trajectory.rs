//! Synthetic wrist-trajectory windows with four scripted motion types.
//!
//! A window is 10 timesteps of both wrists' 3D positions, flattened
//! step-major as `[t][wrist][xyz]` into 60 values in `[0, 1]`. This is a
//! stand-in for recorded motion capture, not a reproduction of it.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::nn::Sample;

pub const STEPS: usize = 10;
pub const WRISTS: usize = 2;
pub const DIM: usize = STEPS * WRISTS * 3;
/// Largest per-axis displacement between consecutive steps.
pub const VELOCITY_CAP: f64 = 0.08;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrajectoryClass {
    Assembling,
    Retrieving,
    Reaching,
    Abnormal,
}

impl TrajectoryClass {
    pub const ALL: [TrajectoryClass; 4] = [Self::Assembling, Self::Retrieving, Self::Reaching, Self::Abnormal];

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Position of `wrist` at phase `s ∈ [0, 1]` for the noiseless archetype.
fn archetype_point(class: TrajectoryClass, wrist: usize, s: f64) -> [f64; 3] {
    let side = if wrist == 0 { 1.0 } else { -1.0 };
    let base = [0.5 + 0.12 * side, 0.45, 0.4];
    match class {
        // small circles in front of the torso
        TrajectoryClass::Assembling => {
            let a = TAU * 1.2 * s + wrist as f64 * 0.5;
            [
                base[0] + 0.06 * a.cos(),
                base[1] + 0.06 * a.sin(),
                base[2] + 0.02 * (2.0 * a).sin(),
            ]
        }
        // right wrist sweeps out to the side and back, left holds
        TrajectoryClass::Retrieving => {
            let k = if wrist == 0 { 1.0 } else { 0.15 };
            let out = (std::f64::consts::PI * s).sin();
            [
                base[0] + k * 0.22 * out,
                base[1] - k * 0.1 * out,
                base[2] + k * 0.05 * out,
            ]
        }
        // right wrist moves steadily forward and up, left drifts
        TrajectoryClass::Reaching => {
            let k = if wrist == 0 { 1.0 } else { 0.2 };
            [base[0] + k * 0.05 * s, base[1] + k * 0.15 * s, base[2] + k * 0.45 * s]
        }
        // jittery zig-zag of both wrists
        TrajectoryClass::Abnormal => {
            let step = (s * (STEPS - 1) as f64).round() as i64;
            let zig = if step % 2 == 0 { 1.0 } else { -1.0 };
            [base[0] + 0.035 * zig * side, base[1] + 0.03 * zig, base[2] - 0.1 * s]
        }
    }
}

/// The noiseless window of a class.
pub fn archetype(class: TrajectoryClass) -> Vec<f64> {
    let mut out = Vec::with_capacity(DIM);
    for t in 0..STEPS {
        let s = t as f64 / (STEPS - 1) as f64;
        for w in 0..WRISTS {
            out.extend_from_slice(&archetype_point(class, w, s));
        }
    }
    out
}

/// Largest per-axis displacement between consecutive steps.
pub fn max_step(window: &[f64]) -> f64 {
    let stride = WRISTS * 3;
    (stride..window.len())
        .map(|i| (window[i] - window[i - stride]).abs())
        .fold(0.0, f64::max)
}

/// `n` windows, classes cycling so the set is balanced. `noise` scales every
/// random perturbation; 0 reproduces the archetypes exactly.
pub fn gen_trajectories(n: usize, seed: u64, noise: f64) -> Vec<Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let class = TrajectoryClass::ALL[i % 4];
            if noise == 0.0 {
                return Sample::new(archetype(class), class.index());
            }
            let offset: Vec<f64> = (0..WRISTS * 3).map(|_| noise * rng.gen_range(-0.08..0.08)).collect();
            let speed = 1.0 + noise * rng.gen_range(-0.2..0.2);
            let phase = noise * rng.gen_range(0.0..0.1);
            let mut raw = Vec::with_capacity(DIM);
            for t in 0..STEPS {
                let s = (phase + speed * t as f64 / (STEPS - 1) as f64).clamp(0.0, 1.2);
                for w in 0..WRISTS {
                    let p = archetype_point(class, w, s);
                    for a in 0..3 {
                        raw.push(p[a] + offset[w * 3 + a] + noise * rng.gen_range(-0.012..0.012));
                    }
                }
            }
            Sample::new(enforce_limits(raw), class.index())
        })
        .collect()
}

/// Clamp step displacements to the velocity cap, then positions to `[0, 1]`.
/// Clamping positions cannot enlarge a step, so both limits hold afterwards.
fn enforce_limits(mut w: Vec<f64>) -> Vec<f64> {
    let stride = WRISTS * 3;
    for i in stride..w.len() {
        let prev = w[i - stride];
        w[i] = w[i].clamp(prev - VELOCITY_CAP, prev + VELOCITY_CAP);
    }
    for v in &mut w {
        *v = v.clamp(0.0, 1.0);
    }
    w
}
