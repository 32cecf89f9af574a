//! Certified-robust training with interval bound propagation.
//!
//! Each sample's ε-ball is pushed through the network in center/radius form.
//! The loss is cross-entropy on pessimized logits: the true class takes its
//! lower bound, every other class its upper bound.

use serde::{Deserialize, Serialize};

use crate::error::NnError;
use crate::nn::{cross_entropy, cross_entropy_grad, Grads, ModelParams, Sample};
use crate::verifier::InputBox;

/// Pessimized logits of one sample and the margins they certify.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorstCaseLogits {
    pub logits: Vec<f64>,
    /// `margins[j]` lower-bounds `logit_y − logit_j` over the ball; zero at `j = y`.
    pub margins: Vec<f64>,
}

struct BallTrace {
    /// Center and radius of each layer's input box.
    centers: Vec<Vec<f64>>,
    radii: Vec<Vec<f64>>,
    /// Pre-activation bounds per layer.
    lower: Vec<Vec<f64>>,
    upper: Vec<Vec<f64>>,
}

fn check(params: &ModelParams, s: &Sample, domain: &InputBox) -> Result<(), NnError> {
    if s.x.len() != params.input_dim() || domain.dim() != params.input_dim() {
        return Err(NnError::DimensionMismatch {
            expected: params.input_dim(),
            got: if s.x.len() != params.input_dim() {
                s.x.len()
            } else {
                domain.dim()
            },
        });
    }
    if s.y >= params.class_count() {
        return Err(NnError::LabelOutOfRange {
            label: s.y,
            classes: params.class_count(),
        });
    }
    Ok(())
}

fn propagate(params: &ModelParams, x: &[f64], eps: f64, domain: &InputBox) -> BallTrace {
    let (lo, hi) = domain.ball(x, eps);
    let mut c: Vec<f64> = lo.iter().zip(&hi).map(|(l, h)| 0.5 * (l + h)).collect();
    let mut r: Vec<f64> = lo.iter().zip(&hi).map(|(l, h)| 0.5 * (h - l)).collect();
    let layers = params.layers();
    let mut t = BallTrace {
        centers: Vec::with_capacity(layers.len()),
        radii: Vec::with_capacity(layers.len()),
        lower: Vec::with_capacity(layers.len()),
        upper: Vec::with_capacity(layers.len()),
    };
    let last = layers.len() - 1;
    for (k, layer) in layers.iter().enumerate() {
        let mut zc = Vec::new();
        layer.affine(&c, &mut zc);
        let zr: Vec<f64> = (0..layer.outputs)
            .map(|j| layer.row(j).iter().zip(&r).map(|(w, ri)| w.abs() * ri).sum())
            .collect();
        let zl: Vec<f64> = zc.iter().zip(&zr).map(|(a, b)| a - b).collect();
        let zu: Vec<f64> = zc.iter().zip(&zr).map(|(a, b)| a + b).collect();
        let (nc, nr) = if k == last {
            (Vec::new(), Vec::new())
        } else {
            zl.iter()
                .zip(&zu)
                .map(|(l, u)| {
                    let (l, u) = (l.max(0.0), u.max(0.0));
                    (0.5 * (l + u), 0.5 * (u - l))
                })
                .unzip()
        };
        t.centers.push(std::mem::replace(&mut c, nc));
        t.radii.push(std::mem::replace(&mut r, nr));
        t.lower.push(zl);
        t.upper.push(zu);
    }
    t
}

fn pessimize(lower: &[f64], upper: &[f64], y: usize) -> Vec<f64> {
    let mut z = upper.to_vec();
    z[y] = lower[y];
    z
}

pub fn worst_case_logits(
    params: &ModelParams,
    sample: &Sample,
    eps: f64,
    domain: &InputBox,
) -> Result<WorstCaseLogits, NnError> {
    check(params, sample, domain)?;
    let t = propagate(params, &sample.x, eps, domain);
    let (lo, hi) = (t.lower.last().unwrap(), t.upper.last().unwrap());
    let logits = pessimize(lo, hi, sample.y);
    let margins = (0..logits.len())
        .map(|j| if j == sample.y { 0.0 } else { lo[sample.y] - hi[j] })
        .collect();
    Ok(WorstCaseLogits { logits, margins })
}

/// Mean cross-entropy of the pessimized logits.
pub fn robust_loss(params: &ModelParams, batch: &[Sample], eps: f64, domain: &InputBox) -> Result<f64, NnError> {
    if batch.is_empty() {
        return Err(NnError::EmptyBatch);
    }
    let mut total = 0.0;
    for s in batch {
        total += cross_entropy(&worst_case_logits(params, s, eps, domain)?.logits, s.y);
    }
    Ok(total / batch.len() as f64)
}

/// Gradient of [`robust_loss`]. At `eps = 0` this is exactly
/// [`backward`](crate::nn::backward).
pub fn robust_backward(params: &ModelParams, batch: &[Sample], eps: f64, domain: &InputBox) -> Result<Grads, NnError> {
    robust_backward_refs(params, batch.iter(), eps, domain)
}

pub(crate) fn robust_backward_refs<'a>(
    params: &ModelParams,
    batch: impl ExactSizeIterator<Item = &'a Sample> + Clone,
    eps: f64,
    domain: &InputBox,
) -> Result<Grads, NnError> {
    if eps == 0.0 {
        for s in batch.clone() {
            check(params, s, domain)?;
        }
        return crate::nn::backward_refs(params, batch);
    }
    let n = batch.len();
    if n == 0 {
        return Err(NnError::EmptyBatch);
    }
    let mut grads = Grads::zeros_like(params);
    for s in batch {
        check(params, s, domain)?;
        accumulate(params, s, eps, domain, &mut grads);
    }
    grads.scale(1.0 / n as f64);
    Ok(grads)
}

fn accumulate(params: &ModelParams, s: &Sample, eps: f64, domain: &InputBox, grads: &mut Grads) {
    let t = propagate(params, &s.x, eps, domain);
    let layers = params.layers();
    let last = layers.len() - 1;
    let g = cross_entropy_grad(&pessimize(&t.lower[last], &t.upper[last], s.y), s.y);
    // Split the logit gradient onto lower (true class) and upper (others) bounds,
    // then into center/radius form: z_l = c − r, z_u = c + r.
    let mut dc: Vec<f64> = g.clone();
    let mut dr: Vec<f64> = g
        .iter()
        .enumerate()
        .map(|(j, v)| if j == s.y { -v } else { *v })
        .collect();
    for k in (0..layers.len()).rev() {
        let layer = &layers[k];
        let gl = &mut grads.layers[k];
        let (c, r) = (&t.centers[k], &t.radii[k]);
        for j in 0..layer.outputs {
            gl.bias[j] += dc[j];
            let row = layer.row(j);
            let out = &mut gl.weights[j * layer.inputs..(j + 1) * layer.inputs];
            for i in 0..layer.inputs {
                out[i] += dc[j] * c[i] + row[i].signum() * dr[j] * r[i];
            }
        }
        if k == 0 {
            break;
        }
        let mut pc = vec![0.0; layer.inputs];
        let mut pr = vec![0.0; layer.inputs];
        for j in 0..layer.outputs {
            for (i, w) in layer.row(j).iter().enumerate() {
                pc[i] += w * dc[j];
                pr[i] += w.abs() * dr[j];
            }
        }
        // Back through ReLU on the interval, case by case.
        let (zl, zu) = (&t.lower[k - 1], &t.upper[k - 1]);
        for i in 0..layer.inputs {
            if zl[i] > 0.0 {
                // fully active: the box passes through unchanged
            } else if zu[i] > 0.0 {
                // straddling: output box is [0, z_u] with center = radius = z_u / 2
                let du = 0.5 * (pc[i] + pr[i]);
                pc[i] = du;
                pr[i] = du;
            } else {
                pc[i] = 0.0;
                pr[i] = 0.0;
            }
        }
        dc = pc;
        dr = pr;
    }
}
