//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use iada_core::lp::{solve_lp, LinearProgram, LpStatus, RowKind};
use iada_core::nn::{Layer, ModelParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub mod traces;

/// Affine map `x ↦ A x + c` of one neuron or logit under a fixed activation pattern.
#[derive(Clone)]
pub struct Affine {
    pub a: Vec<f64>,
    pub c: f64,
}

/// Network with weights in `±scale` and biases in `±1`, wide enough that
/// decision boundaries cross small balls.
pub fn random_net(dims: &[usize], seed: u64, scale: f64) -> ModelParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = dims
        .windows(2)
        .map(|w| Layer {
            inputs: w[0],
            outputs: w[1],
            weights: (0..w[0] * w[1]).map(|_| rng.gen_range(-scale..scale)).collect(),
            bias: (0..w[1]).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        })
        .collect();
    ModelParams::new(layers).unwrap()
}

/// Forward pass written without the library: plain nested loops.
pub fn reference_forward(params: &ModelParams, x: &[f64]) -> Vec<f64> {
    let layers = params.layers();
    let mut cur = x.to_vec();
    for (k, l) in layers.iter().enumerate() {
        let mut out = vec![0.0; l.outputs];
        for j in 0..l.outputs {
            let mut s = 0.0;
            for i in 0..l.inputs {
                s += l.weights[j * l.inputs + i] * cur[i];
            }
            s += l.bias[j];
            out[j] = if k + 1 < layers.len() { s.max(0.0) } else { s };
        }
        cur = out;
    }
    cur
}

/// Pre-activations of every hidden neuron and the logits as affine maps of the
/// input, valid in the region where `pattern` holds.
pub fn pattern_affines(params: &ModelParams, pattern: &[bool]) -> (Vec<Affine>, Vec<Affine>) {
    let n = params.input_dim();
    let layers = params.layers();
    let mut cur: Vec<Affine> = (0..n)
        .map(|i| {
            let mut a = vec![0.0; n];
            a[i] = 1.0;
            Affine { a, c: 0.0 }
        })
        .collect();
    let mut hidden = Vec::new();
    let mut k = 0;
    for (li, l) in layers.iter().enumerate() {
        let mut pre = Vec::new();
        for j in 0..l.outputs {
            let mut a = vec![0.0; n];
            let mut c = l.bias[j];
            for i in 0..l.inputs {
                let w = l.weights[j * l.inputs + i];
                c += w * cur[i].c;
                for (ak, ck) in a.iter_mut().zip(&cur[i].a) {
                    *ak += w * ck;
                }
            }
            pre.push(Affine { a, c });
        }
        if li + 1 == layers.len() {
            return (hidden, pre);
        }
        cur = pre
            .iter()
            .map(|z| {
                let on = pattern[k];
                k += 1;
                if on {
                    z.clone()
                } else {
                    Affine {
                        a: vec![0.0; n],
                        c: 0.0,
                    }
                }
            })
            .collect();
        hidden.extend(pre);
    }
    unreachable!()
}

/// Minimal L∞ distance from `x0` to a point in `[0,1]^n` whose argmax
/// (lowest index on ties) differs from `root`, by enumerating every activation pattern and
/// solving one direct radius LP per pattern.
pub fn enumeration_min_radius(params: &ModelParams, x0: &[f64], root: usize, eps: f64) -> Option<f64> {
    let n = params.input_dim();
    let h: usize = params.hidden_dims().iter().sum();
    let mut best: Option<f64> = None;
    for mask in 0u64..(1 << h) {
        let pattern: Vec<bool> = (0..h).map(|k| mask >> k & 1 == 1).collect();
        let (hidden, logits) = pattern_affines(params, &pattern);
        for target in (0..logits.len()).filter(|&t| t != root) {
            // variables: x_0..x_{n-1}, r
            let mut obj = vec![0.0; n + 1];
            obj[n] = 1.0;
            let mut lp = LinearProgram::new(obj);
            for i in 0..n {
                lp.set_bounds(i, 0.0, 1.0);
                let mut up = vec![0.0; n + 1];
                up[i] = 1.0;
                up[n] = -1.0;
                lp.add_row(up, RowKind::Le, x0[i]);
                let mut dn = vec![0.0; n + 1];
                dn[i] = 1.0;
                dn[n] = 1.0;
                lp.add_row(dn, RowKind::Ge, x0[i]);
            }
            lp.set_bounds(n, 0.0, eps);
            for (z, on) in hidden.iter().zip(&pattern) {
                let mut row = z.a.clone();
                row.push(0.0);
                lp.add_row(row, if *on { RowKind::Ge } else { RowKind::Le }, -z.c);
            }
            let mut m: Vec<f64> = logits[target]
                .a
                .iter()
                .zip(&logits[root].a)
                .map(|(a, b)| a - b)
                .collect();
            m.push(0.0);
            let lead = if target < root { 0.0 } else { 1e-6 };
            lp.add_row(m, RowKind::Ge, lead + logits[root].c - logits[target].c);
            let sol = solve_lp(&lp).unwrap();
            assert!(
                matches!(sol.status, LpStatus::Optimal | LpStatus::Infeasible),
                "oracle LP broke down: {:?}",
                sol.status
            );
            if sol.status == LpStatus::Optimal {
                let r = sol.x[n];
                if best.is_none_or(|b| r < b) {
                    best = Some(r);
                }
            }
        }
    }
    best
}

/// Cross-entropy by the textbook formula with the max shifted out, summed in
/// ascending order of magnitude.
pub fn reference_cross_entropy(logits: &[f64], y: usize) -> f64 {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut terms: Vec<f64> = logits.iter().map(|z| (z - m).exp()).collect();
    terms.sort_by(|a, b| a.partial_cmp(b).unwrap());
    m + terms.iter().sum::<f64>().ln() - logits[y]
}

/// Central-difference gradient of `loss` over every weight and bias, in the
/// order of `Grads::values`.
pub fn finite_difference(params: &ModelParams, h: f64, loss: impl Fn(&ModelParams) -> f64) -> Vec<f64> {
    let layers = params.layers().to_vec();
    let mut out = Vec::new();
    for k in 0..layers.len() {
        let count = layers[k].weights.len() + layers[k].bias.len();
        for idx in 0..count {
            let eval = |delta: f64| {
                let mut ls = layers.clone();
                let l = &mut ls[k];
                let nw = l.weights.len();
                if idx < nw {
                    l.weights[idx] += delta;
                } else {
                    l.bias[idx - nw] += delta;
                }
                loss(&ModelParams::new(ls).unwrap())
            };
            out.push((eval(h) - eval(-h)) / (2.0 * h));
        }
    }
    out
}

/// `‖a − b‖ / max(‖a‖, ‖b‖, tiny)`.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / na.max(nb).max(1e-12)
}

/// Random architecture, parameters, batch and radius for gradient checks.
pub struct GradCase {
    pub params: ModelParams,
    pub batch: Vec<iada_core::nn::Sample>,
    pub eps: f64,
}

pub fn grad_case(seed: u64) -> GradCase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let input = rng.gen_range(1..5);
    let depth = rng.gen_range(1..3);
    let classes = rng.gen_range(2..5);
    let mut dims = vec![input];
    dims.extend((0..depth).map(|_| rng.gen_range(2..7)));
    dims.push(classes);
    let params = random_net(&dims, seed ^ 0x51, 1.0);
    let batch = (0..rng.gen_range(1..6))
        .map(|_| {
            let x = (0..input).map(|_| rng.gen_range(0.0..1.0)).collect();
            iada_core::nn::Sample::new(x, rng.gen_range(0..classes))
        })
        .collect();
    GradCase {
        params,
        batch,
        eps: rng.gen_range(0.0..0.15),
    }
}
