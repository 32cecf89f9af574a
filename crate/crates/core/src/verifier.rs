//! Minimal L∞ adversaries by exact branch-and-bound over ReLU phases.
//!
//! For a root `(x0, y)` and radius cap `eps` the verifier finds the smallest
//! `r = ‖x' − x0‖∞ ≤ eps` at which some class beats `y`. Each branch-and-bound
//! node fixes the phase of some hidden neurons; every other neuron whose
//! interval bounds straddle zero is replaced by its LP relaxation (the big-M
//! encoding with the binary relaxed to `[0, 1]`, projected onto the neuron's
//! `(z, h)` plane).
//!
//! A node is solved through the slack LP
//!
//! ```text
//! g(r) = max t  s.t.  x ∈ box(r) ∩ domain,
//!                     relaxation rows for unfixed neurons,
//!                     z_j ≥ t (fixed active),  −z_j ≥ t (fixed inactive),
//!                     logit_target − logit_root − margin ≥ t
//! ```
//!
//! `g` is concave and nondecreasing in `r`, and the node's minimal radius is
//! the smallest `r` with `g(r) ≥ 0`. The reduced costs of the input
//! coordinates give a piecewise-linear upper bound of `g` that is tight at the
//! current `r`; its root is the next iterate, so the search climbs from below
//! and every iterate is a valid lower bound. This keeps the L∞ coupling out of
//! the constraint matrix, which matters for 784-dimensional inputs.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{NnError, VerifyError};
use crate::lp::{solve_lp_from, Basis, LinearProgram, RowKind};
use crate::nn::{argmax, ModelParams, Sample};
use crate::util::{par_map, Stopwatch};

/// Axis-aligned input domain, e.g. `[0, 1]` per pixel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl InputBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Self {
        assert_eq!(lower.len(), upper.len(), "box bounds must have equal length");
        Self { lower, upper }
    }

    pub fn unit(dim: usize) -> Self {
        Self::new(vec![0.0; dim], vec![1.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(&self.lower)
                .zip(&self.upper)
                .all(|((v, l), u)| l <= v && v <= u)
    }

    /// Intersection of the domain with the L∞ ball of radius `r` around `x0`.
    pub fn ball(&self, x0: &[f64], r: f64) -> (Vec<f64>, Vec<f64>) {
        let lo = x0.iter().zip(&self.lower).map(|(x, l)| (x - r).max(*l)).collect();
        let hi = x0.iter().zip(&self.upper).map(|(x, u)| (x + r).min(*u)).collect();
        (lo, hi)
    }
}

/// Sound pre-activation intervals of every hidden neuron.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivationBounds {
    pub lower: Vec<Vec<f64>>,
    pub upper: Vec<Vec<f64>>,
}

impl ActivationBounds {
    pub fn is_active(&self, layer: usize, j: usize) -> bool {
        self.lower[layer][j] >= 0.0
    }

    pub fn is_inactive(&self, layer: usize, j: usize) -> bool {
        self.upper[layer][j] <= 0.0
    }

    pub fn unstable_count(&self) -> usize {
        self.lower
            .iter()
            .zip(&self.upper)
            .flat_map(|(l, u)| l.iter().zip(u))
            .filter(|(l, u)| **l < 0.0 && **u > 0.0)
            .count()
    }
}

/// Layer-wise interval arithmetic over `{x : ‖x − x0‖∞ ≤ eps} ∩ domain`.
pub fn interval_bounds(
    params: &ModelParams,
    x0: &[f64],
    eps: f64,
    domain: &InputBox,
) -> Result<ActivationBounds, VerifyError> {
    check_query(params, x0, eps, domain)?;
    let (lo, hi) = domain.ball(x0, eps);
    let phases = vec![None; params.hidden_dims().iter().sum()];
    let p = propagate(params, &lo, &hi, &phases).expect("unconstrained propagation is always feasible");
    Ok(ActivationBounds {
        lower: p.pre_lo,
        upper: p.pre_hi,
    })
}

fn check_query(params: &ModelParams, x0: &[f64], eps: f64, domain: &InputBox) -> Result<(), VerifyError> {
    if x0.len() != params.input_dim() {
        return Err(NnError::DimensionMismatch {
            expected: params.input_dim(),
            got: x0.len(),
        }
        .into());
    }
    if domain.dim() != params.input_dim() {
        return Err(VerifyError::DomainMismatch {
            expected: params.input_dim(),
            got: domain.dim(),
        });
    }
    if !(eps >= 0.0 && eps.is_finite()) {
        return Err(VerifyError::BadRadius(eps));
    }
    if let Some(i) = (0..x0.len()).find(|&i| !(domain.lower[i] <= x0[i] && x0[i] <= domain.upper[i])) {
        return Err(VerifyError::RootOutsideDomain(i));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Phase {
    Active,
    Inactive,
}

struct Propagated {
    pre_lo: Vec<Vec<f64>>,
    pre_hi: Vec<Vec<f64>>,
}

fn interval_affine(layer: &crate::nn::Layer, lo: &[f64], hi: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut zl = Vec::with_capacity(layer.outputs);
    let mut zu = Vec::with_capacity(layer.outputs);
    for j in 0..layer.outputs {
        let (mut a, mut b) = (layer.bias[j], layer.bias[j]);
        for ((w, l), u) in layer.row(j).iter().zip(lo).zip(hi) {
            if *w >= 0.0 {
                a += w * l;
                b += w * u;
            } else {
                a += w * u;
                b += w * l;
            }
        }
        zl.push(a);
        zu.push(b);
    }
    (zl, zu)
}

/// Interval propagation honoring fixed phases. `None` when a fixed phase is
/// impossible anywhere in the box.
///
/// A neuron fixed active passes its whole pre-activation interval on (not
/// clipped at zero) because the node LP only enforces its sign softly.
fn propagate(params: &ModelParams, lo: &[f64], hi: &[f64], phases: &[Option<Phase>]) -> Option<Propagated> {
    let layers = params.layers();
    let mut cur_lo = lo.to_vec();
    let mut cur_hi = hi.to_vec();
    let mut pre_lo = Vec::new();
    let mut pre_hi = Vec::new();
    let mut offset = 0;
    for layer in &layers[..layers.len() - 1] {
        let (zl, zu) = interval_affine(layer, &cur_lo, &cur_hi);
        let mut nl = Vec::with_capacity(zl.len());
        let mut nu = Vec::with_capacity(zl.len());
        for j in 0..zl.len() {
            match phases[offset + j] {
                Some(Phase::Active) => {
                    if zu[j] < 0.0 {
                        return None;
                    }
                    nl.push(zl[j]);
                    nu.push(zu[j]);
                }
                Some(Phase::Inactive) => {
                    if zl[j] > 0.0 {
                        return None;
                    }
                    nl.push(0.0);
                    nu.push(0.0);
                }
                None => {
                    nl.push(zl[j].max(0.0));
                    nu.push(zu[j].max(0.0));
                }
            }
        }
        offset += zl.len();
        pre_lo.push(zl);
        pre_hi.push(zu);
        cur_lo = nl;
        cur_hi = nu;
    }
    Some(Propagated { pre_lo, pre_hi })
}

/// A label-flipping input close to a root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdversaryResult {
    pub x_prime: Vec<f64>,
    pub delta: f64,
    pub target_class: usize,
    pub root_id: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VerifyOutcome {
    RobustWithin {
        eps: f64,
    },
    Found(AdversaryResult),
    RootMisclassified {
        predicted: usize,
    },
    /// Node budget exhausted. `best` is the smallest adversary seen so far,
    /// `lower_bound` a proven lower bound on the minimal radius.
    Timeout {
        best: Option<AdversaryResult>,
        lower_bound: f64,
    },
}

impl VerifyOutcome {
    pub fn kind(&self) -> &'static str {
        match self {
            VerifyOutcome::RobustWithin { .. } => "robust_within",
            VerifyOutcome::Found(_) => "found",
            VerifyOutcome::RootMisclassified { .. } => "root_misclassified",
            VerifyOutcome::Timeout { .. } => "timeout",
        }
    }

    /// The adversary, proven minimal or not.
    pub fn adversary(&self) -> Option<&AdversaryResult> {
        match self {
            VerifyOutcome::Found(a) => Some(a),
            VerifyOutcome::Timeout { best, .. } => best.as_ref(),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RadiusSearch {
    /// Dual-bound Newton iteration on the radius.
    Newton,
    /// Bisection on the radius; slower, kept for debugging.
    Bisection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VerifierConfig {
    /// LP solves allowed per (root, target class) search.
    pub node_budget: usize,
    /// Required logit lead of a higher-indexed adversarial class, so the argmax
    /// really flips.
    pub margin: f64,
    /// Nodes whose lower bound is within this of the incumbent are pruned.
    pub gap: f64,
    pub search: RadiusSearch,
    /// Seed the incumbent with a cheap linearization attack.
    pub attack: bool,
}

impl Default for VerifierConfig {
    fn default() -> Self {
        Self {
            node_budget: 50_000,
            margin: 1e-6,
            gap: 1e-5,
            search: RadiusSearch::Newton,
            attack: true,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct QueryStats {
    pub nodes: usize,
    pub lp_solves: usize,
    /// Simplex pivots and bound flips over all solves.
    pub lp_iterations: usize,
    pub numerical_failures: usize,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub outcome: VerifyOutcome,
    pub stats: QueryStats,
}

/// Minimal L∞ adversary of `root` within `eps`, minimal up to `cfg.gap`
/// plus the margin's distance.
pub fn min_adversary(
    params: &ModelParams,
    root: &Sample,
    root_id: u64,
    eps: f64,
    domain: &InputBox,
    cfg: &VerifierConfig,
) -> Result<VerifyReport, VerifyError> {
    check_query(params, &root.x, eps, domain)?;
    let clock = Stopwatch::start();
    let predicted = params.predict(&root.x)?;
    if predicted != root.y {
        return Ok(VerifyReport {
            outcome: VerifyOutcome::RootMisclassified { predicted },
            stats: QueryStats {
                wall_ms: clock.elapsed_ms(),
                ..QueryStats::default()
            },
        });
    }
    let mut search = Search {
        params,
        x0: &root.x,
        y: root.y,
        root_id,
        eps,
        domain,
        cfg,
        hidden: params.hidden_dims(),
        incumbent: None,
        stats: QueryStats::default(),
    };

    let mut targets: Vec<(usize, f64)> = (0..params.class_count())
        .filter(|&t| t != root.y)
        .map(|t| {
            let d = if cfg.attack { search.attack(t) } else { None };
            (t, d.unwrap_or(f64::INFINITY))
        })
        .collect();
    targets.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));

    let mut open_bound = f64::INFINITY;
    for (t, _) in targets {
        if let Some(lb) = search.branch_and_bound(t) {
            open_bound = open_bound.min(lb);
        }
    }
    search.stats.wall_ms = clock.elapsed_ms();
    let incumbent = search.incumbent.take();
    let outcome = match (incumbent, open_bound.is_finite()) {
        (Some(best), false) => VerifyOutcome::Found(best),
        // Open nodes left behind cannot beat the incumbent by more than the tolerance.
        (Some(best), true) if open_bound >= best.delta - 1e-4 => VerifyOutcome::Found(best),
        (best, true) => VerifyOutcome::Timeout {
            lower_bound: best.as_ref().map_or(open_bound, |b| open_bound.min(b.delta)),
            best,
        },
        (None, false) => VerifyOutcome::RobustWithin { eps },
    };
    Ok(VerifyReport {
        outcome,
        stats: search.stats,
    })
}

#[derive(Debug)]
struct Node {
    phases: Vec<Option<Phase>>,
    lower_bound: f64,
    seq: u64,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    // Max-heap: the smallest lower bound, then the oldest node, pops first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .lower_bound
            .total_cmp(&self.lower_bound)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

enum NodeSolve {
    Infeasible,
    /// Node minimum radius and the LP point realizing it.
    Feasible {
        radius: f64,
        lp: NodeLpPoint,
    },
    /// LP breakdown; the lower bound could not be improved.
    Failed,
}

struct NodeLpPoint {
    x: Vec<f64>,
    /// `(flat neuron index, h − max(0, z))` for every relaxed neuron.
    violations: Vec<(usize, f64)>,
}

struct Search<'a> {
    params: &'a ModelParams,
    x0: &'a [f64],
    y: usize,
    root_id: u64,
    eps: f64,
    domain: &'a InputBox,
    cfg: &'a VerifierConfig,
    hidden: Vec<usize>,
    incumbent: Option<AdversaryResult>,
    stats: QueryStats,
}

/// What the node LP knows about one hidden neuron.
#[derive(Clone, Copy)]
enum NeuronForm {
    Zero,
    Linear,
    Relaxed { var: usize },
}

/// Affine expression over the node LP's variables.
#[derive(Clone)]
struct Expr {
    coeffs: Vec<f64>,
    constant: f64,
}

impl<'a> Search<'a> {
    fn cap(&self) -> f64 {
        self.incumbent.as_ref().map_or(self.eps, |b| b.delta.min(self.eps))
    }

    /// Accept `x` as incumbent if the forward pass really flips the label.
    fn offer(&mut self, x: &[f64]) -> Option<f64> {
        let (lo, hi) = self.domain.ball(self.x0, self.eps);
        let x: Vec<f64> = x
            .iter()
            .zip(lo.iter().zip(&hi))
            .map(|(v, (l, u))| v.clamp(*l, *u))
            .collect();
        let logits = self.params.forward(&x).ok()?;
        let cls = argmax(&logits);
        if cls == self.y {
            return None;
        }
        let delta = linf(&x, self.x0);
        if self.incumbent.as_ref().is_none_or(|b| delta < b.delta) {
            self.incumbent = Some(AdversaryResult {
                x_prime: x,
                delta,
                target_class: cls,
                root_id: self.root_id,
            });
        }
        Some(delta)
    }

    /// Iterated linearization toward class `t`; returns the radius reached if it flips.
    fn attack(&mut self, t: usize) -> Option<f64> {
        let (lo, hi) = self.domain.ball(self.x0, self.eps);
        let mut x = self.x0.to_vec();
        for _ in 0..8 {
            let (_, pre) = crate::nn::trace(self.params, &x);
            let logits = pre.last().unwrap();
            let gap = logits[t] - logits[self.y];
            if gap > 0.0 {
                break;
            }
            let mut dl = vec![0.0; logits.len()];
            dl[t] = 1.0;
            dl[self.y] = -1.0;
            let g = input_gradient(self.params, &pre, dl);
            let movable: f64 = g
                .iter()
                .enumerate()
                .filter(|(i, gi)| if **gi > 0.0 { x[*i] < hi[*i] } else { x[*i] > lo[*i] })
                .map(|(_, gi)| gi.abs())
                .sum();
            if movable <= 1e-12 {
                return None;
            }
            let step = (-gap + self.cfg.margin) / movable * 1.05 + 1e-9;
            for i in 0..x.len() {
                x[i] = (x[i] + step * g[i].signum()).clamp(lo[i], hi[i]);
            }
        }
        self.offer(&x)
    }

    /// Branch and bound for one target class. Returns the smallest open lower
    /// bound when the node budget ran out.
    fn branch_and_bound(&mut self, target: usize) -> Option<f64> {
        let total: usize = self.hidden.iter().sum();
        let mut heap = BinaryHeap::new();
        let mut seq = 0u64;
        heap.push(Node {
            phases: vec![None; total],
            lower_bound: 0.0,
            seq,
        });
        let mut solves = 0usize;
        while let Some(node) = heap.pop() {
            let cap = self.cap();
            if self.incumbent.is_some() && node.lower_bound >= cap - self.cfg.gap {
                continue;
            }
            if node.lower_bound > cap {
                continue;
            }
            if solves >= self.cfg.node_budget {
                let open = heap.iter().map(|n| n.lower_bound).fold(node.lower_bound, f64::min);
                return Some(open);
            }
            self.stats.nodes += 1;
            let before = self.stats.lp_solves;
            let solved = self.solve_node(&node.phases, target, node.lower_bound, cap, self.margin_for(target));
            solves += self.stats.lp_solves - before;
            let (radius, lp) = match solved {
                NodeSolve::Infeasible => continue,
                NodeSolve::Failed => {
                    self.stats.numerical_failures += 1;
                    // Split blindly on the first free unstable neuron, keeping the parent's bound.
                    if let Some(k) = self.first_free_unstable(&node.phases, cap) {
                        for ph in [Phase::Active, Phase::Inactive] {
                            let mut phases = node.phases.clone();
                            phases[k] = Some(ph);
                            seq += 1;
                            heap.push(Node {
                                phases,
                                lower_bound: node.lower_bound,
                                seq,
                            });
                        }
                    }
                    continue;
                }
                NodeSolve::Feasible { radius, lp } => (radius, lp),
            };
            if self.incumbent.is_some() && radius >= self.cap() - self.cfg.gap {
                continue;
            }
            if let Some(d) = self.offer(&lp.x) {
                if d <= radius + self.cfg.gap {
                    continue;
                }
            }
            // Most fractional: the relaxed neuron farthest from both of its phases.
            let pick = lp
                .violations
                .iter()
                .filter(|(_, v)| *v > 1e-12)
                .fold(None::<(usize, f64)>, |best, &(k, v)| match best {
                    Some((_, bv)) if bv >= v => best,
                    _ => Some((k, v)),
                });
            let Some((k, _)) = pick else {
                // Exact relaxation, yet the forward pass keeps the root class: the
                // point sits on a tie it does not win. Ask for a strict lead instead.
                let before = self.stats.lp_solves;
                let strict = self.solve_node(&node.phases, target, radius, self.cap(), self.cfg.margin);
                solves += self.stats.lp_solves - before;
                let accepted = match strict {
                    NodeSolve::Feasible { lp, .. } => self.offer(&lp.x).is_some(),
                    NodeSolve::Infeasible => true,
                    NodeSolve::Failed => false,
                };
                if !accepted {
                    self.stats.numerical_failures += 1;
                }
                continue;
            };
            for ph in [Phase::Active, Phase::Inactive] {
                let mut phases = node.phases.clone();
                phases[k] = Some(ph);
                seq += 1;
                heap.push(Node {
                    phases,
                    lower_bound: radius,
                    seq,
                });
            }
        }
        None
    }

    fn first_free_unstable(&self, phases: &[Option<Phase>], cap: f64) -> Option<usize> {
        let (lo, hi) = self.domain.ball(self.x0, cap);
        let p = propagate(self.params, &lo, &hi, phases)?;
        let mut k = 0;
        for (l, u) in p.pre_lo.iter().zip(&p.pre_hi) {
            for j in 0..l.len() {
                if phases[k].is_none() && l[j] < 0.0 && u[j] > 0.0 {
                    return Some(k);
                }
                k += 1;
            }
        }
        None
    }

    /// Ties go to the lowest class index, so a lower-indexed target only has
    /// to draw level with the root class while a higher one must lead.
    fn margin_for(&self, target: usize) -> f64 {
        if target < self.y {
            0.0
        } else {
            self.cfg.margin
        }
    }

    fn solve_node(&mut self, phases: &[Option<Phase>], target: usize, start: f64, cap: f64, margin: f64) -> NodeSolve {
        let (blo, bhi) = self.domain.ball(self.x0, cap);
        let Some(bounds) = propagate(self.params, &blo, &bhi, phases) else {
            return NodeSolve::Infeasible;
        };
        let node_lp = NodeLp::build(self.params, &bounds, phases, target, self.y, margin);
        let mut eval = |r: f64, start: Option<&Basis>, stats: &mut QueryStats| {
            node_lp.evaluate(self.x0, self.domain, r, start, stats)
        };
        match self.cfg.search {
            RadiusSearch::Newton => newton(&mut eval, &mut self.stats, self.x0, self.domain, start, cap),
            RadiusSearch::Bisection => bisection(&mut eval, &mut self.stats, start, cap),
        }
    }
}

fn linf(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Gradient of `dlogits · logits` w.r.t. the input in the current linear region.
fn input_gradient(params: &ModelParams, pre: &[Vec<f64>], dlogits: Vec<f64>) -> Vec<f64> {
    let layers = params.layers();
    let mut delta = dlogits;
    for k in (0..layers.len()).rev() {
        let layer = &layers[k];
        let mut prev = vec![0.0; layer.inputs];
        for (j, dj) in delta.iter().enumerate() {
            if *dj != 0.0 {
                for (p, w) in prev.iter_mut().zip(layer.row(j)) {
                    *p += dj * w;
                }
            }
        }
        if k > 0 {
            for (p, z) in prev.iter_mut().zip(&pre[k - 1]) {
                if *z <= 0.0 {
                    *p = 0.0;
                }
            }
        }
        delta = prev;
    }
    delta
}

/// Value of the slack LP at one radius.
struct SlackPoint {
    slack: f64,
    /// Reduced costs of the input coordinates (minimization of `−t`).
    reduced: Vec<f64>,
    lp: NodeLpPoint,
    basis: Option<Basis>,
}

/// The node LP with everything but the input box fixed.
struct NodeLp {
    lp: LinearProgram,
    n_inputs: usize,
    t_var: usize,
    /// `(flat index, var, z expression)` for relaxed neurons.
    relaxed: Vec<(usize, usize, Expr)>,
    /// Inputs start at the bound that favors the target class.
    crash: Basis,
}

impl NodeLp {
    fn build(
        params: &ModelParams,
        bounds: &Propagated,
        phases: &[Option<Phase>],
        target: usize,
        root: usize,
        margin: f64,
    ) -> Self {
        let n = params.input_dim();
        let layers = params.layers();

        // Decide each neuron's form first so the variable count is known.
        let mut forms = Vec::new();
        let mut n_relaxed = 0;
        let mut k = 0;
        for (lo, hi) in bounds.pre_lo.iter().zip(&bounds.pre_hi) {
            for j in 0..lo.len() {
                let form = match phases[k] {
                    Some(Phase::Active) => NeuronForm::Linear,
                    Some(Phase::Inactive) => NeuronForm::Zero,
                    None if hi[j] <= 0.0 => NeuronForm::Zero,
                    None if lo[j] >= 0.0 => NeuronForm::Linear,
                    None => {
                        n_relaxed += 1;
                        NeuronForm::Relaxed { var: n + n_relaxed - 1 }
                    }
                };
                forms.push(form);
                k += 1;
            }
        }
        let nvars = n + n_relaxed + 1;
        let t_var = nvars - 1;
        let mut objective = vec![0.0; nvars];
        objective[t_var] = -1.0;
        let mut lp = LinearProgram::new(objective);
        lp.set_bounds(t_var, f64::NEG_INFINITY, 1.0);

        // Current layer outputs as expressions; inputs are the first n variables.
        let mut outs: Vec<Expr> = (0..n)
            .map(|i| {
                let mut c = vec![0.0; nvars];
                c[i] = 1.0;
                Expr {
                    coeffs: c,
                    constant: 0.0,
                }
            })
            .collect();
        let mut relaxed = Vec::new();
        let mut upper = Vec::new();
        let mut k = 0;
        let last = layers.len() - 1;
        for (li, layer) in layers.iter().enumerate() {
            let mut pre = Vec::with_capacity(layer.outputs);
            for j in 0..layer.outputs {
                let mut e = Expr {
                    coeffs: vec![0.0; nvars],
                    constant: layer.bias[j],
                };
                if li == 0 {
                    // Inputs are the variables themselves.
                    e.coeffs[..n].copy_from_slice(layer.row(j));
                    pre.push(e);
                    continue;
                }
                for (w, h) in layer.row(j).iter().zip(&outs) {
                    if *w == 0.0 {
                        continue;
                    }
                    e.constant += w * h.constant;
                    for (c, hc) in e.coeffs.iter_mut().zip(&h.coeffs) {
                        *c += w * hc;
                    }
                }
                pre.push(e);
            }
            if li == last {
                let mut row: Vec<f64> = pre[target]
                    .coeffs
                    .iter()
                    .zip(&pre[root].coeffs)
                    .map(|(a, b)| a - b)
                    .collect();
                row[t_var] = -1.0;
                upper.extend((0..n).filter(|&i| row[i] > 0.0));
                lp.add_row(row, RowKind::Ge, margin - (pre[target].constant - pre[root].constant));
                break;
            }
            let (lo, hi) = (&bounds.pre_lo[li], &bounds.pre_hi[li]);
            let mut next = Vec::with_capacity(layer.outputs);
            for (j, z) in pre.into_iter().enumerate() {
                let zero = Expr {
                    coeffs: vec![0.0; nvars],
                    constant: 0.0,
                };
                match (forms[k], phases[k]) {
                    (NeuronForm::Linear, Some(Phase::Active)) if lo[j] < 0.0 => {
                        let mut row = z.coeffs.clone();
                        row[t_var] = -1.0;
                        lp.add_row(row, RowKind::Ge, -z.constant);
                        next.push(z);
                    }
                    (NeuronForm::Linear, _) => next.push(z),
                    (NeuronForm::Zero, Some(Phase::Inactive)) if hi[j] > 0.0 => {
                        let mut row: Vec<f64> = z.coeffs.iter().map(|c| -c).collect();
                        row[t_var] = -1.0;
                        lp.add_row(row, RowKind::Ge, z.constant);
                        next.push(zero);
                    }
                    (NeuronForm::Zero, _) => next.push(zero),
                    (NeuronForm::Relaxed { var }, _) => {
                        let (l, u) = (lo[j], hi[j]);
                        lp.set_bounds(var, 0.0, u);
                        // h ≥ z
                        let mut r1: Vec<f64> = z.coeffs.iter().map(|c| -c).collect();
                        r1[var] += 1.0;
                        lp.add_row(r1, RowKind::Ge, z.constant);
                        // h ≤ u (z − l) / (u − l)
                        let s = u / (u - l);
                        let mut r2: Vec<f64> = z.coeffs.iter().map(|c| -s * c).collect();
                        r2[var] += 1.0;
                        lp.add_row(r2, RowKind::Le, s * (z.constant - l));
                        let mut h = zero;
                        h.coeffs[var] = 1.0;
                        relaxed.push((k, var, z));
                        next.push(h);
                    }
                }
                k += 1;
            }
            outs = next;
        }
        let crash = Basis::logical(nvars, lp.rows.len(), upper);
        Self {
            lp,
            n_inputs: n,
            t_var,
            relaxed,
            crash,
        }
    }

    fn evaluate(
        &self,
        x0: &[f64],
        domain: &InputBox,
        r: f64,
        start: Option<&Basis>,
        stats: &mut QueryStats,
    ) -> Option<SlackPoint> {
        let mut lp = self.lp.clone();
        let (lo, hi) = domain.ball(x0, r);
        for i in 0..self.n_inputs {
            lp.set_bounds(i, lo[i], hi[i]);
        }
        stats.lp_solves += 1;
        let sol = solve_lp_from(&lp, start.unwrap_or(&self.crash)).ok()?;
        stats.lp_iterations += sol.iterations;
        if !sol.is_optimal() {
            return None;
        }
        let violations = self
            .relaxed
            .iter()
            .map(|(k, var, z)| {
                let zv: f64 = z.constant + z.coeffs.iter().zip(&sol.x).map(|(c, v)| c * v).sum::<f64>();
                (*k, sol.x[*var] - zv.max(0.0))
            })
            .collect();
        Some(SlackPoint {
            slack: sol.x[self.t_var],
            reduced: sol.reduced_costs[..self.n_inputs].to_vec(),
            lp: NodeLpPoint {
                x: sol.x[..self.n_inputs].to_vec(),
                violations,
            },
            basis: sol.basis,
        })
    }
}

const SLACK_TOL: f64 = 1e-9;

/// Smallest `r' ≥ r` where the dual upper bound on `g` reaches zero, or
/// `None` if it stays negative up to `cap`.
fn dual_root(point: &SlackPoint, x0: &[f64], domain: &InputBox, r: f64, cap: f64) -> Option<f64> {
    // Each coordinate at an r-dependent bound raises the bound at rate |d_i|
    // until the domain clips it.
    let mut pieces: Vec<(f64, f64)> = Vec::new();
    for (i, &d) in point.reduced.iter().enumerate() {
        if d > 0.0 {
            let stop = x0[i] - domain.lower[i];
            if stop > r {
                pieces.push((stop, d));
            }
        } else if d < 0.0 {
            let stop = domain.upper[i] - x0[i];
            if stop > r {
                pieces.push((stop, -d));
            }
        }
    }
    pieces.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut slope: f64 = pieces.iter().map(|p| p.1).sum();
    let mut value = point.slack;
    let mut at = r;
    for (stop, s) in pieces {
        if slope > 0.0 {
            let root = at + (-value) / slope;
            if root <= stop {
                return (root <= cap).then_some(root);
            }
        }
        value += slope * (stop - at);
        at = stop;
        slope -= s;
    }
    None
}

fn newton(
    eval: &mut impl FnMut(f64, Option<&Basis>, &mut QueryStats) -> Option<SlackPoint>,
    stats: &mut QueryStats,
    x0: &[f64],
    domain: &InputBox,
    start: f64,
    cap: f64,
) -> NodeSolve {
    let mut r = start.min(cap);
    let mut basis: Option<Basis> = None;
    for _ in 0..60 {
        let Some(p) = eval(r, basis.as_ref(), stats) else {
            return NodeSolve::Failed;
        };
        if p.slack >= -SLACK_TOL {
            return NodeSolve::Feasible { radius: r, lp: p.lp };
        }
        match dual_root(&p, x0, domain, r, cap) {
            None => return NodeSolve::Infeasible,
            Some(next) => {
                // Guard against stalling on round-off.
                r = if next <= r + 1e-12 { (r + 1e-10).min(cap) } else { next };
                basis = p.basis;
            }
        }
    }
    NodeSolve::Failed
}

fn bisection(
    eval: &mut impl FnMut(f64, Option<&Basis>, &mut QueryStats) -> Option<SlackPoint>,
    stats: &mut QueryStats,
    start: f64,
    cap: f64,
) -> NodeSolve {
    let Some(top) = eval(cap, None, stats) else {
        return NodeSolve::Failed;
    };
    if top.slack < -SLACK_TOL {
        return NodeSolve::Infeasible;
    }
    let (mut lo, mut hi, mut best) = (start.min(cap), cap, top);
    while hi - lo > 1e-8 {
        let mid = 0.5 * (lo + hi);
        match eval(mid, best.basis.as_ref(), stats) {
            Some(p) if p.slack >= -SLACK_TOL => {
                hi = mid;
                best = p;
            }
            Some(_) => lo = mid,
            None => return NodeSolve::Failed,
        }
    }
    NodeSolve::Feasible {
        radius: lo,
        lp: best.lp,
    }
}

/// Verify many roots against one parameter snapshot; results keep root order.
pub fn verify_many(
    params: &ModelParams,
    roots: &[(u64, Sample)],
    eps: f64,
    domain: &InputBox,
    cfg: &VerifierConfig,
) -> Vec<Result<VerifyReport, VerifyError>> {
    par_map(roots, |(id, s)| min_adversary(params, s, *id, eps, domain, cfg))
}

/// Average minimal perturbation over a test set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationBound {
    pub p_b: f64,
    pub deltas: Vec<f64>,
    pub misclassified: usize,
    pub robust: usize,
    pub timeouts: usize,
}

/// `p_b = mean δ_t`: 0 for misclassified points, `eps` when no adversary
/// exists within `eps`, and for timeouts the best radius found (else `eps`).
pub fn average_perturbation_bound(
    params: &ModelParams,
    testset: &[Sample],
    eps: f64,
    domain: &InputBox,
    cfg: &VerifierConfig,
) -> Result<PerturbationBound, VerifyError> {
    if testset.is_empty() {
        return Err(NnError::EmptyBatch.into());
    }
    let roots: Vec<(u64, Sample)> = testset
        .iter()
        .cloned()
        .enumerate()
        .map(|(i, s)| (i as u64, s))
        .collect();
    let reports = verify_many(params, &roots, eps, domain, cfg);
    let mut out = PerturbationBound {
        p_b: 0.0,
        deltas: Vec::with_capacity(reports.len()),
        misclassified: 0,
        robust: 0,
        timeouts: 0,
    };
    for r in reports {
        let delta = match r?.outcome {
            VerifyOutcome::RootMisclassified { .. } => {
                out.misclassified += 1;
                0.0
            }
            VerifyOutcome::Found(a) => a.delta,
            VerifyOutcome::RobustWithin { eps } => {
                out.robust += 1;
                eps
            }
            VerifyOutcome::Timeout { best, .. } => {
                out.timeouts += 1;
                best.map_or(eps, |b| b.delta)
            }
        };
        out.deltas.push(delta);
    }
    out.p_b = out.deltas.iter().sum::<f64>() / out.deltas.len() as f64;
    Ok(out)
}

/// One line of the verifier query log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub root_id: u64,
    pub outcome: String,
    pub delta: Option<f64>,
    pub nodes: usize,
    pub lp_solves: usize,
    pub wall_ms: f64,
}

impl QueryRecord {
    pub fn from_report(root_id: u64, report: &VerifyReport) -> Self {
        Self {
            root_id,
            outcome: report.outcome.kind().to_string(),
            delta: report.outcome.adversary().map(|a| a.delta),
            nodes: report.stats.nodes,
            lp_solves: report.stats.lp_solves,
            wall_ms: report.stats.wall_ms,
        }
    }
}

/// Append query records as JSON lines.
pub fn append_query_log(path: &Path, records: &[QueryRecord]) -> std::io::Result<()> {
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    for r in records {
        serde_json::to_writer(&mut f, r)?;
        f.write_all(b"\n")?;
    }
    Ok(())
}
