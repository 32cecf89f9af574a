//! Dense linear programming.
//!
//! Bounded-variable primal simplex on an explicit tableau. Every row
//! `a·x (<=|=|>=) b` gets a logical variable `w = a·x` whose bounds encode the
//! row type, so the working system is `A x - w = 0` with simple bounds on all
//! variables. Phase one minimizes the sum of bound violations of the basic
//! variables, phase two the real objective. Dantzig pricing switches to
//! Bland's rule after a run of degenerate pivots.
//!
//! Solutions are re-derived from a fresh factorization of the final basis and
//! checked against the original rows; anything that does not check out is
//! reported as [`LpStatus::NumericalFailure`] rather than returned as optimal.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Feasibility tolerance used to accept a returned solution.
pub const FEAS_TOL: f64 = 1e-7;
const PRIMAL_TOL: f64 = 1e-9;
const DUAL_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-9;
const DEGENERATE_RUN: usize = 30;
const REFACTOR_EVERY: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RowKind {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub coeffs: Vec<f64>,
    pub kind: RowKind,
    pub rhs: f64,
}

/// `minimize c·x` subject to rows and per-variable bounds.
///
/// Variables default to `[0, +inf)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub rows: Vec<Row>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("row {row} has {got} coefficients, expected {expected}")]
    RowWidth { row: usize, expected: usize, got: usize },
    #[error("non-finite coefficient in {0}")]
    NonFinite(&'static str),
    #[error("bound vectors have the wrong length")]
    BoundLength,
}

impl LinearProgram {
    pub fn new(objective: Vec<f64>) -> Self {
        let n = objective.len();
        Self {
            objective,
            rows: Vec::new(),
            lower: vec![0.0; n],
            upper: vec![f64::INFINITY; n],
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn add_row(&mut self, coeffs: Vec<f64>, kind: RowKind, rhs: f64) -> &mut Self {
        self.rows.push(Row { coeffs, kind, rhs });
        self
    }

    pub fn set_bounds(&mut self, var: usize, lower: f64, upper: f64) -> &mut Self {
        self.lower[var] = lower;
        self.upper[var] = upper;
        self
    }

    pub fn validate(&self) -> Result<(), LpError> {
        let n = self.num_vars();
        if self.lower.len() != n || self.upper.len() != n {
            return Err(LpError::BoundLength);
        }
        if self.objective.iter().any(|v| !v.is_finite()) {
            return Err(LpError::NonFinite("objective"));
        }
        for (i, r) in self.rows.iter().enumerate() {
            if r.coeffs.len() != n {
                return Err(LpError::RowWidth {
                    row: i,
                    expected: n,
                    got: r.coeffs.len(),
                });
            }
            if !r.rhs.is_finite() || r.coeffs.iter().any(|v| !v.is_finite()) {
                return Err(LpError::NonFinite("constraint row"));
            }
        }
        if self.lower.iter().chain(&self.upper).any(|v| v.is_nan())
            || self.lower.contains(&f64::INFINITY)
            || self.upper.contains(&f64::NEG_INFINITY)
        {
            return Err(LpError::NonFinite("variable bounds"));
        }
        Ok(())
    }

    /// Largest violation of rows and bounds at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (j, &v) in x.iter().enumerate() {
            worst = worst.max(self.lower[j] - v).max(v - self.upper[j]);
        }
        for r in &self.rows {
            let a: f64 = r.coeffs.iter().zip(x).map(|(c, v)| c * v).sum();
            let viol = match r.kind {
                RowKind::Le => a - r.rhs,
                RowKind::Ge => r.rhs - a,
                RowKind::Eq => (a - r.rhs).abs(),
            };
            worst = worst.max(viol);
        }
        worst
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NumericalFailure,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Primal point; meaningful only when optimal.
    pub x: Vec<f64>,
    pub objective: f64,
    /// Row multipliers `y` with `c_j - y·A_j` the structural reduced costs.
    pub duals: Vec<f64>,
    /// Reduced cost per structural variable. Positive at a lower bound,
    /// negative at an upper bound.
    pub reduced_costs: Vec<f64>,
    pub iterations: usize,
    /// Final basis, for warm-starting a related problem. Set when optimal.
    pub basis: Option<Basis>,
}

/// A simplex starting point. Columns `0..n` are the structural variables and
/// `n..n + m` the row logicals; nonbasic columns sit at the bound `at_upper`
/// names, or at their finite one.
#[derive(Debug, Clone, PartialEq)]
pub struct Basis {
    pub basic: Vec<usize>,
    pub at_upper: Vec<bool>,
}

impl Basis {
    /// All logicals basic, with the listed structurals at their upper bounds.
    pub fn logical(n: usize, m: usize, upper: impl IntoIterator<Item = usize>) -> Self {
        let mut at_upper = vec![false; n + m];
        for j in upper {
            at_upper[j] = true;
        }
        Self {
            basic: (n..n + m).collect(),
            at_upper,
        }
    }

    fn fits(&self, n: usize, m: usize) -> bool {
        let w = n + m;
        let mut seen = vec![false; w];
        self.basic.len() == m
            && self.at_upper.len() == w
            && self
                .basic
                .iter()
                .all(|&b| b < w && !std::mem::replace(&mut seen[b], true))
    }
}

impl LpSolution {
    fn failed(status: LpStatus, n: usize, m: usize, iterations: usize) -> Self {
        Self {
            status,
            x: vec![0.0; n],
            objective: f64::NAN,
            duals: vec![0.0; m],
            reduced_costs: vec![0.0; n],
            iterations,
            basis: None,
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}

pub fn solve_lp(lp: &LinearProgram) -> Result<LpSolution, LpError> {
    lp.validate()?;
    let n = lp.num_vars();
    let m = lp.rows.len();
    if lp.lower.iter().zip(&lp.upper).any(|(l, u)| l > u) {
        return Ok(LpSolution::failed(LpStatus::Infeasible, n, m, 0));
    }
    let mut s = Tableau::new(lp);
    Ok(s.run(lp))
}

/// [`solve_lp`] starting from `start`. A start that does not fit the problem
/// or whose basis matrix is singular falls back to the logical basis.
pub fn solve_lp_from(lp: &LinearProgram, start: &Basis) -> Result<LpSolution, LpError> {
    lp.validate()?;
    let n = lp.num_vars();
    let m = lp.rows.len();
    if lp.lower.iter().zip(&lp.upper).any(|(l, u)| l > u) {
        return Ok(LpSolution::failed(LpStatus::Infeasible, n, m, 0));
    }
    if !start.fits(n, m) {
        return solve_lp(lp);
    }
    let mut s = Tableau::new(lp);
    if !s.install(start) {
        s = Tableau::new(lp);
    }
    Ok(s.run(lp))
}

enum Step {
    Optimal,
    Unbounded,
    Progress,
}

struct Tableau {
    m: usize,
    n: usize,
    width: usize,
    /// `B^-1 [A | -I]`, row-major `m x width`.
    tab: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    val: Vec<f64>,
    basis: Vec<usize>,
    basic_row: Vec<Option<usize>>,
    /// Original `[A | -I]`, kept for refactorization.
    matrix: Vec<f64>,
    iterations: usize,
    degenerate_run: usize,
    since_refactor: usize,
}

impl Tableau {
    fn new(lp: &LinearProgram) -> Self {
        let n = lp.num_vars();
        let m = lp.rows.len();
        let width = n + m;
        let mut matrix = vec![0.0; m * width];
        let mut lo = lp.lower.clone();
        let mut hi = lp.upper.clone();
        for (i, r) in lp.rows.iter().enumerate() {
            matrix[i * width..i * width + n].copy_from_slice(&r.coeffs);
            matrix[i * width + n + i] = -1.0;
            let (l, u) = match r.kind {
                RowKind::Le => (f64::NEG_INFINITY, r.rhs),
                RowKind::Ge => (r.rhs, f64::INFINITY),
                RowKind::Eq => (r.rhs, r.rhs),
            };
            lo.push(l);
            hi.push(u);
        }
        let mut val = vec![0.0; width];
        for j in 0..n {
            val[j] = initial_value(lo[j], hi[j]);
        }
        // Logical basis: B = -I, so the tableau is -[A | -I].
        let tab: Vec<f64> = matrix.iter().map(|v| -v).collect();
        let basis: Vec<usize> = (n..width).collect();
        let mut basic_row = vec![None; width];
        for (i, &b) in basis.iter().enumerate() {
            basic_row[b] = Some(i);
        }
        let mut t = Self {
            m,
            n,
            width,
            tab,
            lo,
            hi,
            val,
            basis,
            basic_row,
            matrix,
            iterations: 0,
            degenerate_run: 0,
            since_refactor: 0,
        };
        t.recompute_basic_values();
        t
    }

    /// Switch to `start`; false if its basis matrix is singular.
    fn install(&mut self, start: &Basis) -> bool {
        for j in 0..self.width {
            let (l, h) = (self.lo[j], self.hi[j]);
            self.val[j] = match (start.at_upper[j] && h.is_finite(), l.is_finite()) {
                (true, _) => h,
                (false, true) => l,
                (false, false) => initial_value(l, h),
            };
        }
        let logical = start.basic.iter().enumerate().all(|(i, &b)| b == self.n + i);
        if logical {
            self.recompute_basic_values();
            return true;
        }
        self.basic_row.iter_mut().for_each(|r| *r = None);
        for (i, &b) in start.basic.iter().enumerate() {
            self.basis[i] = b;
            self.basic_row[b] = Some(i);
        }
        self.refactor()
    }

    fn iteration_limit(&self) -> usize {
        (50 * (self.m + self.width)).max(10_000)
    }

    fn run(&mut self, lp: &LinearProgram) -> LpSolution {
        let (n, m) = (self.n, self.m);
        let mut phase_two = false;
        // Whether the values come straight from a fresh factorization.
        let mut fresh = true;
        loop {
            if self.iterations > self.iteration_limit() {
                return LpSolution::failed(LpStatus::NumericalFailure, n, m, self.iterations);
            }
            if self.since_refactor >= REFACTOR_EVERY && !self.refactor() {
                return LpSolution::failed(LpStatus::NumericalFailure, n, m, self.iterations);
            }
            let cost = if phase_two {
                let mut c = lp.objective.clone();
                c.resize(self.width, 0.0);
                c
            } else {
                match self.phase_one_cost() {
                    Some(c) => c,
                    None => {
                        phase_two = true;
                        continue;
                    }
                }
            };
            match self.iterate(&cost, phase_two) {
                Step::Progress => {
                    fresh = false;
                    continue;
                }
                Step::Unbounded => {
                    if !phase_two {
                        // Phase one is bounded below; reaching this is a numerical breakdown.
                        return LpSolution::failed(LpStatus::NumericalFailure, n, m, self.iterations);
                    }
                    return LpSolution::failed(LpStatus::Unbounded, n, m, self.iterations);
                }
                Step::Optimal => {
                    // Confirm the terminal basis on a fresh factorization before trusting it.
                    if !fresh {
                        if !self.refactor() {
                            return LpSolution::failed(LpStatus::NumericalFailure, n, m, self.iterations);
                        }
                        fresh = true;
                        continue;
                    }
                    if !phase_two {
                        if self.phase_one_cost().is_some() {
                            return LpSolution::failed(LpStatus::Infeasible, n, m, self.iterations);
                        }
                        phase_two = true;
                        continue;
                    }
                    return self.finish(lp);
                }
            }
        }
    }

    fn finish(&self, lp: &LinearProgram) -> LpSolution {
        let (n, m) = (self.n, self.m);
        let x: Vec<f64> = self.val[..n].to_vec();
        if lp.max_violation(&x) > FEAS_TOL {
            return LpSolution::failed(LpStatus::NumericalFailure, n, m, self.iterations);
        }
        let mut duals = vec![0.0; m];
        for (i, d) in duals.iter_mut().enumerate() {
            let mut y = 0.0;
            for (k, &b) in self.basis.iter().enumerate() {
                let cb = if b < n { lp.objective[b] } else { 0.0 };
                y -= cb * self.tab[k * self.width + n + i];
            }
            *d = y;
        }
        let mut reduced_costs = vec![0.0; n];
        for (j, rc) in reduced_costs.iter_mut().enumerate() {
            if self.basic_row[j].is_some() {
                continue;
            }
            let mut d = lp.objective[j];
            for (k, &b) in self.basis.iter().enumerate() {
                if b < n {
                    d -= lp.objective[b] * self.tab[k * self.width + j];
                }
            }
            *rc = d;
        }
        LpSolution {
            status: LpStatus::Optimal,
            objective: lp.objective_value(&x),
            x,
            duals,
            reduced_costs,
            iterations: self.iterations,
            basis: Some(Basis {
                basic: self.basis.clone(),
                at_upper: (0..self.width)
                    .map(|j| {
                        self.basic_row[j].is_none()
                            && self.hi[j].is_finite()
                            && self.val[j] == self.hi[j]
                            && self.lo[j] != self.hi[j]
                    })
                    .collect(),
            }),
        }
    }

    /// Costs steering infeasible basic variables toward their bounds, or
    /// `None` once every basic variable is within tolerance.
    fn phase_one_cost(&self) -> Option<Vec<f64>> {
        let mut c = vec![0.0; self.width];
        let mut any = false;
        for &b in &self.basis {
            if self.val[b] < self.lo[b] - PRIMAL_TOL {
                c[b] = -1.0;
                any = true;
            } else if self.val[b] > self.hi[b] + PRIMAL_TOL {
                c[b] = 1.0;
                any = true;
            }
        }
        any.then_some(c)
    }

    fn iterate(&mut self, cost: &[f64], phase_two: bool) -> Step {
        let w = self.width;
        let mut reduced = cost.to_vec();
        for (i, &b) in self.basis.iter().enumerate() {
            let cb = cost[b];
            if cb != 0.0 {
                let row = &self.tab[i * w..(i + 1) * w];
                for (r, t) in reduced.iter_mut().zip(row) {
                    *r -= cb * t;
                }
            }
        }

        let bland = self.degenerate_run >= DEGENERATE_RUN;
        let mut entering: Option<(usize, f64)> = None;
        let mut best = 0.0;
        for j in 0..w {
            if self.basic_row[j].is_some() || self.lo[j] == self.hi[j] {
                continue;
            }
            let d = reduced[j];
            let dir = if d < -DUAL_TOL && self.val[j] < self.hi[j] {
                1.0
            } else if d > DUAL_TOL && self.val[j] > self.lo[j] {
                -1.0
            } else {
                continue;
            };
            if bland {
                entering = Some((j, dir));
                break;
            }
            if d.abs() > best {
                best = d.abs();
                entering = Some((j, dir));
            }
        }
        let Some((j, dir)) = entering else {
            return Step::Optimal;
        };

        // Ratio test. `rate` is d(basic)/d(theta) when the entering variable moves by `dir * theta`.
        let mut theta = f64::INFINITY;
        let mut leave: Option<(usize, f64)> = None;
        let mut leave_rate = 0.0;
        if self.lo[j].is_finite() && self.hi[j].is_finite() {
            theta = self.hi[j] - self.lo[j];
        }
        for i in 0..self.m {
            let rate = -dir * self.tab[i * w + j];
            if rate.abs() < PIVOT_TOL {
                continue;
            }
            let b = self.basis[i];
            let v = self.val[b];
            // In phase one an infeasible basic variable blocks only when it
            // reaches the bound it violates; moving farther away is priced in.
            let below = !phase_two && v < self.lo[b] - PRIMAL_TOL;
            let above = !phase_two && v > self.hi[b] + PRIMAL_TOL;
            let (limit, target) = if rate > 0.0 {
                if below {
                    ((self.lo[b] - v) / rate, self.lo[b])
                } else if above || !self.hi[b].is_finite() {
                    continue;
                } else {
                    (((self.hi[b] - v) / rate).max(0.0), self.hi[b])
                }
            } else if above {
                ((v - self.hi[b]) / -rate, self.hi[b])
            } else if below || !self.lo[b].is_finite() {
                continue;
            } else {
                (((v - self.lo[b]) / -rate).max(0.0), self.lo[b])
            };
            let tie = (limit - theta).abs() <= 1e-12;
            let better = limit < theta - 1e-12
                || (tie
                    && match leave {
                        None => true,
                        Some((r, _)) if bland => b < self.basis[r],
                        Some(_) => rate.abs() > leave_rate,
                    });
            if better {
                theta = limit;
                leave = Some((i, target));
                leave_rate = rate.abs();
            }
        }
        if theta == f64::INFINITY {
            return Step::Unbounded;
        }

        self.iterations += 1;
        self.since_refactor += 1;
        if theta <= 1e-12 {
            self.degenerate_run += 1;
        } else {
            self.degenerate_run = 0;
        }

        for i in 0..self.m {
            let rate = -dir * self.tab[i * w + j];
            self.val[self.basis[i]] += rate * theta;
        }
        self.val[j] += dir * theta;

        match leave {
            None => {
                // Bound flip of the entering variable.
                self.val[j] = if dir > 0.0 { self.hi[j] } else { self.lo[j] };
            }
            Some((r, target)) => {
                let out = self.basis[r];
                self.val[out] = target;
                self.pivot(r, j);
            }
        }
        Step::Progress
    }

    fn pivot(&mut self, r: usize, j: usize) {
        let w = self.width;
        let p = self.tab[r * w + j];
        for v in &mut self.tab[r * w..(r + 1) * w] {
            *v /= p;
        }
        let pivot_row: Vec<f64> = self.tab[r * w..(r + 1) * w].to_vec();
        for i in 0..self.m {
            if i == r {
                continue;
            }
            let f = self.tab[i * w + j];
            if f == 0.0 {
                continue;
            }
            let row = &mut self.tab[i * w..(i + 1) * w];
            for (v, pr) in row.iter_mut().zip(&pivot_row) {
                *v -= f * pr;
            }
            row[j] = 0.0;
        }
        let out = self.basis[r];
        self.basic_row[out] = None;
        self.basic_row[j] = Some(r);
        self.basis[r] = j;
    }

    fn recompute_basic_values(&mut self) {
        let w = self.width;
        for i in 0..self.m {
            let row = &self.tab[i * w..(i + 1) * w];
            let mut v = 0.0;
            for (j, t) in row.iter().enumerate() {
                if self.basic_row[j].is_none() && self.val[j] != 0.0 {
                    v -= t * self.val[j];
                }
            }
            self.val[self.basis[i]] = v;
        }
    }

    /// Rebuild `B^-1 [A | -I]` from the original matrix by Gaussian
    /// elimination with partial pivoting.
    fn refactor(&mut self) -> bool {
        let (m, w) = (self.m, self.width);
        self.since_refactor = 0;
        if m == 0 {
            return true;
        }
        let aw = m + w;
        let mut aug = vec![0.0; m * aw];
        for i in 0..m {
            for (k, &b) in self.basis.iter().enumerate() {
                aug[i * aw + k] = self.matrix[i * w + b];
            }
            aug[i * aw + m..(i + 1) * aw].copy_from_slice(&self.matrix[i * w..(i + 1) * w]);
        }
        for col in 0..m {
            let (piv, mag) = (col..m)
                .map(|i| (i, aug[i * aw + col].abs()))
                .fold((col, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
            if mag < 1e-12 {
                return false;
            }
            if piv != col {
                for k in 0..aw {
                    aug.swap(piv * aw + k, col * aw + k);
                }
            }
            let p = aug[col * aw + col];
            for k in 0..aw {
                aug[col * aw + k] /= p;
            }
            for i in 0..m {
                if i == col {
                    continue;
                }
                let f = aug[i * aw + col];
                if f == 0.0 {
                    continue;
                }
                for k in col..aw {
                    aug[i * aw + k] -= f * aug[col * aw + k];
                }
            }
        }
        for i in 0..m {
            self.tab[i * w..(i + 1) * w].copy_from_slice(&aug[i * aw + m..(i + 1) * aw]);
        }
        self.recompute_basic_values();
        true
    }
}

fn initial_value(lo: f64, hi: f64) -> f64 {
    match (lo.is_finite(), hi.is_finite()) {
        (true, true) => {
            if lo.abs() <= hi.abs() {
                lo
            } else {
                hi
            }
        }
        (true, false) => lo,
        (false, true) => hi,
        (false, false) => 0.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_variable_lower_bound() {
        let mut lp = LinearProgram::new(vec![1.0]);
        lp.set_bounds(0, f64::NEG_INFINITY, f64::INFINITY);
        lp.add_row(vec![1.0], RowKind::Ge, 3.0)
            .add_row(vec![1.0], RowKind::Le, 10.0);
        let s = solve_lp(&lp).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.x[0] - 3.0).abs() < 1e-9);
        assert!((s.objective - 3.0).abs() < 1e-9);
    }

    #[test]
    fn detects_infeasible() {
        let mut lp = LinearProgram::new(vec![1.0, 1.0]);
        lp.set_bounds(0, f64::NEG_INFINITY, f64::INFINITY);
        lp.set_bounds(1, f64::NEG_INFINITY, f64::INFINITY);
        lp.add_row(vec![1.0, 1.0], RowKind::Ge, 1.0)
            .add_row(vec![1.0, 0.0], RowKind::Le, 0.0)
            .add_row(vec![0.0, 1.0], RowKind::Le, 0.0);
        assert_eq!(solve_lp(&lp).unwrap().status, LpStatus::Infeasible);
    }

    #[test]
    fn detects_unbounded() {
        let mut lp = LinearProgram::new(vec![-1.0, 0.0]);
        lp.add_row(vec![1.0, -1.0], RowKind::Le, 1.0);
        assert_eq!(solve_lp(&lp).unwrap().status, LpStatus::Unbounded);
    }

    #[test]
    fn crossed_bounds_are_infeasible() {
        let mut lp = LinearProgram::new(vec![1.0]);
        lp.set_bounds(0, 2.0, 1.0);
        assert_eq!(solve_lp(&lp).unwrap().status, LpStatus::Infeasible);
    }

    #[test]
    fn rejects_ragged_rows() {
        let mut lp = LinearProgram::new(vec![1.0, 2.0]);
        lp.add_row(vec![1.0], RowKind::Le, 1.0);
        assert!(matches!(solve_lp(&lp), Err(LpError::RowWidth { row: 0, .. })));
    }

    #[test]
    fn equality_and_bound_flip() {
        // min -x - 2y  s.t. x + y = 1, 0 <= x, y <= 0.75
        let mut lp = LinearProgram::new(vec![-1.0, -2.0]);
        lp.set_bounds(0, 0.0, 0.75).set_bounds(1, 0.0, 0.75);
        lp.add_row(vec![1.0, 1.0], RowKind::Eq, 1.0);
        let s = solve_lp(&lp).unwrap();
        assert!(s.is_optimal());
        assert!((s.x[0] - 0.25).abs() < 1e-9 && (s.x[1] - 0.75).abs() < 1e-9);
        assert!((s.objective + 1.75).abs() < 1e-9);
    }

    #[test]
    fn reduced_costs_price_bounds() {
        // min x + 3y, x,y in [1, 4], x + y >= 3: y stays at its lower bound with reduced cost 2.
        let mut lp = LinearProgram::new(vec![1.0, 3.0]);
        lp.set_bounds(0, 1.0, 4.0).set_bounds(1, 1.0, 4.0);
        lp.add_row(vec![1.0, 1.0], RowKind::Ge, 3.0);
        let s = solve_lp(&lp).unwrap();
        assert!(s.is_optimal());
        assert!((s.x[0] - 2.0).abs() < 1e-9 && (s.x[1] - 1.0).abs() < 1e-9);
        assert!((s.reduced_costs[1] - 2.0).abs() < 1e-9);
        assert!((s.duals[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn degenerate_cycling_example_terminates() {
        // Beale's classic cycling instance (in minimization form).
        let mut lp = LinearProgram::new(vec![-0.75, 150.0, -0.02, 6.0]);
        lp.add_row(vec![0.25, -60.0, -0.04, 9.0], RowKind::Le, 0.0)
            .add_row(vec![0.5, -90.0, -0.02, 3.0], RowKind::Le, 0.0)
            .add_row(vec![0.0, 0.0, 1.0, 0.0], RowKind::Le, 1.0);
        let s = solve_lp(&lp).unwrap();
        assert!(s.is_optimal());
        assert!((s.objective + 0.05).abs() < 1e-9);
    }
}
