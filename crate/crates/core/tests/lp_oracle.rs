use iada_core::lp::{solve_lp, LinearProgram, LpStatus, RowKind, FEAS_TOL};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Solve a square system by Gaussian elimination; `None` if singular.
fn solve_square(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-10 {
            return None;
        }
        a.swap(piv, col);
        b.swap(piv, col);
        for i in 0..n {
            if i != col {
                let f = a[i][col] / a[col][col];
                for k in col..n {
                    a[i][k] -= f * a[col][k];
                }
                b[i] -= f * b[col];
            }
        }
    }
    Some((0..n).map(|i| b[i] / a[i][i]).collect())
}

/// Best objective over all basic feasible points of a bounded LP.
fn vertex_enumeration(lp: &LinearProgram) -> Option<f64> {
    let n = lp.num_vars();
    let mut planes: Vec<(Vec<f64>, f64)> = lp.rows.iter().map(|r| (r.coeffs.clone(), r.rhs)).collect();
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        planes.push((e.clone(), lp.lower[j]));
        planes.push((e, lp.upper[j]));
    }
    let mut best: Option<f64> = None;
    let k = planes.len();
    let mut idx: Vec<usize> = (0..n).collect();
    loop {
        let a = idx.iter().map(|&i| planes[i].0.clone()).collect();
        let b = idx.iter().map(|&i| planes[i].1).collect();
        if let Some(x) = solve_square(a, b) {
            if lp.max_violation(&x) <= 1e-9 {
                let v = lp.objective_value(&x);
                best = Some(best.map_or(v, |c: f64| c.min(v)));
            }
        }
        // next combination
        let mut i = n;
        while i > 0 && idx[i - 1] == k - n + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return best;
        }
        idx[i - 1] += 1;
        for t in i..n {
            idx[t] = idx[t - 1] + 1;
        }
    }
}

fn random_lp(rng: &mut ChaCha8Rng, n: usize, m: usize) -> LinearProgram {
    let mut lp = LinearProgram::new((0..n).map(|_| rng.gen_range(-1.0..1.0)).collect());
    for j in 0..n {
        let l = rng.gen_range(-2.0..0.5);
        lp.set_bounds(j, l, l + rng.gen_range(0.1..3.0));
    }
    for _ in 0..m {
        let coeffs: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let kind = match rng.gen_range(0..10) {
            0 => RowKind::Eq,
            1..=4 => RowKind::Le,
            _ => RowKind::Ge,
        };
        lp.add_row(coeffs, kind, rng.gen_range(-1.0..1.0));
    }
    lp
}

#[test]
fn matches_vertex_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut optimal, mut infeasible) = (0, 0);
    for case in 0..50 {
        let n = rng.gen_range(2..=4);
        let m = rng.gen_range(1..=6);
        let lp = random_lp(&mut rng, n, m);
        let sol = solve_lp(&lp).unwrap();
        match vertex_enumeration(&lp) {
            Some(best) => {
                assert_eq!(sol.status, LpStatus::Optimal, "case {case}");
                assert!(
                    (sol.objective - best).abs() < 1e-7,
                    "case {case}: {} vs {best}",
                    sol.objective
                );
                optimal += 1;
            }
            None => {
                assert_eq!(sol.status, LpStatus::Infeasible, "case {case}");
                infeasible += 1;
            }
        }
    }
    assert!(
        optimal >= 20 && infeasible >= 1,
        "{optimal} optimal, {infeasible} infeasible"
    );
}

#[test]
fn verifier_shaped_lp_with_thin_box() {
    // Thin input box around a point, a ReLU triangle and a slack row.
    let mut lp = LinearProgram::new(vec![0.0, 0.0, 0.0, -1.0]);
    lp.set_bounds(0, 0.499, 0.501)
        .set_bounds(1, 0.199, 0.201)
        .set_bounds(2, 0.0, 1.0);
    lp.set_bounds(3, f64::NEG_INFINITY, 1.0);
    // z = x0 - x1 - 0.3 in [-0.5, 0.5]; h >= z; h <= (z + 0.5) / 2
    lp.add_row(vec![-1.0, 1.0, 1.0, 0.0], RowKind::Ge, -0.3);
    lp.add_row(vec![-0.5, 0.5, 1.0, 0.0], RowKind::Le, 0.1);
    lp.add_row(vec![0.0, 0.0, -1.0, -1.0], RowKind::Ge, -0.2);
    let s = solve_lp(&lp).unwrap();
    assert!(s.is_optimal());
    assert!(lp.max_violation(&s.x) <= FEAS_TOL);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn optimal_points_are_feasible_and_complementary(seed in any::<u64>(), n in 2usize..6, m in 1usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lp = random_lp(&mut rng, n, m);
        let sol = solve_lp(&lp).unwrap();
        prop_assert!(sol.status != LpStatus::NumericalFailure);
        prop_assert!(sol.status != LpStatus::Unbounded, "all variables are boxed");
        if sol.is_optimal() {
            prop_assert!(lp.max_violation(&sol.x) <= FEAS_TOL);
            for j in 0..n {
                let d = sol.reduced_costs[j];
                if d > 1e-7 {
                    prop_assert!((sol.x[j] - lp.lower[j]).abs() < 1e-7);
                } else if d < -1e-7 {
                    prop_assert!((sol.x[j] - lp.upper[j]).abs() < 1e-7);
                }
            }
        }
    }

    #[test]
    fn loosening_a_bound_never_hurts(seed in any::<u64>(), n in 2usize..5, m in 1usize..6, j in 0usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lp = random_lp(&mut rng, n, m);
        let j = j % n;
        let mut wider = lp.clone();
        wider.set_bounds(j, lp.lower[j] - 0.5, lp.upper[j] + 0.5);
        let (a, b) = (solve_lp(&lp).unwrap(), solve_lp(&wider).unwrap());
        if a.is_optimal() {
            prop_assert!(b.is_optimal());
            prop_assert!(b.objective <= a.objective + 1e-7);
        }
    }
}
