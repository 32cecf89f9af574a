mod common;

use common::{enumeration_min_radius, random_net, reference_forward};
use iada_core::nn::{argmax, Sample};
use iada_core::verifier::{interval_bounds, min_adversary, InputBox, VerifierConfig, VerifyOutcome};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const EPS: f64 = 0.3;

fn check_instance(dims: &[usize], seed: u64) -> bool {
    let params = random_net(dims, seed, 2.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
    let x: Vec<f64> = (0..dims[0]).map(|_| rng.gen_range(0.05..0.95)).collect();
    let y = params.predict(&x).unwrap();
    let report = min_adversary(
        &params,
        &Sample::new(x.clone(), y),
        0,
        EPS,
        &InputBox::unit(dims[0]),
        &VerifierConfig::default(),
    )
    .unwrap();
    let oracle = enumeration_min_radius(&params, &x, y, EPS);
    match (oracle, &report.outcome) {
        (Some(o), VerifyOutcome::Found(a)) => {
            assert!(
                (a.delta - o).abs() <= 1e-4,
                "seed {seed}: verifier {} vs enumeration {o}",
                a.delta
            );
            assert_ne!(argmax(&reference_forward(&params, &a.x_prime)), y);
            true
        }
        (Some(o), other) if o > EPS - 1e-4 => {
            assert!(
                matches!(other, VerifyOutcome::RobustWithin { .. }),
                "seed {seed}: {other:?}"
            );
            false
        }
        (None, VerifyOutcome::RobustWithin { .. }) => false,
        (o, other) => panic!("seed {seed}: enumeration {o:?}, verifier {other:?}"),
    }
}

#[test]
fn matches_pattern_enumeration_on_small_nets() {
    let mut found = 0;
    for seed in 0..20 {
        found += check_instance(&[2, 6, 2], seed) as usize;
    }
    for seed in 100..110 {
        found += check_instance(&[3, 4, 4, 3], seed) as usize;
    }
    assert!(found >= 10, "only {found} instances had an adversary within eps");
}

#[test]
fn no_grid_point_beats_the_reported_radius() {
    for seed in 0..6 {
        let params = random_net(&[2, 8, 2], 40 + seed, 2.0);
        let x = vec![0.5, 0.5];
        let y = params.predict(&x).unwrap();
        let report = min_adversary(
            &params,
            &Sample::new(x.clone(), y),
            0,
            EPS,
            &InputBox::unit(2),
            &VerifierConfig::default(),
        )
        .unwrap();
        let bound = report.outcome.adversary().map_or(EPS, |a| a.delta);
        let steps = 300;
        for i in 0..=steps {
            for j in 0..=steps {
                let p = [
                    x[0] - EPS + 2.0 * EPS * i as f64 / steps as f64,
                    x[1] - EPS + 2.0 * EPS * j as f64 / steps as f64,
                ];
                let d = (p[0] - x[0]).abs().max((p[1] - x[1]).abs());
                if d < bound - 1e-9 && argmax(&reference_forward(&params, &p)) != y {
                    panic!("seed {seed}: grid point {p:?} at {d} flips but verifier reported {bound}");
                }
            }
        }
    }
}

#[test]
fn interval_bounds_contain_sampled_preactivations() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for inst in 0..20 {
        let dims = [4, 7, 5, 3];
        let params = random_net(&dims, inst, 1.5);
        let x0: Vec<f64> = (0..4).map(|_| rng.gen_range(0.0..1.0)).collect();
        let eps = rng.gen_range(0.0..0.3);
        let domain = InputBox::unit(4);
        let b = interval_bounds(&params, &x0, eps, &domain).unwrap();
        let (lo, hi) = domain.ball(&x0, eps);
        for _ in 0..10_000 {
            let x: Vec<f64> = lo
                .iter()
                .zip(&hi)
                .map(|(l, h)| if h > l { rng.gen_range(*l..=*h) } else { *l })
                .collect();
            let pre = params.pre_activations(&x).unwrap();
            for k in 0..2 {
                for j in 0..pre[k].len() {
                    assert!(
                        b.lower[k][j] <= pre[k][j] && pre[k][j] <= b.upper[k][j],
                        "instance {inst} escaped"
                    );
                }
            }
        }
    }
}
