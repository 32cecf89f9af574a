//! Two-class ground truth on the unit square: two smooth blobs of class 1
//! in a class-0 background.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::nn::Sample;

/// Rotated ellipse whose radius wobbles sinusoidally with the polar angle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Blob {
    pub center: [f64; 2],
    pub radii: [f64; 2],
    /// Rotation in radians.
    pub angle: f64,
    pub wobble: f64,
    pub lobes: u32,
}

impl Blob {
    /// Below 1 inside, above 1 outside.
    pub fn level(&self, p: [f64; 2]) -> f64 {
        let (dx, dy) = (p[0] - self.center[0], p[1] - self.center[1]);
        let (s, c) = self.angle.sin_cos();
        let u = (c * dx + s * dy) / self.radii[0];
        let v = (-s * dx + c * dy) / self.radii[1];
        let rho = (u * u + v * v).sqrt();
        let theta = v.atan2(u);
        rho / (1.0 + self.wobble * (self.lobes as f64 * theta).sin())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ground2D {
    pub blobs: Vec<Blob>,
}

impl Default for Ground2D {
    fn default() -> Self {
        Self {
            blobs: vec![
                Blob {
                    center: [0.3, 0.66],
                    radii: [0.2, 0.13],
                    angle: 0.5,
                    wobble: 0.15,
                    lobes: 3,
                },
                Blob {
                    center: [0.68, 0.3],
                    radii: [0.18, 0.12],
                    angle: -0.35,
                    wobble: 0.12,
                    lobes: 2,
                },
            ],
        }
    }
}

impl Ground2D {
    pub fn label(&self, x: &[f64]) -> usize {
        let p = [x[0], x[1]];
        self.blobs.iter().any(|b| b.level(p) <= 1.0) as usize
    }

    /// `n` uniform points on `[0,1]²` labeled by the ground truth.
    pub fn sample(&self, n: usize, seed: u64) -> Vec<Sample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let x = vec![rng.gen::<f64>(), rng.gen::<f64>()];
                let y = self.label(&x);
                Sample::new(x, y)
            })
            .collect()
    }

    /// The evaluation set: 10,000 uniform points drawn from their own stream.
    pub fn test_set(&self, seed: u64) -> Vec<Sample> {
        self.sample(10_000, seed ^ 0x7e57_7e57_7e57_7e57)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blob_centers_are_class_one() {
        let g = Ground2D::default();
        for b in &g.blobs {
            assert_eq!(g.label(&b.center), 1);
        }
    }

    #[test]
    fn corners_are_background() {
        let g = Ground2D::default();
        for c in [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]] {
            assert_eq!(g.label(&c), 0);
        }
    }

    #[test]
    fn blobs_are_disjoint_and_inside_the_square() {
        let g = Ground2D::default();
        let n = 400;
        for i in 0..=n {
            for j in 0..=n {
                let p = [i as f64 / n as f64, j as f64 / n as f64];
                let inside = g.blobs.iter().filter(|b| b.level(p) <= 1.0).count();
                assert!(inside <= 1);
                if i == 0 || j == 0 || i == n || j == n {
                    assert_eq!(inside, 0);
                }
            }
        }
    }

    #[test]
    fn sampled_points_carry_their_label() {
        let g = Ground2D::default();
        let s = g.sample(1000, 5);
        assert!(s.iter().all(|p| p.y == g.label(&p.x)));
        let ones = s.iter().filter(|p| p.y == 1).count();
        assert!(ones > 100 && ones < 500, "{ones} positives");
        assert_eq!(s, g.sample(1000, 5));
    }
}
