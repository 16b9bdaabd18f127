use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{BetError, Result};
use crate::pool::{ActionId, Experience, ExperiencePool, StateVector};

/// Center of the unrotated arc. The three arcs are this half circle rotated
/// by 0, 120 and 240 degrees about the origin; the offset makes them
/// interleave without touching (closest approach about 0.16).
const ARC_CENTER: [f64; 2] = [0.5, -0.2];

#[derive(Debug, Clone, PartialEq)]
pub struct MoonsDataset {
    pub points: Vec<(StateVector, ActionId)>,
    pub per_class: usize,
    pub noise_sigma: f64,
    pub seed: u64,
}

/// Three interleaved unit half circles, `per_class` points each, with
/// isotropic Gaussian noise of standard deviation `noise_sigma`.
pub fn generate_moons3(per_class: usize, noise_sigma: f64, seed: u64) -> Result<MoonsDataset> {
    if per_class == 0 {
        return Err(BetError::Config("per_class must be >= 1".into()));
    }
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(BetError::Config("noise_sigma must be finite and non-negative".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, noise_sigma).expect("validated sigma");
    let mut points = Vec::with_capacity(3 * per_class);
    for class in 0..3 {
        for i in 0..per_class {
            let theta = PI * (i as f64 + 0.5) / per_class as f64;
            let [x, y] = MoonsDataset::arc_point(class, theta);
            let (nx, ny) = if noise_sigma > 0.0 {
                (noise.sample(&mut rng), noise.sample(&mut rng))
            } else {
                (0.0, 0.0)
            };
            points.push((StateVector::new(vec![x + nx, y + ny])?, ActionId(class)));
        }
    }
    Ok(MoonsDataset { points, per_class, noise_sigma, seed })
}

impl MoonsDataset {
    pub const CLASSES: usize = 3;

    /// Point at angle `theta` in `[0, pi]` on the arc of `class`.
    pub fn arc_point(class: usize, theta: f64) -> [f64; 2] {
        let local = [ARC_CENTER[0] + theta.cos(), ARC_CENTER[1] + theta.sin()];
        rotate(local, 2.0 * PI * class as f64 / 3.0)
    }

    /// Exact Euclidean distance from `p` to the arc of `class`.
    pub fn arc_distance(p: &[f64], class: usize) -> f64 {
        let [x, y] = rotate([p[0], p[1]], -2.0 * PI * class as f64 / 3.0);
        let (qx, qy) = (x - ARC_CENTER[0], y - ARC_CENTER[1]);
        if qy >= 0.0 {
            ((qx * qx + qy * qy).sqrt() - 1.0).abs()
        } else {
            let to_end = |ex: f64| ((qx - ex).powi(2) + qy * qy).sqrt();
            to_end(1.0).min(to_end(-1.0))
        }
    }

    /// Lower bound on the distance from `p` to the ground-truth class
    /// boundary (the set of points equidistant from the two nearest arcs):
    /// half the gap between the nearest and second-nearest arc distances.
    pub fn boundary_distance(p: &[f64]) -> f64 {
        let mut d: Vec<f64> = (0..Self::CLASSES).map(|c| Self::arc_distance(p, c)).collect();
        d.sort_by(f64::total_cmp);
        0.5 * (d[1] - d[0])
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Pool with every point in episode 1, step = index.
    pub fn to_pool(&self) -> ExperiencePool {
        let experiences = self
            .points
            .iter()
            .enumerate()
            .map(|(i, (s, a))| Experience { state: s.clone(), action: *a, episode: 1, step: i as u64 })
            .collect();
        ExperiencePool::new(2, Self::CLASSES, experiences).expect("generated points are valid")
    }
}

fn rotate([x, y]: [f64; 2], angle: f64) -> [f64; 2] {
    let (s, c) = angle.sin_cos();
    [c * x - s * y, s * x + c * y]
}
