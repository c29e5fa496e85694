//! Synthetic showers for exercising the pipeline without detector data.
//!
//! Each event has a log-uniform incident energy. A fraction of it is spread
//! over the grid by a longitudinal Gaussian times a radial exponential
//! profile; that gives each voxel an expected deposit `L`. Hit voxels draw
//! their energy from a Gaussian with mean and variance `L`, truncated to
//! positive values. Which voxels are hit is decided by a Bernoulli draw whose
//! probability follows the same profile, tuned to a target sparsity.

use rand::Rng;
use rand_distr::{Distribution, Normal, Open01};

use crate::error::{CaloError, Result};
use crate::shower::{flat_index, ShowerRecord, N_ANGULAR, N_LAYERS, N_RADIAL, N_VOXELS};
use crate::transform::{E_MAX, E_MIN};

#[derive(Debug, Clone, PartialEq)]
pub struct ToyConfig {
    pub e_min: f64,
    pub e_max: f64,
    /// Fraction of the incident energy deposited in the grid on average.
    pub deposit_fraction: f64,
    /// Target fraction of empty voxels.
    pub sparsity: f64,
    /// Layer of the longitudinal maximum and the profile's width in layers.
    pub shower_max: f64,
    pub longitudinal_width: f64,
    /// Radial decay length in radial bins.
    pub radial_length: f64,
}

impl Default for ToyConfig {
    fn default() -> Self {
        ToyConfig {
            e_min: E_MIN,
            e_max: E_MAX,
            deposit_fraction: 0.5,
            sparsity: 0.7,
            shower_max: 12.0,
            longitudinal_width: 7.0,
            radial_length: 1.5,
        }
    }
}

impl ToyConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CaloError::InvalidParameter(m));
        if !(self.e_min > 0.0 && self.e_max > self.e_min) {
            return bad(format!("bad energy range [{}, {}]", self.e_min, self.e_max));
        }
        if !(self.deposit_fraction > 0.0 && self.deposit_fraction <= 1.0) {
            return bad(format!("deposit_fraction must be in (0, 1], got {}", self.deposit_fraction));
        }
        if !(0.0..1.0).contains(&self.sparsity) {
            return bad(format!("sparsity must be in [0, 1), got {}", self.sparsity));
        }
        if !(self.longitudinal_width > 0.0 && self.radial_length > 0.0) {
            return bad("profile widths must be positive".into());
        }
        Ok(())
    }
}

/// A draw from `N(mean, var)` restricted to positive values, by rejection.
pub fn truncated_gaussian<R: Rng + ?Sized>(mean: f64, var: f64, rng: &mut R) -> f64 {
    let normal = Normal::new(mean, var.sqrt()).expect("finite mean and variance");
    loop {
        let r = normal.sample(rng);
        if r > 0.0 {
            return r;
        }
    }
}

pub struct ToyGenerator {
    config: ToyConfig,
    /// Normalized deposit profile, sums to 1.
    profile: Vec<f64>,
    /// Hit probabilities, mean `1 - sparsity`.
    hit_prob: Vec<f64>,
}

impl ToyGenerator {
    pub fn new(config: ToyConfig) -> Result<Self> {
        config.validate()?;
        let mut profile = vec![0.0; N_VOXELS];
        for z in 0..N_LAYERS {
            let dz = (z as f64 - config.shower_max) / config.longitudinal_width;
            for phi in 0..N_ANGULAR {
                for r in 0..N_RADIAL {
                    profile[flat_index(z, phi, r)] = (-0.5 * dz * dz - r as f64 / config.radial_length).exp();
                }
            }
        }
        let total: f64 = profile.iter().sum();
        profile.iter_mut().for_each(|w| *w /= total);
        let hit_prob = tune_hit_probabilities(&profile, 1.0 - config.sparsity);
        Ok(ToyGenerator {
            config,
            profile,
            hit_prob,
        })
    }

    pub fn config(&self) -> &ToyConfig {
        &self.config
    }

    pub fn sample_energy<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.sample(Open01);
        let (lo, hi) = (self.config.e_min.ln(), self.config.e_max.ln());
        (lo + u * (hi - lo)).exp()
    }

    pub fn generate<R: Rng + ?Sized>(&self, rng: &mut R) -> ShowerRecord {
        let e = self.sample_energy(rng);
        let budget = self.config.deposit_fraction * e;
        let mut voxels = vec![0.0; N_VOXELS];
        for (i, v) in voxels.iter_mut().enumerate() {
            let p = self.hit_prob[i];
            if p <= 0.0 || rng.random::<f64>() >= p {
                continue;
            }
            // expected deposit given a hit, so the mean total stays at budget
            let lambda = budget * self.profile[i] / p;
            *v = truncated_gaussian(lambda, lambda, rng).min(e);
        }
        ShowerRecord::new(voxels, e).expect("generated shower is valid")
    }

    pub fn generate_n<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<ShowerRecord>> {
        if n == 0 {
            return Err(CaloError::InvalidParameter("n_events must be at least 1".into()));
        }
        Ok((0..n).map(|_| self.generate(rng)).collect())
    }
}

/// Finds `c` with `mean(min(1, c w_i)) = target` by bisection.
fn tune_hit_probabilities(weights: &[f64], target: f64) -> Vec<f64> {
    let mean_at = |c: f64| weights.iter().map(|w| (c * w).min(1.0)).sum::<f64>() / weights.len() as f64;
    let (mut lo, mut hi) = (0.0, 1.0);
    while mean_at(hi) < target {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mean_at(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    weights.iter().map(|w| (hi * w).min(1.0)).collect()
}

/// Sample mean and variance of a set of logits, with the standard error of
/// the mean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogitMoments {
    pub n: usize,
    pub mean: f64,
    pub variance: f64,
    pub std_error: f64,
}

impl LogitMoments {
    pub fn of(values: &[f64]) -> Result<Self> {
        if values.len() < 2 {
            return Err(CaloError::InvalidParameter("need at least two values".into()));
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let variance = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        Ok(LogitMoments {
            n: values.len(),
            mean,
            variance,
            std_error: (variance / n).sqrt(),
        })
    }
}

/// Draws `r` from a positive Gaussian with mean and variance `lambda` and
/// returns `ln(x / (1 - x))` with `x = r / big_r`. For `lambda >> 1` and
/// `big_r >> r` these are approximately `N(ln(lambda / big_r), 1 / lambda)`.
pub fn gaussian_logit_draws<R: Rng + ?Sized>(lambda: f64, big_r: f64, n: usize, rng: &mut R) -> Result<Vec<f64>> {
    if !(lambda > 0.0 && big_r > 0.0) {
        return Err(CaloError::InvalidParameter(format!(
            "lambda and R must be positive, got {lambda} and {big_r}"
        )));
    }
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let x = truncated_gaussian(lambda, lambda, rng) / big_r;
        if x < 1.0 {
            out.push((x / (1.0 - x)).ln());
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn hit_probabilities_hit_target() {
        let g = ToyGenerator::new(ToyConfig::default()).unwrap();
        let mean = g.hit_prob.iter().sum::<f64>() / N_VOXELS as f64;
        assert!((mean - 0.3).abs() < 1e-9);
        assert!(g.hit_prob.iter().all(|&p| (0.0..=1.0).contains(&p)));
    }

    #[test]
    fn truncated_draws_are_positive() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!((0..1000).all(|_| truncated_gaussian(0.5, 0.5, &mut rng) > 0.0));
    }

    #[test]
    fn deposits_never_exceed_incident() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = ToyGenerator::new(ToyConfig::default()).unwrap();
        for s in g.generate_n(20, &mut rng).unwrap() {
            assert!(s.voxels().iter().all(|&v| v <= s.incident_energy()));
        }
    }
}
