//! Annealed importance sampling between the bias-only machine and the full
//! machine, in both directions.
//!
//! The intermediate energies are `E_k(x) = E_bias(x) + beta_k E_coupling(x)`
//! with a linear ladder `beta_k = k / n_temps`. The base (`beta_0 = 0`) has
//! independent units, so its `ln Z` and exact samples are available.

use rand::Rng;
use rayon::prelude::*;

use super::{LnZEstimate, LnZMethod};
use crate::error::{Error, Result};
use crate::gibbs::{GibbsKernel, SampleBatch};
use crate::layout::{Partition, PartitionSet};
use crate::rbm::{sigmoid, softplus, QuadState, QuadripartiteRBM};
use crate::rng::chain_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AisDirection {
    Forward,
    Reverse,
}

#[derive(Debug, Clone)]
pub struct AisConfig {
    pub n_temps: usize,
    pub n_chains: usize,
    pub seed: u64,
    /// Gibbs steps used to draw target samples for the reverse direction when
    /// none are supplied.
    pub reverse_burn_in: usize,
}

impl Default for AisConfig {
    fn default() -> Self {
        AisConfig {
            n_temps: 30,
            n_chains: 512,
            seed: 0,
            reverse_burn_in: 1000,
        }
    }
}

impl AisConfig {
    pub fn new(n_temps: usize, n_chains: usize, seed: u64) -> Self {
        AisConfig {
            n_temps,
            n_chains,
            seed,
            ..Default::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_temps < 2 {
            return Err(Error::InvalidParameter(format!(
                "annealing ladder needs at least 2 temperatures, got {}",
                self.n_temps
            )));
        }
        if self.n_chains == 0 {
            return Err(Error::InvalidParameter("n_chains must be at least 1".into()));
        }
        Ok(())
    }

    fn beta(&self, k: usize) -> f64 {
        k as f64 / self.n_temps as f64
    }
}

/// `ln Z` of the bias-only machine.
pub fn base_ln_z(rbm: &QuadripartiteRBM) -> f64 {
    Partition::ALL
        .iter()
        .flat_map(|&p| rbm.bias(p).iter())
        .map(|&b| softplus(b))
        .sum()
}

fn base_sample<R: Rng + ?Sized>(rbm: &QuadripartiteRBM, rng: &mut R) -> QuadState {
    let parts = std::array::from_fn(|p| {
        rbm.bias(Partition::ALL[p])
            .iter()
            .map(|&b| (rng.random::<f64>() < sigmoid(b)) as u8)
            .collect()
    });
    QuadState::new(parts).expect("bits are binary")
}

/// Forward AIS (`direction = Forward`) or reverse AIS starting from
/// `reverse_burn_in` Gibbs steps on the target (`direction = Reverse`).
pub fn ais_ln_z(rbm: &QuadripartiteRBM, cfg: &AisConfig, direction: AisDirection) -> Result<LnZEstimate> {
    cfg.validate()?;
    match direction {
        AisDirection::Forward => {
            let log_w = forward_log_weights(rbm, cfg);
            Ok(estimate(base_ln_z(rbm), &log_w, 1.0, LnZMethod::Ais, cfg))
        }
        AisDirection::Reverse => {
            if cfg.reverse_burn_in == 0 {
                return Err(Error::InvalidParameter("reverse_burn_in must be at least 1".into()));
            }
            let kernel = GibbsKernel::new(rbm);
            let starts: Vec<QuadState> = (0..cfg.n_chains)
                .into_par_iter()
                .map(|c| {
                    let mut rng = chain_rng(cfg.seed ^ 0x5241_4953, c as u64);
                    let mut x = QuadState::random(rbm.layout(), &mut rng);
                    let mut field = Vec::new();
                    for _ in 0..cfg.reverse_burn_in {
                        kernel.step(&mut x, PartitionSet::EMPTY, &mut field, &mut rng);
                    }
                    x
                })
                .collect();
            let log_w = reverse_log_weights(rbm, cfg, &starts);
            Ok(estimate(base_ln_z(rbm), &log_w, -1.0, LnZMethod::Rais, cfg))
        }
    }
}

/// Reverse AIS from caller-provided target samples (one chain per state).
pub fn rais_ln_z_from(rbm: &QuadripartiteRBM, cfg: &AisConfig, targets: &SampleBatch) -> Result<LnZEstimate> {
    let cfg = AisConfig {
        n_chains: targets.len(),
        ..cfg.clone()
    };
    cfg.validate()?;
    for s in targets.states() {
        s.check(rbm.layout())?;
    }
    let log_w = reverse_log_weights(rbm, &cfg, targets.states());
    Ok(estimate(base_ln_z(rbm), &log_w, -1.0, LnZMethod::Rais, &cfg))
}

fn forward_log_weights(rbm: &QuadripartiteRBM, cfg: &AisConfig) -> Vec<f64> {
    (0..cfg.n_chains)
        .into_par_iter()
        .map(|c| {
            let mut rng = chain_rng(cfg.seed, c as u64);
            let mut kernel = GibbsKernel::with_coupling_scale(rbm, 0.0);
            let mut field = Vec::new();
            let mut x = base_sample(rbm, &mut rng);
            let mut log_w = 0.0;
            for k in 1..=cfg.n_temps {
                let (_, ec) = kernel.split_energy(&x);
                log_w -= (cfg.beta(k) - cfg.beta(k - 1)) * ec;
                if k < cfg.n_temps {
                    kernel.set_coupling_scale(cfg.beta(k));
                    kernel.step(&mut x, PartitionSet::EMPTY, &mut field, &mut rng);
                }
            }
            log_w
        })
        .collect()
}

fn reverse_log_weights(rbm: &QuadripartiteRBM, cfg: &AisConfig, starts: &[QuadState]) -> Vec<f64> {
    starts
        .par_iter()
        .enumerate()
        .map(|(c, start)| {
            let mut rng = chain_rng(cfg.seed, c as u64);
            let mut kernel = GibbsKernel::with_coupling_scale(rbm, 1.0);
            let mut field = Vec::new();
            let mut x = start.clone();
            let mut log_w = 0.0;
            for k in (1..=cfg.n_temps).rev() {
                let (_, ec) = kernel.split_energy(&x);
                log_w += (cfg.beta(k) - cfg.beta(k - 1)) * ec;
                if k > 1 {
                    kernel.set_coupling_scale(cfg.beta(k - 1));
                    kernel.step(&mut x, PartitionSet::EMPTY, &mut field, &mut rng);
                }
            }
            log_w
        })
        .collect()
}

/// `ln Z = ln Z0 + sign * ln mean exp(log_w)` with a delta-method standard
/// error.
fn estimate(ln_z0: f64, log_w: &[f64], sign: f64, method: LnZMethod, cfg: &AisConfig) -> LnZEstimate {
    let n = log_w.len() as f64;
    let max = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = log_w.iter().map(|l| (l - max).exp()).collect();
    let mean = w.iter().sum::<f64>() / n;
    let var = if w.len() > 1 {
        w.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    LnZEstimate {
        value: ln_z0 + sign * (max + mean.ln()),
        std_error: (var / n).sqrt() / mean,
        method,
        n_temps: cfg.n_temps,
        n_chains: log_w.len(),
    }
}
