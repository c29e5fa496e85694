//! Partition-function estimates: exact enumeration at desk scale, energy
//! densities of states, and annealed importance sampling (forward and
//! reverse) for anything larger.

mod ais;
mod dos;
pub mod enumerate;

pub use ais::{ais_ln_z, base_ln_z, rais_ln_z_from, AisConfig, AisDirection};
pub use dos::{
    comparison_edges, density_of_states, fd_bin_width, histogram, tv_distance, uniform_edges,
    DensityOfStates, DosSource,
};
pub use enumerate::{LogSumExp, DEFAULT_ENUMERATION_CAP};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gibbs::{SampleBatch, SampleSource};
use crate::layout::PAIRS;
use crate::rbm::{Parameters, QuadripartiteRBM};
use crate::rng::chain_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LnZMethod {
    Exact,
    Ais,
    Rais,
}

/// An estimate of `ln Z`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LnZEstimate {
    pub value: f64,
    pub std_error: f64,
    pub method: LnZMethod,
    pub n_temps: usize,
    pub n_chains: usize,
}

impl LnZEstimate {
    pub fn exact(value: f64) -> Self {
        LnZEstimate {
            value,
            std_error: 0.0,
            method: LnZMethod::Exact,
            n_temps: 0,
            n_chains: 0,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// `ln sum_x exp(-beta E(x))` by enumeration.
pub fn exact_ln_z(rbm: &QuadripartiteRBM, beta: f64) -> Result<LnZEstimate> {
    exact_ln_z_capped(rbm, beta, DEFAULT_ENUMERATION_CAP)
}

pub fn exact_ln_z_capped(rbm: &QuadripartiteRBM, beta: f64, cap: usize) -> Result<LnZEstimate> {
    if !beta.is_finite() {
        return Err(Error::InvalidParameter(format!("beta must be finite, got {beta}")));
    }
    Ok(LnZEstimate::exact(enumerate::ln_z_fast(rbm, beta, cap)?))
}

/// Exact ensemble averages at inverse temperature `beta`.
///
/// `mean_grad` holds `<dE/dphi>` and `mean_energy_grad` holds
/// `<E dE/dphi>` for every parameter, laid out like the machine.
#[derive(Debug, Clone)]
pub struct ExactMoments {
    pub beta: f64,
    pub ln_z: f64,
    pub mean_energy: f64,
    pub var_energy: f64,
    pub mean_grad: Parameters,
    pub mean_energy_grad: Parameters,
}

impl ExactMoments {
    /// `<dE/dphi> + beta (<E><dE/dphi> - <E dE/dphi>)`, which equals
    /// `d<E>/dphi`.
    pub fn mean_energy_derivative(&self) -> Parameters {
        let mut out = self.mean_grad.clone();
        let flat_g = self.mean_grad.flatten();
        let flat_eg = self.mean_energy_grad.flatten();
        for (idx, (g, eg)) in flat_g.iter().zip(&flat_eg).enumerate() {
            out.set_flat(idx, g + self.beta * (self.mean_energy * g - eg));
        }
        out
    }
}

pub fn exact_moments(rbm: &QuadripartiteRBM, beta: f64) -> Result<ExactMoments> {
    let cap = DEFAULT_ENUMERATION_CAP;
    let ln_z = enumerate::ln_z_fast(rbm, beta, cap)?;
    let layout = rbm.layout();
    let off = layout.offsets();
    let sizes = layout.sizes();
    let n_params = Parameters::zeros(layout).len();
    // flat layout: biases in partition order, then each block row-major
    let mut block_start = [0usize; 6];
    let mut cursor = layout.total();
    for (k, start) in block_start.iter_mut().enumerate() {
        *start = cursor;
        let (r, c) = layout.block_shape(k);
        cursor += r * c;
    }

    struct Acc {
        e: f64,
        e2: f64,
        g: Vec<f64>,
        eg: Vec<f64>,
    }
    let acc = enumerate::fold_states(
        rbm,
        cap,
        || Acc {
            e: 0.0,
            e2: 0.0,
            g: vec![0.0; n_params],
            eg: vec![0.0; n_params],
        },
        |acc, mask, e| {
            let p = (-beta * e - ln_z).exp();
            acc.e += p * e;
            acc.e2 += p * e * e;
            let pe = p * e;
            for q in 0..4 {
                for i in 0..sizes[q] {
                    if mask >> (off[q] + i) & 1 == 1 {
                        acc.g[off[q] + i] -= p;
                        acc.eg[off[q] + i] -= pe;
                    }
                }
            }
            for (k, &(a, b)) in PAIRS.iter().enumerate() {
                let cols = sizes[b];
                for i in 0..sizes[a] {
                    if mask >> (off[a] + i) & 1 == 0 {
                        continue;
                    }
                    for j in 0..cols {
                        if mask >> (off[b] + j) & 1 == 1 {
                            let idx = block_start[k] + i * cols + j;
                            acc.g[idx] -= p;
                            acc.eg[idx] -= pe;
                        }
                    }
                }
            }
        },
        |mut a, b| {
            a.e += b.e;
            a.e2 += b.e2;
            a.g.iter_mut().zip(&b.g).for_each(|(x, y)| *x += y);
            a.eg.iter_mut().zip(&b.eg).for_each(|(x, y)| *x += y);
            a
        },
    )?;
    let mut mean_grad = Parameters::zeros(layout);
    let mut mean_energy_grad = Parameters::zeros(layout);
    for idx in 0..n_params {
        mean_grad.set_flat(idx, acc.g[idx]);
        mean_energy_grad.set_flat(idx, acc.eg[idx]);
    }
    Ok(ExactMoments {
        beta,
        ln_z,
        mean_energy: acc.e,
        var_energy: (acc.e2 - acc.e * acc.e).max(0.0),
        mean_grad,
        mean_energy_grad,
    })
}

/// Cap for [`exact_sample`], which materializes the full distribution.
pub const EXACT_SAMPLE_CAP: usize = 22;

/// Independent draws from the exact Boltzmann distribution at `beta = 1`.
pub fn exact_sample(rbm: &QuadripartiteRBM, n: usize, seed: u64) -> Result<SampleBatch> {
    if n == 0 {
        return Err(Error::InvalidParameter("n must be at least 1".into()));
    }
    let ln_z = enumerate::ln_z_fast(rbm, 1.0, EXACT_SAMPLE_CAP)?;
    let total = 1usize << rbm.n_nodes();
    let mut probs = enumerate::fold_states(
        rbm,
        EXACT_SAMPLE_CAP,
        Vec::new,
        |acc: &mut Vec<(u64, f64)>, mask, e| acc.push((mask, (-e - ln_z).exp())),
        |mut a, mut b| {
            a.append(&mut b);
            a
        },
    )?;
    debug_assert_eq!(probs.len(), total);
    probs.sort_unstable_by_key(|&(m, _)| m);
    let mut cdf = Vec::with_capacity(total);
    let mut run = 0.0;
    for &(_, p) in &probs {
        run += p;
        cdf.push(run);
    }
    let mut rng = chain_rng(seed, 0);
    let states = (0..n)
        .map(|_| {
            let u = rng.random::<f64>() * run;
            let idx = cdf.partition_point(|&c| c <= u).min(total - 1);
            enumerate::mask_to_state(rbm, probs[idx].0)
        })
        .collect();
    SampleBatch::new(states, SampleSource::Exact, seed, 0)
}

/// Mean log-likelihood of `data`: `mean(-E(x)) - ln Z`.
pub fn rbm_log_likelihood(rbm: &QuadripartiteRBM, data: &SampleBatch, lnz: &LnZEstimate) -> Result<f64> {
    let energies = data.energies(rbm)?;
    let mean_neg_e = -energies.iter().sum::<f64>() / energies.len() as f64;
    Ok(mean_neg_e - lnz.value)
}
