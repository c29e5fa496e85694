//! A classical stand-in for an annealer: Boltzmann sampling of the shipped
//! Ising problem at a hidden inverse temperature that fluctuates from one
//! programming to the next.
//!
//! A read samples `p(z) ~ exp(-beta_eff (scale H(z) - phi . z))` by block
//! Gibbs over the four partitions, so a flux bias `phi_i` acts as an
//! additive field in units of `1 / beta_eff` regardless of `scale`.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_reads, ProgramHandle, Sampler};
use crate::error::{Error, Result};
use crate::gibbs::{SampleBatch, SampleSource};
use crate::ising::IsingProgram;
use crate::layout::{PartitionLayout, PAIRS};
use crate::rbm::{sigmoid, QuadState};
use crate::rng::{chain_rng, derive_seed};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VirtualAnnealerConfig {
    pub beta_qa: f64,
    /// Relative standard deviation of the per-programming draw.
    pub programming_noise_sigma: f64,
    /// Added to the effective beta whenever any flux bias is nonzero.
    pub flux_beta_shift: f64,
    pub rare_fluct_prob: f64,
    pub rare_fluct_scale: f64,
    pub equilibration_steps: usize,
    /// When set, the device only has couplers on a random sparse graph of
    /// roughly this degree, and programs using other pairs are rejected.
    pub topology_degree: Option<usize>,
    pub topology_seed: u64,
    /// Models a pause between calls: the rare-fluctuation draw is skipped.
    pub pause: bool,
    /// Seed for the per-programming temperature draws.
    pub seed: u64,
}

impl Default for VirtualAnnealerConfig {
    fn default() -> Self {
        VirtualAnnealerConfig {
            beta_qa: 12.0,
            programming_noise_sigma: 0.0,
            flux_beta_shift: 0.0,
            rare_fluct_prob: 0.0,
            rare_fluct_scale: 0.10,
            equilibration_steps: 1000,
            topology_degree: None,
            topology_seed: 0,
            pause: false,
            seed: 0,
        }
    }
}

impl VirtualAnnealerConfig {
    pub fn noiseless(beta_qa: f64) -> Self {
        VirtualAnnealerConfig {
            beta_qa,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if !(self.beta_qa > 0.0 && self.beta_qa.is_finite()) {
            return bad(format!("beta_qa must be positive, got {}", self.beta_qa));
        }
        if !(self.programming_noise_sigma >= 0.0 && self.programming_noise_sigma.is_finite()) {
            return bad(format!(
                "programming_noise_sigma must be >= 0, got {}",
                self.programming_noise_sigma
            ));
        }
        if !(self.flux_beta_shift <= 0.0) {
            return bad(format!("flux_beta_shift must be <= 0, got {}", self.flux_beta_shift));
        }
        if !(0.0..=1.0).contains(&self.rare_fluct_prob) {
            return bad(format!("rare_fluct_prob must be in [0, 1], got {}", self.rare_fluct_prob));
        }
        if !(self.rare_fluct_scale >= 0.0 && self.rare_fluct_scale < 1.0) {
            return bad(format!("rare_fluct_scale must be in [0, 1), got {}", self.rare_fluct_scale));
        }
        if self.equilibration_steps == 0 {
            return bad("equilibration_steps must be at least 1".into());
        }
        Ok(())
    }

    /// The device graph for a given set of partition sizes.
    pub fn hardware_layout(&self, sizes: [usize; 4]) -> Result<PartitionLayout> {
        match self.topology_degree {
            None => PartitionLayout::new(sizes),
            Some(d) => {
                let mut rng = chain_rng(self.topology_seed, 0);
                PartitionLayout::random_sparse(sizes, d, &mut rng)
            }
        }
    }
}

static INSTANCE_COUNTER: AtomicU64 = AtomicU64::new(0);

/// A fresh tag per backend instance, so handles from another instance (or
/// an earlier incarnation of a server) are recognized as stale.
pub(crate) fn instance_nonce() -> u64 {
    let t = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_nanos() as u64)
        .unwrap_or(0);
    derive_seed(t ^ u64::from(std::process::id()), INSTANCE_COUNTER.fetch_add(1, Ordering::Relaxed))
}

pub struct VirtualAnnealer {
    config: VirtualAnnealerConfig,
    nonce: u64,
    rng: Mutex<ChaCha8Rng>,
    programmed: AtomicU64,
}

impl VirtualAnnealer {
    pub fn new(config: VirtualAnnealerConfig) -> Result<Self> {
        config.validate()?;
        let rng = chain_rng(config.seed, 0x5150);
        Ok(VirtualAnnealer {
            config,
            nonce: instance_nonce(),
            rng: Mutex::new(rng),
            programmed: AtomicU64::new(0),
        })
    }

    pub fn config(&self) -> &VirtualAnnealerConfig {
        &self.config
    }

    /// Draws the effective inverse temperature for one programming.
    pub fn draw_effective_beta(&self, has_flux: bool) -> Result<f64> {
        let c = &self.config;
        let mut rng = self.rng.lock().expect("rng lock");
        let mut beta = c.beta_qa;
        if c.programming_noise_sigma > 0.0 {
            let noise = Normal::new(0.0, c.programming_noise_sigma).expect("valid sigma");
            beta *= 1.0 + noise.sample(&mut *rng);
        }
        if has_flux {
            beta += c.flux_beta_shift;
        }
        if !c.pause && c.rare_fluct_prob > 0.0 && rng.random::<f64>() < c.rare_fluct_prob {
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            beta *= 1.0 + sign * c.rare_fluct_scale;
        }
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::Backend(format!("effective beta draw {beta} is not positive")));
        }
        Ok(beta)
    }

    fn check_topology(&self, program: &IsingProgram) -> Result<()> {
        if self.config.topology_degree.is_none() {
            return Ok(());
        }
        let hw = self.config.hardware_layout(program.layout().sizes())?;
        let off = hw.offsets();
        for c in &program.couplings {
            if c.value == 0.0 {
                continue;
            }
            let (p, i) = hw.locate(c.i).expect("validated index");
            let (q, j) = hw.locate(c.j).expect("validated index");
            let k = PAIRS
                .iter()
                .position(|&(a, b)| (a, b) == (p.index(), q.index()))
                .ok_or_else(|| Error::Structure("coupling order".into()))?;
            if !hw.allows(k, i, j) {
                return Err(Error::Structure(format!(
                    "coupler ({}, {}) does not exist on the device graph",
                    off[p.index()] + i,
                    off[q.index()] + j
                )));
            }
        }
        Ok(())
    }

    fn owns(&self, handle: &ProgramHandle) -> bool {
        handle
            .id()
            .split_once('-')
            .and_then(|(n, _)| u64::from_str_radix(n, 16).ok())
            == Some(self.nonce)
    }

    fn sample_reads(&self, handle: &ProgramHandle, num_reads: usize, seed: u64) -> Result<SampleBatch> {
        check_reads(num_reads)?;
        handle.check_open()?;
        let kernel = SpinKernel::new(handle.program(), handle.effective_beta());
        let layout = handle.program().layout();
        let steps = self.config.equilibration_steps;
        let states: Vec<QuadState> = (0..num_reads)
            .into_par_iter()
            .map(|r| {
                let mut rng = chain_rng(seed, r as u64);
                let mut z = kernel.random_spins(&mut rng);
                for _ in 0..steps {
                    kernel.sweep(&mut z, &mut rng);
                }
                let parts = z.map(|p| p.iter().map(|&s| u8::from(s > 0)).collect());
                QuadState::new(parts).expect("bits are binary")
            })
            .collect();
        debug_assert!(states.iter().all(|s| s.matches(layout)));
        handle.record_reads(num_reads);
        SampleBatch::new(states, SampleSource::Annealer, seed, 0)
    }
}

impl Sampler for VirtualAnnealer {
    fn program(&self, program: &IsingProgram) -> Result<ProgramHandle> {
        self.check_topology(program)?;
        let beta = self.draw_effective_beta(program.has_flux())?;
        let n = self.programmed.fetch_add(1, Ordering::Relaxed);
        Ok(ProgramHandle::new(
            format!("{:016x}-{n}", self.nonce),
            program.clone(),
            beta,
        ))
    }

    fn read(&self, handle: &ProgramHandle, num_reads: usize, seed: u64) -> Result<SampleBatch> {
        if !self.owns(handle) {
            return Err(Error::StaleHandle(handle.id().to_string()));
        }
        self.sample_reads(handle, num_reads, seed)
    }

    fn name(&self) -> &'static str {
        "virtual"
    }
}

/// Spin-basis block Gibbs kernel with everything pre-multiplied by
/// `beta_eff`.
///
/// The local field on spin `i` is
/// `h_i = beta (scale (delta_i + sum_j J_ij z_j) - phi_i)` and
/// `p(z_i = +1) = sigmoid(-2 h_i)`. Fields are assembled as "all neighbours
/// down" plus twice the rows of the neighbours that are up.
struct SpinKernel {
    sizes: [usize; 4],
    base: [Vec<f64>; 4],
    rows: [[Vec<f64>; 4]; 4],
}

impl SpinKernel {
    fn new(program: &IsingProgram, beta: f64) -> Self {
        let layout = program.layout();
        let sizes = layout.sizes();
        let off = layout.offsets();
        let k = beta * program.scale;
        let tables = program.partition_tables();
        let rows: [[Vec<f64>; 4]; 4] =
            std::array::from_fn(|p| std::array::from_fn(|q| tables[p][q].iter().map(|w| k * w).collect()));
        let base = std::array::from_fn(|p| {
            let np = sizes[p];
            let mut b: Vec<f64> = (0..np)
                .map(|i| k * program.delta[off[p] + i] - beta * program.flux_biases[off[p] + i])
                .collect();
            for q in 0..4 {
                if q == p {
                    continue;
                }
                for j in 0..sizes[q] {
                    for (bi, w) in b.iter_mut().zip(&rows[p][q][j * np..(j + 1) * np]) {
                        *bi -= w;
                    }
                }
            }
            b
        });
        SpinKernel { sizes, base, rows }
    }

    fn random_spins(&self, rng: &mut ChaCha8Rng) -> [Vec<i8>; 4] {
        std::array::from_fn(|p| {
            (0..self.sizes[p])
                .map(|_| if rng.random::<bool>() { 1 } else { -1 })
                .collect()
        })
    }

    fn sweep(&self, z: &mut [Vec<i8>; 4], rng: &mut ChaCha8Rng) {
        let mut field = Vec::new();
        for p in 0..4 {
            let np = self.sizes[p];
            field.clear();
            field.extend_from_slice(&self.base[p]);
            for q in 0..4 {
                if q == p {
                    continue;
                }
                let table = &self.rows[p][q];
                for (j, &s) in z[q].iter().enumerate() {
                    if s > 0 {
                        for (f, w) in field.iter_mut().zip(&table[j * np..(j + 1) * np]) {
                            *f += 2.0 * w;
                        }
                    }
                }
            }
            for (zi, h) in z[p].iter_mut().zip(&field) {
                *zi = if rng.random::<f64>() < sigmoid(-2.0 * h) { 1 } else { -1 };
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ising::{apply_scale, binary_to_spin, condition_to_flux, rbm_to_ising};
    use crate::layout::{Partition, PartitionLayout};
    use crate::rbm::QuadripartiteRBM;
    use crate::zestimate::enumerate;
    use rand::SeedableRng;

    #[test]
    fn noiseless_draw_is_exact() {
        let qa = VirtualAnnealer::new(VirtualAnnealerConfig::noiseless(12.0)).unwrap();
        for _ in 0..10 {
            assert_eq!(qa.draw_effective_beta(false).unwrap(), 12.0);
        }
    }

    #[test]
    fn invalid_config_rejected() {
        for cfg in [
            VirtualAnnealerConfig { beta_qa: 0.0, ..Default::default() },
            VirtualAnnealerConfig { flux_beta_shift: 0.5, ..Default::default() },
            VirtualAnnealerConfig { rare_fluct_prob: 1.5, ..Default::default() },
            VirtualAnnealerConfig { equilibration_steps: 0, ..Default::default() },
        ] {
            assert!(VirtualAnnealer::new(cfg).is_err());
        }
    }

    #[test]
    fn pause_suppresses_rare_fluctuations() {
        let cfg = VirtualAnnealerConfig {
            rare_fluct_prob: 1.0,
            pause: true,
            ..Default::default()
        };
        let qa = VirtualAnnealer::new(cfg.clone()).unwrap();
        assert_eq!(qa.draw_effective_beta(false).unwrap(), 12.0);
        let qa = VirtualAnnealer::new(VirtualAnnealerConfig { pause: false, ..cfg }).unwrap();
        let b = qa.draw_effective_beta(false).unwrap();
        assert!((b - 13.2).abs() < 1e-12 || (b - 10.8).abs() < 1e-12);
    }

    /// Exact single-spin marginals of the scaled, flux-biased program.
    fn exact_marginals(program: &IsingProgram, beta: f64) -> Vec<f64> {
        let layout = program.layout().clone();
        let rbm = QuadripartiteRBM::zeros(layout.clone());
        let n = layout.total();
        let mut weights = Vec::new();
        for m in 0..1u64 << n {
            let x = enumerate::mask_to_state(&rbm, m);
            let z = binary_to_spin(&x);
            let flux: f64 = program.flux_biases.iter().zip(z.spins()).map(|(f, &s)| f * s as f64).sum();
            let e = beta * (program.scale * program.energy(&z).unwrap() - flux);
            weights.push((z, -e));
        }
        let max = weights.iter().map(|w| w.1).fold(f64::NEG_INFINITY, f64::max);
        let total: f64 = weights.iter().map(|w| (w.1 - max).exp()).sum();
        let mut m = vec![0.0; n];
        for (z, lw) in &weights {
            let p = (lw - max).exp() / total;
            for (mi, &s) in m.iter_mut().zip(z.spins()) {
                if s > 0 {
                    *mi += p;
                }
            }
        }
        m
    }

    #[test]
    fn reads_match_exact_marginals() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let layout = PartitionLayout::new([2, 2, 2, 2]).unwrap();
        let rbm = QuadripartiteRBM::random(layout.clone(), 1.0, &mut rng);
        let flux = condition_to_flux(&layout, Partition::S, &[1, 0], 0.05).unwrap();
        let program = apply_scale(&rbm_to_ising(&rbm), 4.0).unwrap().with_flux(flux).unwrap();
        let qa = VirtualAnnealer::new(VirtualAnnealerConfig {
            beta_qa: 4.0,
            equilibration_steps: 30,
            ..Default::default()
        })
        .unwrap();
        let handle = qa.program(&program).unwrap();
        let n = 20_000;
        let batch = qa.read(&handle, n, 9).unwrap();
        let exact = exact_marginals(&program, 4.0);
        let flat_means: Vec<f64> = batch.unit_means().concat();
        for (m, p) in flat_means.iter().zip(&exact) {
            let sd = (p * (1.0 - p) / n as f64).sqrt();
            assert!((m - p).abs() < 4.0 * sd + 1e-3, "{m} vs {p}");
        }
        assert_eq!(handle.reads_served(), n as u64);
    }

    #[test]
    fn handles_from_other_instances_are_stale() {
        let a = VirtualAnnealer::new(VirtualAnnealerConfig::default()).unwrap();
        let b = VirtualAnnealer::new(VirtualAnnealerConfig::default()).unwrap();
        let prog = rbm_to_ising(&QuadripartiteRBM::zeros(PartitionLayout::new([1, 1, 1, 1]).unwrap()));
        let h = a.program(&prog).unwrap();
        assert!(matches!(b.read(&h, 1, 0), Err(Error::StaleHandle(_))));
        h.close();
        assert!(matches!(a.read(&h, 1, 0), Err(Error::HandleClosed(_))));
    }

    #[test]
    fn topology_rejects_missing_couplers() {
        let cfg = VirtualAnnealerConfig {
            topology_degree: Some(1),
            topology_seed: 4,
            ..Default::default()
        };
        let qa = VirtualAnnealer::new(cfg.clone()).unwrap();
        let sizes = [4, 4, 4, 4];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let on_device = QuadripartiteRBM::random(cfg.hardware_layout(sizes).unwrap(), 1.0, &mut rng);
        assert!(qa.program(&rbm_to_ising(&on_device)).is_ok());
        let dense = QuadripartiteRBM::random(PartitionLayout::new(sizes).unwrap(), 1.0, &mut rng);
        assert!(matches!(qa.program(&rbm_to_ising(&dense)), Err(Error::Structure(_))));
    }
}
