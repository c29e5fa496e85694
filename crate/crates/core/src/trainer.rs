//! Maximum-likelihood training on fully observed quad states, plus the
//! relaxed-Bernoulli (Gumbel) sampler and its entropy estimator.
//!
//! Gradients are of the mean log-likelihood, `<-dE/dphi>_data -
//! <-dE/dphi>_model`; for an observed state `-dE/da_i = x_i` and
//! `-dE/dW_ij = x_i y_j`.

use rand::Rng;
use rand_distr::Open01;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gibbs::{sample, SampleBatch, SampleRequest};
use crate::layout::{PartitionSet, PAIRS};
use crate::rbm::{log_sigmoid, sigmoid, Parameters, QuadState, QuadripartiteRBM};
use crate::rng::{chain_rng, derive_seed};
use crate::zestimate::{exact_ln_z, exact_moments};

/// Gradients share the parameter layout.
pub type GradientRecord = Parameters;

/// Batch averages of `-dE/dphi`: unit means for biases, pairwise
/// co-activation rates for couplings. Masked couplings stay zero.
pub fn positive_phase(rbm: &QuadripartiteRBM, batch: &SampleBatch) -> Result<GradientRecord> {
    let layout = rbm.layout();
    let mut g = Parameters::zeros(layout);
    for s in batch.states() {
        s.check(layout)?;
        let parts = s.parts();
        for (p, part) in parts.iter().enumerate() {
            for (gi, &x) in g.biases[p].iter_mut().zip(part) {
                *gi += f64::from(x);
            }
        }
        for (k, &(a, b)) in PAIRS.iter().enumerate() {
            for (i, &xa) in parts[a].iter().enumerate() {
                if xa == 0 {
                    continue;
                }
                for (j, &xb) in parts[b].iter().enumerate() {
                    if xb != 0 {
                        g.weights[k][(i, j)] += 1.0;
                    }
                }
            }
        }
    }
    let n = batch.len() as f64;
    g.biases.iter_mut().for_each(|b| b.iter_mut().for_each(|x| *x /= n));
    for (k, w) in g.weights.iter_mut().enumerate() {
        for ((i, j), x) in w.indexed_iter_mut() {
            *x = if layout.allows(k, i, j) { *x / n } else { 0.0 };
        }
    }
    Ok(g)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainingMethod {
    /// Chains start from uniform random states each update.
    RdmK,
    /// Chains start from the data batch.
    CdK,
    /// Chains continue from the previous update's final states.
    PcdK,
}

impl std::str::FromStr for TrainingMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rdm" | "rdm_k" => Ok(TrainingMethod::RdmK),
            "cd" | "cd_k" => Ok(TrainingMethod::CdK),
            "pcd" | "pcd_k" => Ok(TrainingMethod::PcdK),
            other => Err(Error::InvalidParameter(format!("unknown training method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainerState {
    pub method: TrainingMethod,
    pub k: usize,
    pub learning_rate: f64,
    /// L2 decay applied as `-weight_decay * phi` in the update; 0 disables it.
    pub weight_decay: f64,
    /// Negative-phase chains for the random and persistent methods.
    pub n_chains: usize,
    /// Partitions held at their data values in both phases.
    pub clamped: PartitionSet,
    pub persistent_chains: Option<SampleBatch>,
    pub epoch: usize,
    pub updates: usize,
}

impl TrainerState {
    pub fn new(method: TrainingMethod, k: usize, learning_rate: f64, n_chains: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidParameter("k must be at least 1".into()));
        }
        if !(learning_rate >= 0.0 && learning_rate.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "learning rate must be non-negative, got {learning_rate}"
            )));
        }
        if n_chains == 0 {
            return Err(Error::InvalidParameter("n_chains must be at least 1".into()));
        }
        Ok(TrainerState {
            method,
            k,
            learning_rate,
            weight_decay: 0.0,
            n_chains,
            clamped: PartitionSet::EMPTY,
            persistent_chains: None,
            epoch: 0,
            updates: 0,
        })
    }

    pub fn with_clamped(mut self, clamped: PartitionSet) -> Self {
        self.clamped = clamped;
        self
    }

    pub fn to_json(&self) -> Result<String> {
        let file = TrainerFile {
            method: self.method,
            k: self.k,
            learning_rate: self.learning_rate,
            weight_decay: self.weight_decay,
            n_chains: self.n_chains,
            clamped: self.clamped,
            persistent_chains: self
                .persistent_chains
                .as_ref()
                .map(|b| b.states().iter().map(QuadState::to_flat).collect()),
            epoch: self.epoch,
            updates: self.updates,
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str, rbm: &QuadripartiteRBM) -> Result<Self> {
        let f: TrainerFile = serde_json::from_str(text)?;
        let persistent_chains = match f.persistent_chains {
            None => None,
            Some(rows) => {
                let states = rows
                    .iter()
                    .map(|r| QuadState::from_flat(rbm.layout(), r))
                    .collect::<Result<Vec<_>>>()?;
                Some(SampleBatch::new(states, crate::gibbs::SampleSource::Gibbs, 0, f.k)?)
            }
        };
        let mut s = TrainerState::new(f.method, f.k, f.learning_rate, f.n_chains)?;
        s.weight_decay = f.weight_decay;
        s.clamped = f.clamped;
        s.persistent_chains = persistent_chains;
        s.epoch = f.epoch;
        s.updates = f.updates;
        Ok(s)
    }
}

#[derive(Serialize, Deserialize)]
struct TrainerFile {
    method: TrainingMethod,
    k: usize,
    learning_rate: f64,
    weight_decay: f64,
    n_chains: usize,
    clamped: PartitionSet,
    persistent_chains: Option<Vec<Vec<u8>>>,
    epoch: usize,
    updates: usize,
}

/// Copies the clamped partitions of data row `i % n` into `state`.
fn impose_clamped(state: &mut QuadState, data: &SampleBatch, i: usize, clamped: PartitionSet) {
    let src = &data.states()[i % data.len()];
    for p in clamped.iter() {
        state.part_mut(p).copy_from_slice(src.part(p));
    }
}

/// Runs `k` block Gibbs steps from the method's starting states and returns
/// model-side averages of `-dE/dphi` together with the final chains.
/// Persistent chains are created on first use (from random states) and
/// replaced in `state`.
pub fn negative_phase(
    rbm: &QuadripartiteRBM,
    state: &mut TrainerState,
    data: &SampleBatch,
    seed: u64,
) -> Result<(GradientRecord, SampleBatch)> {
    let layout = rbm.layout();
    let mut init_rng = chain_rng(derive_seed(seed, 0x1417), 0);
    let mut starts: Vec<QuadState> = match state.method {
        TrainingMethod::CdK => data.states().to_vec(),
        TrainingMethod::RdmK => (0..state.n_chains)
            .map(|_| QuadState::random(layout, &mut init_rng))
            .collect(),
        TrainingMethod::PcdK => match &state.persistent_chains {
            Some(b) => b.states().to_vec(),
            None => (0..state.n_chains)
                .map(|_| QuadState::random(layout, &mut init_rng))
                .collect(),
        },
    };
    if !state.clamped.is_empty() {
        for (i, s) in starts.iter_mut().enumerate() {
            impose_clamped(s, data, i, state.clamped);
        }
    }
    let mut req = SampleRequest::new(starts.len(), state.k, seed).from_states(&starts);
    req.clamped = state.clamped;
    let chains = sample(rbm, &req)?;
    let grad = positive_phase(rbm, &chains)?;
    if state.method == TrainingMethod::PcdK {
        state.persistent_chains = Some(chains.clone());
    }
    Ok((grad, chains))
}

/// Summary of one update, also one row of the training log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepReport {
    pub update: usize,
    /// Mean of `-E` over the data batch before the update.
    pub mean_neg_energy: f64,
    pub positive_norm: f64,
    pub negative_norm: f64,
    pub gradient_norm: f64,
}

pub const TRAINING_LOG_HEADER: &str = "update,mean_neg_energy,positive_norm,negative_norm,gradient_norm";

impl StepReport {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.update, self.mean_neg_energy, self.positive_norm, self.negative_norm, self.gradient_norm
        )
    }
}

fn difference(a: &Parameters, b: &Parameters) -> Parameters {
    let mut out = a.clone();
    for (o, x) in out.biases.iter_mut().zip(&b.biases) {
        o.iter_mut().zip(x).for_each(|(o, x)| *o -= x);
    }
    for (o, x) in out.weights.iter_mut().zip(&b.weights) {
        *o -= x;
    }
    out
}

/// One stochastic gradient ascent step on the log-likelihood. Aborts
/// without touching the machine if any gradient entry is not finite.
pub fn train_step(
    rbm: &mut QuadripartiteRBM,
    data: &SampleBatch,
    state: &mut TrainerState,
    seed: u64,
) -> Result<StepReport> {
    let pos = positive_phase(rbm, data)?;
    let saved_chains = state.persistent_chains.clone();
    let (neg, _) = negative_phase(rbm, state, data, seed)?;
    let mut grad = difference(&pos, &neg);
    if state.weight_decay != 0.0 {
        let decay = rbm.params().clone();
        let mut scaled = decay.clone();
        scaled.biases.iter_mut().for_each(|b| b.iter_mut().for_each(|x| *x *= state.weight_decay));
        scaled.weights.iter_mut().for_each(|w| w.mapv_inplace(|x| x * state.weight_decay));
        grad = difference(&grad, &scaled);
    }
    if !grad.all_finite() {
        state.persistent_chains = saved_chains;
        return Err(Error::NonFinite(format!(
            "gradient at update {} (positive norm {}, negative norm {})",
            state.updates,
            pos.norm(),
            neg.norm()
        )));
    }
    let energies = data.energies(rbm)?;
    let report = StepReport {
        update: state.updates,
        mean_neg_energy: -energies.iter().sum::<f64>() / energies.len() as f64,
        positive_norm: pos.norm(),
        negative_norm: neg.norm(),
        gradient_norm: grad.norm(),
    };
    rbm.add_scaled(&grad, state.learning_rate);
    state.updates += 1;
    Ok(report)
}

/// Exact gradient of the mean log-likelihood of `data` by enumeration.
pub fn exact_gradient(rbm: &QuadripartiteRBM, data: &SampleBatch) -> Result<GradientRecord> {
    let pos = positive_phase(rbm, data)?;
    let m = exact_moments(rbm, 1.0)?;
    // mean_grad holds <dE/dphi> = -<-dE/dphi>
    let mut g = pos;
    for (o, x) in g.biases.iter_mut().zip(&m.mean_grad.biases) {
        o.iter_mut().zip(x).for_each(|(o, x)| *o += x);
    }
    for (k, (o, x)) in g.weights.iter_mut().zip(&m.mean_grad.weights).enumerate() {
        for ((i, j), v) in o.indexed_iter_mut() {
            *v = if rbm.layout().allows(k, i, j) { *v + x[(i, j)] } else { 0.0 };
        }
    }
    Ok(g)
}

/// Mean log-likelihood of `data` with `ln Z` by enumeration.
pub fn exact_log_likelihood(rbm: &QuadripartiteRBM, data: &SampleBatch) -> Result<f64> {
    let ln_z = exact_ln_z(rbm, 1.0)?.value;
    let e = data.energies(rbm)?;
    Ok(-e.iter().sum::<f64>() / e.len() as f64 - ln_z)
}

/// A relaxed Bernoulli draw `zeta_i = sigmoid((l_i + logit(rho_i)) beta)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RelaxedSample {
    pub zeta: Vec<f64>,
    pub logits: Vec<f64>,
    pub anneal_beta: f64,
    pub noise: Vec<f64>,
}

pub fn gumbel_relax<R: Rng + ?Sized>(logits: &[f64], anneal_beta: f64, rng: &mut R) -> Result<RelaxedSample> {
    if !(anneal_beta > 0.0) {
        return Err(Error::InvalidParameter(format!("anneal_beta must be positive, got {anneal_beta}")));
    }
    let noise: Vec<f64> = logits.iter().map(|_| rng.sample(Open01)).collect();
    let zeta = relax_with_noise(logits, anneal_beta, &noise);
    Ok(RelaxedSample {
        zeta,
        logits: logits.to_vec(),
        anneal_beta,
        noise,
    })
}

/// The deterministic part of [`gumbel_relax`] for given uniforms.
pub fn relax_with_noise(logits: &[f64], anneal_beta: f64, noise: &[f64]) -> Vec<f64> {
    logits
        .iter()
        .zip(noise)
        .map(|(l, r)| sigmoid((l + (r / (1.0 - r)).ln()) * anneal_beta))
        .collect()
}

/// Batch mean of `sum_i [zeta_i ln sigmoid(l_i) + (1 - zeta_i) ln(1 - sigmoid(l_i))]`,
/// i.e. the expected log-probability of the relaxed samples under
/// independent Bernoullis with the given logits. Its expectation in the
/// hard limit is minus the Bernoulli entropy.
pub fn entropy_estimate(logits: &[f64], zeta_batch: &[Vec<f64>]) -> Result<f64> {
    if zeta_batch.is_empty() {
        return Err(Error::InvalidParameter("empty zeta batch".into()));
    }
    let mut total = 0.0;
    for zeta in zeta_batch {
        crate::error::check_len("zeta", logits.len(), zeta.len())?;
        for (&l, &z) in logits.iter().zip(zeta) {
            if !(0.0..=1.0).contains(&z) {
                return Err(Error::InvalidParameter(format!("zeta entry {z} outside [0, 1]")));
            }
            total += z * log_sigmoid(l) + (1.0 - z) * log_sigmoid(-l);
        }
    }
    Ok(total / zeta_batch.len() as f64)
}
