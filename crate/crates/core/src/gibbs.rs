//! Block Gibbs sampling for the quadripartite machine.
//!
//! One block step updates the partitions in the fixed order `v, h, s, t`.
//! Each partition is drawn from its factorized conditional given the current
//! values of the other three, so a partition updated earlier in the step is
//! already visible to the later ones. Clamped partitions are skipped.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layout::{pair_index, Partition, PartitionLayout, PartitionSet};
use crate::rbm::{sigmoid, QuadState, QuadripartiteRBM};
use crate::rng::chain_rng;

/// Where a batch of states came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleSource {
    Gibbs,
    Annealer,
    Exact,
    Data,
}

/// An ordered, non-empty collection of states sharing one layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleBatch {
    states: Vec<QuadState>,
    pub source: SampleSource,
    pub seed: u64,
    /// Block Gibbs steps used to produce the states (0 for other sources).
    pub steps: usize,
}

impl SampleBatch {
    pub fn new(states: Vec<QuadState>, source: SampleSource, seed: u64, steps: usize) -> Result<Self> {
        let first = states
            .first()
            .ok_or_else(|| Error::InvalidParameter("sample batch must not be empty".into()))?;
        let sizes = first.sizes();
        if let Some(bad) = states.iter().find(|s| s.sizes() != sizes) {
            return Err(Error::Layout(format!(
                "batch mixes layouts {:?} and {:?}",
                sizes,
                bad.sizes()
            )));
        }
        Ok(SampleBatch {
            states,
            source,
            seed,
            steps,
        })
    }

    pub fn states(&self) -> &[QuadState] {
        &self.states
    }

    pub fn into_states(self) -> Vec<QuadState> {
        self.states
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn sizes(&self) -> [usize; 4] {
        self.states[0].sizes()
    }

    pub fn energies(&self, rbm: &QuadripartiteRBM) -> Result<Vec<f64>> {
        self.states.iter().map(|s| rbm.energy(s)).collect()
    }

    /// Per-unit mean of each partition.
    pub fn unit_means(&self) -> [Vec<f64>; 4] {
        let n = self.states.len() as f64;
        std::array::from_fn(|p| {
            let mut acc = vec![0.0; self.states[0].parts()[p].len()];
            for s in &self.states {
                for (a, &x) in acc.iter_mut().zip(&s.parts()[p]) {
                    *a += x as f64;
                }
            }
            acc.into_iter().map(|a| a / n).collect()
        })
    }
}

/// Precomputed per-partition coupling tables for fast conditional updates.
///
/// For target partition `p` and source `q`, `incoming[p][q]` is an
/// `n_q x n_p` row-major table whose row `j` is the field node `j` of `q`
/// adds to every node of `p` when it is on.
pub(crate) struct GibbsKernel {
    sizes: [usize; 4],
    biases: [Vec<f64>; 4],
    incoming: [[Vec<f64>; 4]; 4],
    /// Multiplies the coupling part of the field (used for annealing ladders).
    coupling_scale: f64,
}

impl GibbsKernel {
    pub fn new(rbm: &QuadripartiteRBM) -> Self {
        Self::with_coupling_scale(rbm, 1.0)
    }

    pub fn with_coupling_scale(rbm: &QuadripartiteRBM, coupling_scale: f64) -> Self {
        let sizes = rbm.layout().sizes();
        let incoming = std::array::from_fn(|p| {
            std::array::from_fn(|q| {
                if p == q {
                    return Vec::new();
                }
                let (k, p_is_row) = pair_index(p, q).expect("distinct partitions");
                let w = rbm.weight(k);
                let mut table = vec![0.0; sizes[q] * sizes[p]];
                for j in 0..sizes[q] {
                    for i in 0..sizes[p] {
                        table[j * sizes[p] + i] = if p_is_row { w[(i, j)] } else { w[(j, i)] };
                    }
                }
                table
            })
        });
        GibbsKernel {
            sizes,
            biases: std::array::from_fn(|p| rbm.bias(Partition::ALL[p]).to_vec()),
            incoming,
            coupling_scale,
        }
    }

    pub fn set_coupling_scale(&mut self, scale: f64) {
        self.coupling_scale = scale;
    }

    /// Coupling-only field on partition `p`, written into `field`.
    #[inline]
    fn coupling_field(&self, state: &QuadState, p: usize, field: &mut [f64]) {
        field.iter_mut().for_each(|f| *f = 0.0);
        let np = self.sizes[p];
        for q in 0..4 {
            if q == p {
                continue;
            }
            let table = &self.incoming[p][q];
            for (j, &x) in state.parts()[q].iter().enumerate() {
                if x != 0 {
                    let row = &table[j * np..(j + 1) * np];
                    field.iter_mut().zip(row).for_each(|(f, w)| *f += w);
                }
            }
        }
    }

    /// Resamples partition `p` of `state` in place.
    #[inline]
    pub fn update_partition<R: Rng + ?Sized>(
        &self,
        state: &mut QuadState,
        p: usize,
        field: &mut Vec<f64>,
        rng: &mut R,
    ) {
        let np = self.sizes[p];
        if np == 0 {
            return;
        }
        field.resize(np, 0.0);
        self.coupling_field(state, p, field);
        let bias = &self.biases[p];
        let scale = self.coupling_scale;
        let part = state.part_mut(Partition::ALL[p]);
        for i in 0..np {
            let prob = sigmoid(bias[i] + scale * field[i]);
            part[i] = (rng.random::<f64>() < prob) as u8;
        }
    }

    /// One block step in the order v, h, s, t, skipping clamped partitions.
    #[inline]
    pub fn step<R: Rng + ?Sized>(
        &self,
        state: &mut QuadState,
        clamped: PartitionSet,
        field: &mut Vec<f64>,
        rng: &mut R,
    ) {
        for p in Partition::ALL {
            if !clamped.contains(p) {
                self.update_partition(state, p.index(), field, rng);
            }
        }
    }

    /// Energy split into `(bias_energy, coupling_energy)`. The coupling scale
    /// is not applied.
    pub fn split_energy(&self, state: &QuadState) -> (f64, f64) {
        let mut eb = 0.0;
        for p in 0..4 {
            for (b, &x) in self.biases[p].iter().zip(&state.parts()[p]) {
                if x != 0 {
                    eb -= b;
                }
            }
        }
        let mut ec = 0.0;
        let mut field = Vec::new();
        // each pair counted once: use fields on partitions 1..4 from lower partitions only
        for p in 1..4 {
            let np = self.sizes[p];
            field.clear();
            field.resize(np, 0.0);
            for q in 0..p {
                let table = &self.incoming[p][q];
                for (j, &x) in state.parts()[q].iter().enumerate() {
                    if x != 0 {
                        field
                            .iter_mut()
                            .zip(&table[j * np..(j + 1) * np])
                            .for_each(|(f, w)| *f += w);
                    }
                }
            }
            for (f, &x) in field.iter().zip(&state.parts()[p]) {
                if x != 0 {
                    ec -= f;
                }
            }
        }
        (eb, ec)
    }
}

/// A single block Gibbs step. Clamped partitions are returned unchanged.
pub fn block_gibbs_step<R: Rng + ?Sized>(
    rbm: &QuadripartiteRBM,
    state: &QuadState,
    rng: &mut R,
    clamped: PartitionSet,
) -> Result<QuadState> {
    state.check(rbm.layout())?;
    let kernel = GibbsKernel::new(rbm);
    let mut next = state.clone();
    let mut field = Vec::new();
    kernel.step(&mut next, clamped, &mut field, rng);
    Ok(next)
}

/// How chains are started.
#[derive(Debug, Clone, Copy)]
pub enum ChainInit<'a> {
    /// Every unit drawn from Bernoulli(1/2) (the Rdm-K start).
    RandomBernoulliHalf,
    /// Chain `i` starts from `states[i % states.len()]`.
    FromStates(&'a [QuadState]),
}

/// Parameters of a multi-chain sampling run.
#[derive(Debug, Clone)]
pub struct SampleRequest<'a> {
    pub n_chains: usize,
    pub n_steps: usize,
    pub seed: u64,
    pub init: ChainInit<'a>,
    pub clamped: PartitionSet,
    /// Values written into clamped partitions before the first step. A
    /// clamped partition without an entry here keeps its initial value.
    pub clamp_values: Vec<(Partition, Vec<u8>)>,
}

impl<'a> SampleRequest<'a> {
    pub fn new(n_chains: usize, n_steps: usize, seed: u64) -> Self {
        SampleRequest {
            n_chains,
            n_steps,
            seed,
            init: ChainInit::RandomBernoulliHalf,
            clamped: PartitionSet::EMPTY,
            clamp_values: Vec::new(),
        }
    }

    pub fn from_states(mut self, states: &'a [QuadState]) -> Self {
        self.init = ChainInit::FromStates(states);
        self
    }

    /// Clamps `p` to `bits` in every chain.
    pub fn clamp(mut self, p: Partition, bits: Vec<u8>) -> Self {
        self.clamped = self.clamped.with(p);
        self.clamp_values.push((p, bits));
        self
    }

    /// Clamps `p` at whatever value each chain starts with.
    pub fn clamp_initial(mut self, p: Partition) -> Self {
        self.clamped = self.clamped.with(p);
        self
    }
}

/// Runs `n_chains` independent chains for `n_steps` block steps each.
///
/// Chain `i` draws from its own stream derived from `(seed, i)`, so the
/// result does not depend on the chain count or on scheduling.
pub fn sample(rbm: &QuadripartiteRBM, req: &SampleRequest<'_>) -> Result<SampleBatch> {
    if req.n_chains == 0 {
        return Err(Error::InvalidParameter("n_chains must be at least 1".into()));
    }
    if req.n_steps == 0 {
        return Err(Error::InvalidParameter("n_steps must be at least 1".into()));
    }
    let layout = rbm.layout();
    if let ChainInit::FromStates(states) = req.init {
        if states.is_empty() {
            return Err(Error::InvalidParameter("initial batch is empty".into()));
        }
        for s in states {
            s.check(layout)?;
        }
    }
    for (p, bits) in &req.clamp_values {
        crate::error::check_len(&format!("clamp values for {p}"), layout.size(*p), bits.len())?;
        if bits.iter().any(|&b| b > 1) {
            return Err(Error::InvalidParameter(format!("clamp values for {p} are not binary")));
        }
    }
    let kernel = GibbsKernel::new(rbm);
    let states = (0..req.n_chains)
        .into_par_iter()
        .map(|chain| {
            let mut rng = chain_rng(req.seed, chain as u64);
            let mut state = initial_state(layout, &req.init, chain, &mut rng);
            for (p, bits) in &req.clamp_values {
                state.part_mut(*p).copy_from_slice(bits);
            }
            let mut field = Vec::new();
            for _ in 0..req.n_steps {
                kernel.step(&mut state, req.clamped, &mut field, &mut rng);
            }
            state
        })
        .collect();
    SampleBatch::new(states, SampleSource::Gibbs, req.seed, req.n_steps)
}

fn initial_state(
    layout: &PartitionLayout,
    init: &ChainInit<'_>,
    chain: usize,
    rng: &mut ChaCha8Rng,
) -> QuadState {
    match init {
        ChainInit::RandomBernoulliHalf => QuadState::random(layout, rng),
        ChainInit::FromStates(states) => states[chain % states.len()].clone(),
    }
}
