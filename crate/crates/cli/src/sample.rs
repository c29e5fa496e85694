//! Classical and annealer sampling of one machine, with energy histograms on
//! shared bins and optional conditioning.

use quadrbm::annealer::{ProgramHandle, Sampler};
use quadrbm::ising::{apply_scale, condition_to_flux, rbm_to_ising};
use quadrbm::rng::derive_seed;
use quadrbm::zestimate::{histogram, tv_distance, uniform_edges, DensityOfStates};
use quadrbm::{sample, SampleBatch, SampleRequest};
use quadrbm_calo::{sparsity_index, ToyConfig, ToyGenerator};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{BackendKind, RunConfig};
use crate::error::Result;
use crate::output::OutDir;
use crate::setup;

#[derive(Debug, Serialize)]
pub struct SampleSummary {
    pub sizes: [usize; 4],
    pub n_samples: usize,
    pub classical_mean_energy: f64,
    pub annealer_mean_energy: Option<f64>,
    pub tv: Option<f64>,
    pub classical_condition_fidelity: Option<f64>,
    pub annealer_condition_fidelity: Option<f64>,
    pub effective_beta: Option<f64>,
}

pub fn run(cfg: &RunConfig, out: &OutDir) -> Result<SampleSummary> {
    let s = &cfg.sampling;
    let seed = cfg.run.seed;
    let rbm = setup::machine(cfg, seed)?;
    let condition = setup::condition(cfg, rbm.layout())?;

    let mut req = SampleRequest::new(s.n_samples, s.n_steps, derive_seed(seed, 1));
    if let Some(c) = &condition {
        req = req.clamp(c.partition, c.bits.clone());
    }
    let classical = sample(&rbm, &req)?;
    out.write("samples_classical.csv", states_csv(&classical))?;
    let e_classical = classical.energies(&rbm)?;

    let mut annealer = None;
    if cfg.run.backend != BackendKind::Gibbs {
        let backend = setup::backend(cfg)?;
        let mut program = apply_scale(&rbm_to_ising(&rbm), s.beta)?;
        if let Some(c) = &condition {
            program = program.with_flux(condition_to_flux(rbm.layout(), c.partition, &c.bits, c.flux_strength)?)?;
        }
        let handle = backend.program(&program)?;
        let reads = read_all(backend.as_ref(), &handle, s.n_samples, derive_seed(seed, 2))?;
        out.write("samples_annealer.csv", states_csv(&reads))?;
        annealer = Some((reads.energies(&rbm)?, reads, handle.effective_beta()));
    }

    let all = e_classical.iter().chain(annealer.iter().flat_map(|a| a.0.iter()));
    let lo = all.clone().cloned().fold(f64::INFINITY, f64::min);
    let hi = all.cloned().fold(f64::NEG_INFINITY, f64::max);
    let edges = uniform_edges(lo, hi + 1e-9 * (1.0 + hi.abs()), s.n_bins)?;
    let h_classical = histogram(&e_classical, &edges);
    out.write("energy_histogram_classical.csv", h_classical.to_csv())?;

    let fidelity = |batch: &SampleBatch| {
        condition.as_ref().map(|c| {
            let hits = batch.states().iter().filter(|x| x.part(c.partition) == c.bits.as_slice()).count();
            hits as f64 / batch.len() as f64
        })
    };

    let mut summary = SampleSummary {
        sizes: rbm.layout().sizes(),
        n_samples: s.n_samples,
        classical_mean_energy: mean(&e_classical),
        annealer_mean_energy: None,
        tv: None,
        classical_condition_fidelity: fidelity(&classical),
        annealer_condition_fidelity: None,
        effective_beta: None,
    };
    if let Some((energies, reads, beta)) = &annealer {
        let h: DensityOfStates = histogram(energies, &edges);
        out.write("energy_histogram_annealer.csv", h.to_csv())?;
        summary.annealer_mean_energy = Some(mean(energies));
        summary.tv = Some(tv_distance(&h_classical, &h)?);
        summary.annealer_condition_fidelity = fidelity(reads);
        summary.effective_beta = Some(*beta);
    }

    if s.toy_showers > 0 {
        let gen = ToyGenerator::new(ToyConfig::default())?;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 3));
        let sparsity: Vec<f64> = gen.generate_n(s.toy_showers, &mut rng)?.iter().map(sparsity_index).collect();
        let h = histogram(&sparsity, &uniform_edges(0.0, 1.0 + 1e-12, 20)?);
        out.write("sparsity_histogram.csv", h.to_csv())?;
    }
    out.write_json("sample_summary.json", &summary)?;
    Ok(summary)
}

/// Reads in chunks so a remote backend never sees oversized requests.
fn read_all(backend: &dyn Sampler, handle: &ProgramHandle, n: usize, seed: u64) -> Result<SampleBatch> {
    const CHUNK: usize = 4096;
    if n <= CHUNK {
        return Ok(backend.read(handle, n, seed)?);
    }
    let mut states = Vec::with_capacity(n);
    let mut first = None;
    for (i, start) in (0..n).step_by(CHUNK).enumerate() {
        let b = backend.read(handle, CHUNK.min(n - start), derive_seed(seed, i as u64))?;
        first.get_or_insert((b.source, b.steps));
        states.extend(b.into_states());
    }
    let (source, steps) = first.expect("n > 0");
    Ok(SampleBatch::new(states, source, seed, steps)?)
}

fn states_csv(batch: &SampleBatch) -> String {
    let mut out = String::new();
    for s in batch.states() {
        let row: Vec<String> = s.to_flat().iter().map(u8::to_string).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}
