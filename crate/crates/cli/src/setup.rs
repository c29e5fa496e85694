//! Builds machines, backends and conditions from a [`RunConfig`].

use quadrbm::annealer::{GibbsBackend, RemoteSampler, Sampler, VirtualAnnealer};
use quadrbm::calibration::Condition;
use quadrbm::{Partition, PartitionLayout, QuadripartiteRBM};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{BackendKind, RunConfig};
use crate::error::{CliError, Result};

/// The configured machine: loaded from `model.path`, or drawn with `seed`.
pub fn machine(cfg: &RunConfig, seed: u64) -> Result<QuadripartiteRBM> {
    if let Some(path) = &cfg.model.path {
        return Ok(QuadripartiteRBM::load(path)?);
    }
    random_machine(cfg.model.sizes, cfg.model.init_std, seed)
}

pub fn random_machine(sizes: [usize; 4], std: f64, seed: u64) -> Result<QuadripartiteRBM> {
    if !(std >= 0.0 && std.is_finite()) {
        return Err(CliError::Config(format!("init_std must be non-negative, got {std}")));
    }
    let layout = PartitionLayout::new(sizes).map_err(|e| CliError::Config(e.to_string()))?;
    Ok(QuadripartiteRBM::random(layout, std, &mut ChaCha8Rng::seed_from_u64(seed)))
}

pub fn backend(cfg: &RunConfig) -> Result<Box<dyn Sampler>> {
    Ok(match cfg.run.backend {
        BackendKind::Gibbs => Box::new(GibbsBackend::new(cfg.sampling.n_steps)?),
        BackendKind::Virtual => Box::new(VirtualAnnealer::new(cfg.annealer.clone())?),
        BackendKind::Remote => Box::new(RemoteSampler::new(&cfg.run.endpoint)),
    })
}

/// The condition described by the `sampling` section, if any.
pub fn condition(cfg: &RunConfig, layout: &PartitionLayout) -> Result<Option<Condition>> {
    let s = &cfg.sampling;
    let bits: Vec<u8> = match (s.condition_energy, &s.condition_bits) {
        (Some(e), _) => quadrbm_calo::encode_incident_energy(e)?.bits,
        (None, Some(text)) => text
            .chars()
            .map(|c| match c {
                '0' => Ok(0),
                '1' => Ok(1),
                other => Err(CliError::Config(format!("condition_bits holds {other:?}"))),
            })
            .collect::<Result<_>>()?,
        (None, None) => return Ok(None),
    };
    let partition: Partition = s
        .condition_partition
        .as_deref()
        .unwrap_or("v")
        .parse()
        .map_err(|e: quadrbm::Error| CliError::Config(e.to_string()))?;
    if bits.len() != layout.size(partition) {
        return Err(CliError::Config(format!(
            "condition has {} bits but partition {partition} has {} units",
            bits.len(),
            layout.size(partition)
        )));
    }
    Ok(Some(Condition {
        partition,
        bits,
        flux_strength: s.flux_strength,
    }))
}
