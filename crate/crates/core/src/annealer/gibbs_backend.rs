//! The classical reference backend: block Gibbs on the binary machine that
//! the shipped program describes, at inverse temperature 1.

use super::virtual_qa::instance_nonce;
use super::{check_reads, ProgramHandle, Sampler};
use crate::error::{Error, Result};
use crate::gibbs::{sample, SampleBatch, SampleRequest, SampleSource};
use crate::ising::{ising_to_rbm, IsingProgram};
use crate::layout::Partition;
use crate::rbm::QuadripartiteRBM;

pub struct GibbsBackend {
    n_steps: usize,
    nonce: u64,
}

impl GibbsBackend {
    pub fn new(n_steps: usize) -> Result<Self> {
        if n_steps == 0 {
            return Err(Error::InvalidParameter("n_steps must be at least 1".into()));
        }
        Ok(GibbsBackend {
            n_steps,
            nonce: instance_nonce(),
        })
    }

    /// The binary machine with energy `scale H(z) - phi . z` (up to a
    /// constant): couplings and biases scaled, flux adding `2 phi` to biases.
    pub fn machine(program: &IsingProgram) -> Result<QuadripartiteRBM> {
        let base = ising_to_rbm(program)?.scaled(program.scale);
        let layout = base.layout().clone();
        let off = layout.offsets();
        let mut params = base.into_params();
        for p in Partition::ALL {
            let o = off[p.index()];
            for (i, b) in params.biases[p.index()].iter_mut().enumerate() {
                *b += 2.0 * program.flux_biases[o + i];
            }
        }
        QuadripartiteRBM::new(layout, params)
    }
}

impl Sampler for GibbsBackend {
    fn program(&self, program: &IsingProgram) -> Result<ProgramHandle> {
        Self::machine(program)?;
        Ok(ProgramHandle::new(
            format!("{:016x}-gibbs", self.nonce),
            program.clone(),
            1.0,
        ))
    }

    fn read(&self, handle: &ProgramHandle, num_reads: usize, seed: u64) -> Result<SampleBatch> {
        check_reads(num_reads)?;
        handle.check_open()?;
        if !handle.id().starts_with(&format!("{:016x}-", self.nonce)) {
            return Err(Error::StaleHandle(handle.id().to_string()));
        }
        let rbm = Self::machine(handle.program())?;
        let batch = sample(&rbm, &SampleRequest::new(num_reads, self.n_steps, seed))?;
        handle.record_reads(num_reads);
        let steps = batch.steps;
        SampleBatch::new(batch.into_states(), SampleSource::Gibbs, seed, steps)
    }

    fn name(&self) -> &'static str {
        "gibbs"
    }
}
