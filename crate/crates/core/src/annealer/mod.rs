//! The sampler contract (program once, read many times) and its backends:
//! a virtual annealer, a classical Gibbs backend, and an HTTP client for a
//! remote sampler.

mod gibbs_backend;
pub mod remote;
mod timing;
mod virtual_qa;

pub use gibbs_backend::GibbsBackend;
pub use remote::{LoopbackServer, RemoteSampler};
pub use timing::{timing_model, TimingModel, TimingReport};
pub use virtual_qa::{VirtualAnnealer, VirtualAnnealerConfig};

use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::time::SystemTime;

use crate::error::{Error, Result};
use crate::gibbs::SampleBatch;
use crate::ising::IsingProgram;

/// One programming of a backend. The program is frozen, and so is the
/// effective inverse temperature drawn when it was programmed.
#[derive(Debug, Clone)]
pub struct ProgramHandle {
    id: String,
    program: Arc<IsingProgram>,
    effective_beta: f64,
    created: SystemTime,
    reads_served: Arc<AtomicU64>,
    closed: Arc<AtomicBool>,
}

impl ProgramHandle {
    pub(crate) fn new(id: String, program: IsingProgram, effective_beta: f64) -> Self {
        ProgramHandle {
            id,
            program: Arc::new(program),
            effective_beta,
            created: SystemTime::now(),
            reads_served: Arc::new(AtomicU64::new(0)),
            closed: Arc::new(AtomicBool::new(false)),
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn program(&self) -> &IsingProgram {
        &self.program
    }

    /// The inverse temperature this programming samples at. Real hardware
    /// hides it; the virtual backend reports it for testing.
    pub fn effective_beta(&self) -> f64 {
        self.effective_beta
    }

    pub fn created(&self) -> SystemTime {
        self.created
    }

    pub fn reads_served(&self) -> u64 {
        self.reads_served.load(Ordering::Relaxed)
    }

    pub(crate) fn record_reads(&self, n: usize) {
        self.reads_served.fetch_add(n as u64, Ordering::Relaxed);
    }

    pub fn close(&self) {
        self.closed.store(true, Ordering::Relaxed);
    }

    pub fn is_closed(&self) -> bool {
        self.closed.load(Ordering::Relaxed)
    }

    pub(crate) fn check_open(&self) -> Result<()> {
        if self.is_closed() {
            return Err(Error::HandleClosed(self.id.clone()));
        }
        Ok(())
    }
}

/// Anything that can be programmed with an Ising problem and read from.
pub trait Sampler: Send + Sync {
    fn program(&self, program: &IsingProgram) -> Result<ProgramHandle>;

    /// `num_reads` states in the binary basis, tagged with their source.
    /// Deterministic for a given handle and seed.
    fn read(&self, handle: &ProgramHandle, num_reads: usize, seed: u64) -> Result<SampleBatch>;

    fn name(&self) -> &'static str;
}

pub(crate) fn check_reads(num_reads: usize) -> Result<()> {
    if num_reads == 0 {
        return Err(Error::InvalidParameter("num_reads must be at least 1".into()));
    }
    Ok(())
}
