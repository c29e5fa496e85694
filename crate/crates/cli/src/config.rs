//! Run configuration: a TOML file of `key = value` lines under sections.
//! Every key has a default, unknown keys are rejected, and the effective
//! configuration is echoed into the output directory.

use std::path::{Path, PathBuf};

use quadrbm::annealer::VirtualAnnealerConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Gibbs,
    Virtual,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub seed: u64,
    pub backend: BackendKind,
    /// Base URL of a remote sampler, used with `backend = "remote"`.
    pub endpoint: String,
    pub out: PathBuf,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            seed: 0,
            backend: BackendKind::Virtual,
            endpoint: "http://127.0.0.1:8750".into(),
            out: PathBuf::from("out"),
        }
    }
}

/// The random machine used by `verify dos`, `calibrate` and `sample`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub sizes: [usize; 4],
    /// Standard deviation of the Gaussian parameter draw.
    pub init_std: f64,
    /// Load this machine instead of drawing one.
    pub path: Option<PathBuf>,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            sizes: [6, 6, 6, 6],
            init_std: 0.5,
            path: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingSection {
    pub n_samples: usize,
    pub n_steps: usize,
    pub n_bins: usize,
    /// Inverse temperature the annealer program is scaled by; normally the
    /// output of `calibrate`.
    pub beta: f64,
    /// Partition pinned by flux on the annealer and clamped classically.
    pub condition_partition: Option<String>,
    /// Condition bits as a 0/1 string.
    pub condition_bits: Option<String>,
    /// Incident energy in MeV, encoded to 512 bits. Overrides `condition_bits`.
    pub condition_energy: Option<f64>,
    pub flux_strength: f64,
    /// Number of toy showers whose sparsity histogram is also written.
    pub toy_showers: usize,
}

impl Default for SamplingSection {
    fn default() -> Self {
        SamplingSection {
            n_samples: 10240,
            n_steps: 3000,
            n_bins: 40,
            beta: 12.0,
            condition_partition: None,
            condition_bits: None,
            condition_energy: None,
            flux_strength: 4.0,
            toy_showers: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub method: String,
    pub k: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub updates: usize,
    pub batch_size: usize,
    pub n_chains: usize,
    pub sizes: [usize; 4],
    pub init_std: f64,
    /// Parameter spread of the teacher machine when no data file is given.
    pub teacher_std: f64,
    pub n_train: usize,
    pub n_valid: usize,
    /// CSV of flat 0/1 rows to train on instead of teacher samples.
    pub data: Option<PathBuf>,
    pub eval_every: usize,
    /// `exact` enumerates the partition function, `ais` estimates it.
    pub log_likelihood: String,
    pub ais_temps: usize,
    pub ais_chains: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            method: "pcd".into(),
            k: 10,
            learning_rate: 0.05,
            weight_decay: 0.0,
            updates: 2000,
            batch_size: 100,
            n_chains: 200,
            sizes: [3, 3, 3, 3],
            init_std: 0.01,
            teacher_std: 2.0,
            n_train: 2000,
            n_valid: 2000,
            data: None,
            eval_every: 100,
            log_likelihood: "exact".into(),
            ais_temps: 30,
            ais_chains: 512,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrateSection {
    pub methods: Vec<String>,
    pub n_trials: usize,
    pub beta_0: f64,
    pub max_iters: usize,
    pub eta: f64,
    pub delta: f64,
    pub delta_max: f64,
    pub n_samples: usize,
    /// `shared` (common random numbers) or `gibbs`.
    pub reference: String,
    pub reference_steps: usize,
}

impl Default for CalibrateSection {
    fn default() -> Self {
        CalibrateSection {
            methods: vec!["kl".into(), "ratio".into(), "ratio-adaptive".into()],
            n_trials: 20,
            beta_0: 1.0,
            max_iters: 200,
            eta: 0.3,
            delta: 1.0,
            delta_max: 3.0,
            n_samples: 2048,
            reference: "shared".into(),
            reference_steps: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessSection {
    pub input: Option<PathBuf>,
    /// Toy showers generated when no input is given.
    pub toy_records: usize,
    pub delta: f64,
}

impl Default for PreprocessSection {
    fn default() -> Self {
        PreprocessSection {
            input: None,
            toy_records: 10_000,
            delta: quadrbm_calo::DEFAULT_DELTA,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServeSection {
    pub addr: String,
}

impl Default for ServeSection {
    fn default() -> Self {
        ServeSection {
            addr: "127.0.0.1:8750".into(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub run: RunSection,
    pub model: ModelSection,
    pub sampling: SamplingSection,
    pub annealer: VirtualAnnealerConfig,
    pub train: TrainSection,
    pub calibrate: CalibrateSection,
    pub preprocess: PreprocessSection,
    pub serve: ServeSection,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.run.backend == BackendKind::Remote && self.run.endpoint.is_empty() {
            return Err(CliError::Config("backend remote needs an endpoint".into()));
        }
        if self.sampling.n_samples == 0 || self.sampling.n_steps == 0 || self.sampling.n_bins == 0 {
            return Err(CliError::Config("sampling counts must be positive".into()));
        }
        if self.calibrate.n_trials == 0 || self.calibrate.max_iters == 0 {
            return Err(CliError::Config("calibrate n_trials and max_iters must be positive".into()));
        }
        if self.train.batch_size == 0 || self.train.eval_every == 0 {
            return Err(CliError::Config("train batch_size and eval_every must be positive".into()));
        }
        self.annealer.validate().map_err(|e| CliError::Config(e.to_string()))
    }
}
