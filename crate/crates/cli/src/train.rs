//! Teacher-student or file-driven training with periodic log-likelihood
//! evaluation on a fixed validation batch.

use std::path::Path;

use quadrbm::rng::derive_seed;
use quadrbm::trainer::{train_step, TrainerState, TrainingMethod, TRAINING_LOG_HEADER};
use quadrbm::zestimate::{ais_ln_z, exact_ln_z, exact_sample, rbm_log_likelihood, AisConfig, AisDirection};
use quadrbm::{PartitionLayout, QuadState, QuadripartiteRBM, SampleBatch, SampleSource};
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::output::OutDir;
use crate::setup;

#[derive(Debug, Serialize)]
pub struct TrainSummary {
    pub method: String,
    pub updates: usize,
    pub initial_log_likelihood: f64,
    pub final_log_likelihood: f64,
    pub gain: f64,
    pub teacher_log_likelihood: Option<f64>,
}

pub fn run(cfg: &RunConfig, out: &OutDir) -> Result<TrainSummary> {
    let t = &cfg.train;
    let seed = cfg.run.seed;
    let method: TrainingMethod = t.method.parse().map_err(|e: quadrbm::Error| CliError::Config(e.to_string()))?;
    let exact = match t.log_likelihood.as_str() {
        "exact" => true,
        "ais" => false,
        other => return Err(CliError::Config(format!("log_likelihood must be exact or ais, got {other:?}"))),
    };
    let layout = PartitionLayout::new(t.sizes).map_err(|e| CliError::Config(e.to_string()))?;

    let (train, valid, teacher) = match &t.data {
        Some(path) => {
            let states = read_states(path, &layout)?;
            let n_valid = (states.len() / 5).max(1);
            if states.len() <= n_valid {
                return Err(CliError::Config(format!("{} holds too few rows", path.display())));
            }
            let (a, b) = states.split_at(states.len() - n_valid);
            (data_batch(a.to_vec())?, data_batch(b.to_vec())?, None)
        }
        None => {
            let teacher = setup::random_machine(t.sizes, t.teacher_std, derive_seed(seed, 0x7EAC))?;
            let train = exact_sample(&teacher, t.n_train, derive_seed(seed, 1))?;
            let valid = exact_sample(&teacher, t.n_valid, derive_seed(seed, 2))?;
            (train, valid, Some(teacher))
        }
    };
    if train.len() < t.batch_size {
        return Err(CliError::Config(format!(
            "batch_size {} exceeds the {} training rows",
            t.batch_size,
            train.len()
        )));
    }

    let ll = |rbm: &QuadripartiteRBM, salt: u64| -> Result<f64> {
        let ln_z = if exact {
            exact_ln_z(rbm, 1.0)?
        } else {
            let ais = AisConfig::new(t.ais_temps, t.ais_chains, derive_seed(seed, 0xA15 + salt));
            ais_ln_z(rbm, &ais, AisDirection::Forward)?
        };
        Ok(rbm_log_likelihood(rbm, &valid, &ln_z)?)
    };

    let mut student = setup::random_machine(t.sizes, t.init_std, derive_seed(seed, 3))?;
    let mut state = TrainerState::new(method, t.k, t.learning_rate, t.n_chains)?;
    state.weight_decay = t.weight_decay;
    let initial = ll(&student, 0)?;
    let mut last = initial;
    let mut log = format!("{TRAINING_LOG_HEADER},log_likelihood\n");
    log.push_str(&format!("0,,,,,{initial}\n"));
    let n_batches = train.len() / t.batch_size;
    for u in 0..t.updates {
        let b = u % n_batches;
        let rows = train.states()[b * t.batch_size..(b + 1) * t.batch_size].to_vec();
        let report = train_step(&mut student, &data_batch(rows)?, &mut state, derive_seed(seed, 0x1000 + u as u64))?;
        log.push_str(&report.csv_row());
        log.push(',');
        if (u + 1) % t.eval_every == 0 || u + 1 == t.updates {
            last = ll(&student, u as u64 + 1)?;
            log.push_str(&last.to_string());
            log::info!("update {}: log-likelihood {last:.4}", u + 1);
        }
        log.push('\n');
    }

    out.write("training.csv", log)?;
    out.write("model.json", student.to_json()?)?;
    out.write("trainer_state.json", state.to_json()?)?;
    let teacher_ll = match &teacher {
        Some(m) => Some(ll(m, u64::MAX)?),
        None => None,
    };
    if let Some(m) = &teacher {
        out.write("teacher.json", m.to_json()?)?;
    }
    let summary = TrainSummary {
        method: t.method.clone(),
        updates: t.updates,
        initial_log_likelihood: initial,
        final_log_likelihood: last,
        gain: last - initial,
        teacher_log_likelihood: teacher_ll,
    };
    out.write_json("train_summary.json", &summary)?;
    Ok(summary)
}

fn data_batch(states: Vec<QuadState>) -> Result<SampleBatch> {
    Ok(SampleBatch::new(states, SampleSource::Data, 0, 0)?)
}

/// Rows of comma-separated 0/1 values in flat `v, h, s, t` order. A first
/// line that does not parse as bits is taken as a header.
fn read_states(path: &Path, layout: &PartitionLayout) -> Result<Vec<QuadState>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut states = Vec::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let bits: std::result::Result<Vec<u8>, _> = line.split(',').map(|f| f.trim().parse::<u8>()).collect();
        match bits {
            Ok(bits) => states.push(QuadState::from_flat(layout, &bits)?),
            Err(_) if i == 0 => continue,
            Err(e) => return Err(CliError::Config(format!("{} line {}: {e}", path.display(), i + 1))),
        }
    }
    Ok(states)
}
