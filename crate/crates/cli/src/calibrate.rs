//! Runs each calibration method over seeded trials against the configured
//! backend and summarizes iteration counts.

use quadrbm::calibration::{calibrate, CalibrationConfig, CalibrationMethod, MeasureConfig, Reference};
use quadrbm::rng::derive_seed;
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::output::{csv, OutDir};
use crate::setup;

#[derive(Debug, Clone, Serialize)]
pub struct Trial {
    pub method: String,
    pub trial: usize,
    pub iterations: usize,
    pub converged: bool,
    pub beta_final: f64,
    /// `(beta_final - beta_0) / iterations`; larger is faster.
    pub rate: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct MethodSummary {
    pub method: String,
    pub trials: usize,
    pub converged: usize,
    pub mean_iterations: f64,
    pub std_iterations: f64,
    pub mean_rate: f64,
    pub mean_beta_final: f64,
}

#[derive(Debug, Serialize)]
pub struct CalibrateReport {
    pub methods: Vec<MethodSummary>,
    pub trials: Vec<Trial>,
}

pub fn run(cfg: &RunConfig, out: &OutDir) -> Result<CalibrateReport> {
    let c = &cfg.calibrate;
    let methods: Vec<CalibrationMethod> = c
        .methods
        .iter()
        .map(|m| m.parse().map_err(|e: quadrbm::Error| CliError::Config(e.to_string())))
        .collect::<Result<_>>()?;
    let reference = match c.reference.as_str() {
        "shared" => Reference::SharedStream {
            equilibration_steps: c.reference_steps,
        },
        "gibbs" => Reference::Gibbs {
            n_steps: c.reference_steps,
        },
        other => return Err(CliError::Config(format!("reference must be shared or gibbs, got {other:?}"))),
    };
    let backend = setup::backend(cfg)?;
    let mut trials = Vec::new();
    for method in methods {
        for trial in 0..c.n_trials {
            let rbm = setup::machine(cfg, derive_seed(cfg.run.seed, trial as u64))?;
            let condition = setup::condition(cfg, rbm.layout())?;
            let run_cfg = CalibrationConfig {
                method,
                beta_0: c.beta_0,
                max_iters: c.max_iters,
                eta: c.eta,
                delta: c.delta,
                delta_max: c.delta_max,
                measure: MeasureConfig {
                    n_samples: c.n_samples,
                    reference,
                },
                seed: derive_seed(cfg.run.seed, 0xCA1 + trial as u64),
            };
            let record = match calibrate(&rbm, backend.as_ref(), &run_cfg, condition.as_ref()) {
                Ok(st) => {
                    out.write(&format!("calibration_{}_{trial}.csv", method.name()), st.to_csv())?;
                    let n = st.iterations();
                    Trial {
                        method: method.name().into(),
                        trial,
                        iterations: n,
                        converged: st.converged,
                        beta_final: st.beta_t,
                        rate: (st.beta_t - c.beta_0) / n as f64,
                        error: None,
                    }
                }
                Err(e) if e.is_backend() => return Err(e.into()),
                Err(e) => {
                    log::warn!("{} trial {trial}: {e}", method.name());
                    Trial {
                        method: method.name().into(),
                        trial,
                        iterations: c.max_iters,
                        converged: false,
                        beta_final: f64::NAN,
                        rate: f64::NAN,
                        error: Some(e.to_string()),
                    }
                }
            };
            if !record.converged {
                log::warn!("{} trial {trial} did not converge within {} iterations", method.name(), c.max_iters);
            }
            trials.push(record);
        }
    }
    let methods = summarize(&trials);
    out.write(
        "calibration_summary.csv",
        csv(
            &["method", "trials", "converged", "mean_iterations", "std_iterations", "mean_rate", "mean_beta_final"],
            methods.iter().map(|m| {
                vec![
                    m.method.clone(),
                    m.trials.to_string(),
                    m.converged.to_string(),
                    m.mean_iterations.to_string(),
                    m.std_iterations.to_string(),
                    m.mean_rate.to_string(),
                    m.mean_beta_final.to_string(),
                ]
            }),
        ),
    )?;
    let report = CalibrateReport { methods, trials };
    out.write_json("calibration_summary.json", &report)?;
    Ok(report)
}

fn summarize(trials: &[Trial]) -> Vec<MethodSummary> {
    let mut names: Vec<&str> = trials.iter().map(|t| t.method.as_str()).collect();
    names.dedup();
    names
        .into_iter()
        .map(|name| {
            let ts: Vec<&Trial> = trials.iter().filter(|t| t.method == name).collect();
            let n = ts.len() as f64;
            let iters: Vec<f64> = ts.iter().map(|t| t.iterations as f64).collect();
            let mean = iters.iter().sum::<f64>() / n;
            let var = if ts.len() > 1 {
                iters.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
            } else {
                0.0
            };
            MethodSummary {
                method: name.into(),
                trials: ts.len(),
                converged: ts.iter().filter(|t| t.converged).count(),
                mean_iterations: mean,
                std_iterations: var.sqrt(),
                mean_rate: ts.iter().map(|t| t.rate).sum::<f64>() / n,
                mean_beta_final: ts.iter().map(|t| t.beta_final).sum::<f64>() / n,
            }
        })
        .collect()
}
