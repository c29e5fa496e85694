//! Effective inverse-temperature estimation for a sampler backend.
//!
//! The backend is programmed with `H / beta_t` and its samples are compared
//! with classical samples of the machine at `beta = 1`, both scored with the
//! original energy. Two update rules are provided: a gradient step on the
//! mean-energy gap, and the multiplicative map
//! `beta_{t+1} = beta_t (<H>_qa / <H>_rbm)^delta` with fixed or adaptive
//! `delta`. Iteration stops once the gap falls below the reduced standard
//! error of the two sample sets.

use serde::{Deserialize, Serialize};

use crate::annealer::{Sampler, VirtualAnnealer, VirtualAnnealerConfig};
use crate::error::{Error, Result};
use crate::gibbs::{sample, SampleBatch, SampleRequest};
use crate::ising::{apply_scale, condition_to_flux, rbm_to_ising};
use crate::layout::Partition;
use crate::rbm::QuadripartiteRBM;
use crate::rng::derive_seed;

/// Sample moments of the original energy on the backend's and on the
/// classical sampler's states.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentPair {
    pub mean_h_qa: f64,
    pub var_h_qa: f64,
    pub n_qa: usize,
    pub mean_h_rbm: f64,
    pub var_h_rbm: f64,
    pub n_rbm: usize,
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

impl MomentPair {
    pub fn from_energies(qa: &[f64], rbm: &[f64]) -> Result<Self> {
        if qa.len() < 2 || rbm.len() < 2 {
            return Err(Error::InvalidParameter(format!(
                "need at least 2 samples on each side, got {} and {}",
                qa.len(),
                rbm.len()
            )));
        }
        let (mean_h_qa, var_h_qa) = mean_var(qa);
        let (mean_h_rbm, var_h_rbm) = mean_var(rbm);
        Ok(MomentPair {
            mean_h_qa,
            var_h_qa,
            n_qa: qa.len(),
            mean_h_rbm,
            var_h_rbm,
            n_rbm: rbm.len(),
        })
    }

    /// `(2 / sqrt(N)) sigma_qa sigma_rbm / (sigma_qa + sigma_rbm)` with
    /// `N = min(n_qa, n_rbm)`.
    pub fn threshold(&self) -> f64 {
        let n = self.n_qa.min(self.n_rbm) as f64;
        let (a, b) = (self.var_h_qa.sqrt(), self.var_h_rbm.sqrt());
        if a + b == 0.0 {
            return 0.0;
        }
        2.0 / n.sqrt() * a * b / (a + b)
    }

    pub fn gap(&self) -> f64 {
        self.mean_h_qa - self.mean_h_rbm
    }
}

/// True iff the mean-energy gap is below the reduced standard error.
/// Two identical sample sets (zero gap) always count as converged.
pub fn converged(m: &MomentPair) -> bool {
    let gap = m.gap().abs();
    gap == 0.0 || gap < m.threshold()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibrationMethod {
    KlGradient,
    RatioFixed,
    RatioAdaptive,
}

impl CalibrationMethod {
    pub fn name(self) -> &'static str {
        match self {
            CalibrationMethod::KlGradient => "kl",
            CalibrationMethod::RatioFixed => "ratio",
            CalibrationMethod::RatioAdaptive => "ratio-adaptive",
        }
    }
}

impl std::str::FromStr for CalibrationMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kl" | "kl_gradient" => Ok(CalibrationMethod::KlGradient),
            "ratio" | "ratio_fixed" => Ok(CalibrationMethod::RatioFixed),
            "ratio-adaptive" | "ratio_adaptive" => Ok(CalibrationMethod::RatioAdaptive),
            other => Err(Error::InvalidParameter(format!("unknown calibration method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryRecord {
    pub iteration: usize,
    pub beta: f64,
    pub mean_h_qa: f64,
    pub mean_h_rbm: f64,
    pub var_h_qa: f64,
    pub var_h_rbm: f64,
    pub delta: f64,
    pub lambda: f64,
    pub converged: bool,
    /// The step after this record would have gone non-positive and was
    /// clamped to half of `beta`.
    pub clamped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationState {
    pub beta_t: f64,
    pub delta: f64,
    pub method: CalibrationMethod,
    pub converged: bool,
    pub history: Vec<HistoryRecord>,
}

impl CalibrationState {
    pub fn new(method: CalibrationMethod, beta_0: f64, delta: f64) -> Result<Self> {
        if !(beta_0 > 0.0 && beta_0.is_finite()) {
            return Err(Error::InvalidParameter(format!("beta_0 must be positive, got {beta_0}")));
        }
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::InvalidParameter(format!("delta must be positive, got {delta}")));
        }
        Ok(CalibrationState {
            beta_t: beta_0,
            delta,
            method,
            converged: false,
            history: Vec::new(),
        })
    }

    pub fn iterations(&self) -> usize {
        self.history.len()
    }

    fn record(&mut self, m: &MomentPair, lambda: f64) {
        let converged = converged(m);
        self.history.push(HistoryRecord {
            iteration: self.history.len() + 1,
            beta: self.beta_t,
            mean_h_qa: m.mean_h_qa,
            mean_h_rbm: m.mean_h_rbm,
            var_h_qa: m.var_h_qa,
            var_h_rbm: m.var_h_rbm,
            delta: self.delta,
            lambda,
            converged,
            clamped: false,
        });
        self.converged = converged;
    }

    /// CSV with one row per iteration.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "iteration,beta,mean_h_qa,mean_h_rbm,var_h_qa,var_h_rbm,delta,lambda,converged,clamped\n",
        );
        for r in &self.history {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                r.iteration,
                r.beta,
                r.mean_h_qa,
                r.mean_h_rbm,
                r.var_h_qa,
                r.var_h_rbm,
                r.delta,
                r.lambda,
                r.converged,
                r.clamped
            ));
        }
        out
    }
}

/// Gradient step `beta - eta (<H>_qa - <H>_rbm)`, recorded in the history.
/// A non-positive result is replaced by `beta / 2` and flagged.
pub fn step_kl(state: &mut CalibrationState, m: &MomentPair, eta: f64) -> Result<()> {
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::InvalidParameter(format!("eta must be positive, got {eta}")));
    }
    let lambda = (1.0 - eta * m.var_h_qa / state.beta_t).abs();
    state.record(m, lambda);
    let next = state.beta_t - eta * m.gap();
    if next > 0.0 && next.is_finite() {
        state.beta_t = next;
    } else {
        state.beta_t *= 0.5;
        state.history.last_mut().expect("just recorded").clamped = true;
    }
    Ok(())
}

/// Smallest `|<H>_rbm|` accepted by [`step_ratio`].
pub const RATIO_EPSILON: f64 = 1e-9;

/// Multiplicative step `beta (<H>_qa / <H>_rbm)^delta` with `state.delta`.
pub fn step_ratio(state: &mut CalibrationState, m: &MomentPair) -> Result<()> {
    check_ratio(m)?;
    let lambda = stability_lambda(state.delta, m).unwrap_or(f64::NAN);
    state.record(m, lambda);
    state.beta_t *= (m.mean_h_qa / m.mean_h_rbm).powf(state.delta);
    Ok(())
}

fn check_ratio(m: &MomentPair) -> Result<()> {
    if m.mean_h_rbm.abs() <= RATIO_EPSILON {
        return Err(Error::Calibration(format!(
            "mean classical energy {} is too close to zero for the ratio update; use the gradient method",
            m.mean_h_rbm
        )));
    }
    if m.mean_h_qa.signum() != m.mean_h_rbm.signum() || m.mean_h_qa == 0.0 {
        return Err(Error::Calibration(format!(
            "mean energies {} and {} differ in sign; use the gradient method",
            m.mean_h_qa, m.mean_h_rbm
        )));
    }
    Ok(())
}

pub const DELTA_MIN: f64 = 1e-3;
pub const DELTA_MAX: f64 = 10.0;

/// `delta = -<H>_qa / var_qa`, the root of the stability factor, clamped to
/// `[DELTA_MIN, delta_max]`.
pub fn adaptive_delta(m: &MomentPair) -> Result<f64> {
    adaptive_delta_bounded(m, DELTA_MAX)
}

pub fn adaptive_delta_bounded(m: &MomentPair, delta_max: f64) -> Result<f64> {
    if !(m.var_h_qa > 0.0) || m.mean_h_qa == 0.0 {
        return Err(Error::Calibration(format!(
            "degenerate moments (mean {}, variance {})",
            m.mean_h_qa, m.var_h_qa
        )));
    }
    let delta = -m.mean_h_qa / m.var_h_qa;
    if delta <= 0.0 {
        log::warn!("mean annealer energy {} is positive; delta clamped to {DELTA_MIN}", m.mean_h_qa);
        return Ok(DELTA_MIN);
    }
    Ok(delta.clamp(DELTA_MIN, delta_max))
}

/// Stability factor of the multiplicative map:
/// `|1 + var_qa / <H>_rbm|` for `delta = 1`, `|1 + delta var_qa / <H>_qa|`
/// otherwise.
pub fn stability_lambda(delta: f64, m: &MomentPair) -> Result<f64> {
    if delta == 1.0 {
        if m.mean_h_rbm == 0.0 {
            return Err(Error::Calibration("zero mean classical energy".into()));
        }
        Ok((1.0 + m.var_h_qa / m.mean_h_rbm).abs())
    } else {
        if m.mean_h_qa == 0.0 {
            return Err(Error::Calibration("zero mean annealer energy".into()));
        }
        Ok((1.0 + delta * m.var_h_qa / m.mean_h_qa).abs())
    }
}

/// How the classical reference samples are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reference {
    /// Independent block Gibbs chains on the machine at `beta = 1`.
    Gibbs { n_steps: usize },
    /// A unit-temperature spin sampler fed the same read seed as the backend
    /// (common random numbers). When the backend samples at exactly
    /// `beta_t`, both sample sets coincide.
    SharedStream { equilibration_steps: usize },
}

/// A partition pinned by flux on the backend and clamped classically.
#[derive(Debug, Clone, PartialEq)]
pub struct Condition {
    pub partition: Partition,
    pub bits: Vec<u8>,
    pub flux_strength: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasureConfig {
    pub n_samples: usize,
    pub reference: Reference,
}

impl Default for MeasureConfig {
    fn default() -> Self {
        MeasureConfig {
            n_samples: 2048,
            reference: Reference::Gibbs { n_steps: 1000 },
        }
    }
}

/// Programs the backend with the machine scaled by `1 / beta_t`, reads
/// `n_samples` states, draws as many classical reference states, and scores
/// both with the original energy.
pub fn measure_moments(
    rbm: &QuadripartiteRBM,
    backend: &dyn Sampler,
    beta_t: f64,
    cfg: &MeasureConfig,
    seed: u64,
    condition: Option<&Condition>,
) -> Result<MomentPair> {
    if cfg.n_samples < 2 {
        return Err(Error::InvalidParameter(format!(
            "n_samples must be at least 2, got {}",
            cfg.n_samples
        )));
    }
    let base = rbm_to_ising(rbm);
    let flux = match condition {
        Some(c) => Some(condition_to_flux(rbm.layout(), c.partition, &c.bits, c.flux_strength)?),
        None => None,
    };
    let mut program = apply_scale(&base, beta_t)?;
    if let Some(f) = &flux {
        program = program.with_flux(f.clone())?;
    }
    let read_seed = derive_seed(seed, 1);
    let handle = backend.program(&program)?;
    let qa = backend.read(&handle, cfg.n_samples, read_seed)?;
    let reference: SampleBatch = match cfg.reference {
        Reference::Gibbs { n_steps } => {
            let mut req = SampleRequest::new(cfg.n_samples, n_steps, derive_seed(seed, 2));
            if let Some(c) = condition {
                req = req.clamp(c.partition, c.bits.clone());
            }
            sample(rbm, &req)?
        }
        Reference::SharedStream { equilibration_steps } => {
            let unit = VirtualAnnealer::new(VirtualAnnealerConfig {
                beta_qa: 1.0,
                equilibration_steps,
                ..Default::default()
            })?;
            let mut prog = base.clone();
            if let Some(f) = flux {
                prog = prog.with_flux(f.iter().map(|x| x * beta_t).collect())?;
            }
            let h = unit.program(&prog)?;
            unit.read(&h, cfg.n_samples, read_seed)?
        }
    };
    MomentPair::from_energies(&qa.energies(rbm)?, &reference.energies(rbm)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationConfig {
    pub method: CalibrationMethod,
    pub beta_0: f64,
    pub max_iters: usize,
    /// Learning rate of the gradient method.
    pub eta: f64,
    /// Exponent of the fixed ratio method and starting value of the
    /// adaptive one.
    pub delta: f64,
    pub delta_max: f64,
    pub measure: MeasureConfig,
    pub seed: u64,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        CalibrationConfig {
            method: CalibrationMethod::RatioAdaptive,
            beta_0: 1.0,
            max_iters: 200,
            eta: 0.01,
            delta: 1.0,
            delta_max: DELTA_MAX,
            measure: MeasureConfig::default(),
            seed: 0,
        }
    }
}

/// Measure, test, step, until the stopping rule holds or `max_iters`
/// measurements have been made. An unconverged state is returned with its
/// full history rather than as an error.
pub fn calibrate(
    rbm: &QuadripartiteRBM,
    backend: &dyn Sampler,
    cfg: &CalibrationConfig,
    condition: Option<&Condition>,
) -> Result<CalibrationState> {
    let mut state = CalibrationState::new(cfg.method, cfg.beta_0, cfg.delta)?;
    for it in 0..cfg.max_iters {
        let m = measure_moments(rbm, backend, state.beta_t, &cfg.measure, derive_seed(cfg.seed, it as u64), condition)?;
        if converged(&m) {
            let lambda = match cfg.method {
                CalibrationMethod::KlGradient => (1.0 - cfg.eta * m.var_h_qa / state.beta_t).abs(),
                _ => stability_lambda(state.delta, &m).unwrap_or(f64::NAN),
            };
            state.record(&m, lambda);
            return Ok(state);
        }
        match cfg.method {
            CalibrationMethod::KlGradient => step_kl(&mut state, &m, cfg.eta)?,
            CalibrationMethod::RatioFixed => step_ratio(&mut state, &m)?,
            CalibrationMethod::RatioAdaptive => {
                state.delta = adaptive_delta_bounded(&m, cfg.delta_max)?;
                step_ratio(&mut state, &m)?;
            }
        }
    }
    Ok(state)
}

/// Runs [`calibrate`] once per condition with independent seeds.
pub fn calibrate_per_condition(
    rbm: &QuadripartiteRBM,
    backend: &dyn Sampler,
    cfg: &CalibrationConfig,
    conditions: &[Condition],
) -> Result<Vec<CalibrationState>> {
    conditions
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let cfg = CalibrationConfig {
                seed: derive_seed(cfg.seed, 0xC0DE + i as u64),
                ..cfg.clone()
            };
            calibrate(rbm, backend, &cfg, Some(c))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn moments(mean_qa: f64, var_qa: f64, mean_rbm: f64, var_rbm: f64, n: usize) -> MomentPair {
        MomentPair {
            mean_h_qa: mean_qa,
            var_h_qa: var_qa,
            n_qa: n,
            mean_h_rbm: mean_rbm,
            var_h_rbm: var_rbm,
            n_rbm: n,
        }
    }

    #[test]
    fn kl_fixed_point_and_clamp() {
        let mut s = CalibrationState::new(CalibrationMethod::KlGradient, 3.0, 1.0).unwrap();
        step_kl(&mut s, &moments(-5.0, 1.0, -5.0, 1.0, 10), 0.5).unwrap();
        assert_eq!(s.beta_t, 3.0);
        step_kl(&mut s, &moments(10.0, 1.0, -5.0, 1.0, 10), 0.5).unwrap();
        assert_eq!(s.beta_t, 1.5);
        assert!(s.history[1].clamped);
        assert_eq!(s.history.len(), 2);
        assert!(step_kl(&mut s, &moments(1.0, 1.0, 1.0, 1.0, 10), 0.0).is_err());
    }

    #[test]
    fn ratio_fixed_point_and_rejections() {
        let mut s = CalibrationState::new(CalibrationMethod::RatioFixed, 2.0, 1.0).unwrap();
        step_ratio(&mut s, &moments(-4.0, 1.0, -4.0, 1.0, 10)).unwrap();
        assert_eq!(s.beta_t, 2.0);
        step_ratio(&mut s, &moments(-8.0, 1.0, -4.0, 1.0, 10)).unwrap();
        assert_eq!(s.beta_t, 4.0);
        assert!(matches!(
            step_ratio(&mut s, &moments(-1.0, 1.0, 0.0, 1.0, 10)),
            Err(Error::Calibration(_))
        ));
        assert!(matches!(
            step_ratio(&mut s, &moments(1.0, 1.0, -1.0, 1.0, 10)),
            Err(Error::Calibration(_))
        ));
    }

    #[test]
    fn adaptive_delta_examples() {
        assert_eq!(adaptive_delta(&moments(-100.0, 50.0, -100.0, 50.0, 10)).unwrap(), 2.0);
        assert_eq!(adaptive_delta(&moments(3.0, 1.0, 3.0, 1.0, 10)).unwrap(), DELTA_MIN);
        assert_eq!(adaptive_delta(&moments(-1000.0, 1.0, -1.0, 1.0, 10)).unwrap(), DELTA_MAX);
        assert!(adaptive_delta(&moments(-1.0, 0.0, -1.0, 1.0, 10)).is_err());
        let m = moments(-37.0, 11.0, -36.0, 12.0, 10);
        let d = adaptive_delta(&m).unwrap();
        assert!(stability_lambda(d, &m).unwrap() < 0.05);
    }

    #[test]
    fn lambda_branches() {
        let m = moments(-10.0, 4.0, -8.0, 4.0, 10);
        assert!((stability_lambda(1.0, &m).unwrap() - 0.5).abs() < 1e-15);
        assert!((stability_lambda(2.0, &m).unwrap() - 0.2).abs() < 1e-15);
        assert!((stability_lambda(1e-12, &m).unwrap() - 1.0).abs() < 1e-9);
        assert!(stability_lambda(2.5, &m).unwrap() < 1e-15);
    }

    #[test]
    fn stopping_rule() {
        assert!(converged(&moments(-3.0, 2.0, -3.0, 2.0, 100)));
        assert!(!converged(&moments(-3.0, 1.0, 7.0, 1.0, 100)));
        let a = moments(0.0, 4.0, 0.1, 9.0, 100).threshold();
        let b = moments(0.0, 4.0, 0.1, 9.0, 400).threshold();
        assert_eq!(a, 2.0 * b);
        assert!((a - 0.2 * 6.0 / 5.0).abs() < 1e-15);
    }

    #[test]
    fn moments_need_two_samples() {
        assert!(MomentPair::from_energies(&[1.0], &[1.0, 2.0]).is_err());
        let m = MomentPair::from_energies(&[1.0, 3.0], &[2.0, 2.0, 2.0]).unwrap();
        assert_eq!((m.mean_h_qa, m.var_h_qa, m.var_h_rbm), (2.0, 2.0, 0.0));
    }

    #[test]
    fn method_names_parse() {
        for m in [
            CalibrationMethod::KlGradient,
            CalibrationMethod::RatioFixed,
            CalibrationMethod::RatioAdaptive,
        ] {
            assert_eq!(m.name().parse::<CalibrationMethod>().unwrap(), m);
        }
    }
}
