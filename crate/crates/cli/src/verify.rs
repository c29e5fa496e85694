//! Oracle suites. Each writes `verify_<suite>.json` with `{suite, pass,
//! metrics}` and fails the command when the check does not hold.

use quadrbm::ising::{binary_to_spin, ising_to_rbm, rbm_to_ising};
use quadrbm::rbm::sigmoid;
use quadrbm::rng::derive_seed;
use quadrbm::trainer::{exact_gradient, exact_log_likelihood, gumbel_relax};
use quadrbm::zestimate::{
    comparison_edges, density_of_states, exact_moments, exact_sample, histogram, tv_distance, DosSource,
};
use quadrbm::{sample, QuadState, SampleRequest};
use quadrbm_calo::{gaussian_logit_draws, LogitMoments};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::output::OutDir;
use crate::setup;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Suite {
    Dos,
    Roundtrip,
    Gradients,
    Identity,
    Gumbel,
    Logitgauss,
}

impl Suite {
    fn name(self) -> &'static str {
        match self {
            Suite::Dos => "dos",
            Suite::Roundtrip => "roundtrip",
            Suite::Gradients => "gradients",
            Suite::Identity => "identity",
            Suite::Gumbel => "gumbel",
            Suite::Logitgauss => "logitgauss",
        }
    }
}

#[derive(Debug, Serialize)]
pub struct Report {
    pub suite: String,
    pub pass: bool,
    pub metrics: Value,
}

pub fn run(cfg: &RunConfig, suite: Suite, out: &OutDir) -> Result<Report> {
    let seed = cfg.run.seed;
    let (pass, metrics) = match suite {
        Suite::Dos => dos(cfg, seed)?,
        Suite::Roundtrip => roundtrip(seed)?,
        Suite::Gradients => gradients(seed)?,
        Suite::Identity => identity(seed)?,
        Suite::Gumbel => gumbel(seed)?,
        Suite::Logitgauss => logitgauss(seed)?,
    };
    let report = Report {
        suite: suite.name().into(),
        pass,
        metrics,
    };
    out.write_json(&format!("verify_{}.json", suite.name()), &report)?;
    Ok(report)
}

pub fn check(report: &Report) -> Result<()> {
    if report.pass {
        Ok(())
    } else {
        Err(CliError::Verification(format!("{} suite: {}", report.suite, report.metrics)))
    }
}

/// Exact density of states against Gibbs histograms at the configured step
/// count and at 200 steps.
fn dos(cfg: &RunConfig, seed: u64) -> Result<(bool, Value)> {
    let rbm = setup::machine(cfg, seed)?;
    let s = &cfg.sampling;
    let long = sample(&rbm, &SampleRequest::new(s.n_samples, s.n_steps, derive_seed(seed, 1)))?;
    let short = sample(&rbm, &SampleRequest::new(s.n_samples, 200, derive_seed(seed, 2)))?;
    let e_long = long.energies(&rbm)?;
    let e_short = short.energies(&rbm)?;
    let edges = comparison_edges(&rbm, &e_long)?;
    let exact = density_of_states(&rbm, DosSource::Exact, &edges)?;
    let tv = tv_distance(&exact, &histogram(&e_long, &edges))?;
    let tv_200 = tv_distance(&exact, &histogram(&e_short, &edges))?;
    Ok((
        tv < 0.05,
        json!({
            "sizes": rbm.layout().sizes(),
            "n_samples": s.n_samples,
            "n_steps": s.n_steps,
            "n_bins": edges.len() - 1,
            "tv": tv,
            "tv_200_steps": tv_200,
            "threshold": 0.05,
        }),
    ))
}

/// Energy equivalence of the Ising mapping on random machines and states,
/// plus the parameter round trip.
fn roundtrip(seed: u64) -> Result<(bool, Value)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut energy_err, mut param_err): (f64, f64) = (0.0, 0.0);
    for _ in 0..200 {
        let sizes = [0; 4].map(|_| rng.random_range(1..=8));
        let rbm = setup::random_machine(sizes, 1.0, rng.random())?;
        let prog = rbm_to_ising(&rbm);
        for _ in 0..200 {
            let x = QuadState::random(rbm.layout(), &mut rng);
            let h = prog.energy(&binary_to_spin(&x))?;
            energy_err = energy_err.max((rbm.energy(&x)? - h - prog.offset).abs());
        }
        let back = ising_to_rbm(&prog)?;
        for (a, b) in back.params().flatten().iter().zip(rbm.params().flatten()) {
            param_err = param_err.max((a - b).abs());
        }
    }
    Ok((
        energy_err < 1e-10 && param_err < 1e-12,
        json!({ "machines": 200, "states_per_machine": 200, "max_energy_error": energy_err, "max_param_error": param_err }),
    ))
}

/// Analytic log-likelihood gradient against central differences.
fn gradients(seed: u64) -> Result<(bool, Value)> {
    let h = 1e-4;
    let mut worst: f64 = 0.0;
    for t in 0..3 {
        let rbm = setup::random_machine([2, 2, 2, 2], 1.0, derive_seed(seed, t))?;
        let teacher = setup::random_machine([2, 2, 2, 2], 1.0, derive_seed(seed, 100 + t))?;
        let data = exact_sample(&teacher, 50, derive_seed(seed, 200 + t))?;
        let g = exact_gradient(&rbm, &data)?;
        let flat = rbm.params().flatten();
        for (idx, &x) in flat.iter().enumerate() {
            let ll = |v: f64| -> Result<f64> {
                let mut p = rbm.params().clone();
                p.set_flat(idx, v);
                Ok(exact_log_likelihood(&rbm.with_params(p)?, &data)?)
            };
            let fd = (ll(x + h)? - ll(x - h)?) / (2.0 * h);
            worst = worst.max((fd - g.get_flat(idx)).abs());
        }
    }
    Ok((worst < 1e-5, json!({ "sizes": [2, 2, 2, 2], "step": h, "max_abs_error": worst, "threshold": 1e-5 })))
}

/// Derivative of the mean energy against its covariance expression.
fn identity(seed: u64) -> Result<(bool, Value)> {
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..20 {
        let sizes = [0; 4].map(|_| rng.random_range(1..=2));
        let rbm = setup::random_machine(sizes, 1.0, rng.random())?;
        let beta = rng.random_range(0.5..2.0);
        let rhs = exact_moments(&rbm, beta)?.mean_energy_derivative();
        let flat = rbm.params().flatten();
        for (idx, &x) in flat.iter().enumerate() {
            let at = |v: f64| -> Result<f64> {
                let mut p = rbm.params().clone();
                p.set_flat(idx, v);
                Ok(exact_moments(&rbm.with_params(p)?, beta)?.mean_energy)
            };
            let fd = (at(x + h)? - at(x - h)?) / (2.0 * h);
            worst = worst.max((fd - rhs.get_flat(idx)).abs());
        }
    }
    Ok((worst < 1e-6, json!({ "instances": 20, "max_residual": worst, "threshold": 1e-6 })))
}

/// Median of the relaxed variable at zero logit and its hard-limit
/// frequency at logit 2.
fn gumbel(seed: u64) -> Result<(bool, Value)> {
    let n = 100_000;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut z = gumbel_relax(&vec![0.0; n], 1.0, &mut rng)?.zeta;
    z.sort_by(f64::total_cmp);
    let median = z[n / 2];
    let hard = gumbel_relax(&vec![2.0; n], 1e6, &mut rng)?.zeta;
    let freq = hard.iter().filter(|&&x| x > 0.5).count() as f64 / n as f64;
    let p = sigmoid(2.0);
    let se = (p * (1.0 - p) / n as f64).sqrt();
    Ok((
        (median - 0.5).abs() < 0.01 && (freq - p).abs() < 3.0 * se,
        json!({ "median_at_zero": median, "hard_frequency": freq, "sigmoid_2": p, "std_error": se }),
    ))
}

/// Mean within three standard errors of `ln(lambda / r)` and variance
/// within 20% of `1 / lambda`.
fn logitgauss(seed: u64) -> Result<(bool, Value)> {
    let (lambda, r) = (1000.0, 1e6);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draws = gaussian_logit_draws(lambda, r, 100_000, &mut rng)?;
    let m = LogitMoments::of(&draws)?;
    let target_mean = (lambda / r).ln();
    let mean_ok = (m.mean - target_mean).abs() < 3.0 * m.std_error;
    let var_ok = (m.variance * lambda - 1.0).abs() < 0.2;
    Ok((
        mean_ok && var_ok,
        json!({
            "n": m.n,
            "mean": m.mean,
            "target_mean": target_mean,
            "std_error": m.std_error,
            "mean_within_3se": mean_ok,
            "variance": m.variance,
            "target_variance": 1.0 / lambda,
            "variance_within_20pct": var_ok,
        }),
    ))
}
