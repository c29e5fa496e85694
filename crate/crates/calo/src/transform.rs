//! The zero-preserving logit map. With `E = v / e` and
//! `u = delta + (1 - 2 delta) E`, the transformed value is
//! `x = logit(u) - logit(delta)`, so an empty voxel maps to exactly 0.

use crate::error::{CaloError, Result};
use crate::shower::ShowerRecord;

pub const DEFAULT_DELTA: f64 = 1e-7;
/// Incident-energy bounds used for normalization, in MeV.
pub const E_MIN: f64 = 1e3;
pub const E_MAX: f64 = 1e6;

const CLAMP_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct TransformedShower {
    pub x: Vec<f64>,
    pub incident_energy: f64,
    pub delta: f64,
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta < 0.5) {
        return Err(CaloError::InvalidParameter(format!("delta must lie in (0, 0.5), got {delta}")));
    }
    Ok(())
}

pub fn forward_transform(shower: &ShowerRecord, delta: f64) -> Result<TransformedShower> {
    check_delta(delta)?;
    let e = shower.incident_energy();
    let offset = logit(delta);
    let x = shower
        .voxels()
        .iter()
        .enumerate()
        .map(|(index, &v)| {
            if v > e {
                return Err(CaloError::OutOfRange {
                    index,
                    value: v,
                    incident: e,
                });
            }
            if v == 0.0 {
                return Ok(0.0);
            }
            let u = delta + (1.0 - 2.0 * delta) * (v / e);
            Ok(logit(u) - offset)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TransformedShower {
        x,
        incident_energy: e,
        delta,
    })
}

pub fn inverse_transform(t: &TransformedShower) -> Result<ShowerRecord> {
    check_delta(t.delta)?;
    let offset = logit(t.delta);
    let mut voxels = Vec::with_capacity(t.x.len());
    for (i, &x) in t.x.iter().enumerate() {
        if !x.is_finite() {
            return Err(CaloError::InvalidParameter(format!("x[{i}] = {x} is not finite")));
        }
        if x == 0.0 {
            voxels.push(0.0);
            continue;
        }
        let u = 1.0 / (1.0 + (-(x + offset)).exp());
        let mut frac = (u - t.delta) / (1.0 - 2.0 * t.delta);
        if !(0.0..=1.0).contains(&frac) {
            if frac < -CLAMP_TOLERANCE || frac > 1.0 + CLAMP_TOLERANCE {
                log::warn!("x[{i}] = {x} maps to reduced energy {frac}; clamping");
            }
            frac = frac.clamp(0.0, 1.0);
        }
        voxels.push(frac * t.incident_energy);
    }
    ShowerRecord::new(voxels, t.incident_energy)
}

/// `(ln e - ln e_min) / (ln e_max - ln e_min)` for `e` in `[e_min, e_max]`.
pub fn normalize_incident(e: f64, e_min: f64, e_max: f64) -> Result<f64> {
    if !(e_min > 0.0 && e_max > e_min) {
        return Err(CaloError::InvalidParameter(format!("bad bounds [{e_min}, {e_max}]")));
    }
    if !(e >= e_min && e <= e_max) {
        return Err(CaloError::InvalidParameter(format!(
            "incident energy {e} outside [{e_min}, {e_max}]"
        )));
    }
    Ok((e.ln() - e_min.ln()) / (e_max.ln() - e_min.ln()))
}
