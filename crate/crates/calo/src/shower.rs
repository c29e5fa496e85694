use crate::error::{CaloError, Result};

pub const N_LAYERS: usize = 45;
pub const N_ANGULAR: usize = 16;
pub const N_RADIAL: usize = 9;
pub const N_VOXELS: usize = N_LAYERS * N_ANGULAR * N_RADIAL;

/// Position of voxel (layer `z`, angular bin `phi`, radial bin `r`) in the
/// flat vector: layer-major, radius innermost.
pub fn flat_index(z: usize, phi: usize, r: usize) -> usize {
    debug_assert!(z < N_LAYERS && phi < N_ANGULAR && r < N_RADIAL);
    z * N_ANGULAR * N_RADIAL + phi * N_RADIAL + r
}

/// One event: voxel energies in MeV and the incident energy in MeV.
#[derive(Debug, Clone, PartialEq)]
pub struct ShowerRecord {
    voxels: Vec<f64>,
    incident_energy: f64,
}

impl ShowerRecord {
    pub fn new(voxels: Vec<f64>, incident_energy: f64) -> Result<Self> {
        Self::validated(voxels, incident_energy, 0)
    }

    pub(crate) fn validated(voxels: Vec<f64>, incident_energy: f64, record: usize) -> Result<Self> {
        if voxels.len() != N_VOXELS {
            return Err(CaloError::Shape(format!(
                "record {record} has {} voxels, expected {N_VOXELS}",
                voxels.len()
            )));
        }
        if !(incident_energy > 0.0 && incident_energy.is_finite()) {
            return Err(CaloError::InvalidRecord {
                record,
                what: format!("incident energy {incident_energy} is not positive and finite"),
            });
        }
        for (index, &value) in voxels.iter().enumerate() {
            if value < 0.0 {
                return Err(CaloError::NegativeVoxel { record, index, value });
            }
            if !value.is_finite() {
                return Err(CaloError::InvalidRecord {
                    record,
                    what: format!("voxel {index} is not finite"),
                });
            }
        }
        Ok(ShowerRecord {
            voxels,
            incident_energy,
        })
    }

    pub fn zeros(incident_energy: f64) -> Result<Self> {
        Self::new(vec![0.0; N_VOXELS], incident_energy)
    }

    pub fn voxels(&self) -> &[f64] {
        &self.voxels
    }

    pub fn voxel(&self, z: usize, phi: usize, r: usize) -> f64 {
        self.voxels[flat_index(z, phi, r)]
    }

    pub fn incident_energy(&self) -> f64 {
        self.incident_energy
    }

    pub fn total_energy(&self) -> f64 {
        self.voxels.iter().sum()
    }

    pub fn into_voxels(self) -> Vec<f64> {
        self.voxels
    }
}

/// Fraction of voxels with exactly zero energy.
pub fn sparsity_index(shower: &ShowerRecord) -> f64 {
    shower.voxels.iter().filter(|&&v| v == 0.0).count() as f64 / N_VOXELS as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flattening_order() {
        assert_eq!(flat_index(1, 0, 0), 144);
        assert_eq!(flat_index(0, 1, 0), 9);
        assert_eq!(flat_index(0, 0, 1), 1);
        assert_eq!(flat_index(44, 15, 8), N_VOXELS - 1);
    }

    #[test]
    fn sparsity_examples() {
        assert_eq!(sparsity_index(&ShowerRecord::zeros(1e3).unwrap()), 1.0);
        assert_eq!(sparsity_index(&ShowerRecord::new(vec![0.1; N_VOXELS], 1e3).unwrap()), 0.0);
        let half: Vec<f64> = (0..N_VOXELS).map(|i| (i % 2) as f64).collect();
        assert_eq!(sparsity_index(&ShowerRecord::new(half, 1e4).unwrap()), 0.5);
    }

    #[test]
    fn negative_voxel_reports_index() {
        let mut v = vec![0.0; N_VOXELS];
        v[77] = -1.0;
        match ShowerRecord::new(v, 1e3) {
            Err(CaloError::NegativeVoxel { index, .. }) => assert_eq!(index, 77),
            other => panic!("unexpected {other:?}"),
        }
    }
}
