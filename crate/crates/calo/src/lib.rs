//! Calorimeter shower data: a 45 x 16 x 9 cylindrical voxel grid per event,
//! the zero-preserving logit transform used to train on it, and the binary
//! encoding of the incident energy that conditions the machine.

mod encoding;
mod error;
mod ingest;
mod shower;
mod toy;
mod transform;

pub use encoding::{encode_incident_energy, ConditionEncoding, BLOCK_BITS, ENCODING_BITS, REPEATS};
pub use error::{CaloError, Result};
pub use ingest::{ingest, write_csv, write_hdf5, Format, ShowerReader};
pub use shower::{flat_index, sparsity_index, ShowerRecord, N_ANGULAR, N_LAYERS, N_RADIAL, N_VOXELS};
pub use toy::{gaussian_logit_draws, truncated_gaussian, LogitMoments, ToyConfig, ToyGenerator};
pub use transform::{
    forward_transform, inverse_transform, normalize_incident, TransformedShower, DEFAULT_DELTA, E_MAX, E_MIN,
};
