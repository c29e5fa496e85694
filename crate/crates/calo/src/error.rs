use thiserror::Error;

#[derive(Debug, Error)]
pub enum CaloError {
    #[error("voxel {index} has energy {value} outside [0, {incident}]")]
    OutOfRange { index: usize, value: f64, incident: f64 },
    #[error("record {record}: voxel {index} has negative energy {value}")]
    NegativeVoxel { record: usize, index: usize, value: f64 },
    #[error("record {record}: {what}")]
    InvalidRecord { record: usize, what: String },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("missing dataset {0:?}")]
    MissingDataset(String),
    #[error("{name} = {value} does not fit in {bits} bits")]
    Overflow { name: &'static str, value: u64, bits: u32 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Hdf5(#[from] hdf5::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, CaloError>;
