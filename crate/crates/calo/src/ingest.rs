//! Reading and writing shower files.
//!
//! HDF5 files hold `incident_energies` (N x 1) and `showers` (N x 6480),
//! both f64. CSV files have a header `e,v0,...,v6479` and one event per row.

use std::fs::File;
use std::path::Path;

use crate::error::{CaloError, Result};
use crate::shower::{ShowerRecord, N_VOXELS};

const ENERGIES: &str = "incident_energies";
const SHOWERS: &str = "showers";
/// Rows per HDF5 read while streaming.
const CHUNK: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Hdf5,
    Csv,
}

impl std::str::FromStr for Format {
    type Err = CaloError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "hdf5" | "h5" => Ok(Format::Hdf5),
            "csv" => Ok(Format::Csv),
            other => Err(CaloError::InvalidParameter(format!("unknown format {other:?}"))),
        }
    }
}

impl Format {
    /// Guesses from the file extension.
    pub fn from_path(path: &Path) -> Option<Format> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "h5" | "hdf5" => Some(Format::Hdf5),
            "csv" => Some(Format::Csv),
            _ => None,
        }
    }
}

/// A stream of validated records.
pub enum ShowerReader {
    Hdf5(Hdf5Reader),
    Csv(CsvReader),
}

impl Iterator for ShowerReader {
    type Item = Result<ShowerRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        match self {
            ShowerReader::Hdf5(r) => r.next(),
            ShowerReader::Csv(r) => r.next(),
        }
    }
}

pub fn ingest(path: &Path, format: Format) -> Result<ShowerReader> {
    match format {
        Format::Hdf5 => Ok(ShowerReader::Hdf5(Hdf5Reader::open(path)?)),
        Format::Csv => Ok(ShowerReader::Csv(CsvReader::open(path)?)),
    }
}

pub struct Hdf5Reader {
    energies: Vec<f64>,
    showers: hdf5::Dataset,
    buffer: Vec<f64>,
    buffer_start: usize,
    next: usize,
    failed: bool,
}

impl Hdf5Reader {
    fn open(path: &Path) -> Result<Self> {
        let file = hdf5::File::open(path)?;
        let energies_ds = file
            .dataset(ENERGIES)
            .map_err(|_| CaloError::MissingDataset(ENERGIES.into()))?;
        let showers = file
            .dataset(SHOWERS)
            .map_err(|_| CaloError::MissingDataset(SHOWERS.into()))?;
        let es = energies_ds.shape();
        let ss = showers.shape();
        let n = es.first().copied().unwrap_or(0);
        if !(es.len() == 2 && es[1] == 1 || es.len() == 1) {
            return Err(CaloError::Shape(format!("{ENERGIES} has shape {es:?}, expected (N, 1)")));
        }
        if ss.len() != 2 || ss[1] != N_VOXELS || ss[0] != n {
            return Err(CaloError::Shape(format!(
                "{SHOWERS} has shape {ss:?}, expected ({n}, {N_VOXELS})"
            )));
        }
        Ok(Hdf5Reader {
            energies: energies_ds.read_raw::<f64>()?,
            showers,
            buffer: Vec::new(),
            buffer_start: 0,
            next: 0,
            failed: false,
        })
    }

    fn next(&mut self) -> Option<Result<ShowerRecord>> {
        if self.failed || self.next >= self.energies.len() {
            return None;
        }
        let i = self.next;
        let in_buffer = i >= self.buffer_start && (i - self.buffer_start + 1) * N_VOXELS <= self.buffer.len();
        if !in_buffer {
            let end = (i + CHUNK).min(self.energies.len());
            match self.showers.read_slice_2d::<f64, _>((i..end, ..)) {
                Ok(block) => {
                    self.buffer = block.iter().copied().collect();
                    self.buffer_start = i;
                }
                Err(e) => {
                    self.failed = true;
                    return Some(Err(e.into()));
                }
            }
        }
        let off = (i - self.buffer_start) * N_VOXELS;
        let voxels = self.buffer[off..off + N_VOXELS].to_vec();
        self.next += 1;
        let rec = ShowerRecord::validated(voxels, self.energies[i], i);
        if rec.is_err() {
            self.failed = true;
        }
        Some(rec)
    }
}

pub struct CsvReader {
    rows: csv::StringRecordsIntoIter<File>,
    index: usize,
    failed: bool,
}

impl CsvReader {
    fn open(path: &Path) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
        let header = reader.headers()?;
        if header.len() != N_VOXELS + 1 || &header[0] != "e" || &header[1] != "v0" {
            return Err(CaloError::Shape(format!(
                "CSV header has {} columns, expected e,v0..v{}",
                header.len(),
                N_VOXELS - 1
            )));
        }
        Ok(CsvReader {
            rows: reader.into_records(),
            index: 0,
            failed: false,
        })
    }

    fn parse(&self, row: &csv::StringRecord) -> Result<ShowerRecord> {
        let field = |k: usize| -> Result<f64> {
            row[k].trim().parse::<f64>().map_err(|e| CaloError::InvalidRecord {
                record: self.index,
                what: format!("column {k}: {e}"),
            })
        };
        if row.len() != N_VOXELS + 1 {
            return Err(CaloError::Shape(format!(
                "record {} has {} columns, expected {}",
                self.index,
                row.len(),
                N_VOXELS + 1
            )));
        }
        let e = field(0)?;
        let voxels = (1..=N_VOXELS).map(field).collect::<Result<Vec<_>>>()?;
        ShowerRecord::validated(voxels, e, self.index)
    }

    fn next(&mut self) -> Option<Result<ShowerRecord>> {
        if self.failed {
            return None;
        }
        let row = self.rows.next()?;
        let rec = match row {
            Ok(row) => self.parse(&row),
            Err(e) => Err(e.into()),
        };
        self.index += 1;
        if rec.is_err() {
            self.failed = true;
        }
        Some(rec)
    }
}

pub fn write_hdf5(path: &Path, records: &[ShowerRecord]) -> Result<()> {
    let file = hdf5::File::create(path)?;
    let n = records.len();
    let energies: Vec<f64> = records.iter().map(ShowerRecord::incident_energy).collect();
    file.new_dataset::<f64>()
        .shape((n, 1))
        .create(ENERGIES)?
        .write_raw(&energies)?;
    let mut flat = Vec::with_capacity(n * N_VOXELS);
    for r in records {
        flat.extend_from_slice(r.voxels());
    }
    file.new_dataset::<f64>()
        .shape((n, N_VOXELS))
        .create(SHOWERS)?
        .write_raw(&flat)?;
    file.flush()?;
    Ok(())
}

pub fn write_csv(path: &Path, records: &[ShowerRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = Vec::with_capacity(N_VOXELS + 1);
    header.push("e".to_string());
    header.extend((0..N_VOXELS).map(|i| format!("v{i}")));
    w.write_record(&header)?;
    for r in records {
        let mut row = Vec::with_capacity(N_VOXELS + 1);
        row.push(r.incident_energy().to_string());
        row.extend(r.voxels().iter().map(f64::to_string));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
