//! Shower preprocessing with a zero-preservation and round-trip audit.

use std::fmt::Write as _;
use std::path::Path;

use quadrbm::rng::derive_seed;
use quadrbm_calo::{
    forward_transform, ingest, inverse_transform, Format, ShowerRecord, ToyConfig, ToyGenerator, N_VOXELS,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::output::OutDir;

#[derive(Debug, Serialize)]
pub struct Audit {
    pub records: usize,
    pub zero_mismatches: usize,
    pub max_round_trip_rel_error: f64,
    pub pass: bool,
}

pub fn run(cfg: &RunConfig, input: Option<&Path>, out: &OutDir) -> Result<Audit> {
    let p = &cfg.preprocess;
    let records: Vec<ShowerRecord> = match input.or(p.input.as_deref()) {
        Some(path) => {
            let format = Format::from_path(path)
                .ok_or_else(|| CliError::Config(format!("cannot tell the format of {}", path.display())))?;
            ingest(path, format)?.collect::<quadrbm_calo::Result<_>>()?
        }
        None => {
            let gen = ToyGenerator::new(ToyConfig::default())?;
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.run.seed, 0xCA10));
            gen.generate_n(p.toy_records, &mut rng)?
        }
    };
    if records.is_empty() {
        return Err(CliError::Config("no shower records to preprocess".into()));
    }

    let mut table = String::from("incident_energy");
    for i in 0..N_VOXELS {
        write!(table, ",x{i}").unwrap();
    }
    table.push('\n');
    let (mut zero_mismatches, mut worst) = (0usize, 0.0f64);
    for shower in &records {
        let t = forward_transform(shower, p.delta)?;
        let back = inverse_transform(&t)?;
        for ((v, x), b) in shower.voxels().iter().zip(&t.x).zip(back.voxels()) {
            if (*v == 0.0) != (*x == 0.0) || (*v == 0.0) != (*b == 0.0) {
                zero_mismatches += 1;
            } else if *v > 0.0 {
                worst = worst.max((v - b).abs() / v);
            }
        }
        write!(table, "{}", t.incident_energy).unwrap();
        for x in &t.x {
            write!(table, ",{x}").unwrap();
        }
        table.push('\n');
    }
    out.write("transformed.csv", table)?;
    let audit = Audit {
        records: records.len(),
        zero_mismatches,
        max_round_trip_rel_error: worst,
        pass: zero_mismatches == 0 && worst < 1e-6,
    };
    out.write_json("preprocess_audit.json", &audit)?;
    Ok(audit)
}
