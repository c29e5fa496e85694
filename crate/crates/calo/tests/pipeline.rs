use proptest::prelude::*;
use quadrbm_calo::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn toy(n: usize, seed: u64) -> Vec<ShowerRecord> {
    let g = ToyGenerator::new(ToyConfig::default()).unwrap();
    g.generate_n(n, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

#[test]
fn hdf5_round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("showers.h5");
    let records = toy(10, 1);
    write_hdf5(&path, &records).unwrap();
    let back: Vec<ShowerRecord> = ingest(&path, Format::Hdf5).unwrap().collect::<Result<_>>().unwrap();
    assert_eq!(back, records);
}

#[test]
fn csv_round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("showers.csv");
    let records = toy(10, 2);
    write_csv(&path, &records).unwrap();
    let back: Vec<ShowerRecord> = ingest(&path, Format::Csv).unwrap().collect::<Result<_>>().unwrap();
    assert_eq!(back, records);
}

#[test]
fn negative_voxel_in_file_is_rejected_with_index() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    let mut text = String::from("e");
    for i in 0..N_VOXELS {
        text.push_str(&format!(",v{i}"));
    }
    text.push('\n');
    text.push_str("1000");
    for i in 0..N_VOXELS {
        text.push_str(if i == 300 { ",-1" } else { ",0" });
    }
    text.push('\n');
    std::fs::write(&path, text).unwrap();
    let first = ingest(&path, Format::Csv).unwrap().next().unwrap();
    match first {
        Err(CaloError::NegativeVoxel { record, index, value }) => {
            assert_eq!((record, index, value), (0, 300, -1.0));
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn hdf5_missing_dataset_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.h5");
    hdf5::File::create(&path).unwrap();
    assert!(matches!(ingest(&path, Format::Hdf5), Err(CaloError::MissingDataset(_))));
}

#[test]
fn zero_preservation_and_round_trip_over_ten_thousand_showers() {
    let g = ToyGenerator::new(ToyConfig::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        let s = g.generate(&mut rng);
        let t = forward_transform(&s, DEFAULT_DELTA).unwrap();
        for (v, x) in s.voxels().iter().zip(&t.x) {
            assert_eq!(*v == 0.0, *x == 0.0);
        }
        let back = inverse_transform(&t).unwrap();
        for (a, b) in s.voxels().iter().zip(back.voxels()) {
            if *a == 0.0 {
                assert_eq!(*b, 0.0);
            } else {
                worst = worst.max((a - b).abs() / a);
            }
        }
    }
    assert!(worst < 1e-6, "worst relative error {worst}");
}

#[test]
fn incident_energies_are_log_uniform() {
    let g = ToyGenerator::new(ToyConfig::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut u: Vec<f64> = (0..10_000)
        .map(|_| normalize_incident(g.sample_energy(&mut rng), E_MIN, E_MAX).unwrap())
        .collect();
    u.sort_by(f64::total_cmp);
    let n = u.len() as f64;
    let d = u
        .iter()
        .enumerate()
        .map(|(i, &x)| (x - i as f64 / n).abs().max(((i + 1) as f64 / n - x).abs()))
        .fold(0.0, f64::max);
    // asymptotic Kolmogorov critical value at alpha = 0.01
    assert!(d < 1.628 / n.sqrt(), "KS statistic {d}");
}

#[test]
fn sparsity_tracks_target() {
    for target in [0.3, 0.7, 0.9] {
        let g = ToyGenerator::new(ToyConfig {
            sparsity: target,
            ..Default::default()
        })
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let showers = g.generate_n(200, &mut rng).unwrap();
        let mean = showers.iter().map(sparsity_index).sum::<f64>() / showers.len() as f64;
        assert!((mean - target).abs() < 0.05, "target {target}, got {mean}");
    }
}

#[test]
fn gaussian_logit_variance_follows_lambda() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let draws = gaussian_logit_draws(1000.0, 1e6, 100_000, &mut rng).unwrap();
    let m = LogitMoments::of(&draws).unwrap();
    assert!((m.variance * 1000.0 - 1.0).abs() < 0.2, "variance {}", m.variance);
    assert!((m.mean - (1000.0f64 / 1e6).ln()).abs() < 0.01, "mean {}", m.mean);
}

#[test]
fn encoding_of_one_gev() {
    let c = encode_incident_energy(1000.0).unwrap();
    let block = format!("{:020b}{:020b}{:020b}", 1000, 69, 316);
    let expect = format!("{}{}", block.repeat(8), "0".repeat(32));
    assert_eq!(c.to_bit_string(), expect);
}

proptest! {
    #[test]
    fn encoding_is_injective_on_integer_energies(a in 1u32..(1 << 20), b in 1u32..(1 << 20)) {
        prop_assume!(a != b);
        let ea = encode_incident_energy(f64::from(a)).unwrap();
        let eb = encode_incident_energy(f64::from(b)).unwrap();
        prop_assert_ne!(ea.bits, eb.bits);
    }

    #[test]
    fn transform_round_trip(frac in proptest::collection::vec(1e-9f64..=1.0, 16), e in 1e3f64..1e6) {
        let mut voxels = vec![0.0; N_VOXELS];
        for (i, f) in frac.iter().enumerate() {
            // every other slot stays empty
            if i % 2 == 0 {
                voxels[i * 97] = f * e;
            }
        }
        let s = ShowerRecord::new(voxels, e).unwrap();
        let t = forward_transform(&s, DEFAULT_DELTA).unwrap();
        let back = inverse_transform(&t).unwrap();
        for (a, b) in s.voxels().iter().zip(back.voxels()) {
            prop_assert_eq!(*a == 0.0, *b == 0.0);
            if *a > 0.0 {
                prop_assert!(((a - b) / a).abs() < 1e-6);
            }
        }
    }
}
