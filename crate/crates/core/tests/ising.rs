use quadrbm::annealer::*;
use quadrbm::ising::*;
use quadrbm::zestimate::enumerate::mask_to_state;
use quadrbm::zestimate::{exact_ln_z, exact_moments};
use quadrbm::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn machine(sizes: [usize; 4], std: f64, seed: u64) -> QuadripartiteRBM {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    QuadripartiteRBM::random(PartitionLayout::new(sizes).unwrap(), std, &mut rng)
}

/// Boltzmann weights of `H(2x - 1) + offset` and of `E(x)` agree on every
/// configuration, so both define one distribution.
#[test]
fn ising_and_binary_distributions_coincide_by_enumeration() {
    for seed in 0..5 {
        let rbm = machine([3, 3, 3, 3], 1.0, seed);
        let prog = rbm_to_ising(&rbm);
        let ln_z = exact_ln_z(&rbm, 1.0).unwrap().value;
        let mut total = 0.0;
        for mask in 0..(1u64 << 12) {
            let x = mask_to_state(&rbm, mask);
            let h = prog.energy(&binary_to_spin(&x)).unwrap() + prog.offset;
            let lp_ising = -h - ln_z;
            let lp_rbm = -rbm.energy(&x).unwrap() - ln_z;
            assert!((lp_ising - lp_rbm).abs() < 1e-10);
            total += lp_ising.exp();
        }
        assert!((total - 1.0).abs() < 1e-9);
    }
}

#[test]
fn scaled_program_samples_the_tempered_machine() {
    let rbm = machine([3, 3, 3, 3], 1.0, 7);
    let beta = 0.5;
    // the backend samples the program machine times its scale, here beta^2 / beta
    let prog = apply_scale(&rbm_to_ising(&rbm.scaled(beta * beta)), beta).unwrap();
    assert!((prog.scale - 1.0 / beta).abs() < 1e-15);
    let backend = GibbsBackend::new(200).unwrap();
    let h = backend.program(&prog).unwrap();
    let n = 20_000;
    let batch = backend.read(&h, n, 3).unwrap();
    let exact = exact_moments(&rbm, beta).unwrap();
    for (p, means) in batch.unit_means().iter().enumerate() {
        for (i, m) in means.iter().enumerate() {
            let target = -exact.mean_grad.biases[p][i];
            let se = (target * (1.0 - target) / n as f64).sqrt();
            assert!((m - target).abs() < 4.0 * se, "partition {p} unit {i}: {m} vs {target}");
        }
    }
}

#[test]
fn program_json_round_trip() {
    let rbm = machine([2, 3, 1, 2], 1.0, 1);
    let flux = condition_to_flux(rbm.layout(), Partition::H, &[1, 0, 1], 0.3).unwrap();
    let prog = apply_scale(&rbm_to_ising(&rbm), 4.0).unwrap().with_flux(flux).unwrap();
    let back = IsingProgram::from_json(&prog.to_json().unwrap()).unwrap();
    assert_eq!(back, prog);
}

#[test]
fn positive_flux_pins_bits_to_one() {
    let rbm = QuadripartiteRBM::zeros(PartitionLayout::new([2, 2, 2, 2]).unwrap());
    let flux = condition_to_flux(rbm.layout(), Partition::S, &[1, 0], 20.0).unwrap();
    let prog = rbm_to_ising(&rbm).with_flux(flux).unwrap();
    let backend = GibbsBackend::new(10).unwrap();
    let batch = backend.read(&backend.program(&prog).unwrap(), 500, 1).unwrap();
    assert!(batch.states().iter().all(|s| s.part(Partition::S) == [1, 0]));
}

#[test]
fn malformed_programs_are_rejected() {
    let rbm = machine([2, 2, 2, 2], 1.0, 2);
    let prog = rbm_to_ising(&rbm);
    assert!(prog.clone().with_flux(vec![0.0; 3]).is_err());
    assert!(apply_scale(&prog, 0.0).is_err());
    assert!(apply_scale(&prog, f64::NAN).is_err());
    assert!(condition_to_flux(rbm.layout(), Partition::V, &[1, 2], 1.0).is_err());
    let mut bad = prog.to_value().unwrap();
    bad["couplings"][0]["j"] = serde_json::json!(1);
    assert!(IsingProgram::from_value(bad).is_err());
}
