//! Invariants checked on generated instances.

use proptest::prelude::*;
use quadrbm::calibration::MomentPair;
use quadrbm::ising::{apply_scale, binary_to_spin, ising_to_rbm, rbm_to_ising, spin_to_binary};
use quadrbm::zestimate::exact_ln_z;
use quadrbm::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn sizes_upto(max: usize) -> impl Strategy<Value = [usize; 4]> {
    prop::array::uniform4(1..=max)
}

fn machine(sizes: [usize; 4], std: f64, seed: u64) -> QuadripartiteRBM {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    QuadripartiteRBM::random(PartitionLayout::new(sizes).unwrap(), std, &mut rng)
}

fn state(layout: &PartitionLayout, seed: u64) -> QuadState {
    QuadState::random(layout, &mut ChaCha8Rng::seed_from_u64(seed))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn single_flip_changes_energy_by_field_plus_bias(
        sizes in sizes_upto(4), seed in any::<u64>(), p in 0usize..4, unit in any::<prop::sample::Index>()
    ) {
        let rbm = machine(sizes, 1.0, seed);
        let part = Partition::ALL[p];
        let i = unit.index(sizes[p]);
        let mut s = state(rbm.layout(), seed ^ 1);
        let field = rbm.activation_field(&s, part).unwrap();
        s.part_mut(part)[i] = 0;
        let e0 = rbm.energy(&s).unwrap();
        s.part_mut(part)[i] = 1;
        let e1 = rbm.energy(&s).unwrap();
        prop_assert!((e0 - e1 - rbm.bias(part)[i] - field[i]).abs() < 1e-10);
    }

    #[test]
    fn clamped_partitions_are_bit_identical(
        sizes in sizes_upto(4), seed in any::<u64>(), mask in 0u8..16, steps in 1usize..30
    ) {
        let rbm = machine(sizes, 1.0, seed);
        let clamped: PartitionSet = Partition::ALL.iter().copied().filter(|p| mask >> p.index() & 1 == 1).collect();
        let mut s = state(rbm.layout(), seed ^ 2);
        let start = s.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 3);
        for _ in 0..steps {
            s = block_gibbs_step(&rbm, &s, &mut rng, clamped).unwrap();
        }
        for p in clamped.iter() {
            prop_assert_eq!(s.part(p), start.part(p));
        }
    }

    #[test]
    fn sampling_is_reproducible(sizes in sizes_upto(3), seed in any::<u64>()) {
        let rbm = machine(sizes, 1.0, seed);
        let req = SampleRequest::new(5, 7, seed);
        prop_assert_eq!(sample(&rbm, &req).unwrap(), sample(&rbm, &req).unwrap());
    }

    #[test]
    fn ising_energy_equivalence(sizes in sizes_upto(8), seed in any::<u64>()) {
        let rbm = machine(sizes, 1.0, seed);
        let prog = rbm_to_ising(&rbm);
        for k in 0..10 {
            let x = state(rbm.layout(), seed.wrapping_add(k));
            let h = prog.energy(&binary_to_spin(&x)).unwrap();
            prop_assert!((rbm.energy(&x).unwrap() - h - prog.offset).abs() < 1e-10);
        }
    }

    #[test]
    fn ising_round_trip(sizes in sizes_upto(6), seed in any::<u64>()) {
        let rbm = machine(sizes, 1.0, seed);
        let prog = rbm_to_ising(&rbm);
        let back = ising_to_rbm(&prog).unwrap();
        let d = back.params().flatten().iter().zip(rbm.params().flatten()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        prop_assert!(d < 1e-12);
        let again = rbm_to_ising(&back);
        for (a, b) in again.delta.iter().zip(&prog.delta) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn spin_binary_inverse(sizes in sizes_upto(8), seed in any::<u64>()) {
        let layout = PartitionLayout::new(sizes).unwrap();
        let x = state(&layout, seed);
        prop_assert_eq!(spin_to_binary(&binary_to_spin(&x), &layout).unwrap(), x);
    }

    #[test]
    fn scale_inverse_composition(beta in 0.01f64..100.0) {
        let prog = rbm_to_ising(&machine([2, 2, 2, 2], 1.0, 0));
        let back = apply_scale(&apply_scale(&prog, beta).unwrap(), 1.0 / beta).unwrap();
        prop_assert!((back.scale - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ln_z_invariant_under_relabelling(sizes in sizes_upto(3), seed in any::<u64>(), p in 0usize..4) {
        let rbm = machine(sizes, 1.0, seed);
        let n = sizes[p];
        // reverse the unit order within partition p
        let mut params = rbm.params().clone();
        params.biases[p].reverse();
        for (k, &(a, b)) in PAIRS.iter().enumerate() {
            let w = params.weights[k].clone();
            let (r, c) = w.dim();
            for i in 0..r {
                for j in 0..c {
                    let (ii, jj) = (if a == p { n - 1 - i } else { i }, if b == p { n - 1 - j } else { j });
                    params.weights[k][(ii, jj)] = w[(i, j)];
                }
            }
        }
        let permuted = rbm.with_params(params).unwrap();
        let a = exact_ln_z(&rbm, 1.0).unwrap().value;
        let b = exact_ln_z(&permuted, 1.0).unwrap().value;
        prop_assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn threshold_halves_when_samples_quadruple(var_a in 0.1f64..10.0, var_b in 0.1f64..10.0, n in 2usize..10_000) {
        let m = |n| MomentPair { mean_h_qa: -1.0, var_h_qa: var_a, n_qa: n, mean_h_rbm: -1.0, var_h_rbm: var_b, n_rbm: n };
        let t1 = m(n).threshold();
        let t4 = m(4 * n).threshold();
        prop_assert!((t1 / t4 - 2.0).abs() < 1e-12);
    }
}

#[test]
fn masked_entries_cannot_be_set() {
    let mut mask = ndarray::Array2::from_elem((2, 2), true);
    mask[(0, 1)] = false;
    let masks = [Some(mask), None, None, None, None, None];
    let layout = PartitionLayout::with_masks([2, 2, 1, 1], masks).unwrap();
    let mut params = Parameters::zeros(&layout);
    params.weights[0][(0, 1)] = f64::NAN;
    assert!(QuadripartiteRBM::new(layout.clone(), params.clone()).is_err());
    params.weights[0][(0, 1)] = 0.5;
    assert!(QuadripartiteRBM::new(layout, params).is_err());
}
