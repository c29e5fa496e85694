//! Binary RBM <-> spin-basis Ising program.
//!
//! With `z = 2x - 1` the machine energy splits as
//! `E(x) = sum_i delta_i z_i + sum_{i<j} J_ij z_i z_j + offset`, where
//! `delta_i = -bias_i / 2 - 1/4 sum_j W_ij` over every block touching `i`,
//! `J_ij = -W_ij / 4` and `offset = -(1/2 sum biases + 1/4 sum W)`.
//! Nodes are indexed globally, partition-major.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::layout::{pair_index, Partition, PartitionLayout, PAIRS};
use crate::rbm::{Parameters, QuadState, QuadripartiteRBM};

pub const ISING_FORMAT_VERSION: u32 = 1;

/// A vector of `-1/+1` spins in partition-major order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpinState {
    z: Vec<i8>,
}

impl SpinState {
    pub fn new(z: Vec<i8>) -> Result<Self> {
        if let Some((index, &value)) = z.iter().enumerate().find(|(_, &s)| s != 1 && s != -1) {
            return Err(Error::NotSpin { index, value });
        }
        Ok(SpinState { z })
    }

    pub fn spins(&self) -> &[i8] {
        &self.z
    }

    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }
}

pub fn binary_to_spin(x: &QuadState) -> SpinState {
    SpinState {
        z: x.to_flat().iter().map(|&b| 2 * b as i8 - 1).collect(),
    }
}

pub fn spin_to_binary(z: &SpinState, layout: &PartitionLayout) -> Result<QuadState> {
    check_len("spin state", layout.total(), z.len())?;
    let flat: Vec<u8> = z.z.iter().map(|&s| ((s + 1) / 2) as u8).collect();
    QuadState::from_flat(layout, &flat)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coupling {
    pub i: usize,
    pub j: usize,
    pub value: f64,
}

/// Spin biases, couplings, flux biases, offset and scale for one
/// programming of an annealer.
///
/// `couplings` lists every pair the layout allows (zeros included), with
/// `i < j`, sorted.
#[derive(Debug, Clone, PartialEq)]
pub struct IsingProgram {
    layout: PartitionLayout,
    pub delta: Vec<f64>,
    pub couplings: Vec<Coupling>,
    pub flux_biases: Vec<f64>,
    pub offset: f64,
    pub scale: f64,
}

#[derive(Serialize, Deserialize)]
struct IsingFile {
    format_version: u32,
    sizes: [usize; 4],
    delta: Vec<f64>,
    couplings: Vec<Coupling>,
    flux_biases: Vec<f64>,
    offset: f64,
    scale: f64,
}

impl IsingProgram {
    /// Builds and validates a program. Couplings may be given in any order;
    /// they are sorted and checked against the quadripartite structure.
    pub fn new(
        layout: PartitionLayout,
        delta: Vec<f64>,
        mut couplings: Vec<Coupling>,
        flux_biases: Vec<f64>,
        offset: f64,
        scale: f64,
    ) -> Result<Self> {
        let n = layout.total();
        check_len("delta", n, delta.len())?;
        check_len("flux_biases", n, flux_biases.len())?;
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::InvalidParameter(format!("scale must be positive and finite, got {scale}")));
        }
        if !offset.is_finite() {
            return Err(Error::NonFinite("offset".into()));
        }
        if delta.iter().chain(&flux_biases).any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("spin biases".into()));
        }
        for c in couplings.iter_mut() {
            if c.i > c.j {
                std::mem::swap(&mut c.i, &mut c.j);
            }
        }
        couplings.sort_by_key(|c| (c.i, c.j));
        for w in couplings.windows(2) {
            if (w[0].i, w[0].j) == (w[1].i, w[1].j) {
                return Err(Error::Structure(format!("duplicate coupling ({}, {})", w[0].i, w[0].j)));
            }
        }
        for c in &couplings {
            let (k, row, col) = locate_pair(&layout, c.i, c.j)?;
            if !layout.allows(k, row, col) {
                return Err(Error::Structure(format!(
                    "coupling ({}, {}) is masked out by the layout",
                    c.i, c.j
                )));
            }
            if !c.value.is_finite() {
                return Err(Error::NonFinite(format!("coupling ({}, {})", c.i, c.j)));
            }
        }
        Ok(IsingProgram {
            layout,
            delta,
            couplings,
            flux_biases,
            offset,
            scale,
        })
    }

    pub fn layout(&self) -> &PartitionLayout {
        &self.layout
    }

    pub fn n_spins(&self) -> usize {
        self.delta.len()
    }

    pub fn has_flux(&self) -> bool {
        self.flux_biases.iter().any(|&f| f != 0.0)
    }

    pub fn with_flux(mut self, flux: Vec<f64>) -> Result<Self> {
        check_len("flux_biases", self.n_spins(), flux.len())?;
        if flux.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("flux biases".into()));
        }
        self.flux_biases = flux;
        Ok(self)
    }

    /// Unscaled problem energy `sum delta z + sum J z z` (no offset, no flux).
    pub fn energy(&self, z: &SpinState) -> Result<f64> {
        check_len("spin state", self.n_spins(), z.len())?;
        let s = z.spins();
        let mut e: f64 = self.delta.iter().zip(s).map(|(d, &zi)| d * zi as f64).sum();
        for c in &self.couplings {
            e += c.value * (s[c.i] * s[c.j]) as f64;
        }
        Ok(e)
    }

    /// Per-partition coupling tables in the layout used by the samplers:
    /// `tables[p][q][j * n_p + i]` couples node `j` of `q` to node `i` of `p`.
    pub(crate) fn partition_tables(&self) -> [[Vec<f64>; 4]; 4] {
        let sizes = self.layout.sizes();
        let mut tables: [[Vec<f64>; 4]; 4] = std::array::from_fn(|p| {
            std::array::from_fn(|q| if p == q { Vec::new() } else { vec![0.0; sizes[p] * sizes[q]] })
        });
        for c in &self.couplings {
            let (p, i) = self.layout.locate(c.i).expect("validated index");
            let (q, j) = self.layout.locate(c.j).expect("validated index");
            let (p, q) = (p.index(), q.index());
            tables[p][q][j * sizes[p] + i] = c.value;
            tables[q][p][i * sizes[q] + j] = c.value;
        }
        tables
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.to_file())?)
    }

    fn to_file(&self) -> IsingFile {
        IsingFile {
            format_version: ISING_FORMAT_VERSION,
            sizes: self.layout.sizes(),
            delta: self.delta.clone(),
            couplings: self.couplings.clone(),
            flux_biases: self.flux_biases.clone(),
            offset: self.offset,
            scale: self.scale,
        }
    }

    pub fn to_value(&self) -> Result<serde_json::Value> {
        Ok(serde_json::to_value(self.to_file())?)
    }

    pub fn from_value(value: serde_json::Value) -> Result<Self> {
        Self::from_file(serde_json::from_value(value)?)
    }

    /// Parses the JSON document. Blocks whose pairs are not all listed get
    /// a mask marking exactly the listed pairs.
    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_file(serde_json::from_str(text)?)
    }

    fn from_file(file: IsingFile) -> Result<Self> {
        if file.format_version != ISING_FORMAT_VERSION {
            return Err(Error::FormatVersion {
                found: file.format_version,
                supported: ISING_FORMAT_VERSION,
            });
        }
        let dense = PartitionLayout::new(file.sizes)?;
        let mut masks: [Array2<bool>; 6] = std::array::from_fn(|k| {
            let (r, c) = dense.block_shape(k);
            Array2::from_elem((r, c), false)
        });
        for c in &file.couplings {
            let (k, row, col) = locate_pair(&dense, c.i.min(c.j), c.i.max(c.j))?;
            masks[k][(row, col)] = true;
        }
        let masks = masks.map(|m| if m.iter().all(|&b| b) { None } else { Some(m) });
        let layout = PartitionLayout::with_masks(file.sizes, masks)?;
        Self::new(layout, file.delta, file.couplings, file.flux_biases, file.offset, file.scale)
    }
}

/// Block index and in-block position of the global pair `(i, j)`, `i < j`.
fn locate_pair(layout: &PartitionLayout, i: usize, j: usize) -> Result<(usize, usize, usize)> {
    let n = layout.total();
    if i >= n || j >= n {
        return Err(Error::Structure(format!("coupling ({i}, {j}) outside {n} spins")));
    }
    let (p, li) = layout.locate(i).expect("in range");
    let (q, lj) = layout.locate(j).expect("in range");
    if p == q {
        return Err(Error::Structure(format!(
            "coupling ({i}, {j}) lies inside partition {p}"
        )));
    }
    let (k, p_is_row) = pair_index(p.index(), q.index()).expect("distinct partitions");
    Ok(if p_is_row { (k, li, lj) } else { (k, lj, li) })
}

/// Maps a machine to its spin program (scale 1, no flux).
pub fn rbm_to_ising(rbm: &QuadripartiteRBM) -> IsingProgram {
    let layout = rbm.layout().clone();
    let off = layout.offsets();
    let n = layout.total();
    let mut delta = vec![0.0; n];
    let mut offset = 0.0;
    for p in Partition::ALL {
        for (i, &b) in rbm.bias(p).iter().enumerate() {
            delta[off[p.index()] + i] = -0.5 * b;
            offset -= 0.5 * b;
        }
    }
    let mut couplings = Vec::new();
    for (k, &(a, b)) in PAIRS.iter().enumerate() {
        let w = rbm.weight(k);
        for ((r, c), &x) in w.indexed_iter() {
            delta[off[a] + r] -= 0.25 * x;
            delta[off[b] + c] -= 0.25 * x;
            offset -= 0.25 * x;
            if layout.allows(k, r, c) {
                couplings.push(Coupling {
                    i: off[a] + r,
                    j: off[b] + c,
                    value: -0.25 * x,
                });
            }
        }
    }
    couplings.sort_by_key(|c| (c.i, c.j));
    IsingProgram {
        delta,
        couplings,
        flux_biases: vec![0.0; n],
        offset,
        scale: 1.0,
        layout,
    }
}

/// Inverse of [`rbm_to_ising`] on the unscaled `(delta, J)`; scale, flux
/// and offset are ignored.
pub fn ising_to_rbm(program: &IsingProgram) -> Result<QuadripartiteRBM> {
    let layout = program.layout().clone();
    let off = layout.offsets();
    let mut params = Parameters::zeros(&layout);
    // row sums of W touching each spin, needed to undo the delta shift
    let mut incident = vec![0.0; layout.total()];
    for c in &program.couplings {
        let (k, row, col) = locate_pair(&layout, c.i, c.j)?;
        let w = -4.0 * c.value;
        params.weights[k][(row, col)] = w;
        incident[c.i] += w;
        incident[c.j] += w;
    }
    for p in Partition::ALL {
        let o = off[p.index()];
        for (i, b) in params.biases[p.index()].iter_mut().enumerate() {
            *b = -2.0 * program.delta[o + i] - 0.5 * incident[o + i];
        }
    }
    QuadripartiteRBM::new(layout, params)
}

/// Returns the program with `scale = old_scale / beta`.
pub fn apply_scale(program: &IsingProgram, beta: f64) -> Result<IsingProgram> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::InvalidParameter(format!("beta must be positive and finite, got {beta}")));
    }
    let mut out = program.clone();
    out.scale = program.scale / beta;
    Ok(out)
}

/// Flux biases pinning partition `partition` to `bits`: `+strength` where a
/// bit is 1, `-strength` where it is 0, zero on every other spin.
pub fn condition_to_flux(
    layout: &PartitionLayout,
    partition: Partition,
    bits: &[u8],
    strength: f64,
) -> Result<Vec<f64>> {
    check_len("condition bits", layout.size(partition), bits.len())?;
    if !(strength > 0.0 && strength.is_finite()) {
        return Err(Error::InvalidParameter(format!("flux strength must be positive, got {strength}")));
    }
    let mut flux = vec![0.0; layout.total()];
    let o = layout.offsets()[partition.index()];
    for (i, &b) in bits.iter().enumerate() {
        flux[o + i] = match b {
            0 => -strength,
            1 => strength,
            value => {
                return Err(Error::NotBinary {
                    partition,
                    index: i,
                    value,
                })
            }
        };
    }
    Ok(flux)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_bias_example() {
        let layout = PartitionLayout::new([1, 1, 1, 1]).unwrap();
        let mut params = Parameters::zeros(&layout);
        params.biases[0][0] = 2.0;
        let prog = rbm_to_ising(&QuadripartiteRBM::new(layout, params).unwrap());
        assert_eq!(prog.delta[0], -1.0);
        assert!(prog.couplings.iter().all(|c| c.value == 0.0));
        assert_eq!(prog.offset, -1.0);
        assert_eq!(prog.scale, 1.0);
    }

    #[test]
    fn zero_machine_gives_zero_program() {
        let prog = rbm_to_ising(&QuadripartiteRBM::zeros(PartitionLayout::new([2, 3, 1, 2]).unwrap()));
        assert!(prog.delta.iter().all(|&d| d == 0.0));
        assert!(prog.couplings.iter().all(|c| c.value == 0.0));
        assert_eq!(prog.offset, 0.0);
        assert_eq!(prog.couplings.len(), 2 * 3 + 2 + 2 * 2 + 3 + 3 * 2 + 2);
    }

    #[test]
    fn single_coupling_inverts() {
        let layout = PartitionLayout::new([1, 1, 1, 1]).unwrap();
        let mut prog = rbm_to_ising(&QuadripartiteRBM::zeros(layout));
        prog.couplings[0].value = -0.25;
        let rbm = ising_to_rbm(&prog).unwrap();
        assert_eq!(rbm.weight(0)[(0, 0)], 1.0);
    }

    #[test]
    fn energy_identity_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..20 {
            let rbm = QuadripartiteRBM::random(PartitionLayout::new([3, 2, 4, 2]).unwrap(), 1.0, &mut rng);
            let prog = rbm_to_ising(&rbm);
            for _ in 0..10 {
                let x = QuadState::random(rbm.layout(), &mut rng);
                let lhs = rbm.energy(&x).unwrap();
                let rhs = prog.energy(&binary_to_spin(&x)).unwrap() + prog.offset;
                assert!((lhs - rhs).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn spin_binary_round_trip() {
        let layout = PartitionLayout::new([2, 2, 1, 3]).unwrap();
        let ones = SpinState::new(vec![1; 8]).unwrap();
        assert_eq!(spin_to_binary(&ones, &layout).unwrap(), QuadState::ones(&layout));
        let downs = SpinState::new(vec![-1; 8]).unwrap();
        assert_eq!(spin_to_binary(&downs, &layout).unwrap(), QuadState::zeros(&layout));
        assert!(SpinState::new(vec![0, 1]).is_err());
    }

    #[test]
    fn scale_composes() {
        let prog = rbm_to_ising(&QuadripartiteRBM::zeros(PartitionLayout::new([1, 1, 1, 1]).unwrap()));
        assert_eq!(apply_scale(&prog, 1.0).unwrap(), prog);
        let back = apply_scale(&apply_scale(&prog, 2.0).unwrap(), 0.5).unwrap();
        assert_eq!(back.scale, 1.0);
        assert!(apply_scale(&prog, 0.0).is_err());
        assert!(apply_scale(&prog, -1.0).is_err());
    }

    #[test]
    fn flux_signs_follow_bits() {
        let layout = PartitionLayout::new([2, 3, 1, 1]).unwrap();
        let flux = condition_to_flux(&layout, Partition::H, &[0, 0, 0], 2.0).unwrap();
        assert_eq!(flux, vec![0.0, 0.0, -2.0, -2.0, -2.0, 0.0, 0.0]);
        let flipped = condition_to_flux(&layout, Partition::H, &[0, 1, 0], 2.0).unwrap();
        let diff: Vec<usize> = (0..7).filter(|&i| flux[i] != flipped[i]).collect();
        assert_eq!(diff, vec![3]);
        assert_eq!(flipped[3], 2.0);
    }

    #[test]
    fn rejects_intra_partition_coupling() {
        let layout = PartitionLayout::new([2, 1, 1, 1]).unwrap();
        let err = IsingProgram::new(
            layout,
            vec![0.0; 5],
            vec![Coupling { i: 0, j: 1, value: 1.0 }],
            vec![0.0; 5],
            0.0,
            1.0,
        );
        assert!(matches!(err, Err(Error::Structure(_))));
    }

    #[test]
    fn json_round_trip_keeps_masks() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let layout = PartitionLayout::random_sparse([3, 3, 3, 3], 3, &mut rng).unwrap();
        let rbm = QuadripartiteRBM::random(layout, 1.0, &mut rng);
        let prog = rbm_to_ising(&rbm);
        let back = IsingProgram::from_json(&prog.to_json().unwrap()).unwrap();
        assert_eq!(back.couplings, prog.couplings);
        assert_eq!(back.delta, prog.delta);
        let rbm2 = ising_to_rbm(&back).unwrap();
        for k in 0..6 {
            let (r, c) = rbm.layout().block_shape(k);
            for i in 0..r {
                for j in 0..c {
                    assert_eq!(rbm.layout().allows(k, i, j), rbm2.layout().allows(k, i, j));
                }
            }
        }
    }
}
