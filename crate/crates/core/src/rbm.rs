//! The quadripartite restricted Boltzmann machine.
//!
//! Nodes are split into four partitions `v, h, s, t` with biases `a, b, c, d`.
//! Couplings exist only between distinct partitions and are stored as six
//! blocks `W01, W02, W03, W12, W13, W23` (see [`PAIRS`]). The energy of a
//! binary configuration is
//!
//! ```text
//! E = -a.v - b.h - c.s - d.t
//!     - v W01 h - v W02 s - v W03 t - h W12 s - h W13 t - s W23 t
//! ```

use std::path::Path;

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::layout::{pair_index, pair_name, Partition, PartitionLayout, PAIRS};

pub const RBM_FORMAT_VERSION: u32 = 1;

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln σ(x)` without overflow.
#[inline]
pub fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// `ln(1 + e^x)`.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Binary configuration of the four partitions.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct QuadState {
    parts: [Vec<u8>; 4],
}

impl QuadState {
    pub fn new(parts: [Vec<u8>; 4]) -> Result<Self> {
        for (p, part) in parts.iter().enumerate() {
            if let Some(i) = part.iter().position(|&x| x > 1) {
                return Err(Error::NotBinary {
                    partition: Partition::ALL[p],
                    index: i,
                    value: part[i],
                });
            }
        }
        Ok(QuadState { parts })
    }

    pub fn zeros(layout: &PartitionLayout) -> Self {
        QuadState {
            parts: layout.sizes().map(|n| vec![0; n]),
        }
    }

    pub fn ones(layout: &PartitionLayout) -> Self {
        QuadState {
            parts: layout.sizes().map(|n| vec![1; n]),
        }
    }

    pub fn random<R: Rng + ?Sized>(layout: &PartitionLayout, rng: &mut R) -> Self {
        QuadState {
            parts: layout
                .sizes()
                .map(|n| (0..n).map(|_| rng.random_bool(0.5) as u8).collect()),
        }
    }

    /// Builds a state from a partition-major flat vector.
    pub fn from_flat(layout: &PartitionLayout, flat: &[u8]) -> Result<Self> {
        check_len("flat state", layout.total(), flat.len())?;
        let off = layout.offsets();
        let sizes = layout.sizes();
        Self::new(std::array::from_fn(|p| {
            flat[off[p]..off[p] + sizes[p]].to_vec()
        }))
    }

    pub fn to_flat(&self) -> Vec<u8> {
        self.parts.concat()
    }

    pub fn part(&self, p: Partition) -> &[u8] {
        &self.parts[p.index()]
    }

    pub fn part_mut(&mut self, p: Partition) -> &mut [u8] {
        &mut self.parts[p.index()]
    }

    pub fn parts(&self) -> &[Vec<u8>; 4] {
        &self.parts
    }

    pub fn set_part(&mut self, p: Partition, bits: &[u8]) -> Result<()> {
        check_len(p.name(), self.parts[p.index()].len(), bits.len())?;
        if let Some(i) = bits.iter().position(|&x| x > 1) {
            return Err(Error::NotBinary {
                partition: p,
                index: i,
                value: bits[i],
            });
        }
        self.parts[p.index()].copy_from_slice(bits);
        Ok(())
    }

    pub fn sizes(&self) -> [usize; 4] {
        std::array::from_fn(|p| self.parts[p].len())
    }

    pub fn matches(&self, layout: &PartitionLayout) -> bool {
        self.sizes() == layout.sizes()
    }

    pub(crate) fn check(&self, layout: &PartitionLayout) -> Result<()> {
        for p in Partition::ALL {
            check_len(
                &format!("state partition {p}"),
                layout.size(p),
                self.parts[p.index()].len(),
            )?;
        }
        Ok(())
    }
}

/// Biases and coupling blocks, laid out like the machine itself. Also used
/// for gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameters {
    pub biases: [Vec<f64>; 4],
    pub weights: [Array2<f64>; 6],
}

impl Parameters {
    pub fn zeros(layout: &PartitionLayout) -> Self {
        Parameters {
            biases: layout.sizes().map(|n| vec![0.0; n]),
            weights: std::array::from_fn(|k| Array2::zeros(layout.block_shape(k))),
        }
    }

    pub fn len(&self) -> usize {
        self.biases.iter().map(Vec::len).sum::<usize>()
            + self.weights.iter().map(|w| w.len()).sum::<usize>()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All values, biases first (partition order) then blocks (row-major).
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        for b in &self.biases {
            out.extend_from_slice(b);
        }
        for w in &self.weights {
            out.extend(w.iter().copied());
        }
        out
    }

    pub fn get_flat(&self, mut idx: usize) -> f64 {
        for b in &self.biases {
            if idx < b.len() {
                return b[idx];
            }
            idx -= b.len();
        }
        for w in &self.weights {
            if idx < w.len() {
                let cols = w.ncols();
                return w[(idx / cols, idx % cols)];
            }
            idx -= w.len();
        }
        panic!("parameter index out of range");
    }

    pub fn set_flat(&mut self, mut idx: usize, value: f64) {
        for b in &mut self.biases {
            if idx < b.len() {
                b[idx] = value;
                return;
            }
            idx -= b.len();
        }
        for w in &mut self.weights {
            if idx < w.len() {
                let cols = w.ncols();
                w[(idx / cols, idx % cols)] = value;
                return;
            }
            idx -= w.len();
        }
        panic!("parameter index out of range");
    }

    pub fn max_abs(&self) -> f64 {
        self.flatten().iter().fold(0.0f64, |m, x| m.max(x.abs()))
    }

    pub fn norm(&self) -> f64 {
        self.flatten().iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn all_finite(&self) -> bool {
        self.biases.iter().all(|b| b.iter().all(|x| x.is_finite()))
            && self.weights.iter().all(|w| w.iter().all(|x| x.is_finite()))
    }
}

/// A quadripartite RBM. Parameters are validated on construction: shapes
/// follow the layout, every entry is finite and masked couplings are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadripartiteRBM {
    layout: PartitionLayout,
    params: Parameters,
}

impl QuadripartiteRBM {
    pub fn new(layout: PartitionLayout, params: Parameters) -> Result<Self> {
        for p in Partition::ALL {
            check_len(
                &format!("bias of partition {p}"),
                layout.size(p),
                params.biases[p.index()].len(),
            )?;
            if params.biases[p.index()].iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite(format!("bias of partition {p}")));
            }
        }
        for (k, w) in params.weights.iter().enumerate() {
            let (r, c) = layout.block_shape(k);
            if w.dim() != (r, c) {
                return Err(Error::Layout(format!(
                    "{} has shape {:?}, expected ({r}, {c})",
                    pair_name(k),
                    w.dim()
                )));
            }
            for ((i, j), &x) in w.indexed_iter() {
                if !layout.allows(k, i, j) {
                    // masked entries must be exactly zero; this also rejects NaN sentinels
                    if x != 0.0 {
                        return Err(Error::MaskedCoupling {
                            pair: pair_name(k),
                            row: i,
                            col: j,
                            value: x,
                        });
                    }
                } else if !x.is_finite() {
                    return Err(Error::NonFinite(format!("{} entry ({i}, {j})", pair_name(k))));
                }
            }
        }
        Ok(QuadripartiteRBM { layout, params })
    }

    pub fn zeros(layout: PartitionLayout) -> Self {
        let params = Parameters::zeros(&layout);
        QuadripartiteRBM { layout, params }
    }

    /// Every allowed parameter drawn from `N(0, std^2)`.
    pub fn random<R: Rng + ?Sized>(layout: PartitionLayout, std: f64, rng: &mut R) -> Self {
        let normal = Normal::new(0.0, std).expect("std must be finite and non-negative");
        let mut params = Parameters::zeros(&layout);
        for b in params.biases.iter_mut() {
            b.iter_mut().for_each(|x| *x = normal.sample(rng));
        }
        for (k, w) in params.weights.iter_mut().enumerate() {
            for ((i, j), x) in w.indexed_iter_mut() {
                // draw regardless of the mask so dense and sparse instances share a stream
                let value = normal.sample(rng);
                if layout.allows(k, i, j) {
                    *x = value;
                }
            }
        }
        QuadripartiteRBM { layout, params }
    }

    pub fn layout(&self) -> &PartitionLayout {
        &self.layout
    }

    pub fn params(&self) -> &Parameters {
        &self.params
    }

    pub fn into_params(self) -> Parameters {
        self.params
    }

    pub fn bias(&self, p: Partition) -> &[f64] {
        &self.params.biases[p.index()]
    }

    /// Coupling block `k` (see [`PAIRS`]).
    pub fn weight(&self, k: usize) -> &Array2<f64> {
        &self.params.weights[k]
    }

    pub fn n_nodes(&self) -> usize {
        self.layout.total()
    }

    /// Replaces the parameters, re-running validation.
    pub fn with_params(&self, params: Parameters) -> Result<Self> {
        Self::new(self.layout.clone(), params)
    }

    /// All parameters multiplied by `factor`, i.e. the energy scaled by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut params = self.params.clone();
        params.biases.iter_mut().for_each(|b| b.iter_mut().for_each(|x| *x *= factor));
        params.weights.iter_mut().for_each(|w| w.mapv_inplace(|x| x * factor));
        QuadripartiteRBM {
            layout: self.layout.clone(),
            params,
        }
    }

    /// `params += step * delta` on allowed entries only. Zero increments
    /// leave entries untouched, so a zero step is a bit-exact no-op.
    pub(crate) fn add_scaled(&mut self, delta: &Parameters, step: f64) {
        let add = |x: &mut f64, dx: f64| {
            let inc = step * dx;
            if inc != 0.0 {
                *x += inc;
            }
        };
        for (b, d) in self.params.biases.iter_mut().zip(&delta.biases) {
            b.iter_mut().zip(d).for_each(|(x, &dx)| add(x, dx));
        }
        for (k, (w, d)) in self.params.weights.iter_mut().zip(&delta.weights).enumerate() {
            for ((i, j), x) in w.indexed_iter_mut() {
                if self.layout.allows(k, i, j) {
                    add(x, d[(i, j)]);
                }
            }
        }
    }

    /// Energy of a configuration.
    pub fn energy(&self, state: &QuadState) -> Result<f64> {
        state.check(&self.layout)?;
        Ok(self.energy_unchecked(state))
    }

    pub(crate) fn energy_unchecked(&self, state: &QuadState) -> f64 {
        let mut e = 0.0;
        for p in 0..4 {
            let x = &state.parts[p];
            for (b, &xi) in self.params.biases[p].iter().zip(x) {
                if xi != 0 {
                    e -= b;
                }
            }
        }
        for (k, &(a, b)) in PAIRS.iter().enumerate() {
            let w = &self.params.weights[k];
            let xa = &state.parts[a];
            let xb = &state.parts[b];
            for (i, &xi) in xa.iter().enumerate() {
                if xi == 0 {
                    continue;
                }
                for (j, &xj) in xb.iter().enumerate() {
                    if xj != 0 {
                        e -= w[(i, j)];
                    }
                }
            }
        }
        e
    }

    /// Input field on partition `p` from the other three partitions
    /// (without the bias), e.g. `B_i = W01_ji v_j + W12_ij s_j + W13_ij t_j`.
    pub fn activation_field(&self, state: &QuadState, p: Partition) -> Result<Vec<f64>> {
        state.check(&self.layout)?;
        Ok(self.field_unchecked(state, p))
    }

    pub(crate) fn field_unchecked(&self, state: &QuadState, p: Partition) -> Vec<f64> {
        let pi = p.index();
        let mut field = vec![0.0; self.layout.size(p)];
        for q in 0..4 {
            if q == pi {
                continue;
            }
            let (k, p_is_row) = pair_index(pi, q).expect("distinct partitions form a pair");
            let w = &self.params.weights[k];
            let xq = &state.parts[q];
            if p_is_row {
                for (i, f) in field.iter_mut().enumerate() {
                    let row = w.row(i);
                    *f += xq
                        .iter()
                        .zip(row.iter())
                        .filter(|(&x, _)| x != 0)
                        .map(|(_, w)| w)
                        .sum::<f64>();
                }
            } else {
                for (j, &x) in xq.iter().enumerate() {
                    if x != 0 {
                        field
                            .iter_mut()
                            .zip(w.row(j).iter())
                            .for_each(|(f, w)| *f += w);
                    }
                }
            }
        }
        field
    }

    /// `p(x_i = 1 | other partitions)` for every node of partition `p`.
    pub fn conditional_prob_one(&self, state: &QuadState, p: Partition) -> Result<Vec<f64>> {
        let field = self.activation_field(state, p)?;
        Ok(field
            .iter()
            .zip(self.bias(p))
            .map(|(f, b)| sigmoid(b + f))
            .collect())
    }

    /// Conditions on partition `p` taking the value `bits`: the returned
    /// machine has `p` removed and the bias of every other partition shifted
    /// by its coupling to the fixed bits. Couplings among the remaining
    /// partitions are unchanged.
    pub fn fold_partition(&self, p: Partition, bits: &[u8]) -> Result<QuadripartiteRBM> {
        check_len(&format!("condition for partition {p}"), self.layout.size(p), bits.len())?;
        if let Some(i) = bits.iter().position(|&x| x > 1) {
            return Err(Error::NotBinary {
                partition: p,
                index: i,
                value: bits[i],
            });
        }
        let mut fixed = QuadState::zeros(&self.layout);
        fixed.parts[p.index()].copy_from_slice(bits);
        let mut params = self.params.clone();
        for q in Partition::ALL {
            if q == p {
                continue;
            }
            let shift = self.field_from(&fixed, q, p);
            params.biases[q.index()]
                .iter_mut()
                .zip(shift)
                .for_each(|(b, s)| *b += s);
        }
        params.biases[p.index()].clear();
        for (k, &(a, b)) in PAIRS.iter().enumerate() {
            if a == p.index() || b == p.index() {
                let shape = match a == p.index() {
                    true => (0, self.layout.size(Partition::ALL[b])),
                    false => (self.layout.size(Partition::ALL[a]), 0),
                };
                params.weights[k] = Array2::zeros(shape);
            }
        }
        Ok(QuadripartiteRBM {
            layout: self.layout.without(p),
            params,
        })
    }

    /// Folds the visible partition; see [`fold_partition`](Self::fold_partition).
    pub fn fold_condition(&self, v_fixed: &[u8]) -> Result<QuadripartiteRBM> {
        self.fold_partition(Partition::V, v_fixed)
    }

    /// Field on partition `target` contributed by partition `source` alone.
    fn field_from(&self, state: &QuadState, target: Partition, source: Partition) -> Vec<f64> {
        let (k, target_is_row) =
            pair_index(target.index(), source.index()).expect("distinct partitions");
        let w = &self.params.weights[k];
        let xs = &state.parts[source.index()];
        (0..self.layout.size(target))
            .map(|i| {
                xs.iter()
                    .enumerate()
                    .filter(|(_, &x)| x != 0)
                    .map(|(j, _)| if target_is_row { w[(i, j)] } else { w[(j, i)] })
                    .sum()
            })
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&RbmFile::from(self))?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let file: RbmFile = serde_json::from_str(s)?;
        file.into_rbm()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_atomic(path, self.to_json()?.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// On-disk container for a machine.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub(crate) struct RbmFile {
    pub format_version: u32,
    pub sizes: [usize; 4],
    /// Row-major 0/1 masks, `null` for dense blocks.
    pub masks: Vec<Option<Vec<u8>>>,
    pub biases: [Vec<f64>; 4],
    /// Row-major block values.
    pub weights: Vec<Vec<f64>>,
}

impl From<&QuadripartiteRBM> for RbmFile {
    fn from(rbm: &QuadripartiteRBM) -> Self {
        RbmFile {
            format_version: RBM_FORMAT_VERSION,
            sizes: rbm.layout.sizes(),
            masks: (0..6)
                .map(|k| rbm.layout.mask(k).map(|m| m.iter().map(|&b| b as u8).collect()))
                .collect(),
            biases: rbm.params.biases.clone(),
            weights: rbm.params.weights.iter().map(|w| w.iter().copied().collect()).collect(),
        }
    }
}

impl RbmFile {
    pub fn into_rbm(self) -> Result<QuadripartiteRBM> {
        if self.format_version != RBM_FORMAT_VERSION {
            return Err(Error::FormatVersion {
                found: self.format_version,
                supported: RBM_FORMAT_VERSION,
            });
        }
        check_len("mask list", 6, self.masks.len())?;
        check_len("weight list", 6, self.weights.len())?;
        let mut masks: [Option<Array2<bool>>; 6] = Default::default();
        for (k, m) in self.masks.into_iter().enumerate() {
            if let Some(m) = m {
                let (a, b) = PAIRS[k];
                let shape = (self.sizes[a], self.sizes[b]);
                check_len(&format!("mask {}", pair_name(k)), shape.0 * shape.1, m.len())?;
                masks[k] = Some(
                    Array2::from_shape_vec(shape, m.into_iter().map(|x| x != 0).collect())
                        .expect("length checked"),
                );
            }
        }
        let layout = PartitionLayout::with_masks(self.sizes, masks)?;
        let mut weights: [Array2<f64>; 6] = Default::default();
        for (k, w) in self.weights.into_iter().enumerate() {
            let shape = layout.block_shape(k);
            check_len(&pair_name(k), shape.0 * shape.1, w.len())?;
            weights[k] = Array2::from_shape_vec(shape, w).expect("length checked");
        }
        QuadripartiteRBM::new(
            layout,
            Parameters {
                biases: self.biases,
                weights,
            },
        )
    }
}
