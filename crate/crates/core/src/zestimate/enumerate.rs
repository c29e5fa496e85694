//! Exhaustive enumeration of all `2^N` configurations.
//!
//! Configurations are visited as partition-major bit masks: bit
//! `offset[p] + i` is node `i` of partition `p`. The outer loop runs over
//! `v` (in parallel, reduced in index order), the innermost partition `t`
//! is expanded from a table so each state costs O(1).

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::layout::{pair_index, Partition};
use crate::rbm::{softplus, QuadState, QuadripartiteRBM};

/// Default cap on the number of nodes for any enumeration.
pub const DEFAULT_ENUMERATION_CAP: usize = 26;

pub(crate) fn check_cap(rbm: &QuadripartiteRBM, cap: usize) -> Result<()> {
    let nodes = rbm.n_nodes();
    if nodes > cap || nodes > 62 {
        return Err(Error::EnumerationCap { nodes, cap });
    }
    Ok(())
}

/// Numerically stable running `ln sum exp`.
#[derive(Debug, Clone, Copy)]
pub struct LogSumExp {
    max: f64,
    sum: f64,
}

impl Default for LogSumExp {
    fn default() -> Self {
        LogSumExp {
            max: f64::NEG_INFINITY,
            sum: 0.0,
        }
    }
}

impl LogSumExp {
    #[inline]
    pub fn add(&mut self, x: f64) {
        if x <= self.max {
            self.sum += (x - self.max).exp();
        } else {
            self.sum = self.sum * (self.max - x).exp() + 1.0;
            self.max = x;
        }
    }

    pub fn merge(mut self, other: LogSumExp) -> LogSumExp {
        if other.max == f64::NEG_INFINITY {
            return self;
        }
        if self.max == f64::NEG_INFINITY {
            return other;
        }
        if other.max <= self.max {
            self.sum += other.sum * (other.max - self.max).exp();
            self
        } else {
            LogSumExp {
                max: other.max,
                sum: other.sum + self.sum * (self.max - other.max).exp(),
            }
        }
    }

    pub fn value(&self) -> f64 {
        self.max + self.sum.ln()
    }
}

/// Dense coupling tables indexed by target partition and source partition:
/// `tables[p][q][j * n_p + i]` is the coupling between node `j` of `q` and
/// node `i` of `p`.
struct Tables {
    sizes: [usize; 4],
    biases: [Vec<f64>; 4],
    couple: [[Vec<f64>; 4]; 4],
}

impl Tables {
    fn new(rbm: &QuadripartiteRBM) -> Self {
        let sizes = rbm.layout().sizes();
        let couple = std::array::from_fn(|p| {
            std::array::from_fn(|q| {
                if p == q {
                    return Vec::new();
                }
                let (k, p_is_row) = pair_index(p, q).unwrap();
                let w = rbm.weight(k);
                let mut t = vec![0.0; sizes[p] * sizes[q]];
                for j in 0..sizes[q] {
                    for i in 0..sizes[p] {
                        t[j * sizes[p] + i] = if p_is_row { w[(i, j)] } else { w[(j, i)] };
                    }
                }
                t
            })
        });
        Tables {
            sizes,
            biases: std::array::from_fn(|p| rbm.bias(Partition::ALL[p]).to_vec()),
            couple,
        }
    }

    /// Adds the field that bits `mask` of partition `q` put on partition `p`.
    #[inline]
    fn add_field(&self, p: usize, q: usize, mask: u64, field: &mut [f64]) {
        let np = self.sizes[p];
        let table = &self.couple[p][q];
        let mut m = mask;
        while m != 0 {
            let j = m.trailing_zeros() as usize;
            m &= m - 1;
            field
                .iter_mut()
                .zip(&table[j * np..(j + 1) * np])
                .for_each(|(f, w)| *f += w);
        }
    }
}

#[inline]
fn dot_mask(values: &[f64], mask: u64) -> f64 {
    let mut m = mask;
    let mut acc = 0.0;
    while m != 0 {
        let j = m.trailing_zeros() as usize;
        m &= m - 1;
        acc += values[j];
    }
    acc
}

/// Walks every `(v, h, s)` prefix, handing the visitor the prefix energy and
/// the total field (bias included) on `t`. Per-`v` accumulators are reduced in
/// index order so the result is deterministic.
fn fold_prefixes<A, I, V, C>(rbm: &QuadripartiteRBM, init: I, visit: V, combine: C) -> A
where
    A: Send,
    I: Fn() -> A + Sync,
    V: Fn(&mut A, [u64; 3], f64, &[f64]) + Sync,
    C: Fn(A, A) -> A,
{
    let tab = Tables::new(rbm);
    let [nv, nh, ns, nt] = tab.sizes;
    let parts: Vec<A> = (0..1u64 << nv)
        .into_par_iter()
        .map(|v| {
            let mut acc = init();
            let ev = -dot_mask(&tab.biases[0], v);
            let mut fh_v = tab.biases[1].clone();
            tab.add_field(1, 0, v, &mut fh_v);
            let mut fs_v = tab.biases[2].clone();
            tab.add_field(2, 0, v, &mut fs_v);
            let mut ft_v = tab.biases[3].clone();
            tab.add_field(3, 0, v, &mut ft_v);
            let mut fs_vh = vec![0.0; ns];
            let mut ft_vh = vec![0.0; nt];
            let mut ft = vec![0.0; nt];
            for h in 0..1u64 << nh {
                let eh = ev - dot_mask(&fh_v, h);
                fs_vh.copy_from_slice(&fs_v);
                tab.add_field(2, 1, h, &mut fs_vh);
                ft_vh.copy_from_slice(&ft_v);
                tab.add_field(3, 1, h, &mut ft_vh);
                for s in 0..1u64 << ns {
                    let es = eh - dot_mask(&fs_vh, s);
                    ft.copy_from_slice(&ft_vh);
                    tab.add_field(3, 2, s, &mut ft);
                    visit(&mut acc, [v, h, s], es, &ft);
                }
            }
            acc
        })
        .collect();
    let mut iter = parts.into_iter();
    let first = iter.next().expect("at least one v configuration");
    iter.fold(first, combine)
}

/// Visits every configuration with its energy. `visit` receives the
/// partition-major global bit mask and the energy.
pub fn fold_states<A, I, V, C>(
    rbm: &QuadripartiteRBM,
    cap: usize,
    init: I,
    visit: V,
    combine: C,
) -> Result<A>
where
    A: Send,
    I: Fn() -> A + Sync,
    V: Fn(&mut A, u64, f64) + Sync,
    C: Fn(A, A) -> A,
{
    check_cap(rbm, cap)?;
    let sizes = rbm.layout().sizes();
    let off = rbm.layout().offsets();
    let nt = sizes[3];
    Ok(fold_prefixes(
        rbm,
        || (init(), vec![0.0; 1usize << nt]),
        |(acc, tvals), [v, h, s], es, ft| {
            // tvals[m] = -sum_{i in m} ft_i, built from the lowest set bit
            tvals[0] = 0.0;
            for m in 1..tvals.len() {
                let low = m.trailing_zeros() as usize;
                tvals[m] = tvals[m & (m - 1)] - ft[low];
            }
            let base = v << off[0] | h << off[1] | s << off[2];
            for (t, tv) in tvals.iter().enumerate() {
                visit(acc, base | (t as u64) << off[3], es + tv);
            }
        },
        |(a, ta), (b, _)| (combine(a, b), ta),
    )
    .0)
}

/// Decodes a partition-major global mask into a state.
pub fn mask_to_state(rbm: &QuadripartiteRBM, mask: u64) -> QuadState {
    let layout = rbm.layout();
    let off = layout.offsets();
    let sizes = layout.sizes();
    QuadState::new(std::array::from_fn(|p| {
        (0..sizes[p])
            .map(|i| ((mask >> (off[p] + i)) & 1) as u8)
            .collect()
    }))
    .expect("bits are binary")
}

pub fn state_to_mask(rbm: &QuadripartiteRBM, state: &QuadState) -> u64 {
    let off = rbm.layout().offsets();
    let mut mask = 0u64;
    for p in 0..4 {
        for (i, &x) in state.parts()[p].iter().enumerate() {
            if x != 0 {
                mask |= 1 << (off[p] + i);
            }
        }
    }
    mask
}

/// `ln Z(beta)`, summing the innermost partition analytically.
pub fn ln_z_fast(rbm: &QuadripartiteRBM, beta: f64, cap: usize) -> Result<f64> {
    check_cap(rbm, cap)?;
    let lse = fold_prefixes(
        rbm,
        LogSumExp::default,
        |acc, _, es, ft| {
            let tail: f64 = ft.iter().map(|f| softplus(beta * f)).sum();
            acc.add(-beta * es + tail);
        },
        LogSumExp::merge,
    );
    Ok(lse.value())
}

/// `ln Z(beta)` by visiting every state individually.
pub fn ln_z_full(rbm: &QuadripartiteRBM, beta: f64, cap: usize) -> Result<f64> {
    let lse = fold_states(
        rbm,
        cap,
        LogSumExp::default,
        |acc, _, e| acc.add(-beta * e),
        LogSumExp::merge,
    )?;
    Ok(lse.value())
}

/// Minimum and maximum energy over all states.
pub fn energy_range(rbm: &QuadripartiteRBM, cap: usize) -> Result<(f64, f64)> {
    fold_states(
        rbm,
        cap,
        || (f64::INFINITY, f64::NEG_INFINITY),
        |acc, _, e| {
            acc.0 = acc.0.min(e);
            acc.1 = acc.1.max(e);
        },
        |a, b| (a.0.min(b.0), a.1.max(b.1)),
    )
}
