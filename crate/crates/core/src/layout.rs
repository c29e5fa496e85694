//! Partition bookkeeping: the four node groups, the six coupling blocks
//! between them, and optional sparsity masks on those blocks.

use std::fmt;
use std::sync::Arc;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One of the four node groups of the machine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Partition {
    V,
    H,
    S,
    T,
}

impl Partition {
    pub const ALL: [Partition; 4] = [Partition::V, Partition::H, Partition::S, Partition::T];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Partition> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Partition::V => "v",
            Partition::H => "h",
            Partition::S => "s",
            Partition::T => "t",
        }
    }
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Partition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "v" | "V" | "0" => Ok(Partition::V),
            "h" | "H" | "1" => Ok(Partition::H),
            "s" | "S" | "2" => Ok(Partition::S),
            "t" | "T" | "3" => Ok(Partition::T),
            other => Err(Error::InvalidParameter(format!("unknown partition tag {other:?}"))),
        }
    }
}

/// The six inter-partition coupling blocks, in storage order.
/// Block `k` couples `PAIRS[k].0` (rows) to `PAIRS[k].1` (columns).
pub const PAIRS: [(usize, usize); 6] = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];

/// Index into [`PAIRS`] for the unordered pair `{p, q}`, plus whether `p` is
/// the row side of the stored block.
pub fn pair_index(p: usize, q: usize) -> Option<(usize, bool)> {
    PAIRS.iter().enumerate().find_map(|(k, &(a, b))| {
        if (a, b) == (p, q) {
            Some((k, true))
        } else if (a, b) == (q, p) {
            Some((k, false))
        } else {
            None
        }
    })
}

pub fn pair_name(k: usize) -> String {
    let (a, b) = PAIRS[k];
    format!("W{a}{b}")
}

/// A small set of partitions, stored as a bit field.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PartitionSet(u8);

impl PartitionSet {
    pub const EMPTY: PartitionSet = PartitionSet(0);
    pub const ALL: PartitionSet = PartitionSet(0b1111);

    pub fn single(p: Partition) -> Self {
        PartitionSet(1 << p.index())
    }

    pub fn contains(self, p: Partition) -> bool {
        self.0 & (1 << p.index()) != 0
    }

    pub fn with(self, p: Partition) -> Self {
        PartitionSet(self.0 | (1 << p.index()))
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = Partition> {
        Partition::ALL.into_iter().filter(move |p| self.contains(*p))
    }
}

impl FromIterator<Partition> for PartitionSet {
    fn from_iter<I: IntoIterator<Item = Partition>>(iter: I) -> Self {
        iter.into_iter().fold(PartitionSet::EMPTY, PartitionSet::with)
    }
}

/// Node counts of the four partitions plus optional coupling masks.
///
/// Masks are shared and never mutated after construction. A missing mask
/// means the block is dense.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionLayout {
    sizes: [usize; 4],
    masks: [Option<Arc<Array2<bool>>>; 6],
}

impl PartitionLayout {
    /// Dense layout. All sizes must be at least one.
    pub fn new(sizes: [usize; 4]) -> Result<Self> {
        if let Some(p) = sizes.iter().position(|&n| n == 0) {
            return Err(Error::Layout(format!(
                "partition {} has size 0",
                Partition::ALL[p]
            )));
        }
        Ok(PartitionLayout {
            sizes,
            masks: Default::default(),
        })
    }

    /// Layout with per-block masks. `masks[k]` has shape
    /// `sizes[PAIRS[k].0] x sizes[PAIRS[k].1]`.
    pub fn with_masks(sizes: [usize; 4], masks: [Option<Array2<bool>>; 6]) -> Result<Self> {
        let mut layout = Self::new(sizes)?;
        for (k, mask) in masks.into_iter().enumerate() {
            if let Some(m) = mask {
                let (a, b) = PAIRS[k];
                if m.dim() != (sizes[a], sizes[b]) {
                    return Err(Error::Layout(format!(
                        "mask for {} has shape {:?}, expected ({}, {})",
                        pair_name(k),
                        m.dim(),
                        sizes[a],
                        sizes[b]
                    )));
                }
                layout.masks[k] = Some(Arc::new(m));
            }
        }
        Ok(layout)
    }

    /// The reduced layout left after conditioning on `p`: partition `p` has
    /// size zero and its blocks vanish.
    pub fn without(&self, p: Partition) -> Self {
        let mut sizes = self.sizes;
        sizes[p.index()] = 0;
        let mut masks = self.masks.clone();
        for (k, &(a, b)) in PAIRS.iter().enumerate() {
            if a == p.index() || b == p.index() {
                masks[k] = None;
            }
        }
        PartitionLayout { sizes, masks }
    }

    pub fn sizes(&self) -> [usize; 4] {
        self.sizes
    }

    pub fn size(&self, p: Partition) -> usize {
        self.sizes[p.index()]
    }

    pub fn total(&self) -> usize {
        self.sizes.iter().sum()
    }

    /// Global index of the first node of each partition (partition-major order).
    pub fn offsets(&self) -> [usize; 4] {
        let s = self.sizes;
        [0, s[0], s[0] + s[1], s[0] + s[1] + s[2]]
    }

    /// Maps a global node index back to `(partition, local index)`.
    pub fn locate(&self, global: usize) -> Option<(Partition, usize)> {
        let off = self.offsets();
        (0..4)
            .rev()
            .find(|&p| global >= off[p] && self.sizes[p] > 0)
            .filter(|&p| global < off[p] + self.sizes[p])
            .map(|p| (Partition::ALL[p], global - off[p]))
    }

    pub fn mask(&self, k: usize) -> Option<&Array2<bool>> {
        self.masks[k].as_deref()
    }

    pub fn is_dense(&self) -> bool {
        self.masks.iter().all(Option::is_none)
    }

    /// Whether coupling `(row, col)` of block `k` is allowed.
    pub fn allows(&self, k: usize, row: usize, col: usize) -> bool {
        self.masks[k].as_ref().is_none_or(|m| m[(row, col)])
    }

    pub fn block_shape(&self, k: usize) -> (usize, usize) {
        let (a, b) = PAIRS[k];
        (self.sizes[a], self.sizes[b])
    }

    /// A random sparse layout in which every node is coupled to roughly
    /// `degree` nodes of other partitions.
    pub fn random_sparse<R: rand::Rng + ?Sized>(
        sizes: [usize; 4],
        degree: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let total: usize = sizes.iter().sum();
        let mut masks: [Option<Array2<bool>>; 6] = Default::default();
        for (k, &(a, b)) in PAIRS.iter().enumerate() {
            // Each node sees total - own size candidates; keep each with prob degree / candidates.
            let cand_a = (total - sizes[a]).max(1) as f64;
            let cand_b = (total - sizes[b]).max(1) as f64;
            let p = (degree as f64 / cand_a.min(cand_b)).min(1.0);
            masks[k] = Some(Array2::from_shape_fn((sizes[a], sizes[b]), |_| rng.random_bool(p)));
        }
        Self::with_masks(sizes, masks)
    }
}
