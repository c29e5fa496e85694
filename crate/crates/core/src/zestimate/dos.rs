//! Energy histograms ("density of states") from enumeration or samples.

use serde::{Deserialize, Serialize};

use super::enumerate;
use crate::error::{Error, Result};
use crate::gibbs::SampleBatch;
use crate::rbm::QuadripartiteRBM;

/// Where the energies come from.
#[derive(Debug, Clone, Copy)]
pub enum DosSource<'a> {
    /// Every state weighted by its Boltzmann probability at `beta = 1`.
    Exact,
    Samples(&'a SampleBatch),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityOfStates {
    pub bin_edges: Vec<f64>,
    pub probabilities: Vec<f64>,
    /// Raw counts for sampled histograms; empty for exact ones.
    pub counts: Vec<u64>,
    pub normalized: bool,
}

impl DensityOfStates {
    pub fn n_bins(&self) -> usize {
        self.probabilities.len()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_left,bin_right,probability\n");
        for (i, p) in self.probabilities.iter().enumerate() {
            out.push_str(&format!("{},{},{}\n", self.bin_edges[i], self.bin_edges[i + 1], p));
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Mean energy of the histogram, taking bin centres.
    pub fn mean_energy(&self) -> f64 {
        self.probabilities
            .iter()
            .enumerate()
            .map(|(i, p)| p * 0.5 * (self.bin_edges[i] + self.bin_edges[i + 1]))
            .sum()
    }
}

/// Freedman-Diaconis bin width `2 IQR n^(-1/3)`. `None` when the
/// interquartile range is zero or there are fewer than two values.
pub fn fd_bin_width(values: &[f64]) -> Option<f64> {
    if values.len() < 2 {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let q = |f: f64| {
        let pos = f * (v.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
    };
    let iqr = q(0.75) - q(0.25);
    let width = 2.0 * iqr / (v.len() as f64).cbrt();
    (width > 0.0 && width.is_finite()).then_some(width)
}

/// `n_bins` equal-width bins on `[lo, hi]`. A zero-width range is widened
/// by one unit so every value still lands in a bin.
pub fn uniform_edges(lo: f64, hi: f64, n_bins: usize) -> Result<Vec<f64>> {
    if n_bins == 0 || !lo.is_finite() || !hi.is_finite() || hi < lo {
        return Err(Error::InvalidParameter(format!(
            "cannot build {n_bins} bins on [{lo}, {hi}]"
        )));
    }
    let (lo, hi) = if hi == lo { (lo - 0.5, hi + 0.5) } else { (lo, hi) };
    let w = (hi - lo) / n_bins as f64;
    let mut edges: Vec<f64> = (0..n_bins).map(|i| lo + w * i as f64).collect();
    edges.push(hi);
    Ok(edges)
}

/// Shared edges for comparing a sample histogram with the exact one: the
/// exact energy range split into bins of the Freedman-Diaconis width of the
/// sample energies.
pub fn comparison_edges(rbm: &QuadripartiteRBM, sample_energies: &[f64]) -> Result<Vec<f64>> {
    let (lo, hi) = enumerate::energy_range(rbm, enumerate::DEFAULT_ENUMERATION_CAP)?;
    let n_bins = match fd_bin_width(sample_energies) {
        Some(w) => (((hi - lo) / w).ceil() as usize).clamp(1, 10_000),
        None => 1,
    };
    uniform_edges(lo, hi, n_bins)
}

fn bin_of(edges: &[f64], e: f64) -> usize {
    // values outside the range go to the end bins
    let n = edges.len() - 1;
    edges[1..n].partition_point(|&x| x <= e)
}

fn check_edges(edges: &[f64]) -> Result<()> {
    if edges.len() < 2 || edges.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidParameter(
            "bin edges must be strictly increasing with at least two entries".into(),
        ));
    }
    Ok(())
}

/// Normalized energy histogram on the given edges.
pub fn density_of_states(
    rbm: &QuadripartiteRBM,
    source: DosSource<'_>,
    edges: &[f64],
) -> Result<DensityOfStates> {
    check_edges(edges)?;
    let n_bins = edges.len() - 1;
    match source {
        DosSource::Exact => {
            let ln_z = enumerate::ln_z_fast(rbm, 1.0, enumerate::DEFAULT_ENUMERATION_CAP)?;
            let probabilities = enumerate::fold_states(
                rbm,
                enumerate::DEFAULT_ENUMERATION_CAP,
                || vec![0.0; n_bins],
                |acc, _, e| acc[bin_of(edges, e)] += (-e - ln_z).exp(),
                |mut a, b| {
                    a.iter_mut().zip(&b).for_each(|(x, y)| *x += y);
                    a
                },
            )?;
            Ok(DensityOfStates {
                bin_edges: edges.to_vec(),
                probabilities,
                counts: Vec::new(),
                normalized: true,
            })
        }
        DosSource::Samples(batch) => {
            let energies = batch.energies(rbm)?;
            Ok(histogram(&energies, edges))
        }
    }
}

/// Normalized histogram of raw values on the given edges.
pub fn histogram(values: &[f64], edges: &[f64]) -> DensityOfStates {
    let n_bins = edges.len() - 1;
    let mut counts = vec![0u64; n_bins];
    for &e in values {
        counts[bin_of(edges, e)] += 1;
    }
    let n = values.len().max(1) as f64;
    DensityOfStates {
        bin_edges: edges.to_vec(),
        probabilities: counts.iter().map(|&c| c as f64 / n).collect(),
        counts,
        normalized: true,
    }
}

/// Total-variation distance `0.5 sum |p - q|` between histograms that share
/// identical edges.
pub fn tv_distance(p: &DensityOfStates, q: &DensityOfStates) -> Result<f64> {
    if p.bin_edges != q.bin_edges {
        return Err(Error::InvalidParameter(
            "histograms must share identical bin edges".into(),
        ));
    }
    Ok(0.5
        * p.probabilities
            .iter()
            .zip(&q.probabilities)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gibbs::SampleSource;
    use crate::layout::PartitionLayout;
    use crate::rbm::QuadState;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn exact_probabilities_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let rbm = QuadripartiteRBM::random(PartitionLayout::new([3, 2, 2, 3]).unwrap(), 1.0, &mut rng);
        let (lo, hi) = enumerate::energy_range(&rbm, 26).unwrap();
        let edges = uniform_edges(lo, hi, 17).unwrap();
        let dos = density_of_states(&rbm, DosSource::Exact, &edges).unwrap();
        assert!((dos.probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(dos.bin_edges.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn fd_width_of_known_values() {
        let v: Vec<f64> = (0..=8).map(f64::from).collect();
        // IQR = 4, n = 9
        let w = fd_bin_width(&v).unwrap();
        assert!((w - 8.0 / 9f64.cbrt()).abs() < 1e-12);
        assert!(fd_bin_width(&[1.0, 1.0, 1.0]).is_none());
    }

    #[test]
    fn histogram_counts_land_in_bins() {
        let edges = vec![0.0, 1.0, 2.0, 3.0];
        let h = histogram(&[0.0, 0.5, 1.0, 2.9, 3.0, -1.0], &edges);
        assert_eq!(h.counts, vec![3, 1, 2]);
    }

    #[test]
    fn tv_needs_matching_edges() {
        let a = histogram(&[0.5], &[0.0, 1.0]);
        let b = histogram(&[0.5], &[0.0, 2.0]);
        assert!(tv_distance(&a, &b).is_err());
        let c = histogram(&[0.5, 1.5], &[0.0, 1.0, 2.0]);
        let d = histogram(&[0.5, 0.5], &[0.0, 1.0, 2.0]);
        assert!((tv_distance(&c, &d).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn csv_has_header_and_rows() {
        let layout = PartitionLayout::new([1, 1, 1, 1]).unwrap();
        let rbm = QuadripartiteRBM::zeros(layout.clone());
        let batch = SampleBatch::new(vec![QuadState::zeros(&layout)], SampleSource::Data, 0, 0).unwrap();
        let dos = density_of_states(&rbm, DosSource::Samples(&batch), &[-1.0, 0.5, 1.0]).unwrap();
        let csv = dos.to_csv();
        assert_eq!(csv.lines().next(), Some("bin_left,bin_right,probability"));
        assert_eq!(csv.lines().count(), 3);
    }
}
