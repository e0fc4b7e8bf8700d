//! Histogram estimates of sample distributions and divergences between them.
//!
//! Both divergences compare two histograms on the same grid:
//!
//! - [`kl_divergence`]: `KL(p || q) = sum p_i ln(p_i / q_i)` after mixing a
//!   virtual mass `reg` into every bin (`p~_i = (p_i + reg) / (1 + B reg)`),
//!   which keeps it finite when the supports disagree.
//! - [`fisher_metric`]: the Fisher-Rao geodesic distance between discrete
//!   distributions, `2 arccos(sum sqrt(p_i q_i))`, which lies in `[0, pi]`.

use std::fmt;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::Matrix;

/// Virtual per-bin mass used by [`kl_divergence`].
pub const KL_REGULARIZATION: f64 = 1e-32;

/// Uniform bins `[lo, hi)` along one axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisBins {
    pub lo: f64,
    pub hi: f64,
    pub bins: usize,
}

impl AxisBins {
    /// Left edge of bin `i`; `edge(bins) == hi`.
    pub fn edge(&self, i: usize) -> f64 {
        if i == self.bins {
            return self.hi;
        }
        self.lo + i as f64 * (self.hi - self.lo) / self.bins as f64
    }

    /// Bin holding `x`, or `None` outside `[lo, hi)`. A value on an interior
    /// edge belongs to the bin on its right.
    pub fn locate(&self, x: f64) -> Option<usize> {
        if !(x >= self.lo && x < self.hi) {
            return None;
        }
        let guess = ((x - self.lo) / (self.hi - self.lo) * self.bins as f64) as usize;
        let mut i = guess.min(self.bins - 1);
        // settle rounding at the edges against the exact edge formula
        while i > 0 && x < self.edge(i) {
            i -= 1;
        }
        while i + 1 < self.bins && x >= self.edge(i + 1) {
            i += 1;
        }
        Some(i)
    }
}

/// Per-dimension binning of a histogram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub axes: Vec<AxisBins>,
}

impl GridSpec {
    pub fn new(axes: Vec<AxisBins>) -> Result<Self> {
        if axes.is_empty() {
            return Err(Error::InvalidArgument("grid needs at least one axis".into()));
        }
        for a in &axes {
            if a.bins == 0 || !(a.hi > a.lo) || !a.lo.is_finite() || !a.hi.is_finite() {
                return Err(Error::InvalidArgument(format!("bad axis {a:?}")));
            }
        }
        Ok(Self { axes })
    }

    /// `[-9, 9)` on every axis, with 128 / 64 / 32 / 16 bins per axis in 1-4 dimensions.
    pub fn for_gaussians(dim: usize) -> Result<Self> {
        let bins = match dim {
            1 => 128,
            2 => 64,
            3 => 32,
            4 => 16,
            _ => return Err(Error::InvalidArgument(format!("no Gaussian binning for dim {dim}"))),
        };
        Self::new(vec![AxisBins { lo: -9.0, hi: 9.0, bins }; dim])
    }

    /// Per-axis data extent widened by `pad` times its span on each side.
    pub fn from_extent(points: &Matrix, bins: usize, pad: f64) -> Result<Self> {
        if points.rows() == 0 {
            return Err(Error::EmptyDataset);
        }
        let axes = (0..points.cols())
            .map(|c| {
                let (lo, hi) = points
                    .iter_rows()
                    .map(|r| r[c])
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)));
                let span = (hi - lo).max(1e-12);
                AxisBins {
                    lo: lo - pad * span,
                    hi: hi + pad * span,
                    bins,
                }
            })
            .collect();
        Self::new(axes)
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn total_bins(&self) -> usize {
        self.axes.iter().map(|a| a.bins).product()
    }

    /// Row-major flat bin index of a point (last axis fastest).
    pub fn flat_index(&self, point: &[f64]) -> Option<usize> {
        let mut idx = 0;
        for (a, &x) in self.axes.iter().zip(point) {
            idx = idx * a.bins + a.locate(x)?;
        }
        Some(idx)
    }
}

impl fmt::Display for GridSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .axes
            .iter()
            .map(|a| format!("[{}:{}]x{}", a.lo, a.hi, a.bins))
            .collect();
        write!(f, "{}", parts.join(";"))
    }
}

/// Normalized histogram over in-range samples.
#[derive(Debug, Clone, PartialEq)]
pub struct HistogramGrid {
    pub spec: GridSpec,
    pub mass: Vec<f64>,
    pub total_in_range: usize,
    pub total_dropped: usize,
}

impl HistogramGrid {
    pub fn dropped_fraction(&self) -> f64 {
        let total = self.total_in_range + self.total_dropped;
        if total == 0 {
            0.0
        } else {
            self.total_dropped as f64 / total as f64
        }
    }

    fn check_same_grid(&self, other: &HistogramGrid) -> Result<()> {
        if self.spec != other.spec {
            return Err(Error::GridMismatch(format!("{} vs {}", self.spec, other.spec)));
        }
        Ok(())
    }

    /// Text dump: axis lines with their bin edges, the sample counts, then
    /// one mass per line in flat (last axis fastest) order.
    pub fn write_dump(&self, path: &Path) -> Result<()> {
        let mut s = String::from("# evl-histogram\n");
        let _ = writeln!(s, "dims {}", self.spec.dim());
        for (k, a) in self.spec.axes.iter().enumerate() {
            let edges: Vec<String> = (0..=a.bins).map(|i| a.edge(i).to_string()).collect();
            let _ = writeln!(s, "edges {k} {}", edges.join(" "));
        }
        let _ = writeln!(s, "in_range {}", self.total_in_range);
        let _ = writeln!(s, "dropped {}", self.total_dropped);
        let _ = writeln!(s, "masses {}", self.mass.len());
        for m in &self.mass {
            let _ = writeln!(s, "{m}");
        }
        std::fs::write(path, s).map_err(|e| Error::io(path, e))
    }
}

/// Bins `samples` on `spec`, dropping (and counting) out-of-range points.
pub fn histogram(samples: &Matrix, spec: &GridSpec) -> Result<HistogramGrid> {
    if samples.cols() != spec.dim() {
        return Err(Error::shape("histogram", spec.dim(), samples.cols()));
    }
    let mut counts = vec![0u64; spec.total_bins()];
    let mut dropped = 0;
    for row in samples.iter_rows() {
        match spec.flat_index(row) {
            Some(i) => counts[i] += 1,
            None => dropped += 1,
        }
    }
    let in_range = samples.rows() - dropped;
    if in_range == 0 {
        return Err(Error::NoSamplesInRange { dropped });
    }
    let norm = 1.0 / in_range as f64;
    Ok(HistogramGrid {
        spec: spec.clone(),
        mass: counts.into_iter().map(|c| c as f64 * norm).collect(),
        total_in_range: in_range,
        total_dropped: dropped,
    })
}

/// Regularized `KL(p || q)` in nats between two mass vectors of equal length.
pub fn kl_divergence_masses(p: &[f64], q: &[f64], reg: f64) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::GridMismatch(format!("{} vs {} bins", p.len(), q.len())));
    }
    let norm = 1.0 / (1.0 + p.len() as f64 * reg);
    let kl = p
        .iter()
        .zip(q)
        .map(|(&pi, &qi)| {
            let pt = (pi + reg) * norm;
            let qt = (qi + reg) * norm;
            pt * (pt / qt).ln()
        })
        .sum();
    Ok(kl)
}

/// Bhattacharyya coefficient `sum sqrt(p_i q_i)`, clamped to `[0, 1]`.
pub fn bhattacharyya_coefficient(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::GridMismatch(format!("{} vs {} bins", p.len(), q.len())));
    }
    let bc: f64 = p.iter().zip(q).map(|(a, b)| (a * b).sqrt()).sum();
    Ok(bc.clamp(0.0, 1.0))
}

/// Which closed form [`fisher_metric_with`] evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FisherForm {
    /// `2 arccos(BC)`: zero for identical distributions, pi for disjoint ones.
    #[default]
    Angle,
    /// `2 arccos(1 - BC)`: kept only for comparison; it is pi for identical
    /// distributions and 0 for disjoint ones.
    OneMinus,
}

impl std::str::FromStr for FisherForm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "angle" => Ok(FisherForm::Angle),
            "one_minus" => Ok(FisherForm::OneMinus),
            other => Err(Error::InvalidArgument(format!("unknown fisher form {other:?}"))),
        }
    }
}

pub fn fisher_metric_masses(p: &[f64], q: &[f64], form: FisherForm) -> Result<f64> {
    let bc = bhattacharyya_coefficient(p, q)?;
    Ok(match form {
        FisherForm::Angle => 2.0 * bc.acos(),
        FisherForm::OneMinus => 2.0 * (1.0 - bc).acos(),
    })
}

/// `KL(p || q)` between histograms on the same grid.
pub fn kl_divergence(p: &HistogramGrid, q: &HistogramGrid, reg: f64) -> Result<f64> {
    p.check_same_grid(q)?;
    kl_divergence_masses(&p.mass, &q.mass, reg)
}

/// Fisher-Rao distance between histograms on the same grid.
pub fn fisher_metric(p: &HistogramGrid, q: &HistogramGrid) -> Result<f64> {
    fisher_metric_with(p, q, FisherForm::Angle)
}

pub fn fisher_metric_with(p: &HistogramGrid, q: &HistogramGrid, form: FisherForm) -> Result<f64> {
    p.check_same_grid(q)?;
    fisher_metric_masses(&p.mass, &q.mass, form)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::Rng;
    use std::f64::consts::PI;

    fn grid_1d(lo: f64, hi: f64, bins: usize) -> GridSpec {
        GridSpec::new(vec![AxisBins { lo, hi, bins }]).unwrap()
    }

    fn column(xs: &[f64]) -> Matrix {
        Matrix::new(xs.len(), 1, xs.to_vec()).unwrap()
    }

    #[test]
    fn single_sample_at_bin_center() {
        let h = histogram(&column(&[0.35]), &grid_1d(0.0, 1.0, 10)).unwrap();
        assert_eq!(h.mass[3], 1.0);
        assert_eq!(h.mass.iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn interior_edge_goes_to_higher_bin() {
        let spec = grid_1d(0.0, 1.0, 10);
        for i in 1..10 {
            let e = spec.axes[0].edge(i);
            let h = histogram(&column(&[e]), &spec).unwrap();
            assert_eq!(h.mass[i], 1.0, "edge {i} = {e}");
        }
        let spec = grid_1d(-9.0, 9.0, 128);
        for i in 1..128 {
            assert_eq!(spec.axes[0].locate(spec.axes[0].edge(i)), Some(i));
        }
        assert_eq!(spec.axes[0].locate(9.0), None);
        assert_eq!(spec.axes[0].locate(-9.0), Some(0));
    }

    #[test]
    fn uniform_samples_fill_bins_evenly() {
        let mut rng = Rng::new(1);
        let xs: Vec<f64> = (0..1_000_000).map(|_| rng.uniform()).collect();
        let h = histogram(&column(&xs), &grid_1d(0.0, 1.0, 10)).unwrap();
        for m in &h.mass {
            assert!((m - 0.1).abs() < 0.01);
        }
        assert!((h.mass.iter().sum::<f64>() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn out_of_range_dropped_and_counted() {
        let h = histogram(&column(&[-5.0, 0.5, 2.0]), &grid_1d(0.0, 1.0, 4)).unwrap();
        assert_eq!((h.total_in_range, h.total_dropped), (1, 2));
        assert!(matches!(
            histogram(&column(&[5.0]), &grid_1d(0.0, 1.0, 4)),
            Err(Error::NoSamplesInRange { dropped: 1 })
        ));
    }

    #[test]
    fn multi_dim_flat_index() {
        let spec = GridSpec::for_gaussians(2).unwrap();
        assert_eq!(spec.total_bins(), 64 * 64);
        // (-9, -9) is bin (0, 0); (0, 0) is bin (32, 32)
        assert_eq!(spec.flat_index(&[-9.0, -9.0]), Some(0));
        assert_eq!(spec.flat_index(&[0.0, 0.0]), Some(32 * 64 + 32));
        assert_eq!(spec.flat_index(&[0.0, 9.5]), None);
        assert_eq!(GridSpec::for_gaussians(4).unwrap().total_bins(), 65536);
    }

    #[test]
    fn kl_closed_forms() {
        let r = KL_REGULARIZATION;
        assert!(kl_divergence_masses(&[0.2, 0.3, 0.5], &[0.2, 0.3, 0.5], r).unwrap().abs() < 1e-12);
        let ln2 = kl_divergence_masses(&[1.0, 0.0], &[0.5, 0.5], r).unwrap();
        assert!((ln2 - 2f64.ln()).abs() < 1e-6);
        let disjoint = kl_divergence_masses(&[1.0, 0.0], &[0.0, 1.0], r).unwrap();
        assert!((disjoint - (-(1e-32f64).ln())).abs() < 1e-6);
        assert!((disjoint - 73.68).abs() < 0.01);
    }

    #[test]
    fn regularization_floor_for_one_spurious_bin() {
        // p and q share M samples exactly, except one p-sample that lands in a
        // bin q never visits.
        let m = 400_000usize;
        let bins = 1000;
        let mut q_counts = vec![0u64; bins];
        for i in 0..m {
            q_counts[i % (bins - 1)] += 1;
        }
        let mut p_counts = q_counts.clone();
        p_counts[0] -= 1;
        p_counts[bins - 1] += 1;
        let to_mass = |c: &[u64]| c.iter().map(|&v| v as f64 / m as f64).collect::<Vec<_>>();
        let kl = kl_divergence_masses(&to_mass(&p_counts), &to_mass(&q_counts), KL_REGULARIZATION).unwrap();
        let floor = (1e-32f64).ln().abs() / m as f64;
        assert!((floor - 1.8e-4).abs() < 0.05e-4);
        assert!(kl > floor / 2.0 && kl < floor * 2.0, "kl {kl} floor {floor}");
    }

    #[test]
    fn fisher_closed_forms() {
        let f = |p: &[f64], q: &[f64]| fisher_metric_masses(p, q, FisherForm::Angle).unwrap();
        assert!(f(&[0.25, 0.75], &[0.25, 0.75]).abs() < 1e-6);
        assert!((f(&[1.0, 0.0], &[0.0, 1.0]) - PI).abs() < 1e-12);
        assert!((f(&[1.0, 0.0], &[0.5, 0.5]) - PI / 2.0).abs() < 1e-12);
        let literal = fisher_metric_masses(&[0.5, 0.5], &[0.5, 0.5], FisherForm::OneMinus).unwrap();
        assert!((literal - PI).abs() < 1e-12);
    }

    #[test]
    fn grid_mismatch_rejected() {
        let a = histogram(&column(&[0.5]), &grid_1d(0.0, 1.0, 4)).unwrap();
        let b = histogram(&column(&[0.5]), &grid_1d(0.0, 1.0, 5)).unwrap();
        assert!(matches!(kl_divergence(&a, &b, KL_REGULARIZATION), Err(Error::GridMismatch(_))));
        assert!(matches!(fisher_metric(&a, &b), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn dump_lists_edges_and_masses() {
        let h = histogram(&column(&[0.1, 0.6]), &grid_1d(0.0, 1.0, 2)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("h.txt");
        h.write_dump(&path).unwrap();
        let text = std::fs::read_to_string(path).unwrap();
        assert_eq!(text, "# evl-histogram\ndims 1\nedges 0 0 0.5 1\nin_range 2\ndropped 0\nmasses 2\n0.5\n0.5\n");
    }

    mod props {
        use super::*;
        use proptest::prelude::*;
        use crate::numcore::Rng;

        fn distribution(n: usize) -> impl Strategy<Value = Vec<f64>> {
            proptest::collection::vec(prop_oneof![Just(0.0), 0.0f64..1.0], n).prop_filter_map(
                "non-zero total",
                |v| {
                    let s: f64 = v.iter().sum();
                    (s > 0.0).then(|| v.iter().map(|x| x / s).collect())
                },
            )
        }

        fn pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
            (1usize..40).prop_flat_map(|n| (distribution(n), distribution(n)))
        }

        proptest! {
            #[test]
            fn kl_is_nonnegative((p, q) in pair()) {
                prop_assert!(kl_divergence_masses(&p, &q, KL_REGULARIZATION).unwrap() >= -1e-12);
            }

            #[test]
            fn fisher_symmetric_and_bounded((p, q) in pair()) {
                let a = fisher_metric_masses(&p, &q, FisherForm::Angle).unwrap();
                let b = fisher_metric_masses(&q, &p, FisherForm::Angle).unwrap();
                prop_assert_eq!(a.to_bits(), b.to_bits());
                prop_assert!(a.is_finite() && (0.0..=PI).contains(&a));
            }

            #[test]
            fn permutation_invariant((p, q) in pair(), seed in 0u64..1000) {
                let mut order: Vec<usize> = (0..p.len()).collect();
                Rng::new(seed).shuffle(&mut order);
                let pp: Vec<f64> = order.iter().map(|&i| p[i]).collect();
                let qq: Vec<f64> = order.iter().map(|&i| q[i]).collect();
                let kl = kl_divergence_masses(&p, &q, KL_REGULARIZATION).unwrap();
                let kl2 = kl_divergence_masses(&pp, &qq, KL_REGULARIZATION).unwrap();
                prop_assert!((kl - kl2).abs() <= 1e-12 * kl.abs().max(1.0));
                let f = fisher_metric_masses(&p, &q, FisherForm::Angle).unwrap();
                let f2 = fisher_metric_masses(&pp, &qq, FisherForm::Angle).unwrap();
                prop_assert!((f - f2).abs() < 1e-12);
            }
        }
    }
}
