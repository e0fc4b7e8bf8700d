//! Synthetic datasets and their text file format.
//!
//! A dataset file is one header comment line holding `key=value` metadata,
//! a `dim count` line, then one sample per line as space-separated decimal
//! numbers:
//!
//! ```text
//! # evl-dataset generator=gaussian_mixture modes=4 seed=1 split=train
//! 2 3
//! -4.1726 3.0917
//! 0.5 1.25
//! 5.875 -0.0625
//! ```
//!
//! Values are written in shortest round-trip form, so loading a saved file
//! reproduces every `f64` exactly.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numcore::{Matrix, Rng};

/// Half-width of the box the mixture centers are drawn from.
pub const CENTER_RANGE: f64 = 6.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub points: Matrix,
    pub meta: BTreeMap<String, String>,
}

/// Which of the independent sample streams of a seed to draw from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    fn stream(self) -> u64 {
        match self {
            Split::Train => 1,
            Split::Test => 2,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

impl Dataset {
    pub fn new(points: Matrix, meta: BTreeMap<String, String>) -> Result<Self> {
        if !points.is_finite() {
            return Err(Error::InvalidArgument("dataset contains non-finite values".into()));
        }
        Ok(Self { points, meta })
    }

    pub fn dim(&self) -> usize {
        self.points.cols()
    }

    pub fn len(&self) -> usize {
        self.points.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.rows() == 0
    }

    pub fn generator(&self) -> Option<&str> {
        self.meta.get("generator").map(String::as_str)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::with_capacity(self.len() * self.dim() * 20 + 128);
        out.push_str("# evl-dataset");
        for (k, v) in &self.meta {
            let _ = write!(out, " {k}={v}");
        }
        let _ = writeln!(out, "\n{} {}", self.dim(), self.len());
        for row in self.points.iter_rows() {
            let mut first = true;
            for v in row {
                if !first {
                    out.push(' ');
                }
                first = false;
                let _ = write!(out, "{v}");
            }
            out.push('\n');
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    fn parse(text: &str, path: &Path) -> Result<Self> {
        let err = |line: usize, msg: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            msg,
        };
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));

        let (_, header) = lines.next().ok_or_else(|| err(1, "empty file".into()))?;
        let meta_text = header
            .strip_prefix("# evl-dataset")
            .ok_or_else(|| err(1, "missing '# evl-dataset' header".into()))?;
        let mut meta = BTreeMap::new();
        for token in meta_text.split_whitespace() {
            let (k, v) = token
                .split_once('=')
                .ok_or_else(|| err(1, format!("metadata token {token:?} is not key=value")))?;
            meta.insert(k.to_string(), v.to_string());
        }

        let (_, shape) = lines.next().ok_or_else(|| err(2, "missing 'dim count' line".into()))?;
        let shape: Vec<usize> = shape
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| err(2, format!("bad 'dim count' line: {e}")))?;
        let [dim, count] = shape[..] else {
            return Err(err(2, format!("expected 'dim count', got {} fields", shape.len())));
        };
        if dim == 0 {
            return Err(err(2, "dimension must be at least 1".into()));
        }

        let mut data = Vec::with_capacity(dim * count);
        let mut rows = 0;
        for (line_no, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let before = data.len();
            for (col, token) in line.split_whitespace().enumerate() {
                let v: f64 = token
                    .parse()
                    .map_err(|_| err(line_no, format!("field {} is not a number: {token:?}", col + 1)))?;
                if !v.is_finite() {
                    return Err(err(line_no, format!("field {} is not finite", col + 1)));
                }
                data.push(v);
            }
            let width = data.len() - before;
            if width != dim {
                return Err(err(line_no, format!("row has {width} values, header says dim {dim}")));
            }
            rows += 1;
        }
        if rows != count {
            return Err(err(2, format!("header says {count} rows, file has {rows}")));
        }
        Ok(Self {
            points: Matrix::new(rows, dim, data).expect("row widths checked"),
            meta,
        })
    }
}

/// Mixture centers for `(dim, n_modes, seed)`, uniform in `[-6, 6]^dim`.
pub fn gaussian_mixture_centers(dim: usize, n_modes: usize, seed: u64) -> Matrix {
    let mut rng = Rng::new(seed).child(0);
    Matrix::from_fn(n_modes, dim, |_, _| rng.uniform_range(-CENTER_RANGE, CENTER_RANGE))
}

fn sample_mixture(dim: usize, n_modes: usize, seed: u64, n: usize, split: Split) -> (Matrix, Vec<usize>) {
    let centers = gaussian_mixture_centers(dim, n_modes, seed);
    let mut rng = Rng::new(seed).child(split.stream());
    let mut labels = Vec::with_capacity(n);
    let mut data = Vec::with_capacity(n * dim);
    for _ in 0..n {
        let mode = rng.below(n_modes);
        labels.push(mode);
        for c in centers.row(mode) {
            data.push(c + rng.normal());
        }
    }
    (Matrix::new(n, dim, data).expect("sized above"), labels)
}

/// Equal-weight mixture of unit-variance Gaussians.
///
/// Centers come from child stream 0 of `seed`; train and test samples from
/// child streams 1 and 2, so both splits share centers but not points.
pub fn make_gaussian_mixture(dim: usize, n_modes: usize, seed: u64, n: usize, split: Split) -> Result<Dataset> {
    if !(1..=4).contains(&dim) {
        return Err(Error::InvalidArgument(format!("dim must be in 1..=4, got {dim}")));
    }
    if n_modes == 0 {
        return Err(Error::InvalidArgument("n_modes must be at least 1".into()));
    }
    let (points, _) = sample_mixture(dim, n_modes, seed, n, split);
    let meta = BTreeMap::from([
        ("generator".to_string(), "gaussian_mixture".to_string()),
        ("modes".to_string(), n_modes.to_string()),
        ("seed".to_string(), seed.to_string()),
        ("split".to_string(), split.name().to_string()),
    ]);
    Dataset::new(points, meta)
}

/// Noise-free swiss-roll point for uniforms `(u, v)`:
/// `t = 1.5 pi (1 + 2u)`, point `= scale * (t cos t, 21 v, t sin t)`.
pub fn swiss_roll_point(u: f64, v: f64, scale: f64) -> [f64; 3] {
    let t = 1.5 * PI * (1.0 + 2.0 * u);
    [scale * t * t.cos(), scale * 21.0 * v, scale * t * t.sin()]
}

/// Swiss roll with isotropic Gaussian noise of std `noise` added before scaling.
pub fn make_swiss_roll(n: usize, noise: f64, scale: f64, seed: u64, split: Split) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    if !(noise >= 0.0) || !(scale > 0.0) {
        return Err(Error::InvalidArgument("noise must be >= 0 and scale > 0".into()));
    }
    let mut rng = Rng::new(seed).child(split.stream());
    let mut data = Vec::with_capacity(n * 3);
    for _ in 0..n {
        let u = rng.uniform();
        let v = rng.uniform();
        let p = swiss_roll_point(u, v, scale);
        for x in p {
            data.push(x + scale * noise * rng.normal());
        }
    }
    let meta = BTreeMap::from([
        ("generator".to_string(), "swiss_roll".to_string()),
        ("noise".to_string(), noise.to_string()),
        ("scale".to_string(), scale.to_string()),
        ("seed".to_string(), seed.to_string()),
        ("split".to_string(), split.name().to_string()),
    ]);
    Dataset::new(Matrix::new(n, 3, data).expect("sized above"), meta)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn column_std(m: &Matrix, c: usize) -> f64 {
        let n = m.rows() as f64;
        let mean = m.iter_rows().map(|r| r[c]).sum::<f64>() / n;
        (m.iter_rows().map(|r| (r[c] - mean).powi(2)).sum::<f64>() / n).sqrt()
    }

    #[test]
    fn single_mode_has_unit_std() {
        let ds = make_gaussian_mixture(3, 1, 4, 100_000, Split::Train).unwrap();
        for c in 0..3 {
            let s = column_std(&ds.points, c);
            assert!((s - 1.0).abs() < 0.02, "std {s}");
        }
    }

    #[test]
    fn centers_inside_range() {
        for seed in 1..=5 {
            let c = gaussian_mixture_centers(4, 10, seed);
            assert!(c.data().iter().all(|x| x.abs() <= CENTER_RANGE));
        }
    }

    #[test]
    fn seeds_give_distinct_reproducible_centers() {
        let sets: Vec<Matrix> = (1..=5).map(|s| gaussian_mixture_centers(2, 4, s)).collect();
        for i in 0..5 {
            for j in i + 1..5 {
                assert_ne!(sets[i], sets[j]);
            }
        }
        let a = make_gaussian_mixture(2, 4, 3, 500, Split::Train).unwrap();
        let b = make_gaussian_mixture(2, 4, 3, 500, Split::Train).unwrap();
        assert_eq!(a, b);
        let test = make_gaussian_mixture(2, 4, 3, 500, Split::Test).unwrap();
        assert_ne!(a.points, test.points);
    }

    #[test]
    fn mode_occupancy_within_multinomial_bounds() {
        let n = 100_000;
        for k in [2usize, 4, 10] {
            let (_, labels) = sample_mixture(2, k, 7, n, Split::Train);
            let p = 1.0 / k as f64;
            let sigma = (n as f64 * p * (1.0 - p)).sqrt();
            for m in 0..k {
                let count = labels.iter().filter(|&&l| l == m).count() as f64;
                assert!((count - n as f64 * p).abs() < 3.0 * sigma, "mode {m} of {k}: {count}");
            }
        }
    }

    #[test]
    fn bad_mixture_args() {
        assert!(make_gaussian_mixture(0, 2, 1, 10, Split::Train).is_err());
        assert!(make_gaussian_mixture(5, 2, 1, 10, Split::Train).is_err());
        assert!(make_gaussian_mixture(2, 0, 1, 10, Split::Train).is_err());
    }

    #[test]
    fn swiss_roll_reference_point() {
        let p = swiss_roll_point(0.0, 0.5, 0.5);
        assert!(p[0].abs() < 1e-12);
        assert!((p[1] - 5.25).abs() < 1e-12);
        assert!((p[2] + 0.75 * PI).abs() < 1e-12);
        assert!((p[2] + 2.3562).abs() < 1e-4);
    }

    #[test]
    fn noiseless_roll_lies_on_spiral() {
        let ds = make_swiss_roll(20_000, 0.0, 0.5, 1, Split::Train).unwrap();
        for row in ds.points.iter_rows() {
            let (x, z) = (row[0] / 0.5, row[2] / 0.5);
            let r = (x * x + z * z).sqrt();
            assert!((1.5 * PI - 1e-9..=4.5 * PI + 1e-9).contains(&r));
            // the angle of (x, z) equals t mod 2 pi, with t = r
            let (c, s) = (x / r, z / r);
            assert!((c - r.cos()).abs() < 1e-9 && (s - r.sin()).abs() < 1e-9);
            assert!(row[1] >= 0.0 && row[1] < 10.5);
        }
    }

    #[test]
    fn noisy_roll_height_bound() {
        let ds = make_swiss_roll(50_000, 0.1, 0.5, 2, Split::Train).unwrap();
        let tail = 5.0 * 0.1 * 0.5;
        for row in ds.points.iter_rows() {
            assert!(row[1] >= -tail && row[1] <= 10.5 + tail);
        }
        let test = make_swiss_roll(400_000, 0.1, 0.5, 2, Split::Test).unwrap();
        assert_eq!(test.points.shape(), (400_000, 3));
    }

    #[test]
    fn file_round_trip_is_exact() {
        let ds = make_gaussian_mixture(3, 4, 9, 1000, Split::Test).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.txt");
        ds.save(&path).unwrap();
        let back = Dataset::load(&path).unwrap();
        assert_eq!(back, ds);
        assert_eq!(back.generator(), Some("gaussian_mixture"));
    }

    fn parse(text: &str) -> Result<Dataset> {
        Dataset::parse(text, Path::new("mem.txt"))
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        assert!(matches!(parse(""), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse("# evl-dataset a=b\n"), Err(Error::Parse { line: 2, .. })));
        let wide = "# evl-dataset generator=x\n2 2\n1 2\n1 2 3\n";
        assert!(matches!(parse(wide), Err(Error::Parse { line: 4, .. })));
        let bad = "# evl-dataset generator=x\n1 1\nabc\n";
        assert!(matches!(parse(bad), Err(Error::Parse { line: 3, .. })));
        let short = "# evl-dataset generator=x\n1 3\n1\n2\n";
        assert!(parse(short).is_err());
        let ok = parse("# evl-dataset generator=x\n2 1\n0.5 -1e-3\n").unwrap();
        assert_eq!(ok.points.row(0), &[0.5, -1e-3]);
    }
}
