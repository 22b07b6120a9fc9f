//! Dataset loading, synthetic generation and the empirical measure.
//!
//! All downstream computation is label-free: loaders parse and discard labels.
//! Image data is normalized to `[0,1]` by exact division by 255 so that
//! perturbation budgets quoted as fractions of 255 apply directly.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::{Error, Result};

/// An in-memory point set: `m` points in ℝⁿ, stored row-major.
#[derive(Debug, Clone)]
pub struct Dataset {
    values: Vec<f64>,
    n: usize,
    source_tag: String,
}

impl Dataset {
    /// Builds a dataset from row-major storage. `values.len()` must be a
    /// nonzero multiple of `n`.
    pub fn from_flat(values: Vec<f64>, n: usize, source_tag: impl Into<String>) -> Result<Self> {
        if n == 0 {
            return Err(Error::param("n", "dimension must be at least 1"));
        }
        if values.is_empty() || !values.len().is_multiple_of(n) {
            return Err(Error::param(
                "values",
                format!("length {} is not a positive multiple of n = {n}", values.len()),
            ));
        }
        Ok(Dataset {
            values,
            n,
            source_tag: source_tag.into(),
        })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>, source_tag: impl Into<String>) -> Result<Self> {
        let n = rows.first().map(Vec::len).unwrap_or(0);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != n {
                return Err(Error::param(
                    "rows",
                    format!("row {i} has {} coordinates, expected {n}", r.len()),
                ));
            }
        }
        Self::from_flat(rows.into_iter().flatten().collect(), n, source_tag)
    }

    /// Number of points.
    pub fn m(&self) -> usize {
        self.values.len() / self.n
    }

    /// Dimension.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn source_tag(&self) -> &str {
        &self.source_tag
    }

    /// The `i`-th point.
    pub fn point(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.values.chunks_exact(self.n)
    }

    /// SHA-256 over the raw coordinate bytes, used to key on-disk caches.
    pub fn content_hash(&self) -> [u8; 32] {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        h.update((self.n as u64).to_le_bytes());
        for v in &self.values {
            h.update(v.to_le_bytes());
        }
        h.finalize().into()
    }

    /// Writes the dataset as CSV with round-trip-exact float formatting.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for row in self.points() {
            for (j, v) in row.iter().enumerate() {
                if j > 0 {
                    out.push(',');
                }
                write!(out, "{v}").unwrap();
            }
            out.push('\n');
        }
        let mut f = fs::File::create(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        f.write_all(out.as_bytes()).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
    }
}

/// Counting measure over a dataset: `measure(pred) = |{x : pred(x)}| / m`.
#[derive(Debug, Clone, Copy)]
pub struct EmpiricalMeasure<'a> {
    dataset: &'a Dataset,
}

impl<'a> EmpiricalMeasure<'a> {
    pub fn new(dataset: &'a Dataset) -> Self {
        EmpiricalMeasure { dataset }
    }

    pub fn measure(&self, mut pred: impl FnMut(&[f64]) -> bool) -> f64 {
        let hits = self.dataset.points().filter(|p| pred(p)).count();
        hits as f64 / self.dataset.m() as f64
    }
}

/// Seeded train/test partition parameters.
#[derive(Debug, Clone, Copy)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
}

/// Loads an IDX file of unsigned bytes (the MNIST container format) and
/// normalizes every pixel to `[0,1]` by division by 255.
pub fn load_idx(path: &Path) -> Result<Dataset> {
    let bytes = fs::read(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let fail = |offset: u64, reason: String| Error::Format {
        format: "idx",
        path: path.to_path_buf(),
        offset,
        reason,
    };
    if bytes.len() < 4 {
        return Err(fail(bytes.len() as u64, "truncated header".into()));
    }
    if bytes[0] != 0 || bytes[1] != 0 {
        return Err(fail(0, format!("bad magic bytes {:#04x} {:#04x}", bytes[0], bytes[1])));
    }
    if bytes[2] != 0x08 {
        return Err(fail(2, format!("unsupported type code {:#04x}, expected 0x08", bytes[2])));
    }
    let ndims = bytes[3] as usize;
    if ndims == 0 {
        return Err(fail(3, "dimension count is zero".into()));
    }
    let header_len = 4 + 4 * ndims;
    if bytes.len() < header_len {
        return Err(fail(bytes.len() as u64, "truncated dimension sizes".into()));
    }
    let mut dims = Vec::with_capacity(ndims);
    for d in 0..ndims {
        let off = 4 + 4 * d;
        let size = u32::from_be_bytes(bytes[off..off + 4].try_into().unwrap()) as usize;
        dims.push(size);
    }
    let m = dims[0];
    let n: usize = dims[1..].iter().product::<usize>().max(1);
    let expected = header_len + m * n;
    if bytes.len() != expected {
        return Err(fail(
            bytes.len().min(expected) as u64,
            format!("payload length {} does not match header ({m} x {n})", bytes.len() - header_len),
        ));
    }
    let values = bytes[header_len..].iter().map(|&b| b as f64 / 255.0).collect();
    Dataset::from_flat(values, n, format!("idx:{}", path.display()))
}

/// Record length of the CIFAR-10 binary format: 1 label byte + 3072 pixels.
const CIFAR_RECORD: usize = 3073;

/// Loads CIFAR-10 binary batch files, discarding labels.
pub fn load_cifar_binary(paths: &[&Path]) -> Result<Dataset> {
    if paths.is_empty() {
        return Err(Error::NoInput);
    }
    let mut values = Vec::new();
    for path in paths {
        let bytes = fs::read(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        if bytes.is_empty() || bytes.len() % CIFAR_RECORD != 0 {
            return Err(Error::Format {
                format: "cifar",
                path: path.to_path_buf(),
                offset: (bytes.len() / CIFAR_RECORD * CIFAR_RECORD) as u64,
                reason: format!("length {} is not a positive multiple of {CIFAR_RECORD}", bytes.len()),
            });
        }
        for record in bytes.chunks_exact(CIFAR_RECORD) {
            // record[0] is the label; the method is label-free.
            values.extend(record[1..].iter().map(|&b| b as f64 / 255.0));
        }
    }
    Dataset::from_flat(values, CIFAR_RECORD - 1, "cifar10")
}

/// Loads a rectangular numeric CSV, one point per row. A non-numeric first
/// row is treated as a header and skipped. Values are taken as-is.
pub fn load_csv(path: &Path) -> Result<Dataset> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width: Option<usize> = None;
    for (idx, line) in text.lines().enumerate() {
        let row_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        let parsed: std::result::Result<Vec<f64>, _> =
            cells.iter().map(|c| c.trim().parse::<f64>()).collect();
        let row = match parsed {
            Ok(row) => row,
            Err(e) => {
                // Header detection: a non-numeric first row is skipped.
                if rows.is_empty() && width.is_none() {
                    width = None;
                    continue;
                }
                return Err(Error::CsvParse {
                    path: path.to_path_buf(),
                    row: row_no,
                    reason: e.to_string(),
                });
            }
        };
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(Error::CsvParse {
                    path: path.to_path_buf(),
                    row: row_no,
                    reason: format!("row has {} cells, expected {w}", row.len()),
                });
            }
            _ => {}
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::CsvParse {
            path: path.to_path_buf(),
            row: 1,
            reason: "no data rows".into(),
        });
    }
    Dataset::from_rows(rows, format!("csv:{}", path.display()))
}

fn rng_for(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `m` i.i.d. points uniform on the unit cube `[0,1]ⁿ`.
pub fn gen_uniform_cube(n: usize, m: usize, seed: u64) -> Result<Dataset> {
    if n == 0 || m == 0 {
        return Err(Error::param("n/m", "must be at least 1"));
    }
    let mut rng = rng_for(seed);
    let values = (0..n * m).map(|_| rng.gen::<f64>()).collect();
    Dataset::from_flat(values, n, format!("uniform(n={n},m={m},seed={seed})"))
}

/// `m` i.i.d. points from an isotropic Gaussian `N(0, sigma² I)` in ℝⁿ.
pub fn gen_gaussian(n: usize, m: usize, sigma: f64, seed: u64) -> Result<Dataset> {
    if n == 0 || m == 0 {
        return Err(Error::param("n/m", "must be at least 1"));
    }
    if sigma < 0.0 || !sigma.is_finite() {
        return Err(Error::param("sigma", "must be nonnegative and finite"));
    }
    let mut rng = rng_for(seed);
    let values = if sigma == 0.0 {
        vec![0.0; n * m]
    } else {
        let normal = Normal::new(0.0, sigma).unwrap();
        (0..n * m).map(|_| normal.sample(&mut rng)).collect()
    };
    Dataset::from_flat(values, n, format!("gaussian(n={n},m={m},sigma={sigma},seed={seed})"))
}

/// `m` i.i.d. points from a mixture of isotropic Gaussians with the given
/// centers and weights (weights must sum to 1).
pub fn gen_mixture(
    centers: &[Vec<f64>],
    weights: &[f64],
    sigma: f64,
    m: usize,
    seed: u64,
) -> Result<Dataset> {
    if centers.is_empty() || m == 0 {
        return Err(Error::param("centers/m", "must be nonempty"));
    }
    if centers.len() != weights.len() {
        return Err(Error::param("weights", "one weight per center required"));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-9 || weights.iter().any(|&w| w < 0.0) {
        return Err(Error::param("weights", "must be nonnegative and sum to 1"));
    }
    if sigma < 0.0 || !sigma.is_finite() {
        return Err(Error::param("sigma", "must be nonnegative and finite"));
    }
    let n = centers[0].len();
    if centers.iter().any(|c| c.len() != n) {
        return Err(Error::param("centers", "all centers must share a dimension"));
    }
    let mut rng = rng_for(seed);
    let normal = (sigma > 0.0).then(|| Normal::new(0.0, sigma).unwrap());
    let mut values = Vec::with_capacity(n * m);
    for _ in 0..m {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut pick = centers.len() - 1;
        for (i, &w) in weights.iter().enumerate() {
            acc += w;
            if u < acc {
                pick = i;
                break;
            }
        }
        for &c in &centers[pick] {
            let noise = normal.as_ref().map(|d| d.sample(&mut rng)).unwrap_or(0.0);
            values.push(c + noise);
        }
    }
    Dataset::from_flat(values, n, format!("mixture(k={},m={m},seed={seed})", centers.len()))
}

/// Splits a dataset by seeded uniform shuffle into `(train, test)` with sizes
/// `⌊m·f⌋` and `m − ⌊m·f⌋`. The partition is disjoint and exhaustive.
pub fn split(dataset: &Dataset, spec: SplitSpec) -> Result<(Dataset, Dataset)> {
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(Error::param("train_fraction", "must lie in (0,1)"));
    }
    let m = dataset.m();
    let n = dataset.n();
    let mut order: Vec<usize> = (0..m).collect();
    let mut rng = rng_for(spec.seed);
    // Fisher-Yates
    for i in (1..m).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
    let train_size = (m as f64 * spec.train_fraction).floor() as usize;
    let gather = |idxs: &[usize], tag: &str| {
        let mut values = Vec::with_capacity(idxs.len() * n);
        for &i in idxs {
            values.extend_from_slice(dataset.point(i));
        }
        Dataset::from_flat(values, n, format!("{}:{tag}", dataset.source_tag()))
    };
    let train = gather(&order[..train_size], "train")?;
    let test = gather(&order[train_size..], "test")?;
    Ok((train, test))
}
