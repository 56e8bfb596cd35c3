//! Training sets: the two synthetic recipes, near-orthogonality statistics,
//! and IDX (MNIST) ingestion.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, norm2, Matrix};
use crate::rng::SeededRng;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// Row-norm and pairwise-correlation summary of an input matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrthoStats {
    pub r_min: f64,
    pub r_max: f64,
    /// Largest absolute inner product between distinct rows (0 when n = 1).
    pub p: f64,
    pub r_ratio: f64,
}

impl OrthoStats {
    pub fn compute(x: &Matrix) -> Self {
        let norms: Vec<f64> = x.row_iter().map(norm2).collect();
        let r_min = norms.iter().copied().fold(f64::INFINITY, f64::min);
        let r_max = norms.iter().copied().fold(0.0, f64::max);
        let mut p = 0.0f64;
        for i in 0..x.rows() {
            for k in i + 1..x.rows() {
                p = p.max(dot(x.row(i), x.row(k)).abs());
            }
        }
        OrthoStats {
            r_min,
            r_max,
            p,
            r_ratio: r_max / r_min,
        }
    }
}

/// How a dataset was produced; carried into exports and manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Recipe {
    GaussianMixture {
        mu_variance: f64,
        sigma_p: f64,
    },
    Orthogonal,
    IdxPair {
        class_a: u8,
        class_b: u8,
    },
    Custom,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: Matrix,
    y: Vec<f64>,
    stats: OrthoStats,
    inv_sq_norms: Vec<f64>,
    pub recipe: Recipe,
    pub seed: Option<u64>,
}

impl Dataset {
    /// Validates labels (exactly ±1) and rows (nonzero), then computes stats.
    pub fn new(x: Matrix, y: Vec<f64>, recipe: Recipe, seed: Option<u64>) -> Result<Self> {
        if y.len() != x.rows() {
            return Err(Error::DimensionMismatch {
                expected: x.rows(),
                got: y.len(),
            });
        }
        if x.rows() == 0 || x.cols() == 0 {
            return Err(Error::InvalidArgument("dataset must be nonempty".into()));
        }
        if let Some(i) = y.iter().position(|&v| v != 1.0 && v != -1.0) {
            return Err(Error::InvalidArgument(format!(
                "label {} at index {i} is not +1 or -1",
                y[i]
            )));
        }
        if !x.is_finite() {
            return Err(Error::InvalidArgument("inputs contain non-finite values".into()));
        }
        if let Some(i) = x.row_iter().position(|r| r.iter().all(|&v| v == 0.0)) {
            return Err(Error::InvalidArgument(format!("input row {i} is the zero vector")));
        }
        let stats = OrthoStats::compute(&x);
        let inv_sq_norms = x.row_iter().map(|r| 1.0 / dot(r, r)).collect();
        Ok(Dataset {
            x,
            y,
            stats,
            inv_sq_norms,
            recipe,
            seed,
        })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.x.rows()
    }

    #[inline]
    pub fn d(&self) -> usize {
        self.x.cols()
    }

    #[inline]
    pub fn x(&self) -> &Matrix {
        &self.x
    }

    #[inline]
    pub fn y(&self) -> &[f64] {
        &self.y
    }

    #[inline]
    pub fn stats(&self) -> &OrthoStats {
        &self.stats
    }

    /// `‖x_i‖⁻²` per example.
    #[inline]
    pub fn inv_sq_norms(&self) -> &[f64] {
        &self.inv_sq_norms
    }

    pub fn sq_norm(&self, i: usize) -> f64 {
        dot(self.x.row(i), self.x.row(i))
    }

    pub fn to_json(&self) -> DatasetJson {
        DatasetJson {
            n: self.n(),
            d: self.d(),
            x: self.x.row_iter().map(<[f64]>::to_vec).collect(),
            y: self.y.clone(),
            seed: self.seed,
            recipe: self.recipe.clone(),
        }
    }

    pub fn from_json(doc: DatasetJson) -> Result<Self> {
        let x = Matrix::from_rows(&doc.x)?;
        if x.rows() != doc.n || x.cols() != doc.d {
            return Err(Error::InvalidArgument(format!(
                "declared shape {}x{} does not match data {}x{}",
                doc.n,
                doc.d,
                x.rows(),
                x.cols()
            )));
        }
        Dataset::new(x, doc.y, doc.recipe, doc.seed)
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(&self.to_json())?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Dataset::from_json(serde_json::from_str(&text)?)
    }
}

/// On-disk dataset document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetJson {
    pub n: usize,
    pub d: usize,
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
    pub seed: Option<u64>,
    pub recipe: Recipe,
}

/// `x_i = y_i μ + ξ_i` with Rademacher labels, `μ ~ N(0, mu_variance I)` and
/// `ξ_i ~ N(0, sigma_p² I)`. μ is drawn first from the same seeded stream.
pub fn gen_gaussian_mixture(
    n: usize,
    d: usize,
    mu_variance: f64,
    sigma_p: f64,
    seed: u64,
) -> Result<Dataset> {
    if n == 0 || d == 0 {
        return Err(Error::InvalidArgument("n and d must be at least 1".into()));
    }
    if !(mu_variance >= 0.0) || !(sigma_p >= 0.0) {
        return Err(Error::InvalidArgument(
            "mu_variance and sigma_p must be nonnegative".into(),
        ));
    }
    let mut rng = SeededRng::new(seed);
    let mu_std = mu_variance.sqrt();
    let mu: Vec<f64> = (0..d).map(|_| rng.normal(0.0, mu_std)).collect();
    mixture_with_rng(n, &mu, sigma_p, &mut rng, mu_variance, Some(seed))
}

/// Same recipe with a caller-supplied signal vector.
pub fn gen_gaussian_mixture_with_mu(n: usize, mu: &[f64], sigma_p: f64, seed: u64) -> Result<Dataset> {
    if n == 0 || mu.is_empty() {
        return Err(Error::InvalidArgument("n and d must be at least 1".into()));
    }
    let mut rng = SeededRng::new(seed);
    let var = dot(mu, mu) / mu.len() as f64;
    mixture_with_rng(n, mu, sigma_p, &mut rng, var, Some(seed))
}

fn mixture_with_rng(
    n: usize,
    mu: &[f64],
    sigma_p: f64,
    rng: &mut SeededRng,
    mu_variance: f64,
    seed: Option<u64>,
) -> Result<Dataset> {
    let d = mu.len();
    let mut x = Matrix::zeros(n, d);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let label = rng.rademacher();
        y.push(label);
        for (xk, &mk) in x.row_mut(i).iter_mut().zip(mu) {
            *xk = label * mk + rng.normal(0.0, sigma_p);
        }
    }
    Dataset::new(
        x,
        y,
        Recipe::GaussianMixture {
            mu_variance,
            sigma_p,
        },
        seed,
    )
}

/// Distinct standard basis vectors; the first `n/2` are labeled +1, the rest −1.
pub fn gen_orthogonal(n: usize, d: usize, seed: u64) -> Result<Dataset> {
    if n > d {
        return Err(Error::TooManyExamples { n, d });
    }
    if n == 0 || n % 2 != 0 {
        return Err(Error::InvalidArgument(format!(
            "orthogonal recipe needs a positive even n, got {n}"
        )));
    }
    let mut rng = SeededRng::new(seed);
    let mut axes: Vec<usize> = (0..d).collect();
    // partial Fisher–Yates: the first n slots end up a uniform sample without replacement
    for i in 0..n {
        let j = i + rng.below(d - i);
        axes.swap(i, j);
    }
    let mut x = Matrix::zeros(n, d);
    for (i, &k) in axes[..n].iter().enumerate() {
        x[(i, k)] = 1.0;
    }
    let y = (0..n).map(|i| if i < n / 2 { 1.0 } else { -1.0 }).collect();
    Dataset::new(x, y, Recipe::Orthogonal, Some(seed))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NearOrthReport {
    pub holds: bool,
    pub lhs: f64,
    pub rhs: f64,
}

/// `R_min² ≥ C R² γ⁻⁴ n p`; pass `gamma = 1` for the ReLU form.
pub fn check_near_orthogonality(ds: &Dataset, gamma: f64, c_required: f64) -> Result<NearOrthReport> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::InvalidArgument(format!("gamma must lie in (0, 1], got {gamma}")));
    }
    let s = ds.stats();
    let lhs = s.r_min * s.r_min;
    let rhs = c_required * s.r_ratio * s.r_ratio * gamma.powi(-4) * ds.n() as f64 * s.p;
    Ok(NearOrthReport {
        holds: lhs >= rhs,
        lhs,
        rhs,
    })
}

struct IdxReader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> IdxReader<'a> {
    fn u32_be(&mut self) -> Result<u32> {
        let chunk = self
            .bytes
            .get(self.pos..self.pos + 4)
            .ok_or_else(|| Error::TruncatedFile {
                path: self.path.to_path_buf(),
            })?;
        self.pos += 4;
        Ok(u32::from_be_bytes(chunk.try_into().expect("4-byte slice")))
    }

    fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        let chunk = self
            .bytes
            .get(self.pos..self.pos + len)
            .ok_or_else(|| Error::TruncatedFile {
                path: self.path.to_path_buf(),
            })?;
        self.pos += len;
        Ok(chunk)
    }
}

/// Raw IDX image tensor: `count` images of `rows × cols` unsigned bytes.
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

pub fn read_idx_images(path: &Path) -> Result<IdxImages> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut rd = IdxReader {
        bytes: &bytes,
        pos: 0,
        path,
    };
    let magic = rd.u32_be()?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
            expected: IDX_IMAGES_MAGIC,
            found: magic,
        });
    }
    let count = rd.u32_be()? as usize;
    let rows = rd.u32_be()? as usize;
    let cols = rd.u32_be()? as usize;
    let pixels = rd.take(count * rows * cols)?.to_vec();
    Ok(IdxImages {
        count,
        rows,
        cols,
        pixels,
    })
}

pub fn read_idx_labels(path: &Path) -> Result<Vec<u8>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut rd = IdxReader {
        bytes: &bytes,
        pos: 0,
        path,
    };
    let magic = rd.u32_be()?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
            expected: IDX_LABELS_MAGIC,
            found: magic,
        });
    }
    let count = rd.u32_be()? as usize;
    Ok(rd.take(count)?.to_vec())
}

/// Binary subset of an IDX pair: `class_a → +1`, `class_b → −1`, pixels / 255.
///
/// The whole file is scanned first (both classes must occur somewhere), then
/// the matches are truncated to the first `limit` in file order.
pub fn load_idx_pair(
    images_path: &Path,
    labels_path: &Path,
    class_a: u8,
    class_b: u8,
    limit: usize,
) -> Result<Dataset> {
    let images = read_idx_images(images_path)?;
    let labels = read_idx_labels(labels_path)?;
    if labels.len() != images.count {
        return Err(Error::DimensionMismatch {
            expected: images.count,
            got: labels.len(),
        });
    }
    let matches: Vec<usize> = labels
        .iter()
        .enumerate()
        .filter(|(_, &l)| l == class_a || l == class_b)
        .map(|(i, _)| i)
        .collect();
    for class in [class_a, class_b] {
        if !matches.iter().any(|&i| labels[i] == class) {
            return Err(Error::ClassNotFound { class });
        }
    }
    let keep = &matches[..matches.len().min(limit)];
    if keep.is_empty() {
        return Err(Error::InvalidArgument("limit must be at least 1".into()));
    }
    let d = images.rows * images.cols;
    let mut x = Matrix::zeros(keep.len(), d);
    let mut y = Vec::with_capacity(keep.len());
    for (row, &i) in keep.iter().enumerate() {
        let src = &images.pixels[i * d..(i + 1) * d];
        for (dst, &px) in x.row_mut(row).iter_mut().zip(src) {
            *dst = f64::from(px) / 255.0;
        }
        y.push(if labels[i] == class_a { 1.0 } else { -1.0 });
    }
    Dataset::new(x, y, Recipe::IdxPair { class_a, class_b }, None)
}
