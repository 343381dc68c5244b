//! Patch sampling, per-patch normalization and ZCA whitening.

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, ArrayView1, ArrayViewMut1, Axis, Zip};

use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::tensor::FeatureMapSet;

/// Unrolled volume patches, one per column.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchMatrix {
    data: Array2<f64>,
    patch_side: usize,
    depth: usize,
}

impl PatchMatrix {
    pub fn new(data: Array2<f64>, patch_side: usize, depth: usize) -> Result<Self> {
        if data.nrows() != patch_side * patch_side * depth {
            return Err(Error::Dim(format!(
                "{} rows for {patch_side}x{patch_side}x{depth} patches",
                data.nrows()
            )));
        }
        if data.ncols() == 0 {
            return Err(Error::Dim("patch matrix has no columns".into()));
        }
        Ok(Self {
            data,
            patch_side,
            depth,
        })
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn into_data(self) -> Array2<f64> {
        self.data
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn n_patches(&self) -> usize {
        self.data.ncols()
    }

    pub fn patch_side(&self) -> usize {
        self.patch_side
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    /// Applies [`normalize_patch`] to every column in place.
    pub fn normalize_columns(&mut self) {
        self.data
            .axis_iter_mut(Axis(1))
            .for_each(|col| normalize_in_place(col));
    }
}

/// Copies the `p x p` volume patch at `(row, col)` into `out`, depth-major
/// then row-major.
pub(crate) fn copy_patch(set: &FeatureMapSet, p: usize, row: usize, col: usize, out: &mut [f64]) {
    let maps = set.maps();
    let mut k = 0;
    for d in 0..set.depth() {
        for r in row..row + p {
            for c in col..col + p {
                out[k] = maps[[d, r, c]];
                k += 1;
            }
        }
    }
}

/// Samples `n_patches` positions uniformly over (image, row, column), with
/// replacement.
pub fn extract_patches(
    sets: &[FeatureMapSet],
    p: usize,
    n_patches: usize,
    rng: &mut SeededRng,
) -> Result<PatchMatrix> {
    let first = sets
        .first()
        .ok_or_else(|| Error::Dim("no feature map sets to sample from".into()))?;
    let depth = first.depth();
    if n_patches == 0 || p == 0 {
        return Err(Error::Dim("patch side and count must be positive".into()));
    }
    for s in sets {
        if s.depth() != depth {
            return Err(Error::Dim("feature map sets differ in depth".into()));
        }
        if p > s.height() || p > s.width() {
            return Err(Error::InvalidPatchSize {
                patch: p,
                height: s.height(),
                width: s.width(),
            });
        }
    }
    let d = p * p * depth;
    let mut data = Array2::zeros((n_patches, d));
    for mut row in data.axis_iter_mut(Axis(0)) {
        let set = &sets[rng.below(sets.len())];
        let r = rng.below(set.height() - p + 1);
        let c = rng.below(set.width() - p + 1);
        copy_patch(set, p, r, c, row.as_slice_mut().expect("row-major"));
    }
    PatchMatrix::new(data.reversed_axes().as_standard_layout().into_owned(), p, depth)
}

/// Divides by the largest magnitude, then subtracts the mean. An all-zero
/// patch stays zero.
pub fn normalize_patch(patch: &[f64]) -> Vec<f64> {
    let mut out = Array1::from(patch.to_vec());
    normalize_in_place(out.view_mut());
    out.to_vec()
}

pub(crate) fn normalize_in_place(mut x: ArrayViewMut1<'_, f64>) {
    let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak == 0.0 {
        x.fill(0.0);
        return;
    }
    x.mapv_inplace(|v| v / peak);
    let mean = x.sum() / x.len() as f64;
    x.mapv_inplace(|v| v - mean);
}

/// Whitening transform `y = matrix * (x - mean)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ZcaTransform {
    pub mean: Array1<f64>,
    pub matrix: Array2<f64>,
    pub epsilon: f64,
}

impl ZcaTransform {
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: Array1::zeros(dim),
            matrix: Array2::eye(dim),
            epsilon: f64::MIN_POSITIVE,
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply_vector(&self, x: ArrayView1<'_, f64>) -> Array1<f64> {
        self.matrix.dot(&(&x - &self.mean))
    }
}

/// Population covariance (divides by N) of the columns.
pub fn covariance(data: &Array2<f64>) -> (Array1<f64>, Array2<f64>) {
    let n = data.ncols() as f64;
    let mean = data.sum_axis(Axis(1)) / n;
    let centered = data - &mean.view().insert_axis(Axis(1));
    let cov = centered.dot(&centered.t()) / n;
    (mean, cov)
}

/// Fits `V (D + eps I)^{-1/2} V^T` from the eigendecomposition `C = V D V^T`
/// of the patch covariance.
pub fn fit_zca(patches: &PatchMatrix, epsilon: f64) -> Result<ZcaTransform> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::Config(format!("ZCA epsilon must be positive, got {epsilon}")));
    }
    if let Some(((r, c), &value)) = patches.data().indexed_iter().find(|(_, v)| !v.is_finite()) {
        return Err(Error::NonFiniteValue {
            coord: vec![r, c],
            value,
        });
    }
    let (mean, cov) = covariance(patches.data());
    let d = cov.nrows();
    let eig = SymmetricEigen::new(DMatrix::from_fn(d, d, |i, j| cov[[i, j]]));
    let top = eig.eigenvalues.iter().fold(0.0f64, |m, &v| m.max(v));
    let floor = 1e-12 * top;
    let scale: Vec<f64> = eig
        .eigenvalues
        .iter()
        .map(|&l| {
            let l = if l < floor { 0.0 } else { l };
            1.0 / (l + epsilon).sqrt()
        })
        .collect();
    let v = &eig.eigenvectors;
    let mut matrix = Array2::zeros((d, d));
    for i in 0..d {
        for j in 0..=i {
            let s: f64 = (0..d).map(|k| v[(i, k)] * scale[k] * v[(j, k)]).sum();
            matrix[[i, j]] = s;
            matrix[[j, i]] = s;
        }
    }
    Ok(ZcaTransform {
        mean,
        matrix,
        epsilon,
    })
}

pub fn apply_zca(t: &ZcaTransform, patches: &PatchMatrix) -> Result<PatchMatrix> {
    if patches.dim() != t.dim() {
        return Err(Error::Dim(format!(
            "patch dimension {} does not match transform dimension {}",
            patches.dim(),
            t.dim()
        )));
    }
    let centered = patches.data() - &t.mean.view().insert_axis(Axis(1));
    PatchMatrix::new(t.matrix.dot(&centered), patches.patch_side, patches.depth)
}

/// Returns true when `a` is symmetric to within `tol`.
pub fn is_symmetric(a: &Array2<f64>, tol: f64) -> bool {
    let mut ok = true;
    Zip::from(a).and(&a.t()).for_each(|x, y| ok &= (x - y).abs() <= tol);
    ok
}
