//! Canonical correlation analysis between a feature block and a label block.
//!
//! Both blocks are centered, the within-block covariances are ridged and
//! whitened through their symmetric inverse square roots, and the whitened
//! cross-covariance is factored into singular triplets. Singular values are
//! the canonical correlations; the singular vectors mapped back through the
//! whitening transforms are the canonical directions.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum CcaError {
    #[error("CCA needs at least 2 rows, got {0}")]
    TooFewRows(usize),
    #[error("feature block has {x} rows but label block has {y}")]
    RowMismatch { x: usize, y: usize },
    #[error("non-finite value in the {0} block")]
    NonFinite(&'static str),
    #[error("label {label} out of range for {n_class} classes")]
    LabelOutOfRange { label: usize, n_class: usize },
    #[error("ridge must be positive and finite, got {0}")]
    InvalidRidge(f64),
    #[error("within-block covariance of the {0} block is not positive definite")]
    NotPositiveDefinite(&'static str),
}

/// Regularizer added to the diagonal of both within-block covariance
/// matrices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "lowercase")]
pub enum Ridge {
    /// `factor * C_ii` on each diagonal entry, so rescaling a column rescales
    /// its ridge with it and canonical correlations stay unchanged. Entries
    /// with zero variance get the `Scaled` amount instead.
    Diagonal(f64),
    /// `lambda * I` with `lambda = factor * trace(C) / dim`. Falls back to
    /// `lambda = factor` when the block has zero variance.
    Scaled(f64),
    /// A fixed `lambda * I` for both blocks.
    Fixed(f64),
}

impl Default for Ridge {
    fn default() -> Self {
        Ridge::Diagonal(1e-8)
    }
}

impl Ridge {
    pub fn validate(self) -> Result<Self, CcaError> {
        let v = match self {
            Ridge::Diagonal(v) | Ridge::Scaled(v) | Ridge::Fixed(v) => v,
        };
        if v > 0.0 && v.is_finite() {
            Ok(self)
        } else {
            Err(CcaError::InvalidRidge(v))
        }
    }

    /// Adds the ridge to the diagonal of covariance matrix `cov`.
    pub fn apply(self, cov: &mut DMatrix<f64>) {
        let dim = cov.nrows();
        if dim == 0 {
            return;
        }
        let mean_var = cov.trace() / dim as f64;
        let scaled = |factor: f64| {
            if mean_var > 0.0 {
                factor * mean_var
            } else {
                factor
            }
        };
        for i in 0..dim {
            let c = cov[(i, i)];
            cov[(i, i)] += match self {
                Ridge::Fixed(v) => v,
                Ridge::Scaled(f) => scaled(f),
                Ridge::Diagonal(f) if c > 0.0 => f * c,
                Ridge::Diagonal(f) => scaled(f),
            };
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CcaResult {
    /// D x K feature-side canonical directions.
    pub proj_x: DMatrix<f64>,
    /// C x K label-side canonical directions.
    pub proj_y: DMatrix<f64>,
    /// Non-increasing canonical correlations.
    pub correlations: Vec<f64>,
}

impl CcaResult {
    pub fn n_components(&self) -> usize {
        self.correlations.len()
    }
}

/// N x n_class indicator matrix.
pub fn one_hot(labels: &[usize], n_class: usize) -> Result<DMatrix<f64>, CcaError> {
    let mut y = DMatrix::zeros(labels.len(), n_class);
    for (i, &label) in labels.iter().enumerate() {
        if label >= n_class {
            return Err(CcaError::LabelOutOfRange { label, n_class });
        }
        y[(i, label)] = 1.0;
    }
    Ok(y)
}

/// Number of canonical pairs worth reporting: `min(D, C', N - 1)`, where
/// `C'` is `C - 1` when every row of `y` has the same sum (an indicator
/// block loses one dimension to centering) and `C` otherwise.
pub fn component_count(x: &DMatrix<f64>, y: &DMatrix<f64>) -> usize {
    let n = x.nrows();
    let c = y.ncols();
    let constant_row_sum = n > 0 && {
        let first = y.row(0).sum();
        y.row_iter().all(|r| (r.sum() - first).abs() <= 1e-12 * first.abs().max(1.0))
    };
    let y_dof = if constant_row_sum { c.saturating_sub(1) } else { c };
    x.ncols().min(y_dof).min(n.saturating_sub(1))
}

pub fn center(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows() as f64;
    let mut out = m.clone();
    for mut col in out.column_iter_mut() {
        let mean = col.sum() / n;
        col.add_scalar_mut(-mean);
    }
    out
}

/// Inverse square root of a symmetric positive definite matrix.
fn inverse_sqrt(cov: DMatrix<f64>, block: &'static str) -> Result<DMatrix<f64>, CcaError> {
    let eig = SymmetricEigen::new(cov);
    let max = eig.eigenvalues.max();
    if eig.eigenvalues.iter().any(|&l| !(l > 0.0) || l <= max * 1e-300) {
        return Err(CcaError::NotPositiveDefinite(block));
    }
    let q = &eig.eigenvectors;
    let mut scaled = q.clone();
    for (mut col, l) in scaled.column_iter_mut().zip(eig.eigenvalues.iter()) {
        col /= l.sqrt();
    }
    Ok(scaled * q.transpose())
}

/// Flips each pair so the largest-magnitude entry of the feature direction
/// is positive (first such entry on ties).
pub fn orient_components(proj_x: &mut DMatrix<f64>, proj_y: &mut DMatrix<f64>) {
    for k in 0..proj_x.ncols() {
        let col = proj_x.column(k);
        let mut best = 0;
        for i in 1..col.len() {
            if col[i].abs() > col[best].abs() {
                best = i;
            }
        }
        if col.len() > 0 && col[best] < 0.0 {
            proj_x.column_mut(k).neg_mut();
            proj_y.column_mut(k).neg_mut();
        }
    }
}

pub fn compute_cca(x: &DMatrix<f64>, y: &DMatrix<f64>, ridge: Ridge) -> Result<CcaResult, CcaError> {
    let n = x.nrows();
    if y.nrows() != n {
        return Err(CcaError::RowMismatch { x: n, y: y.nrows() });
    }
    if n < 2 {
        return Err(CcaError::TooFewRows(n));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(CcaError::NonFinite("feature"));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(CcaError::NonFinite("label"));
    }
    let ridge = ridge.validate()?;
    let k = component_count(x, y);

    let xc = center(x);
    let yc = center(y);
    let denom = (n - 1) as f64;
    let mut cxx = xc.tr_mul(&xc) / denom;
    let mut cyy = yc.tr_mul(&yc) / denom;
    let cxy = xc.tr_mul(&yc) / denom;
    ridge.apply(&mut cxx);
    ridge.apply(&mut cyy);

    let wx = inverse_sqrt(cxx, "feature")?;
    let wy = inverse_sqrt(cyy, "label")?;
    let m = &wx * cxy * &wy;
    // Singular triplets of `m` through the symmetric eigendecomposition of
    // the C x C Gram matrix. nalgebra's SVD with vectors loses about 1e-7 on
    // the leading singular value of these near rank-one matrices.
    let gram = SymmetricEigen::new(m.tr_mul(&m));
    let mut order: Vec<usize> = (0..gram.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| {
        gram.eigenvalues[b]
            .total_cmp(&gram.eigenvalues[a])
            .then(a.cmp(&b))
    });
    order.truncate(k);

    let d = x.ncols();
    let c = y.ncols();
    let mut proj_x = DMatrix::zeros(d, k);
    let mut proj_y = DMatrix::zeros(c, k);
    let mut correlations = Vec::with_capacity(k);
    for (j, &s) in order.iter().enumerate() {
        let v = gram.eigenvectors.column(s);
        let mv = &m * v;
        let sigma = mv.norm();
        if sigma > 0.0 {
            proj_x.set_column(j, &(&wx * (mv / sigma)));
        }
        proj_y.set_column(j, &(&wy * v));
        correlations.push(sigma);
    }
    orient_components(&mut proj_x, &mut proj_y);
    Ok(CcaResult {
        proj_x,
        proj_y,
        correlations,
    })
}
