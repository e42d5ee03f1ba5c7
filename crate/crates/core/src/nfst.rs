//! Null Foley-Sammon transform.
//!
//! The null projecting directions span the part of the data span on which
//! within-class scatter vanishes and between-class scatter is positive.
//! Projecting onto them maps every training sample of a class to the same
//! point.

use log::warn;

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::linalg::{
    canonical_sign, orthonormal_basis, psd_nullspace, symmetric_eig, Matrix, Vector,
    DEFAULT_BASIS_TOL, DEFAULT_NULLSPACE_TOL,
};

/// Directions with between-class scatter at or below this fraction of
/// `tr(S_b)` carry no class information and are dropped.
const MIN_BETWEEN_FRACTION: f64 = 1e-12;
/// Reduced within-class scatter this small relative to the total scatter is
/// roundoff from exactly collapsed classes.
const ZERO_WITHIN_FRACTION: f64 = 1e-20;

/// Fitted projection onto the null projecting directions.
#[derive(Debug, Clone, PartialEq)]
pub struct NullspaceProjection {
    /// `d x k` with orthonormal columns, `k <= c - 1`.
    pub w_n: Matrix,
    /// Mean of the training data. Kept for diagnostics; projection does not
    /// subtract it.
    pub train_mean: Vector,
    pub class_count: usize,
    pub input_dim: usize,
}

impl NullspaceProjection {
    pub fn output_dim(&self) -> usize {
        self.w_n.ncols()
    }

    pub fn project(&self, x: &[f64]) -> Result<Vector> {
        nfst_project(self, x)
    }

    /// Projects every row of `x`.
    pub fn project_rows(&self, x: &Matrix) -> Result<Matrix> {
        if x.ncols() != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                actual: x.ncols(),
            });
        }
        Ok(x * &self.w_n)
    }
}

pub fn nfst_fit(train: &LabeledDataset) -> Result<NullspaceProjection> {
    let c = train.class_count();
    if c < 2 {
        return Err(Error::InvalidInput(format!("need at least 2 classes, got {c}")));
    }
    let x = train.features();
    let (n, d) = x.shape();
    let nf = n as f64;
    let sizes = train.class_sizes();
    let mean: Vector = x.row_mean().transpose();
    let mut class_means = vec![Vector::zeros(d); c];
    for (i, &l) in train.labels().iter().enumerate() {
        class_means[l] += x.row(i).transpose();
    }
    for (m, &ni) in class_means.iter_mut().zip(&sizes) {
        *m /= ni as f64;
    }

    // Zero-mean data as columns; its span is the complement of the total
    // scatter nullspace.
    let mut p_t = x.transpose();
    for mut col in p_t.column_iter_mut() {
        col -= &mean;
    }
    let q = orthonormal_basis(&p_t, DEFAULT_BASIS_TOL)?;
    if q.ncols() == 0 {
        return Err(Error::NoNullspace);
    }

    // Q^T S_w Q = (1/n) R R^T with R the within-class deviations in Q coordinates.
    let mut h_w = x.transpose();
    for (j, &l) in train.labels().iter().enumerate() {
        let mut col = h_w.column_mut(j);
        col -= &class_means[l];
    }
    let r = q.tr_mul(&h_w);
    let reduced_within = &r * r.transpose() / nf;
    let reduced_total = {
        let t = q.tr_mul(&p_t);
        (&t * t.transpose() / nf).trace()
    };

    let beta = if reduced_within.trace() <= ZERO_WITHIN_FRACTION * reduced_total {
        Matrix::identity(q.ncols(), q.ncols())
    } else {
        psd_nullspace(&reduced_within, DEFAULT_NULLSPACE_TOL)?
    };
    if beta.ncols() == 0 {
        return Err(Error::NoNullspace);
    }

    // Between-class scatter restricted to the nullspace, G G^T with
    // G = [sqrt(n_i / n) beta^T Q^T (m_i - m)].
    let mut g = Matrix::zeros(beta.ncols(), c);
    let mut between_trace = 0.0;
    for (k, (m, &ni)) in class_means.iter().zip(&sizes).enumerate() {
        let diff = (m - &mean) * (ni as f64 / nf).sqrt();
        between_trace += diff.norm_squared();
        g.set_column(k, &beta.tr_mul(&q.tr_mul(&diff)));
    }
    let rotation = symmetric_eig(&(&g * g.transpose()))?;
    let keep: Vec<usize> = (0..rotation.len())
        .filter(|&i| rotation.eigenvalues[i] > MIN_BETWEEN_FRACTION * between_trace)
        .take(c - 1)
        .collect();
    if keep.is_empty() {
        return Err(Error::NoNullspace);
    }
    if keep.len() < c - 1 {
        warn!(
            "found {} null projecting directions, fewer than c - 1 = {}",
            keep.len(),
            c - 1
        );
    }

    let mut w_n = &q * (&beta * rotation.eigenvectors.select_columns(&keep));
    for mut col in w_n.column_iter_mut() {
        canonical_sign(col.as_view_mut());
    }
    Ok(NullspaceProjection {
        w_n,
        train_mean: mean,
        class_count: c,
        input_dim: d,
    })
}

/// `W_N^T x`, without mean subtraction.
pub fn nfst_project(model: &NullspaceProjection, x: &[f64]) -> Result<Vector> {
    if x.len() != model.input_dim {
        return Err(Error::DimensionMismatch {
            expected: model.input_dim,
            actual: x.len(),
        });
    }
    Ok(model.w_n.tr_mul(&Vector::from_column_slice(x)))
}
