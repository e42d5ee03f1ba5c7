//! Kernel functions, Gram matrices and the automatic RBF width.
//!
//! Point sets are matrices with one point per row.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    Rbf,
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelWidth {
    /// Root mean squared pairwise distance of the training points.
    Auto,
    Fixed(f64),
}

/// Kernel choice as configured, before the width is resolved.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    pub kind: KernelKind,
    pub width: KernelWidth,
}

impl KernelSpec {
    pub fn rbf_auto() -> Self {
        Self {
            kind: KernelKind::Rbf,
            width: KernelWidth::Auto,
        }
    }

    pub fn linear() -> Self {
        Self {
            kind: KernelKind::Linear,
            width: KernelWidth::Auto,
        }
    }

    /// Fixes the kernel, computing an automatic width from `points` if needed.
    pub fn resolve(&self, points: &Matrix) -> Result<Kernel> {
        match (self.kind, self.width) {
            (KernelKind::Linear, _) => Ok(Kernel::Linear),
            (KernelKind::Rbf, KernelWidth::Fixed(sigma)) => Kernel::rbf(sigma),
            (KernelKind::Rbf, KernelWidth::Auto) => Kernel::rbf(kernel_width_auto(points)?),
        }
    }
}

impl Default for KernelSpec {
    fn default() -> Self {
        Self::rbf_auto()
    }
}

/// A kernel with all parameters fixed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Kernel {
    /// `exp(-|a - b|^2 / (2 width^2))`
    Rbf { width: f64 },
    Linear,
}

impl Kernel {
    pub fn rbf(width: f64) -> Result<Self> {
        if !(width > 0.0 && width.is_finite()) {
            return Err(Error::InvalidInput(format!("RBF width must be positive, got {width}")));
        }
        Ok(Kernel::Rbf { width })
    }

    fn eval_slices<'a>(
        &self,
        a: impl Iterator<Item = &'a f64>,
        b: impl Iterator<Item = &'a f64>,
    ) -> f64 {
        match *self {
            Kernel::Linear => a.zip(b).map(|(x, y)| x * y).sum(),
            Kernel::Rbf { width } => {
                let d2: f64 = a.zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                (-d2 / (2.0 * width * width)).exp()
            }
        }
    }
}

/// Root mean squared distance over all unordered pairs of rows.
pub fn kernel_width_auto(points: &Matrix) -> Result<f64> {
    let n = points.nrows();
    if n < 2 {
        return Err(Error::InvalidInput(format!(
            "kernel width needs at least 2 points, got {n}"
        )));
    }
    // sum_{i<j} |z_i - z_j|^2 = n * sum_i |z_i - mean|^2
    let mean = points.row_mean();
    let centered: f64 = points
        .row_iter()
        .map(|r| (r - &mean).norm_squared())
        .sum();
    let sigma = (2.0 * centered / (n - 1) as f64).sqrt();
    if !(sigma > 0.0) {
        return Err(Error::ZeroWidth);
    }
    Ok(sigma)
}

pub fn kernel_eval(kernel: &Kernel, z1: &[f64], z2: &[f64]) -> Result<f64> {
    if z1.len() != z2.len() {
        return Err(Error::DimensionMismatch {
            expected: z1.len(),
            actual: z2.len(),
        });
    }
    Ok(kernel.eval_slices(z1.iter(), z2.iter()))
}

/// `K[p, q] = k(a_p, b_q)` for rows of `a` and `b`.
pub fn kernel_cross(kernel: &Kernel, a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.ncols() != b.ncols() {
        return Err(Error::DimensionMismatch {
            expected: a.ncols(),
            actual: b.ncols(),
        });
    }
    // Transposed copies give contiguous per-point slices.
    let at = a.transpose();
    let bt = b.transpose();
    Ok(Matrix::from_fn(a.nrows(), b.nrows(), |p, q| {
        kernel.eval_slices(at.column(p).iter(), bt.column(q).iter())
    }))
}

/// Symmetric Gram matrix of the rows of `points`.
pub fn kernel_matrix(kernel: &Kernel, points: &Matrix) -> Matrix {
    let n = points.nrows();
    let pt = points.transpose();
    let mut k = Matrix::zeros(n, n);
    for p in 0..n {
        for q in p..n {
            let v = kernel.eval_slices(pt.column(p).iter(), pt.column(q).iter());
            k[(p, q)] = v;
            k[(q, p)] = v;
        }
    }
    k
}

/// The `n x n_i` block of kernel values between every point and the members
/// of one class, columns in the members' original order.
pub fn class_kernel_block(kernel: &Kernel, all_points: &Matrix, class_points: &Matrix) -> Result<Matrix> {
    if class_points.nrows() == 0 {
        return Err(Error::InvalidInput("class has no points".into()));
    }
    kernel_cross(kernel, all_points, class_points)
}
