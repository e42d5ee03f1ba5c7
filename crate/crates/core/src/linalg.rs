//! Dense symmetric linear algebra used by the discriminant solvers.
//!
//! Matrices are `nalgebra::DMatrix<f64>`. Eigen-decompositions are returned
//! sorted by descending eigenvalue, ties kept in their original order, and
//! each eigenvector is signed so that its largest-magnitude entry is positive.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::data::LabeledDataset;
use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Drop tolerance for Gram-Schmidt, relative to the largest input column norm.
pub const DEFAULT_BASIS_TOL: f64 = 1e-10;
/// Eigenvalues at or below `rel_tol * lambda_max` count as zero.
pub const DEFAULT_NULLSPACE_TOL: f64 = 1e-10;
/// Cholesky pivots at or below this fraction of the largest diagonal entry fail.
const CHOLESKY_PIVOT_TOL: f64 = 1e-12;

/// Within, between and total class scatter, all normalized by `n`.
#[derive(Debug, Clone)]
pub struct ScatterSet {
    pub s_w: Matrix,
    pub s_b: Matrix,
    pub s_t: Matrix,
    pub global_mean: Vector,
    pub class_means: Vec<Vector>,
    pub class_priors: Vec<f64>,
}

/// Eigenvalues (descending) with matching eigenvector columns.
#[derive(Debug, Clone)]
pub struct EigenResult {
    pub eigenvalues: Vector,
    pub eigenvectors: Matrix,
}

impl EigenResult {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// Keeps only the pairs whose eigenvalue satisfies `keep`.
    pub fn retain(&self, keep: impl Fn(f64) -> bool) -> EigenResult {
        let idx: Vec<usize> = (0..self.len())
            .filter(|&i| keep(self.eigenvalues[i]))
            .collect();
        EigenResult {
            eigenvalues: Vector::from_iterator(idx.len(), idx.iter().map(|&i| self.eigenvalues[i])),
            eigenvectors: self.eigenvectors.select_columns(&idx),
        }
    }
}

fn check_square(a: &Matrix) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(Error::InvalidInput(format!(
            "expected a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    Ok(())
}

pub(crate) fn symmetrize(a: &Matrix) -> Matrix {
    (a + a.transpose()) * 0.5
}

/// Flips `v` so that its entry of largest magnitude is positive.
/// The first such entry wins on ties.
pub(crate) fn canonical_sign(mut v: nalgebra::DVectorViewMut<'_, f64>) {
    let mut best = 0.0f64;
    let mut sign = 1.0;
    for x in v.iter() {
        if x.abs() > best {
            best = x.abs();
            sign = x.signum();
        }
    }
    if sign < 0.0 {
        v.neg_mut();
    }
}

/// Scatter matrices of a labeled dataset.
pub fn compute_scatter(dataset: &LabeledDataset) -> Result<ScatterSet> {
    let c = dataset.class_count();
    if c < 2 {
        return Err(Error::InvalidInput(format!(
            "scatter needs at least 2 classes, got {c}"
        )));
    }
    let x = dataset.features();
    let (n, d) = x.shape();
    let nf = n as f64;
    let counts = dataset.class_sizes();

    let global_mean: Vector = x.row_mean().transpose();
    let mut class_means = vec![Vector::zeros(d); c];
    for (i, &label) in dataset.labels().iter().enumerate() {
        class_means[label] += x.row(i).transpose();
    }
    for (m, &ni) in class_means.iter_mut().zip(&counts) {
        *m /= ni as f64;
    }

    // Rows of the centered matrices are the deviations; scatter = D^T D / n.
    let mut within = Matrix::zeros(n, d);
    let mut total = Matrix::zeros(n, d);
    for (i, &label) in dataset.labels().iter().enumerate() {
        let row = x.row(i);
        within.set_row(i, &(row - class_means[label].transpose()));
        total.set_row(i, &(row - global_mean.transpose()));
    }
    let mut between = Matrix::zeros(c, d);
    for (k, (m, &ni)) in class_means.iter().zip(&counts).enumerate() {
        between.set_row(k, &((m - &global_mean).transpose() * (ni as f64).sqrt()));
    }

    let s_w = symmetrize(&(within.tr_mul(&within) / nf));
    let s_b = symmetrize(&(between.tr_mul(&between) / nf));
    let s_t = symmetrize(&(total.tr_mul(&total) / nf));
    let class_priors = counts.iter().map(|&ni| ni as f64 / nf).collect();

    Ok(ScatterSet {
        s_w,
        s_b,
        s_t,
        global_mean,
        class_means,
        class_priors,
    })
}

/// Orthonormal basis of the column space of `columns`.
///
/// Classical Gram-Schmidt run twice per column. A column is dropped when its
/// residual norm falls to `tol` times the largest input column norm or below,
/// so the returned column count is the numerical rank.
pub fn orthonormal_basis(columns: &Matrix, tol: f64) -> Result<Matrix> {
    if !(tol > 0.0) {
        return Err(Error::InvalidInput(format!("tolerance must be positive, got {tol}")));
    }
    let rows = columns.nrows();
    let max_norm = columns
        .column_iter()
        .map(|c| c.norm())
        .fold(0.0f64, f64::max);
    let mut basis: Vec<Vector> = Vec::new();
    if max_norm == 0.0 {
        return Ok(Matrix::zeros(rows, 0));
    }
    let drop_below = tol * max_norm;

    for col in columns.column_iter() {
        let mut v: Vector = col.into_owned();
        for _pass in 0..2 {
            let coeffs: Vec<f64> = basis.iter().map(|q| q.dot(&v)).collect();
            for (q, c) in basis.iter().zip(coeffs) {
                v.axpy(-c, q, 1.0);
            }
        }
        let norm = v.norm();
        if norm > drop_below {
            basis.push(v / norm);
        }
        if basis.len() == rows {
            break;
        }
    }
    Ok(if basis.is_empty() {
        Matrix::zeros(rows, 0)
    } else {
        Matrix::from_columns(&basis)
    })
}

/// Eigen-decomposition of a symmetric matrix, eigenvalues descending.
pub fn symmetric_eig(a: &Matrix) -> Result<EigenResult> {
    check_square(a)?;
    let n = a.nrows();
    if n == 0 {
        return Ok(EigenResult {
            eigenvalues: Vector::zeros(0),
            eigenvectors: Matrix::zeros(0, 0),
        });
    }
    let eig = SymmetricEigen::new(symmetrize(a));
    let mut order: Vec<usize> = (0..n).collect();
    // Stable sort keeps the original index order on ties.
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));

    let eigenvalues = Vector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut eigenvectors = eig.eigenvectors.select_columns(&order);
    for mut col in eigenvectors.column_iter_mut() {
        canonical_sign(col.as_view_mut());
    }
    Ok(EigenResult {
        eigenvalues,
        eigenvectors,
    })
}

/// Orthonormal basis of the nullspace of a symmetric PSD matrix.
///
/// An eigenvalue counts as zero when it is at most `rel_tol * lambda_max`.
/// When `lambda_max <= 0` the whole space is returned.
pub fn psd_nullspace(a: &Matrix, rel_tol: f64) -> Result<Matrix> {
    check_square(a)?;
    let n = a.nrows();
    if n == 0 {
        return Ok(Matrix::zeros(0, 0));
    }
    let eig = symmetric_eig(a)?;
    let lambda_max = eig.eigenvalues[0];
    if lambda_max <= 0.0 {
        return Ok(Matrix::identity(n, n));
    }
    let cutoff = rel_tol * lambda_max;
    Ok(eig.retain(|l| l <= cutoff).eigenvectors)
}

/// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
pub fn cholesky(b: &Matrix) -> Result<Matrix> {
    check_square(b)?;
    let n = b.nrows();
    let max_diag = (0..n).map(|i| b[(i, i)]).fold(0.0f64, f64::max);
    let floor = CHOLESKY_PIVOT_TOL * max_diag;
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut pivot = b[(j, j)];
        for k in 0..j {
            pivot -= l[(j, k)] * l[(j, k)];
        }
        if !(pivot > floor) {
            return Err(Error::SingularMetric { index: j, pivot });
        }
        let ljj = pivot.sqrt();
        l[(j, j)] = ljj;
        for i in (j + 1)..n {
            let mut s = b[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    Ok(l)
}

/// Solves `A x = lambda B x` for symmetric `A` and symmetric positive
/// definite `B` by whitening with the Cholesky factor of `B`.
///
/// Eigenvectors are `B`-orthonormal.
pub fn generalized_eig_spd(a: &Matrix, b: &Matrix) -> Result<EigenResult> {
    check_square(a)?;
    check_square(b)?;
    if a.nrows() != b.nrows() {
        return Err(Error::DimensionMismatch {
            expected: a.nrows(),
            actual: b.nrows(),
        });
    }
    let b = symmetrize(b);
    let l = cholesky(&b)?;

    // C = L^-1 A L^-T
    let mut tmp = symmetrize(a);
    if !l.solve_lower_triangular_mut(&mut tmp) {
        return Err(Error::SingularMetric { index: 0, pivot: 0.0 });
    }
    let mut c = tmp.transpose();
    l.solve_lower_triangular_mut(&mut c);
    let inner = symmetric_eig(&c)?;

    // alpha = L^-T u
    let mut vectors = inner.eigenvectors;
    l.tr_solve_lower_triangular_mut(&mut vectors);
    for mut col in vectors.column_iter_mut() {
        canonical_sign(col.as_view_mut());
    }
    Ok(EigenResult {
        eigenvalues: inner.eigenvalues,
        eigenvectors: vectors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth_gaussian_classes;
    use crate::testutil::{max_abs, random_matrix, random_spd, random_symmetric};
    use proptest::prelude::*;

    fn residual_ok(a: &Matrix, eig: &EigenResult, tol: f64) {
        let scale = a.norm();
        for k in 0..eig.len() {
            let v = eig.eigenvectors.column(k);
            let r = a * v - v * eig.eigenvalues[k];
            assert!(r.norm() <= tol * scale.max(1.0), "residual {}", r.norm());
        }
    }

    #[test]
    fn scatter_duplicate_points_have_zero_within() {
        let x = Matrix::from_row_slice(4, 2, &[1.0, 2.0, 1.0, 2.0, -3.0, 0.5, -3.0, 0.5]);
        let ds = LabeledDataset::new(x, vec![0, 0, 1, 1]).unwrap();
        let s = compute_scatter(&ds).unwrap();
        assert_eq!(max_abs(&s.s_w), 0.0);
        assert!(max_abs(&s.s_b) > 0.0);
    }

    #[test]
    fn scatter_identical_samples_is_zero() {
        let x = Matrix::from_element(6, 3, 1.25);
        let ds = LabeledDataset::new(x, vec![0, 1, 2, 0, 1, 2]).unwrap();
        let s = compute_scatter(&ds).unwrap();
        assert_eq!(max_abs(&s.s_w), 0.0);
        assert_eq!(max_abs(&s.s_b), 0.0);
    }

    #[test]
    fn scatter_total_matches_pooled_covariance() {
        let ds = synth_gaussian_classes(3, 4, 8, 1.0, 3.0, 11).unwrap();
        let s = compute_scatter(&ds).unwrap();
        // Direct (1/n) P_t P_t^T with P_t the zero-mean data as columns.
        let x = ds.features();
        let n = x.nrows();
        let mut p = Matrix::zeros(x.ncols(), n);
        for j in 0..x.ncols() {
            let mean: f64 = (0..n).map(|i| x[(i, j)]).sum::<f64>() / n as f64;
            for i in 0..n {
                p[(j, i)] = x[(i, j)] - mean;
            }
        }
        let direct = &p * p.transpose() / n as f64;
        let scale = max_abs(&direct);
        assert!(max_abs(&(&s.s_t - &direct)) <= 1e-12 * scale);
        assert!(max_abs(&(&s.s_t - (&s.s_b + &s.s_w))) <= 1e-10 * scale);
        let priors: f64 = s.class_priors.iter().sum();
        assert!((priors - 1.0).abs() < 1e-15);
    }

    #[test]
    fn scatter_rejects_single_class() {
        let ds = LabeledDataset::new(Matrix::zeros(3, 2), vec![0, 0, 0]).unwrap();
        assert!(matches!(compute_scatter(&ds), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn basis_of_identity() {
        let q = orthonormal_basis(&Matrix::identity(3, 3), DEFAULT_BASIS_TOL).unwrap();
        assert_eq!(q.ncols(), 3);
        assert!(max_abs(&(q.tr_mul(&q) - Matrix::identity(3, 3))) <= 1e-10);
    }

    #[test]
    fn basis_of_repeated_column() {
        let m = Matrix::from_column_slice(3, 2, &[1.0, 2.0, 3.0, 1.0, 2.0, 3.0]);
        let q = orthonormal_basis(&m, DEFAULT_BASIS_TOL).unwrap();
        assert_eq!(q.ncols(), 1);
    }

    #[test]
    fn basis_of_zero_matrix_is_empty() {
        let q = orthonormal_basis(&Matrix::zeros(4, 3), DEFAULT_BASIS_TOL).unwrap();
        assert_eq!(q.shape(), (4, 0));
        assert!(orthonormal_basis(&Matrix::zeros(4, 3), 0.0).is_err());
    }

    #[test]
    fn basis_of_centered_data_loses_one_rank() {
        let mut p = random_matrix(10, 6, 5);
        let mean = p.column_mean();
        for mut col in p.column_iter_mut() {
            col -= &mean;
        }
        // Independent rank oracle: singular values above a relative cutoff.
        let sv = p.clone().svd(false, false).singular_values;
        let rank = sv.iter().filter(|&&s| s > 1e-10 * sv.max()).count();
        assert_eq!(rank, 5);
        let q = orthonormal_basis(&p, DEFAULT_BASIS_TOL).unwrap();
        assert_eq!(q.ncols(), rank);
        assert!(max_abs(&(q.tr_mul(&q) - Matrix::identity(5, 5))) <= 1e-10);
        // Q spans the columns of P.
        let resid = &p - &q * q.tr_mul(&p);
        assert!(max_abs(&resid) <= 1e-12 * max_abs(&p));
    }

    #[test]
    fn eig_of_diagonal() {
        let a = Matrix::from_diagonal(&Vector::from_vec(vec![1.0, -2.0, 3.0]));
        let e = symmetric_eig(&a).unwrap();
        assert_eq!(e.eigenvalues.as_slice(), &[3.0, 1.0, -2.0]);
        let expected = Matrix::from_column_slice(3, 3, &[0., 0., 1., 1., 0., 0., 0., 1., 0.]);
        assert_eq!(e.eigenvectors, expected);
    }

    #[test]
    fn eig_of_rank_one() {
        let v = Vector::from_vec(vec![0.6, 0.0, -0.8]);
        let a = &v * v.transpose();
        let e = symmetric_eig(&a).unwrap();
        assert!((e.eigenvalues[0] - 1.0).abs() < 1e-14);
        assert!(e.eigenvalues[1].abs() < 1e-14 && e.eigenvalues[2].abs() < 1e-14);
        let top = e.eigenvectors.column(0);
        assert!((top.dot(&v).abs() - 1.0).abs() < 1e-14);
        // Sign convention: largest-magnitude entry positive.
        assert!(top[2] > 0.0);
    }

    #[test]
    fn eig_reconstructs_random_symmetric() {
        let a = random_symmetric(6, 3);
        let e = symmetric_eig(&a).unwrap();
        let recon = &e.eigenvectors * Matrix::from_diagonal(&e.eigenvalues) * e.eigenvectors.transpose();
        assert!(max_abs(&(recon - &a)) <= 1e-8);
        residual_ok(&a, &e, 1e-8);
        assert!(e.eigenvalues.as_slice().windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn eig_rejects_non_square() {
        assert!(matches!(symmetric_eig(&Matrix::zeros(2, 3)), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn nullspace_of_zero_is_everything() {
        let n = psd_nullspace(&Matrix::zeros(4, 4), DEFAULT_NULLSPACE_TOL).unwrap();
        assert_eq!(n.ncols(), 4);
        assert!(max_abs(&(n.tr_mul(&n) - Matrix::identity(4, 4))) < 1e-15);
    }

    #[test]
    fn nullspace_of_diag() {
        let a = Matrix::from_diagonal(&Vector::from_vec(vec![1.0, 1.0, 0.0]));
        let n = psd_nullspace(&a, DEFAULT_NULLSPACE_TOL).unwrap();
        assert_eq!(n.ncols(), 1);
        assert_eq!(n.column(0).as_slice(), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn generalized_diag_identity() {
        let a = Matrix::from_diagonal(&Vector::from_vec(vec![2.0, 0.0]));
        let e = generalized_eig_spd(&a, &Matrix::identity(2, 2)).unwrap();
        assert_eq!(e.eigenvalues.as_slice(), &[2.0, 0.0]);
        assert_eq!(e.eigenvectors, Matrix::identity(2, 2));
    }

    #[test]
    fn generalized_scaled_identity_metric() {
        let a = random_symmetric(5, 9);
        let plain = symmetric_eig(&a).unwrap();
        let b = Matrix::identity(5, 5) * 4.0;
        let g = generalized_eig_spd(&a, &b).unwrap();
        for k in 0..5 {
            assert!((g.eigenvalues[k] - plain.eigenvalues[k] / 4.0).abs() < 1e-12);
            let v = g.eigenvectors.column(k);
            assert!((v.dot(&(&b * v)) - 1.0).abs() < 1e-12);
            let u = plain.eigenvectors.column(k);
            assert!((v * 2.0 - u).norm() < 1e-10);
        }
    }

    #[test]
    fn generalized_matches_dense_inverse_oracle() {
        let a = random_symmetric(8, 21);
        let b = random_spd(8, 22);
        let g = generalized_eig_spd(&a, &b).unwrap();

        // Oracle: eigenvalues of the non-symmetric B^-1 A via its real Schur form.
        let binv_a = b.clone().try_inverse().unwrap() * &a;
        let mut oracle: Vec<f64> = binv_a
            .complex_eigenvalues()
            .iter()
            .map(|z| {
                assert!(z.im.abs() < 1e-9);
                z.re
            })
            .collect();
        oracle.sort_by(|x, y| y.total_cmp(x));
        for (k, lo) in oracle.iter().enumerate() {
            let lam = g.eigenvalues[k];
            assert!((lam - lo).abs() <= 1e-9 * (1.0 + lo.abs()), "{lam} vs {lo}");
            let v = g.eigenvectors.column(k);
            assert!((&binv_a * v - v * lam).norm() <= 1e-8 * (1.0 + lam.abs()) * v.norm());
        }
        let gram = g.eigenvectors.tr_mul(&(&b * &g.eigenvectors));
        assert!(max_abs(&(gram - Matrix::identity(8, 8))) <= 1e-10);
        let scale = a.norm() + b.norm();
        for k in 0..8 {
            let v = g.eigenvectors.column(k);
            let r = &a * v - (&b * v) * g.eigenvalues[k];
            assert!(r.norm() <= 1e-7 * scale);
        }
    }

    #[test]
    fn generalized_rejects_indefinite_metric() {
        let a = Matrix::identity(2, 2);
        let b = Matrix::from_diagonal(&Vector::from_vec(vec![1.0, -1.0]));
        assert!(matches!(generalized_eig_spd(&a, &b), Err(Error::SingularMetric { .. })));
        let singular = Matrix::from_diagonal(&Vector::from_vec(vec![1.0, 0.0]));
        assert!(matches!(generalized_eig_spd(&a, &singular), Err(Error::SingularMetric { .. })));
    }

    proptest! {
        #[test]
        fn scatter_trace_identity(seed in 0u64..1000, c in 2usize..5, per in 1usize..4, d in 1usize..7) {
            let ds = synth_gaussian_classes(c, per, d, 1.0, 2.0, seed).unwrap();
            let s = compute_scatter(&ds).unwrap();
            let tt = s.s_t.trace();
            prop_assert!((tt - s.s_b.trace() - s.s_w.trace()).abs() <= 1e-10 * tt.max(1e-300));
            for m in [&s.s_w, &s.s_b, &s.s_t] {
                let e = symmetric_eig(m).unwrap();
                prop_assert!(e.eigenvalues[e.len() - 1] >= -1e-9 * e.eigenvalues[0].max(0.0) - 1e-300);
            }
        }

        #[test]
        fn basis_is_orthonormal(seed in 0u64..1000, rows in 1usize..12, cols in 1usize..12) {
            let m = random_matrix(rows, cols, seed);
            let q = orthonormal_basis(&m, DEFAULT_BASIS_TOL).unwrap();
            prop_assert_eq!(q.ncols(), rows.min(cols));
            let k = q.ncols();
            prop_assert!(max_abs(&(q.tr_mul(&q) - Matrix::identity(k, k))) <= 1e-10);
        }

        #[test]
        fn nullspace_annihilates(seed in 0u64..1000, n in 2usize..9, rank in 0usize..9) {
            let rank = rank.min(n);
            let f = random_matrix(n, rank, seed);
            let a = &f * f.transpose();
            let null = psd_nullspace(&a, DEFAULT_NULLSPACE_TOL).unwrap();
            let lmax = symmetric_eig(&a).unwrap().eigenvalues[0];
            if rank > 0 {
                prop_assert_eq!(null.ncols(), n - rank);
                prop_assert!(max_abs(&(&a * &null)) <= DEFAULT_NULLSPACE_TOL * lmax * 10.0);
            } else {
                prop_assert_eq!(null.ncols(), n);
            }
        }

        #[test]
        fn generalized_scale_invariant(seed in 0u64..1000, s in 0.01f64..100.0) {
            let a = random_symmetric(5, seed);
            let b = random_spd(5, seed + 1);
            let e1 = generalized_eig_spd(&a, &b).unwrap();
            let e2 = generalized_eig_spd(&(&a * s), &(&b * s)).unwrap();
            for k in 0..5 {
                let (x, y) = (e1.eigenvalues[k], e2.eigenvalues[k]);
                prop_assert!((x - y).abs() <= 1e-8 * x.abs().max(1e-8));
            }
        }

        #[test]
        fn psd_eigenvalues_not_negative(seed in 0u64..1000, n in 1usize..8, k in 1usize..8) {
            let f = random_matrix(n, k, seed);
            let e = symmetric_eig(&(&f * f.transpose())).unwrap();
            prop_assert!(e.eigenvalues[n - 1] >= -1e-9 * e.eigenvalues[0]);
        }
    }
}
