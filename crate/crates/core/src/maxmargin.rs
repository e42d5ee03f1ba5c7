//! Maximum margin criterion solvers.
//!
//! The linear criterion maximizes `tr(V^T (S_b - S_w) V)` over unit vectors.
//! The kernel variants express each discriminant as `v = sum_j alpha_j phi(z_j)`
//! and maximize `alpha^T (M - N) alpha`, either with `alpha^T alpha = 1`
//! (KMMC) or with `alpha^T K alpha = 1` so that `v` itself has unit norm in
//! feature space (NKMMC). The latter is a generalized eigenproblem in `K`.

use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::kernel::{kernel_cross, kernel_matrix, Kernel, KernelSpec};
use crate::linalg::{
    compute_scatter, generalized_eig_spd, symmetric_eig, symmetrize, EigenResult, Matrix, Vector,
};

/// Default regularization of the kernel metric, scaled by `tr(K) / n`.
pub const DEFAULT_REG: f64 = 1e-8;
/// Eigenvalues at or below this fraction of `max |lambda|` are not positive.
pub const POSITIVE_EIG_TOL: f64 = 1e-9;
/// Minimum `alpha^T K alpha` of a generalized eigenvector normalized to
/// `alpha^T (K + reg I) alpha = 1`.
const MIN_KERNEL_NORM: f64 = 0.5;

/// Class weights used when building `M`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weighting {
    /// `1 / n_i` on each class-mean outer product.
    #[default]
    Verbatim,
    /// Class prior `n_i / n`, the usual KMMC convention.
    Prior,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NkmmcOptions {
    pub reg: f64,
    pub weighting: Weighting,
}

impl Default for NkmmcOptions {
    fn default() -> Self {
        Self {
            reg: DEFAULT_REG,
            weighting: Weighting::Verbatim,
        }
    }
}

/// Unit-norm linear discriminant vectors as columns.
#[derive(Debug, Clone)]
pub struct LinearDiscriminants {
    pub v: Matrix,
    pub eigenvalues: Vector,
}

impl LinearDiscriminants {
    pub fn project_rows(&self, x: &Matrix) -> Result<Matrix> {
        if x.ncols() != self.v.nrows() {
            return Err(Error::DimensionMismatch {
                expected: self.v.nrows(),
                actual: x.ncols(),
            });
        }
        Ok(x * &self.v)
    }
}

/// Kernel expansion of the discriminant vectors over the training points.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelDiscriminant {
    /// One training point per row.
    pub train_points: Matrix,
    /// Column `k` holds the expansion coefficients of discriminant `k`.
    pub coefficients: Matrix,
    pub eigenvalues: Vector,
    pub kernel: Kernel,
}

impl KernelDiscriminant {
    pub fn output_dim(&self) -> usize {
        self.coefficients.ncols()
    }

    /// Sum of the retained eigenvalues, the attained criterion value.
    pub fn objective(&self) -> f64 {
        self.eigenvalues.sum()
    }

    pub fn project(&self, z: &[f64]) -> Result<Vector> {
        kernel_project(self, z)
    }

    /// Projects every row of `z`.
    pub fn project_rows(&self, z: &Matrix) -> Result<Matrix> {
        Ok(kernel_cross(&self.kernel, z, &self.train_points)? * &self.coefficients)
    }
}

/// Top eigenvectors of `(S_w + ridge I)^-1 S_b`, normalized to unit length.
/// Keeps `min(c - 1, d)` directions.
pub fn fisher_baseline_fit(train: &LabeledDataset, ridge: f64) -> Result<LinearDiscriminants> {
    if !(ridge >= 0.0) {
        return Err(Error::InvalidInput(format!("ridge must be non-negative, got {ridge}")));
    }
    let s = compute_scatter(train)?;
    let d = train.dim();
    let metric = &s.s_w + Matrix::identity(d, d) * ridge;
    let eig = generalized_eig_spd(&s.s_b, &metric).map_err(|e| match e {
        Error::SingularMetric { .. } => Error::SingularMatrix,
        e => e,
    })?;
    let r = (train.class_count() - 1).min(d);
    let mut v = eig.eigenvectors.columns(0, r).into_owned();
    for mut col in v.column_iter_mut() {
        let norm = col.norm();
        col /= norm;
    }
    Ok(LinearDiscriminants {
        v,
        eigenvalues: eig.eigenvalues.rows(0, r).into_owned(),
    })
}

/// Top `r` eigenvectors of `S_b - S_w`.
pub fn mmc_fit(train: &LabeledDataset, r: usize) -> Result<LinearDiscriminants> {
    let d = train.dim();
    if r > d {
        return Err(Error::InvalidInput(format!("r = {r} exceeds dimension {d}")));
    }
    let s = compute_scatter(train)?;
    let eig = symmetric_eig(&(&s.s_b - &s.s_w))?;
    Ok(LinearDiscriminants {
        v: eig.eigenvectors.columns(0, r).into_owned(),
        eigenvalues: eig.eigenvalues.rows(0, r).into_owned(),
    })
}

/// `sum_k v_k^T A v_k` over the columns of `v`.
pub fn quadratic_objective(v: &Matrix, a: &Matrix) -> f64 {
    v.column_iter().map(|col| col.dot(&(a * col))).sum()
}

fn class_groups(labels: &[usize], n: usize) -> Result<Vec<Vec<usize>>> {
    if labels.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: labels.len(),
        });
    }
    let c = labels.iter().max().map_or(0, |&m| m + 1);
    let mut groups = vec![Vec::new(); c];
    for (j, &l) in labels.iter().enumerate() {
        groups[l].push(j);
    }
    if let Some(empty) = groups.iter().position(Vec::is_empty) {
        return Err(Error::InvalidInput(format!("class {empty} has no samples")));
    }
    Ok(groups)
}

/// The kernel between-class matrix `M` and within-class matrix `N`.
///
/// `m_i[j]` is the mean kernel value between class `i` and point `j`, and
/// `m = (1/n) sum_i n_i m_i`. Then
/// `M = sum_i w_i (m_i - m)(m_i - m)^T` with `w_i` from `weighting`, and
/// `N = (1/n) sum_i K_i (I - (1/n_i) 1 1^T) K_i^T`.
pub fn compute_m_n(k: &Matrix, labels: &[usize], weighting: Weighting) -> Result<(Matrix, Matrix)> {
    if k.nrows() != k.ncols() {
        return Err(Error::InvalidInput("kernel matrix must be square".into()));
    }
    let n = k.nrows();
    let groups = class_groups(labels, n)?;
    let nf = n as f64;

    let class_means: Vec<Vector> = groups
        .iter()
        .map(|members| {
            let mut m = Vector::zeros(n);
            for &q in members {
                m += k.column(q);
            }
            m / members.len() as f64
        })
        .collect();
    let mut overall = Vector::zeros(n);
    for (m, members) in class_means.iter().zip(&groups) {
        overall.axpy(members.len() as f64 / nf, m, 1.0);
    }

    let mut m_mat = Matrix::zeros(n, n);
    for (m, members) in class_means.iter().zip(&groups) {
        let ni = members.len() as f64;
        let w = match weighting {
            Weighting::Verbatim => 1.0 / ni,
            Weighting::Prior => ni / nf,
        };
        let diff = m - &overall;
        m_mat.ger(w, &diff, &diff, 1.0);
    }

    // K_i (I - 11^T/n_i) subtracts the class mean from each column of K_i.
    let mut centered = k.clone();
    for (m, members) in class_means.iter().zip(&groups) {
        for &q in members {
            let mut col = centered.column_mut(q);
            col -= m;
        }
    }
    let n_mat = &centered * centered.transpose() / nf;
    Ok((symmetrize(&m_mat), symmetrize(&n_mat)))
}

fn retain_positive(eig: EigenResult) -> Result<EigenResult> {
    let scale = eig.eigenvalues.iter().fold(0.0f64, |a, l| a.max(l.abs()));
    let kept = eig.retain(|l| l > POSITIVE_EIG_TOL * scale && l > 0.0);
    if kept.is_empty() {
        return Err(Error::EmptyDiscriminant);
    }
    Ok(kept)
}

/// Solves `(M - N) alpha = lambda (K + reg tr(K)/n I) alpha` for a given
/// kernel matrix and keeps the positive eigenpairs.
pub fn solve_nkmmc(k: &Matrix, labels: &[usize], opts: &NkmmcOptions) -> Result<EigenResult> {
    if !(opts.reg >= 0.0) {
        return Err(Error::InvalidInput(format!("reg must be non-negative, got {}", opts.reg)));
    }
    let (m, n) = compute_m_n(k, labels, opts.weighting)?;
    let size = k.nrows();
    let shift = opts.reg * k.trace() / size as f64;
    let metric = k + Matrix::identity(size, size) * shift;
    let criterion = m - n;
    let eig = retain_positive(generalized_eig_spd(&criterion, &metric)?)?;

    // Pairs living in the numerical nullspace of K get their unit norm from
    // the regularizer alone; they have no feature-space counterpart.
    let real: Vec<usize> = (0..eig.len())
        .filter(|&j| {
            let alpha = eig.eigenvectors.column(j);
            alpha.dot(&(k * alpha)) > MIN_KERNEL_NORM
        })
        .collect();
    if real.is_empty() {
        return Err(Error::EmptyDiscriminant);
    }
    let mut eig = EigenResult {
        eigenvalues: eig.eigenvalues.select_rows(&real),
        eigenvectors: eig.eigenvectors.select_columns(&real),
    };

    // The solve normalizes against the regularized metric. Rescale to
    // alpha^T K alpha = 1 and take the Rayleigh quotient as the eigenvalue so
    // the criterion value is exactly the eigenvalue sum.
    for j in 0..eig.len() {
        let mut alpha = eig.eigenvectors.column_mut(j);
        let k_norm = alpha.dot(&(k * &alpha));
        alpha /= k_norm.sqrt();
        eig.eigenvalues[j] = alpha.dot(&(&criterion * &alpha));
    }
    Ok(eig)
}

/// Standard eigenpairs of `M - N` with positive eigenvalue.
pub fn solve_kmmc(k: &Matrix, labels: &[usize], weighting: Weighting) -> Result<EigenResult> {
    let (m, n) = compute_m_n(k, labels, weighting)?;
    retain_positive(symmetric_eig(&(m - n))?)
}

fn check_points(points: &Matrix, labels: &[usize]) -> Result<()> {
    if points.nrows() < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least 2 training points, got {}",
            points.nrows()
        )));
    }
    if labels.len() != points.nrows() {
        return Err(Error::DimensionMismatch {
            expected: points.nrows(),
            actual: labels.len(),
        });
    }
    Ok(())
}

/// Normalized kernel maximum margin criterion on the rows of `points`.
pub fn nkmmc_fit(
    points: &Matrix,
    labels: &[usize],
    kernel: &KernelSpec,
    opts: &NkmmcOptions,
) -> Result<KernelDiscriminant> {
    check_points(points, labels)?;
    let kernel = kernel.resolve(points)?;
    let k = kernel_matrix(&kernel, points);
    let eig = solve_nkmmc(&k, labels, opts)?;
    Ok(KernelDiscriminant {
        train_points: points.clone(),
        coefficients: eig.eigenvectors,
        eigenvalues: eig.eigenvalues,
        kernel,
    })
}

/// Kernel maximum margin criterion with unit coefficient vectors.
pub fn kmmc_fit(
    points: &Matrix,
    labels: &[usize],
    kernel: &KernelSpec,
    weighting: Weighting,
) -> Result<KernelDiscriminant> {
    check_points(points, labels)?;
    let kernel = kernel.resolve(points)?;
    let k = kernel_matrix(&kernel, points);
    let eig = solve_kmmc(&k, labels, weighting)?;
    Ok(KernelDiscriminant {
        train_points: points.clone(),
        coefficients: eig.eigenvectors,
        eigenvalues: eig.eigenvalues,
        kernel,
    })
}

/// `sum_j alpha_k[j] k(z_j, z)` for every discriminant `k`.
pub fn kernel_project(model: &KernelDiscriminant, z: &[f64]) -> Result<Vector> {
    let dim = model.train_points.ncols();
    if z.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: z.len(),
        });
    }
    let query = Matrix::from_row_slice(1, dim, z);
    let row = model.project_rows(&query)?;
    Ok(row.row(0).transpose())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth_gaussian_classes;
    use crate::testutil::{max_abs, random_matrix};
    use proptest::prelude::*;

    fn cosine(a: &Vector, b: &Vector) -> f64 {
        a.dot(b) / (a.norm() * b.norm())
    }

    #[test]
    fn fisher_aligns_with_mean_difference() {
        let ds = synth_gaussian_classes(2, 200, 2, 1.0, 6.0, 3).unwrap();
        let s = compute_scatter(&ds).unwrap();
        let fit = fisher_baseline_fit(&ds, 0.0).unwrap();
        assert_eq!(fit.v.ncols(), 1);
        // Isotropic noise: the optimal direction is S_w^-1 (m_1 - m_0).
        let diff = &s.class_means[1] - &s.class_means[0];
        let oracle = s.s_w.clone().try_inverse().unwrap() * &diff;
        let v: Vector = fit.v.column(0).into_owned();
        assert!(cosine(&v, &oracle).abs() > 0.99);
        assert!(cosine(&v, &diff).abs() > 0.99);
        assert!((v.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fisher_with_identity_within_is_between_eigvecs() {
        let x = Matrix::from_row_slice(
            8,
            2,
            &[1., 0., -1., 0., 3., 4., 3., 2., 6., 1., 4., 1., 0., 6., 0., 8.],
        );
        // Within deviations alternate (+-1, 0) and (0, +-1): S_w = I / 2.
        let ds = LabeledDataset::new(x, vec![0, 0, 1, 1, 2, 2, 3, 3]).unwrap();
        let s = compute_scatter(&ds).unwrap();
        assert!(max_abs(&(&s.s_w - Matrix::identity(2, 2) * 0.5)) < 1e-15);
        let fit = fisher_baseline_fit(&ds, 0.0).unwrap();
        let eig = symmetric_eig(&s.s_b).unwrap();
        for k in 0..2 {
            let a: Vector = fit.v.column(k).into_owned();
            let b: Vector = eig.eigenvectors.column(k).into_owned();
            assert!((cosine(&a, &b).abs() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn fisher_fails_on_sss_without_ridge() {
        let ds = synth_gaussian_classes(3, 2, 20, 1.0, 3.0, 1).unwrap();
        assert!(matches!(fisher_baseline_fit(&ds, 0.0), Err(Error::SingularMatrix)));
        assert!(fisher_baseline_fit(&ds, 1e-3).is_ok());
    }

    #[test]
    fn mmc_with_point_classes_is_between_eigvecs() {
        let ds = synth_gaussian_classes(4, 3, 5, 0.0, 3.0, 2).unwrap();
        let s = compute_scatter(&ds).unwrap();
        let fit = mmc_fit(&ds, 3).unwrap();
        let eig = symmetric_eig(&s.s_b).unwrap();
        for k in 0..3 {
            assert!((fit.eigenvalues[k] - eig.eigenvalues[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn mmc_one_dimensional() {
        let x = Matrix::from_row_slice(4, 1, &[0.0, 1.0, 5.0, 7.0]);
        let ds = LabeledDataset::new(x, vec![0, 0, 1, 1]).unwrap();
        let s = compute_scatter(&ds).unwrap();
        let fit = mmc_fit(&ds, 1).unwrap();
        assert_eq!(fit.v[(0, 0)].abs(), 1.0);
        assert!((fit.eigenvalues[0] - (&s.s_b - &s.s_w).trace()).abs() < 1e-12);
        assert!(mmc_fit(&ds, 2).is_err());
    }

    #[test]
    fn mmc_dominates_random_directions() {
        let ds = synth_gaussian_classes(5, 4, 6, 1.0, 3.0, 8).unwrap();
        let s = compute_scatter(&ds).unwrap();
        let a = &s.s_b - &s.s_w;
        let r = 2;
        let fit = mmc_fit(&ds, r).unwrap();
        let best = quadratic_objective(&fit.v, &a);
        assert!((best - fit.eigenvalues.sum()).abs() <= 1e-8 * best.abs());
        // Monte Carlo: no random orthonormal pair does better.
        for seed in 0..2000 {
            let g = random_matrix(6, r, seed);
            let q = crate::linalg::orthonormal_basis(&g, 1e-10).unwrap();
            assert!(quadratic_objective(&q, &a) <= best + 1e-12);
        }
    }

    #[test]
    fn collapsed_classes_have_zero_within_matrix() {
        let pts = Matrix::from_row_slice(6, 2, &[0., 0., 0., 0., 1., 2., 1., 2., 3., 0., 3., 0.]);
        let k = kernel_matrix(&Kernel::rbf(1.0).unwrap(), &pts);
        let (m, n) = compute_m_n(&k, &[0, 0, 1, 1, 2, 2], Weighting::Verbatim).unwrap();
        assert_eq!(max_abs(&n), 0.0);
        assert!(max_abs(&m) > 0.0);
    }

    #[test]
    fn single_class_has_zero_between_matrix() {
        let pts = random_matrix(5, 3, 2);
        let k = kernel_matrix(&Kernel::rbf(1.0).unwrap(), &pts);
        let (m, _) = compute_m_n(&k, &[0; 5], Weighting::Verbatim).unwrap();
        assert!(max_abs(&m) <= 1e-15);
        assert!(matches!(
            kmmc_fit(&pts, &[0; 5], &KernelSpec::rbf_auto(), Weighting::Verbatim),
            Err(Error::EmptyDiscriminant)
        ));
        assert!(matches!(
            nkmmc_fit(&pts, &[0; 5], &KernelSpec::rbf_auto(), &NkmmcOptions::default()),
            Err(Error::EmptyDiscriminant)
        ));
    }

    #[test]
    fn linear_kernel_matches_feature_space_scatter() {
        // With k(a, b) = a^T b, M = Z^T S_M Z and N = Z^T S_N Z where Z has
        // the points as columns, S_M = sum_i w_i (mu_i - mu)(mu_i - mu)^T and
        // S_N = (1/n) sum_{x in C_i} (x - mu_i)(x - mu_i)^T.
        let ds = synth_gaussian_classes(3, 3, 4, 1.0, 3.0, 6).unwrap();
        let pts = ds.features();
        let k = kernel_matrix(&Kernel::Linear, pts);
        let s = compute_scatter(&ds).unwrap();
        let sizes = ds.class_sizes();
        let z = pts.transpose();
        for weighting in [Weighting::Verbatim, Weighting::Prior] {
            let (m, n) = compute_m_n(&k, ds.labels(), weighting).unwrap();
            let mut s_m = Matrix::zeros(4, 4);
            for (mu, &ni) in s.class_means.iter().zip(&sizes) {
                let w = match weighting {
                    Weighting::Verbatim => 1.0 / ni as f64,
                    Weighting::Prior => ni as f64 / ds.len() as f64,
                };
                let diff = mu - &s.global_mean;
                s_m += &diff * diff.transpose() * w;
            }
            let m_oracle = z.transpose() * s_m * &z;
            let n_oracle = z.transpose() * &s.s_w * &z;
            assert!(max_abs(&(m - &m_oracle)) <= 1e-10 * max_abs(&m_oracle));
            assert!(max_abs(&(n - &n_oracle)) <= 1e-10 * max_abs(&n_oracle));
        }
    }

    #[test]
    fn two_collapsed_classes_give_one_direction() {
        let pts = Matrix::from_row_slice(4, 1, &[0.5, 0.5, -1.5, -1.5]);
        let fit = nkmmc_fit(&pts, &[0, 0, 1, 1], &KernelSpec::linear(), &NkmmcOptions::default()).unwrap();
        assert_eq!(fit.output_dim(), 1);
        let y = fit.project_rows(&pts).unwrap();
        assert!((y[(0, 0)] - y[(1, 0)]).abs() < 1e-12);
        assert!((y[(0, 0)] - y[(2, 0)]).abs() > 1.0);
    }

    #[test]
    fn identity_kernel_reduces_to_kmmc() {
        let labels = [0, 0, 1, 1, 1, 2, 2];
        let k = Matrix::identity(7, 7);
        let opts = NkmmcOptions::default();
        let a = solve_nkmmc(&k, &labels, &opts).unwrap();
        let b = solve_kmmc(&k, &labels, Weighting::Verbatim).unwrap();
        assert_eq!(a.len(), b.len());
        for i in 0..a.len() {
            assert!((a.eigenvalues[i] - b.eigenvalues[i]).abs() <= 1e-7 * b.eigenvalues[i]);
        }
        let diff = &a.eigenvectors - &b.eigenvectors;
        assert!(max_abs(&diff) <= 1e-7);
    }

    #[test]
    fn nkmmc_differs_from_kmmc_on_rbf() {
        let ds = synth_gaussian_classes(3, 4, 3, 1.0, 2.0, 5).unwrap();
        let spec = KernelSpec::rbf_auto();
        let a = nkmmc_fit(ds.features(), ds.labels(), &spec, &NkmmcOptions::default()).unwrap();
        let b = kmmc_fit(ds.features(), ds.labels(), &spec, Weighting::Verbatim).unwrap();
        let a0: Vector = a.coefficients.column(0).into_owned();
        let b0: Vector = b.coefficients.column(0).into_owned();
        assert!((cosine(&a0, &b0).abs() - 1.0).abs() > 1e-3);
    }

    #[test]
    fn kernel_project_examples() {
        let pts = random_matrix(6, 2, 3);
        let labels = [0, 0, 1, 1, 2, 2];
        let fit = nkmmc_fit(&pts, &labels, &KernelSpec::linear(), &NkmmcOptions::default()).unwrap();
        let k = kernel_matrix(&Kernel::Linear, &pts);
        let ka = &k * &fit.coefficients;
        let first = fit.project(pts.row(0).transpose().as_slice()).unwrap();
        assert!((first.transpose() - ka.row(0)).norm() <= 1e-12);
        assert!(max_abs(&(fit.project_rows(&pts).unwrap() - &ka)) <= 1e-12);
        assert!(fit.project(&[1.0]).is_err());

        let mut unit = fit.clone();
        unit.coefficients = Matrix::zeros(6, 1);
        unit.coefficients[(0, 0)] = 1.0;
        let z = [0.3, -0.7];
        let out = unit.project(&z).unwrap();
        assert_eq!(out[0], kernel_eval_ref(&pts, &z));
    }

    fn kernel_eval_ref(pts: &Matrix, z: &[f64]) -> f64 {
        crate::kernel::kernel_eval(&Kernel::Linear, pts.row(0).transpose().as_slice(), z).unwrap()
    }

    #[test]
    fn scaling_inputs_keeps_linear_ranking() {
        let ds = synth_gaussian_classes(3, 3, 4, 1.0, 3.0, 10).unwrap();
        let test = random_matrix(5, 4, 11);
        let probe = random_matrix(1, 4, 12);
        let order = |s: f64| {
            let fit = nkmmc_fit(&(ds.features() * s), ds.labels(), &KernelSpec::linear(), &NkmmcOptions::default()).unwrap();
            let y = fit.project_rows(&(&test * s)).unwrap();
            let q = fit.project_rows(&(&probe * s)).unwrap();
            let mut idx: Vec<usize> = (0..5).collect();
            idx.sort_by(|&a, &b| (y.row(a) - q.row(0)).norm().total_cmp(&(y.row(b) - q.row(0)).norm()));
            idx
        };
        assert_eq!(order(1.0), order(3.0));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn nkmmc_contract(seed in 0u64..10_000, c in 2usize..5, per in 1usize..4) {
            let ds = synth_gaussian_classes(c, per, 3, 1.0, 3.0, seed).unwrap();
            let spec = KernelSpec::rbf_auto();
            let opts = NkmmcOptions::default();
            let fit = nkmmc_fit(ds.features(), ds.labels(), &spec, &opts).unwrap();
            let k = kernel_matrix(&fit.kernel, ds.features());
            let (m, n) = compute_m_n(&k, ds.labels(), opts.weighting).unwrap();
            let a = &m - &n;
            let shift = opts.reg * k.trace() / k.nrows() as f64;
            let b = &k + Matrix::identity(k.nrows(), k.nrows()) * shift;
            let scale = a.norm() + k.norm();
            for j in 0..fit.output_dim() {
                let alpha = fit.coefficients.column(j);
                let lam = fit.eigenvalues[j];
                prop_assert!(lam > 0.0);
                prop_assert!((&a * alpha - (&b * alpha) * lam).norm() <= 1e-6 * scale);
            }
            let gram = fit.coefficients.tr_mul(&(&k * &fit.coefficients));
            let r = fit.output_dim();
            prop_assert!(max_abs(&(gram - Matrix::identity(r, r))) <= 1e-6);
        }

        #[test]
        fn permutation_invariant_projection(seed in 0u64..10_000) {
            let ds = synth_gaussian_classes(3, 3, 3, 1.0, 3.0, seed).unwrap();
            let perm: Vec<usize> = vec![4, 0, 8, 2, 6, 1, 7, 3, 5];
            let labels_p: Vec<usize> = perm.iter().map(|&i| ds.labels()[i]).collect();
            let spec = KernelSpec::rbf_auto();
            let opts = NkmmcOptions::default();
            let a = nkmmc_fit(ds.features(), ds.labels(), &spec, &opts).unwrap();
            let b = nkmmc_fit(&ds.features().select_rows(&perm), &labels_p, &spec, &opts).unwrap();
            let test = random_matrix(4, 3, seed + 1);
            let (ya, yb) = (a.project_rows(&test).unwrap(), b.project_rows(&test).unwrap());
            // Compare through pairwise distances, which ignore sign and
            // rotation within tied eigenspaces.
            for i in 0..4 {
                for j in 0..4 {
                    let da = (ya.row(i) - ya.row(j)).norm();
                    let db = (yb.row(i) - yb.row(j)).norm();
                    prop_assert!((da - db).abs() <= 1e-8 * (1.0 + da));
                }
            }
        }
    }
}
