use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::linalg::Matrix;

pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Matrix::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut rng))
}

pub fn random_symmetric(n: usize, seed: u64) -> Matrix {
    let a = random_matrix(n, n, seed);
    (&a + a.transpose()) * 0.5
}

pub fn random_spd(n: usize, seed: u64) -> Matrix {
    let a = random_matrix(n, n, seed);
    &a * a.transpose() + Matrix::identity(n, n) * n as f64 * 0.1
}

pub fn max_abs(m: &Matrix) -> f64 {
    m.iter().fold(0.0f64, |acc, x| acc.max(x.abs()))
}
