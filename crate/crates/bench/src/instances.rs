//! Random moment instances for self-checks.

use rand::Rng as _;
use rand_distr::StandardNormal;

use irm_core::invariance::EnvironmentMoments;
use irm_core::linmath::{Matrix, SymMatrix};
use irm_core::rng::Rng;

/// Moments of `m` Gaussian rows with a random linear target and per-column
/// scales in `[0.5, 2]`, so every instance is jointly PSD.
pub fn random_moments(rng: &mut Rng, d_x: usize, d_y: usize, m: usize) -> EnvironmentMoments {
    let scales: Vec<f64> = (0..d_x).map(|_| 0.5 + 1.5 * rng.random::<f64>()).collect();
    let x = Matrix::from_fn(m, d_x, |_, j| scales[j] * rng.sample::<f64, _>(StandardNormal));
    let b = Matrix::from_fn(d_x, d_y, |_, _| rng.sample::<f64, _>(StandardNormal));
    let y = &x * b + Matrix::from_fn(m, d_y, |_, _| 0.5 * rng.sample::<f64, _>(StandardNormal));
    let n = m as f64;
    EnvironmentMoments::new(
        SymMatrix::symmetrize(x.transpose() * &x / n).expect("finite"),
        x.transpose() * &y / n,
        SymMatrix::symmetrize(y.transpose() * &y / n).expect("finite"),
        m,
    )
    .expect("sample moments are PSD")
}

pub fn random_matrix(rng: &mut Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| scale * rng.sample::<f64, _>(StandardNormal))
}
