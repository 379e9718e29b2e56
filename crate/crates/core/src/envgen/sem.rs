//! Linear structural equation model with causal and environment latents.
//!
//! Per environment `e`: `Y = +1` with probability `eta`, else `-1`;
//! `Zc = mu_c Y + N(0, sigma_c^2 I)`, `Ze = mu_e Y + N(0, sigma_e^2 I)`;
//! `X = S [Zc; Ze]`.

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::data::{EnvironmentData, Latents, Task};
use crate::error::{Error, Result};
use crate::invariance::{EnvironmentMoments, LinearRepresentation};
use crate::linmath::{self, Matrix, SymMatrix};
use crate::rng::{derive_seed, hash_str, rng_from_seed};

/// Smallest singular value of `S` relative to its largest for left-invertibility.
pub const LEFT_INVERTIBLE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemEnvironment {
    pub mu_e: Vec<f64>,
    pub sigma_e: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemSpec {
    pub d_c: usize,
    pub d_e: usize,
    pub d: usize,
    /// `d x (d_c + d_e)` mixing matrix.
    pub s: Matrix,
    pub mu_c: Vec<f64>,
    pub environments: Vec<SemEnvironment>,
    pub sigma_c: f64,
    pub eta: f64,
}

/// Seed for the default spec's randomly drawn spurious means.
pub const DEFAULT_SPEC_SEED: u64 = 0;

impl SemSpec {
    /// `d_c = d_e = 3`, `S = I_6`, `sigma_c = 1`, `eta = 1/2`, four environments
    /// with `sigma_e` in `{0.5, 1, 1.5, 2}` and `mu_e ~ N(0, I)` drawn from `seed`.
    pub fn default_with_seed(seed: u64) -> Self {
        let (d_c, d_e) = (3, 3);
        let mut rng = rng_from_seed(derive_seed(&[seed, hash_str("default-sem")]));
        let environments = [0.5, 1.0, 1.5, 2.0]
            .iter()
            .map(|&sigma_e| SemEnvironment {
                mu_e: (0..d_e).map(|_| rng.sample(StandardNormal)).collect(),
                sigma_e,
            })
            .collect();
        Self {
            d_c,
            d_e,
            d: d_c + d_e,
            s: Matrix::identity(d_c + d_e, d_c + d_e),
            mu_c: vec![1.0; d_c],
            environments,
            sigma_c: 1.0,
            eta: 0.5,
        }
    }

    pub fn d_latent(&self) -> usize {
        self.d_c + self.d_e
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_c == 0 || self.d_e == 0 {
            return Err(Error::Spec("d_c and d_e must be positive".into()));
        }
        if self.d < self.d_latent() {
            return Err(Error::Spec(format!("d = {} < d_c + d_e = {}", self.d, self.d_latent())));
        }
        if self.s.shape() != (self.d, self.d_latent()) {
            return Err(Error::Spec(format!(
                "S is {:?}, expected ({}, {})",
                self.s.shape(),
                self.d,
                self.d_latent()
            )));
        }
        if self.mu_c.len() != self.d_c {
            return Err(Error::Spec("mu_c has the wrong length".into()));
        }
        if self.environments.is_empty() {
            return Err(Error::Spec("at least one environment required".into()));
        }
        for (i, e) in self.environments.iter().enumerate() {
            if e.mu_e.len() != self.d_e {
                return Err(Error::Spec(format!("mu_e of environment {i} has the wrong length")));
            }
            if !(e.sigma_e >= 0.0) {
                return Err(Error::Spec(format!("sigma_e of environment {i} must be >= 0")));
            }
        }
        if !(self.sigma_c >= 0.0) {
            return Err(Error::Spec("sigma_c must be >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(Error::Spec("eta must lie in [0, 1]".into()));
        }
        let sv = linmath::singular_values(&self.s)?;
        let (hi, lo) = (sv[0], sv[sv.len() - 1]);
        if !(lo > LEFT_INVERTIBLE_TOL * hi) {
            return Err(Error::Spec("S is not left-invertible".into()));
        }
        Ok(())
    }

    fn env(&self, env_index: usize) -> Result<&SemEnvironment> {
        self.environments.get(env_index).ok_or_else(|| {
            Error::Spec(format!(
                "environment {env_index} out of range ({} environments)",
                self.environments.len()
            ))
        })
    }

    /// `[mu_c; mu_e]`
    pub fn latent_mean(&self, env_index: usize) -> Result<Vec<f64>> {
        let e = self.env(env_index)?;
        Ok(self.mu_c.iter().chain(&e.mu_e).copied().collect())
    }

    /// `blockdiag(sigma_c^2 I, sigma_e^2 I)`
    pub fn latent_noise_cov(&self, env_index: usize) -> Result<Matrix> {
        let e = self.env(env_index)?;
        let diag: Vec<f64> = std::iter::repeat_n(self.sigma_c * self.sigma_c, self.d_c)
            .chain(std::iter::repeat_n(e.sigma_e * e.sigma_e, self.d_e))
            .collect();
        Ok(Matrix::from_diagonal(&nalgebra::DVector::from_vec(diag)))
    }

    /// Exact moments of `(X, Y)` with scalar `+-1` target:
    /// `E[XX^T] = S (Sigma + mu mu^T) S^T`, `E[XY] = S mu`, `E[Y^2] = 1`.
    pub fn population_moments(&self, env_index: usize) -> Result<EnvironmentMoments> {
        self.validate()?;
        let mu = Matrix::from_vec(self.d_latent(), 1, self.latent_mean(env_index)?);
        let zz = self.latent_noise_cov(env_index)? + &mu * mu.transpose();
        let sxx = SymMatrix::symmetrize(&self.s * zz * self.s.transpose())?;
        let sxy = &self.s * mu;
        EnvironmentMoments::new(sxx, sxy, SymMatrix::identity(1), usize::MAX)
    }

    pub fn population_moments_all(&self) -> Result<Vec<EnvironmentMoments>> {
        (0..self.environments.len())
            .map(|e| self.population_moments(e))
            .collect()
    }
}

/// Draws `n` samples of environment `env_index`; latents are retained.
pub fn gen_sem(spec: &SemSpec, env_index: usize, n: usize, seed: u64) -> Result<EnvironmentData> {
    spec.validate()?;
    if n == 0 {
        return Err(Error::Spec("n must be >= 1".into()));
    }
    let env = spec.env(env_index)?;
    let mut rng = rng_from_seed(derive_seed(&[seed, env_index as u64, hash_str("sem")]));
    let mut y = Matrix::zeros(n, 1);
    let mut zc = Matrix::zeros(n, spec.d_c);
    let mut ze = Matrix::zeros(n, spec.d_e);
    for i in 0..n {
        let label = if rng.random::<f64>() < spec.eta { 1.0 } else { -1.0 };
        y[(i, 0)] = label;
        for j in 0..spec.d_c {
            let w: f64 = rng.sample(StandardNormal);
            zc[(i, j)] = spec.mu_c[j] * label + spec.sigma_c * w;
        }
        for j in 0..spec.d_e {
            let w: f64 = rng.sample(StandardNormal);
            ze[(i, j)] = env.mu_e[j] * label + env.sigma_e * w;
        }
    }
    let mut z = Matrix::zeros(n, spec.d_latent());
    z.columns_mut(0, spec.d_c).copy_from(&zc);
    z.columns_mut(spec.d_c, spec.d_e).copy_from(&ze);
    let x = z * spec.s.transpose();
    let mut data = EnvironmentData::new(x, y, Task::BinaryPm1)?;
    data.latents = Some(Latents { zc, ze });
    Ok(data)
}

/// `Phi_d = [[I_{d_c}, 0], [0, 0]] S^+`, a `d_rep x d` map with `Phi_d X = [Zc; 0]`.
pub fn invariant_projection(spec: &SemSpec, d_rep: usize) -> Result<LinearRepresentation> {
    spec.validate()?;
    if d_rep < spec.d_c {
        return Err(Error::Shape(format!(
            "d_rep = {d_rep} is smaller than d_c = {}",
            spec.d_c
        )));
    }
    let s_pinv = linmath::left_pseudoinverse(&spec.s)?;
    let mut select = Matrix::zeros(d_rep, spec.d_latent());
    for i in 0..spec.d_c {
        select[(i, i)] = 1.0;
    }
    LinearRepresentation::new(select * s_pinv)
}
