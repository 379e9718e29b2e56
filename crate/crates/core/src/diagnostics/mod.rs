//! Checks of the SEM theory and of the conditioning counterexamples.

pub mod conditioning;

use serde::{Deserialize, Serialize};

use crate::envgen::{EnvironmentData, SemSpec};
use crate::error::{Error, Result};
use crate::invariance::{compute_moments, pooled_classifier, Classifier, LinearRepresentation, ProjectedMoments};
use crate::linmath::{self, Matrix, SymMatrix};

pub use conditioning::{
    arjovsky_gram, figure1_curves, figure1_facts, p_mask, rosenfeld_constant, rosenfeld_kappa_bound, ArjovskyGram,
    CounterexampleProfile, Figure1Facts, Figure1Point, PFormula,
};

/// `|sum(alpha) - 1|` at or below this counts as `sum(alpha) = 1`.
pub const ALPHA_SUM_TOL: f64 = 1e-8;
/// Relative eigenvalue cutoff for the rank of `Gamma_e`.
pub const GAMMA_RANK_TOL: f64 = 1e-10;
/// Relative tolerance of the Sherman-Morrison self-check.
pub const SHERMAN_MORRISON_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentCondition {
    /// Coefficients on the other environments' means, in environment order.
    pub alpha: Vec<f64>,
    pub alpha_sum: f64,
    /// `|sum_i alpha_i mu_i - mu_e|`.
    pub residual: f64,
    /// `mu_e` lies in the span of the other means (residual within tolerance).
    pub representable: bool,
    /// The other means are linearly independent, so `alpha` is the only solution.
    pub unique: bool,
    pub sum_ok: bool,
    pub gamma_rank: usize,
    pub rank_ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NondegeneracyReport {
    pub environments: Vec<EnvironmentCondition>,
    pub overall_ok: bool,
}

/// Non-degeneracy of the training environments: for every `e`, `mu_e` written
/// as a combination of the other means with coefficients not summing to 1,
/// and `Gamma_e` of full rank. Coefficients are the minimum-norm
/// least-squares solution.
pub fn check_nondegeneracy(spec: &SemSpec) -> Result<NondegeneracyReport> {
    spec.validate()?;
    let k = spec.environments.len();
    let d_e = spec.d_e;
    if k <= d_e {
        return Err(Error::Precondition(format!(
            "need more than d_e = {d_e} environments, got {k}"
        )));
    }
    let mut environments = Vec::with_capacity(k);
    for e in 0..k {
        let others: Vec<usize> = (0..k).filter(|&i| i != e).collect();
        let m = Matrix::from_fn(d_e, others.len(), |r, c| spec.environments[others[c]].mu_e[r]);
        let target = Matrix::from_column_slice(d_e, 1, &spec.environments[e].mu_e);
        let alpha = linmath::left_pseudoinverse(&m)? * &target;
        let residual = (&m * &alpha - &target).norm();
        let mu_norm = target.norm();
        let representable = residual <= 1e-8 * mu_norm.max(1e-300) || (mu_norm == 0.0 && residual == 0.0);
        let unique =
            linmath::numerical_rank(&SymMatrix::symmetrize(m.transpose() * &m)?, linmath::RANK_TOL)? == others.len();
        let alpha_sum = alpha.sum();
        let sum_ok = (alpha_sum - 1.0).abs() > ALPHA_SUM_TOL;

        let env = &spec.environments[e];
        let mut gamma = Matrix::identity(d_e, d_e) * (env.sigma_e * env.sigma_e) + &target * target.transpose();
        for (c, &i) in others.iter().enumerate() {
            let other = &spec.environments[i];
            let mu_i = Matrix::from_column_slice(d_e, 1, &other.mu_e);
            let cov_i = Matrix::identity(d_e, d_e) * (other.sigma_e * other.sigma_e) + &mu_i * mu_i.transpose();
            gamma -= cov_i * alpha[c];
        }
        // Gamma_e's scalar prefactor 1 / (1 - sum alpha) does not change its rank.
        let gamma_rank = linmath::numerical_rank(&SymMatrix::symmetrize(gamma)?, GAMMA_RANK_TOL)?;
        let rank_ok = sum_ok && gamma_rank == d_e;
        environments.push(EnvironmentCondition {
            alpha: alpha.iter().copied().collect(),
            alpha_sum,
            residual,
            representable,
            unique,
            sum_ok,
            gamma_rank,
            rank_ok,
        });
    }
    let overall_ok = environments.iter().all(|c| c.representable && c.sum_ok && c.rank_ok);
    Ok(NondegeneracyReport {
        environments,
        overall_ok,
    })
}

/// `Phi S blockdiag(sigma_c^2 I, sigma_e^2 I) S^T Phi^T` and `Phi S [mu_c; mu_e]`.
pub fn projected_latent_moments(
    phi: &LinearRepresentation,
    spec: &SemSpec,
    env_index: usize,
) -> Result<(Matrix, Matrix)> {
    spec.validate()?;
    if phi.d_x() != spec.d {
        return Err(Error::Shape(format!(
            "representation expects d_x = {}, spec has d = {}",
            phi.d_x(),
            spec.d
        )));
    }
    let ps = phi.theta() * &spec.s;
    let sigma = &ps * spec.latent_noise_cov(env_index)? * ps.transpose();
    let mu = &ps * Matrix::from_vec(spec.d_latent(), 1, spec.latent_mean(env_index)?);
    Ok((sigma, mu))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosedFormBeta {
    pub beta: Matrix,
    /// Optimal classifier for targets `[1{y=+1}, 1{y=-1}]`, `d_phi x 2`.
    pub classifier: Classifier,
    /// Relative gap between the Sherman-Morrison inverse and direct inversion.
    pub sherman_morrison_gap: f64,
}

/// `beta = Sigma^-1 mu / (1 + mu^T Sigma^-1 mu)`; the one-hot least-squares
/// classifier is `[eta beta, -(1 - eta) beta]`.
pub fn closed_form_beta(phi: &LinearRepresentation, spec: &SemSpec, env_index: usize) -> Result<ClosedFormBeta> {
    let (sigma, mu) = projected_latent_moments(phi, spec, env_index)?;
    let sigma = SymMatrix::symmetrize(sigma)?;
    let sigma_inv = linmath::sym_inverse(&sigma, linmath::RANK_TOL)
        .map_err(|_| Error::SingularCovariance(format!("projected noise covariance of environment {env_index}")))?;
    let s_mu = &sigma_inv * &mu;
    let q = mu.dot(&s_mu);
    let beta = &s_mu / (1.0 + q);

    let sm = &sigma_inv - &s_mu * s_mu.transpose() / (1.0 + q);
    let full = SymMatrix::symmetrize(sigma.as_matrix() + &mu * mu.transpose())?;
    let direct = linmath::sym_inverse(&full, linmath::RANK_TOL)?;
    let gap = (&sm - &direct).norm() / direct.norm();
    if !(gap <= SHERMAN_MORRISON_TOL) {
        return Err(Error::Degenerate(format!(
            "Sherman-Morrison check failed: relative gap {gap:e}"
        )));
    }
    let eta = spec.eta;
    let mut w = Matrix::zeros(beta.nrows(), 2);
    w.set_column(0, &(beta.column(0) * eta));
    w.set_column(1, &(beta.column(0) * -(1.0 - eta)));
    Ok(ClosedFormBeta {
        beta,
        classifier: Classifier::new(w),
        sherman_morrison_gap: gap,
    })
}

/// Heteroskedasticity-robust standard errors of the sample least-squares
/// classifier under `rep`, one per entry of `w` (`d_phi x d_y`).
pub fn lse_standard_errors(rep: &LinearRepresentation, data: &EnvironmentData) -> Result<(Classifier, Matrix)> {
    let m = compute_moments(data)?;
    let p = ProjectedMoments::new(rep, &m)?;
    let w = p.lse()?;
    let g_inv = linmath::sym_inverse(&p.gram, linmath::RANK_TOL)?;
    let phi = &data.x * rep.theta().transpose();
    let resid = &data.y - &phi * &w.w;
    let n = data.n() as f64;
    let d = rep.d_phi();
    let mut se = Matrix::zeros(d, data.d_y());
    for k in 0..data.d_y() {
        let mut meat = Matrix::zeros(d, d);
        for i in 0..data.n() {
            let row = phi.row(i);
            meat += row.transpose() * row * (resid[(i, k)] * resid[(i, k)]);
        }
        let cov = &g_inv * (meat / n) * &g_inv / n;
        for j in 0..d {
            se[(j, k)] = cov[(j, j)].max(0.0).sqrt();
        }
    }
    Ok((w, se))
}

/// `[A B] = Theta S`. Spurious share of the effective predictor:
/// `|B^T w| / (|A^T w| + |B^T w|)` with `w` the pooled classifier on the
/// spec's population moments. 0 when the predictor ignores `Z_e`.
pub fn theorem1_leakage(theta: &LinearRepresentation, spec: &SemSpec) -> Result<f64> {
    let moments = spec.population_moments_all()?;
    let w = pooled_classifier(theta, &moments, 0.0)?;
    leakage_with_classifier(theta, &w.w, spec)
}

pub fn leakage_with_classifier(theta: &LinearRepresentation, w: &Matrix, spec: &SemSpec) -> Result<f64> {
    if theta.d_x() != spec.d {
        return Err(Error::Shape(format!(
            "theta has {} columns, spec has d = {}",
            theta.d_x(),
            spec.d
        )));
    }
    let ab = theta.theta() * &spec.s;
    let a = ab.columns(0, spec.d_c);
    let b = ab.columns(spec.d_c, spec.d_e);
    let (na, nb) = ((a.transpose() * w).norm(), (b.transpose() * w).norm());
    Ok(nb / (na + nb).max(1e-12))
}
