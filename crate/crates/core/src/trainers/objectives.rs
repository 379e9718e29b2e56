//! Loss values and analytic gradients with respect to the representation
//! matrix, computed from environment moments.
//!
//! The gradient of a risk `R_e(w^T T x)` with `w` held fixed is
//! `2 w w^T T Sxx - 2 w Sxy^T`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::invariance::{pooled_from_projected, EnvironmentMoments, LinearRepresentation, ProjectedMoments};
use crate::linmath::Matrix;

/// Objective value and gradient at one representation.
#[derive(Debug, Clone, PartialEq)]
pub struct Objective {
    pub loss: f64,
    /// Gradient of `loss` with respect to `theta`.
    pub grad: Matrix,
    /// Update direction. Equal to `grad` except for AND-mask.
    pub direction: Matrix,
    pub env_risk: Vec<f64>,
    pub env_penalty: Vec<f64>,
    /// Classifier the risks were evaluated with.
    pub w: Matrix,
    /// The classifier came from a pseudoinverse solve.
    pub singular: bool,
    /// Per-environment penalty coefficients that were held constant.
    pub coefficients: Vec<f64>,
}

/// Gradient of a risk at fixed `w`, given `theta * Sxx`.
fn risk_grad(w: &Matrix, theta_sxx: &Matrix, sxy: &Matrix) -> Matrix {
    (w * (w.transpose() * theta_sxx) - w * sxy.transpose()) * 2.0
}

fn check_inputs(theta: &Matrix, moments: &[EnvironmentMoments]) -> Result<LinearRepresentation> {
    if moments.is_empty() {
        return Err(Error::Precondition("need at least one environment".into()));
    }
    let rep = LinearRepresentation::new(theta.clone())?;
    if let Some(m) = moments.iter().find(|m| m.d_x() != rep.d_x()) {
        return Err(Error::Shape(format!(
            "theta has {} columns, moments have d_x = {}",
            rep.d_x(),
            m.d_x()
        )));
    }
    Ok(rep)
}

fn project_all(rep: &LinearRepresentation, moments: &[EnvironmentMoments]) -> Result<Vec<ProjectedMoments>> {
    moments.iter().map(|m| ProjectedMoments::new(rep, m)).collect()
}

/// IRMv2: `sum_e R_e(w*) + lambda * rho_e(w*)` with `w*` the pooled
/// least-squares classifier. `w*` minimizes the objective over `w` and each
/// `w_e` minimizes its own risk, so neither contributes a sensitivity term.
pub fn irmv2_loss_and_grad(theta: &Matrix, moments: &[EnvironmentMoments], lambda: f64) -> Result<Objective> {
    let rep = check_inputs(theta, moments)?;
    let projected = project_all(&rep, moments)?;
    let pooled = pooled_from_projected(&projected, lambda)?;
    let w = &pooled.w;
    let mut loss = 0.0;
    let mut grad = Matrix::zeros(theta.nrows(), theta.ncols());
    let mut env_risk = Vec::with_capacity(moments.len());
    let mut env_penalty = Vec::with_capacity(moments.len());
    let mut singular = pooled.singular;
    for (m, p) in moments.iter().zip(&projected) {
        let lse = p.lse()?;
        singular |= lse.singular;
        let r = p.risk(w)?;
        let rho = p.penalty_irmv2_against(w, &lse.w)?;
        loss += r + lambda * rho;
        env_risk.push(r);
        env_penalty.push(rho);
        let theta_sxx = theta * m.sxx().as_matrix();
        grad += risk_grad(w, &theta_sxx, m.sxy()) * (1.0 + lambda);
        grad -= risk_grad(&lse.w, &theta_sxx, m.sxy()) * lambda;
    }
    Ok(Objective {
        loss,
        direction: grad.clone(),
        grad,
        env_risk,
        env_penalty,
        w: pooled.w,
        singular,
        coefficients: vec![lambda; moments.len()],
    })
}

/// How IRMv1 weights each environment's penalty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PenaltyWeight {
    Fixed(f64),
    /// `1 / (lambda0 + lambda_min(G_e))`, held constant within a step.
    Adaptive {
        lambda0: f64,
    },
}

/// IRMv1 / IRMv1A: `sum_e R_e(1^T T x) + lambda_e * 4 |G_e 1 - T Sxy_e|^2`.
pub fn irmv1_loss_and_grad(theta: &Matrix, moments: &[EnvironmentMoments], weight: PenaltyWeight) -> Result<Objective> {
    let rep = check_inputs(theta, moments)?;
    let coefficients = match weight {
        PenaltyWeight::Fixed(l) => {
            if !(l >= 0.0) {
                return Err(Error::Precondition(format!(
                    "penalty coefficient must be >= 0, got {l}"
                )));
            }
            vec![l; moments.len()]
        }
        PenaltyWeight::Adaptive { lambda0 } => {
            if !(lambda0 >= 0.0) {
                return Err(Error::Precondition(format!("lambda0 must be >= 0, got {lambda0}")));
            }
            project_all(&rep, moments)?
                .iter()
                .map(|p| crate::invariance::adaptive_lambda_for_gram(&p.gram, lambda0))
                .collect::<Result<Vec<_>>>()?
        }
    };
    irmv1_with_coefficients(theta, moments, &coefficients)
}

/// IRMv1 objective with explicit per-environment coefficients.
pub fn irmv1_with_coefficients(
    theta: &Matrix,
    moments: &[EnvironmentMoments],
    coefficients: &[f64],
) -> Result<Objective> {
    let rep = check_inputs(theta, moments)?;
    if coefficients.len() != moments.len() {
        return Err(Error::Shape("one coefficient per environment required".into()));
    }
    let d_y = moments[0].d_y();
    let w = Matrix::from_element(rep.d_phi(), d_y, 1.0);
    let mut loss = 0.0;
    let mut grad = Matrix::zeros(theta.nrows(), theta.ncols());
    let mut env_risk = Vec::with_capacity(moments.len());
    let mut env_penalty = Vec::with_capacity(moments.len());
    for (m, &lam) in moments.iter().zip(coefficients) {
        let p = ProjectedMoments::new(&rep, m)?;
        let risk = p.risk(&w)?;
        let resid = p.gram.as_matrix() * &w - &p.cross;
        let rho = 4.0 * resid.norm_squared();
        loss += risk + lam * rho;
        env_risk.push(risk);
        env_penalty.push(rho);
        let theta_sxx = theta * m.sxx().as_matrix();
        grad += risk_grad(&w, &theta_sxx, m.sxy());
        let pen = &resid * (w.transpose() * &theta_sxx) + &w * (resid.transpose() * &theta_sxx)
            - &resid * m.sxy().transpose();
        grad += pen * (8.0 * lam);
    }
    Ok(Objective {
        loss,
        direction: grad.clone(),
        grad,
        env_risk,
        env_penalty,
        w,
        singular: false,
        coefficients: coefficients.to_vec(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Baseline {
    Erm,
    Iga,
    AndMask,
}

/// Update direction `mask * mean(g_e)` where the mask keeps coordinates on
/// which every environment gradient has the same nonzero sign.
pub fn and_mask(grads: &[Matrix]) -> Result<Matrix> {
    let first = grads
        .first()
        .ok_or_else(|| Error::Precondition("need at least one gradient".into()))?;
    let k = grads.len() as f64;
    let mut out = Matrix::zeros(first.nrows(), first.ncols());
    for i in 0..first.len() {
        let pos = grads.iter().all(|g| g[i] > 0.0);
        let neg = grads.iter().all(|g| g[i] < 0.0);
        if pos || neg {
            out[i] = grads.iter().map(|g| g[i]).sum::<f64>() / k;
        }
    }
    Ok(out)
}

/// Baselines train a direct linear predictor `y ~ beta x`; `theta` is
/// `beta` (`d_y x d_x`) and the classifier is the identity.
///
/// - ERM: `mean_e R_e`
/// - IGA: `mean_e R_e + lambda * Var_e(R_e)` (population variance)
/// - AND-mask: loss and gradient of ERM; direction masked by sign agreement
pub fn baseline_loss_and_grad(
    method: Baseline,
    theta: &Matrix,
    moments: &[EnvironmentMoments],
    lambda: f64,
) -> Result<Objective> {
    let rep = check_inputs(theta, moments)?;
    let d_y = moments[0].d_y();
    if rep.d_phi() != d_y {
        return Err(Error::Shape(format!(
            "baseline predictor needs {d_y} rows, theta has {}",
            rep.d_phi()
        )));
    }
    if !(lambda >= 0.0) {
        return Err(Error::Precondition(format!(
            "penalty coefficient must be >= 0, got {lambda}"
        )));
    }
    let w = Matrix::identity(d_y, d_y);
    let k = moments.len() as f64;
    let mut env_risk = Vec::with_capacity(moments.len());
    let mut grads = Vec::with_capacity(moments.len());
    for m in moments {
        let p = ProjectedMoments::new(&rep, m)?;
        env_risk.push(p.risk(&w)?);
        grads.push(risk_grad(&w, &(theta * m.sxx().as_matrix()), m.sxy()));
    }
    let mean_risk = env_risk.iter().sum::<f64>() / k;
    let mut mean_grad = Matrix::zeros(theta.nrows(), theta.ncols());
    for g in &grads {
        mean_grad += g;
    }
    mean_grad /= k;

    let (loss, grad, direction, env_penalty) = match method {
        Baseline::Erm => (mean_risk, mean_grad.clone(), mean_grad, vec![0.0; moments.len()]),
        Baseline::Iga => {
            let dev: Vec<f64> = env_risk.iter().map(|r| r - mean_risk).collect();
            let var = dev.iter().map(|d| d * d).sum::<f64>() / k;
            let mut grad = mean_grad;
            for (d, g) in dev.iter().zip(&grads) {
                grad += g * (2.0 * lambda * d / k);
            }
            (
                mean_risk + lambda * var,
                grad.clone(),
                grad,
                dev.iter().map(|d| d * d).collect(),
            )
        }
        Baseline::AndMask => {
            let direction = and_mask(&grads)?;
            (mean_risk, mean_grad, direction, vec![0.0; moments.len()])
        }
    };
    Ok(Objective {
        loss,
        grad,
        direction,
        env_risk,
        env_penalty,
        w,
        singular: false,
        coefficients: vec![lambda; moments.len()],
    })
}

/// Central differences with step `h_scale * (1 + |theta_ij|)`.
pub fn finite_difference_grad<F>(f: F, theta: &Matrix, h_scale: f64) -> Result<Matrix>
where
    F: Fn(&Matrix) -> Result<f64>,
{
    let mut grad = Matrix::zeros(theta.nrows(), theta.ncols());
    let mut probe = theta.clone();
    for i in 0..theta.len() {
        let h = h_scale * (1.0 + theta[i].abs());
        probe[i] = theta[i] + h;
        let up = f(&probe)?;
        probe[i] = theta[i] - h;
        let down = f(&probe)?;
        probe[i] = theta[i];
        grad[i] = (up - down) / (2.0 * h);
    }
    Ok(grad)
}

/// `|a - b|_F / max(|a|_F, |b|_F, floor)`.
pub fn relative_error(a: &Matrix, b: &Matrix, floor: f64) -> f64 {
    (a - b).norm() / a.norm().max(b.norm()).max(floor)
}
