//! Full-batch training of linear representations on environment moments.
//!
//! IRMv2, IRMv1 and IRMv1A train `theta` (`d_phi x d_x`) underneath a
//! classifier: the pooled least-squares classifier for IRMv2, the all-ones
//! vector for IRMv1/IRMv1A. The baselines (ERM, Oracle, IGA, AND-mask) train a
//! direct linear predictor `beta` (`d_y x d_x`) with an identity classifier.
//! Oracle is ERM; the caller supplies training data whose spurious block has
//! been shuffled.

pub mod objectives;
pub mod optim;

use std::time::Instant;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::envgen::{EnvironmentData, Task};
use crate::error::{Error, Result};
use crate::invariance::{compute_moments, Classifier, EnvironmentMoments, LinearRepresentation};
use crate::linmath::{self, Matrix};
use crate::rng::{derive_seed, hash_str, rng_from_seed};

pub use objectives::{
    and_mask, baseline_loss_and_grad, finite_difference_grad, irmv1_loss_and_grad, irmv1_with_coefficients,
    irmv2_loss_and_grad, relative_error, Baseline, Objective, PenaltyWeight,
};
pub use optim::{Optimizer, OptimizerKind, Schedule};

/// Finite-difference step scale used by the training-time gradient check.
pub const GRAD_CHECK_STEP: f64 = 1e-5;
/// The training-time gradient check fails above this relative error.
pub const GRAD_CHECK_TOL: f64 = 1e-4;
/// Maximum learning-rate halvings per step when backtracking.
pub const MAX_HALVINGS: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "ANDMask")]
    AndMask,
    #[serde(rename = "ERM")]
    Erm,
    #[serde(rename = "IGA")]
    Iga,
    #[serde(rename = "IRMv1")]
    Irmv1,
    #[serde(rename = "IRMv1A")]
    Irmv1a,
    #[serde(rename = "IRMv2")]
    Irmv2,
    Oracle,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::AndMask,
        Method::Erm,
        Method::Iga,
        Method::Irmv1,
        Method::Irmv1a,
        Method::Irmv2,
        Method::Oracle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::AndMask => "ANDMask",
            Method::Erm => "ERM",
            Method::Iga => "IGA",
            Method::Irmv1 => "IRMv1",
            Method::Irmv1a => "IRMv1A",
            Method::Irmv2 => "IRMv2",
            Method::Oracle => "Oracle",
        }
    }

    /// Baselines train `beta` directly.
    pub fn baseline(self) -> Option<Baseline> {
        match self {
            Method::Erm | Method::Oracle => Some(Baseline::Erm),
            Method::Iga => Some(Baseline::Iga),
            Method::AndMask => Some(Baseline::AndMask),
            _ => None,
        }
    }

    /// Whether the method has a penalty strength to tune.
    pub fn penalized(self) -> bool {
        matches!(self, Method::Iga | Method::Irmv1 | Method::Irmv1a | Method::Irmv2)
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .iter()
            .copied()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown method '{s}'"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub method: Method,
    pub lambda: f64,
    /// IRMv1A offset in `1 / (lambda0 + lambda_min(G_e))`.
    pub lambda0: f64,
    /// Representation width for IRMv1/IRMv1A/IRMv2; baselines use `d_y`.
    pub d_phi: usize,
    pub steps: usize,
    pub learning_rate: f64,
    pub schedule: Schedule,
    pub optimizer: OptimizerKind,
    pub seed: u64,
    /// Compare the analytic gradient with finite differences every this many steps.
    pub grad_check_every: Option<usize>,
    /// Steps trained with the penalty switched off.
    pub warmup: usize,
    /// Gradient descent only: halve the step until the loss does not increase.
    pub backtrack: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            method: Method::Irmv2,
            lambda: 1.0,
            lambda0: 1.0,
            d_phi: 1,
            steps: 2000,
            learning_rate: 1e-2,
            schedule: Schedule::Constant,
            optimizer: OptimizerKind::Gd,
            seed: 0,
            grad_check_every: None,
            warmup: 0,
            backtrack: false,
        }
    }
}

impl TrainConfig {
    pub fn new(method: Method) -> Self {
        Self {
            method,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::Precondition("steps must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Precondition("learning rate must be positive".into()));
        }
        if !(self.lambda >= 0.0 && self.lambda0 >= 0.0) {
            return Err(Error::Precondition("penalty coefficients must be >= 0".into()));
        }
        if self.d_phi == 0 {
            return Err(Error::Precondition("d_phi must be >= 1".into()));
        }
        if self.grad_check_every == Some(0) {
            return Err(Error::Precondition("grad_check_every must be >= 1".into()));
        }
        Ok(())
    }

    /// Rows of the trained matrix for `d_y`-dimensional targets.
    pub fn theta_rows(&self, d_y: usize) -> usize {
        if self.method.baseline().is_some() {
            d_y
        } else {
            self.d_phi
        }
    }
}

/// Evaluates the objective of `method` at `theta`, with the penalty
/// strength `lambda` (IRMv1A reads `lambda0` instead).
pub fn method_objective(
    method: Method,
    theta: &Matrix,
    moments: &[EnvironmentMoments],
    lambda: f64,
    lambda0: f64,
) -> Result<Objective> {
    match method {
        Method::Irmv2 => irmv2_loss_and_grad(theta, moments, lambda),
        Method::Irmv1 => irmv1_loss_and_grad(theta, moments, PenaltyWeight::Fixed(lambda)),
        Method::Irmv1a => irmv1_loss_and_grad(theta, moments, PenaltyWeight::Adaptive { lambda0 }),
        _ => baseline_loss_and_grad(method.baseline().expect("baseline"), theta, moments, lambda),
    }
}

/// Loss of `method` at `theta` with any adaptive coefficients frozen at
/// `frozen`; the function the analytic gradient differentiates.
pub fn frozen_loss(
    method: Method,
    theta: &Matrix,
    moments: &[EnvironmentMoments],
    lambda: f64,
    frozen: &Objective,
) -> Result<f64> {
    match method {
        Method::Irmv1a => Ok(irmv1_with_coefficients(theta, moments, &frozen.coefficients)?.loss),
        _ => Ok(method_objective(method, theta, moments, lambda, 0.0)?.loss),
    }
}

/// Relative error between the analytic gradient at `theta` and central
/// differences of [`frozen_loss`].
pub fn gradient_check(
    method: Method,
    theta: &Matrix,
    moments: &[EnvironmentMoments],
    lambda: f64,
    lambda0: f64,
) -> Result<f64> {
    let obj = method_objective(method, theta, moments, lambda, lambda0)?;
    let fd = finite_difference_grad(
        |t| frozen_loss(method, t, moments, lambda, &obj),
        theta,
        GRAD_CHECK_STEP,
    )?;
    Ok(relative_error(&obj.grad, &fd, 1e-12))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub loss: f64,
    pub env_risk: Vec<f64>,
    pub env_penalty: Vec<f64>,
    /// `+inf` (written as `null` in JSON) for a numerically singular Gram.
    pub env_kappa: Vec<f64>,
    pub env_lambda_min: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheck {
    pub step: usize,
    pub relative_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainResult {
    pub config: TrainConfig,
    pub theta_final: LinearRepresentation,
    pub w_final: Classifier,
    /// One record per step, taken before that step's update.
    pub trace: Vec<TraceStep>,
    pub grad_checks: Vec<GradCheck>,
    pub wall_time_secs: f64,
}

impl TrainResult {
    /// Final loss, evaluated at `theta_final`.
    pub fn final_objective(&self, moments: &[EnvironmentMoments]) -> Result<Objective> {
        method_objective(
            self.config.method,
            self.theta_final.theta(),
            moments,
            self.config.lambda,
            self.config.lambda0,
        )
    }

    /// Effective linear predictor `w^T theta` (`d_y x d_x`).
    pub fn predictor(&self) -> Matrix {
        self.w_final.w.transpose() * self.theta_final.theta()
    }
}

fn initial_theta(cfg: &TrainConfig, rows: usize, d_x: usize) -> Matrix {
    let mut rng = rng_from_seed(derive_seed(&[cfg.seed, hash_str("init")]));
    let normal = Normal::new(0.0, 1.0 / (d_x as f64).sqrt()).expect("positive std");
    Matrix::from_fn(rows, d_x, |_, _| normal.sample(&mut rng))
}

fn trace_step(obj: &Objective, theta: &Matrix, moments: &[EnvironmentMoments]) -> Result<TraceStep> {
    let mut env_kappa = Vec::with_capacity(moments.len());
    let mut env_lambda_min = Vec::with_capacity(moments.len());
    for m in moments {
        let g = linmath::SymMatrix::symmetrize(theta * m.sxx().as_matrix() * theta.transpose())?;
        let eig = linmath::sym_eig(&g)?;
        env_kappa.push(linmath::condition_from_eigenvalues(&eig.eigenvalues).unwrap_or(f64::INFINITY));
        env_lambda_min.push(eig.lambda_min());
    }
    Ok(TraceStep {
        loss: obj.loss,
        env_risk: obj.env_risk.clone(),
        env_penalty: obj.env_penalty.clone(),
        env_kappa,
        env_lambda_min,
    })
}

/// Trains from raw samples; moments are computed once.
pub fn train(cfg: &TrainConfig, envs: &[EnvironmentData]) -> Result<TrainResult> {
    let moments = envs.iter().map(compute_moments).collect::<Result<Vec<_>>>()?;
    train_on_moments(cfg, &moments)
}

pub fn train_on_moments(cfg: &TrainConfig, moments: &[EnvironmentMoments]) -> Result<TrainResult> {
    train_from(cfg, moments, None)
}

/// Like [`train_on_moments`] but starting from `theta0` when given.
pub fn train_from(cfg: &TrainConfig, moments: &[EnvironmentMoments], theta0: Option<Matrix>) -> Result<TrainResult> {
    cfg.validate()?;
    let first = moments
        .first()
        .ok_or_else(|| Error::Precondition("need at least one environment".into()))?;
    let (d_x, d_y) = (first.d_x(), first.d_y());
    if moments.iter().any(|m| m.d_x() != d_x || m.d_y() != d_y) {
        return Err(Error::Shape("environments disagree on dimensions".into()));
    }
    let rows = cfg.theta_rows(d_y);
    let mut theta = match theta0 {
        Some(t) if t.shape() != (rows, d_x) => {
            return Err(Error::Shape(format!(
                "initial theta is {:?}, expected ({rows}, {d_x})",
                t.shape()
            )))
        }
        Some(t) => t,
        None => initial_theta(cfg, rows, d_x),
    };
    let start = Instant::now();
    let mut opt = Optimizer::new(cfg.optimizer, rows, d_x);
    let mut trace = Vec::with_capacity(cfg.steps);
    let mut grad_checks = Vec::new();
    let lambda_at = |t: usize| if t <= cfg.warmup { 0.0 } else { cfg.lambda };
    let lambda0_at = |t: usize| if t <= cfg.warmup { f64::INFINITY } else { cfg.lambda0 };
    let objective = |theta: &Matrix, t: usize| {
        if cfg.method == Method::Irmv1a && t <= cfg.warmup {
            irmv1_loss_and_grad(theta, moments, PenaltyWeight::Fixed(0.0))
        } else {
            method_objective(cfg.method, theta, moments, lambda_at(t), lambda0_at(t))
        }
    };

    // Non-finite matrix entries during training mean the iterates blew up.
    let diverged = |step: usize| {
        move |e: Error| match e {
            Error::InvalidMatrix(_) => Error::Diverged { step, loss: f64::NAN },
            other => other,
        }
    };

    let mut obj = objective(&theta, 1).map_err(diverged(1))?;
    for t in 1..=cfg.steps {
        if !obj.loss.is_finite() || obj.grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Diverged {
                step: t,
                loss: obj.loss,
            });
        }
        trace.push(trace_step(&obj, &theta, moments).map_err(diverged(t))?);
        if let Some(every) = cfg.grad_check_every {
            if (t - 1) % every == 0 {
                let fd = finite_difference_grad(
                    |p| {
                        if cfg.method == Method::Irmv1a {
                            Ok(irmv1_with_coefficients(p, moments, &obj.coefficients)?.loss)
                        } else {
                            Ok(objective(p, t)?.loss)
                        }
                    },
                    &theta,
                    GRAD_CHECK_STEP,
                )?;
                let err = relative_error(&obj.grad, &fd, 1e-12);
                grad_checks.push(GradCheck {
                    step: t,
                    relative_error: err,
                });
                if !(err < GRAD_CHECK_TOL) {
                    return Err(Error::Precondition(format!(
                        "gradient check failed at step {t}: relative error {err:e}"
                    )));
                }
            }
        }
        let mut lr = cfg.schedule.rate(cfg.learning_rate, t, cfg.steps);
        let next_t = t + 1;
        if cfg.backtrack && cfg.optimizer == OptimizerKind::Gd {
            let mut accepted = None;
            for _ in 0..MAX_HALVINGS {
                let cand = &theta - &obj.direction * lr;
                let cand_obj = objective(&cand, next_t).map_err(diverged(t))?;
                if cand_obj.loss <= obj.loss + 1e-12 * obj.loss.abs() {
                    accepted = Some((cand, cand_obj));
                    break;
                }
                lr *= 0.5;
            }
            if let Some((cand, cand_obj)) = accepted {
                theta = cand;
                obj = cand_obj;
            } else {
                obj = objective(&theta, next_t).map_err(diverged(t))?;
            }
        } else {
            theta += opt.step(&obj.direction, lr);
            if theta.iter().any(|v| !v.is_finite()) {
                return Err(Error::Diverged {
                    step: t,
                    loss: f64::NAN,
                });
            }
            obj = objective(&theta, next_t).map_err(diverged(t))?;
        }
    }
    if !obj.loss.is_finite() {
        return Err(Error::Diverged {
            step: cfg.steps,
            loss: obj.loss,
        });
    }
    let w_final = Classifier {
        w: obj.w.clone(),
        singular: obj.singular,
    };
    Ok(TrainResult {
        config: cfg.clone(),
        theta_final: LinearRepresentation::new(theta)?,
        w_final,
        trace,
        grad_checks,
        wall_time_secs: start.elapsed().as_secs_f64(),
    })
}

/// Predictions `x theta^T w`, one row per sample.
pub fn predict(theta: &LinearRepresentation, w: &Classifier, data: &EnvironmentData) -> Result<Matrix> {
    if theta.d_x() != data.d_x() || w.w.nrows() != theta.d_phi() || w.w.ncols() != data.d_y() {
        return Err(Error::Shape("predictor and data shapes disagree".into()));
    }
    Ok(&data.x * theta.theta().transpose() * &w.w)
}

/// Mean squared error for regression; misclassification rate otherwise,
/// with `sign(0) = +1` for scalar labels and the first maximal entry for one-hot.
pub fn evaluate(theta: &LinearRepresentation, w: &Classifier, data: &EnvironmentData) -> Result<f64> {
    let pred = predict(theta, w, data)?;
    let n = data.n() as f64;
    Ok(match data.task {
        Task::Regression => (&pred - &data.y).norm_squared() / n,
        Task::BinaryPm1 => {
            let wrong = pred
                .iter()
                .zip(data.y.iter())
                .filter(|(p, y)| (if **p >= 0.0 { 1.0 } else { -1.0 }) != **y)
                .count();
            wrong as f64 / n
        }
        Task::BinaryOneHot => {
            let wrong = (0..data.n())
                .filter(|&i| pred.row(i).transpose().imax() != data.y.row(i).transpose().imax())
                .count();
            wrong as f64 / n
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::invariance::pooled_classifier;
    use crate::linmath::SymMatrix;

    fn col(v: &[f64]) -> Matrix {
        Matrix::from_column_slice(v.len(), 1, v)
    }

    fn envs() -> Vec<EnvironmentMoments> {
        vec![
            EnvironmentMoments::new(
                SymMatrix::identity(2),
                col(&[1.0, 0.0]),
                SymMatrix::from_diagonal(&[1.0]),
                1,
            )
            .unwrap(),
            EnvironmentMoments::new(
                SymMatrix::from_diagonal(&[2.0, 1.0]),
                col(&[2.0, 1.0]),
                SymMatrix::from_diagonal(&[3.0]),
                1,
            )
            .unwrap(),
        ]
    }

    #[test]
    fn erm_reaches_pooled_solution() {
        let m = envs();
        let cfg = TrainConfig {
            steps: 3000,
            learning_rate: 0.1,
            ..TrainConfig::new(Method::Erm)
        };
        let res = train_on_moments(&cfg, &m).unwrap();
        let pooled = pooled_classifier(&LinearRepresentation::identity(2), &m, 0.0).unwrap();
        assert!((res.predictor().transpose() - pooled.w).amax() < 1e-4);
        assert_eq!(res.trace.len(), 3000);
    }

    #[test]
    fn irmv2_without_penalty_matches_erm_risk() {
        let m = envs();
        let erm = train_on_moments(
            &TrainConfig {
                steps: 3000,
                learning_rate: 0.1,
                ..TrainConfig::new(Method::Erm)
            },
            &m,
        )
        .unwrap();
        let v2 = train_on_moments(
            &TrainConfig {
                lambda: 0.0,
                d_phi: 2,
                steps: 3000,
                learning_rate: 0.05,
                ..TrainConfig::new(Method::Irmv2)
            },
            &m,
        )
        .unwrap();
        let r_erm: f64 = erm.final_objective(&m).unwrap().env_risk.iter().sum();
        let r_v2: f64 = v2.final_objective(&m).unwrap().env_risk.iter().sum();
        assert!((r_erm - r_v2).abs() < 1e-6, "{r_erm} vs {r_v2}");
    }

    #[test]
    fn backtracking_descent_is_monotone() {
        let m = envs();
        for method in Method::ALL {
            if method == Method::AndMask {
                continue;
            }
            let cfg = TrainConfig {
                steps: 200,
                learning_rate: 0.5,
                lambda: 3.0,
                d_phi: 2,
                backtrack: true,
                ..TrainConfig::new(method)
            };
            let res = train_on_moments(&cfg, &m).unwrap();
            for pair in res.trace.windows(2) {
                assert!(
                    pair[1].loss <= pair[0].loss + 1e-10,
                    "{method}: {} -> {}",
                    pair[0].loss,
                    pair[1].loss
                );
            }
        }
    }

    #[test]
    fn training_is_deterministic_and_checked() {
        let m = envs();
        let cfg = TrainConfig {
            steps: 50,
            d_phi: 2,
            grad_check_every: Some(10),
            optimizer: OptimizerKind::Adamlike,
            ..TrainConfig::new(Method::Irmv1a)
        };
        let a = train_on_moments(&cfg, &m).unwrap();
        let b = train_on_moments(&cfg, &m).unwrap();
        assert_eq!(a.trace, b.trace);
        assert_eq!(a.theta_final, b.theta_final);
        assert_eq!(a.grad_checks.len(), 5);
    }

    #[test]
    fn divergence_is_reported() {
        let cfg = TrainConfig {
            steps: 500,
            learning_rate: 10.0,
            ..TrainConfig::new(Method::Erm)
        };
        let r = train_on_moments(&cfg, &envs());
        assert!(matches!(r, Err(Error::Diverged { .. })), "{r:?}");
    }

    #[test]
    fn evaluate_examples() {
        let x = Matrix::from_row_slice(4, 2, &[1.0, 5.0, -2.0, 1.0, 3.0, 0.0, 0.5, 2.0]);
        let y = Matrix::from_fn(4, 1, |i, _| x[(i, 0)]);
        let data = EnvironmentData::new(x, y, Task::Regression).unwrap();
        let rep = LinearRepresentation::new(Matrix::from_row_slice(1, 2, &[1.0, 0.0])).unwrap();
        assert_eq!(evaluate(&rep, &Classifier::ones(1, 1), &data).unwrap(), 0.0);

        let y = Matrix::from_row_slice(4, 1, &[1.0, -1.0, 1.0, -1.0]);
        let data = EnvironmentData::new(Matrix::zeros(4, 2), y, Task::BinaryPm1).unwrap();
        assert_eq!(evaluate(&rep, &Classifier::ones(1, 1), &data).unwrap(), 0.5);
    }
}
