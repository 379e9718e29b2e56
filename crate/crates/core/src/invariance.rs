//! Risks, Gram matrices, least-squares classifiers and invariance penalties,
//! all computed from per-environment second moments under squared loss.
//!
//! For a linear representation `phi(x) = T x` and an environment with moments
//! `(Sxx, Sxy, Syy)`:
//!
//! - Gram: `G = T Sxx T^T`
//! - risk: `tr(w^T G w) - 2 tr(w^T T Sxy) + tr(Syy)`
//! - least-squares classifier: `w_e = G^+ T Sxy`
//! - IRMv2 penalty: `tr((w - w_e)^T G (w - w_e))`, the exact excess risk of `w`
//! - IRMv1 penalty: `|grad_w R|^2 = 4 |G w - T Sxy|^2`

use serde::{Deserialize, Serialize};

use crate::envgen::EnvironmentData;
use crate::error::{Error, Result};
use crate::linmath::{self, Matrix, SymMatrix};

/// Relative tolerance for the PSD checks on moment blocks.
pub const MOMENT_PSD_TOL: f64 = 1e-9;
/// `adaptive_lambda` refuses denominators at or below this.
pub const MIN_COEFFICIENT_DENOMINATOR: f64 = 1e-14;

/// Second moments of one environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentMoments {
    sxx: SymMatrix,
    sxy: Matrix,
    syy: SymMatrix,
    n: usize,
}

impl EnvironmentMoments {
    /// Validates shapes and that `[[Sxx, Sxy], [Sxy^T, Syy]]` is PSD.
    pub fn new(sxx: SymMatrix, sxy: Matrix, syy: SymMatrix, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptyEnvironment);
        }
        let (dx, dy) = (sxx.dim(), syy.dim());
        if sxy.shape() != (dx, dy) {
            return Err(Error::Shape(format!("sxy is {:?}, expected ({dx}, {dy})", sxy.shape())));
        }
        let mut block = Matrix::zeros(dx + dy, dx + dy);
        block.view_mut((0, 0), (dx, dx)).copy_from(sxx.as_matrix());
        block.view_mut((0, dx), (dx, dy)).copy_from(&sxy);
        block.view_mut((dx, 0), (dy, dx)).copy_from(&sxy.transpose());
        block.view_mut((dx, dx), (dy, dy)).copy_from(syy.as_matrix());
        let eig = linmath::sym_eig(&SymMatrix::symmetrize(block)?)?;
        if eig.lambda_min() < -MOMENT_PSD_TOL * eig.lambda_max().max(0.0) {
            return Err(Error::NotPsd {
                min_eig: eig.lambda_min(),
                max_eig: eig.lambda_max(),
            });
        }
        Ok(Self { sxx, sxy, syy, n })
    }

    pub fn sxx(&self) -> &SymMatrix {
        &self.sxx
    }

    pub fn sxy(&self) -> &Matrix {
        &self.sxy
    }

    pub fn syy(&self) -> &SymMatrix {
        &self.syy
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d_x(&self) -> usize {
        self.sxx.dim()
    }

    pub fn d_y(&self) -> usize {
        self.syy.dim()
    }
}

/// `phi(x) = theta x` with `theta` of shape `d_phi x d_x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearRepresentation {
    theta: Matrix,
}

impl LinearRepresentation {
    pub fn new(theta: Matrix) -> Result<Self> {
        if theta.nrows() == 0 || theta.ncols() == 0 {
            return Err(Error::Shape("representation must be at least 1x1".into()));
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidMatrix("non-finite representation entry".into()));
        }
        Ok(Self { theta })
    }

    pub fn identity(d: usize) -> Self {
        Self {
            theta: Matrix::identity(d, d),
        }
    }

    pub fn theta(&self) -> &Matrix {
        &self.theta
    }

    pub fn into_theta(self) -> Matrix {
        self.theta
    }

    pub fn d_phi(&self) -> usize {
        self.theta.nrows()
    }

    pub fn d_x(&self) -> usize {
        self.theta.ncols()
    }
}

/// A linear classifier `w` (`d_phi x d_y`) on top of a representation.
/// `singular` marks a pseudoinverse solution of a rank-deficient Gram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classifier {
    pub w: Matrix,
    pub singular: bool,
}

impl Classifier {
    pub fn new(w: Matrix) -> Self {
        Self { w, singular: false }
    }

    /// The all-ones classifier IRMv1 fixes.
    pub fn ones(d_phi: usize, d_y: usize) -> Self {
        Self::new(Matrix::from_element(d_phi, d_y, 1.0))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenaltyReport {
    pub risk: f64,
    pub rho_v1: f64,
    pub rho_v2: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub kappa: f64,
}

impl PenaltyReport {
    /// Slack allowed on the eigenvalue sandwich.
    pub fn sandwich_tolerance(&self) -> f64 {
        1e-8 * (1.0 + self.rho_v2)
    }

    /// `|G d|^2` with `d = w - w_e`: the IRMv1 penalty without the factor 4
    /// from `grad_w R = 2 G d`.
    pub fn rho_v1_unscaled(&self) -> f64 {
        self.rho_v1 / 4.0
    }

    /// `lambda_min * rho_v2 <= |G d|^2 <= lambda_max * rho_v2` up to tolerance.
    ///
    /// In terms of `rho_v1` itself the bounds carry a factor 4.
    pub fn sandwich_holds(&self) -> bool {
        let tol = self.sandwich_tolerance();
        let v1 = self.rho_v1_unscaled();
        v1 >= self.lambda_min * self.rho_v2 - tol && v1 <= self.lambda_max * self.rho_v2 + tol
    }
}

/// Sample second moments, averaged over `n`.
pub fn compute_moments(data: &EnvironmentData) -> Result<EnvironmentMoments> {
    let n = data.x.nrows();
    if n == 0 {
        return Err(Error::EmptyEnvironment);
    }
    if data.y.nrows() != n {
        return Err(Error::Shape(format!("x has {n} rows but y has {}", data.y.nrows())));
    }
    let inv_n = 1.0 / n as f64;
    let xt = data.x.transpose();
    let sxx = SymMatrix::symmetrize(&xt * &data.x * inv_n)?;
    let sxy = &xt * &data.y * inv_n;
    let syy = SymMatrix::symmetrize(data.y.transpose() * &data.y * inv_n)?;
    EnvironmentMoments::new(sxx, sxy, syy, n)
}

/// An environment's moments pushed through a representation.
#[derive(Debug, Clone)]
pub struct ProjectedMoments {
    /// `T Sxx T^T`
    pub gram: SymMatrix,
    /// `T Sxy`
    pub cross: Matrix,
    pub syy_trace: f64,
}

impl ProjectedMoments {
    pub fn new(rep: &LinearRepresentation, m: &EnvironmentMoments) -> Result<Self> {
        if rep.d_x() != m.d_x() {
            return Err(Error::Shape(format!(
                "representation expects d_x = {}, moments have d_x = {}",
                rep.d_x(),
                m.d_x()
            )));
        }
        let t = rep.theta();
        let gram = SymMatrix::symmetrize(t * m.sxx().as_matrix() * t.transpose())?;
        Ok(Self {
            gram,
            cross: t * m.sxy(),
            syy_trace: m.syy().as_matrix().trace(),
        })
    }

    fn check_w(&self, w: &Matrix) -> Result<()> {
        if w.shape() != self.cross.shape() {
            return Err(Error::Shape(format!(
                "classifier is {:?}, expected {:?}",
                w.shape(),
                self.cross.shape()
            )));
        }
        Ok(())
    }

    pub fn lse(&self) -> Result<Classifier> {
        let s = linmath::spd_solve_flagged(&self.gram, &self.cross)?;
        Ok(Classifier {
            w: s.x,
            singular: s.truncated,
        })
    }

    pub fn risk(&self, w: &Matrix) -> Result<f64> {
        self.check_w(w)?;
        let gw = self.gram.as_matrix() * w;
        Ok(w.dot(&gw) - 2.0 * w.dot(&self.cross) + self.syy_trace)
    }

    /// Quadratic form `tr(d^T G d)` with `d = w - w_e`; no matrix square root.
    pub fn penalty_irmv2_against(&self, w: &Matrix, w_e: &Matrix) -> Result<f64> {
        self.check_w(w)?;
        let d = w - w_e;
        Ok(d.dot(&(self.gram.as_matrix() * &d)))
    }

    pub fn penalty_irmv2(&self, w: &Matrix) -> Result<f64> {
        let w_e = self.lse()?.w;
        self.penalty_irmv2_against(w, &w_e)
    }

    /// Gradient form `4 |G w - T Sxy|^2`, defined for singular `G` too.
    pub fn penalty_irmv1(&self, w: &Matrix) -> Result<f64> {
        self.check_w(w)?;
        let r = self.gram.as_matrix() * w - &self.cross;
        Ok(4.0 * r.norm_squared())
    }
}

pub fn gram(rep: &LinearRepresentation, m: &EnvironmentMoments) -> Result<SymMatrix> {
    Ok(ProjectedMoments::new(rep, m)?.gram)
}

/// Per-environment least-squares classifier `G^+ T Sxy`.
pub fn lse_classifier(rep: &LinearRepresentation, m: &EnvironmentMoments) -> Result<Classifier> {
    ProjectedMoments::new(rep, m)?.lse()
}

pub fn risk(rep: &LinearRepresentation, w: &Classifier, m: &EnvironmentMoments) -> Result<f64> {
    ProjectedMoments::new(rep, m)?.risk(&w.w)
}

pub fn penalty_irmv2(rep: &LinearRepresentation, w: &Classifier, m: &EnvironmentMoments) -> Result<f64> {
    ProjectedMoments::new(rep, m)?.penalty_irmv2(&w.w)
}

pub fn penalty_irmv1(rep: &LinearRepresentation, w: &Classifier, m: &EnvironmentMoments) -> Result<f64> {
    ProjectedMoments::new(rep, m)?.penalty_irmv1(&w.w)
}

/// Minimizer of `sum_e R_e(w) + lambda * rho_e(w)` over `w`.
///
/// The minimizer does not depend on `lambda`: it is the pooled least-squares
/// solution `(sum G_e)^+ (sum T Sxy_e)`. `lambda` is only validated.
pub fn pooled_classifier(
    rep: &LinearRepresentation,
    moments: &[EnvironmentMoments],
    lambda: f64,
) -> Result<Classifier> {
    let projected = moments
        .iter()
        .map(|m| ProjectedMoments::new(rep, m))
        .collect::<Result<Vec<_>>>()?;
    pooled_from_projected(&projected, lambda)
}

pub fn pooled_from_projected(projected: &[ProjectedMoments], lambda: f64) -> Result<Classifier> {
    if !(lambda >= 0.0) {
        return Err(Error::Precondition(format!(
            "penalty coefficient must be >= 0, got {lambda}"
        )));
    }
    let first = projected
        .first()
        .ok_or_else(|| Error::Precondition("need at least one environment".into()))?;
    let mut g = first.gram.as_matrix().clone();
    let mut c = first.cross.clone();
    for p in &projected[1..] {
        g += p.gram.as_matrix();
        c += &p.cross;
    }
    let s = linmath::spd_solve_flagged(&SymMatrix::symmetrize(g)?, &c)?;
    Ok(Classifier {
        w: s.x,
        singular: s.truncated,
    })
}

/// `1 / (lambda0 + lambda_min(G_e))`.
pub fn adaptive_lambda(rep: &LinearRepresentation, m: &EnvironmentMoments, lambda0: f64) -> Result<f64> {
    adaptive_lambda_for_gram(&gram(rep, m)?, lambda0)
}

pub fn adaptive_lambda_for_gram(g: &SymMatrix, lambda0: f64) -> Result<f64> {
    let denom = lambda0 + linmath::sym_eig(g)?.lambda_min();
    if !(denom > MIN_COEFFICIENT_DENOMINATOR) {
        return Err(Error::DegenerateCoefficient(denom));
    }
    Ok(1.0 / denom)
}

/// Risk, both penalties and the Gram spectrum for one environment.
pub fn penalty_report(rep: &LinearRepresentation, w: &Classifier, m: &EnvironmentMoments) -> Result<PenaltyReport> {
    let p = ProjectedMoments::new(rep, m)?;
    let eig = linmath::sym_eig(&p.gram)?;
    let kappa = linmath::condition_from_eigenvalues(&eig.eigenvalues).unwrap_or(f64::INFINITY);
    Ok(PenaltyReport {
        risk: p.risk(&w.w)?,
        rho_v1: p.penalty_irmv1(&w.w)?,
        rho_v2: p.penalty_irmv2(&w.w)?,
        lambda_min: eig.lambda_min(),
        lambda_max: eig.lambda_max(),
        kappa,
    })
}
