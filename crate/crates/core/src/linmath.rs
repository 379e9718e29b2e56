//! Small dense symmetric linear algebra.
//!
//! Dimensions in this crate are tiny (a few dozen at most), so the
//! eigensolver is a plain cyclic Jacobi iteration. Every Gram-matrix solve
//! goes through [`spd_solve`], which falls back to an eigenvalue-truncated
//! pseudoinverse when the matrix is numerically singular.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;

/// Relative symmetry tolerance accepted by [`SymMatrix::new`].
pub const SYMMETRY_TOL: f64 = 1e-12;
/// Eigenvalues at or below `RANK_TOL * lambda_max` are treated as zero by [`spd_solve`].
pub const RANK_TOL: f64 = 1e-12;
/// A matrix with `lambda_min < -PSD_TOL * lambda_max` is rejected as indefinite.
pub const PSD_TOL: f64 = 1e-9;
/// `|lambda_min| <= CONDITION_CUTOFF * |lambda_max|` makes the condition number infinite.
pub const CONDITION_CUTOFF: f64 = 1e-14;

const MAX_SWEEPS: usize = 100;

/// A dense symmetric matrix with finite entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymMatrix(Matrix);

impl SymMatrix {
    /// Validates squareness, finiteness and symmetry.
    pub fn new(m: Matrix) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::Shape(format!(
                "symmetric matrix must be square, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidMatrix("non-finite entry".into()));
        }
        let n = m.nrows();
        for i in 0..n {
            for j in (i + 1)..n {
                let (a, b) = (m[(i, j)], m[(j, i)]);
                if (a - b).abs() > SYMMETRY_TOL * a.abs().max(b.abs()).max(1.0) {
                    return Err(Error::InvalidMatrix(format!("asymmetric at ({i},{j}): {a} vs {b}")));
                }
            }
        }
        Ok(Self(m))
    }

    /// Builds `(m + m^T) / 2`. Used for products like `T S T^T` that are
    /// symmetric only up to rounding.
    pub fn symmetrize(m: Matrix) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::Shape(format!(
                "cannot symmetrize a {}x{} matrix",
                m.nrows(),
                m.ncols()
            )));
        }
        let s = (&m + m.transpose()) * 0.5;
        if s.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidMatrix("non-finite entry".into()));
        }
        Ok(Self(s))
    }

    pub fn identity(n: usize) -> Self {
        Self(Matrix::identity(n, n))
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        Self(Matrix::from_diagonal(&nalgebra::DVector::from_column_slice(d)))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_inner(self) -> Matrix {
        self.0
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

impl std::ops::Index<(usize, usize)> for SymMatrix {
    type Output = f64;
    fn index(&self, idx: (usize, usize)) -> &f64 {
        &self.0[idx]
    }
}

/// Eigenvalues sorted descending; eigenvectors stored as matching columns.
#[derive(Debug, Clone, PartialEq)]
pub struct EigDecomp {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Matrix,
}

impl EigDecomp {
    pub fn lambda_max(&self) -> f64 {
        self.eigenvalues.first().copied().unwrap_or(0.0)
    }

    pub fn lambda_min(&self) -> f64 {
        self.eigenvalues.last().copied().unwrap_or(0.0)
    }

    /// `V diag(lambda) V^T`.
    pub fn reconstruct(&self) -> Matrix {
        let v = &self.eigenvectors;
        let mut scaled = v.clone();
        for (j, lam) in self.eigenvalues.iter().enumerate() {
            scaled.column_mut(j).scale_mut(*lam);
        }
        scaled * v.transpose()
    }
}

/// Cyclic Jacobi eigendecomposition.
pub fn sym_eig(a: &SymMatrix) -> Result<EigDecomp> {
    let n = a.dim();
    let mut m = a.as_matrix().clone();
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidMatrix("non-finite entry".into()));
    }
    let mut v = Matrix::identity(n, n);
    let total = m.norm_squared();

    for _ in 0..MAX_SWEEPS {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += m[(p, q)] * m[(p, q)];
            }
        }
        if off == 0.0 || off <= 1e-32 * total {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = if theta.is_finite() {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                } else {
                    // |theta| overflowed: the rotation angle is ~0.
                    0.5 / theta
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (x, y) = (m[(k, p)], m[(k, q)]);
                    m[(k, p)] = c * x - s * y;
                    m[(k, q)] = s * x + c * y;
                }
                for k in 0..n {
                    let (x, y) = (m[(p, k)], m[(q, k)]);
                    m[(p, k)] = c * x - s * y;
                    m[(q, k)] = s * x + c * y;
                }
                m[(p, q)] = 0.0;
                m[(q, p)] = 0.0;
                for k in 0..n {
                    let (x, y) = (v[(k, p)], v[(k, q)]);
                    v[(k, p)] = c * x - s * y;
                    v[(k, q)] = s * x + c * y;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(j, j)].total_cmp(&m[(i, i)]).then(i.cmp(&j)));
    let eigenvalues = order.iter().map(|&i| m[(i, i)]).collect();
    let mut eigenvectors = Matrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        eigenvectors.set_column(dst, &v.column(src));
    }
    Ok(EigDecomp {
        eigenvalues,
        eigenvectors,
    })
}

/// `|lambda|_max / |lambda|_min`, or `f64::INFINITY` for a numerically singular matrix.
pub fn condition_number(a: &SymMatrix) -> Result<f64> {
    let eig = sym_eig(a)?;
    condition_from_eigenvalues(&eig.eigenvalues)
}

pub fn condition_from_eigenvalues(eigenvalues: &[f64]) -> Result<f64> {
    let hi = eigenvalues.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let lo = eigenvalues.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    if hi == 0.0 || eigenvalues.is_empty() {
        return Err(Error::Degenerate("zero matrix has no condition number".into()));
    }
    if lo <= CONDITION_CUTOFF * hi {
        Ok(f64::INFINITY)
    } else {
        Ok(hi / lo)
    }
}

/// Result of a PSD solve: the solution and whether the pseudoinverse path was taken.
#[derive(Debug, Clone, PartialEq)]
pub struct Solve {
    pub x: Matrix,
    pub rank: usize,
    pub truncated: bool,
}

/// Solves `A X = B` for positive semidefinite `A`.
///
/// Eigen-directions with `lambda <= RANK_TOL * lambda_max` are dropped, so on
/// a singular `A` this returns the minimum-norm least-squares solution.
pub fn spd_solve(a: &SymMatrix, b: &Matrix) -> Result<Matrix> {
    spd_solve_flagged(a, b).map(|s| s.x)
}

pub fn spd_solve_flagged(a: &SymMatrix, b: &Matrix) -> Result<Solve> {
    if a.dim() != b.nrows() {
        return Err(Error::Shape(format!(
            "spd_solve: A is {n}x{n} but B has {} rows",
            b.nrows(),
            n = a.dim()
        )));
    }
    let eig = sym_eig(a)?;
    let n = a.dim();
    let lmax = eig.lambda_max();
    let lmin = eig.lambda_min();
    if lmin < -PSD_TOL * lmax.max(0.0) || (lmax <= 0.0 && lmin < 0.0) {
        return Err(Error::NotPsd {
            min_eig: lmin,
            max_eig: lmax,
        });
    }
    let cutoff = RANK_TOL * lmax;
    let v = &eig.eigenvectors;
    let vtb = v.transpose() * b;
    let mut scaled = Matrix::zeros(n, b.ncols());
    let mut rank = 0;
    for (i, lam) in eig.eigenvalues.iter().enumerate() {
        if lmax > 0.0 && *lam > cutoff {
            rank += 1;
            scaled.set_row(i, &(vtb.row(i) / *lam));
        }
    }
    Ok(Solve {
        x: v * scaled,
        rank,
        truncated: rank < n,
    })
}

/// Projection onto the eigen-directions `spd_solve` retains.
pub fn retained_projector(a: &SymMatrix) -> Result<Matrix> {
    let eig = sym_eig(a)?;
    let n = a.dim();
    let cutoff = RANK_TOL * eig.lambda_max();
    let mut p = Matrix::zeros(n, n);
    for (i, lam) in eig.eigenvalues.iter().enumerate() {
        if eig.lambda_max() > 0.0 && *lam > cutoff {
            let col = eig.eigenvectors.column(i);
            p += col * col.transpose();
        }
    }
    Ok(p)
}

/// Minimum-norm left inverse `(M^T M)^+ M^T`.
pub fn left_pseudoinverse(m: &Matrix) -> Result<Matrix> {
    let gram = SymMatrix::symmetrize(m.transpose() * m)?;
    spd_solve(&gram, &m.transpose())
}

/// Singular values of `m`, descending, via the eigenvalues of `M^T M`.
pub fn singular_values(m: &Matrix) -> Result<Vec<f64>> {
    let gram = SymMatrix::symmetrize(m.transpose() * m)?;
    Ok(sym_eig(&gram)?
        .eigenvalues
        .into_iter()
        .map(|l| l.max(0.0).sqrt())
        .collect())
}

/// Numerical rank with eigenvalue cutoff `rel_tol * lambda_max` (magnitudes).
pub fn numerical_rank(a: &SymMatrix, rel_tol: f64) -> Result<usize> {
    let eig = sym_eig(a)?;
    let hi = eig.eigenvalues.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if hi == 0.0 {
        return Ok(0);
    }
    Ok(eig.eigenvalues.iter().filter(|l| l.abs() > rel_tol * hi).count())
}

/// Inverse of a nonsingular symmetric matrix; errors if any eigenvalue is
/// at or below `rel_tol * |lambda|_max` in magnitude.
pub fn sym_inverse(a: &SymMatrix, rel_tol: f64) -> Result<Matrix> {
    let eig = sym_eig(a)?;
    let hi = eig.eigenvalues.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if hi == 0.0 || eig.eigenvalues.iter().any(|l| l.abs() <= rel_tol * hi) {
        return Err(Error::Degenerate(format!(
            "matrix singular at relative tolerance {rel_tol:e}"
        )));
    }
    let v = &eig.eigenvectors;
    let mut scaled = v.clone();
    for (j, lam) in eig.eigenvalues.iter().enumerate() {
        scaled.column_mut(j).scale_mut(1.0 / lam);
    }
    Ok(scaled * v.transpose())
}
