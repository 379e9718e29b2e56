//! Gram conditioning of the two-feature regression example and of the
//! masked SEM representation.

use serde::{Deserialize, Serialize};

use crate::envgen::{apply_masked_representation, arjovsky_representation, gen_sem, SemSpec};
use crate::error::{Error, Result};
use crate::invariance::{compute_moments, EnvironmentMoments, LinearRepresentation, ProjectedMoments};
use crate::linmath::{self, Matrix, SymMatrix};
use crate::rng::{derive_seed, hash_str};

/// Batches used for the Monte-Carlo standard error of the empirical κ.
pub const KAPPA_BATCHES: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArjovskyGram {
    pub gram: SymMatrix,
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// `f64::INFINITY` when the Gram is singular.
    pub kappa: f64,
    /// The closed form with prefactor `1 / (2 (s2 + 1))` instead of
    /// `1 / (4 s2 (s2 + 1))`; equals `kappa * 2 s2`.
    pub kappa_printed: f64,
}

/// `[[s2, c s2], [c s2, c^2 (2 s2 + 1)]]` with `s2 = sigma^2`; eigenvalues from
/// trace and determinant.
pub fn arjovsky_gram(c: f64, sigma: f64) -> Result<ArjovskyGram> {
    if !(sigma > 0.0 && sigma.is_finite()) || !c.is_finite() {
        return Err(Error::Spec(format!(
            "need sigma > 0 and finite c, got sigma = {sigma}, c = {c}"
        )));
    }
    let s2 = sigma * sigma;
    let g22 = c * c * (2.0 * s2 + 1.0);
    let gram = SymMatrix::new(Matrix::from_row_slice(2, 2, &[s2, c * s2, c * s2, g22]))?;
    let t = s2 + g22;
    let det = c * c * s2 * (s2 + 1.0);
    // t^2 - 4 det = (s2 - g22)^2 + 4 c^2 s2^2 >= 0, written without cancellation.
    let root = ((s2 - g22).powi(2) + 4.0 * c * c * s2 * s2).sqrt();
    let lambda_max = 0.5 * (t + root);
    let lambda_min = if det == 0.0 { 0.0 } else { 2.0 * det / (t + root) };
    let kappa = if lambda_min == 0.0 {
        f64::INFINITY
    } else {
        lambda_max / lambda_min
    };
    let kappa_printed = if c == 0.0 {
        f64::INFINITY
    } else {
        let inner = s2 * s2 / (c * c) + c * c * (2.0 * s2 + 1.0).powi(2) - 2.0 * s2;
        let a = s2 / c.abs() + c.abs() * (2.0 * s2 + 1.0) + inner.max(0.0).sqrt();
        a * a / (2.0 * (s2 + 1.0))
    };
    Ok(ArjovskyGram {
        gram,
        lambda_min,
        lambda_max,
        kappa,
        kappa_printed,
    })
}

/// Exact moments of `x = (x1, x2)`, `y` for the two-feature example.
pub fn arjovsky_population_moments(sigma: f64) -> Result<EnvironmentMoments> {
    let s2 = sigma * sigma;
    let sxx = SymMatrix::new(Matrix::from_row_slice(2, 2, &[s2, s2, s2, 2.0 * s2 + 1.0]))?;
    let sxy = Matrix::from_column_slice(2, 1, &[s2, 2.0 * s2]);
    EnvironmentMoments::new(sxx, sxy, SymMatrix::from_diagonal(&[2.0 * s2]), usize::MAX)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Figure1Point {
    pub c: f64,
    /// `|w_inv - w_e|^2`
    pub plain: f64,
    /// `|G^(1/2) (w_inv - w_e)|^2`
    pub half: f64,
    /// `|G (w_inv - w_e)|^2`
    pub full: f64,
    pub kappa: f64,
    pub lambda_max: f64,
}

/// The three candidate penalties at `w_inv = [1, 0]`, with the
/// pseudoinverse least-squares classifier of `phi_c`.
pub fn figure1_curves(c: f64, sigma: f64) -> Result<Figure1Point> {
    let moments = arjovsky_population_moments(sigma)?;
    figure1_from_moments(c, sigma, &moments)
}

/// Same curves from arbitrary (e.g. sampled) moments of `(x1, x2, y)`.
pub fn figure1_from_moments(c: f64, sigma: f64, moments: &EnvironmentMoments) -> Result<Figure1Point> {
    let p = ProjectedMoments::new(&arjovsky_representation(c), moments)?;
    let w_inv = Matrix::from_column_slice(2, 1, &[1.0, 0.0]);
    let d = &w_inv - p.lse()?.w;
    let gd = p.gram.as_matrix() * &d;
    let g = arjovsky_gram(c, sigma)?;
    Ok(Figure1Point {
        c,
        plain: d.norm_squared(),
        half: d.dot(&gd),
        full: gd.norm_squared(),
        kappa: g.kappa,
        lambda_max: g.lambda_max,
    })
}

/// `n` points log-spaced over `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n.max(2) - 1) as f64).exp())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Figure1Facts {
    pub sigma: f64,
    pub plain_at_zero: f64,
    pub plain_at_small: f64,
    pub discontinuous_at_zero: bool,
    pub plain_at_one: f64,
    pub plain_at_large: f64,
    pub vanishes_at_large: bool,
    /// Largest jump of the `half` curve between neighbours of the positive
    /// log grid, and the same on the twice-refined grid.
    pub half_max_jump: f64,
    pub half_max_jump_refined: f64,
    pub half_scale: f64,
    pub half_at_zero: f64,
    /// `|half(0) - half(smallest grid point)|`.
    pub half_jump_at_zero: f64,
    pub half_continuous: bool,
    pub all_finite: bool,
}

pub const FIGURE1_SMALL_C: f64 = 1e-6;
pub const FIGURE1_LARGE_C: f64 = 1e3;
pub const FIGURE1_GRID_POINTS: usize = 91;
/// Allowed jump on the log grid, relative to the curve's magnitude.
pub const FIGURE1_JUMP_TOL: f64 = 1e-2;

fn max_jump(values: &[f64]) -> f64 {
    values.windows(2).map(|w| (w[1] - w[0]).abs()).fold(0.0, f64::max)
}

/// Discontinuity of the plain penalty at `c = 0`, its decay at large `c`, and
/// continuity of the `G^(1/2)` penalty on a log grid over
/// `[FIGURE1_SMALL_C, FIGURE1_LARGE_C]`. Refining the grid must not
/// increase the largest jump.
pub fn figure1_facts(sigma: f64) -> Result<Figure1Facts> {
    let at = |c: f64| figure1_curves(c, sigma);
    let zero = at(0.0)?;
    let small = at(FIGURE1_SMALL_C)?;
    let one = at(1.0)?;
    let large = at(FIGURE1_LARGE_C)?;

    let coarse = log_grid(FIGURE1_SMALL_C, FIGURE1_LARGE_C, FIGURE1_GRID_POINTS);
    let fine = log_grid(FIGURE1_SMALL_C, FIGURE1_LARGE_C, 2 * FIGURE1_GRID_POINTS - 1);
    let half_coarse = coarse
        .iter()
        .map(|&c| at(c).map(|p| p.half))
        .collect::<Result<Vec<_>>>()?;
    let half_fine = fine
        .iter()
        .map(|&c| at(c).map(|p| p.half))
        .collect::<Result<Vec<_>>>()?;
    let scale = half_fine
        .iter()
        .fold(0.0_f64, |m, v| m.max(v.abs()))
        .max(f64::MIN_POSITIVE);
    let (j, jr) = (max_jump(&half_coarse), max_jump(&half_fine));
    let all_finite = [zero, small, one, large]
        .iter()
        .all(|p| p.plain.is_finite() && p.half.is_finite() && p.full.is_finite())
        && half_fine.iter().all(|v| v.is_finite());
    Ok(Figure1Facts {
        sigma,
        plain_at_zero: zero.plain,
        plain_at_small: small.plain,
        discontinuous_at_zero: small.plain > 10.0 * zero.plain,
        plain_at_one: one.plain,
        plain_at_large: large.plain,
        vanishes_at_large: large.plain < one.plain,
        half_max_jump: j,
        half_max_jump_refined: jr,
        half_scale: scale,
        half_at_zero: zero.half,
        half_jump_at_zero: (zero.half - half_coarse[0]).abs(),
        half_continuous: j <= FIGURE1_JUMP_TOL * scale && jr <= j + FIGURE1_JUMP_TOL * scale * 1e-1,
        all_finite,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PFormula {
    /// `exp(-d_e min(eps - 1, (eps - 1)^2) / 8)`
    Scaled,
    /// `exp(-min(eps - 1, (eps - 1)^2) / 8)`
    Unscaled,
}

impl std::str::FromStr for PFormula {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "scaled" => Ok(Self::Scaled),
            "unscaled" => Ok(Self::Unscaled),
            _ => Err(format!("unknown p formula '{s}'")),
        }
    }
}

pub fn p_mask(which: PFormula, d_e: usize, epsilon: f64) -> f64 {
    let t = epsilon - 1.0;
    let m = t.min(t * t);
    match which {
        PFormula::Scaled => (-(d_e as f64) * m / 8.0).exp(),
        PFormula::Unscaled => (-m / 8.0).exp(),
    }
}

/// `(|mu_c|^2 + d_c s_c^2) / ((d_e + d_c)(|mu_c|^2 + d_c s_c^2 + (|mu_e| + sqrt(d_e s_e^2))^2))`
pub fn rosenfeld_constant(spec: &SemSpec, env_index: usize) -> Result<f64> {
    let env = spec
        .environments
        .get(env_index)
        .ok_or_else(|| Error::Spec(format!("environment {env_index} out of range")))?;
    let mu_c2: f64 = spec.mu_c.iter().map(|v| v * v).sum();
    let mu_e: f64 = env.mu_e.iter().map(|v| v * v).sum::<f64>().sqrt();
    let (dc, de) = (spec.d_c as f64, spec.d_e as f64);
    let num = mu_c2 + dc * spec.sigma_c * spec.sigma_c;
    let tail = mu_e + (de * env.sigma_e * env.sigma_e).sqrt();
    Ok(num / ((de + dc) * (num + tail * tail)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterexampleProfile {
    pub env_index: usize,
    pub epsilon: f64,
    pub p_mask_scaled: f64,
    pub p_mask_unscaled: f64,
    pub which_p: PFormula,
    pub constant: f64,
    pub kappa_lower_bound: f64,
    pub empirical_mask_prob: f64,
    pub kappa_empirical: f64,
    /// Standard error of `kappa_empirical` from `KAPPA_BATCHES` batches.
    pub kappa_std_error: f64,
    pub n: usize,
    /// Squared-loss penalties of the invariant classifier under the masked
    /// representation.
    pub penalty_v1: f64,
    pub penalty_v2: f64,
}

/// `[mu_c / (sigma_c^2 + |mu_c|^2); 0]`, the least-squares classifier on `z_c`.
pub fn masked_invariant_classifier(spec: &SemSpec) -> Matrix {
    let mu_c2: f64 = spec.mu_c.iter().map(|v| v * v).sum();
    let scale = 1.0 / (spec.sigma_c * spec.sigma_c + mu_c2);
    let mut w = Matrix::zeros(spec.d_c + spec.d_e, 1);
    for (i, m) in spec.mu_c.iter().enumerate() {
        w[i] = m * scale;
    }
    w
}

fn gram_kappa(m: &EnvironmentMoments) -> Result<f64> {
    linmath::condition_number(m.sxx())
}

/// Standard error of the batch mean. Zero when every batch Gram is singular
/// (all infinite), infinite when only some are.
fn batch_std_error(batch: &[f64]) -> f64 {
    let infinite = batch.iter().filter(|k| k.is_infinite()).count();
    if infinite == batch.len() {
        return 0.0;
    }
    if infinite > 0 {
        return f64::INFINITY;
    }
    let n = batch.len() as f64;
    let mean = batch.iter().sum::<f64>() / n;
    let var = batch.iter().map(|k| (k - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (var / n).sqrt()
}

/// Bound `kappa >= C (1/p - 1)` next to a Monte-Carlo `kappa` of the masked
/// representation's Gram for environment `env_index`.
pub fn rosenfeld_kappa_bound(
    spec: &SemSpec,
    env_index: usize,
    epsilon: f64,
    which_p: PFormula,
    n: usize,
    seed: u64,
) -> Result<CounterexampleProfile> {
    if !(epsilon >= 1.0) {
        return Err(Error::Precondition(format!("epsilon must be >= 1, got {epsilon}")));
    }
    if n < KAPPA_BATCHES {
        return Err(Error::Spec(format!("need at least {KAPPA_BATCHES} samples, got {n}")));
    }
    let constant = rosenfeld_constant(spec, env_index)?;
    let p = p_mask(which_p, spec.d_e, epsilon);
    let kappa_lower_bound = constant * (1.0 / p - 1.0);

    let data = gen_sem(spec, env_index, n, derive_seed(&[seed, hash_str("rosenfeld")]))?;
    let masked = apply_masked_representation(&data, spec, epsilon)?;
    let moments = compute_moments(&masked.data)?;
    let kappa_empirical = gram_kappa(&moments)?;

    let per = n / KAPPA_BATCHES;
    let mut batch = Vec::with_capacity(KAPPA_BATCHES);
    for b in 0..KAPPA_BATCHES {
        let rows = masked.data.x.rows(b * per, per).into_owned();
        let sxx = SymMatrix::symmetrize(rows.transpose() * &rows / per as f64)?;
        batch.push(linmath::condition_number(&sxx)?);
    }
    let kappa_std_error = batch_std_error(&batch);

    let w = masked_invariant_classifier(spec);
    let rep = LinearRepresentation::identity(spec.d_c + spec.d_e);
    let proj = ProjectedMoments::new(&rep, &moments)?;
    Ok(CounterexampleProfile {
        env_index,
        epsilon,
        p_mask_scaled: p_mask(PFormula::Scaled, spec.d_e, epsilon),
        p_mask_unscaled: p_mask(PFormula::Unscaled, spec.d_e, epsilon),
        which_p,
        constant,
        kappa_lower_bound,
        empirical_mask_prob: masked.mask_frequency,
        kappa_empirical,
        kappa_std_error,
        n,
        penalty_v1: proj.penalty_irmv1(&w)?,
        penalty_v2: proj.penalty_irmv2(&w)?,
    })
}
