//! Conditioning sweeps over the two-feature regression example and the
//! masked SEM representation.

use std::io::Write;

use serde::{Deserialize, Serialize};

use irm_core::diagnostics::conditioning::figure1_from_moments;
use irm_core::diagnostics::{figure1_curves, rosenfeld_kappa_bound, CounterexampleProfile, Figure1Point, PFormula};
use irm_core::envgen::{gen_arjovsky, SemSpec};
use irm_core::invariance::compute_moments;
use irm_core::linmath;

use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveValue {
    pub c: f64,
    pub curve: String,
    pub value: f64,
}

pub const CURVES: [&str; 4] = ["plain", "half", "full", "kappa"];

/// How the Gram and least-squares classifier are obtained at each `c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Moments {
    ClosedForm,
    /// `n` samples drawn with `seed`; kappa comes from the sample Gram.
    Sampled {
        n: usize,
        seed: u64,
    },
}

/// Per `c`: `|d|^2`, `|G^(1/2) d|^2`, `|G d|^2` with `d = w_inv - w_e`, and
/// `kappa(G)`. Kappa is `inf` where the Gram is singular.
pub fn figure1_points(c_grid: &[f64], sigma: f64, moments: Moments) -> Result<Vec<Figure1Point>> {
    c_grid
        .iter()
        .map(|&c| match moments {
            Moments::ClosedForm => Ok(figure1_curves(c, sigma)?),
            Moments::Sampled { n, seed } => {
                let (data, rep) = gen_arjovsky(c, sigma, n, seed)?;
                let m = compute_moments(&data)?;
                let mut p = figure1_from_moments(c, sigma, &m)?;
                let g = irm_core::invariance::gram(&rep, &m)?;
                p.kappa = linmath::condition_number(&g).unwrap_or(f64::INFINITY);
                Ok(p)
            }
        })
        .collect()
}

pub fn figure1_sweep(c_grid: &[f64], sigma: f64, moments: Moments) -> Result<Vec<CurveValue>> {
    let mut out = Vec::with_capacity(4 * c_grid.len());
    for p in figure1_points(c_grid, sigma, moments)? {
        for (curve, value) in CURVES.iter().zip([p.plain, p.half, p.full, p.kappa]) {
            out.push(CurveValue {
                c: p.c,
                curve: curve.to_string(),
                value,
            });
        }
    }
    Ok(out)
}

pub fn write_curves_csv<W: Write>(out: W, values: &[CurveValue]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["c", "curve", "value"])?;
    for v in values {
        w.write_record([v.c.to_string(), v.curve.clone(), v.value.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// One profile per epsilon, all from the same sample draw so that rows differ
/// only through the mask.
pub fn rosenfeld_sweep(
    spec: &SemSpec,
    env_index: usize,
    epsilons: &[f64],
    which_p: PFormula,
    n: usize,
    seed: u64,
) -> Result<Vec<CounterexampleProfile>> {
    epsilons
        .iter()
        .map(|&eps| Ok(rosenfeld_kappa_bound(spec, env_index, eps, which_p, n, seed)?))
        .collect()
}

pub const ROSENFELD_HEADER: [&str; 13] = [
    "epsilon",
    "env",
    "p_scaled",
    "p_unscaled",
    "which_p",
    "constant",
    "bound",
    "mask_prob",
    "kappa",
    "kappa_se",
    "penalty_v1",
    "penalty_v2",
    "n",
];

pub fn write_profiles_csv<W: Write>(out: W, profiles: &[CounterexampleProfile]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(ROSENFELD_HEADER)?;
    for p in profiles {
        let which = match p.which_p {
            PFormula::Scaled => "scaled",
            PFormula::Unscaled => "unscaled",
        };
        w.write_record([
            p.epsilon.to_string(),
            p.env_index.to_string(),
            p.p_mask_scaled.to_string(),
            p.p_mask_unscaled.to_string(),
            which.to_string(),
            p.constant.to_string(),
            p.kappa_lower_bound.to_string(),
            p.empirical_mask_prob.to_string(),
            p.kappa_empirical.to_string(),
            p.kappa_std_error.to_string(),
            p.penalty_v1.to_string(),
            p.penalty_v2.to_string(),
            p.n.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
