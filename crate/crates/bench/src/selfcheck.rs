//! Quick invariant checks over the core library, for the `selfcheck` command.

use serde::{Deserialize, Serialize};

use irm_core::diagnostics::{arjovsky_gram, check_nondegeneracy, closed_form_beta, figure1_facts, theorem1_leakage};
use irm_core::envgen::{invariant_projection, SemSpec};
use irm_core::invariance::{penalty_report, pooled_classifier, LinearRepresentation};
use irm_core::rng::rng_from_seed;
use irm_core::trainers::{gradient_check, Method};

use crate::error::Result;
use crate::instances::{random_matrix, random_moments};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &str, passed: bool, detail: String) -> Check {
    Check {
        name: name.into(),
        passed,
        detail,
    }
}

/// The default spec with its last environment replaced by a copy of the first.
pub fn duplicated_spec(seed: u64) -> SemSpec {
    let mut spec = SemSpec::default_with_seed(seed);
    let last = spec.environments.len() - 1;
    spec.environments[last] = spec.environments[0].clone();
    spec
}

pub fn run_selfcheck(seed: u64) -> Result<Vec<Check>> {
    let mut rng = rng_from_seed(seed);
    let mut out = Vec::new();

    let mut worst = 0.0_f64;
    let mut ok = true;
    for _ in 0..200 {
        let m = random_moments(&mut rng, 5, 1, 40);
        let rep = LinearRepresentation::new(random_matrix(&mut rng, 3, 5, 1.0))?;
        let w = irm_core::invariance::Classifier::new(random_matrix(&mut rng, 3, 1, 1.0));
        let r = penalty_report(&rep, &w, &m)?;
        ok &= r.sandwich_holds();
        let v1 = r.rho_v1_unscaled();
        worst = worst.max((r.lambda_min * r.rho_v2 - v1).max(v1 - r.lambda_max * r.rho_v2));
    }
    out.push(check(
        "eigenvalue sandwich",
        ok,
        format!("largest violation {worst:.2e} over 200 instances"),
    ));

    for method in Method::ALL {
        let mut worst = 0.0_f64;
        for _ in 0..10 {
            let moments: Vec<_> = (0..3).map(|_| random_moments(&mut rng, 6, 1, 30)).collect();
            let rows = if method.baseline().is_some() { 1 } else { 2 };
            let theta = random_matrix(&mut rng, rows, 6, 0.5);
            worst = worst.max(gradient_check(method, &theta, &moments, 2.0, 0.5)?);
        }
        out.push(check(
            &format!("gradient {}", method.name()),
            worst < 1e-5,
            format!("largest relative error {worst:.2e}"),
        ));
    }

    let moments: Vec<_> = (0..3).map(|_| random_moments(&mut rng, 4, 1, 30)).collect();
    let rep = LinearRepresentation::new(random_matrix(&mut rng, 2, 4, 1.0))?;
    let w0 = pooled_classifier(&rep, &moments, 0.0)?.w;
    let same = [1.0, 100.0]
        .iter()
        .map(|&l| pooled_classifier(&rep, &moments, l).map(|w| w.w == w0))
        .collect::<std::result::Result<Vec<_>, _>>()?
        .into_iter()
        .all(|b| b);
    out.push(check("pooled classifier ignores lambda", same, String::new()));

    for sigma in [0.5, 1.0, 2.0] {
        let f = figure1_facts(sigma)?;
        out.push(check(
            &format!("penalty curves sigma={sigma}"),
            f.discontinuous_at_zero && f.vanishes_at_large && f.half_continuous && f.all_finite,
            format!(
                "plain(0)={:.3e} plain(1e-6)={:.3e} half jump={:.2e}",
                f.plain_at_zero, f.plain_at_small, f.half_max_jump
            ),
        ));
    }

    let (lo, hi) = (arjovsky_gram(1e-3, 1.0)?.kappa, arjovsky_gram(1e3, 1.0)?.kappa);
    out.push(check(
        "kappa diverges at both ends",
        lo > 1e4 && hi > 1e4,
        format!("{lo:.3e}, {hi:.3e}"),
    ));

    let spec = SemSpec::default_with_seed(0);
    let good = check_nondegeneracy(&spec)?.overall_ok;
    let dup = check_nondegeneracy(&duplicated_spec(0))?.overall_ok;
    out.push(check(
        "non-degeneracy",
        good && !dup,
        format!("default {good}, duplicated {dup}"),
    ));

    let phi = LinearRepresentation::new(random_matrix(&mut rng, 3, spec.d, 1.0))?;
    let beta = closed_form_beta(&phi, &spec, 0)?;
    out.push(check(
        "closed-form beta",
        beta.sherman_morrison_gap < 1e-9,
        format!("Sherman-Morrison gap {:.2e}", beta.sherman_morrison_gap),
    ));

    let inv = theorem1_leakage(&invariant_projection(&spec, 3)?, &spec)?;
    out.push(check(
        "leakage of invariant projection",
        inv < 1e-10,
        format!("{inv:.2e}"),
    ));
    Ok(out)
}
