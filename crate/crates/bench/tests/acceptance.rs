//! Acceptance run. Prints one PASS/FAIL line per criterion and a summary.
//! Exits non-zero on failure only when `IRM_ACCEPTANCE_STRICT=1`.

use std::collections::BTreeMap;
use std::time::Instant;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng as _;
use rand_distr::StandardNormal;

use irm_bench::selfcheck::duplicated_spec;
use irm_bench::{run_suite, write_records_csv, ExperimentConfig, Metric, RunRecord, Suite, Variant};
use irm_core::diagnostics::{
    arjovsky_gram, check_nondegeneracy, closed_form_beta, figure1_curves, figure1_facts, p_mask, rosenfeld_constant,
    rosenfeld_kappa_bound, PFormula,
};
use irm_core::envgen::{gen_arjovsky, gen_sem, SemEnvironment, SemSpec};
use irm_core::invariance::{
    penalty_irmv1, penalty_irmv2, penalty_report, pooled_classifier, Classifier, EnvironmentMoments,
    LinearRepresentation,
};
use irm_core::linmath::SymMatrix;
use irm_core::rng::{rng_from_seed, Rng};
use irm_core::trainers::{frozen_loss, irmv2_loss_and_grad, method_objective, Method};

type M = DMatrix<f64>;
type Criterion = (&'static str, Option<f64>, fn() -> Outcome);

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn normal(rng: &mut Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn gaussian(rng: &mut Rng, rows: usize, cols: usize) -> M {
    M::from_fn(rows, cols, |_, _| normal(rng))
}

/// Raw second moments of `m` Gaussian rows with a noisy linear target.
struct RawMoments {
    sxx: M,
    sxy: M,
    syy: M,
}

fn raw_moments(rng: &mut Rng, d_x: usize, d_y: usize, m: usize) -> RawMoments {
    let scales: Vec<f64> = (0..d_x).map(|_| 0.5 + 1.5 * rng.random::<f64>()).collect();
    let x = M::from_fn(m, d_x, |_, j| scales[j] * normal(rng));
    let b = gaussian(rng, d_x, d_y);
    let y = &x * b + gaussian(rng, m, d_y) * 0.5;
    let n = m as f64;
    let sxx = x.transpose() * &x / n;
    RawMoments {
        sxx: (&sxx + sxx.transpose()) / 2.0,
        sxy: x.transpose() * &y / n,
        syy: y.transpose() * &y / n,
    }
}

fn to_core(r: &RawMoments, m: usize) -> EnvironmentMoments {
    EnvironmentMoments::new(
        SymMatrix::symmetrize(r.sxx.clone()).unwrap(),
        r.sxy.clone(),
        SymMatrix::symmetrize(r.syy.clone()).unwrap(),
        m,
    )
    .unwrap()
}

/// `E|y - w^T T x|^2` from raw moments.
fn oracle_risk(t: &M, w: &M, r: &RawMoments) -> f64 {
    r.syy.trace() - 2.0 * (w.transpose() * t * &r.sxy).trace()
        + (w.transpose() * t * &r.sxx * t.transpose() * w).trace()
}

fn oracle_lse(t: &M, r: &RawMoments) -> M {
    let g = t * &r.sxx * t.transpose();
    g.cholesky().expect("positive definite Gram").solve(&(t * &r.sxy))
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

fn mat_rel(a: &M, b: &M) -> f64 {
    (a - b).norm() / a.norm().max(b.norm()).max(1e-12)
}

/// Risk decomposition: the excess risk of `w` over the per-environment
/// least-squares classifier equals the IRMv2 penalty.
fn criterion1() -> Outcome {
    let mut rng = rng_from_seed(101);
    let mut worst = 0.0_f64;
    for _ in 0..100 {
        let d_x = rng.random_range(2..=6);
        let d_phi = rng.random_range(1..=d_x);
        let d_y = rng.random_range(1..=2);
        let raw = raw_moments(&mut rng, d_x, d_y, 50);
        let t = gaussian(&mut rng, d_phi, d_x);
        let w = gaussian(&mut rng, d_phi, d_y);
        let excess = oracle_risk(&t, &w, &raw) - oracle_risk(&t, &oracle_lse(&t, &raw), &raw);
        let rep = LinearRepresentation::new(t).unwrap();
        let pen = penalty_irmv2(&rep, &Classifier::new(w), &to_core(&raw, 50)).unwrap();
        worst = worst.max(rel(excess, pen));
    }
    outcome(
        worst <= 1e-9,
        format!("largest relative error {worst:.2e} over 100 instances"),
    )
}

/// Pooled classifier against gradient descent on the summed risk, and its
/// independence of lambda.
fn criterion2() -> Outcome {
    let mut rng = rng_from_seed(202);
    let mut worst = 0.0_f64;
    let mut identical = true;
    for _ in 0..50 {
        let k = rng.random_range(2..=4);
        let d_x = rng.random_range(2..=6);
        let d_phi = rng.random_range(1..=d_x);
        let raws: Vec<RawMoments> = (0..k).map(|_| raw_moments(&mut rng, d_x, 1, 40)).collect();
        let moments: Vec<EnvironmentMoments> = raws.iter().map(|r| to_core(r, 40)).collect();
        let t = gaussian(&mut rng, d_phi, d_x);

        let g: M = raws
            .iter()
            .map(|r| &t * &r.sxx * t.transpose())
            .fold(M::zeros(d_phi, d_phi), |a, b| a + b);
        let c: M = raws.iter().map(|r| &t * &r.sxy).fold(M::zeros(d_phi, 1), |a, b| a + b);
        let l = 2.0 * SymmetricEigen::new(g.clone()).eigenvalues.max();
        let mut w = M::zeros(d_phi, 1);
        for _ in 0..1_000_000 {
            let grad = (&g * &w - &c) * 2.0;
            if grad.norm() < 1e-13 {
                break;
            }
            w -= grad / l;
        }

        let rep = LinearRepresentation::new(t.clone()).unwrap();
        let ws: Vec<M> = [0.0, 1.0, 100.0]
            .iter()
            .map(|&lam| pooled_classifier(&rep, &moments, lam).unwrap().w)
            .collect();
        let inner: Vec<M> = [0.0, 1.0, 100.0]
            .iter()
            .map(|&lam| irmv2_loss_and_grad(&t, &moments, lam).unwrap().w)
            .collect();
        identical &= ws.iter().all(|x| *x == ws[0]) && inner.iter().all(|x| *x == inner[0]);
        worst = worst.max((&ws[0] - &w).norm() / ws[0].norm().max(1.0));
    }
    outcome(
        worst <= 1e-6 && identical,
        format!("largest deviation from descent {worst:.2e}; identical across lambda: {identical}"),
    )
}

/// `lambda_min rho_v2 <= rho_v1 / 4 <= lambda_max rho_v2`, with eigenvalues
/// from an independent solver.
fn criterion3() -> Outcome {
    let mut rng = rng_from_seed(303);
    let mut violations = 0;
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..1000 {
        let d_x = rng.random_range(2..=6);
        let d_phi = rng.random_range(1..=d_x + 1);
        let raw = raw_moments(&mut rng, d_x, 1, 30);
        let t = gaussian(&mut rng, d_phi, d_x);
        let w = gaussian(&mut rng, d_phi, 1);
        let g = &t * &raw.sxx * t.transpose();
        let eig = SymmetricEigen::new((&g + g.transpose()) / 2.0).eigenvalues;
        let (lo, hi) = (eig.min().max(0.0), eig.max());
        let rep = LinearRepresentation::new(t).unwrap();
        let r = penalty_report(&rep, &Classifier::new(w), &to_core(&raw, 30)).unwrap();
        let slack = 1e-8 * (1.0 + r.rho_v2);
        let v1 = r.rho_v1 / 4.0;
        let excess = (lo * r.rho_v2 - v1).max(v1 - hi * r.rho_v2);
        worst = worst.max(excess - slack);
        if excess > slack {
            violations += 1;
        }
    }
    outcome(
        violations == 0,
        format!("{violations} violations in 1000 instances (worst margin {worst:.2e}); bounds apply to rho_v1 / 4"),
    )
}

/// IRMv1 penalty against `4 |G (w - w_e)|^2` and against the squared norm of
/// the risk gradient, both computed here.
fn criterion4() -> Outcome {
    let mut rng = rng_from_seed(404);
    let (mut worst, mut count) = (0.0_f64, 0);
    while count < 100 {
        let d_x = rng.random_range(2..=6);
        let d_phi = rng.random_range(1..=d_x);
        let d_y = rng.random_range(1..=2);
        let raw = raw_moments(&mut rng, d_x, d_y, 60);
        let t = gaussian(&mut rng, d_phi, d_x);
        let g = &t * &raw.sxx * t.transpose();
        let eig = SymmetricEigen::new(g.clone()).eigenvalues;
        if eig.max() / eig.min() >= 1e8 {
            continue;
        }
        count += 1;
        let w = gaussian(&mut rng, d_phi, d_y);
        let via_lse = 4.0 * (&g * (&w - oracle_lse(&t, &raw))).norm_squared();
        let via_grad = ((&g * &w - &t * &raw.sxy) * 2.0).norm_squared();
        let rep = LinearRepresentation::new(t).unwrap();
        let pen = penalty_irmv1(&rep, &Classifier::new(w), &to_core(&raw, 60)).unwrap();
        worst = worst.max(rel(pen, via_lse)).max(rel(pen, via_grad));
    }
    outcome(
        worst <= 1e-9,
        format!("largest relative error {worst:.2e} over 100 instances"),
    )
}

/// Analytic gradients against central differences taken here.
fn criterion5() -> Outcome {
    let mut rng = rng_from_seed(505);
    let mut lines = Vec::new();
    let mut all = true;
    for method in Method::ALL {
        let mut worst = 0.0_f64;
        for _ in 0..50 {
            let k = rng.random_range(2..=4);
            let d_x = rng.random_range(2..=8);
            // A square IRMv2 representation spans every linear predictor, so
            // its objective is flat in theta; that case is checked below.
            let d_phi = match method {
                _ if method.baseline().is_some() => 1,
                Method::Irmv2 => rng.random_range(1..=4.min(d_x - 1)),
                _ => rng.random_range(1..=4.min(d_x)),
            };
            let moments: Vec<EnvironmentMoments> = (0..k)
                .map(|_| to_core(&raw_moments(&mut rng, d_x, 1, 40), 40))
                .collect();
            let theta = gaussian(&mut rng, d_phi, d_x) * 0.5;
            let lambda = 0.1 + 5.0 * rng.random::<f64>();
            let lambda0 = 0.1 + 2.0 * rng.random::<f64>();
            let obj = method_objective(method, &theta, &moments, lambda, lambda0).unwrap();
            let mut fd = M::zeros(d_phi, d_x);
            for i in 0..d_phi {
                for j in 0..d_x {
                    let h = 1e-5 * (1.0 + theta[(i, j)].abs());
                    let (mut up, mut down) = (theta.clone(), theta.clone());
                    up[(i, j)] += h;
                    down[(i, j)] -= h;
                    let f = |t: &M| frozen_loss(method, t, &moments, lambda, &obj).unwrap();
                    fd[(i, j)] = (f(&up) - f(&down)) / (2.0 * h);
                }
            }
            worst = worst.max(mat_rel(&obj.grad, &fd));
        }
        all &= worst < 1e-5;
        lines.push(format!("{} {worst:.1e}", method.name()));
    }
    let mut flat = 0.0_f64;
    for _ in 0..20 {
        let d = rng.random_range(2..=4);
        let moments: Vec<EnvironmentMoments> = (0..3).map(|_| to_core(&raw_moments(&mut rng, d, 1, 40), 40)).collect();
        let theta = gaussian(&mut rng, d, d);
        let obj = irmv2_loss_and_grad(&theta, &moments, 2.0).unwrap();
        flat = flat.max(obj.grad.norm() / (1.0 + obj.loss.abs()));
    }
    all &= flat < 1e-8;
    outcome(
        all,
        format!(
            "largest relative error per method: {}; square IRMv2 gradient {flat:.1e}",
            lines.join(", ")
        ),
    )
}

fn random_spec(rng: &mut Rng, eta: f64) -> SemSpec {
    let (d_c, d_e, d) = (2, 2, 5);
    SemSpec {
        d_c,
        d_e,
        d,
        s: gaussian(rng, d, d_c + d_e),
        mu_c: (0..d_c).map(|_| normal(rng)).collect(),
        environments: (0..3)
            .map(|_| SemEnvironment {
                mu_e: (0..d_e).map(|_| normal(rng)).collect(),
                sigma_e: 0.5 + 1.5 * rng.random::<f64>(),
            })
            .collect(),
        sigma_c: 0.5 + rng.random::<f64>(),
        eta,
    }
}

/// Closed-form one-hot classifier against the sample least-squares fit with
/// heteroskedasticity-robust standard errors, both computed here.
fn criterion6() -> Outcome {
    let mut rng = rng_from_seed(606);
    let n = 100_000;
    let mut worst = 0.0_f64;
    for (i, eta) in [0.3, 0.5, 0.7, 0.3, 0.7].into_iter().enumerate() {
        let spec = random_spec(&mut rng, eta);
        let t = gaussian(&mut rng, 3, spec.d);
        let data = gen_sem(&spec, 0, n, 6000 + i as u64).unwrap().to_onehot().unwrap();
        let phi = &data.x * t.transpose();
        let gram = phi.transpose() * &phi;
        let g_inv = gram.clone().try_inverse().unwrap();
        let w_hat = &g_inv * phi.transpose() * &data.y;
        let resid = &data.y - &phi * &w_hat;
        let rep = LinearRepresentation::new(t).unwrap();
        let closed = closed_form_beta(&rep, &spec, 0).unwrap().classifier.w;
        for k in 0..2 {
            let mut meat = M::zeros(3, 3);
            for r in 0..n {
                let row = phi.row(r).transpose();
                meat += &row * row.transpose() * resid[(r, k)].powi(2);
            }
            let cov = &g_inv * meat * &g_inv;
            for j in 0..3 {
                let z = (w_hat[(j, k)] - closed[(j, k)]).abs() / cov[(j, j)].sqrt();
                worst = worst.max(z);
            }
        }
    }
    outcome(
        worst <= 5.0,
        format!("largest deviation {worst:.2} standard errors over 5 specs x 6 entries"),
    )
}

/// Two-feature example: sample Gram against the closed form, kappa at both
/// ends of the scale range, and the penalty-curve facts.
fn criterion7() -> Outcome {
    let n = 100_000;
    let mut worst_z = 0.0_f64;
    let mut closed_ok = true;
    for (i, sigma) in [0.5, 1.0, 2.0].into_iter().enumerate() {
        for (j, c) in [0.5, 1.0, 2.0].into_iter().enumerate() {
            let s2 = sigma * sigma;
            let hand = M::from_row_slice(2, 2, &[s2, c * s2, c * s2, c * c * (2.0 * s2 + 1.0)]);
            let g = arjovsky_gram(c, sigma).unwrap().gram.into_inner();
            closed_ok &= (&g - &hand).norm() <= 1e-12 * hand.norm();
            let (data, rep) = gen_arjovsky(c, sigma, n, 700 + (3 * i + j) as u64).unwrap();
            let phi = &data.x * rep.theta().transpose();
            for a in 0..2 {
                for b in 0..2 {
                    let prods: Vec<f64> = (0..n).map(|r| phi[(r, a)] * phi[(r, b)]).collect();
                    let mean = prods.iter().sum::<f64>() / n as f64;
                    let sd = (prods.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
                    worst_z = worst_z.max((mean - hand[(a, b)]).abs() / (sd / (n as f64).sqrt()));
                }
            }
        }
    }
    let mut kappa_ok = true;
    let mut kappas = Vec::new();
    for sigma in [0.5, 1.0, 2.0] {
        for c in [1e-3, 1e3] {
            let g = arjovsky_gram(c, sigma).unwrap().gram.into_inner();
            let e = SymmetricEigen::new(g).eigenvalues;
            let k = e.max() / e.min();
            kappa_ok &= k > 1e4;
            kappas.push(k);
        }
    }
    let mut facts_ok = true;
    let mut curve_err = 0.0_f64;
    for sigma in [0.5, 1.0, 2.0] {
        let f = figure1_facts(sigma).unwrap();
        let s2 = sigma * sigma;
        let plain = |c: f64| (s2 / (s2 + 1.0)).powi(2) * (1.0 + 1.0 / (c * c));
        let i = plain(1e-6) > 10.0 * figure1_curves(0.0, sigma).unwrap().plain;
        let ii = plain(1e3) < plain(1.0);
        facts_ok &= i && ii && f.discontinuous_at_zero && f.vanishes_at_large && f.half_continuous && f.all_finite;
        for c in [1e-3, 0.1, 1.0, 10.0, 1e3] {
            let p = figure1_curves(c, sigma).unwrap();
            curve_err = curve_err
                .max(rel(p.plain, plain(c)))
                .max(rel(p.half, s2 * s2 / (s2 + 1.0)))
                .max(rel(p.full, c * c * s2 * s2));
        }
    }
    let min_kappa = kappas.iter().cloned().fold(f64::INFINITY, f64::min);
    outcome(
        worst_z <= 5.0 && closed_ok && kappa_ok && facts_ok && curve_err <= 1e-9,
        format!(
            "Gram within {worst_z:.2} SE; smallest end-of-range kappa {min_kappa:.2e}; curve facts {facts_ok}; curve error {curve_err:.1e}"
        ),
    )
}

/// Masked representation: empirical kappa against the lower bound, and
/// monotonicity in epsilon.
fn criterion8() -> Outcome {
    let spec = SemSpec::default_with_seed(0);
    let env = spec.environments[0].clone();
    let mu_c2: f64 = spec.mu_c.iter().map(|m| m * m).sum();
    let mu_e = env.mu_e.iter().map(|m| m * m).sum::<f64>().sqrt();
    let a = mu_c2 + spec.d_c as f64 * spec.sigma_c.powi(2);
    let hand_c =
        a / ((spec.d_c + spec.d_e) as f64 * (a + (mu_e + (spec.d_e as f64 * env.sigma_e.powi(2)).sqrt()).powi(2)));
    let mut ok = rel(rosenfeld_constant(&spec, 0).unwrap(), hand_c) <= 1e-12;
    let mut rows = Vec::new();
    let mut prev: Option<(f64, f64)> = None;
    for eps in [2.0, 4.0, 8.0] {
        let p = rosenfeld_kappa_bound(&spec, 0, eps, PFormula::Unscaled, 100_000, 0).unwrap();
        let m = (eps - 1.0_f64).min((eps - 1.0) * (eps - 1.0));
        let hand_p = (-m / 8.0).exp();
        ok &= rel(p_mask(PFormula::Unscaled, spec.d_e, eps), hand_p) <= 1e-12;
        ok &= rel(p.kappa_lower_bound, hand_c * (1.0 / hand_p - 1.0)) <= 1e-12;
        let (k, se) = (p.kappa_empirical, p.kappa_std_error);
        ok &= k.is_infinite() || k >= p.kappa_lower_bound - 3.0 * se;
        if let Some((pk, pse)) = prev {
            ok &= k.is_infinite() || (pk.is_finite() && k >= pk - 2.0 * (pse + se));
        }
        prev = Some((k, se));
        rows.push(format!(
            "eps {eps}: kappa {k:.3e} (se {se:.1e}) bound {:.3e} mask {:.4}",
            p.kappa_lower_bound, p.empirical_mask_prob
        ));
    }
    outcome(ok, rows.join("; "))
}

/// IRMv2 on the default spec: spurious leakage over ten seeds, plus the
/// non-degeneracy checker on the default and duplicated specs.
fn criterion9() -> Outcome {
    let cfg = ExperimentConfig::for_suite(Suite::SemTheory);
    let out = run_suite(&cfg).unwrap();
    let leak: Vec<f64> = out
        .records
        .iter()
        .filter(|r| r.metric == Metric::Leakage)
        .map(|r| r.value)
        .collect();
    let below = leak.iter().filter(|&&v| v < 0.05).count();
    let good = check_nondegeneracy(&SemSpec::default_with_seed(cfg.spec_seed))
        .unwrap()
        .overall_ok;
    let dup = check_nondegeneracy(&duplicated_spec(cfg.spec_seed)).unwrap().overall_ok;
    let max = leak.iter().cloned().fold(0.0, f64::max);
    outcome(
        below >= 8 && leak.len() == 10 && good && !dup,
        format!(
            "{below}/{} seeds below 0.05 (max {max:.3}); non-degenerate default {good}, duplicated {dup}",
            leak.len()
        ),
    )
}

fn cell_means(records: &[RunRecord]) -> BTreeMap<(String, Variant, String, String), (f64, usize)> {
    let mut sums: BTreeMap<_, (f64, usize)> = BTreeMap::new();
    for r in records
        .iter()
        .filter(|r| matches!(r.metric, Metric::Mse | Metric::ClassError))
    {
        let e = sums
            .entry((r.example.clone(), r.variant, r.env.clone(), r.method.clone()))
            .or_default();
        e.0 += r.value;
        e.1 += 1;
    }
    sums.into_iter().map(|(k, (s, n))| (k, (s / n as f64, n))).collect()
}

/// Unit-test table orderings under the default suite protocol.
fn criterion10() -> Outcome {
    let cfg = ExperimentConfig::for_suite(Suite::UnitTests);
    let out = run_suite(&cfg).unwrap();
    let means = cell_means(&out.records);
    let get = |ex: &str, v: Variant, env: &str, m: &str| means.get(&(ex.into(), v, env.into(), m.into())).map(|x| x.0);
    let p = Variant::Plain;
    let (oracle, erm, irmv2) = (
        get("Example1", p, "E0", "Oracle").unwrap_or(f64::NAN),
        get("Example1", p, "E0", "ERM").unwrap_or(f64::NAN),
        get("Example1", p, "E0", "IRMv2").unwrap_or(f64::NAN),
    );
    let a = oracle < 0.2 && erm > 3.0 * oracle && irmv2 < 2.0 * oracle;

    let mut b_base = true;
    for m in ["ERM", "IGA", "ANDMask"] {
        for env in ["E1", "E2"] {
            let v = get("Example2", p, env, m).unwrap_or(f64::NAN);
            b_base &= (0.45..=0.55).contains(&v);
        }
    }
    let v2 = [get("Example2", p, "E1", "IRMv2"), get("Example2", p, "E2", "IRMv2")].map(|v| v.unwrap_or(f64::NAN));
    let b = b_base && v2.iter().any(|&v| v < 0.45);

    let mut worst = (0.0_f64, String::new());
    let mut c = true;
    for ((ex, v, env, m), (plain, _)) in means.iter().filter(|(k, _)| k.1 == Variant::Plain) {
        let Some(&(scr, _)) = means.get(&(ex.clone(), Variant::Scrambled, env.clone(), m.clone())) else {
            c = false;
            continue;
        };
        let _ = v;
        let d = (scr - plain).abs();
        c &= d < 0.1;
        if d > worst.0 {
            worst = (d, format!("{m} {ex} {env}"));
        }
    }
    let failed = out.records.iter().filter(|r| r.is_failure()).count();
    outcome(
        a && b && c,
        format!(
            "(a) {} Oracle {oracle:.3} ERM {erm:.3} IRMv2 {irmv2:.3}; (b) {} baselines in band {b_base}, IRMv2 E1 {:.3} E2 {:.3}; (c) {} largest change {:.3} ({}); {failed} failed run records",
            if a { "ok" } else { "FAIL" },
            if b { "ok" } else { "FAIL" },
            v2[0],
            v2[1],
            if c { "ok" } else { "FAIL" },
            worst.0,
            worst.1,
        ),
    )
}

/// Two suite runs with one config give byte-identical CSV.
fn criterion11() -> Outcome {
    let cfg = ExperimentConfig::for_suite(Suite::UnitTests);
    let bytes = |cfg: &ExperimentConfig| {
        let mut buf = Vec::new();
        write_records_csv(&mut buf, &run_suite(cfg).unwrap().records).unwrap();
        buf
    };
    let (a, b) = (bytes(&cfg), bytes(&cfg));
    outcome(
        a == b && !a.is_empty(),
        format!("{} bytes, identical: {}", a.len(), a == b),
    )
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("risk decomposition identity", Some(1.0), criterion1),
        ("pooled classifier", Some(10.0), criterion2),
        ("eigenvalue sandwich", Some(5.0), criterion3),
        ("IRMv1 penalty identity", None, criterion4),
        ("gradient oracle", None, criterion5),
        ("closed-form one-hot classifier", Some(30.0), criterion6),
        ("two-feature Gram and penalty curves", None, criterion7),
        ("masked-representation kappa bound", Some(60.0), criterion8),
        ("invariant recovery on the SEM", Some(300.0), criterion9),
        ("unit-test table orderings", Some(1800.0), criterion10),
        ("suite determinism", None, criterion11),
    ];
    let mut failed = 0;
    for (i, (name, limit, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let o = f();
        let secs = start.elapsed().as_secs_f64();
        let in_time = limit.is_none_or(|l| secs < l);
        let passed = o.passed && in_time;
        if !passed {
            failed += 1;
        }
        let timing = match limit {
            Some(l) => format!("{secs:.2}s of {l}s"),
            None => format!("{secs:.2}s"),
        };
        println!(
            "{} criterion {:>2} {name}: {} [{timing}]",
            if passed { "PASS" } else { "FAIL" },
            i + 1,
            o.detail
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 && std::env::var("IRM_ACCEPTANCE_STRICT").as_deref() == Ok("1") {
        std::process::exit(1);
    }
}
