//! Analytic gradients of every trainer objective against central differences.

use rand::Rng as _;
use rand_distr::StandardNormal;

use irm_core::invariance::EnvironmentMoments;
use irm_core::linmath::{Matrix, SymMatrix};
use irm_core::rng::{rng_from_seed, Rng};
use irm_core::trainers::{frozen_loss, irmv2_loss_and_grad, method_objective, Method};

fn gaussian(rng: &mut Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

fn moments(rng: &mut Rng, d_x: usize, m: usize) -> EnvironmentMoments {
    let x = gaussian(rng, m, d_x);
    let y = &x * gaussian(rng, d_x, 1) + gaussian(rng, m, 1);
    let n = m as f64;
    EnvironmentMoments::new(
        SymMatrix::symmetrize(x.transpose() * &x / n).unwrap(),
        x.transpose() * &y / n,
        SymMatrix::symmetrize(y.transpose() * &y / n).unwrap(),
        m,
    )
    .unwrap()
}

fn central_differences(method: Method, theta: &Matrix, ms: &[EnvironmentMoments], lambda: f64, lambda0: f64) -> Matrix {
    let obj = method_objective(method, theta, ms, lambda, lambda0).unwrap();
    Matrix::from_fn(theta.nrows(), theta.ncols(), |i, j| {
        let h = 1e-5 * (1.0 + theta[(i, j)].abs());
        let (mut up, mut down) = (theta.clone(), theta.clone());
        up[(i, j)] += h;
        down[(i, j)] -= h;
        let f = |t: &Matrix| frozen_loss(method, t, ms, lambda, &obj).unwrap();
        (f(&up) - f(&down)) / (2.0 * h)
    })
}

#[test]
fn every_method_matches_finite_differences() {
    let mut rng = rng_from_seed(11);
    for method in Method::ALL {
        for case in 0..50 {
            let d_x = rng.random_range(2..=8);
            let d_phi = match method {
                _ if method.baseline().is_some() => 1,
                Method::Irmv2 => rng.random_range(1..=4.min(d_x - 1)),
                _ => rng.random_range(1..=4.min(d_x)),
            };
            let k = rng.random_range(2..=4);
            let ms: Vec<_> = (0..k).map(|_| moments(&mut rng, d_x, 30)).collect();
            let theta = gaussian(&mut rng, d_phi, d_x) * 0.5;
            let (lambda, lambda0) = (0.1 + 5.0 * rng.random::<f64>(), 0.1 + rng.random::<f64>());
            let analytic = method_objective(method, &theta, &ms, lambda, lambda0).unwrap().grad;
            let fd = central_differences(method, &theta, &ms, lambda, lambda0);
            let err = (&analytic - &fd).norm() / analytic.norm().max(fd.norm()).max(1e-12);
            assert!(err < 1e-5, "{} case {case}: relative error {err:e}", method.name());
        }
    }
}

#[test]
fn square_irmv2_representation_is_flat() {
    let mut rng = rng_from_seed(12);
    for d in 2..=5 {
        let ms: Vec<_> = (0..3).map(|_| moments(&mut rng, d, 40)).collect();
        let theta = gaussian(&mut rng, d, d);
        let obj = irmv2_loss_and_grad(&theta, &ms, 3.0).unwrap();
        assert!(obj.grad.norm() < 1e-9 * (1.0 + obj.loss), "{:e}", obj.grad.norm());
    }
}

#[test]
fn and_mask_direction_keeps_agreeing_coordinates_only() {
    let mut rng = rng_from_seed(13);
    let ms: Vec<_> = (0..3).map(|_| moments(&mut rng, 6, 40)).collect();
    let theta = gaussian(&mut rng, 1, 6);
    let obj = method_objective(Method::AndMask, &theta, &ms, 0.0, 0.0).unwrap();
    let erm = method_objective(Method::Erm, &theta, &ms, 0.0, 0.0).unwrap();
    assert_eq!(obj.grad, erm.grad);
    for j in 0..6 {
        let d = obj.direction[(0, j)];
        assert!(d == 0.0 || d == erm.grad[(0, j)]);
    }
}
