use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};

use super::data::EnvironmentData;
use crate::error::{Error, Result};
use crate::linmath::Matrix;
use crate::rng::{derive_seed, hash_str, rng_from_seed};

/// Seed-deterministic rotation in SO(d): Q factor of a Gaussian matrix with
/// the sign of each column fixed so that R has a positive diagonal, and the
/// first column flipped if the determinant is negative.
pub fn rotation_matrix(d: usize, seed: u64) -> Matrix {
    let mut rng = rng_from_seed(derive_seed(&[seed, d as u64, hash_str("rotation")]));
    let g = Matrix::from_fn(d, d, |_, _| StandardNormal.sample(&mut rng));
    let qr = g.qr();
    let (mut q, r) = (qr.q(), qr.r());
    for j in 0..d {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    if d > 0 && q.determinant() < 0.0 {
        q.column_mut(0).neg_mut();
    }
    q
}

/// Rotates every row: `x <- x R^T`. The spurious index set no longer names
/// coordinates after this and is cleared.
pub fn scramble(data: &EnvironmentData, seed: u64) -> EnvironmentData {
    let r = rotation_matrix(data.d_x(), seed);
    EnvironmentData {
        x: &data.x * r.transpose(),
        y: data.y.clone(),
        task: data.task,
        spurious: None,
        latents: data.latents.clone(),
    }
}

/// Permutes the rows of the spurious block with a permutation drawn
/// independently of `y`.
pub fn shuffle_spurious(data: &EnvironmentData, seed: u64) -> Result<EnvironmentData> {
    let cols = data.spurious.as_ref().ok_or(Error::Ordering)?;
    let mut perm: Vec<usize> = (0..data.n()).collect();
    perm.shuffle(&mut rng_from_seed(derive_seed(&[seed, hash_str("shuffle")])));
    let mut out = data.clone();
    for &c in cols {
        for (i, &p) in perm.iter().enumerate() {
            out.x[(i, c)] = data.x[(p, c)];
        }
    }
    out.latents = None;
    Ok(out)
}
