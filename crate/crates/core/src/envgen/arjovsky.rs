//! Two-feature regression where the second feature is an effect of the
//! target: `Y = X1 + Z1`, `X2 = Y + Z2`.

use rand_distr::{Distribution, Normal, StandardNormal};

use super::data::{EnvironmentData, Task};
use crate::error::{Error, Result};
use crate::invariance::LinearRepresentation;
use crate::linmath::Matrix;
use crate::rng::{derive_seed, hash_str, rng_from_seed};

/// The scaled representation `phi_c(x) = [x1; c x2]`.
pub fn arjovsky_representation(c: f64) -> LinearRepresentation {
    LinearRepresentation::new(Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, c])).expect("finite 2x2 matrix")
}

pub fn gen_arjovsky(c: f64, sigma: f64, n: usize, seed: u64) -> Result<(EnvironmentData, LinearRepresentation)> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::Spec(format!("sigma must be positive, got {sigma}")));
    }
    if !c.is_finite() {
        return Err(Error::Spec(format!("c must be finite, got {c}")));
    }
    if n == 0 {
        return Err(Error::EmptyEnvironment);
    }
    let mut rng = rng_from_seed(derive_seed(&[seed, hash_str("arjovsky")]));
    let noise = Normal::new(0.0, sigma).map_err(|e| Error::Spec(e.to_string()))?;
    let mut x = Matrix::zeros(n, 2);
    let mut y = Matrix::zeros(n, 1);
    for i in 0..n {
        let x1 = noise.sample(&mut rng);
        let target = x1 + noise.sample(&mut rng);
        let z2: f64 = StandardNormal.sample(&mut rng);
        x[(i, 0)] = x1;
        x[(i, 1)] = target + z2;
        y[(i, 0)] = target;
    }
    Ok((
        EnvironmentData::new(x, y, Task::Regression)?,
        arjovsky_representation(c),
    ))
}
