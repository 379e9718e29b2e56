//! Representation that keeps the environment latents except near the
//! environment means, where they are zeroed.

use super::data::{EnvironmentData, Task};
use super::sem::SemSpec;
use crate::error::{Error, Result};
use crate::linmath::Matrix;

/// Ball radius around `+-mu_e` for environment `e`: `sqrt(eps * sigma_e^2 * d_e)`.
pub fn mask_radius(spec: &SemSpec, env_index: usize, epsilon: f64) -> Result<f64> {
    let env = spec
        .environments
        .get(env_index)
        .ok_or_else(|| Error::Spec(format!("environment {env_index} out of range")))?;
    Ok((epsilon * env.sigma_e * env.sigma_e * spec.d_e as f64).sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaskedData {
    /// Rows `[z_c; z_e * 1{z_e outside the mask set}]`.
    pub data: EnvironmentData,
    /// Fraction of rows whose environment latents were zeroed.
    pub mask_frequency: f64,
}

/// Zeroes each row of `ze` that lies in a closed ball `B_r(c)` or `B_r(-c)`
/// for some `(c, r)` in `balls`. Returns the number of masked rows.
pub fn mask_rows(ze: &mut Matrix, balls: &[(Vec<f64>, f64)]) -> usize {
    let mut masked = 0;
    for mut row in ze.row_iter_mut() {
        let inside = balls.iter().any(|(c, r)| {
            let (mut plus, mut minus) = (0.0, 0.0);
            for (v, m) in row.iter().zip(c) {
                plus += (v - m) * (v - m);
                minus += (v + m) * (v + m);
            }
            plus.min(minus) <= r * r
        });
        if inside {
            row.fill(0.0);
            masked += 1;
        }
    }
    masked
}

/// The mask set is the union over all environments of the balls around
/// `+-mu_e`, each with its own radius.
pub fn apply_masked_representation(data: &EnvironmentData, spec: &SemSpec, epsilon: f64) -> Result<MaskedData> {
    if !(epsilon >= 1.0) {
        return Err(Error::Precondition(format!("epsilon must be >= 1, got {epsilon}")));
    }
    let latents = data
        .latents
        .as_ref()
        .ok_or_else(|| Error::Spec("masked representation needs retained latents".into()))?;
    if latents.ze.ncols() != spec.d_e || latents.zc.ncols() != spec.d_c {
        return Err(Error::Shape("latent widths disagree with the spec".into()));
    }
    let balls = (0..spec.environments.len())
        .map(|e| Ok((spec.environments[e].mu_e.clone(), mask_radius(spec, e, epsilon)?)))
        .collect::<Result<Vec<_>>>()?;
    let mut ze = latents.ze.clone();
    let masked = mask_rows(&mut ze, &balls);
    let n = data.n();
    let mut x = Matrix::zeros(n, spec.d_c + spec.d_e);
    x.columns_mut(0, spec.d_c).copy_from(&latents.zc);
    x.columns_mut(spec.d_c, spec.d_e).copy_from(&ze);
    let out = EnvironmentData {
        x,
        y: data.y.clone(),
        task: data.task,
        spurious: Some((spec.d_c..spec.d_c + spec.d_e).collect()),
        latents: None,
    };
    debug_assert!(matches!(out.task, Task::BinaryPm1 | Task::BinaryOneHot));
    Ok(MaskedData {
        data: out,
        mask_frequency: masked as f64 / n as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envgen::sem::gen_sem;

    #[test]
    fn huge_radius_masks_everything() {
        let spec = SemSpec::default_with_seed(0);
        let data = gen_sem(&spec, 0, 2_000, 1).unwrap();
        let out = apply_masked_representation(&data, &spec, 1e6).unwrap();
        assert_eq!(out.mask_frequency, 1.0);
        assert!(out.data.x.columns(3, 3).iter().all(|&v| v == 0.0));
        assert_eq!(out.data.x.columns(0, 3), data.latents.unwrap().zc);
    }

    #[test]
    fn zero_radius_passes_through() {
        let spec = SemSpec::default_with_seed(0);
        let data = gen_sem(&spec, 1, 2_000, 2).unwrap();
        let mut ze = data.latents.as_ref().unwrap().ze.clone();
        let balls: Vec<_> = spec.environments.iter().map(|e| (e.mu_e.clone(), 0.0)).collect();
        assert_eq!(mask_rows(&mut ze, &balls), 0);
        assert_eq!(ze, data.latents.unwrap().ze);
    }

    #[test]
    fn moderate_epsilon_masks_a_fraction() {
        let spec = SemSpec::default_with_seed(0);
        let data = gen_sem(&spec, 2, 100_000, 3).unwrap();
        let out = apply_masked_representation(&data, &spec, 2.0).unwrap();
        assert!(
            out.mask_frequency > 0.0 && out.mask_frequency < 1.0,
            "{}",
            out.mask_frequency
        );
    }

    #[test]
    fn missing_latents_rejected() {
        let spec = SemSpec::default_with_seed(0);
        let mut data = gen_sem(&spec, 0, 10, 0).unwrap();
        data.latents = None;
        assert!(matches!(
            apply_masked_representation(&data, &spec, 2.0),
            Err(Error::Spec(_))
        ));
        let data = gen_sem(&spec, 0, 10, 0).unwrap();
        assert!(matches!(
            apply_masked_representation(&data, &spec, 0.5),
            Err(Error::Precondition(_))
        ));
    }
}
