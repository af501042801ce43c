//! Noise estimator benchmark: injects known Gaussian noise into a corpus and
//! reports the estimator's bias, spread, and mean squared error per level
//! (`mse = b² + s²`).

use thiserror::Error;

use super::{add_gaussian_noise, mix64};
use crate::imaging::Image;
use crate::metric::{noise_sigma, MetricConfig, NoiseEstimate};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("trials must be >= 2, got {0}")]
    TooFewTrials(usize),
    #[error("at least one image is required")]
    NoImages,
}

/// One row of the noise evaluation report.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseEvalRow {
    /// Injected (true) noise level.
    pub sigma: f64,
    /// Sample standard deviation of the estimates.
    pub s: f64,
    /// Bias: mean estimate minus the true level.
    pub b: f64,
    /// `b² + s²`.
    pub mse: f64,
    /// Number of unestimable trials excluded from the statistics.
    pub excluded: usize,
}

/// Runs the estimator over `images × trials` noisy renditions per sigma.
/// Noise is clipped to the 8-bit range, as a real capture would be.
/// Deterministic under `seed`.
pub fn noise_eval(
    images: &[Image],
    sigmas: &[f64],
    trials: usize,
    seed: u64,
    cfg: &MetricConfig,
) -> Result<Vec<NoiseEvalRow>, EvalError> {
    if images.is_empty() {
        return Err(EvalError::NoImages);
    }
    if trials < 2 {
        return Err(EvalError::TooFewTrials(trials));
    }
    let mut rows = Vec::with_capacity(sigmas.len());
    for (si, &sigma) in sigmas.iter().enumerate() {
        let mut estimates = Vec::with_capacity(images.len() * trials);
        let mut excluded = 0usize;
        for (ii, image) in images.iter().enumerate() {
            for trial in 0..trials {
                let noise_seed = mix64(&[seed, si as u64, ii as u64, trial as u64]);
                let noisy = add_gaussian_noise(image, sigma, noise_seed);
                match noise_sigma(&noisy, cfg) {
                    NoiseEstimate::Estimated(v) => estimates.push(v),
                    NoiseEstimate::Unestimable => excluded += 1,
                }
            }
        }
        let (b, s) = match estimates.len() {
            0 => (f64::NAN, f64::NAN),
            1 => (estimates[0] - sigma, 0.0),
            n => {
                let mean = estimates.iter().sum::<f64>() / n as f64;
                let var = estimates
                    .iter()
                    .map(|e| (e - mean) * (e - mean))
                    .sum::<f64>()
                    / (n - 1) as f64;
                (mean - sigma, var.sqrt())
            }
        };
        rows.push(NoiseEvalRow {
            sigma,
            s,
            b,
            mse: b * b + s * s,
            excluded,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::Scene;
    use crate::camera::{synthetic_capture, SyntheticCameraModel};
    use crate::controller::ExposureParams;

    fn smooth_corpus() -> Vec<Image> {
        // Noiseless renders of block scenes: flat regions, no texture noise.
        [1u64, 2, 3]
            .iter()
            .map(|&seed| {
                let scene = Scene::mosaic(96, 96, 16, 0.1, 0.7, seed);
                let model = SyntheticCameraModel {
                    full_well: 2.0,
                    ..Default::default()
                };
                synthetic_capture(&scene, &model, ExposureParams::new(2.0, 0.0))
            })
            .collect()
    }

    #[test]
    fn zero_sigma_on_smooth_images_is_near_zero() {
        let rows = noise_eval(&smooth_corpus(), &[0.0], 3, 1, &MetricConfig::default()).unwrap();
        assert!(rows[0].b.abs() < 0.05, "bias {}", rows[0].b);
        assert!(rows[0].mse < 0.01, "mse {}", rows[0].mse);
    }

    #[test]
    fn flat_field_sigma_ten_is_tight() {
        let flat = vec![Image::filled(512, 512, 1, 128).unwrap()];
        let rows = noise_eval(&flat, &[10.0], 20, 7, &MetricConfig::default()).unwrap();
        assert!(rows[0].b.abs() < 1.0, "bias {}", rows[0].b);
        assert!(rows[0].s < 1.0, "spread {}", rows[0].s);
        assert_eq!(rows[0].excluded, 0);
    }

    #[test]
    fn mse_identity_holds_per_row() {
        let rows = noise_eval(
            &smooth_corpus(),
            &[1.0, 5.0, 10.0],
            4,
            3,
            &MetricConfig::default(),
        )
        .unwrap();
        for row in &rows {
            assert!((row.mse - (row.b * row.b + row.s * row.s)).abs() < 1e-12);
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let corpus = smooth_corpus();
        let a = noise_eval(&corpus, &[2.0, 6.0], 3, 42, &MetricConfig::default()).unwrap();
        let b = noise_eval(&corpus, &[2.0, 6.0], 3, 42, &MetricConfig::default()).unwrap();
        assert_eq!(a, b);
        let c = noise_eval(&corpus, &[2.0, 6.0], 3, 43, &MetricConfig::default()).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn trial_and_image_preconditions() {
        let corpus = smooth_corpus();
        assert_eq!(
            noise_eval(&corpus, &[1.0], 1, 0, &MetricConfig::default()).unwrap_err(),
            EvalError::TooFewTrials(1)
        );
        assert!(noise_eval(&corpus, &[1.0], 2, 0, &MetricConfig::default()).is_ok());
        assert_eq!(
            noise_eval(&[], &[1.0], 2, 0, &MetricConfig::default()).unwrap_err(),
            EvalError::NoImages
        );
    }

    #[test]
    fn saturated_trials_are_excluded_and_counted() {
        let saturated = vec![Image::filled(64, 64, 1, 255).unwrap()];
        let rows = noise_eval(&saturated, &[0.0], 2, 5, &MetricConfig::default()).unwrap();
        assert_eq!(rows[0].excluded, 2);
        assert!(rows[0].b.is_nan());
    }
}
