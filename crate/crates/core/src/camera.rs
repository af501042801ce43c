//! Frame sources for closed-loop exposure control and testing.
//!
//! Three cameras are provided: a synthetic radiometric camera rendering a
//! [`Scene`] under a linear sensor model with gain-scaled Gaussian read
//! noise, a replay camera serving pre-captured frames from a
//! [`SweepManifest`], and a surface camera sampling a cubic-interpolated
//! metric surface (no frames involved, scores only).

mod eval;
mod manifest;
mod surface;

pub use eval::{noise_eval, EvalError, NoiseEvalRow};
pub use manifest::{ReplayCamera, SweepManifest};
pub use surface::{
    build_surface, evaluate_manifest, MetricSurface, SurfaceCamera, SurfaceTerm, SweepEvaluation,
};

use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::controller::{ExposureParams, Objective, Sample};
use crate::imaging::{Image, ImageError, PnmError};
use crate::metric::{self, MetricConfig, MetricError};

/// Errors from frame sources and the manifest/surface machinery.
#[derive(Debug, Error)]
pub enum CameraError {
    #[error("capture failed: {reason}")]
    Capture { reason: String },
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot decode {path}: {source}")]
    Pnm { path: PathBuf, source: PnmError },
    #[error("manifest {path}, line {line}: {reason}")]
    Manifest {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("manifest grid is incomplete, missing {}", format_missing(missing))]
    IncompleteGrid { missing: Vec<(f64, f64)> },
    #[error("manifest {axis} values are not evenly spaced: {detail}")]
    NonUniformGrid { axis: &'static str, detail: String },
    #[error("duplicate manifest entry at ({exposure_ms} ms, {gain_db} dB)")]
    DuplicateEntry { exposure_ms: f64, gain_db: f64 },
    #[error("params ({exposure_ms} ms, {gain_db} dB) are outside the surface domain")]
    OutOfDomain { exposure_ms: f64, gain_db: f64 },
    #[error("invalid image: {0}")]
    Image(#[from] ImageError),
    #[error("at grid cell ({exposure_ms} ms, {gain_db} dB): {source}")]
    AtCell {
        exposure_ms: f64,
        gain_db: f64,
        source: Box<CameraError>,
    },
    #[error("metric failed at ({exposure_ms} ms, {gain_db} dB): {source}")]
    Metric {
        exposure_ms: f64,
        gain_db: f64,
        source: MetricError,
    },
}

impl CameraError {
    fn at_cell(exposure_ms: f64, gain_db: f64) -> impl FnOnce(CameraError) -> CameraError {
        move |source| CameraError::AtCell {
            exposure_ms,
            gain_db,
            source: Box::new(source),
        }
    }
}

fn format_missing(missing: &[(f64, f64)]) -> String {
    missing
        .iter()
        .map(|(e, g)| format!("({e} ms, {g} dB)"))
        .collect::<Vec<_>>()
        .join(", ")
}

/// Anything that yields a frame for requested exposure parameters.
pub trait FrameSource {
    fn capture(&mut self, params: ExposureParams) -> Result<Image, CameraError>;

    /// Minimal distinguishable parameter step for quantized sources.
    fn quantization(&self) -> Option<[f64; 2]> {
        None
    }
}

/// Linear amplitude factor for a gain in decibels.
pub fn linear_gain(gain_db: f64) -> f64 {
    10f64.powf(gain_db / 20.0)
}

/// Per-pixel relative radiance of a static scene, in linear units.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    width: usize,
    height: usize,
    radiance: Vec<f64>,
}

impl Scene {
    pub fn new(width: usize, height: usize, radiance: Vec<f64>) -> Result<Self, ImageError> {
        if width < 3 || height < 3 {
            return Err(ImageError::TooSmall { width, height });
        }
        if radiance.len() != width * height {
            return Err(ImageError::DataLength {
                expected: width * height,
                actual: radiance.len(),
            });
        }
        assert!(
            radiance.iter().all(|r| r.is_finite() && *r >= 0.0),
            "radiance values must be finite and nonnegative"
        );
        Ok(Self {
            width,
            height,
            radiance,
        })
    }

    /// Treats an 8-bit image as a radiance map scaled to `[0, 1]`.
    pub fn from_image(img: &Image) -> Scene {
        let gray = crate::imaging::to_grayscale(img);
        Scene {
            width: gray.width(),
            height: gray.height(),
            radiance: gray.data().iter().map(|&v| v as f64 / 255.0).collect(),
        }
    }

    /// A deterministic mosaic of flat blocks whose radiance levels are
    /// log-uniformly distributed in `[lo, hi]`. Flat interiors give the noise
    /// estimator homogeneous regions; block borders carry edge information.
    pub fn mosaic(width: usize, height: usize, block: usize, lo: f64, hi: f64, seed: u64) -> Scene {
        assert!(block >= 1 && lo > 0.0 && hi >= lo);
        let blocks_x = width.div_ceil(block);
        let blocks_y = height.div_ceil(block);
        let mut state = seed;
        let mut next_unit = move || {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            (state >> 33) as f64 / (1u64 << 31) as f64
        };
        let ratio = hi / lo;
        let levels: Vec<f64> = (0..blocks_x * blocks_y)
            .map(|_| lo * ratio.powf(next_unit()))
            .collect();
        let radiance = (0..width * height)
            .map(|i| {
                let (x, y) = (i % width, i / width);
                levels[(y / block) * blocks_x + x / block]
            })
            .collect();
        Scene {
            width,
            height,
            radiance,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn radiance(&self) -> &[f64] {
        &self.radiance
    }
}

/// Linear sensor model: `full_well` is the radiance·ms product mapping to
/// full scale, and the additive Gaussian read noise grows with gain as
/// `read_noise_sigma · A^noise_gain_exponent`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticCameraModel {
    pub full_well: f64,
    pub read_noise_sigma: f64,
    pub noise_gain_exponent: f64,
    pub rng_seed: u64,
}

impl Default for SyntheticCameraModel {
    fn default() -> Self {
        Self {
            full_well: 1.0,
            read_noise_sigma: 0.0,
            noise_gain_exponent: 1.0,
            rng_seed: 0,
        }
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// 32-byte RNG seed mixed from arbitrary integer parts.
fn mix_seed(parts: &[u64]) -> [u8; 32] {
    let mut state = 0x243f6a8885a308d3u64;
    for &p in parts {
        state ^= p;
        splitmix64(&mut state);
    }
    let mut seed = [0u8; 32];
    for chunk in seed.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    seed
}

/// Renders one frame:
/// `pixel = clamp(round(255 · radiance · exposure_ms · A / full_well + n), 0, 255)`
/// with `A = 10^(gain_db/20)` and `n ~ N(0, (read_noise_sigma · A^k)²)`.
///
/// The noise is seeded by `(rng_seed, params)`, so identical inputs give
/// bit-identical frames.
pub fn synthetic_capture(
    scene: &Scene,
    model: &SyntheticCameraModel,
    params: ExposureParams,
) -> Image {
    assert!(model.full_well > 0.0, "full_well must be positive");
    assert!(
        params.exposure_ms > 0.0 && params.exposure_ms.is_finite() && params.gain_db.is_finite(),
        "exposure must be positive and parameters finite"
    );
    let amp = linear_gain(params.gain_db);
    let scale = 255.0 * params.exposure_ms * amp / model.full_well;
    let noise_sigma = model.read_noise_sigma * amp.powf(model.noise_gain_exponent);
    let mut data = Vec::with_capacity(scene.radiance.len());
    if noise_sigma > 0.0 {
        let mut rng = ChaCha8Rng::from_seed(mix_seed(&[
            model.rng_seed,
            params.exposure_ms.to_bits(),
            params.gain_db.to_bits(),
        ]));
        let normal = Normal::new(0.0, noise_sigma).expect("valid sigma");
        for &r in &scene.radiance {
            let v: f64 = r * scale + normal.sample(&mut rng);
            data.push(v.round().clamp(0.0, 255.0) as u8);
        }
    } else {
        for &r in &scene.radiance {
            data.push((r * scale).round().clamp(0.0, 255.0) as u8);
        }
    }
    Image::new(scene.width, scene.height, 1, data).expect("scene dimensions are valid")
}

/// A [`FrameSource`] over a [`Scene`] and a [`SyntheticCameraModel`].
#[derive(Debug, Clone)]
pub struct SyntheticCamera {
    pub scene: Scene,
    pub model: SyntheticCameraModel,
}

impl SyntheticCamera {
    pub fn new(scene: Scene, model: SyntheticCameraModel) -> Self {
        Self { scene, model }
    }
}

impl FrameSource for SyntheticCamera {
    fn capture(&mut self, params: ExposureParams) -> Result<Image, CameraError> {
        Ok(synthetic_capture(&self.scene, &self.model, params))
    }
}

/// Adds zero-mean Gaussian noise to an image, rounding and clipping back to
/// 8 bits. Deterministic under `seed`.
pub fn add_gaussian_noise(img: &Image, sigma: f64, seed: u64) -> Image {
    if sigma <= 0.0 {
        return img.clone();
    }
    let mut rng = ChaCha8Rng::from_seed(mix_seed(&[seed, sigma.to_bits()]));
    let normal = Normal::new(0.0, sigma).expect("valid sigma");
    let data = img
        .data()
        .iter()
        .map(|&v| {
            let noisy: f64 = v as f64 + normal.sample(&mut rng);
            noisy.round().clamp(0.0, 255.0) as u8
        })
        .collect();
    Image::new(img.width(), img.height(), img.channels(), data).expect("dimensions unchanged")
}

pub(crate) fn mix64(parts: &[u64]) -> u64 {
    let mut state = 0x9e3779b97f4a7c15u64;
    for &p in parts {
        state ^= p;
        splitmix64(&mut state);
    }
    splitmix64(&mut state)
}

/// Pairs a frame source with the metric, forming the controller's objective:
/// each sample captures one frame and scores it.
pub struct MeteredCamera<C: FrameSource> {
    camera: C,
    cfg: MetricConfig,
}

impl<C: FrameSource> MeteredCamera<C> {
    pub fn new(camera: C, cfg: MetricConfig) -> Self {
        Self { camera, cfg }
    }

    pub fn into_inner(self) -> C {
        self.camera
    }
}

impl<C: FrameSource> Objective for MeteredCamera<C> {
    fn sample(&mut self, params: ExposureParams) -> Result<Sample, CameraError> {
        let frame = self.camera.capture(params)?;
        let breakdown =
            metric::evaluate(&frame, &self.cfg).map_err(|source| CameraError::Metric {
                exposure_ms: params.exposure_ms,
                gain_db: params.gain_db,
                source,
            })?;
        Ok(Sample {
            score: breakdown.fused,
            mean_intensity: Some(frame.mean_intensity()),
        })
    }

    fn quantization(&self) -> Option<[f64; 2]> {
        self.camera.quantization()
    }
}
