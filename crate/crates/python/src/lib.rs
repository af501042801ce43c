//! Python bindings: the image container, the fused quality metric, the
//! synthetic camera, and a closed-loop control run.
//!
//! Build with `cargo build --release -p aec-py`; the resulting
//! `libaec_py.so` imports as the `aec_py` module once renamed/copied to
//! `aec_py.so` (see `python/smoke_test.py`).

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use aec_core::camera as core_camera;
use aec_core::camera::{MeteredCamera, SyntheticCamera, SyntheticCameraModel};
use aec_core::controller as core_controller;
use aec_core::controller::{ControllerOptions, ExposureParams, ParamBounds};
use aec_core::imaging as core_imaging;
use aec_core::metric as core_metric;
use aec_core::metric::NoiseEstimate;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// An 8-bit image, 1 or 3 channels, row-major and channel-interleaved.
#[pyclass(name = "Image", skip_from_py_object)]
#[derive(Clone)]
struct PyImage {
    inner: core_imaging::Image,
}

#[pymethods]
impl PyImage {
    #[new]
    fn new(width: usize, height: usize, channels: usize, data: Vec<u8>) -> PyResult<Self> {
        Ok(Self {
            inner: core_imaging::Image::new(width, height, channels, data).map_err(value_err)?,
        })
    }

    /// A constant-valued image.
    #[staticmethod]
    fn constant(width: usize, height: usize, channels: usize, value: u8) -> PyResult<Self> {
        Ok(Self {
            inner: core_imaging::Image::filled(width, height, channels, value)
                .map_err(value_err)?,
        })
    }

    #[getter]
    fn width(&self) -> usize {
        self.inner.width()
    }

    #[getter]
    fn height(&self) -> usize {
        self.inner.height()
    }

    #[getter]
    fn channels(&self) -> usize {
        self.inner.channels()
    }

    fn data(&self) -> Vec<u8> {
        self.inner.data().to_vec()
    }

    fn mean_intensity(&self) -> f64 {
        self.inner.mean_intensity()
    }

    fn to_grayscale(&self) -> Self {
        Self {
            inner: core_imaging::to_grayscale(&self.inner),
        }
    }

    fn __repr__(&self) -> String {
        format!(
            "Image({}x{}, {} channel{})",
            self.inner.width(),
            self.inner.height(),
            self.inner.channels(),
            if self.inner.channels() == 1 { "" } else { "s" }
        )
    }
}

/// Metric parameters; construct with keyword overrides of the defaults.
#[pyclass(name = "MetricConfig", skip_from_py_object)]
#[derive(Clone)]
struct PyMetricConfig {
    inner: core_metric::MetricConfig,
}

#[pymethods]
impl PyMetricConfig {
    #[new]
    #[pyo3(signature = (
        gamma=0.06, lambda_=1e3, n_cells=100, p=0.1, tau_l=15, tau_h=235,
        k_g=2.0, k_e=0.125, alpha=0.4, beta=0.4, s_floor=1e-4, sigma_max=25.0
    ))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        gamma: f64,
        lambda_: f64,
        n_cells: usize,
        p: f64,
        tau_l: u8,
        tau_h: u8,
        k_g: f64,
        k_e: f64,
        alpha: f64,
        beta: f64,
        s_floor: f64,
        sigma_max: f64,
    ) -> PyResult<Self> {
        let inner = core_metric::MetricConfig {
            gamma,
            lambda: lambda_,
            n_cells,
            p,
            tau_l,
            tau_h,
            k_g,
            k_e,
            alpha,
            beta,
            s_floor,
            sigma_max,
        };
        inner.validate().map_err(value_err)?;
        Ok(Self { inner })
    }

    /// Serializes to the flat key=value text form.
    fn to_key_values(&self) -> String {
        self.inner.to_key_values()
    }

    /// Parses the flat key=value text form.
    #[staticmethod]
    fn from_key_values(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: core_metric::MetricConfig::from_key_values(text).map_err(value_err)?,
        })
    }

    fn __repr__(&self) -> String {
        format!(
            "MetricConfig(alpha={}, beta={}, gamma={}, sigma_max={})",
            self.inner.alpha, self.inner.beta, self.inner.gamma, self.inner.sigma_max
        )
    }
}

/// Per-term metric values and the fused score.
#[pyclass(name = "QualityBreakdown", skip_from_py_object)]
#[derive(Clone)]
struct PyQualityBreakdown {
    #[pyo3(get)]
    l_gradient: f64,
    #[pyo3(get)]
    l_entropy: f64,
    #[pyo3(get)]
    sigma_noise: f64,
    #[pyo3(get)]
    fused: f64,
    #[pyo3(get)]
    noise_unestimable: bool,
}

#[pymethods]
impl PyQualityBreakdown {
    fn __repr__(&self) -> String {
        format!(
            "QualityBreakdown(l_gradient={:.6}, l_entropy={:.6}, sigma_noise={:.6}, fused={:.6})",
            self.l_gradient, self.l_entropy, self.sigma_noise, self.fused
        )
    }
}

impl From<core_metric::QualityBreakdown> for PyQualityBreakdown {
    fn from(b: core_metric::QualityBreakdown) -> Self {
        Self {
            l_gradient: b.l_gradient,
            l_entropy: b.l_entropy,
            sigma_noise: b.sigma_noise,
            fused: b.fused,
            noise_unestimable: b.noise_unestimable,
        }
    }
}

/// A static scene for the synthetic camera.
#[pyclass(name = "Scene", skip_from_py_object)]
#[derive(Clone)]
struct PyScene {
    inner: core_camera::Scene,
}

#[pymethods]
impl PyScene {
    /// Deterministic mosaic of flat blocks, radiance log-uniform in [lo, hi].
    #[staticmethod]
    #[pyo3(signature = (width, height, block=16, lo=0.02, hi=0.9, seed=0))]
    fn mosaic(width: usize, height: usize, block: usize, lo: f64, hi: f64, seed: u64) -> Self {
        Self {
            inner: core_camera::Scene::mosaic(width, height, block, lo, hi, seed),
        }
    }

    /// Treats an image as a radiance map scaled to [0, 1].
    #[staticmethod]
    fn from_image(img: &PyImage) -> Self {
        Self {
            inner: core_camera::Scene::from_image(&img.inner),
        }
    }

    #[getter]
    fn width(&self) -> usize {
        self.inner.width()
    }

    #[getter]
    fn height(&self) -> usize {
        self.inner.height()
    }
}

fn build_model(
    full_well: f64,
    read_noise_sigma: f64,
    noise_gain_exponent: f64,
    seed: u64,
) -> SyntheticCameraModel {
    SyntheticCameraModel {
        full_well,
        read_noise_sigma,
        noise_gain_exponent,
        rng_seed: seed,
    }
}

/// Evaluates the fused quality metric on an image.
#[pyfunction]
#[pyo3(signature = (img, cfg=None))]
fn evaluate(img: &PyImage, cfg: Option<&PyMetricConfig>) -> PyResult<PyQualityBreakdown> {
    let cfg = cfg.map(|c| c.inner.clone()).unwrap_or_default();
    Ok(core_metric::evaluate(&img.inner, &cfg)
        .map_err(value_err)?
        .into())
}

/// Log mapping from gradient magnitude to gradient information.
#[pyfunction]
#[pyo3(signature = (g, cfg=None))]
fn map_gradient(g: f64, cfg: Option<&PyMetricConfig>) -> PyResult<f64> {
    if !(0.0..=1.0).contains(&g) {
        return Err(PyValueError::new_err(
            "gradient magnitude must be in [0, 1]",
        ));
    }
    let cfg = cfg.map(|c| c.inner.clone()).unwrap_or_default();
    Ok(core_metric::map_gradient(g, &cfg))
}

/// Entropy term of a grayscale (or color, converted) image.
#[pyfunction]
#[pyo3(signature = (img, cfg=None))]
fn entropy_score(img: &PyImage, cfg: Option<&PyMetricConfig>) -> f64 {
    let cfg = cfg.map(|c| c.inner.clone()).unwrap_or_default();
    core_metric::entropy_score(&core_imaging::to_grayscale(&img.inner), &cfg)
}

/// Estimated noise sigma in intensity units, or None when unestimable.
#[pyfunction]
#[pyo3(signature = (img, cfg=None))]
fn noise_sigma(img: &PyImage, cfg: Option<&PyMetricConfig>) -> Option<f64> {
    let cfg = cfg.map(|c| c.inner.clone()).unwrap_or_default();
    match core_metric::noise_sigma(&img.inner, &cfg) {
        NoiseEstimate::Estimated(v) => Some(v),
        NoiseEstimate::Unestimable => None,
    }
}

/// Initial Nelder-Mead step size from the frame's mean intensity.
#[pyfunction]
#[pyo3(signature = (mean_intensity, epsilon=1.7))]
fn initial_step(mean_intensity: f64, epsilon: f64) -> PyResult<f64> {
    if !(0.0..=255.0).contains(&mean_intensity) {
        return Err(PyValueError::new_err("mean intensity must be in [0, 255]"));
    }
    if epsilon <= 0.0 {
        return Err(PyValueError::new_err("epsilon must be positive"));
    }
    Ok(core_controller::initial_step(mean_intensity, epsilon))
}

/// Reads a binary PGM/PPM file.
#[pyfunction]
fn read_pnm(path: &str) -> PyResult<PyImage> {
    Ok(PyImage {
        inner: core_imaging::read_pnm(path).map_err(|e| PyIOError::new_err(e.to_string()))?,
    })
}

/// Writes a binary PGM/PPM file.
#[pyfunction]
fn write_pnm(img: &PyImage, path: &str) -> PyResult<()> {
    core_imaging::write_pnm(&img.inner, path).map_err(|e| PyIOError::new_err(e.to_string()))
}

/// Renders one synthetic frame of a scene.
#[pyfunction]
#[pyo3(signature = (scene, exposure_ms, gain_db, full_well=1.0, read_noise_sigma=0.0, noise_gain_exponent=1.0, seed=0))]
#[allow(clippy::neg_cmp_op_on_partial_ord)] // rejects NaN parameters too
fn synthetic_capture(
    scene: &PyScene,
    exposure_ms: f64,
    gain_db: f64,
    full_well: f64,
    read_noise_sigma: f64,
    noise_gain_exponent: f64,
    seed: u64,
) -> PyResult<PyImage> {
    if !(exposure_ms > 0.0) || !gain_db.is_finite() || !(full_well > 0.0) {
        return Err(PyValueError::new_err(
            "exposure and full_well must be positive, gain finite",
        ));
    }
    let model = build_model(full_well, read_noise_sigma, noise_gain_exponent, seed);
    Ok(PyImage {
        inner: core_camera::synthetic_capture(
            &scene.inner,
            &model,
            ExposureParams::new(exposure_ms, gain_db),
        ),
    })
}

/// Adds zero-mean Gaussian noise, clipped to 8 bits. Deterministic per seed.
#[pyfunction]
fn add_gaussian_noise(img: &PyImage, sigma: f64, seed: u64) -> PyImage {
    PyImage {
        inner: core_camera::add_gaussian_noise(&img.inner, sigma, seed),
    }
}

/// Runs the exposure controller against a synthetic camera.
///
/// Returns `(exposure_ms, gain_db, fused_score, iterations)`.
#[pyfunction]
#[pyo3(signature = (
    scene, start_exposure_ms, start_gain_db,
    exposure_bounds=(0.1, 7.45), gain_bounds=(0.0, 20.0),
    full_well=1.0, read_noise_sigma=0.0, noise_gain_exponent=1.0, seed=0, cfg=None
))]
#[allow(clippy::too_many_arguments)]
fn control_synthetic(
    scene: &PyScene,
    start_exposure_ms: f64,
    start_gain_db: f64,
    exposure_bounds: (f64, f64),
    gain_bounds: (f64, f64),
    full_well: f64,
    read_noise_sigma: f64,
    noise_gain_exponent: f64,
    seed: u64,
    cfg: Option<&PyMetricConfig>,
) -> PyResult<(f64, f64, f64, usize)> {
    if !(exposure_bounds.0 > 0.0
        && exposure_bounds.0 < exposure_bounds.1
        && gain_bounds.0 < gain_bounds.1)
    {
        return Err(PyValueError::new_err("bounds must satisfy 0 < min < max"));
    }
    let metric = cfg.map(|c| c.inner.clone()).unwrap_or_default();
    let model = build_model(full_well, read_noise_sigma, noise_gain_exponent, seed);
    let camera = SyntheticCamera::new(scene.inner.clone(), model);
    let mut objective = MeteredCamera::new(camera, metric);
    let bounds = ParamBounds::new(exposure_bounds, gain_bounds);
    let result = core_controller::run(
        &mut objective,
        ExposureParams::new(start_exposure_ms, start_gain_db),
        &bounds,
        &ControllerOptions::default(),
    )
    .map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok((
        result.params.exposure_ms,
        result.params.gain_db,
        result.score,
        result.trace.iterations(),
    ))
}

#[pymodule]
fn aec_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyImage>()?;
    m.add_class::<PyMetricConfig>()?;
    m.add_class::<PyQualityBreakdown>()?;
    m.add_class::<PyScene>()?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(map_gradient, m)?)?;
    m.add_function(wrap_pyfunction!(entropy_score, m)?)?;
    m.add_function(wrap_pyfunction!(noise_sigma, m)?)?;
    m.add_function(wrap_pyfunction!(initial_step, m)?)?;
    m.add_function(wrap_pyfunction!(read_pnm, m)?)?;
    m.add_function(wrap_pyfunction!(write_pnm, m)?)?;
    m.add_function(wrap_pyfunction!(synthetic_capture, m)?)?;
    m.add_function(wrap_pyfunction!(add_gaussian_noise, m)?)?;
    m.add_function(wrap_pyfunction!(control_synthetic, m)?)?;
    Ok(())
}
