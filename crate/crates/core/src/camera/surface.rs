//! Metric surfaces over a sweep grid: every grid frame is scored once, and
//! intermediate values come from separable Catmull–Rom interpolation.

use super::{CameraError, SweepManifest};
use crate::controller::{ExposureParams, Objective, Sample};
use crate::metric::{self, MetricConfig, QualityBreakdown};

/// Default interpolation steps for surface queries: 1 µs exposure, 0.1 dB
/// gain.
pub const DEFAULT_EXPOSURE_STEP_MS: f64 = 0.001;
pub const DEFAULT_GAIN_STEP_DB: f64 = 0.1;

/// Which metric term a surface carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SurfaceTerm {
    Gradient,
    Entropy,
    Noise,
    Fused,
}

impl SurfaceTerm {
    pub const ALL: [SurfaceTerm; 4] = [
        SurfaceTerm::Gradient,
        SurfaceTerm::Entropy,
        SurfaceTerm::Noise,
        SurfaceTerm::Fused,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            SurfaceTerm::Gradient => "gradient",
            SurfaceTerm::Entropy => "entropy",
            SurfaceTerm::Noise => "noise",
            SurfaceTerm::Fused => "fused",
        }
    }

    pub fn parse(s: &str) -> Option<SurfaceTerm> {
        match s {
            "gradient" => Some(SurfaceTerm::Gradient),
            "entropy" => Some(SurfaceTerm::Entropy),
            "noise" => Some(SurfaceTerm::Noise),
            "fused" => Some(SurfaceTerm::Fused),
            _ => None,
        }
    }

    fn extract(&self, b: &QualityBreakdown) -> f64 {
        match self {
            SurfaceTerm::Gradient => b.l_gradient,
            SurfaceTerm::Entropy => b.l_entropy,
            SurfaceTerm::Noise => b.sigma_noise,
            SurfaceTerm::Fused => b.fused,
        }
    }
}

/// Full metric breakdowns and mean intensities over a sweep grid.
#[derive(Debug, Clone)]
pub struct SweepEvaluation {
    exposures: Vec<f64>,
    gains: Vec<f64>,
    breakdowns: Vec<QualityBreakdown>,
    mean_intensities: Vec<f64>,
}

impl SweepEvaluation {
    pub fn exposures(&self) -> &[f64] {
        &self.exposures
    }

    pub fn gains(&self) -> &[f64] {
        &self.gains
    }

    pub fn breakdown(&self, ei: usize, gi: usize) -> &QualityBreakdown {
        &self.breakdowns[ei * self.gains.len() + gi]
    }

    pub fn mean_intensity(&self, ei: usize, gi: usize) -> f64 {
        self.mean_intensities[ei * self.gains.len() + gi]
    }

    /// Grid cell with the highest fused score; ties go to the smaller
    /// exposure, then the smaller gain.
    pub fn argmax_fused(&self) -> (usize, usize) {
        self.argmax(SurfaceTerm::Fused)
    }

    pub fn argmax(&self, term: SurfaceTerm) -> (usize, usize) {
        let mut best = (0usize, 0usize);
        let mut best_val = f64::NEG_INFINITY;
        for ei in 0..self.exposures.len() {
            for gi in 0..self.gains.len() {
                let v = term.extract(self.breakdown(ei, gi));
                if v > best_val {
                    best_val = v;
                    best = (ei, gi);
                }
            }
        }
        best
    }
}

/// Scores every frame in the manifest. Errors carry the grid coordinates of
/// the offending cell.
pub fn evaluate_manifest(
    manifest: &SweepManifest,
    cfg: &MetricConfig,
) -> Result<SweepEvaluation, CameraError> {
    let mut breakdowns = Vec::with_capacity(manifest.exposures().len() * manifest.gains().len());
    let mut mean_intensities = Vec::with_capacity(breakdowns.capacity());
    for (ei, gi, exposure, gain) in manifest.cells() {
        let frame = manifest
            .load_frame(ei, gi)
            .map_err(CameraError::at_cell(exposure, gain))?;
        let breakdown = metric::evaluate(&frame, cfg).map_err(|source| CameraError::Metric {
            exposure_ms: exposure,
            gain_db: gain,
            source,
        })?;
        breakdowns.push(breakdown);
        mean_intensities.push(frame.mean_intensity());
    }
    Ok(SweepEvaluation {
        exposures: manifest.exposures().to_vec(),
        gains: manifest.gains().to_vec(),
        breakdowns,
        mean_intensities,
    })
}

/// A raw grid of per-cell values with Catmull–Rom interpolation between the
/// knots. Exact at the knots; border cells replicate edge control points.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricSurface {
    exposures: Vec<f64>,
    gains: Vec<f64>,
    values: Vec<f64>,
    /// Query quantization steps.
    pub exposure_step_ms: f64,
    pub gain_step_db: f64,
}

impl MetricSurface {
    /// Builds a surface from explicit grid values (row-major over
    /// (exposure, gain)).
    pub fn from_grid(exposures: Vec<f64>, gains: Vec<f64>, values: Vec<f64>) -> MetricSurface {
        assert!(!exposures.is_empty() && !gains.is_empty());
        assert_eq!(
            values.len(),
            exposures.len() * gains.len(),
            "grid dimensions mismatch"
        );
        assert!(
            exposures.windows(2).all(|w| w[0] < w[1]),
            "exposures must be ascending"
        );
        assert!(
            gains.windows(2).all(|w| w[0] < w[1]),
            "gains must be ascending"
        );
        MetricSurface {
            exposures,
            gains,
            values,
            exposure_step_ms: DEFAULT_EXPOSURE_STEP_MS,
            gain_step_db: DEFAULT_GAIN_STEP_DB,
        }
    }

    /// Extracts one term of a sweep evaluation as a surface.
    pub fn from_evaluation(eval: &SweepEvaluation, term: SurfaceTerm) -> MetricSurface {
        let values = (0..eval.exposures().len())
            .flat_map(|ei| (0..eval.gains().len()).map(move |gi| (ei, gi)))
            .map(|(ei, gi)| term.extract(eval.breakdown(ei, gi)))
            .collect();
        Self::from_grid(eval.exposures().to_vec(), eval.gains().to_vec(), values)
    }

    pub fn exposures(&self) -> &[f64] {
        &self.exposures
    }

    pub fn gains(&self) -> &[f64] {
        &self.gains
    }

    pub fn raw_value(&self, ei: usize, gi: usize) -> f64 {
        self.values[ei * self.gains.len() + gi]
    }

    /// Raw-grid argmax; ties go to the smaller exposure, then smaller gain.
    pub fn raw_argmax(&self) -> (usize, usize) {
        let mut best = (0, 0);
        let mut best_val = f64::NEG_INFINITY;
        for ei in 0..self.exposures.len() {
            for gi in 0..self.gains.len() {
                if self.raw_value(ei, gi) > best_val {
                    best_val = self.raw_value(ei, gi);
                    best = (ei, gi);
                }
            }
        }
        best
    }

    fn inside_hull(&self, params: ExposureParams) -> bool {
        let e = (self.exposures[0], self.exposures[self.exposures.len() - 1]);
        let g = (self.gains[0], self.gains[self.gains.len() - 1]);
        (e.0..=e.1).contains(&params.exposure_ms) && (g.0..=g.1).contains(&params.gain_db)
    }

    /// Interpolated value at `params`; errors outside the raw-grid hull.
    pub fn value_at(&self, params: ExposureParams) -> Result<f64, CameraError> {
        if !self.inside_hull(params) {
            return Err(CameraError::OutOfDomain {
                exposure_ms: params.exposure_ms,
                gain_db: params.gain_db,
            });
        }
        let (ei, u) = locate(&self.exposures, params.exposure_ms);
        let (gi, v) = locate(&self.gains, params.gain_db);
        let ne = self.exposures.len() as isize;
        let ng = self.gains.len() as isize;
        let at = |e: isize, g: isize| {
            let e = e.clamp(0, ne - 1) as usize;
            let g = g.clamp(0, ng - 1) as usize;
            self.values[e * self.gains.len() + g]
        };
        let mut rows = [0.0; 4];
        for (k, row) in rows.iter_mut().enumerate() {
            let e = ei as isize + k as isize - 1;
            *row = catmull_rom(
                at(e, gi as isize - 1),
                at(e, gi as isize),
                at(e, gi as isize + 1),
                at(e, gi as isize + 2),
                v,
            );
        }
        Ok(catmull_rom(rows[0], rows[1], rows[2], rows[3], u))
    }

    /// Snaps params to the interpolation step lattice, clamped to the hull.
    pub fn snap(&self, params: ExposureParams) -> ExposureParams {
        let (e0, e1) = (self.exposures[0], self.exposures[self.exposures.len() - 1]);
        let (g0, g1) = (self.gains[0], self.gains[self.gains.len() - 1]);
        let snap_axis = |v: f64, origin: f64, step: f64, lo: f64, hi: f64| {
            let snapped = if step > 0.0 {
                origin + ((v - origin) / step).round() * step
            } else {
                v
            };
            snapped.clamp(lo, hi)
        };
        ExposureParams {
            exposure_ms: snap_axis(params.exposure_ms, e0, self.exposure_step_ms, e0, e1),
            gain_db: snap_axis(params.gain_db, g0, self.gain_step_db, g0, g1),
        }
    }
}

/// Cell index and local coordinate for `x` within ascending `knots`.
fn locate(knots: &[f64], x: f64) -> (usize, f64) {
    if knots.len() == 1 {
        return (0, 0.0);
    }
    let i = knots
        .partition_point(|&k| k <= x)
        .saturating_sub(1)
        .min(knots.len() - 2);
    let u = (x - knots[i]) / (knots[i + 1] - knots[i]);
    (i, u)
}

/// Catmull–Rom cubic through `p1` (u=0) and `p2` (u=1).
fn catmull_rom(p0: f64, p1: f64, p2: f64, p3: f64, u: f64) -> f64 {
    0.5 * (2.0 * p1
        + (-p0 + p2) * u
        + (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) * u * u
        + (-p0 + 3.0 * p1 - 3.0 * p2 + p3) * u * u * u)
}

/// Builds the fused-score surface for a manifest.
pub fn build_surface(
    manifest: &SweepManifest,
    cfg: &MetricConfig,
) -> Result<MetricSurface, CameraError> {
    Ok(MetricSurface::from_evaluation(
        &evaluate_manifest(manifest, cfg)?,
        SurfaceTerm::Fused,
    ))
}

/// An [`Objective`] sampling an interpolated metric surface instead of a
/// live camera. Queries snap to the interpolation lattice. When built from a
/// sweep evaluation it also interpolates the frames' mean intensities, so
/// the controller's intensity-driven initialization still works.
#[derive(Debug, Clone)]
pub struct SurfaceCamera {
    scores: MetricSurface,
    intensity: Option<MetricSurface>,
}

impl SurfaceCamera {
    pub fn new(scores: MetricSurface) -> Self {
        Self {
            scores,
            intensity: None,
        }
    }

    pub fn from_evaluation(eval: &SweepEvaluation) -> Self {
        let scores = MetricSurface::from_evaluation(eval, SurfaceTerm::Fused);
        let intensity = MetricSurface::from_grid(
            eval.exposures().to_vec(),
            eval.gains().to_vec(),
            (0..eval.exposures().len())
                .flat_map(|ei| (0..eval.gains().len()).map(move |gi| (ei, gi)))
                .map(|(ei, gi)| eval.mean_intensity(ei, gi))
                .collect(),
        );
        Self {
            scores,
            intensity: Some(intensity),
        }
    }

    pub fn scores(&self) -> &MetricSurface {
        &self.scores
    }

    /// Overrides the query quantization steps on all carried surfaces.
    pub fn set_steps(&mut self, exposure_step_ms: f64, gain_step_db: f64) {
        for surface in std::iter::once(&mut self.scores).chain(self.intensity.as_mut()) {
            surface.exposure_step_ms = exposure_step_ms;
            surface.gain_step_db = gain_step_db;
        }
    }
}

impl Objective for SurfaceCamera {
    fn sample(&mut self, params: ExposureParams) -> Result<Sample, CameraError> {
        let snapped = self.scores.snap(params);
        let score = self.scores.value_at(snapped)?;
        let mean_intensity = match &self.intensity {
            // An interpolated intensity can slip outside [0, 255] near
            // sharp knots; the step-size formula needs it in range.
            Some(surface) => Some(surface.value_at(snapped)?.clamp(0.0, 255.0)),
            None => None,
        };
        Ok(Sample {
            score,
            mean_intensity,
        })
    }

    fn quantization(&self) -> Option<[f64; 2]> {
        Some([self.scores.exposure_step_ms, self.scores.gain_step_db])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::{synthetic_capture, Scene, SyntheticCameraModel};
    use crate::imaging::write_pnm;
    use approx::assert_relative_eq;
    use std::path::{Path, PathBuf};

    fn grid_surface(
        f: impl Fn(f64, f64) -> f64,
        exposures: &[f64],
        gains: &[f64],
    ) -> MetricSurface {
        let mut values = Vec::new();
        for &e in exposures {
            for &g in gains {
                values.push(f(e, g));
            }
        }
        MetricSurface::from_grid(exposures.to_vec(), gains.to_vec(), values)
    }

    #[test]
    fn exact_at_every_knot() {
        let exposures: Vec<f64> = (0..6).map(|i| 1.0 + 0.5 * i as f64).collect();
        let gains: Vec<f64> = (0..5).map(|i| 2.0 * i as f64).collect();
        let f = |e: f64, g: f64| (1.3 * e).sin() + 0.2 * g * g - e * g * 0.05;
        let surface = grid_surface(f, &exposures, &gains);
        for (ei, &e) in exposures.iter().enumerate() {
            for (gi, &g) in gains.iter().enumerate() {
                let got = surface.value_at(ExposureParams::new(e, g)).unwrap();
                assert_relative_eq!(got, surface.raw_value(ei, gi), epsilon = 1e-12);
                assert_relative_eq!(got, f(e, g), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn reproduces_linear_functions_on_interior_cells() {
        let exposures: Vec<f64> = (0..8).map(|i| i as f64).collect();
        let gains: Vec<f64> = (0..8).map(|i| i as f64).collect();
        let f = |e: f64, g: f64| 3.0 * e + 2.0 * g;
        let surface = grid_surface(f, &exposures, &gains);
        // Interior cells only: border cells replicate control points and do
        // not reproduce linear functions exactly.
        for i in 0..40 {
            let e = 1.0 + (i as f64 * 0.13) % 5.0;
            let g = 1.0 + (i as f64 * 0.31) % 5.0;
            let got = surface.value_at(ExposureParams::new(e, g)).unwrap();
            assert_relative_eq!(got, f(e, g), epsilon = 1e-9);
        }
    }

    #[test]
    fn reproduces_quadratics_at_interior_midpoints() {
        let knots: Vec<f64> = (0..9).map(|i| i as f64).collect();
        let f = |e: f64, _g: f64| e * e;
        let surface = grid_surface(f, &knots, &[0.0, 1.0, 2.0, 3.0]);
        for i in 1..7 {
            let e = i as f64 + 0.5;
            let got = surface.value_at(ExposureParams::new(e, 1.0)).unwrap();
            assert_relative_eq!(got, e * e, epsilon = 1e-9);
        }
    }

    #[test]
    fn out_of_hull_is_a_domain_error() {
        let surface = grid_surface(|e, g| e + g, &[1.0, 2.0], &[0.0, 1.0]);
        assert!(matches!(
            surface.value_at(ExposureParams::new(3.0, 0.5)),
            Err(CameraError::OutOfDomain { .. })
        ));
        // The surface camera snaps and clamps before evaluating.
        let mut cam = SurfaceCamera::new(surface);
        assert!(cam.sample(ExposureParams::new(3.0, 0.5)).is_ok());
    }

    fn write_sweep(
        dir: &Path,
        exposures: &[f64],
        gains: &[f64],
        frame: impl Fn(f64, f64) -> crate::imaging::Image,
    ) -> PathBuf {
        let mut text = String::from("exposure_ms,gain_db,path\n");
        for &e in exposures {
            for &g in gains {
                let name = format!("f_{e}_{g}.pgm");
                write_pnm(&frame(e, g), dir.join(&name)).unwrap();
                text.push_str(&format!("{e},{g},{name}\n"));
            }
        }
        let path = dir.join("sweep.csv");
        std::fs::write(&path, text).unwrap();
        path
    }

    #[test]
    fn constant_manifest_gives_zero_surface() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_sweep(dir.path(), &[1.0, 2.0], &[0.0, 1.0], |_, _| {
            crate::imaging::Image::filled(16, 16, 1, 128).unwrap()
        });
        let manifest = SweepManifest::load(&path).unwrap();
        let surface = build_surface(&manifest, &MetricConfig::default()).unwrap();
        for ei in 0..2 {
            for gi in 0..2 {
                assert_eq!(surface.raw_value(ei, gi), 0.0);
            }
        }
    }

    #[test]
    fn richest_cell_wins_argmax() {
        let dir = tempfile::tempdir().unwrap();
        let scene = Scene::mosaic(64, 48, 8, 0.02, 0.9, 12);
        let model = SyntheticCameraModel {
            full_well: 8.0,
            read_noise_sigma: 0.5,
            ..Default::default()
        };
        // Model renders dim frames except at (4ms, 6dB), which lands well
        // exposed: richest texture at modest noise.
        let path = write_sweep(
            dir.path(),
            &[1.0, 2.0, 3.0, 4.0],
            &[0.0, 3.0, 6.0],
            |e, g| synthetic_capture(&scene, &model, ExposureParams::new(e, g)),
        );
        let manifest = SweepManifest::load(&path).unwrap();
        let cfg = MetricConfig::default();
        let eval = evaluate_manifest(&manifest, &cfg).unwrap();
        // Oracle: exhaustive per-cell comparison of independent evaluate runs.
        let mut best = (0, 0);
        let mut best_val = f64::NEG_INFINITY;
        for (ei, gi, e, g) in manifest.cells() {
            let frame = manifest.load_frame(ei, gi).unwrap();
            let fused = crate::metric::evaluate(&frame, &cfg).unwrap().fused;
            if fused > best_val {
                best_val = fused;
                best = (ei, gi);
            }
            assert_relative_eq!(fused, eval.breakdown(ei, gi).fused, epsilon = 1e-12);
            let _ = (e, g);
        }
        assert_eq!(eval.argmax_fused(), best);
        let surface = MetricSurface::from_evaluation(&eval, SurfaceTerm::Fused);
        assert_eq!(surface.raw_argmax(), best);
    }

    #[test]
    fn rebuild_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let scene = Scene::mosaic(32, 24, 8, 0.05, 0.6, 4);
        let model = SyntheticCameraModel {
            full_well: 4.0,
            read_noise_sigma: 1.0,
            ..Default::default()
        };
        let path = write_sweep(dir.path(), &[1.0, 2.0], &[0.0, 2.0], |e, g| {
            synthetic_capture(&scene, &model, ExposureParams::new(e, g))
        });
        let manifest = SweepManifest::load(&path).unwrap();
        let a = build_surface(&manifest, &MetricConfig::default()).unwrap();
        let b = build_surface(&manifest, &MetricConfig::default()).unwrap();
        assert_eq!(a, b);
    }
}
