//! Run configuration: a flat `key=value` file with section prefixes
//! (`metric.alpha`, `controller.epsilon`, `camera.kind`), overridable by
//! command-line flags. Unknown keys are rejected, and files referenced by
//! the camera section must exist at load time.

use std::path::{Path, PathBuf};

use aec_core::controller::{ControllerOptions, ExposureParams, ParamBounds};
use aec_core::metric::MetricConfig;

use crate::CliError;

/// Which frame source `control` drives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CameraKind {
    #[default]
    Synthetic,
    Replay,
    Surface,
}

#[derive(Debug, Clone)]
pub struct CameraSection {
    pub kind: CameraKind,
    pub manifest: Option<PathBuf>,
    pub scene: Option<PathBuf>,
    pub full_well: f64,
    pub read_noise_sigma: f64,
    pub noise_gain_exponent: f64,
    pub seed: Option<u64>,
}

impl Default for CameraSection {
    fn default() -> Self {
        Self {
            kind: CameraKind::Synthetic,
            manifest: None,
            scene: None,
            full_well: 1.0,
            read_noise_sigma: 0.0,
            noise_gain_exponent: 1.0,
            seed: None,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct ControllerSection {
    pub opts: ControllerOptions,
    pub bounds: Option<ParamBounds>,
    pub start: Option<ExposureParams>,
}

/// Everything a command run needs beyond its positional arguments.
#[derive(Debug, Clone, Default)]
pub struct RunConfig {
    pub metric: MetricConfig,
    pub controller: ControllerSection,
    pub camera: CameraSection,
    pub surface_exposure_step_ms: Option<f64>,
    pub surface_gain_step_db: Option<f64>,
    pub out: Option<PathBuf>,
    pub seed: u64,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::input(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        // Referenced files must exist at load time; resolve them relative to
        // the config file.
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        for p in [&mut cfg.camera.manifest, &mut cfg.camera.scene]
            .into_iter()
            .flatten()
        {
            let resolved = if p.is_absolute() {
                p.clone()
            } else {
                base.join(&p)
            };
            if !resolved.exists() {
                return Err(CliError::input(format!(
                    "config references missing file {}",
                    resolved.display()
                )));
            }
            *p = resolved;
        }
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut cfg = RunConfig::default();
        let mut explicit_bounds = ExplicitBounds::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::input(format!(
                    "config line {}: expected key=value, got {line:?}",
                    lineno + 1
                ))
            })?;
            cfg.apply(key.trim(), value.trim(), &mut explicit_bounds)
                .map_err(|e| CliError::input(format!("config line {}: {e}", lineno + 1)))?;
        }
        if let Some(bounds) = explicit_bounds.build()? {
            cfg.controller.bounds = Some(bounds);
        }
        cfg.metric
            .validate()
            .map_err(|e| CliError::input(e.to_string()))?;
        Ok(cfg)
    }

    fn apply(&mut self, key: &str, value: &str, bounds: &mut ExplicitBounds) -> Result<(), String> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, String> {
            v.parse()
                .map_err(|_| format!("cannot parse {v:?} for {key}"))
        }
        if let Some(metric_key) = key.strip_prefix("metric.") {
            return self
                .metric
                .set_key(metric_key, value)
                .map_err(|e| e.to_string());
        }
        match key {
            "controller.epsilon" => self.controller.opts.epsilon = num(key, value)?,
            "controller.kappa" => self.controller.opts.kappa = num(key, value)?,
            "controller.reflection" => self.controller.opts.nm.reflection = num(key, value)?,
            "controller.expansion" => self.controller.opts.nm.expansion = num(key, value)?,
            "controller.contraction" => self.controller.opts.nm.contraction = num(key, value)?,
            "controller.shrink" => self.controller.opts.nm.shrink = num(key, value)?,
            "controller.diameter_tol" => self.controller.opts.stop.diameter_tol = num(key, value)?,
            "controller.improvement_tol" => {
                self.controller.opts.stop.improvement_tol = num(key, value)?
            }
            "controller.patience" => self.controller.opts.stop.patience = num(key, value)?,
            "controller.max_iterations" => {
                self.controller.opts.stop.max_iterations = num(key, value)?
            }
            "controller.bounds" => {
                self.controller.bounds = Some(match value {
                    "outdoor" => ParamBounds::outdoor(),
                    "indoor" => ParamBounds::indoor(),
                    other => return Err(format!("unknown bounds profile {other:?}")),
                })
            }
            "controller.exposure_min_ms" => bounds.exposure_min = Some(num(key, value)?),
            "controller.exposure_max_ms" => bounds.exposure_max = Some(num(key, value)?),
            "controller.gain_min_db" => bounds.gain_min = Some(num(key, value)?),
            "controller.gain_max_db" => bounds.gain_max = Some(num(key, value)?),
            "controller.start_exposure_ms" => {
                self.controller
                    .start
                    .get_or_insert(ExposureParams::new(1.0, 0.0))
                    .exposure_ms = num(key, value)?
            }
            "controller.start_gain_db" => {
                self.controller
                    .start
                    .get_or_insert(ExposureParams::new(1.0, 0.0))
                    .gain_db = num(key, value)?
            }
            "camera.kind" => {
                self.camera.kind = match value {
                    "synthetic" => CameraKind::Synthetic,
                    "replay" => CameraKind::Replay,
                    "surface" => CameraKind::Surface,
                    other => return Err(format!("unknown camera kind {other:?}")),
                }
            }
            "camera.manifest" => self.camera.manifest = Some(PathBuf::from(value)),
            "camera.scene" => self.camera.scene = Some(PathBuf::from(value)),
            "camera.full_well" => self.camera.full_well = num(key, value)?,
            "camera.read_noise_sigma" => self.camera.read_noise_sigma = num(key, value)?,
            "camera.noise_gain_exponent" => self.camera.noise_gain_exponent = num(key, value)?,
            "camera.seed" => self.camera.seed = Some(num(key, value)?),
            "surface.exposure_step_ms" => self.surface_exposure_step_ms = Some(num(key, value)?),
            "surface.gain_step_db" => self.surface_gain_step_db = Some(num(key, value)?),
            "out" => self.out = Some(PathBuf::from(value)),
            "seed" => self.seed = num(key, value)?,
            other => return Err(format!("unknown key {other:?}")),
        }
        Ok(())
    }
}

#[derive(Debug, Default)]
struct ExplicitBounds {
    exposure_min: Option<f64>,
    exposure_max: Option<f64>,
    gain_min: Option<f64>,
    gain_max: Option<f64>,
}

impl ExplicitBounds {
    fn build(&self) -> Result<Option<ParamBounds>, CliError> {
        let any = self.exposure_min.is_some()
            || self.exposure_max.is_some()
            || self.gain_min.is_some()
            || self.gain_max.is_some();
        if !any {
            return Ok(None);
        }
        let all = self
            .exposure_min
            .zip(self.exposure_max)
            .zip(self.gain_min.zip(self.gain_max));
        match all {
            Some(((e0, e1), (g0, g1))) => {
                if !(e0 > 0.0 && e0 < e1 && g0 < g1) {
                    return Err(CliError::input("controller bounds must satisfy 0 < min < max"));
                }
                Ok(Some(ParamBounds::new((e0, e1), (g0, g1))))
            }
            None => Err(CliError::input(
                "explicit controller bounds need all four of exposure_min_ms/exposure_max_ms/gain_min_db/gain_max_db",
            )),
        }
    }
}
