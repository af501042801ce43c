//! Sweep manifests: an index of pre-captured frames over a complete
//! rectangular (exposure, gain) grid, and a replay camera over one.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use super::{CameraError, FrameSource};
use crate::controller::ExposureParams;
use crate::imaging::{read_pnm, Image};

/// Relative tolerance when validating grid spacing.
const STEP_TOLERANCE: f64 = 1e-6;

/// Index of a captured sweep: `exposure_ms,gain_db,path` rows forming a
/// complete rectangular grid. Paths are relative to the manifest file.
#[derive(Debug, Clone)]
pub struct SweepManifest {
    base_dir: PathBuf,
    exposures: Vec<f64>,
    gains: Vec<f64>,
    exposure_step: f64,
    gain_step: f64,
    /// Row-major over (exposure index, gain index).
    paths: Vec<PathBuf>,
}

impl SweepManifest {
    /// Loads and validates a manifest CSV.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, CameraError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| CameraError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text, path)
    }

    fn parse(text: &str, path: &Path) -> Result<Self, CameraError> {
        let manifest_err = |line: usize, reason: String| CameraError::Manifest {
            path: path.to_path_buf(),
            line,
            reason,
        };
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(text.as_bytes());
        {
            let headers = reader
                .headers()
                .map_err(|e| manifest_err(1, e.to_string()))?;
            let expected = ["exposure_ms", "gain_db", "path"];
            if headers.iter().collect::<Vec<_>>() != expected {
                return Err(manifest_err(
                    1,
                    format!("header must be {}", expected.join(",")),
                ));
            }
        }
        let mut rows: Vec<(f64, f64, String)> = Vec::new();
        for (idx, record) in reader.records().enumerate() {
            let line = idx + 2;
            let record = record.map_err(|e| manifest_err(line, e.to_string()))?;
            if record.len() != 3 {
                return Err(manifest_err(
                    line,
                    format!("expected 3 fields, got {}", record.len()),
                ));
            }
            let exposure: f64 = record[0]
                .parse()
                .map_err(|_| manifest_err(line, format!("bad exposure_ms {:?}", &record[0])))?;
            let gain: f64 = record[1]
                .parse()
                .map_err(|_| manifest_err(line, format!("bad gain_db {:?}", &record[1])))?;
            rows.push((exposure, gain, record[2].to_string()));
        }
        if rows.is_empty() {
            return Err(manifest_err(1, "manifest has no entries".into()));
        }

        let mut exposures: Vec<f64> = dedup_sorted(rows.iter().map(|r| r.0));
        let mut gains: Vec<f64> = dedup_sorted(rows.iter().map(|r| r.1));
        exposures.sort_by(f64::total_cmp);
        gains.sort_by(f64::total_cmp);

        let exposure_step = infer_step(&exposures, "exposure")?;
        let gain_step = infer_step(&gains, "gain")?;

        let index_of = |values: &[f64], v: f64| values.iter().position(|&x| x == v).unwrap();
        let mut paths: Vec<Option<PathBuf>> = vec![None; exposures.len() * gains.len()];
        for (exposure, gain, rel) in &rows {
            let cell = index_of(&exposures, *exposure) * gains.len() + index_of(&gains, *gain);
            if paths[cell].is_some() {
                return Err(CameraError::DuplicateEntry {
                    exposure_ms: *exposure,
                    gain_db: *gain,
                });
            }
            paths[cell] = Some(PathBuf::from(rel));
        }
        let missing: Vec<(f64, f64)> = paths
            .iter()
            .enumerate()
            .filter(|(_, p)| p.is_none())
            .map(|(i, _)| (exposures[i / gains.len()], gains[i % gains.len()]))
            .collect();
        if !missing.is_empty() {
            return Err(CameraError::IncompleteGrid { missing });
        }

        Ok(Self {
            base_dir: path
                .parent()
                .unwrap_or_else(|| Path::new("."))
                .to_path_buf(),
            exposures,
            gains,
            exposure_step,
            gain_step,
            paths: paths.into_iter().map(Option::unwrap).collect(),
        })
    }

    pub fn exposures(&self) -> &[f64] {
        &self.exposures
    }

    pub fn gains(&self) -> &[f64] {
        &self.gains
    }

    pub fn exposure_step(&self) -> f64 {
        self.exposure_step
    }

    pub fn gain_step(&self) -> f64 {
        self.gain_step
    }

    /// Absolute path of the frame at grid cell `(ei, gi)`.
    pub fn frame_path(&self, ei: usize, gi: usize) -> PathBuf {
        self.base_dir.join(&self.paths[ei * self.gains.len() + gi])
    }

    /// Loads the frame at grid cell `(ei, gi)`.
    pub fn load_frame(&self, ei: usize, gi: usize) -> Result<Image, CameraError> {
        let path = self.frame_path(ei, gi);
        read_pnm(&path).map_err(|e| match e {
            crate::imaging::PnmError::Io(source) => CameraError::Io {
                path: path.clone(),
                source,
            },
            other => CameraError::Pnm {
                path: path.clone(),
                source: other,
            },
        })
    }

    /// Grid cell nearest to `params` in normalized coordinates; params
    /// outside the hull clamp to it. Ties break toward the smaller exposure,
    /// then the smaller gain.
    pub fn nearest(&self, params: ExposureParams) -> (usize, usize) {
        (
            nearest_index(&self.exposures, params.exposure_ms),
            nearest_index(&self.gains, params.gain_db),
        )
    }

    /// Iterates grid cells in row-major (exposure, gain) order.
    pub fn cells(&self) -> impl Iterator<Item = (usize, usize, f64, f64)> + '_ {
        let gains = self.gains.len();
        (0..self.exposures.len() * gains).map(move |i| {
            let (ei, gi) = (i / gains, i % gains);
            (ei, gi, self.exposures[ei], self.gains[gi])
        })
    }
}

fn dedup_sorted(values: impl Iterator<Item = f64>) -> Vec<f64> {
    let set: BTreeSet<u64> = values.map(f64::to_bits).collect();
    set.into_iter().map(f64::from_bits).collect()
}

fn infer_step(values: &[f64], axis: &'static str) -> Result<f64, CameraError> {
    if values.len() < 2 {
        return Ok(0.0);
    }
    let diffs: Vec<f64> = values.windows(2).map(|w| w[1] - w[0]).collect();
    let mean = diffs.iter().sum::<f64>() / diffs.len() as f64;
    let span = values[values.len() - 1] - values[0];
    for d in &diffs {
        if (d - mean).abs() > STEP_TOLERANCE * span {
            return Err(CameraError::NonUniformGrid {
                axis,
                detail: format!("step {d} deviates from mean step {mean}"),
            });
        }
    }
    Ok(mean)
}

/// Index of the grid value nearest to `v`; exact midpoints go to the lower
/// value. Because the grid is rectangular, per-axis nearest is the nearest
/// cell in normalized 2-D distance as well.
fn nearest_index(values: &[f64], v: f64) -> usize {
    let i = values.partition_point(|&x| x < v);
    if i == 0 {
        return 0;
    }
    if i >= values.len() {
        return values.len() - 1;
    }
    let below = v - values[i - 1];
    let above = values[i] - v;
    if below <= above {
        i - 1
    } else {
        i
    }
}

/// A [`FrameSource`] replaying sweep frames from disk, snapping requested
/// parameters to the nearest grid cell.
#[derive(Debug, Clone)]
pub struct ReplayCamera {
    manifest: SweepManifest,
}

impl ReplayCamera {
    pub fn new(manifest: SweepManifest) -> Self {
        Self { manifest }
    }

    pub fn manifest(&self) -> &SweepManifest {
        &self.manifest
    }
}

impl FrameSource for ReplayCamera {
    fn capture(&mut self, params: ExposureParams) -> Result<Image, CameraError> {
        let (ei, gi) = self.manifest.nearest(params);
        self.manifest.load_frame(ei, gi)
    }

    fn quantization(&self) -> Option<[f64; 2]> {
        Some([self.manifest.exposure_step, self.manifest.gain_step])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::{synthetic_capture, Scene, SyntheticCameraModel};
    use crate::imaging::write_pnm;

    fn write_manifest(dir: &Path, rows: &[(f64, f64, &str)]) -> PathBuf {
        let mut text = String::from("exposure_ms,gain_db,path\n");
        for (e, g, p) in rows {
            text.push_str(&format!("{e},{g},{p}\n"));
        }
        let path = dir.join("sweep.csv");
        std::fs::write(&path, text).unwrap();
        path
    }

    fn small_grid(dir: &Path) -> PathBuf {
        let scene = Scene::mosaic(16, 12, 4, 0.1, 0.9, 2);
        let model = SyntheticCameraModel {
            full_well: 4.0,
            ..Default::default()
        };
        let mut rows = Vec::new();
        for &e in &[1.0, 2.0, 3.0] {
            for &g in &[0.0, 4.0] {
                let name = format!("e{e}_g{g}.pgm");
                let img = synthetic_capture(&scene, &model, ExposureParams::new(e, g));
                write_pnm(&img, dir.join(&name)).unwrap();
                rows.push((e, g, name));
            }
        }
        let rows: Vec<(f64, f64, &str)> =
            rows.iter().map(|(e, g, n)| (*e, *g, n.as_str())).collect();
        write_manifest(dir, &rows)
    }

    #[test]
    fn load_complete_grid() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = SweepManifest::load(small_grid(dir.path())).unwrap();
        assert_eq!(manifest.exposures(), &[1.0, 2.0, 3.0]);
        assert_eq!(manifest.gains(), &[0.0, 4.0]);
        assert_eq!(manifest.exposure_step(), 1.0);
        assert_eq!(manifest.gain_step(), 4.0);
    }

    #[test]
    fn incomplete_grid_lists_missing_cells() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_manifest(
            dir.path(),
            &[
                (1.0, 0.0, "a.pgm"),
                (1.0, 2.0, "b.pgm"),
                (2.0, 0.0, "c.pgm"),
            ],
        );
        match SweepManifest::load(&path).unwrap_err() {
            CameraError::IncompleteGrid { missing } => assert_eq!(missing, vec![(2.0, 2.0)]),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn duplicate_and_nonuniform_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let dup = write_manifest(dir.path(), &[(1.0, 0.0, "a.pgm"), (1.0, 0.0, "b.pgm")]);
        assert!(matches!(
            SweepManifest::load(&dup).unwrap_err(),
            CameraError::DuplicateEntry { .. }
        ));

        let uneven = write_manifest(
            dir.path(),
            &[
                (1.0, 0.0, "a.pgm"),
                (2.0, 0.0, "b.pgm"),
                (10.0, 0.0, "c.pgm"),
            ],
        );
        assert!(matches!(
            SweepManifest::load(&uneven).unwrap_err(),
            CameraError::NonUniformGrid {
                axis: "exposure",
                ..
            }
        ));
    }

    #[test]
    fn replay_exact_hit_and_snapping() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = SweepManifest::load(small_grid(dir.path())).unwrap();
        let mut camera = ReplayCamera::new(manifest.clone());

        let exact = camera.capture(ExposureParams::new(2.0, 4.0)).unwrap();
        assert_eq!(exact, manifest.load_frame(1, 1).unwrap());

        // Midway between exposures 1 and 2: the tie goes to the smaller one.
        let tied = camera.capture(ExposureParams::new(1.5, 0.0)).unwrap();
        assert_eq!(tied, manifest.load_frame(0, 0).unwrap());

        // Beyond the hull: clamped to the max-gain row.
        let clamped = camera.capture(ExposureParams::new(3.0, 99.0)).unwrap();
        assert_eq!(clamped, manifest.load_frame(2, 1).unwrap());
    }

    #[test]
    fn replay_is_idempotent() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = SweepManifest::load(small_grid(dir.path())).unwrap();
        let mut camera = ReplayCamera::new(manifest);
        let p = ExposureParams::new(2.4, 1.0);
        assert_eq!(camera.capture(p).unwrap(), camera.capture(p).unwrap());
    }

    #[test]
    fn missing_file_error_names_path() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_manifest(dir.path(), &[(1.0, 0.0, "gone.pgm")]);
        let manifest = SweepManifest::load(&path).unwrap();
        match manifest.load_frame(0, 0).unwrap_err() {
            CameraError::Io { path, .. } => assert!(path.ends_with("gone.pgm")),
            other => panic!("unexpected error {other:?}"),
        }
    }
}
