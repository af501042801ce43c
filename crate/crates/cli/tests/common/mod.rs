//! Shared fixtures for CLI and acceptance tests.

use std::path::{Path, PathBuf};
use std::process::Output;

use aec_core::camera::{synthetic_capture, Scene, SyntheticCameraModel};
use aec_core::controller::ExposureParams;
use aec_core::imaging::write_pnm;

pub fn aec() -> &'static str {
    env!("CARGO_BIN_EXE_aec")
}

pub fn run_in(dir: &Path, args: &[&str]) -> Output {
    std::process::Command::new(aec())
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary must run")
}

pub fn stdout_str(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("stdout must be UTF-8")
}

pub fn stderr_str(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).expect("stderr must be UTF-8")
}

/// The reference synthetic setup used across closed-loop tests: a mosaic of
/// flat blocks spanning a wide radiance range, under a sensor whose read
/// noise grows linearly with gain. At gain 0 even the longest exposure stays
/// dim, so the best operating point needs some gain, mirroring an indoor
/// scene.
pub fn reference_scene() -> Scene {
    Scene::mosaic(160, 120, 16, 0.02, 0.9, 12345)
}

pub fn reference_model(seed: u64) -> SyntheticCameraModel {
    SyntheticCameraModel {
        full_well: 5.4,
        read_noise_sigma: 0.3,
        noise_gain_exponent: 1.0,
        rng_seed: seed,
    }
}

/// 25 exposures x 22 gains, the sweep grid shape used by the convergence
/// and ablation studies.
pub fn sweep_grid() -> (Vec<f64>, Vec<f64>) {
    let exposures = (0..25).map(|i| 0.1 + 0.3 * i as f64).collect();
    let gains = (0..22).map(|j| j as f64).collect();
    (exposures, gains)
}

/// Renders a synthetic sweep into `dir` and writes its manifest CSV.
pub fn write_synthetic_sweep(
    dir: &Path,
    scene: &Scene,
    model: &SyntheticCameraModel,
    exposures: &[f64],
    gains: &[f64],
) -> PathBuf {
    let mut manifest = String::from("exposure_ms,gain_db,path\n");
    for (ei, &e) in exposures.iter().enumerate() {
        for (gi, &g) in gains.iter().enumerate() {
            let name = format!("frame_{ei:02}_{gi:02}.pgm");
            let img = synthetic_capture(scene, model, ExposureParams::new(e, g));
            write_pnm(&img, dir.join(&name)).expect("write frame");
            manifest.push_str(&format!("{e},{g},{name}\n"));
        }
    }
    let path = dir.join("manifest.csv");
    std::fs::write(&path, manifest).expect("write manifest");
    path
}

/// Parses a CSV file, checking it is rectangular, and returns (header, rows).
pub fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut reader = csv::Reader::from_path(path).expect("csv must open");
    let header: Vec<String> = reader
        .headers()
        .expect("csv must have a header")
        .iter()
        .map(String::from)
        .collect();
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.expect("csv must parse");
        assert_eq!(
            record.len(),
            header.len(),
            "ragged csv row in {}",
            path.display()
        );
        rows.push(record.iter().map(String::from).collect());
    }
    (header, rows)
}
