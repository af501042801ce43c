//! Implementations of the five subcommands.

use std::path::{Path, PathBuf};

use aec_core::camera::{
    self, evaluate_manifest, MetricSurface, ReplayCamera, SurfaceCamera, SurfaceTerm,
    SweepManifest, SyntheticCamera, SyntheticCameraModel,
};
use aec_core::camera::{MeteredCamera, Scene};
use aec_core::controller::{self, ExposureParams, Objective, ParamBounds};
use aec_core::imaging::read_pnm;
use aec_core::metric::{self, QualityBreakdown};

use crate::config::{CameraKind, RunConfig};
use crate::output::sig6;
use crate::CliError;

fn out_dir(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    let dir = cfg.out.clone().unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir).map_err(|e| {
        CliError::runtime(format!("cannot create output dir {}: {e}", dir.display()))
    })?;
    Ok(dir)
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>, CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)
            .map_err(|e| CliError::runtime(format!("cannot create {}: {e}", parent.display())))?;
    }
    csv::Writer::from_path(path)
        .map_err(|e| CliError::runtime(format!("cannot write {}: {e}", path.display())))
}

fn finish(mut w: csv::Writer<std::fs::File>, path: &Path) -> Result<(), CliError> {
    w.flush()
        .map_err(|e| CliError::runtime(format!("cannot write {}: {e}", path.display())))
}

pub fn score(image: &Path, csv_out: Option<&Path>, cfg: &RunConfig) -> Result<(), CliError> {
    let img = read_pnm(image)
        .map_err(|e| CliError::input(format!("cannot score {}: {e}", image.display())))?;
    let b = metric::evaluate(&img, &cfg.metric)
        .map_err(|e| CliError::input(format!("cannot score {}: {e}", image.display())))?;
    println!("l_gradient {}", sig6(b.l_gradient));
    println!("l_entropy {}", sig6(b.l_entropy));
    println!("sigma_noise {}", sig6(b.sigma_noise));
    println!("fused {}", sig6(b.fused));
    if let Some(path) = csv_out {
        let mut w = csv_writer(path)?;
        w.write_record(["image", "l_gradient", "l_entropy", "sigma_noise", "fused"])
            .and_then(|_| {
                w.write_record([
                    image.display().to_string(),
                    sig6(b.l_gradient),
                    sig6(b.l_entropy),
                    sig6(b.sigma_noise),
                    sig6(b.fused),
                ])
            })
            .map_err(|e| CliError::runtime(format!("cannot write {}: {e}", path.display())))?;
        finish(w, path)?;
    }
    Ok(())
}

fn breakdown_fields(b: &QualityBreakdown) -> [String; 4] {
    [
        sig6(b.l_gradient),
        sig6(b.l_entropy),
        sig6(b.sigma_noise),
        sig6(b.fused),
    ]
}

pub fn sweep(manifest_path: &Path, cfg: &RunConfig) -> Result<(), CliError> {
    let manifest = SweepManifest::load(manifest_path).map_err(CliError::input_from)?;
    let eval = evaluate_manifest(&manifest, &cfg.metric).map_err(CliError::input_from)?;

    let mut rows: Vec<(f64, f64, QualityBreakdown)> = manifest
        .cells()
        .map(|(ei, gi, e, g)| (e, g, *eval.breakdown(ei, gi)))
        .collect();
    // Fused descending; ties go to lower exposure, then lower gain.
    rows.sort_by(|a, b| {
        b.2.fused
            .total_cmp(&a.2.fused)
            .then(a.0.total_cmp(&b.0))
            .then(a.1.total_cmp(&b.1))
    });

    let out = out_dir(cfg)?.join("sweep.csv");
    let mut w = csv_writer(&out)?;
    w.write_record([
        "exposure_ms",
        "gain_db",
        "l_gradient",
        "l_entropy",
        "sigma_noise",
        "fused",
    ])
    .map_err(|e| CliError::runtime(e.to_string()))?;
    for (e, g, b) in &rows {
        let fields = breakdown_fields(b);
        w.write_record([
            e.to_string(),
            g.to_string(),
            fields[0].clone(),
            fields[1].clone(),
            fields[2].clone(),
            fields[3].clone(),
        ])
        .map_err(|e| CliError::runtime(e.to_string()))?;
    }
    finish(w, &out)?;

    let (e, g, b) = &rows[0];
    println!(
        "best exposure_ms={} gain_db={} fused={}",
        e,
        g,
        sig6(b.fused)
    );
    println!("wrote {}", out.display());
    Ok(())
}

/// Builds the objective the controller drives, together with default bounds
/// when the configuration leaves them unset.
fn build_objective(cfg: &RunConfig) -> Result<(Box<dyn Objective>, ParamBounds), CliError> {
    let manifest = || -> Result<SweepManifest, CliError> {
        let path =
            cfg.camera.manifest.as_ref().ok_or_else(|| {
                CliError::runtime("camera.manifest is required for this camera kind")
            })?;
        SweepManifest::load(path).map_err(CliError::runtime_from)
    };
    let hull = |m: &SweepManifest| {
        ParamBounds::new(
            (m.exposures()[0], *m.exposures().last().unwrap()),
            (m.gains()[0], *m.gains().last().unwrap()),
        )
    };
    match cfg.camera.kind {
        CameraKind::Synthetic => {
            let scene_path = cfg.camera.scene.as_ref().ok_or_else(|| {
                CliError::runtime("camera.scene is required for the synthetic camera")
            })?;
            let scene_img = read_pnm(scene_path).map_err(|e| {
                CliError::runtime(format!("cannot load scene {}: {e}", scene_path.display()))
            })?;
            let model = SyntheticCameraModel {
                full_well: cfg.camera.full_well,
                read_noise_sigma: cfg.camera.read_noise_sigma,
                noise_gain_exponent: cfg.camera.noise_gain_exponent,
                rng_seed: cfg.camera.seed.unwrap_or(cfg.seed),
            };
            let camera = SyntheticCamera::new(Scene::from_image(&scene_img), model);
            let bounds = cfg.controller.bounds.unwrap_or_else(ParamBounds::outdoor);
            Ok((
                Box::new(MeteredCamera::new(camera, cfg.metric.clone())),
                bounds,
            ))
        }
        CameraKind::Replay => {
            let m = manifest()?;
            let bounds = cfg.controller.bounds.unwrap_or_else(|| hull(&m));
            Ok((
                Box::new(MeteredCamera::new(ReplayCamera::new(m), cfg.metric.clone())),
                bounds,
            ))
        }
        CameraKind::Surface => {
            let m = manifest()?;
            let bounds = cfg.controller.bounds.unwrap_or_else(|| hull(&m));
            let eval = evaluate_manifest(&m, &cfg.metric).map_err(CliError::runtime_from)?;
            let mut camera = SurfaceCamera::from_evaluation(&eval);
            if let (Some(e), Some(g)) = (
                cfg.surface_exposure_step_ms
                    .or(Some(camera.scores().exposure_step_ms)),
                cfg.surface_gain_step_db
                    .or(Some(camera.scores().gain_step_db)),
            ) {
                camera.set_steps(e, g);
            }
            Ok((Box::new(camera), bounds))
        }
    }
}

pub fn control(cfg: &RunConfig) -> Result<(), CliError> {
    let (mut objective, bounds) = build_objective(cfg)?;
    let start = cfg
        .controller
        .start
        .map(|s| bounds.clamp(s))
        .unwrap_or(ExposureParams::new(
            (bounds.exposure_ms.0 + bounds.exposure_ms.1) / 2.0,
            (bounds.gain_db.0 + bounds.gain_db.1) / 2.0,
        ));

    let out = out_dir(cfg)?.join("trace.csv");
    let write_trace = |trace: &controller::ControlTrace| -> Result<(), CliError> {
        let file = std::fs::File::create(&out)
            .map_err(|e| CliError::runtime(format!("cannot write {}: {e}", out.display())))?;
        trace
            .write_csv(std::io::BufWriter::new(file))
            .map_err(|e| CliError::runtime(format!("cannot write {}: {e}", out.display())))
    };

    match controller::run(objective.as_mut(), start, &bounds, &cfg.controller.opts) {
        Ok(result) => {
            write_trace(&result.trace)?;
            println!(
                "converged exposure_ms={} gain_db={} fused={} iterations={}",
                sig6(result.params.exposure_ms),
                sig6(result.params.gain_db),
                sig6(result.score),
                result.trace.iterations()
            );
            println!("wrote {}", out.display());
            Ok(())
        }
        Err(err) => {
            // Keep whatever the loop recorded before the camera failed.
            write_trace(&err.trace)?;
            Err(CliError::runtime(err.to_string()))
        }
    }
}

pub fn surface(manifest_path: &Path, terms: &[String], cfg: &RunConfig) -> Result<(), CliError> {
    let requested: Vec<SurfaceTerm> = if terms.is_empty() {
        vec![SurfaceTerm::Fused]
    } else {
        let mut parsed = Vec::new();
        for t in terms {
            parsed.push(SurfaceTerm::parse(t).ok_or_else(|| {
                CliError::input(format!(
                    "unknown term {t:?} (expected gradient, entropy, noise, or fused)"
                ))
            })?);
        }
        // Canonical order, duplicates dropped.
        SurfaceTerm::ALL
            .into_iter()
            .filter(|t| parsed.contains(t))
            .collect()
    };

    let manifest = SweepManifest::load(manifest_path).map_err(CliError::input_from)?;
    let eval = evaluate_manifest(&manifest, &cfg.metric).map_err(CliError::input_from)?;
    let dir = out_dir(cfg)?;

    for term in requested {
        let surface = MetricSurface::from_evaluation(&eval, term);

        let raw_path = dir.join(format!("raw_{}.csv", term.as_str()));
        let mut w = csv_writer(&raw_path)?;
        w.write_record(["exposure_ms", "gain_db", "value"])
            .map_err(|e| CliError::runtime(e.to_string()))?;
        for (ei, &e) in surface.exposures().iter().enumerate() {
            for (gi, &g) in surface.gains().iter().enumerate() {
                w.write_record([
                    e.to_string(),
                    g.to_string(),
                    sig6(surface.raw_value(ei, gi)),
                ])
                .map_err(|e| CliError::runtime(e.to_string()))?;
            }
        }
        finish(w, &raw_path)?;

        let step_e = cfg
            .surface_exposure_step_ms
            .unwrap_or(surface.exposure_step_ms);
        let step_g = cfg.surface_gain_step_db.unwrap_or(surface.gain_step_db);
        let exposures = lattice(surface.exposures(), step_e);
        let gains = lattice(surface.gains(), step_g);
        let interp_path = dir.join(format!("interp_{}.csv", term.as_str()));
        let mut w = csv_writer(&interp_path)?;
        w.write_record(["exposure_ms", "gain_db", "value"])
            .map_err(|e| CliError::runtime(e.to_string()))?;
        for &e in &exposures {
            for &g in &gains {
                let v = surface
                    .value_at(ExposureParams::new(e, g))
                    .map_err(|err| CliError::runtime(err.to_string()))?;
                w.write_record([sig6(e), sig6(g), sig6(v)])
                    .map_err(|e| CliError::runtime(e.to_string()))?;
            }
        }
        finish(w, &interp_path)?;
        println!(
            "wrote {} ({} cells) and {} ({} cells)",
            raw_path.display(),
            surface.exposures().len() * surface.gains().len(),
            interp_path.display(),
            exposures.len() * gains.len()
        );
    }
    Ok(())
}

/// Dense positions from the first knot to the last at the given step,
/// always including the last knot.
fn lattice(knots: &[f64], step: f64) -> Vec<f64> {
    let (lo, hi) = (knots[0], knots[knots.len() - 1]);
    if step <= 0.0 || hi <= lo {
        return vec![lo];
    }
    let mut out = Vec::new();
    let mut i = 0u64;
    loop {
        let v = lo + i as f64 * step;
        if v > hi - step * 1e-9 {
            break;
        }
        out.push(v);
        i += 1;
    }
    out.push(hi);
    out
}

pub fn noise_eval(
    image_dir: &Path,
    sigmas: &[f64],
    trials: usize,
    cfg: &RunConfig,
) -> Result<(), CliError> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(image_dir)
        .map_err(|e| CliError::input(format!("cannot read {}: {e}", image_dir.display())))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            matches!(
                p.extension().and_then(|e| e.to_str()),
                Some("pgm") | Some("ppm") | Some("pnm")
            )
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(CliError::input(format!(
            "no PNM images in {}",
            image_dir.display()
        )));
    }
    let mut images = Vec::with_capacity(paths.len());
    for p in &paths {
        images.push(
            read_pnm(p)
                .map_err(|e| CliError::input(format!("cannot read {}: {e}", p.display())))?,
        );
    }

    let rows = camera::noise_eval(&images, sigmas, trials, cfg.seed, &cfg.metric)
        .map_err(|e| CliError::input(e.to_string()))?;

    let out = out_dir(cfg)?.join("noise_eval.csv");
    let mut w = csv_writer(&out)?;
    w.write_record(["sigma", "s", "b", "mse", "excluded"])
        .map_err(|e| CliError::runtime(e.to_string()))?;
    for row in &rows {
        w.write_record([
            row.sigma.to_string(),
            sig6(row.s),
            sig6(row.b),
            sig6(row.mse),
            row.excluded.to_string(),
        ])
        .map_err(|e| CliError::runtime(e.to_string()))?;
        println!(
            "sigma={} s={} b={} mse={} excluded={}",
            row.sigma,
            sig6(row.s),
            sig6(row.b),
            sig6(row.mse),
            row.excluded
        );
    }
    finish(w, &out)?;
    println!("wrote {}", out.display());
    Ok(())
}
