//! Command drivers behind the `spdc` binary: simulate, sweep, fit-beam.
//! Each command is a deterministic function of its configuration and inputs
//! and writes every output it promises before returning; failures carry the
//! stage they occurred in.

use crate::config::{config_entries, RunConfig, SweepKind};
use crate::manifest::RunManifest;
use spdc_core::{
    detect_dual_rings, find_critical_width, fit_beam_profile, radial_profile, sweep_pump_width,
    sweep_vortex_order, BeamFit, FitOptions, IntensityGrid, PipelineSetup, ProfileMode,
    RadialProfile, RingMetrics, SweepFailure, SynthesisPath,
};
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] crate::config::ConfigError),
    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<dyn std::error::Error + Send + Sync>,
    },
    #[error("{stage}: {path}: {source}")]
    Io {
        stage: &'static str,
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("sweep finished with {failed} failed row(s); see the table's failure markers")]
    SweepRowsFailed { failed: usize },
}

fn stage<E: std::error::Error + Send + Sync + 'static>(
    name: &'static str,
) -> impl FnOnce(E) -> CliError {
    move |e| CliError::Stage {
        stage: name,
        source: Box::new(e),
    }
}

fn write_file(stage: &'static str, path: &Path, contents: &[u8]) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|source| CliError::Io {
        stage,
        path: path.to_path_buf(),
        source,
    })
}

fn ensure_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|source| CliError::Io {
        stage: "write",
        path: path.to_path_buf(),
        source,
    })
}

fn pipeline(cfg: &RunConfig, direct: bool) -> Result<PipelineSetup, CliError> {
    let mut setup = PipelineSetup::new(cfg.crystal()?, cfg.detector()?);
    setup.band = cfg.band()?;
    setup.path = if direct {
        SynthesisPath::Direct
    } else {
        SynthesisPath::Convolution
    };
    Ok(setup)
}

fn echo_config(manifest: &mut RunManifest, cfg: &RunConfig) {
    for (key, value) in config_entries(cfg) {
        manifest.set(&format!("config.{key}"), value);
    }
}

fn profile_csv(profile: &RadialProfile) -> String {
    let mut out = String::from("radius_mm,intensity\n");
    for (r, v) in profile.radii_mm.iter().zip(&profile.intensity) {
        let _ = writeln!(out, "{r},{v}");
    }
    out
}

fn metrics_csv(metrics: &RingMetrics) -> String {
    let peaks = metrics
        .peak_radii_mm
        .iter()
        .map(|r| r.to_string())
        .collect::<Vec<_>>()
        .join(";");
    let sigma = metrics
        .sigma_ring_mm
        .map(|s| s.to_string())
        .unwrap_or_default();
    format!(
        "dual_ring,fwhm_mm,separation_mm,sigma_ring_mm,peak_radii_mm\n{},{},{},{},{}\n",
        metrics.dual_ring, metrics.fwhm_mm, metrics.separation_mm, sigma, peaks
    )
}

/// Run the full simulate pipeline and write `ring.pgm`, `ring.csv`,
/// `profile.csv`, `metrics.csv` and `manifest.txt` into `out_dir`.
pub fn cmd_simulate(
    cfg: &RunConfig,
    out_dir: &Path,
    direct: bool,
) -> Result<RunManifest, CliError> {
    ensure_dir(out_dir)?;
    let mut manifest = RunManifest::new();
    echo_config(&mut manifest, cfg);
    manifest.set("command", if direct { "simulate --direct" } else { "simulate" });

    let setup = pipeline(cfg, direct)?;
    let spec = cfg.beam_spec()?;

    let t = Instant::now();
    let kernels = setup.kernels().map_err(stage("kernels"))?;
    manifest.set_timing("kernels", t.elapsed());

    let t = Instant::now();
    let pump = setup.pump_grid(&spec).map_err(stage("render"))?;
    manifest.set_timing("render", t.elapsed());

    let t = Instant::now();
    let image = setup.synthesize(&pump, &kernels).map_err(stage("synthesize"))?;
    manifest.set_timing("synthesize", t.elapsed());

    let t = Instant::now();
    let profile = radial_profile(&image, setup.detector.center_mm, ProfileMode::Azimuthal)
        .map_err(stage("profile"))?;
    manifest.set_timing("profile", t.elapsed());

    let t = Instant::now();
    let metrics = detect_dual_rings(&profile).map_err(stage("metrics"))?;
    manifest.set_timing("metrics", t.elapsed());

    let t = Instant::now();
    let mut pgm = Vec::new();
    image.write_pgm16(&mut pgm).map_err(stage("write"))?;
    write_file("write", &out_dir.join("ring.pgm"), &pgm)?;
    let mut csv = Vec::new();
    image.write_csv(&mut csv).map_err(stage("write"))?;
    write_file("write", &out_dir.join("ring.csv"), &csv)?;
    write_file("write", &out_dir.join("profile.csv"), profile_csv(&profile).as_bytes())?;
    write_file("write", &out_dir.join("metrics.csv"), metrics_csv(&metrics).as_bytes())?;
    manifest.set_timing("write", t.elapsed());

    for name in ["ring.pgm", "ring.csv", "profile.csv", "metrics.csv"] {
        manifest
            .record_file(name, &out_dir.join(name))
            .map_err(|source| CliError::Io {
                stage: "manifest",
                path: out_dir.join(name),
                source,
            })?;
    }
    let mut out = Vec::new();
    manifest.write_to(&mut out).map_err(stage("manifest"))?;
    write_file("manifest", &out_dir.join("manifest.txt"), &out)?;
    Ok(manifest)
}

fn failure_marker(parameter: &str, failure: &SweepFailure) -> String {
    format!("# error {parameter}={}: {}\n", failure.value, failure.message)
}

/// Run one of the three parameter sweeps and write its CSV plus manifest.
/// Returns an error (after writing the partial table) if any row failed.
pub fn cmd_sweep(cfg: &RunConfig, out_dir: &Path, kind: SweepKind) -> Result<RunManifest, CliError> {
    if let Some(configured) = cfg.sweep.kind {
        if configured != kind {
            return Err(crate::config::ConfigError::Invalid {
                key: "sweep.kind".into(),
                constraint: format!("config declares `{configured}` but `{kind}` was requested"),
            }
            .into());
        }
    }
    ensure_dir(out_dir)?;
    let mut manifest = RunManifest::new();
    echo_config(&mut manifest, cfg);
    manifest.set("command", format!("sweep --kind {kind}"));
    let setup = pipeline(cfg, false)?;

    let t = Instant::now();
    let (csv, csv_name, failed) = match kind {
        SweepKind::Width => {
            let sweep =
                sweep_pump_width(&setup, &cfg.sweep.sigma_list_mm).map_err(stage("sweep"))?;
            let mut out = String::from("sigma_pump_mm,sigma_ring_mm\n");
            for row in &sweep.rows {
                let _ = writeln!(out, "{},{}", row.sigma_pump_mm, row.sigma_ring_mm);
            }
            for failure in &sweep.failures {
                out.push_str(&failure_marker("sigma_pump_mm", failure));
            }
            if let Some(fit) = sweep.line_fit {
                let _ = writeln!(
                    out,
                    "# slope={} intercept={} r2={}",
                    fit.slope, fit.intercept, fit.r_squared
                );
            }
            (out, "sweep_width.csv", sweep.failures.len())
        }
        SweepKind::Order => {
            let sweep = sweep_vortex_order(&setup, &cfg.sweep.l_list, cfg.beam.sigma_mm)
                .map_err(stage("sweep"))?;
            let mut out = String::from("l,fwhm_mm,separation_mm\n");
            for row in &sweep.rows {
                let _ = writeln!(out, "{},{},{}", row.order, row.fwhm_mm, row.separation_mm);
            }
            for failure in &sweep.failures {
                out.push_str(&failure_marker("l", failure));
            }
            (out, "sweep_order.csv", sweep.failures.len())
        }
        SweepKind::Critical => {
            let sweep = find_critical_width(
                &setup,
                cfg.sweep.l,
                (cfg.sweep.sigma_min_mm, cfg.sweep.sigma_max_mm),
                cfg.sweep.steps,
            )
            .map_err(stage("sweep"))?;
            let mut out = String::from("sigma_mm,fwhm_mm\n");
            for &(sigma, fwhm_mm) in &sweep.rows {
                let _ = writeln!(out, "{sigma},{fwhm_mm}");
            }
            for failure in &sweep.failures {
                out.push_str(&failure_marker("sigma_mm", failure));
            }
            let _ = writeln!(
                out,
                "# sigma_crit_mm={} plateau_fwhm_mm={}",
                sweep.sigma_crit_mm, sweep.plateau_fwhm_mm
            );
            (out, "sweep_critical.csv", sweep.failures.len())
        }
    };
    manifest.set_timing("sweep", t.elapsed());

    write_file("write", &out_dir.join(csv_name), csv.as_bytes())?;
    manifest
        .record_file(csv_name, &out_dir.join(csv_name))
        .map_err(|source| CliError::Io {
            stage: "manifest",
            path: out_dir.join(csv_name),
            source,
        })?;
    let mut out = Vec::new();
    manifest.write_to(&mut out).map_err(stage("manifest"))?;
    write_file("manifest", &out_dir.join("manifest.txt"), &out)?;
    if failed > 0 {
        return Err(CliError::SweepRowsFailed { failed });
    }
    Ok(manifest)
}

/// Fit a beam of known order to an image file (PGM or grid CSV) and write
/// the fitted parameters as CSV. The fitted parameters are also printed.
pub fn cmd_fit_beam(
    image_path: &Path,
    order: u32,
    pitch_mm: Option<f64>,
    out_dir: &Path,
) -> Result<(BeamFit, PathBuf), CliError> {
    let read_stage = "read";
    let data = fs::read(image_path).map_err(|source| CliError::Io {
        stage: read_stage,
        path: image_path.to_path_buf(),
        source,
    })?;
    let extension = image_path
        .extension()
        .and_then(|e| e.to_str())
        .unwrap_or("")
        .to_ascii_lowercase();
    let grid = match extension.as_str() {
        "csv" => IntensityGrid::read_csv(&data[..]).map_err(stage(read_stage))?,
        // PGM carries no physical scale; the pitch is supplied (default 1.0,
        // i.e. widths in pixels)
        _ => IntensityGrid::read_pgm(&data[..], pitch_mm.unwrap_or(1.0)).map_err(stage(read_stage))?,
    };
    let fit = fit_beam_profile(&grid, order, &FitOptions::default()).map_err(stage("fit"))?;

    ensure_dir(out_dir)?;
    let csv_path = out_dir.join("fit_beam.csv");
    let csv = format!(
        "sigma_mm,i0,center_x_mm,center_y_mm,offset,rms_residual,iterations\n{},{},{},{},{},{},{}\n",
        fit.sigma_mm,
        fit.i0,
        fit.center_mm.0,
        fit.center_mm.1,
        fit.offset,
        fit.rms_residual,
        fit.iterations
    );
    write_file("write", &csv_path, csv.as_bytes())?;
    let mut stdout = std::io::stdout().lock();
    let _ = writeln!(
        stdout,
        "sigma_mm = {}\ni0 = {}\ncenter_mm = ({}, {})\nrms_residual = {}",
        fit.sigma_mm, fit.i0, fit.center_mm.0, fit.center_mm.1, fit.rms_residual
    );
    Ok((fit, csv_path))
}

/// The pipeline a `simulate` run uses, for callers that want the in-memory
/// results without the file outputs.
pub fn pipeline_for(cfg: &RunConfig, direct: bool) -> Result<PipelineSetup, CliError> {
    pipeline(cfg, direct)
}
