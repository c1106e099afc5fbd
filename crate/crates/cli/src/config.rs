//! Flat line-oriented run configuration: `section.key = value` with `#`
//! comments, no external parser. Every key has a default, so the empty file
//! is a valid configuration; unknown keys are rejected with their line
//! number.

use spdc_core::{
    Aperture, BeamSpec, DetectorGeometry, FilterBand, SellmeierCoefficients, UniaxialCrystal,
};
use std::fmt;
use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("invalid value for `{key}`: {constraint}")]
    Invalid { key: String, constraint: String },
}

/// Which parameter study a sweep block describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepKind {
    Width,
    Order,
    Critical,
}

impl SweepKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepKind::Width => "width",
            SweepKind::Order => "order",
            SweepKind::Critical => "critical",
        }
    }
}

impl fmt::Display for SweepKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrystalConfig {
    pub sellmeier_o: SellmeierCoefficients,
    pub sellmeier_e: SellmeierCoefficients,
    pub theta_deg: f64,
    pub aperture_mm: (f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeamConfig {
    pub l: u32,
    pub sigma_mm: f64,
    pub i0: f64,
    pub center_mm: (f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterConfig {
    pub center_nm: f64,
    pub half_width_nm: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeometryConfig {
    pub z_mm: f64,
    pub nx: usize,
    pub ny: usize,
    pub pitch_mm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub kind: Option<SweepKind>,
    pub sigma_list_mm: Vec<f64>,
    pub l_list: Vec<u32>,
    pub l: u32,
    pub sigma_min_mm: f64,
    pub sigma_max_mm: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSection {
    pub output_dir: PathBuf,
    pub seed: u64,
}

/// A full validated run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub crystal: CrystalConfig,
    pub beam: BeamConfig,
    pub filter: FilterConfig,
    pub geometry: GeometryConfig,
    pub sweep: SweepConfig,
    pub run: RunSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            crystal: CrystalConfig {
                sellmeier_o: SellmeierCoefficients {
                    a: 2.7359,
                    b: 0.01878,
                    c: 0.01822,
                    d: 0.01354,
                },
                sellmeier_e: SellmeierCoefficients {
                    a: 2.3753,
                    b: 0.01224,
                    c: 0.01667,
                    d: 0.01516,
                },
                theta_deg: 29.7,
                aperture_mm: (6.0, 6.0),
            },
            beam: BeamConfig {
                l: 0,
                sigma_mm: 0.5,
                i0: 1.0,
                center_mm: (0.0, 0.0),
            },
            filter: FilterConfig {
                center_nm: 810.0,
                half_width_nm: 5.0,
                samples: 11,
            },
            geometry: GeometryConfig {
                z_mm: 100.0,
                nx: 512,
                ny: 512,
                pitch_mm: 0.05,
            },
            sweep: SweepConfig {
                kind: None,
                sigma_list_mm: vec![0.3, 0.6, 0.9, 1.2, 1.5],
                l_list: vec![0, 1, 3, 5],
                l: 2,
                sigma_min_mm: 0.05,
                sigma_max_mm: 1.0,
                steps: 20,
            },
            run: RunSection {
                output_dir: PathBuf::from("out"),
                seed: 0,
            },
        }
    }
}

fn invalid(key: &str, constraint: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key: key.into(),
        constraint: constraint.into(),
    }
}

fn parse_scalar<T: std::str::FromStr>(key: &str, value: &str, what: &str) -> Result<T, ConfigError> {
    value
        .parse()
        .map_err(|_| invalid(key, format!("expected {what}, got `{value}`")))
}

fn parse_pair(key: &str, value: &str) -> Result<(f64, f64), ConfigError> {
    let parts: Vec<&str> = value.split_whitespace().collect();
    if parts.len() != 2 {
        return Err(invalid(key, format!("expected two numbers, got `{value}`")));
    }
    Ok((
        parse_scalar(key, parts[0], "a number")?,
        parse_scalar(key, parts[1], "a number")?,
    ))
}

fn parse_list_f64(key: &str, value: &str) -> Result<Vec<f64>, ConfigError> {
    value
        .split_whitespace()
        .map(|p| parse_scalar(key, p, "a number"))
        .collect()
}

fn parse_list_u32(key: &str, value: &str) -> Result<Vec<u32>, ConfigError> {
    value
        .split_whitespace()
        .map(|p| parse_scalar(key, p, "a non-negative integer"))
        .collect()
}

/// Parse a configuration file, applying defaults for absent keys and
/// validating every constraint.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let mut cfg = RunConfig::default();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Parse {
            line: line_no,
            message: format!("expected `key = value`, got `{line}`"),
        })?;
        let key = key.trim();
        let value = value.trim();
        if value.is_empty() {
            return Err(ConfigError::Parse {
                line: line_no,
                message: format!("empty value for `{key}`"),
            });
        }
        apply_key(&mut cfg, key, value).map_err(|e| match e {
            ConfigError::UnknownKey { key, .. } => ConfigError::UnknownKey { line: line_no, key },
            other => other,
        })?;
    }
    validate(&cfg)?;
    Ok(cfg)
}

fn apply_key(cfg: &mut RunConfig, key: &str, value: &str) -> Result<(), ConfigError> {
    match key {
        "crystal.sellmeier_o.a" => cfg.crystal.sellmeier_o.a = parse_scalar(key, value, "a number")?,
        "crystal.sellmeier_o.b" => cfg.crystal.sellmeier_o.b = parse_scalar(key, value, "a number")?,
        "crystal.sellmeier_o.c" => cfg.crystal.sellmeier_o.c = parse_scalar(key, value, "a number")?,
        "crystal.sellmeier_o.d" => cfg.crystal.sellmeier_o.d = parse_scalar(key, value, "a number")?,
        "crystal.sellmeier_e.a" => cfg.crystal.sellmeier_e.a = parse_scalar(key, value, "a number")?,
        "crystal.sellmeier_e.b" => cfg.crystal.sellmeier_e.b = parse_scalar(key, value, "a number")?,
        "crystal.sellmeier_e.c" => cfg.crystal.sellmeier_e.c = parse_scalar(key, value, "a number")?,
        "crystal.sellmeier_e.d" => cfg.crystal.sellmeier_e.d = parse_scalar(key, value, "a number")?,
        "crystal.theta_deg" => cfg.crystal.theta_deg = parse_scalar(key, value, "a number")?,
        "crystal.aperture_mm" => cfg.crystal.aperture_mm = parse_pair(key, value)?,
        "beam.l" => cfg.beam.l = parse_scalar(key, value, "a non-negative integer")?,
        "beam.sigma_mm" => cfg.beam.sigma_mm = parse_scalar(key, value, "a number")?,
        "beam.i0" => cfg.beam.i0 = parse_scalar(key, value, "a number")?,
        "beam.center_mm" => cfg.beam.center_mm = parse_pair(key, value)?,
        "filter.center_nm" => cfg.filter.center_nm = parse_scalar(key, value, "a number")?,
        "filter.half_width_nm" => cfg.filter.half_width_nm = parse_scalar(key, value, "a number")?,
        "filter.samples" => cfg.filter.samples = parse_scalar(key, value, "a positive integer")?,
        "geometry.z_mm" => cfg.geometry.z_mm = parse_scalar(key, value, "a number")?,
        "geometry.nx" => cfg.geometry.nx = parse_scalar(key, value, "a positive integer")?,
        "geometry.ny" => cfg.geometry.ny = parse_scalar(key, value, "a positive integer")?,
        "geometry.pitch_mm" => cfg.geometry.pitch_mm = parse_scalar(key, value, "a number")?,
        "sweep.kind" => {
            cfg.sweep.kind = Some(match value {
                "width" => SweepKind::Width,
                "order" => SweepKind::Order,
                "critical" => SweepKind::Critical,
                other => {
                    return Err(invalid(key, format!(
                        "expected width, order or critical, got `{other}`"
                    )))
                }
            })
        }
        "sweep.sigma_list_mm" => cfg.sweep.sigma_list_mm = parse_list_f64(key, value)?,
        "sweep.l_list" => cfg.sweep.l_list = parse_list_u32(key, value)?,
        "sweep.l" => cfg.sweep.l = parse_scalar(key, value, "a non-negative integer")?,
        "sweep.sigma_min_mm" => cfg.sweep.sigma_min_mm = parse_scalar(key, value, "a number")?,
        "sweep.sigma_max_mm" => cfg.sweep.sigma_max_mm = parse_scalar(key, value, "a number")?,
        "sweep.steps" => cfg.sweep.steps = parse_scalar(key, value, "a positive integer")?,
        "run.output_dir" => cfg.run.output_dir = PathBuf::from(value),
        "run.seed" => cfg.run.seed = parse_scalar(key, value, "a non-negative integer")?,
        other => {
            return Err(ConfigError::UnknownKey {
                line: 0,
                key: other.into(),
            })
        }
    }
    Ok(())
}

fn validate(cfg: &RunConfig) -> Result<(), ConfigError> {
    let c = &cfg.crystal;
    if !(c.theta_deg > 0.0 && c.theta_deg < 90.0) {
        return Err(invalid("crystal.theta_deg", "must lie in (0, 90) degrees"));
    }
    if !(c.aperture_mm.0 > 0.0 && c.aperture_mm.1 > 0.0) {
        return Err(invalid("crystal.aperture_mm", "both extents must be positive"));
    }
    if !(cfg.beam.sigma_mm > 0.0) {
        return Err(invalid("beam.sigma_mm", "must be positive"));
    }
    if !(cfg.beam.i0 > 0.0) {
        return Err(invalid("beam.i0", "must be positive"));
    }
    if !(cfg.filter.center_nm > 0.0) {
        return Err(invalid("filter.center_nm", "must be positive"));
    }
    if cfg.filter.half_width_nm < 0.0 {
        return Err(invalid("filter.half_width_nm", "must be non-negative"));
    }
    if cfg.filter.samples == 0 || cfg.filter.samples % 2 == 0 {
        return Err(invalid("filter.samples", "must be an odd positive integer"));
    }
    if !(cfg.geometry.z_mm > 0.0) {
        return Err(invalid("geometry.z_mm", "must be positive"));
    }
    if cfg.geometry.nx < 16 || cfg.geometry.ny < 16 {
        return Err(invalid("geometry.nx/ny", "detector must be at least 16 x 16"));
    }
    if !(cfg.geometry.pitch_mm > 0.0) {
        return Err(invalid("geometry.pitch_mm", "must be positive"));
    }
    let s = &cfg.sweep;
    if s.sigma_list_mm.is_empty()
        || s.sigma_list_mm[0] <= 0.0
        || s.sigma_list_mm.windows(2).any(|w| w[1] <= w[0])
    {
        return Err(invalid(
            "sweep.sigma_list_mm",
            "must be a positive ascending list",
        ));
    }
    if s.l_list.is_empty() {
        return Err(invalid("sweep.l_list", "must not be empty"));
    }
    if !(s.sigma_min_mm > 0.0 && s.sigma_max_mm > s.sigma_min_mm) {
        return Err(invalid(
            "sweep.sigma_min_mm/sigma_max_mm",
            "need 0 < min < max",
        ));
    }
    if s.steps < 4 {
        return Err(invalid("sweep.steps", "need at least 4 steps"));
    }
    Ok(())
}

/// Serialize a configuration with every key explicit; parsing the output
/// reproduces the configuration exactly.
pub fn serialize_config(cfg: &RunConfig) -> String {
    let mut out = String::new();
    for (key, value) in config_entries(cfg) {
        out.push_str(&format!("{key} = {value}\n"));
    }
    out
}

/// All `(key, value)` pairs in canonical order.
pub fn config_entries(cfg: &RunConfig) -> Vec<(String, String)> {
    let mut entries: Vec<(String, String)> = Vec::new();
    let mut push = |k: &str, v: String| entries.push((k.to_string(), v));
    let c = &cfg.crystal;
    push("crystal.sellmeier_o.a", format!("{}", c.sellmeier_o.a));
    push("crystal.sellmeier_o.b", format!("{}", c.sellmeier_o.b));
    push("crystal.sellmeier_o.c", format!("{}", c.sellmeier_o.c));
    push("crystal.sellmeier_o.d", format!("{}", c.sellmeier_o.d));
    push("crystal.sellmeier_e.a", format!("{}", c.sellmeier_e.a));
    push("crystal.sellmeier_e.b", format!("{}", c.sellmeier_e.b));
    push("crystal.sellmeier_e.c", format!("{}", c.sellmeier_e.c));
    push("crystal.sellmeier_e.d", format!("{}", c.sellmeier_e.d));
    push("crystal.theta_deg", format!("{}", c.theta_deg));
    push(
        "crystal.aperture_mm",
        format!("{} {}", c.aperture_mm.0, c.aperture_mm.1),
    );
    push("beam.l", format!("{}", cfg.beam.l));
    push("beam.sigma_mm", format!("{}", cfg.beam.sigma_mm));
    push("beam.i0", format!("{}", cfg.beam.i0));
    push(
        "beam.center_mm",
        format!("{} {}", cfg.beam.center_mm.0, cfg.beam.center_mm.1),
    );
    push("filter.center_nm", format!("{}", cfg.filter.center_nm));
    push("filter.half_width_nm", format!("{}", cfg.filter.half_width_nm));
    push("filter.samples", format!("{}", cfg.filter.samples));
    push("geometry.z_mm", format!("{}", cfg.geometry.z_mm));
    push("geometry.nx", format!("{}", cfg.geometry.nx));
    push("geometry.ny", format!("{}", cfg.geometry.ny));
    push("geometry.pitch_mm", format!("{}", cfg.geometry.pitch_mm));
    if let Some(kind) = cfg.sweep.kind {
        push("sweep.kind", kind.to_string());
    }
    push(
        "sweep.sigma_list_mm",
        cfg.sweep
            .sigma_list_mm
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(" "),
    );
    push(
        "sweep.l_list",
        cfg.sweep
            .l_list
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(" "),
    );
    push("sweep.l", format!("{}", cfg.sweep.l));
    push("sweep.sigma_min_mm", format!("{}", cfg.sweep.sigma_min_mm));
    push("sweep.sigma_max_mm", format!("{}", cfg.sweep.sigma_max_mm));
    push("sweep.steps", format!("{}", cfg.sweep.steps));
    push(
        "run.output_dir",
        cfg.run.output_dir.to_string_lossy().into_owned(),
    );
    push("run.seed", format!("{}", cfg.run.seed));
    entries
}

impl RunConfig {
    /// Crystal with the configured Sellmeier branches, cut angle and
    /// aperture.
    pub fn crystal(&self) -> Result<UniaxialCrystal, ConfigError> {
        UniaxialCrystal::new(
            self.crystal.sellmeier_o,
            self.crystal.sellmeier_e,
            self.crystal.theta_deg.to_radians(),
            Aperture {
                width_mm: self.crystal.aperture_mm.0,
                height_mm: self.crystal.aperture_mm.1,
            },
        )
        .map_err(|e| invalid("crystal", e.to_string()))
    }

    pub fn beam_spec(&self) -> Result<BeamSpec, ConfigError> {
        BeamSpec::new(
            self.beam.l,
            self.beam.sigma_mm,
            self.beam.i0,
            self.beam.center_mm,
        )
        .map_err(|e| invalid("beam", e.to_string()))
    }

    pub fn band(&self) -> Result<FilterBand, ConfigError> {
        FilterBand::uniform(
            self.filter.center_nm,
            self.filter.half_width_nm,
            self.filter.samples,
        )
        .map_err(|e| invalid("filter", e.to_string()))
    }

    pub fn detector(&self) -> Result<DetectorGeometry, ConfigError> {
        DetectorGeometry::new(
            self.geometry.z_mm,
            self.geometry.nx,
            self.geometry.ny,
            self.geometry.pitch_mm,
            (0.0, 0.0),
        )
        .map_err(|e| invalid("geometry", e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_all_defaults() {
        let cfg = parse_config("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.crystal.theta_deg, 29.7);
        assert_eq!(cfg.geometry.nx, 512);
        assert_eq!(cfg.filter.samples, 11);
    }

    #[test]
    fn comments_and_blank_lines_ignored() {
        let cfg = parse_config("# comment\n\n beam.l = 3 # trailing\n").unwrap();
        assert_eq!(cfg.beam.l, 3);
    }

    #[test]
    fn negative_order_rejected() {
        let err = parse_config("beam.l = -1").unwrap_err();
        assert!(matches!(err, ConfigError::Invalid { ref key, .. } if key == "beam.l"), "{err}");
    }

    #[test]
    fn unknown_key_reports_line() {
        let err = parse_config("\nbeam.waist = 1.0\n").unwrap_err();
        assert_eq!(
            err,
            ConfigError::UnknownKey {
                line: 2,
                key: "beam.waist".into()
            }
        );
    }

    #[test]
    fn malformed_line_reports_line() {
        let err = parse_config("beam.l 3").unwrap_err();
        assert!(matches!(err, ConfigError::Parse { line: 1, .. }));
    }

    #[test]
    fn theta_converts_to_radians() {
        let cfg = parse_config("crystal.theta_deg = 29.7").unwrap();
        let crystal = cfg.crystal().unwrap();
        assert!((crystal.optic_axis_angle_rad - 29.7_f64.to_radians()).abs() < 1e-15);
    }

    #[test]
    fn validation_constraints() {
        assert!(parse_config("filter.samples = 4").is_err());
        assert!(parse_config("geometry.pitch_mm = 0").is_err());
        assert!(parse_config("sweep.sigma_list_mm = 0.5 0.4").is_err());
        assert!(parse_config("sweep.steps = 2").is_err());
        assert!(parse_config("crystal.theta_deg = 95").is_err());
    }

    #[test]
    fn round_trip_default_and_modified() {
        let cfg = RunConfig::default();
        assert_eq!(parse_config(&serialize_config(&cfg)).unwrap(), cfg);
        let text = "beam.l = 5\nbeam.sigma_mm = 1.25\nsweep.kind = critical\n\
                    geometry.z_mm = 1000\ngeometry.pitch_mm = 0.1\nrun.seed = 42\n";
        let cfg = parse_config(text).unwrap();
        assert_eq!(parse_config(&serialize_config(&cfg)).unwrap(), cfg);
    }
}
