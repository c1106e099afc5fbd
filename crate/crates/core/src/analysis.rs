//! Ring-image analysis and the parameter studies built on it.
//!
//! A synthesized (or measured) ring image is reduced to a 1-D
//! [`RadialProfile`], from which the ring width is measured two ways: a
//! Gaussian fit `A exp(-(r - R0)^2 / sigma_ring^2)` for single rings, and a
//! full-width-at-half-maximum of the global envelope, which keeps growing
//! when a vortex pump splits the ring in two. Note the fit convention has no
//! factor 2 in the exponent, so `FWHM = 2 sqrt(ln 2) sigma_ring` and the
//! standard-deviation equivalent is `sigma_ring / sqrt(2)`.
//!
//! [`PipelineSetup`] bundles crystal, band and detector so the sweep drivers
//! can run render -> clip -> synthesize -> profile pipelines per parameter
//! value: ring width vs pump width, FWHM and ring separation vs vortex
//! order, and the critical pump size below which the FWHM stops responding.

use crate::beam::{
    bin_sum, clip_to_aperture, render_beam, BeamError, BeamSpec, GridGeometry, IntensityGrid,
};
use crate::fitting::{levenberg_marquardt, LeastSquaresProblem};
use crate::optics::UniaxialCrystal;
use crate::ring_synth::{
    build_kernels, synthesize_convolution_with, synthesize_direct_with, DetectorGeometry,
    FilterBand, Rasterization, RingKernel, SpdcImage, SynthError, SynthOptions,
};
use thiserror::Error;

/// Bins around the image centre excluded from profiles, masking the
/// unconverted pump spot present in measured images.
pub const DEFAULT_EXCLUSION_PX: usize = 10;

/// Moving-average window used before peak detection.
pub const PEAK_SMOOTHING_BINS: usize = 3;

/// A profile is dual-ring when the valley between the two dominant maxima
/// drops below this fraction of the lower maximum.
pub const DUAL_RING_VALLEY_RATIO: f64 = 0.85;

/// Maxima below this fraction of the profile's global maximum are ignored
/// by peak detection (rasterization ripple in the far tails).
pub const PEAK_FLOOR_FRACTION: f64 = 0.05;

/// Plateau size (number of lowest pump widths) for the critical-width rule.
pub const CRITICAL_PLATEAU_SAMPLES: usize = 3;

/// The FWHM must exceed the plateau by this fraction to count as risen.
pub const CRITICAL_RISE_FRACTION: f64 = 0.05;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("profile centre lies outside the image")]
    CenterOutsideImage,
    #[error("profile has no positive intensity")]
    NoPositiveIntensity,
    #[error("profile never falls below half maximum on the {side} side")]
    HalfMaxNotReached { side: &'static str },
    #[error("profile has {peaks} significant maxima; use detect_dual_rings for multi-ring profiles")]
    Bimodal { peaks: usize },
    #[error("ring fit did not converge within {iterations} iterations (rms residual {rms_residual:.6e})")]
    FitDidNotConverge { iterations: usize, rms_residual: f64 },
    #[error("FWHM never rises above the low-width plateau by {:.0}% over the scanned range", CRITICAL_RISE_FRACTION * 100.0)]
    NoTransition,
    #[error("{0}")]
    InvalidInput(String),
    #[error(transparent)]
    Beam(#[from] BeamError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error("sweep row at {parameter} = {value}: {source}")]
    SweepRow {
        parameter: &'static str,
        value: f64,
        #[source]
        source: Box<AnalysisError>,
    },
}

/// Radially binned intensity.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialProfile {
    /// Bin centres, mm; strictly increasing.
    pub radii_mm: Vec<f64>,
    /// Mean intensity per bin.
    pub intensity: Vec<f64>,
    pub bin_width_mm: f64,
}

/// How to reduce the image to a radial profile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProfileMode {
    /// Mean over one-pixel-wide annuli.
    Azimuthal,
    /// Folded average of the two half-lines through the centre along the
    /// given direction, sampled bilinearly.
    LineCut { angle_rad: f64 },
}

/// Profile of `image` about `center_mm` with the default central exclusion.
pub fn radial_profile(
    image: &SpdcImage,
    center_mm: (f64, f64),
    mode: ProfileMode,
) -> Result<RadialProfile, AnalysisError> {
    radial_profile_with_exclusion(image, center_mm, mode, DEFAULT_EXCLUSION_PX)
}

pub fn radial_profile_with_exclusion(
    image: &SpdcImage,
    center_mm: (f64, f64),
    mode: ProfileMode,
    exclusion_px: usize,
) -> Result<RadialProfile, AnalysisError> {
    let g = &image.geometry;
    let origin = g.origin_mm();
    let pitch = g.pitch_mm;
    let right = origin.0 + pitch * (g.nx as f64 - 1.0);
    let top = origin.1 + pitch * (g.ny as f64 - 1.0);
    let border = (center_mm.0 - origin.0)
        .min(right - center_mm.0)
        .min(center_mm.1 - origin.1)
        .min(top - center_mm.1);
    if border < 0.0 {
        return Err(AnalysisError::CenterOutsideImage);
    }
    let n_bins = (border / pitch).floor() as usize;
    if n_bins <= exclusion_px {
        return Err(AnalysisError::InvalidInput(format!(
            "only {n_bins} complete bins fit inside the image but {exclusion_px} are excluded"
        )));
    }

    let intensity = match mode {
        ProfileMode::Azimuthal => {
            let mut sums = vec![0.0; n_bins];
            let mut counts = vec![0u64; n_bins];
            for iy in 0..g.ny {
                let dy = origin.1 + pitch * iy as f64 - center_mm.1;
                for ix in 0..g.nx {
                    let dx = origin.0 + pitch * ix as f64 - center_mm.0;
                    let bin = ((dx * dx + dy * dy).sqrt() / pitch).floor() as usize;
                    if bin < n_bins {
                        sums[bin] += image.at(ix, iy);
                        counts[bin] += 1;
                    }
                }
            }
            sums.iter()
                .zip(&counts)
                .map(|(&s, &c)| if c > 0 { s / c as f64 } else { 0.0 })
                .collect::<Vec<f64>>()
        }
        ProfileMode::LineCut { angle_rad } => {
            let (dir_x, dir_y) = (angle_rad.cos(), angle_rad.sin());
            let sample = |x: f64, y: f64| -> Option<f64> {
                let fx = (x - origin.0) / pitch;
                let fy = (y - origin.1) / pitch;
                let ix = fx.floor();
                let iy = fy.floor();
                if ix < 0.0 || iy < 0.0 || ix + 1.0 > g.nx as f64 - 1.0 || iy + 1.0 > g.ny as f64 - 1.0
                {
                    return None;
                }
                let (ix, iy) = (ix as usize, iy as usize);
                let tx = fx - ix as f64;
                let ty = fy - iy as f64;
                Some(
                    image.at(ix, iy) * (1.0 - tx) * (1.0 - ty)
                        + image.at(ix + 1, iy) * tx * (1.0 - ty)
                        + image.at(ix, iy + 1) * (1.0 - tx) * ty
                        + image.at(ix + 1, iy + 1) * tx * ty,
                )
            };
            (0..n_bins)
                .map(|k| {
                    let r = (k as f64 + 0.5) * pitch;
                    let fwd = sample(center_mm.0 + r * dir_x, center_mm.1 + r * dir_y);
                    let bwd = sample(center_mm.0 - r * dir_x, center_mm.1 - r * dir_y);
                    match (fwd, bwd) {
                        (Some(a), Some(b)) => (a + b) / 2.0,
                        (Some(a), None) | (None, Some(a)) => a,
                        (None, None) => 0.0,
                    }
                })
                .collect()
        }
    };

    Ok(RadialProfile {
        radii_mm: (exclusion_px..n_bins)
            .map(|k| (k as f64 + 0.5) * pitch)
            .collect(),
        intensity: intensity[exclusion_px..].to_vec(),
        bin_width_mm: pitch,
    })
}

/// Result of the single-ring Gaussian fit
/// `A exp(-(r - R0)^2 / sigma_ring^2)`.
#[derive(Debug, Clone, Copy)]
pub struct RingFit {
    pub sigma_ring_mm: f64,
    pub peak_radius_mm: f64,
    pub amplitude: f64,
    pub rms_residual: f64,
}

struct RingProblem<'a> {
    profile: &'a RadialProfile,
}

impl LeastSquaresProblem for RingProblem<'_> {
    fn param_count(&self) -> usize {
        3
    }

    // params: [amplitude, peak radius, sigma_ring]
    fn cost(&self, p: &[f64]) -> Option<f64> {
        if !(p[0] > 0.0 && p[2] > 0.0) || p.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let inv_s2 = 1.0 / (p[2] * p[2]);
        Some(
            self.profile
                .radii_mm
                .iter()
                .zip(&self.profile.intensity)
                .map(|(&r, &y)| {
                    let d = r - p[1];
                    (p[0] * (-d * d * inv_s2).exp() - y).powi(2)
                })
                .sum(),
        )
    }

    fn normal_equations(&self, p: &[f64], jtj: &mut [f64], jtr: &mut [f64]) -> Option<f64> {
        if !(p[0] > 0.0 && p[2] > 0.0) || p.iter().any(|v| !v.is_finite()) {
            return None;
        }
        jtj.fill(0.0);
        jtr.fill(0.0);
        let (a, r0, s) = (p[0], p[1], p[2]);
        let inv_s2 = 1.0 / (s * s);
        let mut cost = 0.0;
        for (&r, &y) in self.profile.radii_mm.iter().zip(&self.profile.intensity) {
            let d = r - r0;
            let e = (-d * d * inv_s2).exp();
            let m = a * e;
            let residual = m - y;
            let grad = [e, m * 2.0 * d * inv_s2, m * 2.0 * d * d / (s * s * s)];
            for i in 0..3 {
                jtr[i] += grad[i] * residual;
                for j in i..3 {
                    jtj[i * 3 + j] += grad[i] * grad[j];
                }
            }
            cost += residual * residual;
        }
        for i in 0..3 {
            for j in 0..i {
                jtj[i * 3 + j] = jtj[j * 3 + i];
            }
        }
        Some(cost)
    }
}

/// Fit a single Gaussian ring to a unimodal profile.
pub fn fit_ring_gaussian(profile: &RadialProfile) -> Result<RingFit, AnalysisError> {
    let smoothed = smoothed3(&profile.intensity);
    let peaks = significant_peaks(&smoothed);
    if peaks.len() >= 2 {
        return Err(AnalysisError::Bimodal { peaks: peaks.len() });
    }
    let (argmax, &max) = profile
        .intensity
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .ok_or(AnalysisError::NoPositiveIntensity)?;
    if !(max > 0.0) {
        return Err(AnalysisError::NoPositiveIntensity);
    }
    let r0 = profile.radii_mm[argmax];
    let total: f64 = profile.intensity.iter().sum();
    let m2: f64 = profile
        .radii_mm
        .iter()
        .zip(&profile.intensity)
        .map(|(&r, &y)| y * (r - r0) * (r - r0))
        .sum::<f64>()
        / total;
    // variance of exp(-d^2/s^2) is s^2/2
    let sigma0 = (2.0 * m2).sqrt().max(profile.bin_width_mm);
    let outcome = levenberg_marquardt(&RingProblem { profile }, &[max, r0, sigma0], 200);
    let rms = (outcome.final_cost / profile.intensity.len() as f64).sqrt();
    if !outcome.converged {
        return Err(AnalysisError::FitDidNotConverge {
            iterations: outcome.iterations,
            rms_residual: rms,
        });
    }
    Ok(RingFit {
        sigma_ring_mm: outcome.params[2].abs(),
        peak_radius_mm: outcome.params[1],
        amplitude: outcome.params[0],
        rms_residual: rms,
    })
}

/// Full width at half maximum of the profile's global envelope: the
/// outermost half-max crossing minus the innermost one, linearly
/// interpolated. Spans both rings of a dual-ring profile.
pub fn fwhm(profile: &RadialProfile) -> Result<f64, AnalysisError> {
    let y = &profile.intensity;
    let r = &profile.radii_mm;
    let max = y.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(max > 0.0) {
        return Err(AnalysisError::NoPositiveIntensity);
    }
    let half = max / 2.0;
    let first = y.iter().position(|&v| v >= half).expect("max >= half");
    if first == 0 {
        return Err(AnalysisError::HalfMaxNotReached { side: "inner" });
    }
    let last = y.len() - 1 - y.iter().rev().position(|&v| v >= half).expect("max >= half");
    if last == y.len() - 1 {
        return Err(AnalysisError::HalfMaxNotReached { side: "outer" });
    }
    let inner =
        r[first - 1] + (r[first] - r[first - 1]) * (half - y[first - 1]) / (y[first] - y[first - 1]);
    let outer = r[last] + (r[last + 1] - r[last]) * (y[last] - half) / (y[last] - y[last + 1]);
    Ok(outer - inner)
}

/// Ring-shape summary of one profile.
#[derive(Debug, Clone, PartialEq)]
pub struct RingMetrics {
    /// Gaussian fit width; present only for unimodal profiles.
    pub sigma_ring_mm: Option<f64>,
    /// Global-envelope FWHM.
    pub fwhm_mm: f64,
    /// Radii of the detected maxima (one, or two when dual).
    pub peak_radii_mm: Vec<f64>,
    pub dual_ring: bool,
    /// Outer minus inner peak radius; zero for a single ring.
    pub separation_mm: f64,
}

/// Classify a profile as single- or dual-ring and collect its metrics.
///
/// Peaks are local maxima of the 3-bin-smoothed profile above
/// [`PEAK_FLOOR_FRACTION`] of its global maximum; the profile is dual when
/// the valley between the two dominant peaks is below
/// [`DUAL_RING_VALLEY_RATIO`] of the lower peak.
pub fn detect_dual_rings(profile: &RadialProfile) -> Result<RingMetrics, AnalysisError> {
    let smoothed = smoothed3(&profile.intensity);
    let peaks = significant_peaks(&smoothed);
    let fwhm_mm = fwhm(profile)?;
    if peaks.len() >= 2 {
        let mut by_height = peaks.clone();
        by_height.sort_by(|&a, &b| smoothed[b].total_cmp(&smoothed[a]).then(a.cmp(&b)));
        let (mut a, mut b) = (by_height[0], by_height[1]);
        if a > b {
            std::mem::swap(&mut a, &mut b);
        }
        let valley = smoothed[a..=b].iter().cloned().fold(f64::INFINITY, f64::min);
        let lower = smoothed[a].min(smoothed[b]);
        if valley < DUAL_RING_VALLEY_RATIO * lower {
            return Ok(RingMetrics {
                sigma_ring_mm: None,
                fwhm_mm,
                peak_radii_mm: vec![profile.radii_mm[a], profile.radii_mm[b]],
                dual_ring: true,
                separation_mm: profile.radii_mm[b] - profile.radii_mm[a],
            });
        }
    }
    let argmax = (0..smoothed.len())
        .max_by(|&a, &b| smoothed[a].total_cmp(&smoothed[b]))
        .expect("non-empty profile");
    let sigma_ring_mm = if peaks.len() < 2 {
        fit_ring_gaussian(profile).ok().map(|f| f.sigma_ring_mm)
    } else {
        None
    };
    Ok(RingMetrics {
        sigma_ring_mm,
        fwhm_mm,
        peak_radii_mm: vec![profile.radii_mm[argmax]],
        dual_ring: false,
        separation_mm: 0.0,
    })
}

fn smoothed3(y: &[f64]) -> Vec<f64> {
    let half = PEAK_SMOOTHING_BINS / 2;
    (0..y.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(y.len());
            y[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect()
}

fn significant_peaks(smoothed: &[f64]) -> Vec<usize> {
    let global = smoothed.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let floor = global * PEAK_FLOOR_FRACTION;
    (1..smoothed.len().saturating_sub(1))
        .filter(|&i| {
            smoothed[i] > smoothed[i - 1] && smoothed[i] >= smoothed[i + 1] && smoothed[i] >= floor
        })
        .collect()
}

/// Least-squares line fit over a sweep table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

fn line_fit(xs: &[f64], ys: &[f64]) -> LineFit {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - (slope * x + intercept)).powi(2))
        .sum();
    let ss_tot: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    LineFit {
        slope,
        intercept,
        r_squared: if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 },
    }
}

/// Which synthesis path a pipeline uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SynthesisPath {
    #[default]
    Convolution,
    Direct,
}

/// Everything needed to turn a pump description into a ring image.
#[derive(Debug, Clone)]
pub struct PipelineSetup {
    pub crystal: UniaxialCrystal,
    pub theta_rad: f64,
    pub lambda_p_nm: f64,
    pub band: FilterBand,
    pub detector: DetectorGeometry,
    pub rasterization: Rasterization,
    pub path: SynthesisPath,
}

// Pump grids are rendered at or below sigma over this factor, then
// sum-binned onto the detector lattice, so narrow beams stay resolved.
const PUMP_RESOLUTION_FACTOR: f64 = 12.0;

impl PipelineSetup {
    /// Setup with the usual defaults: the crystal's own cut angle, 405 nm
    /// pump, 810 +- 5 nm top-hat band with 11 samples.
    pub fn new(crystal: UniaxialCrystal, detector: DetectorGeometry) -> Self {
        let theta_rad = crystal.optic_axis_angle_rad;
        Self {
            crystal,
            theta_rad,
            lambda_p_nm: 405.0,
            band: FilterBand::uniform(810.0, 5.0, 11).expect("default band is valid"),
            detector,
            rasterization: Rasterization::Midpoint,
            path: SynthesisPath::Convolution,
        }
    }

    pub fn kernels(&self) -> Result<Vec<RingKernel>, AnalysisError> {
        Ok(build_kernels(
            &self.crystal,
            self.theta_rad,
            self.lambda_p_nm,
            &self.band,
            &self.detector,
        )?)
    }

    /// Render `spec` finely, clip it to the crystal aperture, and bin it
    /// onto the detector lattice (parity-matched so the convolution path
    /// applies).
    pub fn pump_grid(&self, spec: &BeamSpec) -> Result<IntensityGrid, AnalysisError> {
        let pitch = self.detector.pitch_mm;
        let bin_factor = ((PUMP_RESOLUTION_FACTOR * pitch / spec.sigma_mm).ceil() as usize).max(1);
        let fine_pitch = pitch / bin_factor as f64;
        let half_span = spec.sigma_mm * (5.0 + (spec.order as f64).sqrt());
        let mut nx = (2 * (half_span / pitch).ceil() as usize).max(16);
        if nx % 2 != self.detector.nx % 2 {
            nx += 1;
        }
        let mut ny = (2 * (half_span / pitch).ceil() as usize).max(16);
        if ny % 2 != self.detector.ny % 2 {
            ny += 1;
        }
        let fine = GridGeometry::centered(
            nx * bin_factor,
            ny * bin_factor,
            fine_pitch,
            spec.center_mm,
        )?;
        let rendered = render_beam(spec, &fine)?;
        let clipped = clip_to_aperture(&rendered, &self.crystal.aperture);
        Ok(bin_sum(&clipped, bin_factor)?)
    }

    pub fn synthesize(
        &self,
        pump: &IntensityGrid,
        kernels: &[RingKernel],
    ) -> Result<SpdcImage, AnalysisError> {
        let options = SynthOptions {
            rasterization: self.rasterization,
            threads: 0,
        };
        let image = match self.path {
            SynthesisPath::Convolution => {
                synthesize_convolution_with(pump, kernels, &self.detector, &options)?
            }
            SynthesisPath::Direct => {
                synthesize_direct_with(pump, kernels, &self.detector, &options)?
            }
        };
        Ok(image)
    }

    /// Full pipeline for one pump description.
    pub fn simulate(&self, spec: &BeamSpec) -> Result<SpdcImage, AnalysisError> {
        let kernels = self.kernels()?;
        let pump = self.pump_grid(spec)?;
        self.synthesize(&pump, &kernels)
    }

    fn profile_of(&self, image: &SpdcImage) -> Result<RadialProfile, AnalysisError> {
        radial_profile(image, self.detector.center_mm, ProfileMode::Azimuthal)
    }
}

/// A sweep row that could not be computed, tagged with its parameter value.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepFailure {
    pub value: f64,
    pub message: String,
}

/// One row of the pump-width sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WidthSweepRow {
    pub sigma_pump_mm: f64,
    pub sigma_ring_mm: f64,
}

/// Pump-width sweep result: ring width against Gaussian pump width.
#[derive(Debug, Clone, PartialEq)]
pub struct WidthSweep {
    pub rows: Vec<WidthSweepRow>,
    /// Present when at least two rows succeeded.
    pub line_fit: Option<LineFit>,
    /// Rows that failed, in parameter order; empty on a clean sweep.
    pub failures: Vec<SweepFailure>,
}

/// Sweep a Gaussian pump's width and fit the resulting ring width per value.
///
/// Rows that fail are collected in `failures` and excluded from the table;
/// the sweep itself errors only on invalid input or when no row succeeds.
pub fn sweep_pump_width(
    setup: &PipelineSetup,
    sigmas_mm: &[f64],
) -> Result<WidthSweep, AnalysisError> {
    if sigmas_mm.is_empty() {
        return Err(AnalysisError::InvalidInput("no pump widths given".into()));
    }
    if sigmas_mm.windows(2).any(|w| w[1] <= w[0]) || sigmas_mm[0] <= 0.0 {
        return Err(AnalysisError::InvalidInput(
            "pump widths must be positive and ascending".into(),
        ));
    }
    let kernels = setup.kernels()?;
    let mut rows = Vec::with_capacity(sigmas_mm.len());
    let mut failures = Vec::new();
    for &sigma in sigmas_mm {
        let row = (|| -> Result<WidthSweepRow, AnalysisError> {
            let spec = BeamSpec::new(0, sigma, 1.0, setup.detector.center_mm)?;
            let pump = setup.pump_grid(&spec)?;
            let image = setup.synthesize(&pump, &kernels)?;
            let fit = fit_ring_gaussian(&setup.profile_of(&image)?)?;
            Ok(WidthSweepRow {
                sigma_pump_mm: sigma,
                sigma_ring_mm: fit.sigma_ring_mm,
            })
        })();
        match row {
            Ok(row) => rows.push(row),
            Err(source) => failures.push(SweepFailure {
                value: sigma,
                message: source.to_string(),
            }),
        }
    }
    if rows.is_empty() {
        return Err(AnalysisError::SweepRow {
            parameter: "sigma_pump_mm",
            value: failures[0].value,
            source: Box::new(AnalysisError::InvalidInput(failures[0].message.clone())),
        });
    }
    let line_fit = (rows.len() >= 2).then(|| {
        let xs: Vec<f64> = rows.iter().map(|r| r.sigma_pump_mm).collect();
        let ys: Vec<f64> = rows.iter().map(|r| r.sigma_ring_mm).collect();
        line_fit(&xs, &ys)
    });
    Ok(WidthSweep {
        rows,
        line_fit,
        failures,
    })
}

/// One row of the vortex-order sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrderSweepRow {
    pub order: u32,
    pub fwhm_mm: f64,
    pub separation_mm: f64,
    pub dual_ring: bool,
}

/// Vortex-order sweep result.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderSweep {
    /// Successful rows, sorted by order.
    pub rows: Vec<OrderSweepRow>,
    pub failures: Vec<SweepFailure>,
}

/// Sweep the vortex order at a fixed host width; rows are sorted by order.
pub fn sweep_vortex_order(
    setup: &PipelineSetup,
    orders: &[u32],
    sigma_host_mm: f64,
) -> Result<OrderSweep, AnalysisError> {
    if orders.is_empty() {
        return Err(AnalysisError::InvalidInput("no vortex orders given".into()));
    }
    let mut orders = orders.to_vec();
    orders.sort_unstable();
    let kernels = setup.kernels()?;
    let mut rows = Vec::with_capacity(orders.len());
    let mut failures = Vec::new();
    for &order in &orders {
        let row = (|| -> Result<OrderSweepRow, AnalysisError> {
            let spec = BeamSpec::new(order, sigma_host_mm, 1.0, setup.detector.center_mm)?;
            let pump = setup.pump_grid(&spec)?;
            let image = setup.synthesize(&pump, &kernels)?;
            let metrics = detect_dual_rings(&setup.profile_of(&image)?)?;
            Ok(OrderSweepRow {
                order,
                fwhm_mm: metrics.fwhm_mm,
                separation_mm: metrics.separation_mm,
                dual_ring: metrics.dual_ring,
            })
        })();
        match row {
            Ok(row) => rows.push(row),
            Err(source) => failures.push(SweepFailure {
                value: order as f64,
                message: source.to_string(),
            }),
        }
    }
    if rows.is_empty() {
        return Err(AnalysisError::SweepRow {
            parameter: "order",
            value: failures[0].value,
            source: Box::new(AnalysisError::InvalidInput(failures[0].message.clone())),
        });
    }
    Ok(OrderSweep { rows, failures })
}

/// Critical-width scan result.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticalWidth {
    /// Smallest scanned width whose FWHM exceeds the plateau by
    /// [`CRITICAL_RISE_FRACTION`].
    pub sigma_crit_mm: f64,
    /// Mean FWHM over the [`CRITICAL_PLATEAU_SAMPLES`] lowest widths.
    pub plateau_fwhm_mm: f64,
    /// The `(sigma_pump, fwhm)` table over the successful rows.
    pub rows: Vec<(f64, f64)>,
    pub failures: Vec<SweepFailure>,
}

/// Scan the host width of a vortex of fixed order and locate the width at
/// which the ring FWHM departs from its low-width plateau.
pub fn find_critical_width(
    setup: &PipelineSetup,
    order: u32,
    sigma_range_mm: (f64, f64),
    steps: usize,
) -> Result<CriticalWidth, AnalysisError> {
    if order == 0 {
        return Err(AnalysisError::InvalidInput(
            "critical width needs a vortex (order >= 1)".into(),
        ));
    }
    if steps <= CRITICAL_PLATEAU_SAMPLES {
        return Err(AnalysisError::InvalidInput(format!(
            "need more than {CRITICAL_PLATEAU_SAMPLES} steps, got {steps}"
        )));
    }
    let (lo, hi) = sigma_range_mm;
    if !(lo > 0.0 && hi > lo) {
        return Err(AnalysisError::InvalidInput(format!(
            "bad width range [{lo}, {hi}]"
        )));
    }
    let kernels = setup.kernels()?;
    let mut rows = Vec::with_capacity(steps);
    let mut failures = Vec::new();
    for k in 0..steps {
        let sigma = lo + (hi - lo) * k as f64 / (steps as f64 - 1.0);
        let result = (|| -> Result<f64, AnalysisError> {
            let spec = BeamSpec::new(order, sigma, 1.0, setup.detector.center_mm)?;
            let pump = setup.pump_grid(&spec)?;
            let image = setup.synthesize(&pump, &kernels)?;
            fwhm(&setup.profile_of(&image)?)
        })();
        match result {
            Ok(fwhm_mm) => rows.push((sigma, fwhm_mm)),
            Err(source) if rows.len() < CRITICAL_PLATEAU_SAMPLES => {
                // the plateau is defined by the lowest widths; without them
                // the transition rule is meaningless
                return Err(AnalysisError::SweepRow {
                    parameter: "sigma_pump_mm",
                    value: sigma,
                    source: Box::new(source),
                });
            }
            Err(source) => failures.push(SweepFailure {
                value: sigma,
                message: source.to_string(),
            }),
        }
    }
    let plateau = rows[..CRITICAL_PLATEAU_SAMPLES]
        .iter()
        .map(|&(_, f)| f)
        .sum::<f64>()
        / CRITICAL_PLATEAU_SAMPLES as f64;
    let sigma_crit = rows
        .iter()
        .find(|&&(_, f)| f > (1.0 + CRITICAL_RISE_FRACTION) * plateau)
        .map(|&(s, _)| s)
        .ok_or(AnalysisError::NoTransition)?;
    Ok(CriticalWidth {
        sigma_crit_mm: sigma_crit,
        plateau_fwhm_mm: plateau,
        rows,
        failures,
    })
}
