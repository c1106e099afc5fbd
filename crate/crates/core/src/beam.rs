//! Pump-beam intensity grids and 2-D parameter recovery.
//!
//! An optical vortex of topological charge `l` hosted in a Gaussian of
//! radius `sigma` has the intensity profile
//!
//! ```text
//! I(x, y) = I0 * (x^2 + y^2)^l * exp(-(x^2 + y^2) / sigma^2)
//! ```
//!
//! (the Gaussian itself is the `l = 0` special case). The bright ring of a
//! vortex peaks at radius `sigma * sqrt(l)`. [`fit_beam_profile`] inverts
//! the rendering: given a sampled grid and the known order, it recovers
//! `(sigma, I0, center)` by damped least squares, which is how pump widths
//! are measured from camera images.

use crate::fitting::{levenberg_marquardt, LeastSquaresProblem};
use crate::optics::Aperture;
use thiserror::Error;

/// Largest tolerated border intensity relative to the beam peak before a
/// render is rejected as truncated.
pub const TRUNCATION_LIMIT: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BeamError {
    #[error("invalid beam: {0}")]
    InvalidSpec(String),
    #[error("invalid grid geometry: {0}")]
    InvalidGeometry(String),
    #[error("grid too small: beam at the nearest border is {border_fraction:.3e} of peak \
             (limit {TRUNCATION_LIMIT:.0e})")]
    GridTooSmall { border_fraction: f64 },
    #[error("a Gaussian (order 0) has its maximum on axis, not on a ring")]
    NoRingForGaussian,
    #[error("grid carries no intensity to fit")]
    EmptyGrid,
    #[error("fit did not converge within {iterations} iterations (rms residual {rms_residual:.6e})")]
    FitDidNotConverge { iterations: usize, rms_residual: f64 },
    #[error("bin factor {factor} does not divide grid size {nx} x {ny}")]
    BinFactorMismatch { factor: usize, nx: usize, ny: usize },
}

/// Analytic description of a pump beam.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeamSpec {
    /// Topological charge magnitude; 0 is a plain Gaussian.
    pub order: u32,
    /// Host beam radius, mm.
    pub sigma_mm: f64,
    /// Intensity scale, arbitrary units.
    pub i0: f64,
    /// Beam axis position, mm.
    pub center_mm: (f64, f64),
}

impl BeamSpec {
    pub fn new(order: u32, sigma_mm: f64, i0: f64, center_mm: (f64, f64)) -> Result<Self, BeamError> {
        if !(sigma_mm > 0.0) {
            return Err(BeamError::InvalidSpec(format!("sigma must be positive, got {sigma_mm}")));
        }
        if !(i0 > 0.0) {
            return Err(BeamError::InvalidSpec(format!("i0 must be positive, got {i0}")));
        }
        Ok(Self { order, sigma_mm, i0, center_mm })
    }

    /// Intensity at squared radial distance `r2` (mm^2) from the beam axis.
    pub fn intensity_at_r2(&self, r2: f64) -> f64 {
        let envelope = (-r2 / (self.sigma_mm * self.sigma_mm)).exp();
        if self.order == 0 {
            self.i0 * envelope
        } else {
            self.i0 * r2.powi(self.order as i32) * envelope
        }
    }

    /// Peak intensity value: `I0` for a Gaussian, `I0 (l sigma^2 / e)^l` on
    /// the bright ring of a vortex.
    pub fn peak_intensity(&self) -> f64 {
        if self.order == 0 {
            self.i0
        } else {
            let l = self.order as f64;
            self.i0 * (l * self.sigma_mm * self.sigma_mm / std::f64::consts::E).powi(self.order as i32)
        }
    }

    /// Radius of the bright ring, `sigma * sqrt(l)`. Errors for order 0.
    pub fn peak_radius(&self) -> Result<f64, BeamError> {
        if self.order == 0 {
            return Err(BeamError::NoRingForGaussian);
        }
        Ok(self.sigma_mm * (self.order as f64).sqrt())
    }
}

/// Radius of the bright vortex ring for `spec`; see [`BeamSpec::peak_radius`].
pub fn peak_radius(spec: &BeamSpec) -> Result<f64, BeamError> {
    spec.peak_radius()
}

/// Pixel layout of a sampled grid. `origin_mm` is the position of the centre
/// of pixel (0, 0); pixel (ix, iy) sits at `origin + pitch * (ix, iy)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridGeometry {
    pub nx: usize,
    pub ny: usize,
    pub pitch_mm: f64,
    pub origin_mm: (f64, f64),
}

impl GridGeometry {
    pub fn new(nx: usize, ny: usize, pitch_mm: f64, origin_mm: (f64, f64)) -> Result<Self, BeamError> {
        if nx < 16 || ny < 16 {
            return Err(BeamError::InvalidGeometry(format!(
                "grid must be at least 16 x 16, got {nx} x {ny}"
            )));
        }
        if !(pitch_mm > 0.0) {
            return Err(BeamError::InvalidGeometry(format!("pitch must be positive, got {pitch_mm}")));
        }
        Ok(Self { nx, ny, pitch_mm, origin_mm })
    }

    /// Geometry of `nx` x `ny` pixels centred on `center_mm`.
    pub fn centered(nx: usize, ny: usize, pitch_mm: f64, center_mm: (f64, f64)) -> Result<Self, BeamError> {
        let origin = (
            center_mm.0 - pitch_mm * (nx as f64 - 1.0) / 2.0,
            center_mm.1 - pitch_mm * (ny as f64 - 1.0) / 2.0,
        );
        Self::new(nx, ny, pitch_mm, origin)
    }

    /// Default render geometry for `spec`: 512 x 512 spanning
    /// `8 sigma + 2 sigma sqrt(l)` around the beam centre.
    pub fn default_for(spec: &BeamSpec) -> Self {
        let span = spec.sigma_mm * (8.0 + 2.0 * (spec.order as f64).sqrt());
        Self::centered(512, 512, span / 512.0, spec.center_mm)
            .expect("default geometry is valid")
    }

    pub fn position(&self, ix: usize, iy: usize) -> (f64, f64) {
        (
            self.origin_mm.0 + self.pitch_mm * ix as f64,
            self.origin_mm.1 + self.pitch_mm * iy as f64,
        )
    }

    /// Geometric centre of the grid, mm.
    pub fn center(&self) -> (f64, f64) {
        (
            self.origin_mm.0 + self.pitch_mm * (self.nx as f64 - 1.0) / 2.0,
            self.origin_mm.1 + self.pitch_mm * (self.ny as f64 - 1.0) / 2.0,
        )
    }
}

/// A sampled non-negative intensity map.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityGrid {
    pub geometry: GridGeometry,
    /// Row-major, `iy * nx + ix`.
    pub values: Vec<f64>,
}

impl IntensityGrid {
    pub fn at(&self, ix: usize, iy: usize) -> f64 {
        self.values[iy * self.geometry.nx + ix]
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(0.0, f64::max)
    }
}

/// Sample `spec` on `geometry`.
///
/// The grid must contain the beam: the rendered intensity at the border may
/// not exceed [`TRUNCATION_LIMIT`] of the peak, otherwise the grid is
/// rejected as too small.
pub fn render_beam(spec: &BeamSpec, geometry: &GridGeometry) -> Result<IntensityGrid, BeamError> {
    let (x0, y0) = spec.center_mm;
    let left = geometry.origin_mm.0;
    let right = geometry.origin_mm.0 + geometry.pitch_mm * (geometry.nx as f64 - 1.0);
    let bottom = geometry.origin_mm.1;
    let top = geometry.origin_mm.1 + geometry.pitch_mm * (geometry.ny as f64 - 1.0);
    let border_distance = (x0 - left).min(right - x0).min(y0 - bottom).min(top - y0);
    let peak_radius = spec.sigma_mm * (spec.order as f64).sqrt();
    let border_fraction = if border_distance <= peak_radius {
        1.0
    } else {
        spec.intensity_at_r2(border_distance * border_distance) / spec.peak_intensity()
    };
    if border_fraction > TRUNCATION_LIMIT {
        return Err(BeamError::GridTooSmall { border_fraction });
    }

    let mut values = Vec::with_capacity(geometry.nx * geometry.ny);
    for iy in 0..geometry.ny {
        let y = geometry.origin_mm.1 + geometry.pitch_mm * iy as f64;
        let dy = y - y0;
        for ix in 0..geometry.nx {
            let x = geometry.origin_mm.0 + geometry.pitch_mm * ix as f64;
            let dx = x - x0;
            values.push(spec.intensity_at_r2(dx * dx + dy * dy));
        }
    }
    Ok(IntensityGrid {
        geometry: *geometry,
        values,
    })
}

/// Zero all pixels outside a rectangular aperture centred on the grid centre,
/// modelling the finite crystal face.
pub fn clip_to_aperture(grid: &IntensityGrid, aperture: &Aperture) -> IntensityGrid {
    let (gx, gy) = grid.geometry.center();
    let half_w = aperture.width_mm / 2.0;
    let half_h = aperture.height_mm / 2.0;
    let mut out = grid.clone();
    for iy in 0..grid.geometry.ny {
        for ix in 0..grid.geometry.nx {
            let (x, y) = grid.geometry.position(ix, iy);
            if (x - gx).abs() > half_w || (y - gy).abs() > half_h {
                out.values[iy * grid.geometry.nx + ix] = 0.0;
            }
        }
    }
    out
}

/// Sum-pool `grid` by an integer `factor` per axis. Used to resample a
/// finely rendered beam onto a coarser detector lattice; total intensity is
/// preserved exactly.
pub fn bin_sum(grid: &IntensityGrid, factor: usize) -> Result<IntensityGrid, BeamError> {
    if factor == 0 || grid.geometry.nx % factor != 0 || grid.geometry.ny % factor != 0 {
        return Err(BeamError::BinFactorMismatch {
            factor,
            nx: grid.geometry.nx,
            ny: grid.geometry.ny,
        });
    }
    if factor == 1 {
        return Ok(grid.clone());
    }
    let nx = grid.geometry.nx / factor;
    let ny = grid.geometry.ny / factor;
    let pitch = grid.geometry.pitch_mm * factor as f64;
    // coarse pixel (0,0) centre = mean of its factor x factor fine centres
    let origin = (
        grid.geometry.origin_mm.0 + grid.geometry.pitch_mm * (factor as f64 - 1.0) / 2.0,
        grid.geometry.origin_mm.1 + grid.geometry.pitch_mm * (factor as f64 - 1.0) / 2.0,
    );
    let mut values = vec![0.0; nx * ny];
    for iy in 0..grid.geometry.ny {
        let cy = iy / factor;
        for ix in 0..grid.geometry.nx {
            values[cy * nx + ix / factor] += grid.at(ix, iy);
        }
    }
    Ok(IntensityGrid {
        geometry: GridGeometry::new(nx, ny, pitch, origin)?,
        values,
    })
}

/// Options for [`fit_beam_profile`].
#[derive(Debug, Clone, Copy)]
pub struct FitOptions {
    pub max_iterations: usize,
    /// Add a constant background term to the model; useful on noisy data.
    pub fit_offset: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            fit_offset: false,
        }
    }
}

/// Result of a 2-D beam fit.
#[derive(Debug, Clone)]
pub struct BeamFit {
    pub sigma_mm: f64,
    pub i0: f64,
    pub center_mm: (f64, f64),
    /// Fitted constant background; zero unless requested.
    pub offset: f64,
    pub rms_residual: f64,
    pub iterations: usize,
    /// Accepted objective values per iteration (non-increasing).
    pub cost_history: Vec<f64>,
}

struct BeamProblem<'a> {
    grid: &'a IntensityGrid,
    order: i32,
    fit_offset: bool,
}

impl BeamProblem<'_> {
    // params: [x0, y0, sigma, i0, (offset)]
    fn feasible(p: &[f64]) -> bool {
        p[2] > 0.0 && p[3] > 0.0 && p.iter().all(|v| v.is_finite())
    }
}

impl LeastSquaresProblem for BeamProblem<'_> {
    fn param_count(&self) -> usize {
        if self.fit_offset {
            5
        } else {
            4
        }
    }

    fn cost(&self, p: &[f64]) -> Option<f64> {
        if !Self::feasible(p) {
            return None;
        }
        let g = &self.grid.geometry;
        let inv_s2 = 1.0 / (p[2] * p[2]);
        let offset = if self.fit_offset { p[4] } else { 0.0 };
        let mut cost = 0.0;
        for iy in 0..g.ny {
            let dy = g.origin_mm.1 + g.pitch_mm * iy as f64 - p[1];
            for ix in 0..g.nx {
                let dx = g.origin_mm.0 + g.pitch_mm * ix as f64 - p[0];
                let r2 = dx * dx + dy * dy;
                let w = r2.powi(self.order) * (-r2 * inv_s2).exp();
                let r = p[3] * w + offset - self.grid.at(ix, iy);
                cost += r * r;
            }
        }
        Some(cost)
    }

    fn normal_equations(&self, p: &[f64], jtj: &mut [f64], jtr: &mut [f64]) -> Option<f64> {
        if !Self::feasible(p) {
            return None;
        }
        let n = self.param_count();
        jtj.fill(0.0);
        jtr.fill(0.0);
        let g = &self.grid.geometry;
        let sigma = p[2];
        let inv_s2 = 1.0 / (sigma * sigma);
        let i0 = p[3];
        let offset = if self.fit_offset { p[4] } else { 0.0 };
        let l = self.order;
        let mut cost = 0.0;
        let mut grad = [0.0; 5];
        for iy in 0..g.ny {
            let dy = g.origin_mm.1 + g.pitch_mm * iy as f64 - p[1];
            for ix in 0..g.nx {
                let dx = g.origin_mm.0 + g.pitch_mm * ix as f64 - p[0];
                let r2 = dx * dx + dy * dy;
                let envelope = (-r2 * inv_s2).exp();
                let pow_l = r2.powi(l);
                let w = pow_l * envelope;
                let model = i0 * w + offset;
                let residual = model - self.grid.at(ix, iy);
                // d(model)/d(r2), with the l = 0 and r2 = 0 corners handled
                // through the integer powers directly
                let dm_dr2 = if l == 0 {
                    -i0 * envelope * inv_s2
                } else {
                    i0 * envelope * (l as f64 * r2.powi(l - 1) - pow_l * inv_s2)
                };
                grad[0] = -2.0 * dx * dm_dr2;
                grad[1] = -2.0 * dy * dm_dr2;
                grad[2] = i0 * w * 2.0 * r2 / (sigma * sigma * sigma);
                grad[3] = w;
                if self.fit_offset {
                    grad[4] = 1.0;
                }
                for i in 0..n {
                    jtr[i] += grad[i] * residual;
                    for j in i..n {
                        jtj[i * n + j] += grad[i] * grad[j];
                    }
                }
                cost += residual * residual;
            }
        }
        for i in 0..n {
            for j in 0..i {
                jtj[i * n + j] = jtj[j * n + i];
            }
        }
        Some(cost)
    }
}

/// Recover `(sigma, I0, center)` of a beam of known order from a sampled
/// grid by damped least squares on the intensity model.
///
/// Initialisation: centre from the intensity centroid, `sigma` from the
/// second moment (whose analytic value is `sigma^2 (l + 1)`), `I0` from the
/// observed peak.
pub fn fit_beam_profile(
    grid: &IntensityGrid,
    order: u32,
    options: &FitOptions,
) -> Result<BeamFit, BeamError> {
    let g = &grid.geometry;
    let total = grid.total();
    if !(total > 0.0) {
        return Err(BeamError::EmptyGrid);
    }
    let mut cx = 0.0;
    let mut cy = 0.0;
    let mut peak = 0.0_f64;
    for iy in 0..g.ny {
        for ix in 0..g.nx {
            let v = grid.at(ix, iy);
            let (x, y) = g.position(ix, iy);
            cx += v * x;
            cy += v * y;
            peak = peak.max(v);
        }
    }
    cx /= total;
    cy /= total;
    let mut m2 = 0.0;
    for iy in 0..g.ny {
        for ix in 0..g.nx {
            let (x, y) = g.position(ix, iy);
            m2 += grid.at(ix, iy) * ((x - cx).powi(2) + (y - cy).powi(2));
        }
    }
    m2 /= total;
    let sigma0 = (m2 / (order as f64 + 1.0)).sqrt().max(g.pitch_mm);
    let i0 = if order == 0 {
        peak
    } else {
        let l = order as f64;
        peak / (l * sigma0 * sigma0 / std::f64::consts::E).powi(order as i32)
    };

    let problem = BeamProblem {
        grid,
        order: order as i32,
        fit_offset: options.fit_offset,
    };
    let mut init = vec![cx, cy, sigma0, i0];
    if options.fit_offset {
        init.push(0.0);
    }
    let outcome = levenberg_marquardt(&problem, &init, options.max_iterations);
    let n_px = (g.nx * g.ny) as f64;
    let rms = (outcome.final_cost / n_px).sqrt();
    if !outcome.converged {
        return Err(BeamError::FitDidNotConverge {
            iterations: outcome.iterations,
            rms_residual: rms,
        });
    }
    Ok(BeamFit {
        sigma_mm: outcome.params[2].abs(),
        i0: outcome.params[3],
        center_mm: (outcome.params[0], outcome.params[1]),
        offset: if options.fit_offset { outcome.params[4] } else { 0.0 },
        rms_residual: rms,
        iterations: outcome.iterations,
        cost_history: outcome.cost_history,
    })
}
