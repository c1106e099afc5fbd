//! Non-collinear type-I (e -> o + o) phase matching.
//!
//! Energy conservation fixes the idler wavelength,
//! `1/lambda_p = 1/lambda_s + 1/lambda_i`, and momentum conservation along
//! and across the pump direction fixes the internal emission half-angles
//! `phi_s`, `phi_i` of the signal and idler cones:
//!
//! ```text
//! n_e(lambda_p, theta)/lambda_p = n_o(lambda_s)/lambda_s * cos(phi_s)
//!                               + n_o(lambda_i)/lambda_i * cos(phi_i)
//! n_o(lambda_s)/lambda_s * sin(phi_s) = n_o(lambda_i)/lambda_i * sin(phi_i)
//! ```
//!
//! Substituting the transverse balance into the longitudinal one leaves a
//! single equation in `phi_s`, strictly monotone on the solver bracket, which
//! is solved by bracketed bisection refined with secant steps. External
//! angles follow from Snell refraction at the flat exit face, using the
//! ordinary index at the down-converted wavelength.

use crate::optics::{OpticsError, UniaxialCrystal};
use thiserror::Error;

/// Bracket for the internal signal half-angle, radians. Covers
/// near-degenerate type-I geometries while excluding spurious branches.
pub const SOLVER_BRACKET_RAD: (f64, f64) = (0.0, 0.35);

/// Convergence threshold on the half-angle, radians.
pub const SOLVER_TOL_RAD: f64 = 1e-12;

/// Crystal-rotation search range for [`find_phasematch_theta`], radians.
pub const THETA_SEARCH_RANGE_DEG: (f64, f64) = (20.0, 45.0);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PhaseMatchError {
    #[error(transparent)]
    Optics(#[from] OpticsError),
    #[error("no positive idler wavelength for pump {lambda_p_nm} nm, signal {lambda_s_nm} nm")]
    NoIdlerSolution { lambda_p_nm: f64, lambda_s_nm: f64 },
    #[error("transverse balance gives |sin phi_i| > 1 at phi_s = {phi_s_rad} rad")]
    IdlerAngleOutOfRange { phi_s_rad: f64 },
    #[error(
        "no phase-matching solution on [{}, {}] rad for signal {lambda_s_nm} nm \
         (residual {residual_lo:+.3e} at bracket start, {residual_hi:+.3e} at end)",
        SOLVER_BRACKET_RAD.0, SOLVER_BRACKET_RAD.1
    )]
    NoSolution {
        lambda_s_nm: f64,
        residual_lo: f64,
        residual_hi: f64,
    },
    #[error("total internal reflection: n sin(phi) = {product} > 1")]
    TotalInternalReflection { product: f64 },
    #[error("target external angle {target_rad} rad not reachable for theta in [{}, {}] deg",
            THETA_SEARCH_RANGE_DEG.0, THETA_SEARCH_RANGE_DEG.1)]
    TargetUnreachable { target_rad: f64 },
}

/// Pump/signal/idler wavelengths satisfying energy conservation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhotonTriplet {
    pub lambda_p_nm: f64,
    pub lambda_s_nm: f64,
    pub lambda_i_nm: f64,
}

impl PhotonTriplet {
    /// Completes the triplet from pump and signal wavelengths.
    pub fn from_pump_signal(lambda_p_nm: f64, lambda_s_nm: f64) -> Result<Self, PhaseMatchError> {
        let lambda_i_nm = idler_wavelength(lambda_p_nm, lambda_s_nm)?;
        Ok(Self {
            lambda_p_nm,
            lambda_s_nm,
            lambda_i_nm,
        })
    }
}

/// Idler wavelength from energy conservation,
/// `lambda_i = 1 / (1/lambda_p - 1/lambda_s)`.
pub fn idler_wavelength(lambda_p_nm: f64, lambda_s_nm: f64) -> Result<f64, PhaseMatchError> {
    if !(lambda_p_nm > 0.0 && lambda_s_nm > lambda_p_nm) {
        return Err(PhaseMatchError::NoIdlerSolution {
            lambda_p_nm,
            lambda_s_nm,
        });
    }
    Ok(1.0 / (1.0 / lambda_p_nm - 1.0 / lambda_s_nm))
}

/// One solved emission geometry: internal and external signal/idler cone
/// half-angles for a wavelength triplet.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmissionSolution {
    pub triplet: PhotonTriplet,
    pub signal_internal_rad: f64,
    pub idler_internal_rad: f64,
    pub signal_external_rad: f64,
    pub idler_external_rad: f64,
    /// Achieved |longitudinal residual| at the returned root, 1/nm.
    pub residual: f64,
}

// Wave-vector magnitudes over 2*pi, i.e. n/lambda in 1/nm, for one triplet.
struct MatchTerms {
    pump: f64,
    signal: f64,
    idler: f64,
}

impl MatchTerms {
    fn new(
        crystal: &UniaxialCrystal,
        theta_rad: f64,
        triplet: &PhotonTriplet,
    ) -> Result<Self, PhaseMatchError> {
        Ok(Self {
            pump: crystal.n_extraordinary_at_angle(triplet.lambda_p_nm, theta_rad)?
                / triplet.lambda_p_nm,
            signal: crystal.n_ordinary(triplet.lambda_s_nm)? / triplet.lambda_s_nm,
            idler: crystal.n_ordinary(triplet.lambda_i_nm)? / triplet.lambda_i_nm,
        })
    }

    /// Idler angle matching the transverse balance at `phi_s`.
    fn idler_angle(&self, phi_s_rad: f64) -> Result<f64, PhaseMatchError> {
        let s = self.signal / self.idler * phi_s_rad.sin();
        if s.abs() > 1.0 {
            return Err(PhaseMatchError::IdlerAngleOutOfRange { phi_s_rad });
        }
        Ok(s.asin())
    }

    /// Longitudinal mismatch at `phi_s`, with `phi_i` eliminated through the
    /// transverse balance. Strictly monotone increasing on the bracket.
    fn residual(&self, phi_s_rad: f64) -> Result<f64, PhaseMatchError> {
        let phi_i = self.idler_angle(phi_s_rad)?;
        Ok(self.pump - self.signal * phi_s_rad.cos() - self.idler * phi_i.cos())
    }
}

/// Longitudinal phase mismatch (1/nm) at signal half-angle `phi_s_rad`, with
/// the idler angle eliminated through the transverse balance.
pub fn longitudinal_residual(
    crystal: &UniaxialCrystal,
    theta_rad: f64,
    triplet: &PhotonTriplet,
    phi_s_rad: f64,
) -> Result<f64, PhaseMatchError> {
    MatchTerms::new(crystal, theta_rad, triplet)?.residual(phi_s_rad)
}

/// Solve the emission half-angles for `lambda_s_nm` at pump `lambda_p_nm`
/// with the optic axis at `theta_rad`.
///
/// The root of the longitudinal residual is bracketed on
/// [`SOLVER_BRACKET_RAD`] and refined to [`SOLVER_TOL_RAD`]; external angles
/// come from exit-face refraction with the ordinary index.
pub fn solve_emission_angles(
    crystal: &UniaxialCrystal,
    theta_rad: f64,
    lambda_p_nm: f64,
    lambda_s_nm: f64,
) -> Result<EmissionSolution, PhaseMatchError> {
    let triplet = PhotonTriplet::from_pump_signal(lambda_p_nm, lambda_s_nm)?;
    let terms = MatchTerms::new(crystal, theta_rad, &triplet)?;
    let phi_s = solve_residual_root(&terms, lambda_s_nm)?;
    let phi_i = terms.idler_angle(phi_s)?;
    let n_s = crystal.n_ordinary(triplet.lambda_s_nm)?;
    let n_i = crystal.n_ordinary(triplet.lambda_i_nm)?;
    Ok(EmissionSolution {
        triplet,
        signal_internal_rad: phi_s,
        idler_internal_rad: phi_i,
        signal_external_rad: external_angle(phi_s, n_s)?,
        idler_external_rad: external_angle(phi_i, n_i)?,
        residual: terms.residual(phi_s)?.abs(),
    })
}

fn solve_residual_root(terms: &MatchTerms, lambda_s_nm: f64) -> Result<f64, PhaseMatchError> {
    let (mut lo, mut hi) = SOLVER_BRACKET_RAD;
    let mut f_lo = terms.residual(lo)?;
    if f_lo == 0.0 {
        return Ok(lo);
    }
    let mut f_hi = terms.residual(hi)?;
    if f_hi == 0.0 {
        return Ok(hi);
    }
    if f_lo.signum() == f_hi.signum() {
        return Err(PhaseMatchError::NoSolution {
            lambda_s_nm,
            residual_lo: f_lo,
            residual_hi: f_hi,
        });
    }
    // Plain bisection to a coarse bracket, then secant steps (kept inside the
    // bracket, falling back to the midpoint) down to SOLVER_TOL_RAD.
    for _ in 0..24 {
        let mid = 0.5 * (lo + hi);
        let f_mid = terms.residual(mid)?;
        if f_mid == 0.0 {
            return Ok(mid);
        }
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
            f_hi = f_mid;
        }
    }
    for _ in 0..200 {
        if hi - lo < SOLVER_TOL_RAD {
            break;
        }
        let secant = hi - f_hi * (hi - lo) / (f_hi - f_lo);
        let mid = 0.5 * (lo + hi);
        let next = if secant.is_finite() && secant > lo && secant < hi {
            secant
        } else {
            mid
        };
        if next <= lo || next >= hi {
            break; // bracket exhausted at f64 resolution
        }
        let f_next = terms.residual(next)?;
        if f_next == 0.0 {
            return Ok(next);
        }
        if f_next.signum() == f_lo.signum() {
            lo = next;
            f_lo = f_next;
        } else {
            hi = next;
            f_hi = f_next;
        }
    }
    // Return the endpoint with the smaller mismatch.
    Ok(if f_lo.abs() <= f_hi.abs() { lo } else { hi })
}

/// Refract an internal angle through the flat exit face,
/// `phi_ext = arcsin(n sin(phi_int))`.
pub fn external_angle(phi_internal_rad: f64, n: f64) -> Result<f64, PhaseMatchError> {
    let product = n * phi_internal_rad.sin();
    if product.abs() > 1.0 {
        return Err(PhaseMatchError::TotalInternalReflection { product });
    }
    Ok(product.asin())
}

/// Find the optic-axis angle at which the degenerate external half-angle
/// equals `target_external_rad`, modelling rotation of the crystal.
///
/// Searches theta in [`THETA_SEARCH_RANGE_DEG`]. A target of zero returns the
/// collinear degeneracy boundary.
pub fn find_phasematch_theta(
    crystal: &UniaxialCrystal,
    lambda_p_nm: f64,
    target_external_rad: f64,
) -> Result<f64, PhaseMatchError> {
    let (theta_lo, theta_hi) = (
        THETA_SEARCH_RANGE_DEG.0.to_radians(),
        THETA_SEARCH_RANGE_DEG.1.to_radians(),
    );
    if target_external_rad < 0.0 {
        return Err(PhaseMatchError::TargetUnreachable {
            target_rad: target_external_rad,
        });
    }
    let triplet = PhotonTriplet::from_pump_signal(lambda_p_nm, 2.0 * lambda_p_nm)?;
    let residual_at_zero = |theta: f64| -> Result<f64, PhaseMatchError> {
        MatchTerms::new(crystal, theta, &triplet)?.residual(0.0)
    };

    // Stage 1: locate the collinear boundary where the residual at phi = 0
    // changes sign; below it no down-conversion cone exists.
    let r_lo = residual_at_zero(theta_lo)?;
    let r_hi = residual_at_zero(theta_hi)?;
    let mut lo = theta_lo;
    if r_hi > 0.0 {
        return Err(PhaseMatchError::TargetUnreachable {
            target_rad: target_external_rad,
        });
    }
    if r_lo > 0.0 {
        // Bisect onto the solvable side of the boundary.
        let (mut a, mut b) = (theta_lo, theta_hi);
        while b - a > 1e-13 {
            let m = 0.5 * (a + b);
            if residual_at_zero(m)? > 0.0 {
                a = m;
            } else {
                b = m;
            }
        }
        lo = b;
    }

    let angle_at = |theta: f64| -> Result<f64, PhaseMatchError> {
        Ok(solve_emission_angles(crystal, theta, lambda_p_nm, 2.0 * lambda_p_nm)?
            .signal_external_rad)
    };
    let g_lo = angle_at(lo)?;
    let g_hi = angle_at(theta_hi)?;
    if target_external_rad <= g_lo {
        // The external angle grows as sqrt(theta - boundary), so every
        // target at or below the boundary cone maps to a theta within the
        // boundary bisection tolerance of `lo`.
        return Ok(lo);
    }
    if target_external_rad > g_hi {
        return Err(PhaseMatchError::TargetUnreachable {
            target_rad: target_external_rad,
        });
    }
    // Stage 2: the external angle is monotone increasing in theta; bisect
    // until the achieved angle matches the target.
    let (mut a, mut b) = (lo, theta_hi);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        let g = angle_at(m)?;
        if (g - target_external_rad).abs() < 1e-9 {
            return Ok(m);
        }
        if g < target_external_rad {
            a = m;
        } else {
            b = m;
        }
    }
    Ok(0.5 * (a + b))
}
