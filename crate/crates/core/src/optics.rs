//! Dispersion engine for negative uniaxial crystals.
//!
//! Refractive indices come from Sellmeier fits of the form
//! `n(lambda) = sqrt(a + b / (lambda^2 - c) - d * lambda^2)` with `lambda`
//! in micrometres, and the extraordinary index seen by a wave propagating
//! at angle `theta` to the optic axis is
//!
//! ```text
//! n_e(lambda, theta) = n_o(lambda) * sqrt((1 + tan^2 theta)
//!                    / (1 + (n_o/n_e * tan theta)^2))
//! ```
//!
//! Public interfaces take wavelengths in nanometres; conversion to the
//! micrometre parameterization happens at this boundary.

use thiserror::Error;

/// Wavelength domain over which the built-in Sellmeier fits are trusted, nm.
pub const WAVELENGTH_DOMAIN_NM: (f64, f64) = (200.0, 1500.0);

const NM_PER_UM: f64 = 1000.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OpticsError {
    #[error("wavelength {lambda_nm} nm outside supported domain [{}, {}] nm",
            WAVELENGTH_DOMAIN_NM.0, WAVELENGTH_DOMAIN_NM.1)]
    WavelengthOutOfDomain { lambda_nm: f64 },
    #[error("Sellmeier radicand not positive at {lambda_nm} nm")]
    NonPhysicalIndex { lambda_nm: f64 },
    #[error("propagation angle {theta_rad} rad outside [0, pi/2)")]
    AngleOutOfDomain { theta_rad: f64 },
    #[error("invalid crystal definition: {0}")]
    InvalidCrystal(String),
}

/// Coefficients of one Sellmeier branch,
/// `n(lambda_um) = sqrt(a + b/(lambda_um^2 - c) - d*lambda_um^2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SellmeierCoefficients {
    pub a: f64,
    /// um^2
    pub b: f64,
    /// um^2; pole position, must lie below the supported domain
    pub c: f64,
    /// um^-2
    pub d: f64,
}

impl SellmeierCoefficients {
    /// Refractive index at `lambda_nm`.
    pub fn index(&self, lambda_nm: f64) -> Result<f64, OpticsError> {
        check_domain(lambda_nm)?;
        let lu = lambda_nm / NM_PER_UM;
        let l2 = lu * lu;
        let radicand = self.a + self.b / (l2 - self.c) - self.d * l2;
        if !(radicand > 0.0) {
            return Err(OpticsError::NonPhysicalIndex { lambda_nm });
        }
        Ok(radicand.sqrt())
    }
}

/// Evaluate one Sellmeier branch at a wavelength.
pub fn sellmeier_index(coeffs: &SellmeierCoefficients, lambda_nm: f64) -> Result<f64, OpticsError> {
    coeffs.index(lambda_nm)
}

fn check_domain(lambda_nm: f64) -> Result<(), OpticsError> {
    if !(lambda_nm >= WAVELENGTH_DOMAIN_NM.0 && lambda_nm <= WAVELENGTH_DOMAIN_NM.1) {
        return Err(OpticsError::WavelengthOutOfDomain { lambda_nm });
    }
    Ok(())
}

/// Clear rectangular aperture of the crystal face, mm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aperture {
    pub width_mm: f64,
    pub height_mm: f64,
}

/// A negative uniaxial crystal: ordinary/extraordinary Sellmeier branches,
/// the cut angle of the optic axis, and the clear aperture.
#[derive(Debug, Clone, PartialEq)]
pub struct UniaxialCrystal {
    pub ordinary: SellmeierCoefficients,
    pub extraordinary: SellmeierCoefficients,
    /// Angle between the optic axis and the pump wave-vector, radians.
    pub optic_axis_angle_rad: f64,
    pub aperture: Aperture,
}

impl UniaxialCrystal {
    /// Build a crystal definition, checking the negative-uniaxial invariants
    /// (`n_e < n_o` and both indices above 1) across the supported domain.
    pub fn new(
        ordinary: SellmeierCoefficients,
        extraordinary: SellmeierCoefficients,
        optic_axis_angle_rad: f64,
        aperture: Aperture,
    ) -> Result<Self, OpticsError> {
        if !(optic_axis_angle_rad > 0.0 && optic_axis_angle_rad < std::f64::consts::FRAC_PI_2) {
            return Err(OpticsError::InvalidCrystal(format!(
                "optic axis angle {optic_axis_angle_rad} rad outside (0, pi/2)"
            )));
        }
        if !(aperture.width_mm > 0.0 && aperture.height_mm > 0.0) {
            return Err(OpticsError::InvalidCrystal("aperture must be positive".into()));
        }
        let min_l2 = (WAVELENGTH_DOMAIN_NM.0 / NM_PER_UM).powi(2);
        for coeffs in [&ordinary, &extraordinary] {
            if coeffs.c >= min_l2 {
                return Err(OpticsError::InvalidCrystal(format!(
                    "Sellmeier pole c = {} um^2 inside the supported domain",
                    coeffs.c
                )));
            }
        }
        let crystal = Self {
            ordinary,
            extraordinary,
            optic_axis_angle_rad,
            aperture,
        };
        // Dense sampling across the domain catches non-physical fits early.
        let (lo, hi) = WAVELENGTH_DOMAIN_NM;
        for k in 0..=64 {
            let lambda = lo + (hi - lo) * k as f64 / 64.0;
            let no = crystal.ordinary.index(lambda)?;
            let ne = crystal.extraordinary.index(lambda)?;
            if no <= 1.0 || ne <= 1.0 {
                return Err(OpticsError::InvalidCrystal(format!(
                    "index not above 1 at {lambda} nm (n_o = {no}, n_e = {ne})"
                )));
            }
            if ne >= no {
                return Err(OpticsError::InvalidCrystal(format!(
                    "not negative uniaxial at {lambda} nm (n_e = {ne} >= n_o = {no})"
                )));
            }
        }
        Ok(crystal)
    }

    /// Beta-barium borate with its 29.7 degree cut and 6x6 mm face.
    pub fn bbo() -> Self {
        Self::new(
            SellmeierCoefficients {
                a: 2.7359,
                b: 0.01878,
                c: 0.01822,
                d: 0.01354,
            },
            SellmeierCoefficients {
                a: 2.3753,
                b: 0.01224,
                c: 0.01667,
                d: 0.01516,
            },
            29.7_f64.to_radians(),
            Aperture {
                width_mm: 6.0,
                height_mm: 6.0,
            },
        )
        .expect("built-in BBO coefficients are valid")
    }

    /// Ordinary index at `lambda_nm`.
    pub fn n_ordinary(&self, lambda_nm: f64) -> Result<f64, OpticsError> {
        self.ordinary.index(lambda_nm)
    }

    /// Principal extraordinary index at `lambda_nm`.
    pub fn n_extraordinary_principal(&self, lambda_nm: f64) -> Result<f64, OpticsError> {
        self.extraordinary.index(lambda_nm)
    }

    /// Extraordinary index seen by a wave at angle `theta_rad` to the optic
    /// axis. Continuous in `theta`: equals `n_o` along the axis and tends to
    /// the principal `n_e` as `theta -> pi/2`.
    pub fn n_extraordinary_at_angle(
        &self,
        lambda_nm: f64,
        theta_rad: f64,
    ) -> Result<f64, OpticsError> {
        if !(theta_rad >= 0.0 && theta_rad < std::f64::consts::FRAC_PI_2) {
            return Err(OpticsError::AngleOutOfDomain { theta_rad });
        }
        let no = self.ordinary.index(lambda_nm)?;
        let ne = self.extraordinary.index(lambda_nm)?;
        let t = theta_rad.tan();
        let rt = no / ne * t;
        Ok(no * ((1.0 + t * t) / (1.0 + rt * rt)).sqrt())
    }
}

/// Extraordinary index at propagation angle `theta_rad`; see
/// [`UniaxialCrystal::n_extraordinary_at_angle`].
pub fn n_extraordinary_at_angle(
    crystal: &UniaxialCrystal,
    lambda_nm: f64,
    theta_rad: f64,
) -> Result<f64, OpticsError> {
    crystal.n_extraordinary_at_angle(lambda_nm, theta_rad)
}
