//! Simulation and analysis of the spatial distribution of spontaneous
//! parametric down-converted (SPDC) photon pairs on a detector plane, for
//! Gaussian and higher-order optical-vortex pump beams.
//!
//! The pipeline mirrors the physics of a non-collinear type-I (e -> o + o)
//! down-conversion experiment in a negative uniaxial crystal:
//!
//! 1. [`optics`] — Sellmeier dispersion and the angle-tuned extraordinary
//!    index of the crystal.
//! 2. [`phasematch`] — energy conservation and transverse/longitudinal
//!    momentum matching, solved for the signal/idler emission half-angles,
//!    plus exit-face refraction to external angles.
//! 3. [`beam`] — sampled intensity grids for vortex pump beams
//!    `I(r) = I0 (r^2)^l exp(-r^2/sigma^2)` and 2-D least-squares recovery
//!    of beam parameters.
//! 4. [`ring_synth`] — accumulation of per-point, per-wavelength emission
//!    rings into a detector-plane image, integrated over the interference
//!    filter band; a brute-force direct path and an equivalent FFT
//!    convolution fast path.
//! 5. [`analysis`] — radial profiles, ring-width fits, FWHM and dual-ring
//!    metrics, and the three parameter sweeps (pump width, vortex order,
//!    critical beam size).
//!
//! Units: wavelengths are nanometres at every public interface, transverse
//! lengths and pixel pitches are millimetres, angles are radians.

pub mod analysis;
pub mod beam;
mod fitting;
pub mod io;
pub mod optics;
pub mod phasematch;
pub mod ring_synth;

pub use analysis::{
    detect_dual_rings, find_critical_width, fit_ring_gaussian, fwhm, radial_profile,
    sweep_pump_width, sweep_vortex_order, AnalysisError, CriticalWidth, LineFit, OrderSweep,
    OrderSweepRow, PipelineSetup, ProfileMode, RadialProfile, RingFit, RingMetrics, SweepFailure,
    SynthesisPath, WidthSweep, WidthSweepRow,
};
pub use beam::{
    bin_sum, clip_to_aperture, fit_beam_profile, peak_radius, render_beam, BeamError, BeamFit,
    BeamSpec, FitOptions, GridGeometry, IntensityGrid,
};
pub use optics::{
    n_extraordinary_at_angle, sellmeier_index, Aperture, OpticsError, SellmeierCoefficients,
    UniaxialCrystal,
};
pub use phasematch::{
    external_angle, find_phasematch_theta, idler_wavelength, longitudinal_residual,
    solve_emission_angles, EmissionSolution, PhaseMatchError, PhotonTriplet,
};
pub use ring_synth::{
    build_kernels, render_ring_circle, synthesize_convolution, synthesize_direct,
    DetectorGeometry, FilterBand, Rasterization, RingKernel, SpdcImage, SynthError,
};
