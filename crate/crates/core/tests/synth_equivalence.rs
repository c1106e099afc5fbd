//! Direct-vs-convolution path equivalence on randomized inputs, plus the
//! physics-level checks of the synthesized rings: azimuthal symmetry,
//! linearity, and the ring profile against an independent 1-D quadrature of
//! the annulus convolution.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spdc_core::{
    radial_profile, render_beam, synthesize_convolution, synthesize_direct, BeamSpec,
    DetectorGeometry, GridGeometry, IntensityGrid, PhotonTriplet, ProfileMode, RingKernel,
    SpdcImage,
};

fn kernel(r_signal: f64, r_idler: f64, weight: f64) -> RingKernel {
    RingKernel {
        triplet: PhotonTriplet {
            lambda_p_nm: 405.0,
            lambda_s_nm: 810.0,
            lambda_i_nm: 810.0,
        },
        r_signal_mm: r_signal,
        r_idler_mm: r_idler,
        weight,
    }
}

fn relative_l2(a: &SpdcImage, b: &SpdcImage) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, y) in a.values.iter().zip(&b.values) {
        num += (x - y) * (x - y);
        den += x * x;
    }
    (num / den).sqrt()
}

#[test]
fn paths_agree_on_randomized_cases() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for case in 0..20 {
        let det_n = 96 + 16 * (case % 4);
        let pitch = [0.5, 1.0, 0.25][case % 3];
        let det = DetectorGeometry::new(100.0, det_n, det_n, pitch, (0.0, 0.0)).unwrap();
        let pump_n = 16 + 8 * (case % 3); // parity matches det_n (all even)
        let geometry = GridGeometry::centered(pump_n, pump_n, pitch, (0.0, 0.0)).unwrap();
        let values: Vec<f64> = (0..pump_n * pump_n)
            .map(|_| {
                if rng.gen_bool(0.7) {
                    rng.gen_range(0.0..3.0)
                } else {
                    0.0
                }
            })
            .collect();
        let pump = IntensityGrid { geometry, values };
        let n_kernels = 1 + case % 3;
        let max_r = pitch * (det_n as f64 / 2.0 - pump_n as f64 / 2.0 - 4.0);
        let kernels: Vec<RingKernel> = (0..n_kernels)
            .map(|_| {
                kernel(
                    rng.gen_range(0.2 * max_r..max_r),
                    rng.gen_range(0.2 * max_r..max_r),
                    rng.gen_range(0.1..1.0),
                )
            })
            .collect();
        let direct = synthesize_direct(&pump, &kernels, &det).unwrap();
        let conv = synthesize_convolution(&pump, &kernels, &det).unwrap();
        let err = relative_l2(&direct, &conv);
        assert!(err < 1e-6, "case {case}: relative L2 {err:.3e}");
    }
}

#[test]
fn synthesis_is_linear() {
    let det = DetectorGeometry::new(100.0, 128, 128, 0.5, (0.0, 0.0)).unwrap();
    let geometry = GridGeometry::centered(24, 24, 0.5, (0.0, 0.0)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let a_vals: Vec<f64> = (0..24 * 24).map(|_| rng.gen_range(0.0..1.0)).collect();
    let b_vals: Vec<f64> = (0..24 * 24).map(|_| rng.gen_range(0.0..1.0)).collect();
    let (alpha, beta) = (1.7, 0.4);
    let mixed: Vec<f64> = a_vals
        .iter()
        .zip(&b_vals)
        .map(|(a, b)| alpha * a + beta * b)
        .collect();
    let kernels = vec![kernel(12.0, 15.5, 0.5), kernel(14.0, 13.0, 0.5)];
    let to_grid = |values: Vec<f64>| IntensityGrid { geometry, values };
    let img_a = synthesize_direct(&to_grid(a_vals), &kernels, &det).unwrap();
    let img_b = synthesize_direct(&to_grid(b_vals), &kernels, &det).unwrap();
    let img_mix = synthesize_direct(&to_grid(mixed), &kernels, &det).unwrap();
    for i in 0..img_mix.values.len() {
        let expected = alpha * img_a.values[i] + beta * img_b.values[i];
        assert!(
            (img_mix.values[i] - expected).abs() <= 1e-12 * expected.abs().max(1.0),
            "pixel {i}"
        );
    }
}

#[test]
fn azimuthal_symmetry_of_centered_gaussian() {
    // symmetric pump -> azimuthal variance at fixed radius is rasterization
    // noise only (< 1% of the mean on bright annuli)
    let det = DetectorGeometry::new(100.0, 256, 256, 0.1, (0.0, 0.0)).unwrap();
    let spec = BeamSpec::new(0, 0.8, 1.0, (0.0, 0.0)).unwrap();
    let geometry = GridGeometry::centered(80, 80, 0.1, (0.0, 0.0)).unwrap();
    let pump = render_beam(&spec, &geometry).unwrap();
    let kernels = vec![kernel(7.6, 7.9, 1.0)];
    let image = synthesize_convolution(&pump, &kernels, &det).unwrap();
    let origin = image.geometry.origin_mm();
    let peak_bin_mean = {
        let profile = radial_profile(&image, (0.0, 0.0), ProfileMode::Azimuthal).unwrap();
        profile.intensity.iter().cloned().fold(0.0, f64::max)
    };
    // gather per-annulus statistics directly
    let mut sums = vec![0.0; 128];
    let mut sq = vec![0.0; 128];
    let mut counts = vec![0u32; 128];
    for iy in 0..256 {
        for ix in 0..256 {
            let x = origin.0 + 0.1 * ix as f64;
            let y = origin.1 + 0.1 * iy as f64;
            let bin = ((x * x + y * y).sqrt() / 0.1).floor() as usize;
            if bin < 128 {
                let v = image.at(ix, iy);
                sums[bin] += v;
                sq[bin] += v * v;
                counts[bin] += 1;
            }
        }
    }
    for bin in 0..128 {
        if counts[bin] < 8 {
            continue;
        }
        let mean = sums[bin] / counts[bin] as f64;
        if mean < 0.25 * peak_bin_mean {
            continue; // ring flanks mix ring and background pixels
        }
        let var = (sq[bin] / counts[bin] as f64 - mean * mean).max(0.0);
        let rel = var.sqrt() / mean;
        assert!(rel < 0.1, "bin {bin}: azimuthal spread {rel:.3}");
    }
}

// Continuum oracle: the azimuthal profile of (pump ring-circle convolution)
// for a rotationally symmetric pump f(s) is
//   I(d) = sum_rings w int f(s) 2 R / (d sin(phi*)) ds,
// with cos(phi*) = (d^2 + s^2 - R^2) / (2 d s), integrated by substitution
// that absorbs the inverse-sqrt endpoints.
fn quadrature_profile(ds: &[f64], rings: &[(f64, f64)], sigma: f64) -> Vec<f64> {
    let n = 4000;
    let mut out = vec![0.0; ds.len()];
    for (i, &d) in ds.iter().enumerate() {
        let mut acc = 0.0;
        for &(radius, weight) in rings {
            let lo = (d - radius).abs();
            let hi = d + radius;
            for k in 0..n {
                let t = (k as f64 + 0.5) * std::f64::consts::PI / n as f64;
                let s = lo + (hi - lo) * (1.0 - t.cos()) / 2.0;
                let ds_dt = (hi - lo) / 2.0 * t.sin() * std::f64::consts::PI / n as f64;
                let cos_phi = ((d * d + s * s - radius * radius) / (2.0 * d * s)).clamp(-1.0, 1.0);
                let sin_phi = (1.0 - cos_phi * cos_phi).sqrt().max(1e-12);
                let f = (-s * s / (sigma * sigma)).exp();
                acc += weight * f * 2.0 * radius / (d * sin_phi) * ds_dt;
            }
        }
        out[i] = acc;
    }
    out
}

#[test]
fn gaussian_pump_profile_matches_radial_quadrature() {
    let pitch = 0.05;
    let det = DetectorGeometry::new(100.0, 480, 480, pitch, (0.0, 0.0)).unwrap();
    let kernels = vec![kernel(7.6, 7.6, 1.0)];
    let mut widths = Vec::new();
    for sigma in [0.3, 0.5, 0.8] {
        let spec = BeamSpec::new(0, sigma, 1.0, (0.0, 0.0)).unwrap();
        let pump_n = ((8.0 * sigma / pitch).ceil() as usize + 17) & !1; // even
        let geometry = GridGeometry::centered(pump_n, pump_n, pitch, (0.0, 0.0)).unwrap();
        let pump = render_beam(&spec, &geometry).unwrap();
        let image = synthesize_convolution(&pump, &kernels, &det).unwrap();
        let profile = radial_profile(&image, (0.0, 0.0), ProfileMode::Azimuthal).unwrap();
        let oracle = quadrature_profile(&profile.radii_mm, &[(7.6, 2.0)], sigma);
        // compare shapes, peak-normalised, where the ring is bright
        let peak_m = profile.intensity.iter().cloned().fold(0.0, f64::max);
        let peak_o = oracle.iter().cloned().fold(0.0, f64::max);
        for (k, (&m, &o)) in profile.intensity.iter().zip(&oracle).enumerate() {
            let (m, o) = (m / peak_m, o / peak_o);
            if o > 0.1 {
                assert!(
                    (m - o).abs() < 0.04,
                    "sigma {sigma}, bin {k}: measured {m:.4} vs quadrature {o:.4}"
                );
            }
        }
        let fit = spdc_core::fit_ring_gaussian(&profile).unwrap();
        // the profile is Gaussian to within a few percent of its peak
        assert!(
            fit.rms_residual < 0.05 * peak_m,
            "sigma {sigma}: fit rms {} vs peak {peak_m}",
            fit.rms_residual
        );
        widths.push(fit.sigma_ring_mm);
    }
    assert!(
        widths[0] < widths[1] && widths[1] < widths[2],
        "ring width should grow with pump width: {widths:?}"
    );
}

#[test]
fn kernels_carry_band_radii() {
    use spdc_core::{build_kernels, FilterBand, SynthError, UniaxialCrystal};
    let bbo = UniaxialCrystal::bbo();
    let theta = 29.7_f64.to_radians();
    let det = DetectorGeometry::new(100.0, 512, 512, 0.05, (0.0, 0.0)).unwrap();

    // degenerate single sample: both rings coincide at z tan(phi_ext)
    let single = FilterBand::uniform(810.0, 5.0, 1).unwrap();
    let kernels = build_kernels(&bbo, theta, 405.0, &single, &det).unwrap();
    assert_eq!(kernels.len(), 1);
    assert!((kernels[0].r_signal_mm - kernels[0].r_idler_mm).abs() < 1e-9);
    // z tan(phi_ext) with the externally refracted degenerate half-angle
    assert!((kernels[0].r_signal_mm - 7.6186).abs() < 0.1, "R {}", kernels[0].r_signal_mm);

    // full band: sorted by signal wavelength, weights normalised, and the
    // signal radius grows with wavelength while the idler radius shrinks
    let band = FilterBand::uniform(810.0, 5.0, 11).unwrap();
    let kernels = build_kernels(&bbo, theta, 405.0, &band, &det).unwrap();
    assert_eq!(kernels.len(), 11);
    assert!((kernels.iter().map(|k| k.weight).sum::<f64>() - 1.0).abs() < 1e-12);
    for pair in kernels.windows(2) {
        assert!(pair[1].triplet.lambda_s_nm > pair[0].triplet.lambda_s_nm);
        assert!(pair[1].r_signal_mm > pair[0].r_signal_mm);
        assert!(pair[1].r_idler_mm < pair[0].r_idler_mm);
    }
    // conjugate symmetry across the degenerate sample
    let first = kernels.first().unwrap();
    let last = kernels.last().unwrap();
    assert!((first.r_signal_mm - 7.5733).abs() < 0.05);
    assert!((first.r_idler_mm - last.r_signal_mm).abs() < 1e-3);

    // an unmatchable angle names the failing wavelength
    let err = build_kernels(&bbo, 22.0_f64.to_radians(), 405.0, &single, &det).unwrap_err();
    match err {
        SynthError::KernelSolve { lambda_s_nm, .. } => assert_eq!(lambda_s_nm, 810.0),
        other => panic!("unexpected error {other:?}"),
    }
}
