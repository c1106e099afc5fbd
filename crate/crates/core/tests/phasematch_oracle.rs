//! Independent cross-check of the emission-angle solver.
//!
//! The oracle below re-derives the longitudinal mismatch from the crystal
//! indices (eliminating the idler angle through sqrt(1 - sin^2) rather than
//! asin) and solves it by fixed-step bisection only, with no shared solver
//! code. The production solver must agree to better than 1e-9 rad across
//! the filter band.

use spdc_core::{external_angle, solve_emission_angles, UniaxialCrystal};

const THETA: f64 = 29.7 * std::f64::consts::PI / 180.0;

fn oracle_residual(
    crystal: &UniaxialCrystal,
    theta: f64,
    lambda_p: f64,
    lambda_s: f64,
    phi_s: f64,
) -> f64 {
    let lambda_i = 1.0 / (1.0 / lambda_p - 1.0 / lambda_s);
    let a = crystal.n_ordinary(lambda_s).unwrap() / lambda_s;
    let b = crystal.n_ordinary(lambda_i).unwrap() / lambda_i;
    let p = crystal.n_extraordinary_at_angle(lambda_p, theta).unwrap() / lambda_p;
    let sin_i = a / b * phi_s.sin();
    p - a * phi_s.cos() - b * (1.0 - sin_i * sin_i).sqrt()
}

fn oracle_bisect(crystal: &UniaxialCrystal, theta: f64, lambda_p: f64, lambda_s: f64) -> f64 {
    let (mut lo, mut hi) = (0.0_f64, 0.35_f64);
    let f_lo = oracle_residual(crystal, theta, lambda_p, lambda_s, lo);
    assert!(
        f_lo < 0.0 && oracle_residual(crystal, theta, lambda_p, lambda_s, hi) > 0.0,
        "oracle bracket must straddle the root"
    );
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if oracle_residual(crystal, theta, lambda_p, lambda_s, mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn degenerate_angles_against_oracle() {
    let bbo = UniaxialCrystal::bbo();
    let oracle_phi = oracle_bisect(&bbo, THETA, 405.0, 810.0);
    let sol = solve_emission_angles(&bbo, THETA, 405.0, 810.0).unwrap();
    assert!(
        (sol.signal_internal_rad - oracle_phi).abs() < 1e-9,
        "solver {} vs oracle {}",
        sol.signal_internal_rad,
        oracle_phi
    );
    // headline values: ~2.62 deg internal, ~4.36 deg external cone
    assert!((oracle_phi.to_degrees() - 2.62).abs() < 0.05);
    let n_o = bbo.n_ordinary(810.0).unwrap();
    let oracle_ext = external_angle(oracle_phi, n_o).unwrap();
    assert!((sol.signal_external_rad - oracle_ext).abs() < 1e-9);
    assert!((oracle_ext.to_degrees() - 4.36).abs() < 0.10);
}

#[test]
fn solver_matches_oracle_across_band() {
    let bbo = UniaxialCrystal::bbo();
    for k in 0..50 {
        let lambda_s = 805.0 + 10.0 * k as f64 / 49.0;
        let oracle_phi = oracle_bisect(&bbo, THETA, 405.0, lambda_s);
        let sol = solve_emission_angles(&bbo, THETA, 405.0, lambda_s).unwrap();
        let diff = (sol.signal_internal_rad - oracle_phi).abs();
        assert!(
            diff < 1e-9,
            "lambda_s = {lambda_s}: solver {} vs oracle {} (diff {diff:.3e})",
            sol.signal_internal_rad,
            oracle_phi
        );
    }
}

#[test]
fn solver_matches_oracle_across_theta() {
    let bbo = UniaxialCrystal::bbo();
    // the degenerate collinear boundary sits near 28.7 degrees; stay above
    for theta_deg in [29.0_f64, 29.7, 30.5, 31.5, 33.0] {
        let theta = theta_deg.to_radians();
        let oracle_phi = oracle_bisect(&bbo, theta, 405.0, 810.0);
        let sol = solve_emission_angles(&bbo, theta, 405.0, 810.0).unwrap();
        assert!((sol.signal_internal_rad - oracle_phi).abs() < 1e-9);
    }
}
