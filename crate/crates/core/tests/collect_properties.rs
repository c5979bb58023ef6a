use std::f64::consts::PI;

use proptest::prelude::*;
use tack_core::collect::{
    dipole_cap_fraction, solid_angle, weighted_fraction_closed_form, EmissionModel, SolidAngleMode,
};
use tack_core::geometry::{MirrorSpec, NeedleSpec};

/// Dipole share of the cap `[theta1, π]` by direct integration in `u = cos θ`.
///
/// After the azimuthal average the integrand is quadratic in `u`, so Simpson's
/// rule in `u` and the trapezoid rule in `φ` are both exact.
fn cap_by_integration(chi: f64, theta1: f64) -> f64 {
    let axis = (chi.sin(), chi.cos());
    let density = |u: f64, phi: f64| {
        let s = (1.0 - u * u).max(0.0).sqrt();
        let proj = s * phi.cos() * axis.0 + u * axis.1;
        3.0 / (8.0 * PI) * (1.0 - proj * proj)
    };
    let azimuthal = |u: f64| {
        let m = 64;
        (0..m).map(|k| density(u, 2.0 * PI * k as f64 / m as f64)).sum::<f64>() * 2.0 * PI / m as f64
    };
    let (lo, hi) = (-1.0, theta1.cos());
    (hi - lo) / 6.0 * (azimuthal(lo) + 4.0 * azimuthal(0.5 * (lo + hi)) + azimuthal(hi))
}

#[test]
fn dipole_cap_matches_integration_at_reference_angle() {
    for chi in [0.0, 0.3, PI / 2.0] {
        let t = 102.15f64.to_radians();
        assert!((dipole_cap_fraction(chi, t) - cap_by_integration(chi, t)).abs() < 1e-9);
    }
    // axial dipole closed form (2 - c)(1 + c)^2 / 4
    let c = 102.15f64.to_radians().cos();
    assert!((dipole_cap_fraction(0.0, 102.15f64.to_radians()) - 0.25 * (2.0 - c) * (1.0 + c).powi(2)).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn dipole_cap_closed_form_matches_integration(chi in 0.0f64..PI, theta1 in 0.0f64..PI) {
        prop_assert!((dipole_cap_fraction(chi, theta1) - cap_by_integration(chi, theta1)).abs() < 1e-9);
    }

    #[test]
    fn dipole_quadrature_matches_closed_form(ion_z in 1.2e-3f64..4.0e-3, chi in 0.0f64..PI, needle in any::<bool>()) {
        let mirror = MirrorSpec::tack_default();
        let n = NeedleSpec { tip_z: 1.0e-3, ..NeedleSpec::tack_default() };
        let needle = needle.then_some(&n);
        let emission = EmissionModel::tilted_dipole(chi);
        let quad = solid_angle(ion_z, &mirror, needle, &emission, SolidAngleMode::Quadrature).unwrap();
        let closed = weighted_fraction_closed_form(ion_z, &mirror, needle, &emission).unwrap();
        prop_assert!((quad.weighted_fraction - closed).abs() <= 1e-9 * closed.max(1e-3));
    }

    #[test]
    fn isotropic_weighting_equals_geometry(ion_z in 1.2e-3f64..4.0e-3) {
        let f = solid_angle(ion_z, &MirrorSpec::tack_default(), None, &EmissionModel::Isotropic, SolidAngleMode::Quadrature).unwrap();
        prop_assert!((f.weighted_fraction - f.geometric_fraction).abs() < 1e-14);
    }

    #[test]
    fn larger_hole_collects_less(ion_z in 1.2e-3f64..4.0e-3, a in 0.5e-3f64..4.0e-3, b in 0.5e-3f64..4.0e-3) {
        let (small, large) = (a.min(b), a.max(b));
        let fraction = |hole: f64| {
            let mirror = MirrorSpec { vertex_hole_diameter: hole, ..MirrorSpec::tack_default() };
            solid_angle(ion_z, &mirror, None, &EmissionModel::Isotropic, SolidAngleMode::Quadrature)
                .unwrap()
                .geometric_fraction
        };
        prop_assert!(fraction(large) <= fraction(small) + 1e-15);
    }

    #[test]
    fn needle_never_adds_light(ion_z in 1.8e-3f64..4.0e-3, tip in 0.2e-3f64..1.6e-3) {
        let mirror = MirrorSpec::tack_default();
        let needle = NeedleSpec { tip_z: tip, ..NeedleSpec::tack_default() };
        let with = solid_angle(ion_z, &mirror, Some(&needle), &EmissionModel::axial_dipole(), SolidAngleMode::Quadrature).unwrap();
        let without = solid_angle(ion_z, &mirror, None, &EmissionModel::axial_dipole(), SolidAngleMode::Quadrature).unwrap();
        prop_assert!(with.geometric_fraction <= without.geometric_fraction + 1e-15);
        prop_assert!(with.weighted_fraction <= without.weighted_fraction + 1e-15);
    }
}

#[test]
fn monte_carlo_agrees_with_quadrature() {
    let mirror = MirrorSpec::tack_default();
    let needle = NeedleSpec::tack_default();
    for (k, ion_z) in [2.0e-3, 2.25e-3, 3.0e-3].into_iter().enumerate() {
        for emission in [EmissionModel::Isotropic, EmissionModel::tilted_dipole(0.7)] {
            let q = solid_angle(ion_z, &mirror, Some(&needle), &emission, SolidAngleMode::Quadrature).unwrap();
            let mc = solid_angle(
                ion_z,
                &mirror,
                Some(&needle),
                &emission,
                SolidAngleMode::MonteCarlo { samples: 400_000, seed: k as u64 },
            )
            .unwrap();
            assert!((mc.geometric_fraction - q.geometric_fraction).abs() <= 3.0 * mc.geometric_std_error);
            assert!((mc.weighted_fraction - q.weighted_fraction).abs() <= 3.0 * mc.weighted_std_error);
        }
    }
}

#[test]
fn monte_carlo_is_reproducible() {
    let mirror = MirrorSpec::tack_default();
    let run = || {
        solid_angle(2.25e-3, &mirror, None, &EmissionModel::axial_dipole(), SolidAngleMode::MonteCarlo { samples: 50_000, seed: 9 })
            .unwrap()
    };
    assert_eq!(run(), run());
}
