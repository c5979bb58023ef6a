//! The quoted figures of merit, measured against the configured setup.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::sync::Arc;
use std::time::Instant;

use tack_core::collect::{dipole_cap_fraction, na_equivalent, solid_angle, EmissionModel, NaEquivalent, SolidAngleMode};
use tack_core::corrector::{design, hyperbolic_collimator, verify, CorrectorDesignSpec, Orientation};
use tack_core::crystal::{classify, coulomb_length, relax, TrapModel};
use tack_core::field::{solve_laplace, BoxBoundary, SideCondition, SolveOptions};
use tack_core::geometry::{
    conic_sag, ConicKind, ElectrodeId, ElectrodeInfo, ElectrodeMask, ElectrodeRole, GridSpec, MirrorSegment,
    MirrorSpec, TrapGeometry,
};
use tack_core::pseudo::{needle_scan, pseudopotential, solve_trap, RfDrive, ScanTable, TrapAnalysis};
use tack_core::rays::{reflect, refract, Vec3};

use crate::config::{ConfigError, RunConfig};
use crate::run::{physics, solve_trap_for, uncorrected_image, RunError};

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub id: u8,
    pub quantity: &'static str,
    pub measured: String,
    pub target: &'static str,
    pub tolerance: &'static str,
    pub pass: bool,
}

#[derive(Debug)]
pub struct Report {
    pub rows: Vec<Row>,
    pub first_error: Option<RunError>,
}

impl Report {
    pub fn csv(&self) -> String {
        let mut out = String::from("criterion,quantity,measured,target,tolerance,status\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},\"{}\",\"{}\",\"{}\",{}",
                r.id,
                r.quantity,
                r.measured.replace('"', "'"),
                r.target,
                r.tolerance,
                if r.pass { "pass" } else { "fail" }
            );
        }
        out
    }

    pub fn table(&self) -> Vec<String> {
        self.rows
            .iter()
            .map(|r| {
                format!(
                    "[{}] {:>2} {:<28} measured {:<44} target {:<22} tolerance {}",
                    if r.pass { "PASS" } else { "FAIL" },
                    r.id,
                    r.quantity,
                    r.measured,
                    r.target,
                    r.tolerance
                )
            })
            .collect()
    }
}

/// Geometric fraction for an isotropic emitter without the needle, by quadrature.
pub fn collected_fraction(mirror: &MirrorSpec, ion_z: f64) -> Result<f64, RunError> {
    solid_angle(ion_z, mirror, None, &EmissionModel::Isotropic, SolidAngleMode::Quadrature)
        .map(|f| f.geometric_fraction)
        .map_err(physics)
}

pub fn na_for_fraction(fraction: f64) -> Result<NaEquivalent, RunError> {
    na_equivalent(fraction).map_err(physics)
}

pub fn trap_analysis(config: &RunConfig) -> Result<TrapAnalysis, RunError> {
    let solution = solve_trap_for(config)?;
    solution.analysis.map_err(|e| RunError::Physics {
        reason: "TrapAnalysis".into(),
        message: e,
    })
}

/// Tip positions covering the central 1 mm of travel about the configured tip.
pub fn central_tips(config: &RunConfig) -> Result<Vec<f64>, RunError> {
    let tip = config
        .geometry()?
        .needle
        .ok_or_else(|| ConfigError::Invalid("the needle scan needs a needle".into()))?
        .tip_z;
    Ok((0..5).map(|k| tip - 0.5e-3 + 0.25e-3 * k as f64).collect())
}

pub fn central_scan(config: &RunConfig) -> Result<ScanTable, RunError> {
    let tips = central_tips(config)?;
    Ok(needle_scan(
        &config.geometry()?,
        &config.grid_spec(),
        &tips,
        &config.drive(),
        &config.ion(),
        &config.solve_options(),
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrystalCheck {
    pub shells: Vec<usize>,
    pub planarity: f64,
    /// Two-ion separation, m.
    pub pair_separation: f64,
    /// `(2 k q² / (m ω_r²))^{1/3}`, m.
    pub pair_closed_form: f64,
    pub seconds: f64,
}

/// Seven ions and an ion pair in the configured harmonic trap.
pub fn crystal_check(config: &RunConfig) -> Result<CrystalCheck, RunError> {
    let started = Instant::now();
    let ion = config.ion();
    let radial = config.crystal.radial_frequency * 1e6;
    let trap = TrapModel::Harmonic {
        axial: config.crystal.axial_frequency * 1e6,
        radial,
    };
    let options = config.relax_options();
    let seven = relax(7, &trap, &ion, &options).map_err(physics)?;
    let class = classify(&seven);
    let pair = relax(2, &trap, &ion, &options).map_err(physics)?;
    let pair_separation = (pair.positions[0] - pair.positions[1]).norm();
    // ions sit on the weak (radial) axis
    let pair_closed_form = 2f64.cbrt() * coulomb_length(&ion, 2.0 * PI * radial);
    Ok(CrystalCheck {
        shells: class.shells,
        planarity: class.planarity,
        pair_separation,
        pair_closed_form,
        seconds: started.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrectorCheck {
    pub direction_spread: f64,
    pub ion_referred_rms: f64,
    pub diffraction_scale: f64,
    /// Largest sag difference from the analytic collimator for a source at the centre of curvature, m.
    pub degenerate_sag_error: f64,
    pub seconds: f64,
}

pub fn corrector_check(config: &RunConfig) -> Result<CorrectorCheck, RunError> {
    let started = Instant::now();
    let spec = config.corrector_spec();
    let profile = design(&spec).map_err(physics)?;
    let v = verify(&profile, &spec, &config.verify_options()).map_err(physics)?;
    let degenerate_sag_error = degenerate_design_error(&spec)?;
    Ok(CorrectorCheck {
        direction_spread: v.direction_spread,
        ion_referred_rms: v.ion_referred_rms,
        diffraction_scale: v.diffraction_scale,
        degenerate_sag_error,
        seconds: started.elapsed().as_secs_f64(),
    })
}

/// Source at the centre of curvature: the designed face must be the plano-hyperbolic collimator.
fn degenerate_design_error(base: &CorrectorDesignSpec) -> Result<f64, RunError> {
    let r = base.mirror.radius_of_curvature;
    let spec = CorrectorDesignSpec {
        source_z: r,
        window: None,
        front_face_z: 5.0 * r,
        center_thickness: 2.0 * r,
        orientation: Orientation::AsphereFirst,
        design_ray_count: 400,
        // a hyperbola collimates only rays with cos θ > 1/n
        max_angle: Some(30f64.to_radians()),
        ..base.clone()
    };
    let profile = design(&spec).map_err(physics)?;
    let hyperbola = hyperbolic_collimator(spec.front_face_z - r, spec.material_index, profile.r_max());
    Ok(profile
        .samples
        .iter()
        .map(|s| (s.1 - conic_sag(hyperbola.curvature, hyperbola.conic_constant, s.0)).abs())
        .fold(0.0, f64::max))
}

/// Share of the uncorrected image within the configured ion-referred radius.
pub fn uncorrected_encircled(config: &RunConfig) -> Result<f64, RunError> {
    Ok(uncorrected_image(config)?.encircled)
}

/// Minimum heights with RF on the top mirror band only, then on the upper two bands.
///
/// The mirror is an R = 2 mm, k = -0.5 ellipsoid of 5.6 mm aperture cut into
/// three equal height bands; there is no needle.
pub fn segmented_heights(config: &RunConfig) -> Result<(f64, f64), RunError> {
    let mut geometry: TrapGeometry = config.geometry()?;
    geometry.needle = None;
    geometry.mirror = MirrorSpec {
        radius_of_curvature: 2.0e-3,
        aperture_diameter: 5.6e-3,
        conic_kind: ConicKind::Ellipsoid,
        conic_constant: -0.5,
        ..geometry.mirror
    };
    let band = geometry.mirror.rim_z() / 3.0;
    let grid = GridSpec {
        spacing: config.grid_spec().spacing.max(20e-6),
        ..config.grid_spec()
    };
    let mut height = |upper_two: bool| -> Result<f64, RunError> {
        geometry.mirror_segments = vec![
            MirrorSegment {
                z_min: f64::NEG_INFINITY,
                z_max: band,
                role: ElectrodeRole::Ground,
            },
            MirrorSegment {
                z_min: band,
                z_max: 2.0 * band,
                role: if upper_two { ElectrodeRole::Rf } else { ElectrodeRole::Ground },
            },
            MirrorSegment {
                z_min: 2.0 * band,
                z_max: f64::INFINITY,
                role: ElectrodeRole::Rf,
            },
        ];
        let s = solve_trap(&geometry, &grid, &config.drive(), &config.ion(), &config.solve_options())
            .map_err(physics)?;
        s.analysis.map(|a| a.minimum_position.1).map_err(|e| RunError::Physics {
            reason: "TrapAnalysis".into(),
            message: e,
        })
    };
    Ok((height(false)?, height(true)?))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropertyCheck {
    /// Coaxial benchmark, largest error relative to the 1 V drive.
    pub coaxial_error_20um: f64,
    pub coaxial_error_40um: f64,
    /// Largest relative departure from Ψ ∝ V² and Ψ ∝ Ω⁻².
    pub scaling_error: f64,
    /// Largest `|n₁ sin θ₁ − n₂ sin θ₂|` and reflection angle error.
    pub snell_error: f64,
    pub reflection_error: f64,
    /// Largest difference between the dipole cap closed form and direct integration.
    pub dipole_error: f64,
    /// Largest Monte Carlo departure from quadrature, in standard errors.
    pub monte_carlo_sigma: f64,
}

pub fn coaxial_error(spacing: f64) -> Result<f64, RunError> {
    const INNER: f64 = 1.0e-3;
    const OUTER: f64 = 10.0e-3;
    let grid = GridSpec {
        r_max: OUTER,
        z_min: 0.0,
        z_max: 10.0 * spacing,
        spacing,
    };
    let info = vec![ElectrodeInfo {
        name: "inner".into(),
        role: ElectrodeRole::Rf,
    }];
    let mask = Arc::new(ElectrodeMask::from_fn(grid, info, |r, _| {
        (r <= INNER * (1.0 + 1e-12)).then_some(ElectrodeId(0))
    }));
    let options = SolveOptions {
        tolerance: 1e-13,
        boundary: BoxBoundary {
            outer_r: SideCondition::Dirichlet(0.0),
            lower_z: SideCondition::Neumann,
            upper_z: SideCondition::Neumann,
        },
        ..SolveOptions::default()
    };
    let f = solve_laplace(&mask, &BTreeMap::from([(ElectrodeId(0), 1.0)]), &options)
        .map_err(physics)?
        .field;
    let mut worst: f64 = 0.0;
    for j in 0..f.nz() {
        for i in 0..f.nr() {
            let r = f.grid.r(i);
            if r > INNER {
                let exact = (OUTER / r).ln() / (OUTER / INNER).ln();
                worst = worst.max((f.at(i, j) - exact).abs());
            }
        }
    }
    Ok(worst)
}

fn scaling_error(config: &RunConfig) -> Result<f64, RunError> {
    let grid = GridSpec {
        spacing: 0.1e-3,
        ..config.grid_spec()
    };
    let base_drive = config.drive();
    let solution = solve_trap(
        &config.geometry()?,
        &grid,
        &base_drive,
        &config.ion(),
        &SolveOptions::default(),
    )
    .map_err(physics)?;
    let ion = config.ion();
    let base = pseudopotential(&solution.rf_unit, &base_drive, &ion);
    let mut worst: f64 = 0.0;
    for factor in [0.5, 2.0, 3.7] {
        let louder = pseudopotential(
            &solution.rf_unit,
            &RfDrive {
                amplitude: base_drive.amplitude * factor,
                ..base_drive
            },
            &ion,
        );
        let faster = pseudopotential(
            &solution.rf_unit,
            &RfDrive {
                frequency: base_drive.frequency * factor,
                ..base_drive
            },
            &ion,
        );
        for ((b, l), f) in base.values.iter().zip(&louder.values).zip(&faster.values) {
            if *b > 0.0 {
                worst = worst.max((l / (b * factor * factor) - 1.0).abs());
                worst = worst.max((f * factor * factor / b - 1.0).abs());
            }
        }
    }
    Ok(worst)
}

fn snell_errors() -> (f64, f64) {
    let (mut snell, mut reflection): (f64, f64) = (0.0, 0.0);
    let indices = [1.0, 1.33, 1.458, 1.49, 1.8];
    for a in 0..40 {
        let incidence = 1.55 * a as f64 / 39.0;
        for b in 0..8 {
            let tilt = 0.9 * b as f64 / 7.0;
            let n = Vec3::new(tilt.sin(), 0.0, tilt.cos());
            let e1 = n.cross(&Vec3::y()).normalize();
            let e2 = n.cross(&e1);
            let phi = 0.7 * b as f64;
            let tangent = e1 * phi.cos() + e2 * phi.sin();
            let d = (-n * incidence.cos() + tangent * incidence.sin()).normalize();
            let sin_i = d.cross(&n).norm();
            for n1 in indices {
                for n2 in indices {
                    if let Ok(t) = refract(&d, &n, n1, n2) {
                        snell = snell.max((n1 * sin_i - n2 * t.cross(&n).norm()).abs());
                    }
                }
            }
            let r = reflect(&d, &n);
            reflection = reflection.max((r.dot(&n) + d.dot(&n)).abs().max((r.cross(&n).norm() - sin_i).abs()));
        }
    }
    (snell, reflection)
}

/// Cap share by Simpson's rule in `cos θ` (exact for the quadratic integrand) and the trapezoid rule in `φ`.
fn dipole_cap_integrated(chi: f64, theta1: f64) -> f64 {
    let density = |u: f64, phi: f64| {
        let s = (1.0 - u * u).max(0.0).sqrt();
        let proj = s * phi.cos() * chi.sin() + u * chi.cos();
        3.0 / (8.0 * PI) * (1.0 - proj * proj)
    };
    let ring = |u: f64| (0..64).map(|k| density(u, 2.0 * PI * k as f64 / 64.0)).sum::<f64>() * 2.0 * PI / 64.0;
    let (lo, hi) = (-1.0, theta1.cos());
    (hi - lo) / 6.0 * (ring(lo) + 4.0 * ring(0.5 * (lo + hi)) + ring(hi))
}

fn dipole_error() -> f64 {
    let mut worst: f64 = 0.0;
    for chi in [0.0, 0.4, 1.0, PI / 2.0] {
        for deg in [0.0, 30.0, 90.0, 102.15, 150.0, 180.0] {
            let t = f64::to_radians(deg);
            worst = worst.max((dipole_cap_fraction(chi, t) - dipole_cap_integrated(chi, t)).abs());
        }
    }
    worst
}

fn monte_carlo_sigma(config: &RunConfig) -> Result<f64, RunError> {
    let mirror = config.mirror();
    let geometry = config.geometry()?;
    let mut worst: f64 = 0.0;
    for (k, ion_z) in [mirror.focus_z(), mirror.focus_z() + 0.25e-3].into_iter().enumerate() {
        for emission in [EmissionModel::Isotropic, EmissionModel::axial_dipole()] {
            let q = solid_angle(ion_z, &mirror, geometry.needle.as_ref(), &emission, SolidAngleMode::Quadrature)
                .map_err(physics)?;
            let mc = solid_angle(
                ion_z,
                &mirror,
                geometry.needle.as_ref(),
                &emission,
                SolidAngleMode::MonteCarlo {
                    samples: 1_000_000,
                    seed: config.seed.wrapping_add(k as u64),
                },
            )
            .map_err(physics)?;
            worst = worst.max((mc.geometric_fraction - q.geometric_fraction).abs() / mc.geometric_std_error);
            worst = worst.max((mc.weighted_fraction - q.weighted_fraction).abs() / mc.weighted_std_error);
        }
    }
    Ok(worst)
}

pub fn property_check(config: &RunConfig) -> Result<PropertyCheck, RunError> {
    let (snell_error, reflection_error) = snell_errors();
    Ok(PropertyCheck {
        coaxial_error_20um: coaxial_error(20e-6)?,
        coaxial_error_40um: coaxial_error(40e-6)?,
        scaling_error: scaling_error(config)?,
        snell_error,
        reflection_error,
        dipole_error: dipole_error(),
        monte_carlo_sigma: monte_carlo_sigma(config)?,
    })
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let t = Instant::now();
    let v = f();
    (v, t.elapsed().as_secs_f64())
}

/// Runs every criterion; failures to compute become failed rows and the first is kept.
pub fn reproduce(config: &RunConfig) -> Report {
    let mut rows = Vec::new();
    let mut first_error: Option<RunError> = None;
    let mut record = |id, quantity, target, tolerance, result: Result<(String, bool), RunError>| {
        let (measured, pass) = match result {
            Ok(v) => v,
            Err(e) => {
                let text = format!("error: {e}");
                first_error.get_or_insert(e);
                (text, false)
            }
        };
        rows.push(Row {
            id,
            quantity,
            measured,
            target,
            tolerance,
            pass,
        });
    };
    let mirror = config.mirror();

    let (f, secs) = timed(|| collected_fraction(&mirror, mirror.focus_z()));
    record(1, "solid angle from focus", "38.6%", "±0.005, <1 s", f.map(|f| {
        (format!("{f:.4} in {secs:.3} s"), (f - 0.386).abs() <= 0.005 && secs < 1.0)
    }));
    let (f, secs) = timed(|| collected_fraction(&mirror, mirror.focus_z() + 0.25e-3));
    record(2, "solid angle, focus + 0.25 mm", "35%", "±0.005, <1 s", f.map(|f| {
        (format!("{f:.4} in {secs:.3} s"), (f - 0.350).abs() <= 0.005 && secs < 1.0)
    }));
    record(3, "NA equivalent of 24%", "3.0 sr, NA 0.85", "±0.1 sr, ±0.01", na_for_fraction(0.24).map(|na| {
        (
            format!("{:.3} sr, NA {:.4}", na.solid_angle, na.numerical_aperture),
            (na.solid_angle - 3.0).abs() <= 0.1 && (na.numerical_aperture - 0.85).abs() <= 0.01,
        )
    }));

    let trap = trap_analysis(config);
    let (trap, trap_err) = match trap {
        Ok(a) => (Some(a), None),
        Err(e) => (None, Some(e)),
    };
    let trap_result = |f: &dyn Fn(&TrapAnalysis) -> (String, bool)| match (&trap, &trap_err) {
        (Some(a), _) => Ok(f(a)),
        (None, Some(e)) => Err(RunError::Physics {
            reason: "TrapAnalysis".into(),
            message: e.to_string(),
        }),
        (None, None) => unreachable!(),
    };
    record(4, "ion height above tip", "0.55 mm", "±15%", trap_result(&|a| {
        let d = a.distance_from_tip.unwrap_or(f64::NAN);
        (format!("{:.4} mm", d * 1e3), (d / 0.55e-3 - 1.0).abs() <= 0.15)
    }));
    record(5, "trap depth", "0.05 eV", "factor 2", trap_result(&|a| {
        (format!("{:.4} eV", a.depth), (0.025..=0.1).contains(&a.depth))
    }));
    record(6, "secular ratio axial/radial", "420/200 kHz = 2.1", "axial > radial, ±30%", trap_result(&|a| {
        let f = a.secular_frequencies;
        (
            format!("{:.0}/{:.0} Hz = {:.3}", f.axial, f.radial, f.ratio()),
            f.axial > f.radial && (f.ratio() / 2.1 - 1.0).abs() <= 0.3,
        )
    }));

    record(7, "needle scan, central 1 mm", "linear, depth ~constant", "R² > 0.99, ±50%", central_scan(config).map(|t| {
        let fit = t.linear_fit(None);
        let var = t.depth_variation(None);
        match (fit, var) {
            (Some(fit), Some(var)) => (
                format!("R² {:.5}, slope {:.3}, depth ±{:.0}%", fit.r_squared, fit.slope, var * 100.0),
                fit.r_squared > 0.99 && var < 0.5,
            ),
            _ => ("too few valid points".into(), false),
        }
    }));

    record(8, "7-ion crystal and ion pair", "shells [1,6], planar", "planarity < 0.05, pair 0.1%, <10 s", crystal_check(config).map(|c| {
        let pair = (c.pair_separation / c.pair_closed_form - 1.0).abs();
        (
            format!("{:?}, planarity {:.2e}, pair {:.2e} in {:.2} s", c.shells, c.planarity, pair, c.seconds),
            c.shells == [1, 6] && c.planarity < 0.05 && pair < 1e-3 && c.seconds < 10.0,
        )
    }));

    record(9, "corrector", "PSF 0.97 um, limit 1.15 um", "spread 1e-4, rms 1.15 um, 1 um sag, <30 s", corrector_check(config).map(|c| {
        (
            format!(
                "spread {:.2e} rad, rms {:.3e} um, sag {:.2e} um, {:.1} s",
                c.direction_spread,
                c.ion_referred_rms * 1e6,
                c.degenerate_sag_error * 1e6,
                c.seconds
            ),
            c.direction_spread <= 1e-4 && c.ion_referred_rms <= 1.15e-6 && c.degenerate_sag_error <= 1e-6 && c.seconds < 30.0,
        )
    }));

    record(10, "uncorrected image", "~90% dispersed", "< 20% within 10 um", uncorrected_encircled(config).map(|f| {
        (format!("{:.1}% within {} um", f * 100.0, config.optics.spot_radius * 1e3), f < 0.2)
    }));

    record(11, "segmented mirror", "top-only raises zone", "z(top) > z(upper two)", segmented_heights(config).map(|(top, two)| {
        (format!("{:.3} mm vs {:.3} mm", top * 1e3, two * 1e3), top > two)
    }));

    record(12, "property suites", "n/a", "see README", property_check(config).map(|p| {
        let ratio = p.coaxial_error_40um / p.coaxial_error_20um;
        (
            format!(
                "coax {:.1e} (x{:.1}), scaling {:.1e}, snell {:.1e}, dipole {:.1e}, MC {:.2} sigma",
                p.coaxial_error_20um,
                ratio,
                p.scaling_error,
                p.snell_error.max(p.reflection_error),
                p.dipole_error,
                p.monte_carlo_sigma
            ),
            p.coaxial_error_20um < 1e-3
                && ratio >= 3.0
                && p.scaling_error <= 1e-12
                && p.snell_error <= 1e-12
                && p.reflection_error <= 1e-12
                && p.dipole_error <= 1e-9
                && p.monte_carlo_sigma <= 3.0,
        )
    }));

    Report { rows, first_error }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn snell_and_dipole_checks_are_tight() {
        let (s, r) = snell_errors();
        assert!(s < 1e-12 && r < 1e-12);
        assert!(dipole_error() < 1e-9);
    }

    #[test]
    fn report_renders_every_row() {
        let report = Report {
            rows: vec![Row {
                id: 1,
                quantity: "q",
                measured: "m \"x\"".into(),
                target: "p",
                tolerance: "t",
                pass: true,
            }],
            first_error: None,
        };
        assert_eq!(report.csv().lines().count(), 2);
        assert!(report.table()[0].starts_with("[PASS]"));
    }
}
