use std::collections::BTreeMap;
use std::sync::Arc;

use proptest::prelude::*;
use tack_core::field::{
    solve_laplace, solve_unit_fields, superpose, BoxBoundary, SideCondition, SolveOptions,
};
use tack_core::geometry::{ElectrodeId, ElectrodeInfo, ElectrodeMask, ElectrodeRole, GridSpec};
use tack_core::pseudo::{pseudopotential, IonSpecies, RfDrive};

fn electrodes(names: &[&str]) -> Vec<ElectrodeInfo> {
    names
        .iter()
        .map(|n| ElectrodeInfo {
            name: n.to_string(),
            role: ElectrodeRole::Ground,
        })
        .collect()
}

const INNER: f64 = 1.0e-3;
const OUTER: f64 = 10.0e-3;

/// Inner rod at 1 V inside a grounded cylinder; the z ends are mirror planes.
fn coaxial_error(spacing: f64) -> f64 {
    let grid = GridSpec {
        r_max: OUTER,
        z_min: 0.0,
        z_max: 0.2e-3,
        spacing,
    };
    let mask = Arc::new(ElectrodeMask::from_fn(grid, electrodes(&["rod"]), |r, _| {
        (r <= INNER + 1e-12).then_some(ElectrodeId(0))
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
    let sol = solve_laplace(&mask, &BTreeMap::from([(ElectrodeId(0), 1.0)]), &options).unwrap();
    let f = &sol.field;
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
    worst
}

#[test]
fn coaxial_benchmark_is_second_order() {
    let coarse = coaxial_error(40e-6);
    let fine = coaxial_error(20e-6);
    assert!(fine < 1e-3, "max relative error {fine}");
    assert!(coarse / fine >= 3.0, "refinement ratio {}", coarse / fine);
}

fn two_plate_mask() -> Arc<ElectrodeMask> {
    let grid = GridSpec {
        r_max: 1.0e-3,
        z_min: 0.0,
        z_max: 1.0e-3,
        spacing: 25e-6,
    };
    Arc::new(ElectrodeMask::from_fn(grid, electrodes(&["disc", "ring"]), |r, z| {
        if z <= 0.2e-3 && r <= 0.3e-3 {
            Some(ElectrodeId(0))
        } else if (0.6e-3..=0.7e-3).contains(&z) && r >= 0.6e-3 {
            Some(ElectrodeId(1))
        } else {
            None
        }
    }))
}

#[test]
fn superposition_of_unit_fields() {
    let mask = two_plate_mask();
    let options = SolveOptions {
        tolerance: 1e-13,
        ..SolveOptions::default()
    };
    let units = solve_unit_fields(&mask, &options).unwrap();
    let (a, b) = (3.0, -1.5);
    let direct = solve_laplace(
        &mask,
        &BTreeMap::from([(ElectrodeId(0), a), (ElectrodeId(1), b)]),
        &options,
    )
    .unwrap();
    let combined = superpose(&units, &[a, b]);
    let worst = direct
        .field
        .values
        .iter()
        .zip(&combined.values)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    assert!(worst < 1e-9, "{worst}");
}

#[test]
fn maximum_principle_holds() {
    let mask = two_plate_mask();
    let options = SolveOptions {
        tolerance: 1e-12,
        ..SolveOptions::default()
    };
    let sol = solve_laplace(
        &mask,
        &BTreeMap::from([(ElectrodeId(0), 2.0), (ElectrodeId(1), -0.5)]),
        &options,
    )
    .unwrap();
    // box sides are grounded, so the bounds are min/max of {2, -0.5, 0}
    for v in &sol.field.values {
        assert!(*v <= 2.0 + 1e-12 && *v >= -0.5 - 1e-12, "{v}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn pseudopotential_scales_with_amplitude_and_frequency(
        amplitude in 10.0f64..1000.0,
        frequency in 1e6f64..100e6,
        factor in 0.1f64..10.0,
    ) {
        let mask = two_plate_mask();
        let sol = solve_laplace(
            &mask,
            &BTreeMap::from([(ElectrodeId(0), 1.0), (ElectrodeId(1), 0.0)]),
            &SolveOptions::default(),
        )
        .unwrap();
        let ion = IonSpecies::barium_138();
        let base = pseudopotential(&sol.field, &RfDrive { amplitude, frequency }, &ion);
        let louder = pseudopotential(&sol.field, &RfDrive { amplitude: amplitude * factor, frequency }, &ion);
        let faster = pseudopotential(&sol.field, &RfDrive { amplitude, frequency: frequency * factor }, &ion);
        for ((b, l), f) in base.values.iter().zip(&louder.values).zip(&faster.values) {
            let scale = b.abs().max(1e-300);
            prop_assert!((l - b * factor * factor).abs() <= 1e-12 * scale * factor * factor);
            prop_assert!((f - b / (factor * factor)).abs() <= 1e-12 * scale / (factor * factor));
        }
    }
}
