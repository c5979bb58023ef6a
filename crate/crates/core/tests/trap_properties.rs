use std::sync::OnceLock;

use proptest::prelude::*;
use tack_core::field::SolveOptions;
use tack_core::geometry::{GridSpec, TrapGeometry};
use tack_core::pseudo::{analyze_field, pseudopotential, solve_trap, IonSpecies, RfDrive, TrapSolution};

const DRIVE: RfDrive = RfDrive {
    amplitude: 270.0,
    frequency: 23e6,
};

fn solved() -> &'static TrapSolution {
    static CELL: OnceLock<TrapSolution> = OnceLock::new();
    CELL.get_or_init(|| {
        let grid = GridSpec {
            spacing: 50e-6,
            ..GridSpec::tack_default()
        };
        solve_trap(
            &TrapGeometry::tack_default(),
            &grid,
            &DRIVE,
            &IonSpecies::barium_138(),
            &SolveOptions::default(),
        )
        .unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn minimum_is_independent_of_amplitude(factor in 0.2f64..5.0) {
        let base = solved();
        let ion = IonSpecies::barium_138();
        let geometry = TrapGeometry::tack_default();
        let drive = RfDrive { amplitude: DRIVE.amplitude * factor, ..DRIVE };
        let scaled = analyze_field(&pseudopotential(&base.rf_unit, &drive, &ion), &geometry, &ion).unwrap();
        let reference = base.analysis.as_ref().unwrap();
        prop_assert_eq!(scaled.minimum_position, reference.minimum_position);
        prop_assert!((scaled.depth - reference.depth * factor * factor).abs() <= 1e-12 * scaled.depth);
        let (a, b) = (scaled.secular_frequencies, reference.secular_frequencies);
        prop_assert!((a.axial - b.axial * factor).abs() <= 1e-9 * a.axial);
        prop_assert!((a.radial - b.radial * factor).abs() <= 1e-9 * a.radial);
    }
}
