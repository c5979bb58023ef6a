use nalgebra::{Rotation3, Vector3};
use proptest::prelude::*;
use tack_core::crystal::{energy_and_gradient, relax, total_energy, RelaxOptions, TrapModel};
use tack_core::pseudo::IonSpecies;

fn trap() -> TrapModel {
    TrapModel::Harmonic {
        axial: 400e3,
        radial: 200e3,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn energy_is_invariant_under_rotation_about_axis(
        coords in prop::collection::vec(-20e-6f64..20e-6, 15),
    ) {
        let ion = IonSpecies::barium_138();
        let positions: Vec<Vector3<f64>> = coords.chunks(3).map(|c| Vector3::new(c[0], c[1], c[2])).collect();
        let base = total_energy(&positions, &trap(), &ion).unwrap();
        for k in 0..10 {
            let rot = Rotation3::from_axis_angle(&Vector3::z_axis(), 0.6283 * k as f64 + 0.1);
            let turned: Vec<_> = positions.iter().map(|p| rot * p).collect();
            let e = total_energy(&turned, &trap(), &ion).unwrap();
            prop_assert!((e - base).abs() <= 1e-10 * base.abs());
        }
    }
}

#[test]
fn relaxed_crystals_are_force_free() {
    let ion = IonSpecies::barium_138();
    let options = RelaxOptions {
        restarts: 4,
        ..RelaxOptions::default()
    };
    for n in [2, 3, 5, 8] {
        let config = relax(n, &trap(), &ion, &options).unwrap();
        assert!(config.converged);
        let (_, grad) = energy_and_gradient(&config.positions, &trap(), &ion).unwrap();
        let worst = grad.iter().map(|g| g.norm()).fold(0.0, f64::max);
        assert!(worst <= options.tolerance, "n = {n}: residual force {worst:e} N");
    }
}

#[test]
fn relaxation_is_reproducible_for_a_seed() {
    let ion = IonSpecies::barium_138();
    let options = RelaxOptions {
        restarts: 6,
        seed: 42,
        ..RelaxOptions::default()
    };
    let a = relax(6, &trap(), &ion, &options).unwrap();
    let b = relax(6, &trap(), &ion, &options).unwrap();
    assert_eq!(a.positions, b.positions);
}
