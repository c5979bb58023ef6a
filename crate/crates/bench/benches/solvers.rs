use criterion::{black_box, criterion_group, criterion_main, Criterion};

use tack_core::crystal::{relax, RelaxOptions, TrapModel};
use tack_core::field::SolveOptions;
use tack_core::geometry::{GridSpec, MirrorSpec, TrapGeometry};
use tack_core::pseudo::{solve_trap, IonSpecies, RfDrive};
use tack_core::rays::{trace_bundle, Element, PlaneWindow, Sampling, SamplingKind, SurfaceStack, Vec3};

fn field_solve(c: &mut Criterion) {
    let geometry = TrapGeometry::tack_default();
    let grid = GridSpec {
        spacing: 50e-6,
        ..GridSpec::tack_default()
    };
    let drive = RfDrive::tack_default();
    let ion = IonSpecies::barium_138();
    let mut group = c.benchmark_group("field");
    group.sample_size(10);
    group.bench_function("trap solve, 50 um grid", |b| {
        b.iter(|| solve_trap(black_box(&geometry), &grid, &drive, &ion, &SolveOptions::default()).unwrap())
    });
    group.finish();
}

fn ray_bundle(c: &mut Criterion) {
    let mirror = MirrorSpec::tack_default();
    let stack = SurfaceStack::new(vec![
        Element::Conic(mirror.surface()),
        Element::Window(PlaneWindow::tack_default()),
    ]);
    let sampling = Sampling {
        n_rays: 10_000,
        kind: SamplingKind::Fibonacci,
        min_angle: 0.1,
        max_angle: 1.3,
        offset: 0.0,
    };
    c.bench_function("trace 10k rays", |b| {
        b.iter(|| trace_bundle(black_box(Vec3::new(0.0, 0.0, 2.25e-3)), &stack, &sampling))
    });
}

fn crystal_relax(c: &mut Criterion) {
    let trap = TrapModel::Harmonic {
        axial: 420e3,
        radial: 200e3,
    };
    let ion = IonSpecies::barium_138();
    let options = RelaxOptions::default();
    c.bench_function("relax 7 ions", |b| b.iter(|| relax(black_box(7), &trap, &ion, &options).unwrap()));
}

criterion_group!(benches, field_solve, ray_bundle, crystal_relax);
criterion_main!(benches);
