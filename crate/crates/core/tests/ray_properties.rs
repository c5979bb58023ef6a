use proptest::prelude::*;
use tack_core::geometry::MirrorSpec;
use tack_core::rays::{
    reflect, refract, spot, trace, trace_bundle, Element, Fate, Ray, Sampling, SamplingKind, SurfaceStack, Vec3,
};

fn unit(theta: f64, phi: f64) -> Vec3 {
    Vec3::new(theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos())
}

proptest! {
    #[test]
    fn snell_invariant_holds(
        incidence in 0.0f64..1.5,
        phi in 0.0f64..std::f64::consts::TAU,
        tilt in 0.0f64..1.0,
        n1 in 1.0f64..2.0,
        n2 in 1.0f64..2.0,
    ) {
        // normal tilted away from z, incoming ray at `incidence` to it
        let n = unit(tilt, 0.3);
        let helper = if n.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
        let e1 = n.cross(&helper).normalize();
        let e2 = n.cross(&e1);
        let tangent = e1 * phi.cos() + e2 * phi.sin();
        let d = (-n * incidence.cos() + tangent * incidence.sin()).normalize();
        let sin_i = d.cross(&n).norm();
        match refract(&d, &n, n1, n2) {
            Ok(t) => {
                let sin_t = t.cross(&n).norm();
                prop_assert!((n1 * sin_i - n2 * sin_t).abs() < 1e-12);
                // stays in the plane of incidence
                prop_assert!(t.dot(&d.cross(&n)).abs() < 1e-12);
                prop_assert!(t.dot(&n) < 0.0);
            }
            Err(_) => prop_assert!(n1 * sin_i > n2),
        }
        let r = reflect(&d, &n);
        prop_assert!((r.norm() - 1.0).abs() < 1e-12);
        prop_assert!((r.dot(&n) + d.dot(&n)).abs() < 1e-12);
        prop_assert!((r.cross(&n).norm() - sin_i).abs() < 1e-12);
    }
}

fn plane(z: f64, n_before: f64, n_after: f64) -> Element {
    Element::Plane {
        z,
        radius: 30e-3,
        n_before,
        n_after,
    }
}

#[test]
fn traced_rays_retrace_their_path() {
    let mirror = MirrorSpec::tack_default();
    let forward = SurfaceStack::new(vec![
        Element::Conic(mirror.surface()),
        plane(40e-3, 1.0, 1.458),
        plane(44e-3, 1.458, 1.0),
    ]);
    let backward = SurfaceStack::new(vec![
        plane(44e-3, 1.0, 1.458),
        plane(40e-3, 1.458, 1.0),
        Element::Conic(mirror.surface()),
    ]);
    let ion = Vec3::new(0.0, 0.0, 2.25e-3);
    let sampling = Sampling {
        n_rays: 100,
        kind: SamplingKind::Fibonacci,
        min_angle: 0.1,
        max_angle: 1.2,
        offset: 0.0,
    };
    let mut checked = 0;
    for d in sampling.directions() {
        let out = trace(Ray::new(ion, d), &forward);
        if out.fate != Fate::Alive {
            continue;
        }
        let t = (50e-3 - out.ray.origin.z) / out.ray.direction.z;
        let far = out.ray.at(t);
        let back = trace(Ray::new(far, -out.ray.direction), &backward);
        assert_eq!(back.fate, Fate::Alive);
        let to_ion = ion - back.ray.origin;
        let miss = (to_ion - back.ray.direction * to_ion.dot(&back.ray.direction)).norm();
        assert!(miss < 1e-9, "closest approach {miss}");
        assert!((back.ray.direction + d).norm() < 1e-9);
        checked += 1;
    }
    assert!(checked >= 50, "only {checked} rays reached the mirror");
}

#[test]
fn spots_before_the_last_surface_use_the_crossing_segment() {
    let mirror = MirrorSpec::tack_default();
    let bare = SurfaceStack::new(vec![Element::Conic(mirror.surface())]);
    let windowed = SurfaceStack::new(vec![
        Element::Conic(mirror.surface()),
        plane(40e-3, 1.0, 1.458),
        plane(44e-3, 1.458, 1.0),
    ]);
    let sampling = Sampling {
        n_rays: 200,
        kind: SamplingKind::Fibonacci,
        min_angle: 0.2,
        max_angle: 1.0,
        offset: 0.0,
    };
    let source = Vec3::new(0.0, 0.0, 2.25e-3);
    let a = spot(&trace_bundle(source, &bare, &sampling), 18e-3).unwrap();
    let b = spot(&trace_bundle(source, &windowed, &sampling), 18e-3).unwrap();
    assert_eq!(a.hits.len(), b.hits.len());
    for (p, q) in a.hits.iter().zip(&b.hits) {
        assert!((p.0 - q.0).abs() < 1e-12 && (p.1 - q.1).abs() < 1e-12);
    }
}
