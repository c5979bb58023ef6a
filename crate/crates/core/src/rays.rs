//! Sequential geometric ray tracing through the mirror, viewport and corrector.

use std::f64::consts::PI;

use nalgebra::Vector3;
use rayon::prelude::*;
use thiserror::Error;

use crate::geometry::{conic_sag, ConicSurface, SurfaceKind};

pub type Vec3 = Vector3<f64>;

/// Minimum forward distance for an intersection (1 pm).
pub const EPSILON: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RayError {
    #[error("total internal reflection")]
    TotalInternalReflection,
    #[error("no rays reach the plane z = {0:.6e} m")]
    NoRaysReachPlane(f64),
    #[error("invalid optical input: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    pub direction: Vec3,
    /// Accumulated optical path length, metres.
    pub opl: f64,
    pub alive: bool,
}

impl Ray {
    pub fn new(origin: Vec3, direction: Vec3) -> Self {
        Self {
            origin,
            direction: direction.normalize(),
            opl: 0.0,
            alive: true,
        }
    }

    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + self.direction * t
    }
}

/// Mirror reflection of unit direction `d` about unit normal `n`.
pub fn reflect(d: &Vec3, n: &Vec3) -> Vec3 {
    d - n * (2.0 * d.dot(n))
}

/// Vector Snell refraction of `d` through a surface with normal `n` facing the incoming ray.
pub fn refract(d: &Vec3, n: &Vec3, n1: f64, n2: f64) -> Result<Vec3, RayError> {
    let cos_i = -d.dot(n);
    let eta = n1 / n2;
    let k = 1.0 - eta * eta * (1.0 - cos_i * cos_i);
    if k < 0.0 {
        return Err(RayError::TotalInternalReflection);
    }
    let out = d * eta + n * (eta * cos_i - k.sqrt());
    Ok(out.normalize())
}

/// Rotationally symmetric profile `z(r)` from samples with slopes, cubic Hermite between them.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedProfile {
    /// `(r, z, dz/dr)` with strictly increasing `r`.
    pub samples: Vec<(f64, f64, f64)>,
}

impl TabulatedProfile {
    pub fn new(samples: Vec<(f64, f64, f64)>) -> Result<Self, RayError> {
        if samples.len() < 2 {
            return Err(RayError::Invalid("profile needs at least two samples".into()));
        }
        if samples.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(RayError::Invalid("profile radii must increase strictly".into()));
        }
        Ok(Self { samples })
    }

    pub fn r_max(&self) -> f64 {
        self.samples.last().map_or(0.0, |s| s.0)
    }

    /// Height and slope at `r`; beyond the last sample the edge tangent continues.
    pub fn eval(&self, r: f64) -> (f64, f64) {
        let s = &self.samples;
        let last = s[s.len() - 1];
        if r >= last.0 {
            return (last.1 + last.2 * (r - last.0), last.2);
        }
        if r <= s[0].0 {
            return (s[0].1 + s[0].2 * (r - s[0].0), s[0].2);
        }
        let k = s.partition_point(|p| p.0 <= r) - 1;
        let (r0, z0, m0) = s[k];
        let (r1, z1, m1) = s[k + 1];
        let h = r1 - r0;
        let t = (r - r0) / h;
        let (t2, t3) = (t * t, t * t * t);
        let z = (2.0 * t3 - 3.0 * t2 + 1.0) * z0
            + (t3 - 2.0 * t2 + t) * h * m0
            + (-2.0 * t3 + 3.0 * t2) * z1
            + (t3 - t2) * h * m1;
        let dz = ((6.0 * t2 - 6.0 * t) * z0
            + (3.0 * t2 - 4.0 * t + 1.0) * h * m0
            + (-6.0 * t2 + 6.0 * t) * z1
            + (3.0 * t2 - 2.0 * t) * h * m1)
            / h;
        (z, dz)
    }

    fn z_range(&self) -> (f64, f64) {
        self.samples
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| (lo.min(s.1), hi.max(s.1)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlaneWindow {
    /// Front face.
    pub z: f64,
    pub thickness: f64,
    pub index: f64,
    pub radius: f64,
}

impl PlaneWindow {
    /// Fused silica, 4 mm thick, at z = 40 mm.
    pub fn tack_default() -> Self {
        Self {
            z: 40.0e-3,
            thickness: 4.0e-3,
            index: 1.458,
            radius: 25.0e-3,
        }
    }
}

/// One element of a sequential stack.
#[derive(Debug, Clone, PartialEq)]
pub enum Element {
    Conic(ConicSurface),
    Window(PlaneWindow),
    /// Single refracting plane.
    Plane {
        z: f64,
        radius: f64,
        n_before: f64,
        n_after: f64,
    },
    /// `z = vertex_z + profile(r)`, refracting.
    Asphere {
        vertex_z: f64,
        profile: TabulatedProfile,
        n_before: f64,
        n_after: f64,
    },
    /// Perfect paraxial lens: every ray parallel to `d` meets the focal plane at `f·(dx/dz, dy/dz)`.
    IdealLens { z: f64, focal_length: f64, radius: f64 },
    /// Opaque screen with a circular opening.
    Stop { z: f64, radius: f64 },
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SurfaceStack {
    pub elements: Vec<Element>,
}

#[derive(Debug, Clone, PartialEq)]
enum Shape {
    Conic {
        vertex_z: f64,
        c: f64,
        k: f64,
        r_min: f64,
        r_max: f64,
    },
    Plane { z: f64, radius: f64 },
    Asphere {
        vertex_z: f64,
        profile: TabulatedProfile,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Action {
    Reflect,
    Refract { n_before: f64, n_after: f64 },
    Focus { focal_length: f64 },
    Pass,
}

#[derive(Debug, Clone, PartialEq)]
struct Primitive {
    shape: Shape,
    action: Action,
}

impl SurfaceStack {
    pub fn new(elements: Vec<Element>) -> Self {
        Self { elements }
    }

    fn primitives(&self) -> Vec<Primitive> {
        let mut out = Vec::new();
        for e in &self.elements {
            match e {
                Element::Conic(s) => out.push(Primitive {
                    shape: Shape::Conic {
                        vertex_z: s.vertex_z,
                        c: s.curvature,
                        k: s.conic_constant,
                        r_min: s.aperture.r_min,
                        r_max: s.aperture.r_max,
                    },
                    action: match s.kind {
                        SurfaceKind::Mirror => Action::Reflect,
                        SurfaceKind::Refracting { n_before, n_after } => {
                            Action::Refract { n_before, n_after }
                        }
                    },
                }),
                Element::Window(w) => {
                    out.push(Primitive {
                        shape: Shape::Plane {
                            z: w.z,
                            radius: w.radius,
                        },
                        action: Action::Refract {
                            n_before: 1.0,
                            n_after: w.index,
                        },
                    });
                    out.push(Primitive {
                        shape: Shape::Plane {
                            z: w.z + w.thickness,
                            radius: w.radius,
                        },
                        action: Action::Refract {
                            n_before: w.index,
                            n_after: 1.0,
                        },
                    });
                }
                Element::Plane {
                    z,
                    radius,
                    n_before,
                    n_after,
                } => out.push(Primitive {
                    shape: Shape::Plane {
                        z: *z,
                        radius: *radius,
                    },
                    action: Action::Refract {
                        n_before: *n_before,
                        n_after: *n_after,
                    },
                }),
                Element::Asphere {
                    vertex_z,
                    profile,
                    n_before,
                    n_after,
                } => out.push(Primitive {
                    shape: Shape::Asphere {
                        vertex_z: *vertex_z,
                        profile: profile.clone(),
                    },
                    action: Action::Refract {
                        n_before: *n_before,
                        n_after: *n_after,
                    },
                }),
                Element::IdealLens {
                    z,
                    focal_length,
                    radius,
                } => out.push(Primitive {
                    shape: Shape::Plane {
                        z: *z,
                        radius: *radius,
                    },
                    action: Action::Focus {
                        focal_length: *focal_length,
                    },
                }),
                Element::Stop { z, radius } => out.push(Primitive {
                    shape: Shape::Plane {
                        z: *z,
                        radius: *radius,
                    },
                    action: Action::Pass,
                }),
            }
        }
        out
    }
}

/// Surface intersection: distance along the ray, point, and unit normal facing the ray.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub t: f64,
    pub point: Vec3,
    pub normal: Vec3,
}

fn face(normal: Vec3, d: &Vec3) -> Vec3 {
    let n = normal.normalize();
    if n.dot(d) > 0.0 {
        -n
    } else {
        n
    }
}

fn intersect_shape(ray: &Ray, shape: &Shape) -> Option<Hit> {
    let (p, d) = (ray.origin, ray.direction);
    match shape {
        Shape::Plane { z, radius } => {
            if d.z.abs() < 1e-300 {
                return None;
            }
            let t = (z - p.z) / d.z;
            if t <= EPSILON {
                return None;
            }
            let q = p + d * t;
            if q.x.hypot(q.y) > *radius {
                return None;
            }
            Some(Hit {
                t,
                point: q,
                normal: face(Vec3::z(), &d),
            })
        }
        Shape::Conic {
            vertex_z,
            c,
            k,
            r_min,
            r_max,
        } => {
            let (c, k1) = (*c, 1.0 + k);
            let pz = p.z - vertex_z;
            let a = c * (d.x * d.x + d.y * d.y) + c * k1 * d.z * d.z;
            let b = 2.0 * (c * (p.x * d.x + p.y * d.y) - d.z + c * k1 * pz * d.z);
            let q = c * (p.x * p.x + p.y * p.y) - 2.0 * pz + c * k1 * pz * pz;
            let mut roots = [f64::NAN; 2];
            if a.abs() <= 1e-14 * b.abs().max(1e-300) {
                if b != 0.0 {
                    roots[0] = -q / b;
                }
            } else {
                let disc = b * b - 4.0 * a * q;
                if disc < 0.0 {
                    return None;
                }
                let t = -0.5 * (b + b.signum() * disc.sqrt());
                roots = [t / a, if t != 0.0 { q / t } else { f64::NAN }];
            }
            roots.sort_by(|x, y| x.total_cmp(y));
            let tol = 1e-9 * r_max.max(1e-6);
            for t in roots {
                if !(t > EPSILON) {
                    continue;
                }
                let pt = p + d * t;
                let r = pt.x.hypot(pt.y);
                let zl = pt.z - vertex_z;
                let arg = 1.0 - k1 * c * c * r * r;
                if arg < -1e-12 {
                    continue;
                }
                if (zl - conic_sag(c, *k, r)).abs() > tol {
                    continue;
                }
                if r < *r_min || r > *r_max {
                    return None;
                }
                let grad = Vec3::new(2.0 * c * pt.x, 2.0 * c * pt.y, -2.0 + 2.0 * c * k1 * zl);
                return Some(Hit {
                    t,
                    point: pt,
                    normal: face(grad, &d),
                });
            }
            None
        }
        Shape::Asphere { vertex_z, profile } => {
            if !(d.z > 0.0) {
                return None;
            }
            let (zlo, zhi) = profile.z_range();
            let span = (zhi - zlo).max(1e-9);
            let t_at = |z: f64| (z - p.z) / d.z;
            let mut t0 = t_at(vertex_z + zlo - 0.01 * span).max(EPSILON);
            let mut t1 = t_at(vertex_z + zhi + 0.01 * span);
            let g = |t: f64| {
                let q = p + d * t;
                q.z - vertex_z - profile.eval(q.x.hypot(q.y)).0
            };
            let (mut g0, mut g1) = (g(t0), g(t1));
            if !(t1 > t0) || g0 > 0.0 || g1 < 0.0 {
                return None;
            }
            // Illinois variant of regula falsi
            let mut side = 0;
            let mut t = t0;
            for _ in 0..200 {
                t = (t0 * g1 - t1 * g0) / (g1 - g0);
                let gt = g(t);
                if gt.abs() < 1e-16 || (t1 - t0).abs() < 1e-16 {
                    break;
                }
                if gt < 0.0 {
                    t0 = t;
                    g0 = gt;
                    if side == -1 {
                        g1 *= 0.5;
                    }
                    side = -1;
                } else {
                    t1 = t;
                    g1 = gt;
                    if side == 1 {
                        g0 *= 0.5;
                    }
                    side = 1;
                }
            }
            let pt = p + d * t;
            let r = pt.x.hypot(pt.y);
            if r > profile.r_max() * (1.0 + 1e-12) {
                return None;
            }
            let slope = profile.eval(r).1;
            let grad = if r > 0.0 {
                Vec3::new(-slope * pt.x / r, -slope * pt.y / r, 1.0)
            } else {
                Vec3::z()
            };
            Some(Hit {
                t,
                point: pt,
                normal: face(grad, &d),
            })
        }
    }
}

/// Nearest forward intersection of `ray` with a conic surface.
pub fn intersect(ray: &Ray, surface: &ConicSurface) -> Option<Hit> {
    intersect_shape(
        ray,
        &Shape::Conic {
            vertex_z: surface.vertex_z,
            c: surface.curvature,
            k: surface.conic_constant,
            r_min: surface.aperture.r_min,
            r_max: surface.aperture.r_max,
        },
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fate {
    Alive,
    /// Missed primitive surface `index` (hole, rim, or clear aperture).
    Missed(usize),
    TotalInternalReflection(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RayPath {
    pub start: Ray,
    /// Every surface hit in order.
    pub points: Vec<Vec3>,
    pub ray: Ray,
    pub fate: Fate,
}

/// Trace a single ray through the stack, starting in a medium of index 1.
pub fn trace(start: Ray, stack: &SurfaceStack) -> RayPath {
    trace_primitives(start, &stack.primitives())
}

fn trace_primitives(start: Ray, prims: &[Primitive]) -> RayPath {
    let mut ray = start;
    let mut points = Vec::with_capacity(prims.len());
    let mut n_medium = 1.0;
    for (i, prim) in prims.iter().enumerate() {
        let Some(hit) = intersect_shape(&ray, &prim.shape) else {
            ray.alive = false;
            return RayPath {
                start,
                points,
                ray,
                fate: Fate::Missed(i),
            };
        };
        if let Action::Refract { n_before, .. } = prim.action {
            n_medium = n_before;
        }
        ray.opl += n_medium * hit.t;
        ray.origin = hit.point;
        points.push(hit.point);
        match prim.action {
            Action::Reflect => ray.direction = reflect(&ray.direction, &hit.normal),
            Action::Refract { n_before, n_after } => {
                match refract(&ray.direction, &hit.normal, n_before, n_after) {
                    Ok(d) => {
                        ray.direction = d;
                        n_medium = n_after;
                    }
                    Err(_) => {
                        ray.alive = false;
                        return RayPath {
                            start,
                            points,
                            ray,
                            fate: Fate::TotalInternalReflection(i),
                        };
                    }
                }
            }
            Action::Focus { focal_length } => {
                let d = ray.direction;
                let target = Vec3::new(
                    focal_length * d.x / d.z,
                    focal_length * d.y / d.z,
                    hit.point.z + focal_length,
                );
                ray.direction = (target - hit.point).normalize();
            }
            Action::Pass => {}
        }
    }
    RayPath {
        start,
        points,
        ray,
        fate: Fate::Alive,
    }
}

/// How emission directions are laid out.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SamplingKind {
    /// Fibonacci lattice, uniform in solid angle over the polar band.
    Fibonacci,
    /// Rays in the x-z plane, uniform in polar angle.
    Meridional,
}

/// Directions about `-z` (toward the mirror) between two polar angles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sampling {
    pub n_rays: usize,
    pub kind: SamplingKind,
    pub min_angle: f64,
    pub max_angle: f64,
    /// Fractional lattice shift in `[0, 1)`, for bundles disjoint from a design bundle.
    pub offset: f64,
}

impl Sampling {
    pub fn directions(&self) -> Vec<Vec3> {
        let n = self.n_rays;
        let (c0, c1) = (self.min_angle.cos(), self.max_angle.cos());
        let golden = PI * (3.0 - 5f64.sqrt());
        (0..n)
            .map(|i| {
                let f = (i as f64 + 0.5 + self.offset) / n as f64;
                match self.kind {
                    SamplingKind::Fibonacci => {
                        let ct = c0 + (c1 - c0) * f;
                        let st = (1.0 - ct * ct).max(0.0).sqrt();
                        let phi = golden * (i as f64 + self.offset);
                        Vec3::new(st * phi.cos(), st * phi.sin(), -ct)
                    }
                    SamplingKind::Meridional => {
                        let t = self.min_angle + (self.max_angle - self.min_angle) * f;
                        Vec3::new(t.sin(), 0.0, -t.cos())
                    }
                }
            })
            .collect()
    }
}

/// Trace one ray per sampled direction from `source`, in input order.
pub fn trace_bundle(source: Vec3, stack: &SurfaceStack, sampling: &Sampling) -> Vec<RayPath> {
    let prims = stack.primitives();
    sampling
        .directions()
        .into_par_iter()
        .map(|d| trace_primitives(Ray::new(source, d), &prims))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpotDiagram {
    pub plane_z: f64,
    pub hits: Vec<(f64, f64)>,
    pub centroid: (f64, f64),
    pub rms_radius: f64,
    /// `2.355 σ` of the x marginal.
    pub fwhm_estimate: f64,
}

impl SpotDiagram {
    pub fn from_hits(plane_z: f64, hits: Vec<(f64, f64)>) -> Result<Self, RayError> {
        if hits.is_empty() {
            return Err(RayError::NoRaysReachPlane(plane_z));
        }
        let n = hits.len() as f64;
        let cx = hits.iter().map(|h| h.0).sum::<f64>() / n;
        let cy = hits.iter().map(|h| h.1).sum::<f64>() / n;
        let ms = hits
            .iter()
            .map(|h| (h.0 - cx).powi(2) + (h.1 - cy).powi(2))
            .sum::<f64>()
            / n;
        let sx = (hits.iter().map(|h| (h.0 - cx).powi(2)).sum::<f64>() / n).sqrt();
        Ok(Self {
            plane_z,
            hits,
            centroid: (cx, cy),
            rms_radius: ms.sqrt(),
            fwhm_estimate: 2.355 * sx,
        })
    }

    /// Share of hits within `radius` of the centroid.
    pub fn fraction_within(&self, radius: f64) -> f64 {
        let (cx, cy) = self.centroid;
        let inside = self
            .hits
            .iter()
            .filter(|h| (h.0 - cx).hypot(h.1 - cy) <= radius)
            .count();
        inside as f64 / self.hits.len() as f64
    }
}

/// Latest crossing of the plane `z = plane_z` along a surviving path.
fn crossing(path: &RayPath, plane_z: f64) -> Option<(f64, f64)> {
    if !path.ray.alive {
        return None;
    }
    let d = path.ray.direction;
    if d.z.abs() > 1e-15 {
        let t = (plane_z - path.ray.origin.z) / d.z;
        if t >= 0.0 {
            let q = path.ray.at(t);
            return Some((q.x, q.y));
        }
    }
    let vertices: Vec<Vec3> = std::iter::once(path.start.origin).chain(path.points.iter().copied()).collect();
    vertices.windows(2).rev().find_map(|w| {
        let (a, b) = (w[0], w[1]);
        let (lo, hi) = (a.z.min(b.z), a.z.max(b.z));
        if b.z == a.z || plane_z < lo || plane_z > hi {
            return None;
        }
        let f = (plane_z - a.z) / (b.z - a.z);
        let q = a + (b - a) * f;
        Some((q.x, q.y))
    })
}

/// Intersections of surviving rays with the plane `z = plane_z`.
///
/// Each ray contributes its last crossing, extrapolating the outgoing ray when
/// the plane lies beyond the final surface.
pub fn spot(paths: &[RayPath], plane_z: f64) -> Result<SpotDiagram, RayError> {
    let hits = paths.iter().filter_map(|p| crossing(p, plane_z)).collect();
    SpotDiagram::from_hits(plane_z, hits)
}

/// Plane between `z_lo` and `z_hi` with the smallest rms spot, by golden-section search.
pub fn best_focus(paths: &[RayPath], z_lo: f64, z_hi: f64) -> Result<SpotDiagram, RayError> {
    let rms = |z: f64| spot(paths, z).map_or(f64::INFINITY, |s| s.rms_radius);
    // coarse scan first: the rms curve of an aberrated bundle is not unimodal everywhere
    const SCAN: usize = 200;
    let step = (z_hi - z_lo) / SCAN as f64;
    let best = (0..=SCAN)
        .map(|i| z_lo + step * i as f64)
        .min_by(|a, b| rms(*a).total_cmp(&rms(*b)))
        .unwrap_or(z_lo);
    let (mut a, mut b) = ((best - step).max(z_lo), (best + step).min(z_hi));
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let (mut f1, mut f2) = (rms(x1), rms(x2));
    for _ in 0..100 {
        if f1 < f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = rms(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = rms(x2);
        }
    }
    spot(paths, 0.5 * (a + b))
}

/// Largest angle between any surviving ray and `+z`.
pub fn direction_spread(paths: &[RayPath]) -> f64 {
    paths
        .iter()
        .filter(|p| p.ray.alive)
        .map(|p| p.ray.direction.xy().norm().atan2(p.ray.direction.z))
        .fold(0.0, f64::max)
}
