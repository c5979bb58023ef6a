//! Synthesis of the aspheric element that collimates the aberrated bundle
//! reflected by the mirror.
//!
//! The designed face is grown outward from the axis. With `Q(θ)` and `d(θ)`
//! the ray state just before that face (as a function of emission angle `θ`),
//! the surface point is `P = Q + s d`. Requiring the refracted ray to leave
//! along `+z` fixes the local normal `N = n_in d − n_out ẑ`, and `P′ · N = 0`
//! gives `s′ = −N · (Q′ + s d′) / (N · d)`, integrated with RK4.

use std::f64::consts::PI;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::geometry::{Aperture, ConicSurface, MirrorSpec, SurfaceKind};
use crate::rays::{
    direction_spread, spot, trace, trace_bundle, Element, Fate, PlaneWindow, Ray, RayPath,
    Sampling, SamplingKind, SpotDiagram, SurfaceStack, TabulatedProfile, Vec3,
};

/// 493 nm, half the 986 nm cooling laser.
pub const WAVELENGTH: f64 = 493e-9;

/// Largest allowed surface slope, tan 80°.
const MAX_SLOPE_DEG: f64 = 80.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CorrectorError {
    #[error("bundle not single-valued at the corrector (rays still crossing near θ = {theta:.4} rad); move the corrector farther out")]
    BundleNotSingleValued { theta: f64 },
    #[error("surface slope {slope:.3} at r = {r:.4e} m exceeds tan 80°")]
    SlopeUnmanufacturable { r: f64, slope: f64 },
    #[error("design ray at θ = {theta:.4} rad lost before the corrector")]
    DesignRayLost { theta: f64 },
    #[error("corrector thickness {thickness:.3e} m at r = {r:.4e} m is not positive")]
    NonPositiveThickness { r: f64, thickness: f64 },
    #[error("profile is empty")]
    EmptyProfile,
    #[error("invalid corrector input: {0}")]
    Invalid(String),
}

/// Which face of the element carries the designed profile.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    /// Plane face toward the chamber, designed face behind it.
    FlatFirst,
    /// Designed face toward the chamber, plane face behind it.
    AsphereFirst,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrectorDesignSpec {
    pub source_z: f64,
    pub mirror: MirrorSpec,
    pub window: Option<PlaneWindow>,
    /// First face of the element.
    pub front_face_z: f64,
    pub center_thickness: f64,
    pub material_index: f64,
    pub design_ray_count: usize,
    pub orientation: Orientation,
    /// Largest emission angle from `−z` to design for; `None` designs slightly past the mirror rim.
    pub max_angle: Option<f64>,
}

impl CorrectorDesignSpec {
    /// Ion 0.25 mm beyond the focus, acrylic element behind the default viewport.
    pub fn tack_default() -> Self {
        Self {
            source_z: 2.25e-3,
            mirror: MirrorSpec::tack_default(),
            window: Some(PlaneWindow::tack_default()),
            front_face_z: 50.0e-3,
            center_thickness: 12.0e-3,
            material_index: 1.49,
            design_ray_count: 2000,
            orientation: Orientation::FlatFirst,
            max_angle: None,
        }
    }

    fn validate(&self) -> Result<(), CorrectorError> {
        let invalid = |m: &str| Err(CorrectorError::Invalid(m.into()));
        self.mirror
            .validate()
            .map_err(|e| CorrectorError::Invalid(e.to_string()))?;
        if !(self.source_z > 0.0) {
            return invalid("source_z must lie above the mirror vertex");
        }
        if !(self.material_index > 1.0) {
            return invalid("material_index must exceed 1");
        }
        if !(self.center_thickness > 0.0) {
            return invalid("center_thickness must be positive");
        }
        if self.design_ray_count < 16 {
            return invalid("design_ray_count must be at least 16");
        }
        if let Some(w) = &self.window {
            if !(w.index > 1.0 && w.thickness > 0.0) {
                return invalid("window needs index > 1 and positive thickness");
            }
            if self.front_face_z <= w.z + w.thickness {
                return invalid("front_face_z must lie beyond the window");
            }
        }
        if self.front_face_z <= self.mirror.radius_of_curvature {
            return invalid("front_face_z must lie beyond the mirror's centre of curvature");
        }
        if let Some(a) = self.max_angle {
            if !(a > 0.0 && a < PI / 2.0) {
                return invalid("max_angle must lie in (0, 90) degrees");
            }
        }
        Ok(())
    }

    /// Emission angle from `−z` to the mirror rim.
    pub fn rim_angle(&self) -> f64 {
        let r = 0.5 * self.mirror.aperture_diameter;
        r.atan2(self.source_z - self.mirror.rim_z())
    }

    /// Emission angle from `−z` to the edge of the vertex hole.
    pub fn hole_angle(&self) -> f64 {
        let r = 0.5 * self.mirror.vertex_hole_diameter;
        let sag = crate::geometry::conic_sag(
            1.0 / self.mirror.radius_of_curvature,
            self.mirror.conic_constant,
            r,
        );
        r.atan2(self.source_z - sag)
    }

    fn design_angle(&self) -> f64 {
        self.max_angle
            .unwrap_or_else(|| (self.rim_angle() + 0.5f64.to_radians()).min(89f64.to_radians()))
    }

    /// Mirror, viewport, with the hole filled and the rim widened for design rays.
    fn design_stack(&self) -> SurfaceStack {
        let mut m = self.mirror.surface();
        m.aperture.r_min = 0.0;
        m.aperture.r_max *= 1.2;
        let mut elements = vec![Element::Conic(m)];
        elements.extend(self.window.map(Element::Window));
        SurfaceStack::new(elements)
    }

    fn mirror_stack(&self) -> Vec<Element> {
        let mut elements = vec![Element::Conic(self.mirror.surface())];
        elements.extend(self.window.map(Element::Window));
        elements
    }

    fn indices(&self) -> (f64, f64) {
        match self.orientation {
            Orientation::FlatFirst => (self.material_index, 1.0),
            Orientation::AsphereFirst => (1.0, self.material_index),
        }
    }

    fn vertex_z(&self) -> f64 {
        match self.orientation {
            Orientation::FlatFirst => self.front_face_z + self.center_thickness,
            Orientation::AsphereFirst => self.front_face_z,
        }
    }
}

/// Designed face: tabulated samples, even-polynomial fit and placement.
#[derive(Debug, Clone, PartialEq)]
pub struct AsphereProfile {
    /// `(r, sag, dz/dr)` relative to the vertex, strictly increasing `r`.
    pub samples: Vec<(f64, f64, f64)>,
    /// `a₂, a₄, …, a₁₂` of `sag(r) = z₀ + Σ a₂ᵢ r²ⁱ`.
    pub coefficients: [f64; 6],
    pub reference_z0: f64,
    pub fit_residual_rms: f64,
    pub material_index: f64,
    pub vertex_z: f64,
    pub front_face_z: f64,
    pub center_thickness: f64,
    pub orientation: Orientation,
    /// Emission angle covered by the design, from `−z`.
    pub design_angle: f64,
    /// `lim H / sin θ`: exit height per unit emission sine near the axis.
    pub effective_focal_length: f64,
}

impl AsphereProfile {
    pub fn r_max(&self) -> f64 {
        self.samples.last().map_or(0.0, |s| s.0)
    }

    pub fn tabulated(&self) -> Result<TabulatedProfile, CorrectorError> {
        TabulatedProfile::new(self.samples.clone()).map_err(|_| CorrectorError::EmptyProfile)
    }

    pub fn polynomial_sag(&self, r: f64) -> f64 {
        let r2 = r * r;
        let mut acc = 0.0;
        let mut p = r2;
        for a in self.coefficients {
            acc += a * p;
            p *= r2;
        }
        self.reference_z0 + acc
    }

    /// Tabulated sag at `r` (cubic Hermite between samples).
    pub fn sag(&self, r: f64) -> f64 {
        self.tabulated().map_or(f64::NAN, |t| t.eval(r).0)
    }

    /// The element's two faces as stack elements, in encounter order.
    pub fn elements(&self) -> Result<Vec<Element>, CorrectorError> {
        let profile = self.tabulated()?;
        let n = self.material_index;
        let radius = self.r_max() * 1.5;
        Ok(match self.orientation {
            Orientation::FlatFirst => vec![
                Element::Plane {
                    z: self.front_face_z,
                    radius,
                    n_before: 1.0,
                    n_after: n,
                },
                Element::Asphere {
                    vertex_z: self.vertex_z,
                    profile,
                    n_before: n,
                    n_after: 1.0,
                },
            ],
            Orientation::AsphereFirst => vec![
                Element::Asphere {
                    vertex_z: self.vertex_z,
                    profile,
                    n_before: 1.0,
                    n_after: n,
                },
                Element::Plane {
                    z: self.front_face_z + self.center_thickness,
                    radius,
                    n_before: n,
                    n_after: 1.0,
                },
            ],
        })
    }

    /// Copy with a Gaussian bump of `amplitude` centred at `r0`, width `sigma`.
    pub fn perturbed(&self, amplitude: f64, r0: f64, sigma: f64) -> Self {
        let mut out = self.clone();
        for s in &mut out.samples {
            let u = (s.0 - r0) / sigma;
            let g = amplitude * (-0.5 * u * u).exp();
            s.1 += g;
            s.2 += -g * u / sigma;
        }
        out
    }

    /// Largest axial distance the element reaches.
    fn back_z(&self) -> f64 {
        let top = self
            .samples
            .iter()
            .map(|s| self.vertex_z + s.1)
            .fold(self.vertex_z, f64::max);
        top.max(self.front_face_z + self.center_thickness)
    }
}

/// Ray state just before the designed face, for emission angle `theta` in the x-z plane.
fn pre_state(spec: &CorrectorDesignSpec, stack: &SurfaceStack, theta: f64) -> Result<(Vec3, Vec3), CorrectorError> {
    // emit toward −x so the reflected ray has crossed to +x by the corrector
    let d = Vec3::new(-theta.sin(), 0.0, -theta.cos());
    let path = trace(Ray::new(Vec3::new(0.0, 0.0, spec.source_z), d), stack);
    if path.fate != Fate::Alive || !(path.ray.direction.z > 0.0) {
        return Err(CorrectorError::DesignRayLost { theta });
    }
    let ray = path.ray;
    let t = (spec.front_face_z - ray.origin.z) / ray.direction.z;
    if t <= 0.0 {
        return Err(CorrectorError::DesignRayLost { theta });
    }
    let q = ray.at(t);
    let dir = match spec.orientation {
        Orientation::FlatFirst => crate::rays::refract(
            &ray.direction,
            &-Vec3::z(),
            1.0,
            spec.material_index,
        )
        .map_err(|_| CorrectorError::DesignRayLost { theta })?,
        Orientation::AsphereFirst => ray.direction,
    };
    Ok((q, dir))
}

struct Slope<'a> {
    spec: &'a CorrectorDesignSpec,
    stack: SurfaceStack,
    n_in: f64,
    n_out: f64,
}

impl Slope<'_> {
    fn state(&self, theta: f64) -> Result<(Vec3, Vec3, Vec3, Vec3), CorrectorError> {
        let h = 1e-6;
        let (q, d) = pre_state(self.spec, &self.stack, theta)?;
        let (qp, dp) = pre_state(self.spec, &self.stack, theta + h)?;
        let (qm, dm) = if theta - h >= 0.0 {
            pre_state(self.spec, &self.stack, theta - h)?
        } else {
            // mirror image through the axis
            let (q1, d1) = pre_state(self.spec, &self.stack, h - theta)?;
            (Vec3::new(-q1.x, q1.y, q1.z), Vec3::new(-d1.x, d1.y, d1.z))
        };
        Ok((q, d, (qp - qm) / (2.0 * h), (dp - dm) / (2.0 * h)))
    }

    fn ds(&self, theta: f64, s: f64) -> Result<f64, CorrectorError> {
        let (_, d, q1, d1) = self.state(theta)?;
        let n = d * self.n_in - Vec3::z() * self.n_out;
        Ok(-n.dot(&(q1 + d1 * s)) / n.dot(&d))
    }

    fn point(&self, theta: f64, s: f64) -> Result<(Vec3, f64), CorrectorError> {
        let (q, d) = pre_state(self.spec, &self.stack, theta)?;
        let p = q + d * s;
        let n = d * self.n_in - Vec3::z() * self.n_out;
        // radial direction is +x for the traced half-plane
        Ok((p, -n.x / n.z))
    }
}

/// Integrate the collimating face and fit its even polynomial.
pub fn design(spec: &CorrectorDesignSpec) -> Result<AsphereProfile, CorrectorError> {
    spec.validate()?;
    let (n_in, n_out) = spec.indices();
    let field = Slope {
        spec,
        stack: spec.design_stack(),
        n_in,
        n_out,
    };
    let theta_max = spec.design_angle();
    let steps = spec.design_ray_count - 1;
    let h = theta_max / steps as f64;
    let vertex_z = spec.vertex_z();
    let mut s = match spec.orientation {
        Orientation::FlatFirst => spec.center_thickness,
        Orientation::AsphereFirst => 0.0,
    };
    let mut samples = Vec::with_capacity(steps + 1);
    let mut front_r = Vec::with_capacity(steps + 1);
    for i in 0..=steps {
        let theta = h * i as f64;
        let (p, slope) = field.point(theta, s)?;
        let (q, _) = pre_state(spec, &field.stack, theta)?;
        samples.push((p.x, p.z - vertex_z, slope));
        front_r.push(q.x);
        if i == steps {
            break;
        }
        let k1 = field.ds(theta, s)?;
        let k2 = field.ds(theta + 0.5 * h, s + 0.5 * h * k1)?;
        let k3 = field.ds(theta + 0.5 * h, s + 0.5 * h * k2)?;
        let k4 = field.ds(theta + h, s + h * k3)?;
        s += h * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0;
    }
    for i in 1..samples.len() {
        if !(front_r[i] > front_r[i - 1]) || !(samples[i].0 > samples[i - 1].0) {
            return Err(CorrectorError::BundleNotSingleValued { theta: h * i as f64 });
        }
    }
    let max_slope = MAX_SLOPE_DEG.to_radians().tan();
    if let Some(bad) = samples.iter().find(|s| s.2.abs() >= max_slope) {
        return Err(CorrectorError::SlopeUnmanufacturable {
            r: bad.0,
            slope: bad.2,
        });
    }
    check_thickness(spec, &samples)?;
    samples[0] = (0.0, samples[0].1, 0.0);
    let table = TabulatedProfile::new(samples.clone())
        .map_err(|_| CorrectorError::BundleNotSingleValued { theta: 0.0 })?;
    let r_edge = samples[samples.len() - 1].0;
    let uniform: Vec<(f64, f64, f64)> = (0..=FIT_POINTS)
        .map(|i| {
            let r = r_edge * i as f64 / FIT_POINTS as f64;
            let (z, dz) = table.eval(r);
            (r, z, dz)
        })
        .collect();
    let (reference_z0, coefficients, fit_residual_rms) = fit_even_polynomial(&uniform);
    Ok(AsphereProfile {
        effective_focal_length: samples[1].0 / h.sin(),
        samples,
        coefficients,
        reference_z0,
        fit_residual_rms,
        material_index: spec.material_index,
        vertex_z,
        front_face_z: spec.front_face_z,
        center_thickness: spec.center_thickness,
        orientation: spec.orientation,
        design_angle: theta_max,
    })
}

fn check_thickness(spec: &CorrectorDesignSpec, samples: &[(f64, f64, f64)]) -> Result<(), CorrectorError> {
    for &(r, sag, _) in samples {
        let thickness = match spec.orientation {
            Orientation::FlatFirst => spec.center_thickness + sag,
            Orientation::AsphereFirst => spec.center_thickness - sag,
        };
        if !(thickness > 0.0) {
            return Err(CorrectorError::NonPositiveThickness { r, thickness });
        }
    }
    Ok(())
}

/// Radii, evenly spaced over the aperture, used for the polynomial fit.
const FIT_POINTS: usize = 2000;

/// Least-squares `z₀ + Σ a₂ᵢ r²ⁱ`, i = 1..6, on radii normalized to the aperture.
fn fit_even_polynomial(samples: &[(f64, f64, f64)]) -> (f64, [f64; 6], f64) {
    let r_max = samples.last().map_or(1.0, |s| s.0).max(f64::MIN_POSITIVE);
    let rows = samples.len();
    let a = DMatrix::from_fn(rows, 7, |i, j| (samples[i].0 / r_max).powi(2 * j as i32));
    let b = DVector::from_iterator(rows, samples.iter().map(|s| s.1));
    let x = a
        .clone()
        .svd(true, true)
        .solve(&b, 1e-14)
        .unwrap_or_else(|_| DVector::zeros(7));
    let residual = (&a * &x - &b).norm() / (rows as f64).sqrt();
    let mut coefficients = [0.0; 6];
    for (i, c) in coefficients.iter_mut().enumerate() {
        *c = x[i + 1] / r_max.powi(2 * (i as i32 + 1));
    }
    (x[0], coefficients, residual)
}

/// Outcome of re-tracing a fresh bundle through mirror, viewport and corrector.
#[derive(Debug, Clone, PartialEq)]
pub struct Verification {
    /// Largest angle between an exit ray and the axis, rad.
    pub direction_spread: f64,
    /// Spread of optical path length to a plane behind the element, m.
    pub opl_spread: f64,
    /// Spot at the focal plane of an ideal refocusing lens.
    pub refocus_spot: SpotDiagram,
    /// Refocus spot rms referred back to the ion by the imaging magnification.
    pub ion_referred_rms: f64,
    /// `0.61 λ / NA` at the comparison NA.
    pub diffraction_scale: f64,
    pub rays_traced: usize,
    pub rays_surviving: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyOptions {
    pub n_rays: usize,
    /// Lattice shift keeping verification rays off the design rays.
    pub offset: f64,
    pub comparison_na: f64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            n_rays: 4000,
            offset: 0.37,
            comparison_na: 0.26,
        }
    }
}

/// Full stack from the ion through the corrector.
pub fn corrected_stack(profile: &AsphereProfile, spec: &CorrectorDesignSpec) -> Result<SurfaceStack, CorrectorError> {
    let mut elements = spec.mirror_stack();
    elements.extend(profile.elements()?);
    Ok(SurfaceStack::new(elements))
}

pub fn verify(
    profile: &AsphereProfile,
    spec: &CorrectorDesignSpec,
    options: &VerifyOptions,
) -> Result<Verification, CorrectorError> {
    if !(options.comparison_na > 0.0 && options.comparison_na < 1.0) {
        return Err(CorrectorError::Invalid("comparison_na must lie in (0, 1)".into()));
    }
    let stack = corrected_stack(profile, spec)?;
    let sampling = Sampling {
        n_rays: options.n_rays,
        kind: SamplingKind::Fibonacci,
        min_angle: spec.hole_angle(),
        max_angle: spec.rim_angle().min(profile.design_angle),
        offset: options.offset,
    };
    let paths = trace_bundle(Vec3::new(0.0, 0.0, spec.source_z), &stack, &sampling);
    let alive: Vec<RayPath> = paths.iter().filter(|p| p.ray.alive).cloned().collect();
    let spread = direction_spread(&alive);
    let z_ref = profile.back_z() + 1e-3;
    let opls: Vec<f64> = alive
        .iter()
        .map(|p| p.ray.opl + (z_ref - p.ray.origin.z) / p.ray.direction.z)
        .collect();
    let opl_spread = opls.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - opls.iter().cloned().fold(f64::INFINITY, f64::min);
    let h_max = alive
        .iter()
        .map(|p| p.ray.origin.x.hypot(p.ray.origin.y))
        .fold(0.0, f64::max);
    let focal_length = h_max / options.comparison_na.asin().tan();
    let lens_z = z_ref + 1e-3;
    let refocus = SurfaceStack::new(vec![Element::IdealLens {
        z: lens_z,
        focal_length,
        radius: 2.0 * h_max + 1.0,
    }]);
    let refocused: Vec<RayPath> = alive.iter().map(|p| trace(p.ray, &refocus)).collect();
    let refocus_spot = spot(&refocused, lens_z + focal_length)
        .map_err(|e| CorrectorError::Invalid(e.to_string()))?;
    let ion_referred_rms = refocus_spot.rms_radius * profile.effective_focal_length / focal_length;
    Ok(Verification {
        direction_spread: spread,
        opl_spread,
        ion_referred_rms,
        refocus_spot,
        diffraction_scale: 0.61 * WAVELENGTH / options.comparison_na,
        rays_traced: paths.len(),
        rays_surviving: alive.len(),
    })
}

/// OPL from the source to a plane behind the element for each design emission angle.
pub fn design_ray_opls(profile: &AsphereProfile, spec: &CorrectorDesignSpec) -> Result<Vec<f64>, CorrectorError> {
    let mut elements = vec![Element::Conic({
        let mut m = spec.mirror.surface();
        m.aperture.r_min = 0.0;
        m.aperture.r_max *= 1.2;
        m
    })];
    elements.extend(spec.window.map(Element::Window));
    elements.extend(profile.elements()?);
    let stack = SurfaceStack::new(elements);
    let z_ref = profile.back_z() + 1e-3;
    let n = profile.samples.len();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let theta = profile.design_angle * i as f64 / (n - 1) as f64;
        let d = Vec3::new(-theta.sin(), 0.0, -theta.cos());
        let p = trace(Ray::new(Vec3::new(0.0, 0.0, spec.source_z), d), &stack);
        if !p.ray.alive {
            return Err(CorrectorError::DesignRayLost { theta });
        }
        out.push(p.ray.opl + (z_ref - p.ray.origin.z) / p.ray.direction.z);
    }
    Ok(out)
}

/// Machining table: header, coefficient block, then `r,sag,slope` rows at `pitch`.
pub fn export_profile(profile: &AsphereProfile, pitch: f64) -> Result<String, CorrectorError> {
    if profile.samples.len() < 2 {
        return Err(CorrectorError::EmptyProfile);
    }
    if !(pitch > 0.0) {
        return Err(CorrectorError::Invalid("pitch must be positive".into()));
    }
    let table = profile.tabulated()?;
    let mut out = String::new();
    let _ = writeln!(out, "# material_index={}", profile.material_index);
    let _ = writeln!(out, "# vertex_z_m={:.9e}", profile.vertex_z);
    let _ = writeln!(out, "# fit_residual_rms_m={:.3e}", profile.fit_residual_rms);
    let _ = writeln!(out, "# z0_m={:.12e}", profile.reference_z0);
    for (i, a) in profile.coefficients.iter().enumerate() {
        let _ = writeln!(out, "# a{}={:.12e}", 2 * (i + 1), a);
    }
    out.push_str("r_m,sag_m,slope\n");
    let steps = (profile.r_max() / pitch).floor() as usize;
    for i in 0..=steps {
        let r = pitch * i as f64;
        let (z, dz) = table.eval(r);
        let _ = writeln!(out, "{r:.9e},{z:.12e},{dz:.12e}");
    }
    Ok(out)
}

/// Analytic plano-hyperbolic collimator for a point source `distance` in front of the vertex.
pub fn hyperbolic_collimator(distance: f64, index: f64, r_max: f64) -> ConicSurface {
    ConicSurface {
        vertex_z: 0.0,
        curvature: 1.0 / ((index - 1.0) * distance),
        conic_constant: -index * index,
        aperture: Aperture { r_min: 0.0, r_max },
        kind: SurfaceKind::Refracting {
            n_before: 1.0,
            n_after: index,
        },
    }
}
