//! Light collection: solid angle of the mirror seen from the ion, dipole
//! weighting, and the photon budget downstream of the mirror.

use std::f64::consts::PI;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::geometry::{conic_sag, MirrorSpec, NeedleSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CollectError {
    #[error("ion at z = {z:.6e} m lies inside an electrode")]
    IonInsideElectrode { z: f64 },
    #[error("invalid collection input: {0}")]
    Invalid(String),
}

/// Angular emission pattern of the ion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EmissionModel {
    Isotropic,
    /// `3 sin²θ / (8π)` about `axis`.
    Dipole { axis: Vector3<f64> },
}

impl EmissionModel {
    /// Dipole along the optical axis.
    pub fn axial_dipole() -> Self {
        Self::Dipole { axis: Vector3::z() }
    }

    /// Dipole whose axis makes `polar_angle` with `+z`, in the x-z plane.
    pub fn tilted_dipole(polar_angle: f64) -> Self {
        Self::Dipole {
            axis: Vector3::new(polar_angle.sin(), 0.0, polar_angle.cos()),
        }
    }

    fn validate(&self) -> Result<(), CollectError> {
        if let Self::Dipole { axis } = self {
            if !((axis.norm() - 1.0).abs() < 1e-9) {
                return Err(CollectError::Invalid("dipole axis must be a unit vector".into()));
            }
        }
        Ok(())
    }

    /// Probability density per steradian in direction `u` (unit).
    pub fn density(&self, u: &Vector3<f64>) -> f64 {
        match self {
            Self::Isotropic => 1.0 / (4.0 * PI),
            Self::Dipole { axis } => {
                let c = u.dot(axis);
                3.0 * (1.0 - c * c) / (8.0 * PI)
            }
        }
    }

    fn polar_angle(&self) -> f64 {
        match self {
            Self::Isotropic => 0.0,
            Self::Dipole { axis } => axis.z.clamp(-1.0, 1.0).acos(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SolidAngleMode {
    /// Acceptance edges located by bisection, pattern integrated by Gauss-Legendre.
    Quadrature,
    MonteCarlo { samples: usize, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollectedFraction {
    pub geometric_fraction: f64,
    pub weighted_fraction: f64,
    /// Monte Carlo standard errors of the two fractions; zero for quadrature.
    pub geometric_std_error: f64,
    pub weighted_std_error: f64,
}

/// Everything `solid_angle` needs to decide whether a direction reaches the mirror.
#[derive(Debug, Clone)]
struct Acceptance {
    ion_z: f64,
    curvature: f64,
    conic_constant: f64,
    r_hole: f64,
    r_edge: f64,
    /// Half-angle about `-z` shadowed by the needle.
    needle_shadow: f64,
}

impl Acceptance {
    fn new(ion_z: f64, mirror: &MirrorSpec, needle: Option<&NeedleSpec>) -> Result<Self, CollectError> {
        mirror
            .validate()
            .map_err(|e| CollectError::Invalid(e.to_string()))?;
        if !(ion_z > 0.0) {
            return Err(CollectError::IonInsideElectrode { z: ion_z });
        }
        let needle_shadow = match needle {
            None => 0.0,
            Some(n) => {
                if ion_z <= n.tip_z {
                    return Err(CollectError::IonInsideElectrode { z: ion_z });
                }
                let rs = n.shaft_radius();
                (rs / (ion_z - n.tip_z + n.taper_length())).atan()
            }
        };
        Ok(Self {
            ion_z,
            curvature: 1.0 / mirror.radius_of_curvature,
            conic_constant: mirror.conic_constant,
            r_hole: 0.5 * mirror.vertex_hole_diameter,
            r_edge: 0.5 * mirror.aperture_diameter,
            needle_shadow,
        })
    }

    /// Does a ray at polar angle `theta` from `+z` land on the reflective annulus?
    fn accepts(&self, theta: f64) -> bool {
        if PI - theta < self.needle_shadow {
            return false;
        }
        match self.mirror_hit_radius(theta) {
            Some(r) => r >= self.r_hole && r <= self.r_edge,
            None => false,
        }
    }

    /// Radius at which the ray meets the mirror sheet, if it does.
    fn mirror_hit_radius(&self, theta: f64) -> Option<f64> {
        // c r² - 2 z + c (1+k) z² = 0 with r = s sinθ, z = z0 + s cosθ
        let (c, k1) = (self.curvature, 1.0 + self.conic_constant);
        let (st, ct, z0) = (theta.sin(), theta.cos(), self.ion_z);
        let a = c * st * st + c * k1 * ct * ct;
        let b = -2.0 * ct + 2.0 * c * k1 * z0 * ct;
        let q = -2.0 * z0 + c * k1 * z0 * z0;
        let mut roots = [f64::NAN; 2];
        if a.abs() < 1e-12 * (b.abs() + 1.0) {
            if b != 0.0 {
                roots[0] = -q / b;
            }
        } else {
            let disc = b * b - 4.0 * a * q;
            if disc < 0.0 {
                return None;
            }
            let sq = disc.sqrt();
            let t = -0.5 * (b + b.signum() * sq);
            roots = [t / a, if t != 0.0 { q / t } else { f64::NAN }];
        }
        roots.sort_by(|x, y| x.total_cmp(y));
        for s in roots {
            if !(s > 0.0) {
                continue;
            }
            let (r, z) = (s * st, z0 + s * ct);
            // keep only the sheet described by the sag formula
            if r <= self.r_edge * (1.0 + 1e-12) {
                let sag = conic_sag(self.curvature, self.conic_constant, r.min(self.r_edge));
                if (z - sag).abs() <= 1e-12 * self.r_edge {
                    return Some(r);
                }
            } else {
                return Some(r);
            }
        }
        None
    }

    /// Accepted polar intervals `[a, b]` from `+z`.
    fn intervals(&self) -> Vec<(f64, f64)> {
        const SCAN: usize = 4096;
        let mut out = Vec::new();
        let mut start: Option<f64> = None;
        let mut prev_t = 0.0;
        let mut prev = self.accepts(0.0);
        if prev {
            start = Some(0.0);
        }
        for i in 1..=SCAN {
            let t = PI * i as f64 / SCAN as f64;
            let cur = self.accepts(t);
            if cur != prev {
                let edge = self.bisect(prev_t, t, prev);
                if cur {
                    start = Some(edge);
                } else if let Some(s) = start.take() {
                    out.push((s, edge));
                }
            }
            prev = cur;
            prev_t = t;
        }
        if let Some(s) = start {
            out.push((s, PI));
        }
        out
    }

    fn bisect(&self, mut lo: f64, mut hi: f64, lo_state: bool) -> f64 {
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.accepts(mid) == lo_state {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 0 { 1.0 } else { p1 };
            dp = n as f64 * (x * p - p0) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out
}

/// Integral of the emission density over the polar band `[a, b]` (from `+z`).
fn band_integral(emission: &EmissionModel, a: f64, b: f64, nodes: &[(f64, f64)]) -> f64 {
    const PANELS: usize = 8;
    const AZIMUTH: usize = 64;
    let (ca, cb) = (a.cos(), b.cos());
    let mut sum = 0.0;
    for p in 0..PANELS {
        let lo = cb + (ca - cb) * p as f64 / PANELS as f64;
        let hi = cb + (ca - cb) * (p + 1) as f64 / PANELS as f64;
        let half = 0.5 * (hi - lo);
        for &(x, w) in nodes {
            let ct = lo + half * (x + 1.0);
            let st = (1.0 - ct * ct).max(0.0).sqrt();
            let mut ring = 0.0;
            for m in 0..AZIMUTH {
                let phi = 2.0 * PI * (m as f64 + 0.5) / AZIMUTH as f64;
                ring += emission.density(&Vector3::new(st * phi.cos(), st * phi.sin(), ct));
            }
            sum += w * half * ring * 2.0 * PI / AZIMUTH as f64;
        }
    }
    sum
}

/// Fraction of emission reaching the reflective part of the mirror from an on-axis ion.
///
/// Rays that fall into the vertex hole, miss the rim, or hit the needle
/// (when given) are not collected.
pub fn solid_angle(
    ion_z: f64,
    mirror: &MirrorSpec,
    needle: Option<&NeedleSpec>,
    emission: &EmissionModel,
    mode: SolidAngleMode,
) -> Result<CollectedFraction, CollectError> {
    emission.validate()?;
    let acc = Acceptance::new(ion_z, mirror, needle)?;
    match mode {
        SolidAngleMode::Quadrature => {
            let nodes = gauss_legendre(24);
            let iso = EmissionModel::Isotropic;
            let (mut g, mut w) = (0.0, 0.0);
            for (a, b) in acc.intervals() {
                g += band_integral(&iso, a, b, &nodes);
                w += band_integral(emission, a, b, &nodes);
            }
            Ok(CollectedFraction {
                geometric_fraction: g,
                weighted_fraction: w,
                geometric_std_error: 0.0,
                weighted_std_error: 0.0,
            })
        }
        SolidAngleMode::MonteCarlo { samples, seed } => {
            if samples < 10_000 {
                return Err(CollectError::Invalid(
                    "Monte Carlo needs at least 10^4 samples".into(),
                ));
            }
            monte_carlo(&acc, emission, samples, seed)
        }
    }
}

fn monte_carlo(
    acc: &Acceptance,
    emission: &EmissionModel,
    samples: usize,
    seed: u64,
) -> Result<CollectedFraction, CollectError> {
    const BATCH: usize = 8192;
    let batches = samples.div_ceil(BATCH);
    let sums: Vec<[f64; 3]> = (0..batches)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(b as u64);
            let n = BATCH.min(samples - b * BATCH);
            let mut s = [0.0; 3];
            for _ in 0..n {
                let ct: f64 = rng.gen_range(-1.0..=1.0);
                let phi: f64 = rng.gen_range(0.0..2.0 * PI);
                if acc.accepts(ct.acos()) {
                    let st = (1.0 - ct * ct).sqrt();
                    let u = Vector3::new(st * phi.cos(), st * phi.sin(), ct);
                    let w = 4.0 * PI * emission.density(&u);
                    s[0] += 1.0;
                    s[1] += w;
                    s[2] += w * w;
                }
            }
            s
        })
        .collect();
    let n = samples as f64;
    let (hits, wsum, wsq) = sums
        .iter()
        .fold((0.0, 0.0, 0.0), |t, s| (t.0 + s[0], t.1 + s[1], t.2 + s[2]));
    let g = hits / n;
    let w = wsum / n;
    Ok(CollectedFraction {
        geometric_fraction: g,
        weighted_fraction: w,
        geometric_std_error: (g * (1.0 - g) / n).sqrt(),
        weighted_std_error: ((wsq / n - w * w).max(0.0) / n).sqrt(),
    })
}

/// Closed-form share of a dipole pattern falling in the cap `θ ∈ [θ₁, π]` about `+z`.
///
/// `axis_polar_angle` is the angle between the dipole axis and `+z`.
pub fn dipole_cap_fraction(axis_polar_angle: f64, theta1: f64) -> f64 {
    dipole_band_fraction(axis_polar_angle, theta1, PI)
}

/// Closed-form share of a dipole pattern in the polar band `[a, b]` about `+z`.
pub fn dipole_band_fraction(axis_polar_angle: f64, a: f64, b: f64) -> f64 {
    let (ca, cb) = (a.cos(), b.cos());
    let (s2, c2) = (axis_polar_angle.sin().powi(2), axis_polar_angle.cos().powi(2));
    let sin_cubed = (ca - ca.powi(3) / 3.0) - (cb - cb.powi(3) / 3.0);
    let cos_squared = (ca.powi(3) - cb.powi(3)) / 3.0;
    3.0 / (8.0 * PI) * (2.0 * PI * (ca - cb) - PI * s2 * sin_cubed - 2.0 * PI * c2 * cos_squared)
}

/// Polar band `(a, b)` collected from `ion_z`, for reuse with the closed forms.
pub fn acceptance_band(
    ion_z: f64,
    mirror: &MirrorSpec,
    needle: Option<&NeedleSpec>,
) -> Result<Vec<(f64, f64)>, CollectError> {
    Ok(Acceptance::new(ion_z, mirror, needle)?.intervals())
}

/// Closed-form weighted fraction over the acceptance band, for cross-checks.
pub fn weighted_fraction_closed_form(
    ion_z: f64,
    mirror: &MirrorSpec,
    needle: Option<&NeedleSpec>,
    emission: &EmissionModel,
) -> Result<f64, CollectError> {
    emission.validate()?;
    let bands = acceptance_band(ion_z, mirror, needle)?;
    Ok(bands
        .iter()
        .map(|&(a, b)| match emission {
            EmissionModel::Isotropic => 0.5 * (a.cos() - b.cos()),
            EmissionModel::Dipole { .. } => dipole_band_fraction(emission.polar_angle(), a, b),
        })
        .sum())
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossElement {
    pub name: String,
    pub transmittance: f64,
}

impl LossElement {
    pub fn new(name: &str, transmittance: f64) -> Self {
        Self {
            name: name.to_string(),
            transmittance,
        }
    }
}

/// Default per-element transmittances downstream of emission.
///
/// The product is 0.0406, so a 24 % weighted fraction gives about 1 %
/// detected per excitation.
pub fn tack_loss_chain() -> Vec<LossElement> {
    vec![
        LossElement::new("mirror", 0.75),
        LossElement::new("viewport", 0.92),
        LossElement::new("corrector", 0.92),
        LossElement::new("objective", 0.80),
        LossElement::new("beamsplitter", 0.50),
        LossElement::new("pmt_quantum_efficiency", 0.16),
    ]
}

pub fn chain_throughput(chain: &[LossElement]) -> Result<f64, CollectError> {
    for e in chain {
        if !(0.0..=1.0).contains(&e.transmittance) {
            return Err(CollectError::Invalid(format!(
                "transmittance of {} must lie in [0, 1]",
                e.name
            )));
        }
    }
    Ok(chain.iter().map(|e| e.transmittance).product())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CollectionBudget {
    pub geometric_fraction: f64,
    pub weighted_fraction: f64,
    pub loss_chain: Vec<LossElement>,
    pub detected_per_excitation: f64,
    pub expected_counts: f64,
}

pub fn photon_budget(
    geometric_fraction: f64,
    weighted_fraction: f64,
    loss_chain: &[LossElement],
    n_excitations: f64,
) -> Result<CollectionBudget, CollectError> {
    if !(0.0..=1.0).contains(&weighted_fraction) {
        return Err(CollectError::Invalid("weighted_fraction must lie in [0, 1]".into()));
    }
    if !(n_excitations >= 0.0) {
        return Err(CollectError::Invalid("n_excitations must be non-negative".into()));
    }
    let detected = weighted_fraction * chain_throughput(loss_chain)?;
    Ok(CollectionBudget {
        geometric_fraction,
        weighted_fraction,
        loss_chain: loss_chain.to_vec(),
        detected_per_excitation: detected,
        expected_counts: n_excitations * detected,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NaEquivalent {
    /// sr
    pub solid_angle: f64,
    pub half_angle: f64,
    pub numerical_aperture: f64,
    /// Set when the cone would open past a hemisphere; NA is then reported as 1.
    pub above_hemisphere: bool,
}

/// Numerical aperture of the symmetric cone holding `fraction` of 4π.
pub fn na_equivalent(fraction: f64) -> Result<NaEquivalent, CollectError> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(CollectError::Invalid("fraction must lie in [0, 1]".into()));
    }
    let solid_angle = 4.0 * PI * fraction;
    let half_angle = (1.0 - 2.0 * fraction).clamp(-1.0, 1.0).acos();
    let above = half_angle > PI / 2.0 + 1e-15;
    Ok(NaEquivalent {
        solid_angle,
        half_angle,
        numerical_aperture: if above { 1.0 } else { half_angle.sin() },
        above_hemisphere: above,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mirror() -> MirrorSpec {
        MirrorSpec::tack_default()
    }

    /// Independent oracle: polar angles from `+z` to the rim and to the hole edge.
    fn hand_fraction(z: f64) -> f64 {
        let rim = (3.0e-3f64, 4.0e-3 - (16.0e-6f64 - 9.0e-6).sqrt());
        let hole = (0.375e-3f64, 4.0e-3 - (16.0e-6f64 - 0.375e-3f64.powi(2)).sqrt());
        let ce = (rim.1 - z) / (rim.0.powi(2) + (rim.1 - z).powi(2)).sqrt();
        let ch = (hole.1 - z) / (hole.0.powi(2) + (hole.1 - z).powi(2)).sqrt();
        0.5 * (ce - ch)
    }

    #[test]
    fn gauss_legendre_is_exact_for_polynomials() {
        let nodes = gauss_legendre(10);
        let sum_w: f64 = nodes.iter().map(|n| n.1).sum();
        assert!((sum_w - 2.0).abs() < 1e-14);
        let x18: f64 = nodes.iter().map(|&(x, w)| w * x.powi(18)).sum();
        assert!((x18 - 2.0 / 19.0).abs() < 1e-14);
    }

    #[test]
    fn focus_fraction_matches_hand_geometry() {
        for z in [2.0e-3, 2.25e-3, 4.0e-3] {
            let f = solid_angle(z, &mirror(), None, &EmissionModel::Isotropic, SolidAngleMode::Quadrature)
                .unwrap();
            assert!((f.geometric_fraction - hand_fraction(z)).abs() < 1e-10, "{z}");
            assert_eq!(f.geometric_fraction, f.weighted_fraction);
        }
        assert!((hand_fraction(2.0e-3) - 0.38607).abs() < 1e-5);
        assert!((hand_fraction(2.25e-3) - 0.35005).abs() < 1e-5);
        assert!((hand_fraction(4.0e-3) - 0.16708).abs() < 1e-5);
    }

    #[test]
    fn hemisphere_from_centre_collects_half() {
        let m = MirrorSpec {
            aperture_diameter: 8.0e-3,
            vertex_hole_diameter: 0.0,
            ..mirror()
        };
        let f = solid_angle(4.0e-3, &m, None, &EmissionModel::Isotropic, SolidAngleMode::Quadrature)
            .unwrap();
        assert!((f.geometric_fraction - 0.5).abs() < 1e-9, "{f:?}");
    }

    #[test]
    fn ion_inside_electrode() {
        let needle = NeedleSpec::tack_default();
        let e = EmissionModel::Isotropic;
        assert!(matches!(
            solid_angle(-1e-4, &mirror(), None, &e, SolidAngleMode::Quadrature),
            Err(CollectError::IonInsideElectrode { .. })
        ));
        assert!(matches!(
            solid_angle(needle.tip_z - 1e-5, &mirror(), Some(&needle), &e, SolidAngleMode::Quadrature),
            Err(CollectError::IonInsideElectrode { .. })
        ));
    }

    #[test]
    fn needle_shadow_only_removes_light() {
        let mut needle = NeedleSpec::tack_default();
        needle.taper_half_angle = 60f64.to_radians();
        needle.tip_z = 1.9e-3;
        let e = EmissionModel::Isotropic;
        let off = solid_angle(2.0e-3, &mirror(), None, &e, SolidAngleMode::Quadrature).unwrap();
        let on = solid_angle(2.0e-3, &mirror(), Some(&needle), &e, SolidAngleMode::Quadrature).unwrap();
        assert!(on.geometric_fraction < off.geometric_fraction);
    }

    #[test]
    fn dipole_cap_anchors() {
        assert!((dipole_cap_fraction(0.0, 0.0) - 1.0).abs() < 1e-15);
        assert!((dipole_cap_fraction(0.0, PI / 2.0) - 0.5).abs() < 1e-15);
        let c = 0.3f64;
        let closed = 0.25 * (2.0 - c) * (1.0 + c).powi(2);
        assert!((dipole_cap_fraction(0.0, c.acos()) - closed).abs() < 1e-15);
    }

    #[test]
    fn budget_examples() {
        let b = photon_budget(0.24, 0.24, &[LossElement::new("rest", 0.0417)], 1e6).unwrap();
        assert!((b.expected_counts - 10_008.0).abs() < 1.0);
        let b = photon_budget(1.0, 1.0, &[], 1e6).unwrap();
        assert_eq!(b.expected_counts, 1e6);
        let mut chain = tack_loss_chain();
        chain[2].transmittance = 0.0;
        assert_eq!(photon_budget(0.3, 0.3, &chain, 1e6).unwrap().expected_counts, 0.0);
        chain[2].transmittance = 1.2;
        assert!(photon_budget(0.3, 0.3, &chain, 1e6).is_err());
    }

    #[test]
    fn na_examples() {
        let na = na_equivalent(0.24).unwrap();
        assert!((na.solid_angle - 3.016).abs() < 1e-3);
        assert!((na.numerical_aperture - 0.854).abs() < 1e-3);
        assert_eq!(na_equivalent(0.0).unwrap().numerical_aperture, 0.0);
        let half = na_equivalent(0.5).unwrap();
        assert!((half.numerical_aperture - 1.0).abs() < 1e-15 && !half.above_hemisphere);
        let over = na_equivalent(0.7).unwrap();
        assert!(over.above_hemisphere && over.numerical_aperture == 1.0);
    }
}
