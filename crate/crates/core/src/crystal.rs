//! Equilibrium configurations of a few identical ions: trap potential plus
//! mutual Coulomb repulsion, relaxed from random starts.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::consts::{COULOMB_CONSTANT, ELEMENTARY_CHARGE};
use crate::field::ScalarField2D;
use crate::pseudo::IonSpecies;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CrystalError {
    #[error("ions {0} and {1} coincide")]
    OverlappingIons(usize, usize),
    #[error("no restart converged (best max force {best_force:.3e} N)")]
    NoConvergence { best_force: f64 },
    #[error("ion at r = {r:.4e} m, z = {z:.4e} m left the gridded field")]
    OutsideGrid { r: f64, z: f64 },
    #[error("invalid crystal input: {0}")]
    Invalid(String),
}

/// Bicubic Catmull-Rom interpolant of `Ψ(r, z)`, mirrored about the axis.
#[derive(Debug, Clone)]
pub struct GriddedPotential {
    psi: Arc<ScalarField2D>,
}

impl GriddedPotential {
    pub fn new(psi: Arc<ScalarField2D>) -> Self {
        Self { psi }
    }

    pub fn field(&self) -> &ScalarField2D {
        &self.psi
    }

    fn node(&self, i: isize, j: usize) -> f64 {
        let nr = self.psi.grid.nr() as isize;
        let i = i.unsigned_abs().min(nr as usize - 1);
        self.psi.values[j * nr as usize + i]
    }

    /// `(Ψ, ∂Ψ/∂r, ∂Ψ/∂z)` in eV and eV/m.
    pub fn eval(&self, r: f64, z: f64) -> Result<(f64, f64, f64), CrystalError> {
        let g = &self.psi.grid;
        let h = g.spacing;
        let (nr, nz) = (g.nr(), g.nz());
        let u = r.abs() / h;
        let v = (z - g.z_min) / h;
        if !(u <= (nr - 2) as f64 && v >= 1.0 && v <= (nz - 3) as f64) {
            return Err(CrystalError::OutsideGrid { r, z });
        }
        let (i0, j0) = (u.floor() as isize, v.floor() as usize);
        let (tu, tv) = (u - i0 as f64, v - j0 as f64);
        let (wu, du) = catmull_rom(tu);
        let (wv, dv) = catmull_rom(tv);
        let (mut val, mut d_r, mut d_z) = (0.0, 0.0, 0.0);
        for (b, (&wz, &dwz)) in wv.iter().zip(dv.iter()).enumerate() {
            let j = j0 + b - 1;
            for (a, (&wr, &dwr)) in wu.iter().zip(du.iter()).enumerate() {
                let p = self.node(i0 + a as isize - 1, j);
                val += wr * wz * p;
                d_r += dwr * wz * p;
                d_z += wr * dwz * p;
            }
        }
        let sign = if r < 0.0 { -1.0 } else { 1.0 };
        Ok((val, sign * d_r / h, d_z / h))
    }
}

/// Catmull-Rom weights and their derivatives at fractional position `t`.
fn catmull_rom(t: f64) -> ([f64; 4], [f64; 4]) {
    let (t2, t3) = (t * t, t * t * t);
    (
        [
            0.5 * (-t3 + 2.0 * t2 - t),
            0.5 * (3.0 * t3 - 5.0 * t2 + 2.0),
            0.5 * (-3.0 * t3 + 4.0 * t2 + t),
            0.5 * (t3 - t2),
        ],
        [
            0.5 * (-3.0 * t2 + 4.0 * t - 1.0),
            0.5 * (9.0 * t2 - 10.0 * t),
            0.5 * (-9.0 * t2 + 8.0 * t + 1.0),
            0.5 * (3.0 * t2 - 2.0 * t),
        ],
    )
}

#[derive(Debug, Clone)]
pub enum TrapModel {
    /// Secular frequencies in Hz, minimum at the origin.
    Harmonic { axial: f64, radial: f64 },
    Gridded(GriddedPotential),
}

impl TrapModel {
    fn validate(&self) -> Result<(), CrystalError> {
        if let Self::Harmonic { axial, radial } = self {
            if !(*axial > 0.0 && *radial > 0.0) {
                return Err(CrystalError::Invalid("harmonic frequencies must be positive".into()));
            }
        }
        Ok(())
    }

    /// Trap energy (J) and its gradient (N) for one ion.
    fn energy(&self, p: &Vector3<f64>, ion: &IonSpecies) -> Result<(f64, Vector3<f64>), CrystalError> {
        match self {
            Self::Harmonic { axial, radial } => {
                let wr = 2.0 * PI * radial;
                let wz = 2.0 * PI * axial;
                let kr = ion.mass * wr * wr;
                let kz = ion.mass * wz * wz;
                let e = 0.5 * (kr * (p.x * p.x + p.y * p.y) + kz * p.z * p.z);
                Ok((e, Vector3::new(kr * p.x, kr * p.y, kz * p.z)))
            }
            Self::Gridded(g) => {
                let rho = p.x.hypot(p.y);
                let (psi, d_r, d_z) = g.eval(rho, p.z)?;
                let e = ELEMENTARY_CHARGE;
                let (cx, cy) = if rho > 0.0 { (p.x / rho, p.y / rho) } else { (0.0, 0.0) };
                Ok((psi * e, Vector3::new(d_r * e * cx, d_r * e * cy, d_z * e)))
            }
        }
    }

    /// Where the crystal is centred: origin, or the on-axis minimum of the grid.
    fn centre(&self) -> Vector3<f64> {
        match self {
            Self::Harmonic { .. } => Vector3::zeros(),
            Self::Gridded(g) => match crate::pseudo::find_minimum(g.field()) {
                Ok(m) => Vector3::new(0.0, 0.0, m.z),
                Err(_) => Vector3::zeros(),
            },
        }
    }

    /// Radial secular angular frequency, for the length scale.
    fn radial_omega(&self, ion: &IonSpecies) -> f64 {
        match self {
            Self::Harmonic { radial, .. } => 2.0 * PI * radial,
            Self::Gridded(g) => crate::pseudo::find_minimum(g.field())
                .and_then(|m| crate::pseudo::secular_frequencies(g.field(), &m, ion))
                .map(|f| 2.0 * PI * f.radial)
                .unwrap_or(2.0 * PI * 100e3),
        }
    }
}

/// Coulomb length `(k_e q² / (m ω_r²))^{1/3}`.
pub fn coulomb_length(ion: &IonSpecies, omega_radial: f64) -> f64 {
    (COULOMB_CONSTANT * ion.charge * ion.charge / (ion.mass * omega_radial * omega_radial)).cbrt()
}

/// Total energy (J): trap term per ion plus pairwise Coulomb repulsion.
pub fn total_energy(positions: &[Vector3<f64>], trap: &TrapModel, ion: &IonSpecies) -> Result<f64, CrystalError> {
    Ok(energy_and_gradient(positions, trap, ion)?.0)
}

/// Energy (J) and per-ion gradient (N).
pub fn energy_and_gradient(
    positions: &[Vector3<f64>],
    trap: &TrapModel,
    ion: &IonSpecies,
) -> Result<(f64, Vec<Vector3<f64>>), CrystalError> {
    let kq2 = COULOMB_CONSTANT * ion.charge * ion.charge;
    let mut grad = vec![Vector3::zeros(); positions.len()];
    let mut energy = 0.0;
    for (i, p) in positions.iter().enumerate() {
        let (e, g) = trap.energy(p, ion)?;
        energy += e;
        grad[i] += g;
    }
    for i in 0..positions.len() {
        for j in i + 1..positions.len() {
            let d = positions[i] - positions[j];
            let r = d.norm();
            if !(r > 0.0) {
                return Err(CrystalError::OverlappingIons(i, j));
            }
            energy += kq2 / r;
            let f = d * (kq2 / (r * r * r));
            grad[i] -= f;
            grad[j] += f;
        }
    }
    Ok((energy, grad))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrystalConfig {
    /// Cartesian positions, m, `z` along the trap axis.
    pub positions: Vec<Vector3<f64>>,
    /// J
    pub energy: f64,
    pub converged: bool,
    /// Largest force component at the returned configuration, N.
    pub max_force: f64,
    /// Converged energy of every restart, in restart order.
    pub restart_energies: Vec<Option<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelaxOptions {
    pub restarts: usize,
    /// Largest allowed force component, N.
    pub tolerance: f64,
    pub seed: u64,
    pub max_iterations: usize,
}

impl Default for RelaxOptions {
    fn default() -> Self {
        Self {
            restarts: 16,
            tolerance: 1e-24,
            seed: 0,
            max_iterations: 20_000,
        }
    }
}

/// Lowest-energy equilibrium over seeded random restarts.
///
/// The result is rotated about `z` so its outermost ion lies on `+x`.
pub fn relax(n_ions: usize, trap: &TrapModel, ion: &IonSpecies, options: &RelaxOptions) -> Result<CrystalConfig, CrystalError> {
    trap.validate()?;
    if n_ions == 0 || options.restarts == 0 {
        return Err(CrystalError::Invalid("need at least one ion and one restart".into()));
    }
    if !(options.tolerance > 0.0) {
        return Err(CrystalError::Invalid("tolerance must be positive".into()));
    }
    let scale = coulomb_length(ion, trap.radial_omega(ion));
    let force_unit = COULOMB_CONSTANT * ion.charge * ion.charge / (scale * scale);
    let centre = trap.centre();
    type Run = (Vec<Vector3<f64>>, f64, f64);
    let runs: Vec<Result<Run, CrystalError>> = (0..options.restarts)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
            rng.set_stream(k as u64);
            let ball = (n_ions as f64).sqrt().max(1.0);
            let start: Vec<f64> = (0..n_ions)
                .flat_map(|_| {
                    let v = loop {
                        let v = Vector3::new(
                            rng.gen_range(-1.0..1.0),
                            rng.gen_range(-1.0..1.0),
                            rng.gen_range(-1.0..1.0),
                        );
                        if v.norm() <= 1.0 {
                            break v;
                        }
                    };
                    (v * ball).iter().copied().collect::<Vec<_>>()
                })
                .collect();
            let objective = |x: &[f64]| -> Result<(f64, Vec<f64>), CrystalError> {
                let pos = unpack(x, scale, &centre);
                let (e, g) = energy_and_gradient(&pos, trap, ion)?;
                let grad = g.iter().flat_map(|v| (v / force_unit).iter().copied().collect::<Vec<_>>()).collect();
                Ok((e / (force_unit * scale), grad))
            };
            let x = lbfgs(objective, start, options.tolerance / force_unit, options.max_iterations)?;
            let pos = unpack(&x, scale, &centre);
            let (e, g) = energy_and_gradient(&pos, trap, ion)?;
            let fmax = g.iter().map(|v| v.amax()).fold(0.0, f64::max);
            Ok((pos, e, fmax))
        })
        .collect();
    let restart_energies: Vec<Option<f64>> = runs
        .iter()
        .map(|r| match r {
            Ok((_, e, f)) if *f <= options.tolerance => Some(*e),
            _ => None,
        })
        .collect();
    let best_force = runs
        .iter()
        .filter_map(|r| r.as_ref().ok().map(|t| t.2))
        .fold(f64::INFINITY, f64::min);
    let best = runs
        .into_iter()
        .filter_map(Result::ok)
        .filter(|(_, _, f)| *f <= options.tolerance)
        .min_by(|a, b| {
            a.1.total_cmp(&b.1).then_with(|| {
                let fa: Vec<f64> = a.0.iter().flat_map(|v| v.iter().copied().collect::<Vec<_>>()).collect();
                let fb: Vec<f64> = b.0.iter().flat_map(|v| v.iter().copied().collect::<Vec<_>>()).collect();
                fa.partial_cmp(&fb).unwrap_or(std::cmp::Ordering::Equal)
            })
        });
    let Some((positions, energy, max_force)) = best else {
        return Err(CrystalError::NoConvergence { best_force });
    };
    let positions = canonical_rotation(positions, &centre);
    Ok(CrystalConfig {
        positions,
        energy,
        converged: true,
        max_force,
        restart_energies,
    })
}

fn unpack(x: &[f64], scale: f64, centre: &Vector3<f64>) -> Vec<Vector3<f64>> {
    x.chunks(3)
        .map(|c| Vector3::new(c[0], c[1], c[2]) * scale + centre)
        .collect()
}

/// Rotate about the axis through `centre` so the ion farthest from it sits on `+x`.
fn canonical_rotation(positions: Vec<Vector3<f64>>, centre: &Vector3<f64>) -> Vec<Vector3<f64>> {
    let far = positions
        .iter()
        .map(|p| p - centre)
        .max_by(|a, b| a.xy().norm().total_cmp(&b.xy().norm()));
    let Some(far) = far else {
        return positions;
    };
    if far.xy().norm() == 0.0 {
        return positions;
    }
    let phi = -far.y.atan2(far.x);
    let (s, c) = phi.sin_cos();
    positions
        .iter()
        .map(|p| {
            let d = p - centre;
            Vector3::new(c * d.x - s * d.y, s * d.x + c * d.y, d.z) + centre
        })
        .collect()
}

/// Limited-memory BFGS with backtracking; stops when the largest gradient component is below `tol`.
fn lbfgs<F>(f: F, x0: Vec<f64>, tol: f64, max_iter: usize) -> Result<Vec<f64>, CrystalError>
where
    F: Fn(&[f64]) -> Result<(f64, Vec<f64>), CrystalError>,
{
    const MEMORY: usize = 10;
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let amax = |a: &[f64]| a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut x = x0;
    let (mut fx, mut g) = f(&x)?;
    let mut hist: Vec<(Vec<f64>, Vec<f64>, f64)> = Vec::with_capacity(MEMORY);
    for _ in 0..max_iter {
        if amax(&g) <= tol {
            break;
        }
        // two-loop recursion
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(hist.len());
        for (s, y, rho) in hist.iter().rev() {
            let a = rho * dot(s, &q);
            q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
            alphas.push(a);
        }
        if let Some((s, y, _)) = hist.last() {
            let gamma = dot(s, y) / dot(y, y);
            q.iter_mut().for_each(|v| *v *= gamma);
        } else {
            let gn = dot(&g, &g).sqrt().max(1e-300);
            q.iter_mut().for_each(|v| *v *= 0.1_f64.min(1.0 / gn));
        }
        for ((s, y, rho), a) in hist.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &q);
            q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
        }
        let mut dir: Vec<f64> = q.iter().map(|v| -v).collect();
        let mut slope = dot(&g, &dir);
        if slope >= 0.0 {
            hist.clear();
            dir = g.iter().map(|v| -v).collect();
            slope = -dot(&g, &g);
        }
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let xn: Vec<f64> = x.iter().zip(&dir).map(|(a, d)| a + step * d).collect();
            match f(&xn) {
                Ok((fn_, gn)) if fn_ <= fx + 1e-4 * step * slope => {
                    accepted = Some((xn, fn_, gn));
                    break;
                }
                Ok(_) | Err(CrystalError::OverlappingIons(..)) | Err(CrystalError::OutsideGrid { .. }) => {
                    step *= 0.5
                }
                Err(e) => return Err(e),
            }
        }
        let Some((xn, fn_, gn)) = accepted else {
            break;
        };
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-300 {
            if hist.len() == MEMORY {
                hist.remove(0);
            }
            hist.push((s, y, 1.0 / sy));
        }
        x = xn;
        fx = fn_;
        g = gn;
    }
    Ok(x)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    /// `z_rms / ρ_rms` about the centroid; 0 for a single ion.
    pub planarity: f64,
    /// Ion counts per radial shell, innermost first.
    pub shells: Vec<usize>,
}

/// Planarity and radial shell counts of a configuration.
pub fn classify(config: &CrystalConfig) -> Classification {
    let p = &config.positions;
    let n = p.len();
    if n <= 1 {
        return Classification {
            planarity: 0.0,
            shells: vec![n],
        };
    }
    let c = p.iter().fold(Vector3::zeros(), |a, v| a + v) / n as f64;
    let z_rms = (p.iter().map(|v| (v.z - c.z).powi(2)).sum::<f64>() / n as f64).sqrt();
    let mut rho: Vec<f64> = p.iter().map(|v| (v - c).xy().norm()).collect();
    let rho_rms = (rho.iter().map(|r| r * r).sum::<f64>() / n as f64).sqrt();
    let mut nearest: Vec<f64> = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| j != i)
                .map(|j| (p[i] - p[j]).norm())
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    nearest.sort_by(f64::total_cmp);
    let gap = 0.25 * nearest[n / 2];
    rho.sort_by(f64::total_cmp);
    let mut shells = vec![1];
    for w in rho.windows(2) {
        if w[1] - w[0] > gap {
            shells.push(1);
        } else if let Some(last) = shells.last_mut() {
            *last += 1;
        }
    }
    Classification {
        planarity: if rho_rms > 0.0 { z_rms / rho_rms } else { f64::INFINITY },
        shells,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trap() -> TrapModel {
        TrapModel::Harmonic {
            axial: 420e3,
            radial: 200e3,
        }
    }

    #[test]
    fn single_ion_sits_at_minimum() {
        let ion = IonSpecies::barium_138();
        let c = relax(1, &trap(), &ion, &RelaxOptions::default()).unwrap();
        assert!(c.positions[0].norm() < 1e-12);
        assert_eq!(total_energy(&c.positions, &trap(), &ion).unwrap(), c.energy);
        let k = classify(&c);
        assert_eq!(k.planarity, 0.0);
        assert_eq!(k.shells, vec![1]);
    }

    #[test]
    fn two_ions_match_force_balance() {
        let ion = IonSpecies::barium_138();
        let c = relax(2, &trap(), &ion, &RelaxOptions::default()).unwrap();
        let d = (c.positions[0] - c.positions[1]).norm();
        // independent oracle: 2 k q² / (m ω²) = d³
        let w = 2.0 * PI * 200e3;
        let closed = (2.0 * 8.9875517923e9 * 1.602176634e-19f64.powi(2) / (ion.mass * w * w)).cbrt();
        assert!((d / closed - 1.0).abs() < 1e-3, "{d} {closed}");
        assert!((closed - 10.8e-6).abs() < 0.1e-6);
        assert!(c.positions.iter().all(|p| p.z.abs() < 1e-12));
    }

    #[test]
    fn overlapping_ions_rejected() {
        let ion = IonSpecies::barium_138();
        let p = vec![Vector3::new(1e-6, 0.0, 0.0); 2];
        assert_eq!(total_energy(&p, &trap(), &ion), Err(CrystalError::OverlappingIons(0, 1)));
    }

    #[test]
    fn mirrored_configuration_has_same_energy() {
        let ion = IonSpecies::barium_138();
        let p = vec![
            Vector3::new(3e-6, 1e-6, 0.5e-6),
            Vector3::new(-4e-6, 2e-6, -1e-6),
            Vector3::new(1e-6, -5e-6, 0.0),
        ];
        let m: Vec<_> = p.iter().map(|v| Vector3::new(-v.x, v.y, v.z)).collect();
        let a = total_energy(&p, &trap(), &ion).unwrap();
        let b = total_energy(&m, &trap(), &ion).unwrap();
        assert!((a - b).abs() <= 1e-15 * a.abs());
    }

    #[test]
    fn seven_ions_form_a_hexagon() {
        let ion = IonSpecies::barium_138();
        let c = relax(7, &trap(), &ion, &RelaxOptions::default()).unwrap();
        let k = classify(&c);
        assert_eq!(k.shells, vec![1, 6]);
        assert!(k.planarity < 0.05);
        assert!(c.restart_energies.iter().flatten().all(|e| c.energy <= *e));
        let outer = c
            .positions
            .iter()
            .max_by(|a, b| a.xy().norm().total_cmp(&b.xy().norm()))
            .unwrap();
        assert!(outer.y.abs() < 1e-15 && outer.x > 0.0);
    }

    #[test]
    fn gridded_harmonic_matches_analytic_trap() {
        use crate::geometry::{ElectrodeInfo, ElectrodeMask, GridSpec};
        let ion = IonSpecies::barium_138();
        let h = 1e-6;
        let grid = GridSpec {
            r_max: 40.0 * h,
            z_min: 0.0,
            z_max: 80.0 * h,
            spacing: h,
        };
        let mask = Arc::new(ElectrodeMask::from_fn(grid, Vec::<ElectrodeInfo>::new(), |_, _| None));
        let mut psi = ScalarField2D::zeros(mask);
        let nr = psi.nr();
        let (wr, wz) = (2.0 * PI * 200e3, 2.0 * PI * 420e3);
        let z0 = 40.3 * h;
        for k in 0..psi.values.len() {
            let (r, z) = (psi.grid.r(k % nr), psi.grid.z(k / nr));
            psi.values[k] = 0.5 * ion.mass * (wr * wr * r * r + wz * wz * (z - z0).powi(2)) / ELEMENTARY_CHARGE;
        }
        let gridded = TrapModel::Gridded(GriddedPotential::new(Arc::new(psi)));
        let a = relax(2, &gridded, &ion, &RelaxOptions::default()).unwrap();
        let b = relax(2, &trap(), &ion, &RelaxOptions::default()).unwrap();
        let da = (a.positions[0] - a.positions[1]).norm();
        let db = (b.positions[0] - b.positions[1]).norm();
        assert!((da / db - 1.0).abs() < 1e-3, "{da} {db}");
        assert!(a.positions.iter().all(|p| (p.z - z0).abs() < 0.01 * h));
    }
}
