//! Axisymmetric Laplace solver on the node grid.
//!
//! Discretizes `∂²Φ/∂r² + (1/r)∂Φ/∂r + ∂²Φ/∂z² = 0` with the standard
//! five-point cylindrical stencil; on the axis the radial part becomes
//! `4(Φ(h) − Φ(0))/h²`. Sweeps use red-black successive over-relaxation,
//! started from a coarse-to-fine cascade of the same problem.

use std::collections::BTreeMap;
use std::io::{self, Read, Write};
use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error;

use crate::geometry::{ElectrodeId, ElectrodeMask, ElectrodeRole, GridSpec};

#[derive(Debug, Error)]
pub enum FieldError {
    #[error("no boundary value for electrode {0}")]
    MissingBoundaryValue(String),
    #[error("solver did not converge: residual {residual:.3e} after {iterations} sweeps")]
    NotConverged {
        residual: f64,
        iterations: usize,
        best_effort: Box<Solution>,
    },
    #[error("invalid solver options: {0}")]
    Invalid(String),
    #[error("grid dump: {0}")]
    Dump(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SideCondition {
    Dirichlet(f64),
    /// Mirror symmetry across the side (zero normal derivative).
    Neumann,
}

/// Conditions on the three outer sides of the box; the axis is always symmetric.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxBoundary {
    pub outer_r: SideCondition,
    pub lower_z: SideCondition,
    pub upper_z: SideCondition,
}

impl Default for BoxBoundary {
    /// Grounded chamber folded onto the box.
    fn default() -> Self {
        Self {
            outer_r: SideCondition::Dirichlet(0.0),
            lower_z: SideCondition::Dirichlet(0.0),
            upper_z: SideCondition::Dirichlet(0.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions {
    /// Stop when the largest update in a sweep, relative to the largest
    /// imposed potential, falls to this value.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Over-relaxation factor; `None` uses the uniform-grid Jacobi estimate.
    pub omega: Option<f64>,
    pub boundary: BoxBoundary,
    /// Start from the solution on successively coarser grids.
    pub nested: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-9,
            max_iterations: 200_000,
            omega: None,
            boundary: BoxBoundary::default(),
            nested: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveReport {
    pub iterations: usize,
    pub final_residual: f64,
    pub converged: bool,
}

/// Values sampled on the node grid of `mask`.
#[derive(Debug, Clone)]
pub struct ScalarField2D {
    pub grid: GridSpec,
    pub values: Vec<f64>,
    pub mask: Arc<ElectrodeMask>,
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub field: ScalarField2D,
    pub report: SolveReport,
}

impl ScalarField2D {
    pub fn zeros(mask: Arc<ElectrodeMask>) -> Self {
        let n = mask.nr() * mask.nz();
        Self {
            grid: mask.grid,
            values: vec![0.0; n],
            mask,
        }
    }

    pub fn nr(&self) -> usize {
        self.grid.nr()
    }

    pub fn nz(&self) -> usize {
        self.grid.nz()
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.nr() + i]
    }

    /// Bilinear interpolation; `r` is reflected through the axis and both
    /// coordinates are clamped to the box.
    pub fn sample(&self, r: f64, z: f64) -> f64 {
        let h = self.grid.spacing;
        let (nr, nz) = (self.nr(), self.nz());
        let x = (r.abs() / h).clamp(0.0, (nr - 1) as f64);
        let y = ((z - self.grid.z_min) / h).clamp(0.0, (nz - 1) as f64);
        let i = (x.floor() as usize).min(nr - 2);
        let j = (y.floor() as usize).min(nz - 2);
        let (fx, fy) = (x - i as f64, y - j as f64);
        let v00 = self.at(i, j);
        let v10 = self.at(i + 1, j);
        let v01 = self.at(i, j + 1);
        let v11 = self.at(i + 1, j + 1);
        (1.0 - fy) * ((1.0 - fx) * v00 + fx * v10) + fy * ((1.0 - fx) * v01 + fx * v11)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64 + Sync) -> ScalarField2D {
        ScalarField2D {
            grid: self.grid,
            values: self.values.par_iter().map(|&v| f(v)).collect(),
            mask: self.mask.clone(),
        }
    }

    /// `self + scale · other` on the same grid.
    pub fn add_scaled(&self, other: &ScalarField2D, scale: f64) -> ScalarField2D {
        assert_eq!(self.values.len(), other.values.len());
        ScalarField2D {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + scale * b)
                .collect(),
            mask: self.mask.clone(),
        }
    }

    /// Axis line cut `(z, value)` on vacuum nodes.
    pub fn axis_cut(&self) -> Vec<(f64, f64)> {
        (0..self.nz())
            .filter(|&j| self.mask.is_vacuum(0, j))
            .map(|j| (self.grid.z(j), self.at(0, j)))
            .collect()
    }

    /// Radial line cut `(r, value)` through the node row nearest `z`.
    pub fn radial_cut(&self, z: f64) -> Vec<(f64, f64)> {
        let j = (((z - self.grid.z_min) / self.grid.spacing).round() as usize).min(self.nz() - 1);
        (0..self.nr())
            .filter(|&i| self.mask.is_vacuum(i, j))
            .map(|i| (self.grid.r(i), self.at(i, j)))
            .collect()
    }

    /// CSV with columns `r,z,value`, lengths in metres.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "r,z,value")?;
        for j in 0..self.nz() {
            for i in 0..self.nr() {
                writeln!(out, "{:e},{:e},{:e}", self.grid.r(i), self.grid.z(j), self.at(i, j))?;
            }
        }
        Ok(())
    }

    /// Binary grid dump.
    ///
    /// Layout, all little-endian:
    /// `b"TACKGRID"`, `u32` version (1), `u64` nr, `u64` nz, `f64` spacing,
    /// `f64` r origin, `f64` z origin, then `nr * nz` `f64` values with `r`
    /// varying fastest.
    pub fn write_dump<W: Write>(&self, mut out: W) -> io::Result<()> {
        out.write_all(DUMP_MAGIC)?;
        out.write_all(&1u32.to_le_bytes())?;
        out.write_all(&(self.nr() as u64).to_le_bytes())?;
        out.write_all(&(self.nz() as u64).to_le_bytes())?;
        out.write_all(&self.grid.spacing.to_le_bytes())?;
        out.write_all(&0f64.to_le_bytes())?;
        out.write_all(&self.grid.z_min.to_le_bytes())?;
        for v in &self.values {
            out.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }
}

const DUMP_MAGIC: &[u8; 8] = b"TACKGRID";

/// Contents of a binary grid dump.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDump {
    pub nr: usize,
    pub nz: usize,
    pub spacing: f64,
    pub r_origin: f64,
    pub z_origin: f64,
    pub values: Vec<f64>,
}

pub fn read_dump<R: Read>(mut input: R) -> Result<GridDump, FieldError> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    if &magic != DUMP_MAGIC {
        return Err(FieldError::Dump("bad magic".into()));
    }
    let mut b4 = [0u8; 4];
    input.read_exact(&mut b4)?;
    if u32::from_le_bytes(b4) != 1 {
        return Err(FieldError::Dump("unsupported version".into()));
    }
    let mut b8 = [0u8; 8];
    let mut next = |input: &mut R| -> io::Result<[u8; 8]> {
        input.read_exact(&mut b8)?;
        Ok(b8)
    };
    let nr = u64::from_le_bytes(next(&mut input)?) as usize;
    let nz = u64::from_le_bytes(next(&mut input)?) as usize;
    let spacing = f64::from_le_bytes(next(&mut input)?);
    let r_origin = f64::from_le_bytes(next(&mut input)?);
    let z_origin = f64::from_le_bytes(next(&mut input)?);
    let mut values = Vec::with_capacity(nr * nz);
    for _ in 0..nr * nz {
        values.push(f64::from_le_bytes(next(&mut input)?));
    }
    Ok(GridDump {
        nr,
        nz,
        spacing,
        r_origin,
        z_origin,
        values,
    })
}

/// Boundary values built from electrode roles.
pub fn values_for_roles(
    mask: &ElectrodeMask,
    value: impl Fn(ElectrodeRole) -> f64,
) -> BTreeMap<ElectrodeId, f64> {
    mask.electrodes
        .iter()
        .enumerate()
        .map(|(k, e)| (ElectrodeId(k), value(e.role)))
        .collect()
}

/// Unit RF drive: RF electrodes at 1 V, everything else at 0 V.
pub fn rf_unit_values(mask: &ElectrodeMask) -> BTreeMap<ElectrodeId, f64> {
    values_for_roles(mask, |r| if r == ElectrodeRole::Rf { 1.0 } else { 0.0 })
}

/// Static potentials: DC electrodes at their bias, everything else at 0 V.
pub fn dc_values(mask: &ElectrodeMask) -> BTreeMap<ElectrodeId, f64> {
    values_for_roles(mask, |r| match r {
        ElectrodeRole::Dc(v) => v,
        _ => 0.0,
    })
}

struct Problem<'a> {
    mask: &'a ElectrodeMask,
    fixed: Vec<bool>,
    init: Vec<f64>,
    scale: f64,
}

fn side_value(c: SideCondition) -> Option<f64> {
    match c {
        SideCondition::Dirichlet(v) => Some(v),
        SideCondition::Neumann => None,
    }
}

impl<'a> Problem<'a> {
    fn new(mask: &'a ElectrodeMask, volts: &[f64], boundary: &BoxBoundary) -> Self {
        let (nr, nz) = (mask.nr(), mask.nz());
        let mut fixed = vec![false; nr * nz];
        let mut init = vec![0.0; nr * nz];
        let mut scale: f64 = 0.0;
        for j in 0..nz {
            for i in 0..nr {
                let k = j * nr + i;
                let imposed = if let Some(id) = mask.owner(i, j) {
                    Some(volts[id.0])
                } else {
                    let lower = if j == 0 { side_value(boundary.lower_z) } else { None };
                    let upper = if j == nz - 1 { side_value(boundary.upper_z) } else { None };
                    let outer = if i == nr - 1 { side_value(boundary.outer_r) } else { None };
                    lower.or(upper).or(outer)
                };
                if let Some(v) = imposed {
                    fixed[k] = true;
                    init[k] = v;
                    scale = scale.max(v.abs());
                }
            }
        }
        if scale == 0.0 {
            scale = 1.0;
        }
        Self {
            mask,
            fixed,
            init,
            scale,
        }
    }
}

#[derive(Clone, Copy)]
struct SharedMut(*mut f64);
// SAFETY: within one colour of a red-black sweep each row task writes only
// nodes of that colour in its own row and reads only nodes of the other
// colour, so no location is written by one task while touched by another.
unsafe impl Send for SharedMut {}
unsafe impl Sync for SharedMut {}

/// One red-black SOR sweep, returning the largest absolute update.
fn sweep(values: &mut [f64], fixed: &[bool], nr: usize, nz: usize, omega: f64, coef: &[(f64, f64)]) -> f64 {
    let ptr = SharedMut(values.as_mut_ptr());
    let mut worst: f64 = 0.0;
    for colour in 0..2 {
        let m = (0..nz)
            .into_par_iter()
            .with_min_len(32)
            .map(|j| {
                let p = ptr;
                let base = j * nr;
                let jm = if j > 0 { j - 1 } else { 1 };
                let jp = if j + 1 < nz { j + 1 } else { nz - 2 };
                let (bm, bp) = (jm * nr, jp * nr);
                let mut local: f64 = 0.0;
                let mut i = (colour + j) % 2;
                while i < nr {
                    let k = base + i;
                    if !fixed[k] {
                        // SAFETY: see `SharedMut`.
                        unsafe {
                            let v = p.0;
                            let vert = *v.add(bm + i) + *v.add(bp + i);
                            let gs = if i == 0 {
                                (4.0 * *v.add(base + 1) + vert) / 6.0
                            } else {
                                let ip = if i + 1 < nr { i + 1 } else { nr - 2 };
                                let (cp, cm) = coef[i];
                                cp * *v.add(base + ip) + cm * *v.add(base + i - 1) + 0.25 * vert
                            };
                            let old = *v.add(k);
                            let delta = omega * (gs - old);
                            *v.add(k) = old + delta;
                            local = local.max(delta.abs());
                        }
                    }
                    i += 2;
                }
                local
            })
            .reduce(|| 0.0, f64::max);
        worst = worst.max(m);
    }
    worst
}

fn default_omega(nr: usize, nz: usize) -> f64 {
    // axis and Neumann sides double the effective radial extent
    let n_r = 2 * nr;
    let rho = 0.5 * ((std::f64::consts::PI / n_r as f64).cos() + (std::f64::consts::PI / nz as f64).cos());
    2.0 / (1.0 + (1.0 - rho * rho).sqrt())
}

fn relax(
    problem: &Problem,
    mut values: Vec<f64>,
    options: &SolveOptions,
) -> (Vec<f64>, SolveReport) {
    let (nr, nz) = (problem.mask.nr(), problem.mask.nz());
    let coef: Vec<(f64, f64)> = (0..nr)
        .map(|i| {
            if i == 0 {
                (0.0, 0.0)
            } else {
                let a = 1.0 / (2.0 * i as f64);
                (0.25 * (1.0 + a), 0.25 * (1.0 - a))
            }
        })
        .collect();
    let omega = options.omega.unwrap_or_else(|| default_omega(nr, nz));
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    while iterations < options.max_iterations {
        let upd = sweep(&mut values, &problem.fixed, nr, nz, omega, &coef);
        iterations += 1;
        residual = upd / problem.scale;
        if residual <= options.tolerance {
            break;
        }
    }
    let converged = residual <= options.tolerance;
    (
        values,
        SolveReport {
            iterations,
            final_residual: residual,
            converged,
        },
    )
}

/// Bilinear prolongation from a grid with twice the spacing.
fn prolong(coarse: &[f64], cg: &GridSpec, fine: &GridSpec) -> Vec<f64> {
    let (cr, cz) = (cg.nr(), cg.nz());
    let (fr, fz) = (fine.nr(), fine.nz());
    let mut out = vec![0.0; fr * fz];
    for j in 0..fz {
        let y = (j as f64 * 0.5).min((cz - 1) as f64);
        let j0 = (y.floor() as usize).min(cz - 1);
        let j1 = (j0 + 1).min(cz - 1);
        let fy = y - j0 as f64;
        for i in 0..fr {
            let x = (i as f64 * 0.5).min((cr - 1) as f64);
            let i0 = (x.floor() as usize).min(cr - 1);
            let i1 = (i0 + 1).min(cr - 1);
            let fx = x - i0 as f64;
            let c = |a: usize, b: usize| coarse[b * cr + a];
            out[j * fr + i] = (1.0 - fy) * ((1.0 - fx) * c(i0, j0) + fx * c(i1, j0))
                + fy * ((1.0 - fx) * c(i0, j1) + fx * c(i1, j1));
        }
    }
    out
}

fn solve_level(
    mask: &ElectrodeMask,
    volts: &[f64],
    options: &SolveOptions,
    depth: usize,
) -> (Vec<f64>, SolveReport) {
    let problem = Problem::new(mask, volts, &options.boundary);
    let coarse_grid = mask.grid.coarsened();
    let start = if options.nested && depth < 6 && coarse_grid.nr() >= 17 && coarse_grid.nz() >= 17 {
        let coarse_mask = mask.restrict_to(&coarse_grid);
        let (coarse, _) = solve_level(&coarse_mask, volts, options, depth + 1);
        let mut v = prolong(&coarse, &coarse_grid, &mask.grid);
        for (k, f) in problem.fixed.iter().enumerate() {
            if *f {
                v[k] = problem.init[k];
            }
        }
        v
    } else {
        problem.init.clone()
    };
    relax(&problem, start, options)
}

/// Solves for the potential with each electrode held at its boundary value.
pub fn solve_laplace(
    mask: &Arc<ElectrodeMask>,
    boundary_values: &BTreeMap<ElectrodeId, f64>,
    options: &SolveOptions,
) -> Result<Solution, FieldError> {
    if !(options.tolerance > 0.0) {
        return Err(FieldError::Invalid("tolerance must be positive".into()));
    }
    let mut volts = Vec::with_capacity(mask.electrodes.len());
    for (k, e) in mask.electrodes.iter().enumerate() {
        match boundary_values.get(&ElectrodeId(k)) {
            Some(v) => volts.push(*v),
            None => return Err(FieldError::MissingBoundaryValue(e.name.clone())),
        }
    }
    let (values, report) = solve_level(mask, &volts, options, 0);
    let solution = Solution {
        field: ScalarField2D {
            grid: mask.grid,
            values,
            mask: mask.clone(),
        },
        report,
    };
    if report.converged {
        Ok(solution)
    } else {
        Err(FieldError::NotConverged {
            residual: report.final_residual,
            iterations: report.iterations,
            best_effort: Box::new(solution),
        })
    }
}

/// One solve per electrode at 1 V with all others grounded.
pub fn solve_unit_fields(
    mask: &Arc<ElectrodeMask>,
    options: &SolveOptions,
) -> Result<Vec<ScalarField2D>, FieldError> {
    (0..mask.electrodes.len())
        .map(|k| {
            let values = (0..mask.electrodes.len())
                .map(|m| (ElectrodeId(m), if m == k { 1.0 } else { 0.0 }))
                .collect();
            solve_laplace(mask, &values, options).map(|s| s.field)
        })
        .collect()
}

/// Superposes unit fields with per-electrode weights.
pub fn superpose(units: &[ScalarField2D], weights: &[f64]) -> ScalarField2D {
    assert_eq!(units.len(), weights.len());
    let mut out = ScalarField2D::zeros(units[0].mask.clone());
    for (u, w) in units.iter().zip(weights) {
        for (o, v) in out.values.iter_mut().zip(&u.values) {
            *o += w * v;
        }
    }
    out
}

/// Electric field components `E = −∇Φ` in V/m.
#[derive(Debug, Clone)]
pub struct VectorField2D {
    pub grid: GridSpec,
    pub e_r: Vec<f64>,
    pub e_z: Vec<f64>,
}

impl VectorField2D {
    #[inline]
    pub fn at(&self, i: usize, j: usize) -> (f64, f64) {
        let k = j * self.grid.nr() + i;
        (self.e_r[k], self.e_z[k])
    }

    pub fn magnitude_squared(&self) -> Vec<f64> {
        self.e_r
            .iter()
            .zip(&self.e_z)
            .map(|(a, b)| a * a + b * b)
            .collect()
    }
}

/// Central differences inside, one-sided on the box edges, `E_r = 0` on the axis.
pub fn gradient(field: &ScalarField2D) -> VectorField2D {
    let (nr, nz) = (field.nr(), field.nz());
    let h = field.grid.spacing;
    let mut e_r = vec![0.0; nr * nz];
    let mut e_z = vec![0.0; nr * nz];
    let v = &field.values;
    for j in 0..nz {
        for i in 0..nr {
            let k = j * nr + i;
            let dr = if i == 0 {
                0.0
            } else if i == nr - 1 {
                (v[k] - v[k - 1]) / h
            } else {
                (v[k + 1] - v[k - 1]) / (2.0 * h)
            };
            let dz = if j == 0 {
                (v[k + nr] - v[k]) / h
            } else if j == nz - 1 {
                (v[k] - v[k - nr]) / h
            } else {
                (v[k + nr] - v[k - nr]) / (2.0 * h)
            };
            e_r[k] = -dr;
            e_z[k] = -dz;
        }
    }
    VectorField2D {
        grid: field.grid,
        e_r,
        e_z,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ElectrodeInfo;

    fn info(names: &[&str]) -> Vec<ElectrodeInfo> {
        names
            .iter()
            .map(|n| ElectrodeInfo {
                name: n.to_string(),
                role: ElectrodeRole::Ground,
            })
            .collect()
    }

    fn plates() -> Arc<ElectrodeMask> {
        let grid = GridSpec {
            r_max: 0.5e-3,
            z_min: 0.0,
            z_max: 1.0e-3,
            spacing: 20e-6,
        };
        Arc::new(ElectrodeMask::from_fn(grid, info(&["low", "high"]), |_, z| {
            if z <= 1e-12 {
                Some(ElectrodeId(0))
            } else if z >= 1.0e-3 - 1e-12 {
                Some(ElectrodeId(1))
            } else {
                None
            }
        }))
    }

    fn neumann_r() -> SolveOptions {
        SolveOptions {
            tolerance: 1e-12,
            boundary: BoxBoundary {
                outer_r: SideCondition::Neumann,
                lower_z: SideCondition::Neumann,
                upper_z: SideCondition::Neumann,
            },
            ..SolveOptions::default()
        }
    }

    #[test]
    fn parallel_plates_linear() {
        let mask = plates();
        let bv = BTreeMap::from([(ElectrodeId(0), 0.0), (ElectrodeId(1), 1.0)]);
        let sol = solve_laplace(&mask, &bv, &neumann_r()).unwrap();
        let f = &sol.field;
        let mut worst: f64 = 0.0;
        for j in 0..f.nz() {
            for i in 0..f.nr() {
                worst = worst.max((f.at(i, j) - f.grid.z(j) / 1.0e-3).abs());
            }
        }
        assert!(worst < 1e-6, "{worst}");
        let g = gradient(f);
        for j in 1..f.nz() - 1 {
            for i in 0..f.nr() {
                let (er, ez) = g.at(i, j);
                assert!((ez + 1000.0).abs() < 1e-2, "{ez}");
                assert!(er.abs() < 1e-2);
            }
        }
    }

    #[test]
    fn missing_value_rejected() {
        let mask = plates();
        let bv = BTreeMap::from([(ElectrodeId(0), 0.0)]);
        assert!(matches!(
            solve_laplace(&mask, &bv, &neumann_r()),
            Err(FieldError::MissingBoundaryValue(_))
        ));
    }

    #[test]
    fn not_converged_returns_best_effort() {
        let mask = plates();
        let bv = BTreeMap::from([(ElectrodeId(0), 0.0), (ElectrodeId(1), 1.0)]);
        let opts = SolveOptions {
            max_iterations: 2,
            nested: false,
            ..neumann_r()
        };
        match solve_laplace(&mask, &bv, &opts) {
            Err(FieldError::NotConverged { best_effort, .. }) => {
                assert_eq!(best_effort.report.iterations, 2);
                assert!(!best_effort.report.converged);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn axis_column_has_zero_radial_field() {
        let mask = plates();
        let bv = BTreeMap::from([(ElectrodeId(0), 0.3), (ElectrodeId(1), -1.0)]);
        let sol = solve_laplace(&mask, &bv, &neumann_r()).unwrap();
        let g = gradient(&sol.field);
        for j in 0..sol.field.nz() {
            assert_eq!(g.at(0, j).0, 0.0);
        }
    }

    #[test]
    fn dump_round_trip() {
        let mask = plates();
        let mut f = ScalarField2D::zeros(mask);
        for (k, v) in f.values.iter_mut().enumerate() {
            *v = k as f64 * 0.5 - 3.0;
        }
        let mut buf = Vec::new();
        f.write_dump(&mut buf).unwrap();
        let d = read_dump(&buf[..]).unwrap();
        assert_eq!(d.nr, f.nr());
        assert_eq!(d.nz, f.nz());
        assert_eq!(d.values, f.values);
        assert_eq!(d.spacing, f.grid.spacing);
        assert!(read_dump(&b"NOTAGRID"[..]).is_err());
    }

    #[test]
    fn sample_is_exact_on_nodes() {
        let mask = plates();
        let mut f = ScalarField2D::zeros(mask);
        let nr = f.nr();
        for (k, v) in f.values.iter_mut().enumerate() {
            *v = (k % nr) as f64 + 100.0 * (k / nr) as f64;
        }
        let r = f.grid.r(3);
        let z = f.grid.z(7);
        assert!((f.sample(r, z) - 703.0).abs() < 1e-9);
        assert!((f.sample(r + 0.5 * f.grid.spacing, z) - 703.5).abs() < 1e-9);
    }
}
