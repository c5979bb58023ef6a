//! Ponderomotive pseudopotential and the trap observables read off it.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error;

use crate::consts::{ATOMIC_MASS_UNIT, ELEMENTARY_CHARGE};
use crate::field::{self, FieldError, ScalarField2D, SolveOptions, SolveReport};
use crate::geometry::{self, ElectrodeRole, GeometryError, GridSpec, TrapGeometry};

#[derive(Debug, Error)]
pub enum PseudoError {
    #[error("no interior minimum of the pseudopotential on the axis")]
    NoInteriorMinimum,
    #[error("stationary point is not a minimum (axial curvature {axial:.3e}, radial {radial:.3e} J/m²)")]
    SaddleNotMinimum { axial: f64, radial: f64 },
    #[error("minimum too close to an electrode or the box edge to evaluate curvature")]
    Unresolved,
    #[error("invalid drive or species: {0}")]
    Invalid(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Field(#[from] FieldError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RfDrive {
    /// Zero-to-peak amplitude in volts.
    pub amplitude: f64,
    /// Drive frequency in Hz.
    pub frequency: f64,
}

impl RfDrive {
    pub fn tack_default() -> Self {
        Self {
            amplitude: 270.0,
            frequency: 23.0e6,
        }
    }

    pub fn angular(&self) -> f64 {
        2.0 * std::f64::consts::PI * self.frequency
    }

    pub fn validate(&self) -> Result<(), PseudoError> {
        if !(self.amplitude > 0.0 && self.frequency > 0.0) {
            return Err(PseudoError::Invalid(
                "RF amplitude and frequency must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IonSpecies {
    pub mass: f64,
    pub charge: f64,
}

impl IonSpecies {
    pub fn new(mass_u: f64, charge_e: f64) -> Self {
        Self {
            mass: mass_u * ATOMIC_MASS_UNIT,
            charge: charge_e * ELEMENTARY_CHARGE,
        }
    }

    /// ¹³⁸Ba⁺.
    pub fn barium_138() -> Self {
        Self::new(137.905_247, 1.0)
    }

    pub fn validate(&self) -> Result<(), PseudoError> {
        if !(self.mass > 0.0) || self.charge == 0.0 || !self.charge.is_finite() {
            return Err(PseudoError::Invalid(
                "ion mass must be positive and charge non-zero".into(),
            ));
        }
        Ok(())
    }
}

/// `q² |∇Φ|² / (4 m Ω²)` per unit drive, in eV per (V/m)².
fn ponderomotive_coefficient(drive: &RfDrive, ion: &IonSpecies) -> f64 {
    let omega = drive.angular();
    ion.charge * ion.charge * drive.amplitude * drive.amplitude
        / (4.0 * ion.mass * omega * omega)
        / ELEMENTARY_CHARGE
}

/// Pseudopotential in eV from the unit-drive RF potential. Electrode nodes are 0.
pub fn pseudopotential(rf_field: &ScalarField2D, drive: &RfDrive, ion: &IonSpecies) -> ScalarField2D {
    let coef = ponderomotive_coefficient(drive, ion);
    let grad = field::gradient(rf_field);
    let mask = &rf_field.mask;
    let nr = rf_field.nr();
    let values = grad
        .magnitude_squared()
        .into_iter()
        .enumerate()
        .map(|(k, e2)| if mask.is_vacuum(k % nr, k / nr) { coef * e2 } else { 0.0 })
        .collect();
    ScalarField2D {
        grid: rf_field.grid,
        values,
        mask: rf_field.mask.clone(),
    }
}

/// Adds the static energy `q Φ_dc` (in eV) to a pseudopotential.
pub fn add_static(psi: &ScalarField2D, dc_field: &ScalarField2D, ion: &IonSpecies) -> ScalarField2D {
    let mut out = psi.add_scaled(dc_field, ion.charge / ELEMENTARY_CHARGE);
    let nr = out.nr();
    let mask = out.mask.clone();
    for (k, v) in out.values.iter_mut().enumerate() {
        if !mask.is_vacuum(k % nr, k / nr) {
            *v = 0.0;
        }
    }
    out
}

/// Axis minimum with sub-cell position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Minimum {
    pub z: f64,
    /// Interpolated value, eV.
    pub value: f64,
    /// Nearest axis node.
    pub node: usize,
}

impl Minimum {
    pub fn r(&self) -> f64 {
        0.0
    }
}

fn interior_axis_node(psi: &ScalarField2D, j: usize) -> bool {
    let m = &psi.mask;
    j >= 2
        && j + 2 < psi.nz()
        && psi.nr() > 3
        && (j - 2..=j + 2).all(|jj| m.is_vacuum(0, jj))
        && m.is_vacuum(1, j)
        && m.is_vacuum(2, j)
}

/// Lowest interior local minimum on the axis within `[z_lo, z_hi]`.
pub fn find_minimum_within(psi: &ScalarField2D, z_lo: f64, z_hi: f64) -> Result<Minimum, PseudoError> {
    let mut best: Option<usize> = None;
    for j in 0..psi.nz() {
        let z = psi.grid.z(j);
        if z < z_lo || z > z_hi || !interior_axis_node(psi, j) {
            continue;
        }
        let v = psi.at(0, j);
        let (below, above) = (psi.at(0, j - 1), psi.at(0, j + 1));
        let local = v <= below && v <= above && (v < below || v < above) && psi.at(1, j) >= v;
        if local && best.is_none_or(|b| v < psi.at(0, b)) {
            best = Some(j);
        }
    }
    let j = best.ok_or(PseudoError::NoInteriorMinimum)?;
    let (lo, mid, hi) = (psi.at(0, j - 1), psi.at(0, j), psi.at(0, j + 1));
    let curv = hi - 2.0 * mid + lo;
    let h = psi.grid.spacing;
    let (shift, value) = if curv > 0.0 {
        let s = -0.5 * (hi - lo) / curv;
        (s, mid - (hi - lo) * (hi - lo) / (8.0 * curv))
    } else {
        (0.0, mid)
    };
    Ok(Minimum {
        z: psi.grid.z(j) + shift * h,
        value,
        node: j,
    })
}

/// Lowest interior local minimum anywhere on the axis.
pub fn find_minimum(psi: &ScalarField2D) -> Result<Minimum, PseudoError> {
    find_minimum_within(psi, f64::NEG_INFINITY, f64::INFINITY)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Depth {
    /// eV
    pub depth: f64,
    /// Node `(r, z)` where the flood level last rose before escaping.
    pub escape_saddle: (f64, f64),
}

#[derive(PartialEq)]
struct Item(f64, usize);
impl Eq for Item {}
impl PartialOrd for Item {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Item {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on value, ties by index
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

/// Depth from a priority flood of the sublevel set containing the minimum.
///
/// Nodes are visited in increasing order of `Ψ`; the running maximum is the
/// lowest level at which the flooded region reaches the box edge or a node
/// adjacent to an electrode.
pub fn trap_depth(psi: &ScalarField2D, minimum: &Minimum) -> Depth {
    let (nr, nz) = (psi.nr(), psi.nz());
    let mask = &psi.mask;
    let start = minimum.node * nr;
    let mut seen = vec![false; nr * nz];
    let mut heap = BinaryHeap::new();
    heap.push(Item(psi.values[start], start));
    seen[start] = true;
    let mut level = f64::NEG_INFINITY;
    let mut saddle = start;
    while let Some(Item(v, k)) = heap.pop() {
        if v > level {
            level = v;
            saddle = k;
        }
        let (i, j) = (k % nr, k / nr);
        let mut neighbours = [usize::MAX; 4];
        if i > 0 {
            neighbours[0] = k - 1;
        }
        if i + 1 < nr {
            neighbours[1] = k + 1;
        }
        if j > 0 {
            neighbours[2] = k - nr;
        }
        if j + 1 < nz {
            neighbours[3] = k + nr;
        }
        let on_edge = i == nr - 1 || j == 0 || j == nz - 1;
        let touches_electrode = neighbours
            .iter()
            .any(|&n| n != usize::MAX && !mask.is_vacuum(n % nr, n / nr));
        if on_edge || touches_electrode {
            break;
        }
        for n in neighbours {
            if n != usize::MAX && !seen[n] {
                seen[n] = true;
                heap.push(Item(psi.values[n], n));
            }
        }
    }
    let depth = (level - minimum.value).max(0.0);
    Depth {
        depth,
        escape_saddle: (psi.grid.r(saddle % nr), psi.grid.z(saddle / nr)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SecularFrequencies {
    /// Hz
    pub axial: f64,
    /// Hz
    pub radial: f64,
}

impl SecularFrequencies {
    pub fn ratio(&self) -> f64 {
        self.axial / self.radial
    }
}

fn frequencies_from_curvature(k_axial: f64, k_radial: f64, ion: &IonSpecies) -> Result<SecularFrequencies, PseudoError> {
    if !(k_axial > 0.0 && k_radial > 0.0) {
        return Err(PseudoError::SaddleNotMinimum {
            axial: k_axial,
            radial: k_radial,
        });
    }
    let two_pi = 2.0 * std::f64::consts::PI;
    Ok(SecularFrequencies {
        axial: (k_axial / ion.mass).sqrt() / two_pi,
        radial: (k_radial / ion.mass).sqrt() / two_pi,
    })
}

/// Secular frequencies from fourth-order finite-difference curvatures at the minimum.
pub fn secular_frequencies(
    psi: &ScalarField2D,
    minimum: &Minimum,
    ion: &IonSpecies,
) -> Result<SecularFrequencies, PseudoError> {
    let j = minimum.node;
    if !interior_axis_node(psi, j) {
        return Err(PseudoError::Unresolved);
    }
    let h = psi.grid.spacing;
    let u = |i: usize, jj: usize| psi.at(i, jj) * ELEMENTARY_CHARGE;
    let five = |m2: f64, m1: f64, c: f64, p1: f64, p2: f64| {
        (-m2 + 16.0 * m1 - 30.0 * c + 16.0 * p1 - p2) / (12.0 * h * h)
    };
    let k_axial = five(u(0, j - 2), u(0, j - 1), u(0, j), u(0, j + 1), u(0, j + 2));
    // Ψ is even in r
    let k_radial = five(u(2, j), u(1, j), u(0, j), u(1, j), u(2, j));
    frequencies_from_curvature(k_axial, k_radial, ion)
}

/// Cross-check: least-squares parabolas over `half_width` nodes on each side.
pub fn parabolic_fit_frequencies(
    psi: &ScalarField2D,
    minimum: &Minimum,
    ion: &IonSpecies,
    half_width: usize,
) -> Result<SecularFrequencies, PseudoError> {
    let j = minimum.node;
    let w = half_width as isize;
    if j < half_width || j + half_width >= psi.nz() || half_width >= psi.nr() {
        return Err(PseudoError::Unresolved);
    }
    let h = psi.grid.spacing;
    // axial: fit a + b x + c x² with x = k h
    let (mut s, mut sx, mut sx2, mut sx3, mut sx4) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let (mut sy, mut sxy, mut sx2y) = (0.0, 0.0, 0.0);
    for k in -w..=w {
        let jj = (j as isize + k) as usize;
        if !psi.mask.is_vacuum(0, jj) {
            return Err(PseudoError::Unresolved);
        }
        let x = k as f64 * h;
        let y = psi.at(0, jj) * ELEMENTARY_CHARGE;
        s += 1.0;
        sx += x;
        sx2 += x * x;
        sx3 += x * x * x;
        sx4 += x * x * x * x;
        sy += y;
        sxy += x * y;
        sx2y += x * x * y;
    }
    let m = nalgebra::Matrix3::new(s, sx, sx2, sx, sx2, sx3, sx2, sx3, sx4);
    let rhs = nalgebra::Vector3::new(sy, sxy, sx2y);
    let coef = m.lu().solve(&rhs).ok_or(PseudoError::Unresolved)?;
    let k_axial = 2.0 * coef[2];
    // radial: fit a + c r² over r = 0..half_width, even by symmetry
    let (mut t, mut tr2, mut tr4, mut ty, mut tr2y) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for i in 0..=half_width {
        if !psi.mask.is_vacuum(i, j) {
            return Err(PseudoError::Unresolved);
        }
        let r2 = (i as f64 * h).powi(2);
        let y = psi.at(i, j) * ELEMENTARY_CHARGE;
        // weight interior points twice (mirror images at −r)
        let wgt = if i == 0 { 1.0 } else { 2.0 };
        t += wgt;
        tr2 += wgt * r2;
        tr4 += wgt * r2 * r2;
        ty += wgt * y;
        tr2y += wgt * r2 * y;
    }
    let det = t * tr4 - tr2 * tr2;
    let c = (t * tr2y - tr2 * ty) / det;
    let k_radial = 2.0 * c;
    frequencies_from_curvature(k_axial, k_radial, ion)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrapAnalysis {
    /// `(r, z)`, metres.
    pub minimum_position: (f64, f64),
    pub minimum_value: f64,
    /// Height of the minimum above the needle tip, when a needle is present.
    pub distance_from_tip: Option<f64>,
    /// eV
    pub depth: f64,
    pub secular_frequencies: SecularFrequencies,
    pub escape_saddle: (f64, f64),
}

/// Runs the axis search, depth flood and curvature analysis on `psi`.
pub fn analyze_field(
    psi: &ScalarField2D,
    geometry: &TrapGeometry,
    ion: &IonSpecies,
) -> Result<TrapAnalysis, PseudoError> {
    let z_lo = geometry.needle.as_ref().map_or(0.0, |n| n.tip_z);
    let z_hi = geometry
        .top_plate
        .as_ref()
        .map_or(psi.grid.z_max, |p| p.height_z);
    let minimum = find_minimum_within(psi, z_lo, z_hi)?;
    let depth = trap_depth(psi, &minimum);
    let secular = secular_frequencies(psi, &minimum, ion)?;
    Ok(TrapAnalysis {
        minimum_position: (0.0, minimum.z),
        minimum_value: minimum.value,
        distance_from_tip: geometry.needle.as_ref().map(|n| minimum.z - n.tip_z),
        depth: depth.depth,
        secular_frequencies: secular,
        escape_saddle: depth.escape_saddle,
    })
}

/// Fields and analysis for one geometry and drive.
#[derive(Debug, Clone)]
pub struct TrapSolution {
    pub rf_unit: ScalarField2D,
    pub dc: Option<ScalarField2D>,
    pub psi: ScalarField2D,
    pub report: SolveReport,
    pub analysis: Result<TrapAnalysis, String>,
}

/// Rasterizes, solves the unit RF (and any DC) problem, and analyzes the result.
pub fn solve_trap(
    geometry: &TrapGeometry,
    grid: &GridSpec,
    drive: &RfDrive,
    ion: &IonSpecies,
    options: &SolveOptions,
) -> Result<TrapSolution, PseudoError> {
    drive.validate()?;
    ion.validate()?;
    let mask = Arc::new(geometry::rasterize(geometry, grid)?);
    let rf = field::solve_laplace(&mask, &field::rf_unit_values(&mask), options)?;
    let has_dc = mask
        .electrodes
        .iter()
        .any(|e| matches!(e.role, ElectrodeRole::Dc(v) if v != 0.0));
    let dc = if has_dc {
        Some(field::solve_laplace(&mask, &field::dc_values(&mask), options)?.field)
    } else {
        None
    };
    let mut psi = pseudopotential(&rf.field, drive, ion);
    if let Some(dc) = &dc {
        psi = add_static(&psi, dc, ion);
    }
    let analysis = analyze_field(&psi, geometry, ion).map_err(|e| e.to_string());
    Ok(TrapSolution {
        rf_unit: rf.field,
        dc,
        psi,
        report: rf.report,
        analysis,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanRow {
    pub tip_z: f64,
    /// `(minimum_z, depth)` or the per-point failure.
    pub outcome: Result<(f64, f64), String>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points: usize,
}

pub fn linear_fit(points: &[(f64, f64)]) -> Option<LinearFit> {
    let n = points.len();
    if n < 2 {
        return None;
    }
    let nf = n as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = points.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Some(LinearFit {
        slope,
        intercept: my - slope * mx,
        r_squared,
        points: n,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanTable {
    pub rows: Vec<ScanRow>,
}

impl ScanTable {
    fn valid(&self, range: Option<(f64, f64)>) -> Vec<(f64, f64, f64)> {
        self.rows
            .iter()
            .filter(|r| range.is_none_or(|(lo, hi)| r.tip_z >= lo - 1e-12 && r.tip_z <= hi + 1e-12))
            .filter_map(|r| r.outcome.as_ref().ok().map(|&(z, d)| (r.tip_z, z, d)))
            .collect()
    }

    /// Fit of minimum height against tip height over `range` of tip positions.
    pub fn linear_fit(&self, range: Option<(f64, f64)>) -> Option<LinearFit> {
        let pts: Vec<_> = self.valid(range).iter().map(|&(t, z, _)| (t, z)).collect();
        linear_fit(&pts)
    }

    /// Largest relative deviation of the depth from its mean over `range`.
    pub fn depth_variation(&self, range: Option<(f64, f64)>) -> Option<f64> {
        let d: Vec<f64> = self.valid(range).iter().map(|p| p.2).collect();
        if d.is_empty() {
            return None;
        }
        let mean = d.iter().sum::<f64>() / d.len() as f64;
        Some(d.iter().map(|x| (x - mean).abs() / mean).fold(0.0, f64::max))
    }
}

/// Re-solves the field for every tip position; failures are recorded per row.
pub fn needle_scan(
    geometry: &TrapGeometry,
    grid: &GridSpec,
    tip_positions: &[f64],
    drive: &RfDrive,
    ion: &IonSpecies,
    options: &SolveOptions,
) -> ScanTable {
    let rows = tip_positions
        .par_iter()
        .map(|&tip_z| {
            let g = geometry.with_tip(tip_z);
            let outcome = solve_trap(&g, grid, drive, ion, options)
                .map_err(|e| e.to_string())
                .and_then(|s| s.analysis)
                .map(|a| (a.minimum_position.1, a.depth));
            ScanRow { tip_z, outcome }
        })
        .collect();
    ScanTable { rows }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{ElectrodeInfo, ElectrodeMask};

    fn open_mask(nr_cells: usize, nz_cells: usize, h: f64) -> Arc<ElectrodeMask> {
        let grid = GridSpec {
            r_max: nr_cells as f64 * h,
            z_min: 0.0,
            z_max: nz_cells as f64 * h,
            spacing: h,
        };
        Arc::new(ElectrodeMask::from_fn(grid, Vec::<ElectrodeInfo>::new(), |_, _| None))
    }

    fn filled(mask: &Arc<ElectrodeMask>, f: impl Fn(f64, f64) -> f64) -> ScalarField2D {
        let mut out = ScalarField2D::zeros(mask.clone());
        let nr = out.nr();
        for k in 0..out.values.len() {
            out.values[k] = f(out.grid.r(k % nr), out.grid.z(k / nr));
        }
        out
    }

    #[test]
    fn zero_field_gives_zero_pseudopotential() {
        let mask = open_mask(10, 10, 1e-5);
        let f = ScalarField2D::zeros(mask);
        let psi = pseudopotential(&f, &RfDrive::tack_default(), &IonSpecies::barium_138());
        assert!(psi.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn uniform_gradient_gives_constant_pseudopotential() {
        let mask = open_mask(10, 10, 1e-5);
        let e0 = 1234.0;
        let f = filled(&mask, |_, z| -e0 * z);
        let drive = RfDrive::tack_default();
        let ion = IonSpecies::barium_138();
        let psi = pseudopotential(&f, &drive, &ion);
        let omega = drive.angular();
        let expected = ion.charge.powi(2) * (drive.amplitude * e0).powi(2)
            / (4.0 * ion.mass * omega * omega)
            / ELEMENTARY_CHARGE;
        for v in &psi.values {
            assert!((v - expected).abs() <= 1e-12 * expected);
        }
    }

    #[test]
    fn bowl_minimum_sub_cell() {
        let h = 1e-5;
        let mask = open_mask(20, 40, h);
        let z0 = 0.2e-3 + 0.37 * h;
        let psi = filled(&mask, |r, z| 3.0 * ((z - z0) / h).powi(2) + 2.0 * (r / h).powi(2));
        let m = find_minimum(&psi).unwrap();
        assert!((m.z - z0).abs() < 0.1 * h * 1e-6);
        assert!(m.value.abs() < 1e-9);
    }

    #[test]
    fn bowl_depth_equals_rim() {
        let h = 1e-5;
        let mask = open_mask(20, 40, h);
        let z0 = 20.0 * h;
        // cone-shaped bowl: rim is lowest at the nearest box edge
        let psi = filled(&mask, |r, z| ((z - z0).powi(2) + r * r).sqrt() / h);
        let m = find_minimum(&psi).unwrap();
        let d = trap_depth(&psi, &m);
        // nearest edges are z = 0 and z = 40h (distance 20 cells) vs r = 20h
        assert!((d.depth - 20.0).abs() < 1e-9, "{}", d.depth);
    }

    #[test]
    fn double_well_depth_from_barrier() {
        // Ψ = (x² − 1)² on x ∈ [−2, 2] along the axis; flat radially
        let h = 0.01;
        let grid = GridSpec {
            r_max: 0.05,
            z_min: -2.0,
            z_max: 2.0,
            spacing: h,
        };
        let mask = Arc::new(ElectrodeMask::from_fn(grid, vec![], |_, _| None));
        let psi = filled(&mask, |r, z| (z * z - 1.0).powi(2) + r * r);
        let m = find_minimum(&psi).unwrap();
        assert!((m.z.abs() - 1.0).abs() < 1e-3);
        let d = trap_depth(&psi, &m);
        // oracle: 1-D flood over the sampled axis values
        let nz = grid.nz();
        let vals: Vec<f64> = (0..nz).map(|j| psi.at(0, j)).collect();
        let start = m.node;
        let to_edge_left = vals[..=start].iter().cloned().fold(f64::MIN, f64::max);
        let to_edge_right = vals[start..].iter().cloned().fold(f64::MIN, f64::max);
        let rim_r = (0..psi.nr()).map(|i| psi.at(i, start)).fold(f64::MIN, f64::max);
        let oracle = to_edge_left.min(to_edge_right).min(rim_r) - m.value;
        // the radial rim at r_max is reached first: 0.05² above the well floor
        assert!((d.depth - oracle).abs() < 1e-12, "{} vs {}", d.depth, oracle);
        assert!(d.depth < 1.0);
    }

    #[test]
    fn double_well_depth_through_barrier() {
        let h = 0.01;
        let grid = GridSpec {
            r_max: 1.0,
            z_min: -0.5,
            z_max: 2.0,
            spacing: h,
        };
        let mask = Arc::new(ElectrodeMask::from_fn(grid, vec![], |_, _| None));
        // steep radial wall so escape goes along the axis, over the barrier to the lower edge
        let psi = filled(&mask, |r, z| (z * z - 1.0).powi(2) + 100.0 * r * r);
        let m = find_minimum(&psi).unwrap();
        let d = trap_depth(&psi, &m);
        // barrier at z = 0 is 1; upper rim at z = 2 is 9
        assert!((d.depth - 1.0).abs() < 1e-6, "{}", d.depth);
        assert!(d.escape_saddle.1.abs() < 1e-9);
    }

    #[test]
    fn harmonic_secular_frequencies() {
        let h = 2e-6;
        let mask = open_mask(30, 60, h);
        let ion = IonSpecies::barium_138();
        let w = 2.0 * std::f64::consts::PI * 300e3;
        let z0 = 30.0 * h + 0.2 * h;
        let psi = filled(&mask, |r, z| {
            0.5 * ion.mass * w * w * ((z - z0).powi(2) + r * r) / ELEMENTARY_CHARGE
        });
        let m = find_minimum(&psi).unwrap();
        let f = secular_frequencies(&psi, &m, &ion).unwrap();
        assert!((f.axial / 300e3 - 1.0).abs() < 0.01);
        assert!((f.radial / 300e3 - 1.0).abs() < 0.01);
        let p = parabolic_fit_frequencies(&psi, &m, &ion, 5).unwrap();
        assert!((p.axial / f.axial - 1.0).abs() < 0.02);
        assert!((p.radial / f.radial - 1.0).abs() < 0.02);
    }

    #[test]
    fn saddle_rejected() {
        let h = 2e-6;
        let mask = open_mask(30, 60, h);
        let ion = IonSpecies::barium_138();
        let z0 = 30.0 * h;
        let psi = filled(&mask, |r, z| ((z - z0) / h).powi(2) - 0.1 * (r / h).powi(2) + 10.0);
        let m = Minimum {
            z: z0,
            value: 10.0,
            node: 30,
        };
        assert!(matches!(
            secular_frequencies(&psi, &m, &ion),
            Err(PseudoError::SaddleNotMinimum { .. })
        ));
    }

    #[test]
    fn no_minimum_on_monotone_axis() {
        let mask = open_mask(10, 40, 1e-5);
        let psi = filled(&mask, |_, z| z);
        assert!(matches!(find_minimum(&psi), Err(PseudoError::NoInteriorMinimum)));
    }

    #[test]
    fn linear_fit_exact_line() {
        let pts: Vec<_> = (0..5).map(|k| (k as f64, 2.0 * k as f64 + 1.0)).collect();
        let f = linear_fit(&pts).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-12);
        assert!((f.intercept - 1.0).abs() < 1e-12);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
    }
}
