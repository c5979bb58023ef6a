//! Axisymmetric trap geometry and the optical surfaces it carries.
//!
//! Coordinates: the optical axis is `z`, the mirror vertex sits at `z = 0`
//! and the concave side faces `+z`. For a sphere of radius `R` the centre of
//! curvature is at `z = R` and the paraxial focus at `z = R / 2`. All lengths
//! are in metres.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("invalid geometry: {0}")]
    Invalid(String),
    #[error("grid too coarse: needle shaft spans {cells:.2} cells, need at least 4")]
    GridTooCoarse { cells: f64 },
    #[error("electrodes {first} and {second} overlap at r = {r:.6e} m, z = {z:.6e} m")]
    GeometryOverlap {
        first: String,
        second: String,
        r: f64,
        z: f64,
    },
    #[error("electrode {0} does not occupy any grid cell")]
    EmptyElectrode(String),
    #[error("grid does not cover electrode {0}")]
    GridDoesNotCover(String),
    #[error("RF electrodes form {0} disconnected regions")]
    DisconnectedRf(usize),
    #[error("radius {r:.6e} m outside aperture [{r_min:.6e}, {r_max:.6e}]")]
    OutOfAperture { r: f64, r_min: f64, r_max: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConicKind {
    Sphere,
    Paraboloid,
    Ellipsoid,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MirrorSpec {
    pub radius_of_curvature: f64,
    pub aperture_diameter: f64,
    pub vertex_hole_diameter: f64,
    pub conic_kind: ConicKind,
    pub conic_constant: f64,
    pub reflectivity: f64,
    /// Depth of the substrate behind the vertex; the back face sits at `z = -substrate_thickness`.
    pub substrate_thickness: f64,
}

impl MirrorSpec {
    /// The 4 mm radius, 6 mm aperture sphere with a 0.75 mm vertex hole.
    pub fn tack_default() -> Self {
        Self {
            radius_of_curvature: 4.0e-3,
            aperture_diameter: 6.0e-3,
            vertex_hole_diameter: 0.75e-3,
            conic_kind: ConicKind::Sphere,
            conic_constant: 0.0,
            reflectivity: 0.75,
            substrate_thickness: 0.5e-3,
        }
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let invalid = |m: &str| Err(GeometryError::Invalid(format!("mirror: {m}")));
        if !(self.radius_of_curvature > 0.0) {
            return invalid("radius_of_curvature must be positive");
        }
        if !(self.aperture_diameter > 0.0) {
            return invalid("aperture_diameter must be positive");
        }
        if !(self.vertex_hole_diameter >= 0.0 && self.vertex_hole_diameter < self.aperture_diameter)
        {
            return invalid("vertex_hole_diameter must lie in [0, aperture_diameter)");
        }
        if !(0.0..=1.0).contains(&self.reflectivity) {
            return invalid("reflectivity must lie in [0, 1]");
        }
        if !(self.substrate_thickness >= 0.0) {
            return invalid("substrate_thickness must be non-negative");
        }
        match self.conic_kind {
            ConicKind::Sphere => {
                if self.conic_constant != 0.0 {
                    return invalid("sphere requires conic_constant = 0");
                }
                if self.aperture_diameter > 2.0 * self.radius_of_curvature {
                    return invalid("sphere aperture exceeds 2 R");
                }
            }
            ConicKind::Paraboloid => {
                if self.conic_constant != -1.0 {
                    return invalid("paraboloid requires conic_constant = -1");
                }
            }
            ConicKind::Ellipsoid => {
                if !(self.conic_constant > -1.0) || self.conic_constant == 0.0 {
                    return invalid("ellipsoid requires conic_constant > -1 and != 0");
                }
                let c = 1.0 / self.radius_of_curvature;
                let a = 0.5 * self.aperture_diameter;
                if 1.0 - (1.0 + self.conic_constant) * c * c * a * a < 0.0 {
                    return invalid("ellipsoid aperture beyond the equator");
                }
            }
        }
        Ok(())
    }

    pub fn surface(&self) -> ConicSurface {
        ConicSurface {
            vertex_z: 0.0,
            curvature: 1.0 / self.radius_of_curvature,
            conic_constant: self.conic_constant,
            aperture: Aperture {
                r_min: 0.5 * self.vertex_hole_diameter,
                r_max: 0.5 * self.aperture_diameter,
            },
            kind: SurfaceKind::Mirror,
        }
    }

    /// Paraxial focus, half way between vertex and centre of curvature.
    pub fn focus_z(&self) -> f64 {
        0.5 * self.radius_of_curvature
    }

    pub fn rim_z(&self) -> f64 {
        conic_sag(
            1.0 / self.radius_of_curvature,
            self.conic_constant,
            0.5 * self.aperture_diameter,
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NeedleSpec {
    pub shaft_diameter: f64,
    pub taper_half_angle: f64,
    pub tip_z: f64,
    pub travel_range: f64,
}

impl NeedleSpec {
    pub fn tack_default() -> Self {
        Self {
            shaft_diameter: 0.5e-3,
            taper_half_angle: 10f64.to_radians(),
            tip_z: 1.7e-3,
            travel_range: 2.0e-3,
        }
    }

    pub fn shaft_radius(&self) -> f64 {
        0.5 * self.shaft_diameter
    }

    /// Length of the conical taper from shaft to tip.
    pub fn taper_length(&self) -> f64 {
        self.shaft_radius() / self.taper_half_angle.tan()
    }

    /// Needle radius at height `z`, `None` above the tip.
    pub fn radius_at(&self, z: f64) -> Option<f64> {
        if z > self.tip_z {
            return None;
        }
        Some(((self.tip_z - z) * self.taper_half_angle.tan()).min(self.shaft_radius()))
    }

    fn validate(&self, mirror: &MirrorSpec) -> Result<(), GeometryError> {
        let invalid = |m: &str| Err(GeometryError::Invalid(format!("needle: {m}")));
        if !(self.shaft_diameter > 0.0) {
            return invalid("shaft_diameter must be positive");
        }
        if self.shaft_diameter >= mirror.vertex_hole_diameter {
            return invalid("shaft_diameter must be smaller than the vertex hole");
        }
        if !(self.taper_half_angle > 0.0 && self.taper_half_angle < std::f64::consts::FRAC_PI_2) {
            return invalid("taper_half_angle must lie in (0, 90) degrees");
        }
        if !(self.travel_range > 0.0) {
            return invalid("travel_range must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RingSpec {
    pub inner_radius: f64,
    pub outer_radius: f64,
    pub height_z: f64,
    pub thickness: f64,
}

impl RingSpec {
    pub fn tack_default() -> Self {
        Self {
            inner_radius: 4.0e-3,
            outer_radius: 6.0e-3,
            height_z: 2.5e-3,
            thickness: 0.5e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlateSpec {
    pub height_z: f64,
    pub aperture_radius: f64,
    pub thickness: f64,
}

impl PlateSpec {
    pub fn tack_default() -> Self {
        Self {
            height_z: 8.0e-3,
            aperture_radius: 5.0e-3,
            thickness: 0.5e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ElectrodeRole {
    Rf,
    Ground,
    Dc(f64),
}

impl fmt::Display for ElectrodeRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ElectrodeRole::Rf => write!(f, "rf"),
            ElectrodeRole::Ground => write!(f, "ground"),
            ElectrodeRole::Dc(v) => write!(f, "dc:{v}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Electrode {
    Mirror,
    Needle,
    Ring,
    Plate,
}

/// A band of the mirror surface, selected by the surface height `z` at each radius.
#[derive(Debug, Clone, PartialEq)]
pub struct MirrorSegment {
    pub z_min: f64,
    pub z_max: f64,
    pub role: ElectrodeRole,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrapGeometry {
    pub mirror: MirrorSpec,
    pub needle: Option<NeedleSpec>,
    pub ring: Option<RingSpec>,
    pub top_plate: Option<PlateSpec>,
    pub chamber_radius: f64,
    pub roles: BTreeMap<Electrode, ElectrodeRole>,
    pub mirror_segments: Vec<MirrorSegment>,
}

impl TrapGeometry {
    /// RF on the mirror, everything else grounded.
    pub fn tack_default() -> Self {
        let roles = BTreeMap::from([
            (Electrode::Mirror, ElectrodeRole::Rf),
            (Electrode::Needle, ElectrodeRole::Ground),
            (Electrode::Ring, ElectrodeRole::Ground),
            (Electrode::Plate, ElectrodeRole::Ground),
        ]);
        Self {
            mirror: MirrorSpec::tack_default(),
            needle: Some(NeedleSpec::tack_default()),
            ring: Some(RingSpec::tack_default()),
            top_plate: Some(PlateSpec::tack_default()),
            chamber_radius: 25.0e-3,
            roles,
            mirror_segments: Vec::new(),
        }
    }

    pub fn role(&self, electrode: Electrode) -> ElectrodeRole {
        self.roles
            .get(&electrode)
            .copied()
            .unwrap_or(match electrode {
                Electrode::Mirror => ElectrodeRole::Rf,
                _ => ElectrodeRole::Ground,
            })
    }

    pub fn with_tip(&self, tip_z: f64) -> Self {
        let mut g = self.clone();
        if let Some(n) = g.needle.as_mut() {
            n.tip_z = tip_z;
        }
        g
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        self.mirror.validate()?;
        if let Some(n) = &self.needle {
            n.validate(&self.mirror)?;
        }
        let invalid = |m: String| Err(GeometryError::Invalid(m));
        if !(self.chamber_radius > 0.0) {
            return invalid("chamber radius must be positive".into());
        }
        if 0.5 * self.mirror.aperture_diameter >= self.chamber_radius {
            return invalid("mirror extends beyond the chamber".into());
        }
        if let Some(ring) = &self.ring {
            if !(ring.inner_radius >= 0.0 && ring.inner_radius < ring.outer_radius) {
                return invalid("ring: need 0 <= inner_radius < outer_radius".into());
            }
            if !(ring.thickness > 0.0) {
                return invalid("ring: thickness must be positive".into());
            }
            if ring.outer_radius >= self.chamber_radius {
                return invalid("ring extends beyond the chamber".into());
            }
        }
        if let Some(plate) = &self.top_plate {
            if !(plate.aperture_radius > 0.0 && plate.aperture_radius < self.chamber_radius) {
                return invalid("plate: aperture radius must lie inside the chamber".into());
            }
            if !(plate.thickness > 0.0) {
                return invalid("plate: thickness must be positive".into());
            }
        }
        for (k, seg) in self.mirror_segments.iter().enumerate() {
            if !(seg.z_min < seg.z_max) {
                return invalid(format!("segment {k}: z_min must be below z_max"));
            }
            for other in &self.mirror_segments[k + 1..] {
                if seg.z_min < other.z_max && other.z_min < seg.z_max {
                    return invalid(format!("segment {k} overlaps a later segment"));
                }
            }
        }
        Ok(())
    }

    /// The solid electrodes in rasterization order.
    fn solids(&self) -> Vec<Solid> {
        let mut solids = Vec::new();
        if self.mirror_segments.is_empty() {
            solids.push(Solid {
                name: "mirror".into(),
                role: self.role(Electrode::Mirror),
                shape: Shape::MirrorBody { band: None },
            });
        } else {
            for (k, seg) in self.mirror_segments.iter().enumerate() {
                solids.push(Solid {
                    name: format!("mirror_segment_{k}"),
                    role: seg.role,
                    shape: Shape::MirrorBody {
                        band: Some((seg.z_min, seg.z_max)),
                    },
                });
            }
        }
        if self.needle.is_some() {
            solids.push(Solid {
                name: "needle".into(),
                role: self.role(Electrode::Needle),
                shape: Shape::Needle,
            });
        }
        if let Some(ring) = &self.ring {
            solids.push(Solid {
                name: "ring".into(),
                role: self.role(Electrode::Ring),
                shape: Shape::Annulus {
                    r_in: ring.inner_radius,
                    r_out: ring.outer_radius,
                    z_lo: ring.height_z,
                    z_hi: ring.height_z + ring.thickness,
                },
            });
        }
        if let Some(plate) = &self.top_plate {
            solids.push(Solid {
                name: "plate".into(),
                role: self.role(Electrode::Plate),
                shape: Shape::Annulus {
                    r_in: plate.aperture_radius,
                    r_out: self.chamber_radius,
                    z_lo: plate.height_z,
                    z_hi: plate.height_z + plate.thickness,
                },
            });
        }
        solids
    }

    fn contains(&self, shape: &Shape, r: f64, z: f64) -> bool {
        match *shape {
            Shape::MirrorBody { band } => {
                let m = &self.mirror;
                let hole = 0.5 * m.vertex_hole_diameter;
                let edge = 0.5 * m.aperture_diameter;
                if r < hole || r > edge || z < -m.substrate_thickness {
                    return false;
                }
                let c = 1.0 / m.radius_of_curvature;
                let surface = conic_sag(c, m.conic_constant, r);
                if z > surface {
                    return false;
                }
                match band {
                    None => true,
                    Some((lo, hi)) => surface >= lo && surface < hi,
                }
            }
            Shape::Needle => match &self.needle {
                Some(n) => n.radius_at(z).is_some_and(|rn| r <= rn),
                None => false,
            },
            Shape::Annulus {
                r_in,
                r_out,
                z_lo,
                z_hi,
            } => r >= r_in && r <= r_out && z >= z_lo && z <= z_hi,
        }
    }

    /// Vertical extent each solid needs the grid to cover.
    fn extent(&self, shape: &Shape) -> (f64, f64, f64) {
        match *shape {
            Shape::MirrorBody { .. } => (
                0.5 * self.mirror.aperture_diameter,
                -self.mirror.substrate_thickness,
                self.mirror.rim_z(),
            ),
            Shape::Needle => {
                let tip = self.needle.as_ref().map_or(0.0, |n| n.tip_z);
                (0.0, tip, tip)
            }
            Shape::Annulus { r_in, z_lo, z_hi, .. } => (r_in, z_lo, z_hi),
        }
    }
}

#[derive(Debug, Clone)]
enum Shape {
    MirrorBody { band: Option<(f64, f64)> },
    Needle,
    Annulus {
        r_in: f64,
        r_out: f64,
        z_lo: f64,
        z_hi: f64,
    },
}

#[derive(Debug, Clone)]
struct Solid {
    name: String,
    role: ElectrodeRole,
    shape: Shape,
}

/// Uniform node grid: `r = i * spacing`, `z = z_min + j * spacing`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub r_max: f64,
    pub z_min: f64,
    pub z_max: f64,
    pub spacing: f64,
}

impl GridSpec {
    pub fn tack_default() -> Self {
        Self {
            r_max: 12.0e-3,
            z_min: -1.0e-3,
            z_max: 10.0e-3,
            spacing: 10.0e-6,
        }
    }

    pub fn nr(&self) -> usize {
        (self.r_max / self.spacing).round() as usize + 1
    }

    pub fn nz(&self) -> usize {
        ((self.z_max - self.z_min) / self.spacing).round() as usize + 1
    }

    pub fn r(&self, i: usize) -> f64 {
        i as f64 * self.spacing
    }

    pub fn z(&self, j: usize) -> f64 {
        self.z_min + j as f64 * self.spacing
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if !(self.spacing > 0.0 && self.r_max > 0.0 && self.z_max > self.z_min) {
            return Err(GeometryError::Invalid(
                "grid: need spacing > 0, r_max > 0 and z_max > z_min".into(),
            ));
        }
        if self.nr() < 3 || self.nz() < 3 {
            return Err(GeometryError::Invalid("grid: fewer than 3 nodes per axis".into()));
        }
        Ok(())
    }

    /// Grid with doubled spacing whose nodes coincide with every other node of `self`.
    pub fn coarsened(&self) -> GridSpec {
        let h = 2.0 * self.spacing;
        GridSpec {
            r_max: ((self.nr() - 1) / 2) as f64 * h,
            z_min: self.z_min,
            z_max: self.z_min + ((self.nz() - 1) / 2) as f64 * h,
            spacing: h,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ElectrodeId(pub usize);

#[derive(Debug, Clone, PartialEq)]
pub struct ElectrodeInfo {
    pub name: String,
    pub role: ElectrodeRole,
}

/// Per-node electrode ownership; `0` is vacuum, `k + 1` is electrode `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct ElectrodeMask {
    pub grid: GridSpec,
    pub electrodes: Vec<ElectrodeInfo>,
    cells: Vec<u8>,
}

impl ElectrodeMask {
    /// Builds a mask from an arbitrary membership predicate, for benchmarks and tests.
    pub fn from_fn(
        grid: GridSpec,
        electrodes: Vec<ElectrodeInfo>,
        mut owner: impl FnMut(f64, f64) -> Option<ElectrodeId>,
    ) -> Self {
        assert!(electrodes.len() < 255);
        let (nr, nz) = (grid.nr(), grid.nz());
        let mut cells = vec![0u8; nr * nz];
        for j in 0..nz {
            for i in 0..nr {
                if let Some(id) = owner(grid.r(i), grid.z(j)) {
                    cells[j * nr + i] = id.0 as u8 + 1;
                }
            }
        }
        Self {
            grid,
            electrodes,
            cells,
        }
    }

    pub fn nr(&self) -> usize {
        self.grid.nr()
    }

    pub fn nz(&self) -> usize {
        self.grid.nz()
    }

    #[inline]
    pub fn owner(&self, i: usize, j: usize) -> Option<ElectrodeId> {
        match self.cells[j * self.nr() + i] {
            0 => None,
            k => Some(ElectrodeId(k as usize - 1)),
        }
    }

    #[inline]
    pub fn is_vacuum(&self, i: usize, j: usize) -> bool {
        self.cells[j * self.nr() + i] == 0
    }

    /// Symmetry-axis nodes receive the regularized `r = 0` stencil.
    pub fn is_axis(&self, i: usize) -> bool {
        i == 0
    }

    pub fn raw(&self) -> &[u8] {
        &self.cells
    }

    pub fn id_by_name(&self, name: &str) -> Option<ElectrodeId> {
        self.electrodes
            .iter()
            .position(|e| e.name == name)
            .map(ElectrodeId)
    }

    pub fn cell_count(&self, id: ElectrodeId) -> usize {
        let tag = id.0 as u8 + 1;
        self.cells.iter().filter(|&&c| c == tag).count()
    }

    /// Number of 4-connected components of the node set selected by `pick`.
    pub fn components(&self, pick: impl Fn(u8) -> bool) -> usize {
        let (nr, nz) = (self.nr(), self.nz());
        let mut seen = vec![false; nr * nz];
        let mut count = 0;
        let mut stack = Vec::new();
        for start in 0..nr * nz {
            if seen[start] || !pick(self.cells[start]) {
                continue;
            }
            count += 1;
            seen[start] = true;
            stack.push(start);
            while let Some(k) = stack.pop() {
                let (i, j) = (k % nr, k / nr);
                let mut visit = |n: usize| {
                    if !seen[n] && pick(self.cells[n]) {
                        seen[n] = true;
                        stack.push(n);
                    }
                };
                if i > 0 {
                    visit(k - 1);
                }
                if i + 1 < nr {
                    visit(k + 1);
                }
                if j > 0 {
                    visit(k - nr);
                }
                if j + 1 < nz {
                    visit(k + nr);
                }
            }
        }
        count
    }

    pub fn electrode_components(&self, id: ElectrodeId) -> usize {
        let tag = id.0 as u8 + 1;
        self.components(|c| c == tag)
    }

    /// Resamples onto `coarse`, whose nodes are every other node of this grid.
    pub fn restrict_to(&self, coarse: &GridSpec) -> ElectrodeMask {
        let nr = self.nr();
        let (cr, cz) = (coarse.nr(), coarse.nz());
        let mut cells = vec![0u8; cr * cz];
        for j in 0..cz {
            for i in 0..cr {
                cells[j * cr + i] = self.cells[(2 * j) * nr + 2 * i];
            }
        }
        ElectrodeMask {
            grid: *coarse,
            electrodes: self.electrodes.clone(),
            cells,
        }
    }
}

fn rasterize_unchecked(
    geometry: &TrapGeometry,
    grid: &GridSpec,
) -> Result<ElectrodeMask, GeometryError> {
    let solids = geometry.solids();
    let electrodes: Vec<ElectrodeInfo> = solids
        .iter()
        .map(|s| ElectrodeInfo {
            name: s.name.clone(),
            role: s.role,
        })
        .collect();
    let (nr, nz) = (grid.nr(), grid.nz());
    let mut cells = vec![0u8; nr * nz];
    for j in 0..nz {
        let z = grid.z(j);
        for i in 0..nr {
            let r = grid.r(i);
            let mut owner: Option<usize> = None;
            for (k, solid) in solids.iter().enumerate() {
                if geometry.contains(&solid.shape, r, z) {
                    if let Some(prev) = owner {
                        return Err(GeometryError::GeometryOverlap {
                            first: solids[prev].name.clone(),
                            second: solid.name.clone(),
                            r,
                            z,
                        });
                    }
                    owner = Some(k);
                }
            }
            if let Some(k) = owner {
                cells[j * nr + i] = k as u8 + 1;
            }
        }
    }
    Ok(ElectrodeMask {
        grid: *grid,
        electrodes,
        cells,
    })
}

/// Rasterizes the electrode set onto the node grid.
pub fn rasterize(geometry: &TrapGeometry, grid: &GridSpec) -> Result<ElectrodeMask, GeometryError> {
    geometry.validate()?;
    grid.validate()?;
    if let Some(n) = &geometry.needle {
        let cells = n.shaft_diameter / grid.spacing;
        if cells < 4.0 {
            return Err(GeometryError::GridTooCoarse { cells });
        }
    }
    for solid in geometry.solids() {
        let (r_lo, z_lo, z_hi) = geometry.extent(&solid.shape);
        if r_lo > grid.r_max || z_lo < grid.z_min || z_hi > grid.z_max {
            return Err(GeometryError::GridDoesNotCover(solid.name));
        }
    }
    let mask = rasterize_unchecked(geometry, grid)?;
    for (k, e) in mask.electrodes.iter().enumerate() {
        if mask.cell_count(ElectrodeId(k)) == 0 {
            return Err(GeometryError::EmptyElectrode(e.name.clone()));
        }
    }
    if geometry.mirror_segments.is_empty() {
        let rf: Vec<u8> = mask
            .electrodes
            .iter()
            .enumerate()
            .filter(|(_, e)| e.role == ElectrodeRole::Rf)
            .map(|(k, _)| k as u8 + 1)
            .collect();
        let n = mask.components(|c| rf.contains(&c));
        if n > 1 {
            return Err(GeometryError::DisconnectedRf(n));
        }
    }
    Ok(mask)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aperture {
    pub r_min: f64,
    pub r_max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SurfaceKind {
    Mirror,
    Refracting { n_before: f64, n_after: f64 },
}

/// Rotationally symmetric conic about the `z` axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConicSurface {
    pub vertex_z: f64,
    /// Signed vertex curvature `1/R`; positive when the surface bends toward `+z`.
    pub curvature: f64,
    pub conic_constant: f64,
    pub aperture: Aperture,
    pub kind: SurfaceKind,
}

impl ConicSurface {
    pub fn validate(&self) -> Result<(), GeometryError> {
        if !(self.aperture.r_min >= 0.0 && self.aperture.r_min < self.aperture.r_max) {
            return Err(GeometryError::Invalid("surface: need 0 <= r_min < r_max".into()));
        }
        if let SurfaceKind::Refracting { n_before, n_after } = self.kind {
            if !(n_before > 0.0 && n_after > 0.0) {
                return Err(GeometryError::Invalid(
                    "surface: refractive indices must be positive".into(),
                ));
            }
        }
        let c = self.curvature;
        let r = self.aperture.r_max;
        if 1.0 - (1.0 + self.conic_constant) * c * c * r * r < 0.0 {
            return Err(GeometryError::Invalid(
                "surface: sag undefined inside the aperture".into(),
            ));
        }
        Ok(())
    }
}

/// `c r² / (1 + sqrt(1 - (1+k) c² r²))`, relative to the vertex.
pub fn conic_sag(curvature: f64, conic_constant: f64, r: f64) -> f64 {
    let c = curvature;
    let arg = 1.0 - (1.0 + conic_constant) * c * c * r * r;
    c * r * r / (1.0 + arg.max(0.0).sqrt())
}

/// `dz/dr` of [`conic_sag`].
pub fn conic_slope(curvature: f64, conic_constant: f64, r: f64) -> f64 {
    let c = curvature;
    let arg = 1.0 - (1.0 + conic_constant) * c * c * r * r;
    c * r / arg.max(0.0).sqrt()
}

pub fn surface_sag(surface: &ConicSurface, r: f64) -> Result<f64, GeometryError> {
    let ap = surface.aperture;
    if !(r >= ap.r_min && r <= ap.r_max) {
        return Err(GeometryError::OutOfAperture {
            r,
            r_min: ap.r_min,
            r_max: ap.r_max,
        });
    }
    Ok(surface.vertex_z + conic_sag(surface.curvature, surface.conic_constant, r))
}
