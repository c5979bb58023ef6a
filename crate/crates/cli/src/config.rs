//! Run configuration.
//!
//! The file is TOML. Lengths are in mm, angles in degrees, voltages in V,
//! frequencies in MHz, ion mass in u and charge in e. Unknown keys are errors.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use toml::Value;

use tack_core::collect::{EmissionModel, LossElement, SolidAngleMode};
use tack_core::corrector::{CorrectorDesignSpec, Orientation, VerifyOptions};
use tack_core::crystal::RelaxOptions;
use tack_core::field::SolveOptions;
use tack_core::geometry::{
    ConicKind, Electrode, ElectrodeRole, GridSpec, MirrorSegment, MirrorSpec, NeedleSpec, PlateSpec, RingSpec,
    TrapGeometry,
};
use tack_core::pseudo::{IonSpecies, RfDrive};
use tack_core::rays::PlaneWindow;

const MHZ: f64 = 1e6;

fn mm(x: f64) -> f64 {
    x / 1e3
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("cannot read {path}: {message}")]
    Read { path: PathBuf, message: String },
    #[error("parse: {0}")]
    Parse(String),
    #[error("override {key}: {message}")]
    Override { key: String, message: String },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    pub geometry: GeometrySection,
    pub drive: DriveSection,
    pub ion: IonSection,
    pub grid: GridSection,
    pub scan: ScanSection,
    pub crystal: CrystalSection,
    pub optics: OpticsSection,
    pub collection: CollectionSection,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("tack-out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySection {
    pub chamber_radius: f64,
    pub mirror: MirrorSection,
    pub needle: Option<NeedleSection>,
    pub ring: Option<RingSection>,
    pub plate: Option<PlateSection>,
    #[serde(default)]
    pub mirror_segments: Vec<SegmentSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MirrorSection {
    pub radius_of_curvature: f64,
    pub aperture_diameter: f64,
    pub vertex_hole_diameter: f64,
    pub conic: ConicKind,
    pub conic_constant: f64,
    pub reflectivity: f64,
    pub substrate_thickness: f64,
    pub role: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NeedleSection {
    pub shaft_diameter: f64,
    pub taper_half_angle: f64,
    pub tip_z: f64,
    pub travel_range: f64,
    pub role: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RingSection {
    pub inner_radius: f64,
    pub outer_radius: f64,
    pub height_z: f64,
    pub thickness: f64,
    pub role: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlateSection {
    pub height_z: f64,
    pub aperture_radius: f64,
    pub thickness: f64,
    pub role: String,
}

/// Mirror band selected by surface height.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentSection {
    pub z_min: f64,
    pub z_max: f64,
    pub role: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriveSection {
    pub amplitude: f64,
    pub frequency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IonSection {
    pub mass: f64,
    pub charge: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub r_max: f64,
    pub z_min: f64,
    pub z_max: f64,
    pub spacing: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanSection {
    pub tip_start: f64,
    pub tip_stop: f64,
    pub points: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrystalTrap {
    Harmonic,
    Gridded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrystalSection {
    pub ions: usize,
    pub trap: CrystalTrap,
    pub axial_frequency: f64,
    pub radial_frequency: f64,
    pub restarts: usize,
    /// N
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpticsSection {
    pub source_z: f64,
    pub rays: usize,
    pub focus_search_min: f64,
    pub focus_search_max: f64,
    /// Ion-referred radius for the encircled fraction.
    pub spot_radius: f64,
    pub objective_na: f64,
    pub window: Option<WindowSection>,
    pub corrector: CorrectorSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowSection {
    pub z: f64,
    pub thickness: f64,
    pub index: f64,
    pub radius: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrientationName {
    FlatFirst,
    AsphereFirst,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrectorSection {
    pub front_face_z: f64,
    pub center_thickness: f64,
    pub material_index: f64,
    pub design_rays: usize,
    pub orientation: OrientationName,
    pub verify_rays: usize,
    pub export_pitch: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmissionName {
    Isotropic,
    Dipole,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeName {
    Quadrature,
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CollectionSection {
    pub ion_z: f64,
    pub emission: EmissionName,
    /// Dipole axis angle from the optical axis.
    pub dipole_tilt: f64,
    pub mode: ModeName,
    pub samples: usize,
    pub excitations: f64,
    pub curve_points: usize,
    pub loss_chain: Vec<LossSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossSection {
    pub name: String,
    pub transmittance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Dimension {
    Length,
    Angle,
    Voltage,
    Frequency,
}

fn dimension(key: &str) -> Option<Dimension> {
    let leaf = key.rsplit('.').next().unwrap_or(key);
    match leaf {
        "radius_of_curvature" | "aperture_diameter" | "vertex_hole_diameter" | "substrate_thickness"
        | "shaft_diameter" | "tip_z" | "travel_range" | "inner_radius" | "outer_radius" | "height_z"
        | "thickness" | "aperture_radius" | "chamber_radius" | "r_max" | "z_min" | "z_max" | "spacing"
        | "tip_start" | "tip_stop" | "source_z" | "focus_search_min" | "focus_search_max" | "spot_radius"
        | "z" | "radius" | "front_face_z" | "center_thickness" | "export_pitch" | "ion_z" => Some(Dimension::Length),
        "taper_half_angle" | "dipole_tilt" => Some(Dimension::Angle),
        "amplitude" => Some(Dimension::Voltage),
        "frequency" | "axial_frequency" | "radial_frequency" => Some(Dimension::Frequency),
        _ => None,
    }
}

/// Factor taking a value in `unit` to the configuration unit of `dim`.
fn unit_factor(dim: Dimension, unit: &str) -> Option<f64> {
    Some(match (dim, unit) {
        (Dimension::Length, "m") => 1e3,
        (Dimension::Length, "mm") => 1.0,
        (Dimension::Length, "um" | "µm") => 1e-3,
        (Dimension::Length, "nm") => 1e-6,
        (Dimension::Angle, "deg") => 1.0,
        (Dimension::Angle, "rad") => 180.0 / PI,
        (Dimension::Voltage, "V") => 1.0,
        (Dimension::Voltage, "kV") => 1e3,
        (Dimension::Voltage, "mV") => 1e-3,
        (Dimension::Frequency, "Hz") => 1e-6,
        (Dimension::Frequency, "kHz") => 1e-3,
        (Dimension::Frequency, "MHz") => 1.0,
        (Dimension::Frequency, "GHz") => 1e3,
        _ => return None,
    })
}

fn leaf_paths(value: &Value, prefix: &str, out: &mut Vec<String>) {
    if let Value::Table(t) = value {
        for (k, v) in t {
            let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
            match v {
                Value::Table(_) => leaf_paths(v, &path, out),
                _ => out.push(path),
            }
        }
    }
}

fn resolve_key(root: &Value, key: &str) -> Result<String, ConfigError> {
    let mut paths = Vec::new();
    leaf_paths(root, "", &mut paths);
    let suffix = format!(".{key}");
    let matches: Vec<&String> = paths.iter().filter(|p| *p == key || p.ends_with(&suffix)).collect();
    match matches.as_slice() {
        [one] => Ok((*one).clone()),
        [] => Err(ConfigError::Override {
            key: key.into(),
            message: "no such key".into(),
        }),
        many => Err(ConfigError::Override {
            key: key.into(),
            message: format!(
                "ambiguous, matches {}",
                many.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(", ")
            ),
        }),
    }
}

fn parse_override_value(path: &str, raw: &str) -> Result<Value, ConfigError> {
    let raw = raw.trim();
    let fail = |message: String| ConfigError::Override {
        key: path.into(),
        message,
    };
    let split = raw
        .char_indices()
        .rev()
        .take_while(|(_, c)| c.is_alphabetic())
        .last()
        .map(|(i, _)| i);
    if let Some(i) = split {
        let (number, unit) = raw.split_at(i);
        if let Ok(x) = number.trim().parse::<f64>() {
            let dim = dimension(path).ok_or_else(|| fail(format!("key takes no unit, got {unit:?}")))?;
            let factor = unit_factor(dim, unit).ok_or_else(|| fail(format!("unit {unit:?} does not fit this key")))?;
            return Ok(Value::Float(x * factor));
        }
    }
    let parsed: Result<toml::Table, _> = toml::from_str(&format!("v = {raw}"));
    Ok(match parsed {
        Ok(mut t) => t.remove("v").unwrap_or(Value::String(raw.into())),
        Err(_) => Value::String(raw.into()),
    })
}

fn set_path(root: &mut Value, path: &str, value: Value) {
    let mut node = root;
    let mut parts = path.split('.').peekable();
    while let Some(part) = parts.next() {
        let Value::Table(t) = node else { return };
        if parts.peek().is_none() {
            let value = match (t.get(part), value) {
                (Some(Value::Float(_)), Value::Integer(i)) => Value::Float(i as f64),
                (_, v) => v,
            };
            t.insert(part.to_string(), value);
            return;
        }
        node = t.entry(part.to_string()).or_insert_with(|| Value::Table(Default::default()));
    }
}

/// Applies `key=value` overrides to a parsed document.
///
/// Keys may be full dotted paths or any suffix that names exactly one entry.
/// Numbers may carry a unit suffix such as `mm`, `um`, `deg`, `kV` or `kHz`.
pub fn apply_overrides(doc: &mut Value, overrides: &[String]) -> Result<(), ConfigError> {
    for item in overrides {
        let (key, raw) = item.split_once('=').ok_or_else(|| ConfigError::Override {
            key: item.clone(),
            message: "expected key=value".into(),
        })?;
        let path = resolve_key(doc, key.trim())?;
        let value = parse_override_value(&path, raw)?;
        set_path(doc, &path, value);
    }
    Ok(())
}

impl RunConfig {
    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self, ConfigError> {
        let mut doc: Value = toml::from_str::<toml::Table>(text)
            .map(Value::Table)
            .map_err(|e| ConfigError::Parse(e.message().to_string()))?;
        apply_overrides(&mut doc, overrides)?;
        let config: RunConfig = doc.try_into().map_err(|e: toml::de::Error| ConfigError::Parse(e.message().to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|e| ConfigError::Read {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        Self::from_toml_str(&text, overrides)
    }

    /// SHA-256 over the resolved configuration, excluding the output directory.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output_dir = PathBuf::new();
        let bytes = serde_json::to_vec(&canonical).expect("configuration serializes");
        format!("{:x}", Sha256::digest(&bytes))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(ConfigError::Invalid(format!("{name} must be positive, got {v}")))
            }
        };
        positive("drive.amplitude", self.drive.amplitude)?;
        positive("drive.frequency", self.drive.frequency)?;
        positive("ion.mass", self.ion.mass)?;
        if self.ion.charge == 0.0 || !self.ion.charge.is_finite() {
            return Err(ConfigError::Invalid("ion.charge must be non-zero".into()));
        }
        positive("grid.spacing", self.grid.spacing)?;
        positive("grid.tolerance", self.grid.tolerance)?;
        positive("crystal.axial_frequency", self.crystal.axial_frequency)?;
        positive("crystal.radial_frequency", self.crystal.radial_frequency)?;
        positive("crystal.tolerance", self.crystal.tolerance)?;
        if self.crystal.ions == 0 || self.crystal.restarts == 0 {
            return Err(ConfigError::Invalid("crystal.ions and crystal.restarts must be at least 1".into()));
        }
        positive("optics.source_z", self.optics.source_z)?;
        positive("optics.spot_radius", self.optics.spot_radius)?;
        positive("optics.corrector.export_pitch", self.optics.corrector.export_pitch)?;
        if !(self.optics.objective_na > 0.0 && self.optics.objective_na < 1.0) {
            return Err(ConfigError::Invalid("optics.objective_na must lie in (0, 1)".into()));
        }
        if self.optics.focus_search_max <= self.optics.focus_search_min {
            return Err(ConfigError::Invalid("optics.focus_search_max must exceed focus_search_min".into()));
        }
        if self.optics.rays == 0 || self.optics.corrector.verify_rays == 0 {
            return Err(ConfigError::Invalid("ray counts must be at least 1".into()));
        }
        if self.scan.points < 2 || self.scan.tip_stop <= self.scan.tip_start {
            return Err(ConfigError::Invalid("scan needs at least 2 points and tip_stop > tip_start".into()));
        }
        if self.collection.curve_points < 2 {
            return Err(ConfigError::Invalid("collection.curve_points must be at least 2".into()));
        }
        if self.collection.excitations < 0.0 {
            return Err(ConfigError::Invalid("collection.excitations must be non-negative".into()));
        }
        let geometry = self.geometry()?;
        geometry.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.grid_spec().validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(())
    }

    pub fn geometry(&self) -> Result<TrapGeometry, ConfigError> {
        let g = &self.geometry;
        let m = &g.mirror;
        let mut roles = BTreeMap::from([(Electrode::Mirror, parse_role(&m.role)?)]);
        let needle = match &g.needle {
            Some(n) => {
                roles.insert(Electrode::Needle, parse_role(&n.role)?);
                Some(NeedleSpec {
                    shaft_diameter: mm(n.shaft_diameter),
                    taper_half_angle: n.taper_half_angle.to_radians(),
                    tip_z: mm(n.tip_z),
                    travel_range: mm(n.travel_range),
                })
            }
            None => None,
        };
        let ring = match &g.ring {
            Some(r) => {
                roles.insert(Electrode::Ring, parse_role(&r.role)?);
                Some(RingSpec {
                    inner_radius: mm(r.inner_radius),
                    outer_radius: mm(r.outer_radius),
                    height_z: mm(r.height_z),
                    thickness: mm(r.thickness),
                })
            }
            None => None,
        };
        let top_plate = match &g.plate {
            Some(p) => {
                roles.insert(Electrode::Plate, parse_role(&p.role)?);
                Some(PlateSpec {
                    height_z: mm(p.height_z),
                    aperture_radius: mm(p.aperture_radius),
                    thickness: mm(p.thickness),
                })
            }
            None => None,
        };
        let mirror_segments = g
            .mirror_segments
            .iter()
            .map(|s| {
                Ok(MirrorSegment {
                    z_min: mm(s.z_min),
                    z_max: mm(s.z_max),
                    role: parse_role(&s.role)?,
                })
            })
            .collect::<Result<_, ConfigError>>()?;
        Ok(TrapGeometry {
            mirror: self.mirror(),
            needle,
            ring,
            top_plate,
            chamber_radius: mm(g.chamber_radius),
            roles,
            mirror_segments,
        })
    }

    pub fn mirror(&self) -> MirrorSpec {
        let m = &self.geometry.mirror;
        MirrorSpec {
            radius_of_curvature: mm(m.radius_of_curvature),
            aperture_diameter: mm(m.aperture_diameter),
            vertex_hole_diameter: mm(m.vertex_hole_diameter),
            conic_kind: m.conic,
            conic_constant: m.conic_constant,
            reflectivity: m.reflectivity,
            substrate_thickness: mm(m.substrate_thickness),
        }
    }

    pub fn grid_spec(&self) -> GridSpec {
        GridSpec {
            r_max: mm(self.grid.r_max),
            z_min: mm(self.grid.z_min),
            z_max: mm(self.grid.z_max),
            spacing: mm(self.grid.spacing),
        }
    }

    pub fn solve_options(&self) -> SolveOptions {
        SolveOptions {
            tolerance: self.grid.tolerance,
            max_iterations: self.grid.max_iterations,
            ..SolveOptions::default()
        }
    }

    pub fn drive(&self) -> RfDrive {
        RfDrive {
            amplitude: self.drive.amplitude,
            frequency: self.drive.frequency * MHZ,
        }
    }

    pub fn ion(&self) -> IonSpecies {
        IonSpecies::new(self.ion.mass, self.ion.charge)
    }

    /// Tip positions of the needle scan, m.
    pub fn scan_tips(&self) -> Vec<f64> {
        let s = &self.scan;
        let n = s.points;
        (0..n)
            .map(|i| mm(s.tip_start + (s.tip_stop - s.tip_start) * i as f64 / (n - 1) as f64))
            .collect()
    }

    pub fn relax_options(&self) -> RelaxOptions {
        RelaxOptions {
            restarts: self.crystal.restarts,
            tolerance: self.crystal.tolerance,
            seed: self.seed,
            ..RelaxOptions::default()
        }
    }

    pub fn window(&self) -> Option<PlaneWindow> {
        self.optics.window.as_ref().map(|w| PlaneWindow {
            z: mm(w.z),
            thickness: mm(w.thickness),
            index: w.index,
            radius: mm(w.radius),
        })
    }

    pub fn corrector_spec(&self) -> CorrectorDesignSpec {
        let c = &self.optics.corrector;
        CorrectorDesignSpec {
            source_z: mm(self.optics.source_z),
            mirror: self.mirror(),
            window: self.window(),
            front_face_z: mm(c.front_face_z),
            center_thickness: mm(c.center_thickness),
            material_index: c.material_index,
            design_ray_count: c.design_rays,
            orientation: match c.orientation {
                OrientationName::FlatFirst => Orientation::FlatFirst,
                OrientationName::AsphereFirst => Orientation::AsphereFirst,
            },
            max_angle: None,
        }
    }

    pub fn verify_options(&self) -> VerifyOptions {
        VerifyOptions {
            n_rays: self.optics.corrector.verify_rays,
            comparison_na: self.optics.objective_na,
            ..VerifyOptions::default()
        }
    }

    pub fn emission(&self) -> EmissionModel {
        match self.collection.emission {
            EmissionName::Isotropic => EmissionModel::Isotropic,
            EmissionName::Dipole => EmissionModel::tilted_dipole(self.collection.dipole_tilt.to_radians()),
        }
    }

    pub fn solid_angle_mode(&self) -> SolidAngleMode {
        match self.collection.mode {
            ModeName::Quadrature => SolidAngleMode::Quadrature,
            ModeName::MonteCarlo => SolidAngleMode::MonteCarlo {
                samples: self.collection.samples,
                seed: self.seed,
            },
        }
    }

    pub fn loss_chain(&self) -> Vec<LossElement> {
        self.collection
            .loss_chain
            .iter()
            .map(|l| LossElement::new(&l.name, l.transmittance))
            .collect()
    }
}

/// `"rf"`, `"ground"` or `"dc:<volts>"`.
pub fn parse_role(text: &str) -> Result<ElectrodeRole, ConfigError> {
    match text.trim() {
        "rf" => Ok(ElectrodeRole::Rf),
        "ground" => Ok(ElectrodeRole::Ground),
        other => other
            .strip_prefix("dc:")
            .and_then(|v| v.trim().parse::<f64>().ok())
            .filter(|v| v.is_finite())
            .map(ElectrodeRole::Dc)
            .ok_or_else(|| ConfigError::Invalid(format!("unknown electrode role {other:?}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const DEFAULT: &str = include_str!("../../../config/default.cfg");

    #[test]
    fn default_config_parses() {
        let c = RunConfig::from_toml_str(DEFAULT, &[]).unwrap();
        assert_eq!(c.geometry().unwrap(), TrapGeometry::tack_default());
        assert_eq!(c.grid_spec(), GridSpec::tack_default());
        assert_eq!(c.loss_chain(), tack_core::collect::tack_loss_chain());
        let spec = c.corrector_spec();
        assert_eq!(spec, CorrectorDesignSpec::tack_default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = DEFAULT.replace("[drive]", "[drive]\nphase = 0.0");
        assert!(matches!(RunConfig::from_toml_str(&text, &[]), Err(ConfigError::Parse(_))));
    }

    #[test]
    fn missing_section_is_rejected() {
        let text = DEFAULT.replace("[drive]\namplitude = 270.0\nfrequency = 23.0\n", "");
        assert!(matches!(RunConfig::from_toml_str(&text, &[]), Err(ConfigError::Parse(_))));
    }

    #[test]
    fn overrides_match_file_edits() {
        let by_override = RunConfig::from_toml_str(DEFAULT, &["tip_z=1500um".into(), "drive.amplitude=0.3kV".into()]).unwrap();
        let text = DEFAULT
            .replace("tip_z = 1.7", "tip_z = 1.5")
            .replace("amplitude = 270.0", "amplitude = 300.0");
        let by_edit = RunConfig::from_toml_str(&text, &[]).unwrap();
        assert_eq!(by_override, by_edit);
        assert_eq!(by_override.hash(), by_edit.hash());
    }

    #[test]
    fn override_units_convert() {
        let c = RunConfig::from_toml_str(DEFAULT, &["frequency=23000kHz".into(), "taper_half_angle=0.5rad".into()]).unwrap();
        assert_eq!(c.drive.frequency, 23.0);
        assert!((c.geometry.needle.unwrap().taper_half_angle - 28.64788975654116).abs() < 1e-12);
    }

    #[test]
    fn bad_overrides_are_config_errors() {
        for bad in ["nonsense=1", "thickness=1", "tip_z=3kHz", "seed=2mm", "tip_z"] {
            let e = RunConfig::from_toml_str(DEFAULT, &[bad.into()]).unwrap_err();
            assert!(matches!(e, ConfigError::Override { .. }), "{bad}: {e}");
        }
    }

    #[test]
    fn negative_frequency_is_invalid() {
        let e = RunConfig::from_toml_str(DEFAULT, &["drive.frequency=-23".into()]).unwrap_err();
        assert!(matches!(e, ConfigError::Invalid(_)));
    }

    #[test]
    fn hash_ignores_output_directory() {
        let a = RunConfig::from_toml_str(DEFAULT, &[]).unwrap();
        let b = RunConfig::from_toml_str(DEFAULT, &["output_dir=elsewhere".into()]).unwrap();
        assert_eq!(a.hash(), b.hash());
        let c = RunConfig::from_toml_str(DEFAULT, &["seed=3".into()]).unwrap();
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn roles_parse() {
        assert_eq!(parse_role("dc:-2.5").unwrap(), ElectrodeRole::Dc(-2.5));
        assert!(parse_role("float").is_err());
    }
}
