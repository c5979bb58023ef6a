//! Subcommand dispatch and artifact generation.

use std::fmt::{self, Debug, Display, Write as _};
use std::io;
use std::path::PathBuf;
use std::sync::Arc;

use clap::ValueEnum;
use thiserror::Error;

use tack_core::collect::{self, na_equivalent, photon_budget, solid_angle, EmissionModel, SolidAngleMode};
use tack_core::corrector::{design, export_profile, verify};
use tack_core::crystal::{classify, relax, GriddedPotential, TrapModel};
use tack_core::field::{self, ScalarField2D};
use tack_core::geometry::{rasterize, ElectrodeRole, GeometryError, MirrorSpec};
use tack_core::pseudo::{needle_scan, solve_trap, TrapSolution};
use tack_core::rays::{best_focus, direction_spread, trace_bundle, Element, Sampling, SamplingKind, SurfaceStack, Vec3};

use crate::config::{ConfigError, CrystalTrap, RunConfig};
use crate::manifest::{ArtifactWriter, Format, RunManifest};
use crate::plot::{line_plot, scatter_plot, Series};
use crate::reproduce;

/// Half-size of the exported pseudopotential map around the minimum, m.
const MAP_HALF_WIDTH: f64 = 1.0e-3;
/// Ray paths logged by `trace`.
const LOGGED_PATHS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    SolveField,
    PseudoMap,
    Secular,
    NeedleScan,
    Crystal,
    Trace,
    DesignCorrector,
    Collect,
    Budget,
    ReproducePaper,
}

impl Command {
    pub fn name(self) -> String {
        self.to_possible_value().map(|v| v.get_name().to_string()).unwrap_or_default()
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{message}")]
    Physics { reason: String, message: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl RunError {
    pub fn kind(&self) -> &'static str {
        match self {
            RunError::Config(_) => "ConfigError",
            RunError::Physics { .. } => "PhysicsError",
            RunError::Io(_) => "IoError",
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            RunError::Config(_) => 2,
            RunError::Physics { .. } => 3,
            RunError::Io(_) => 4,
        }
    }

    /// One line, `key=value` separated, message quoted.
    pub fn machine_line(&self) -> String {
        let message = self.to_string().replace('"', "'").replace('\n', " ");
        match self {
            RunError::Physics { reason, .. } => {
                format!("error kind={} reason={reason} message=\"{message}\"", self.kind())
            }
            _ => format!("error kind={} message=\"{message}\"", self.kind()),
        }
    }
}

/// Wraps a core error, naming it by its variant.
pub fn physics<E: Debug + Display>(e: E) -> RunError {
    let debug = format!("{e:?}");
    let reason = debug
        .split(|c: char| !c.is_alphanumeric() && c != '_')
        .next()
        .unwrap_or("Unknown")
        .to_string();
    RunError::Physics {
        reason,
        message: e.to_string(),
    }
}

fn geometry_error(e: GeometryError) -> RunError {
    RunError::Config(ConfigError::Invalid(e.to_string()))
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub output_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub format: Format,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    /// Human-readable summary, one record per line.
    pub summary: Vec<String>,
    pub manifest: RunManifest,
}

pub fn execute(command: Command, config: &RunConfig, options: &RunOptions) -> Result<Outcome, RunError> {
    let mut config = config.clone();
    if let Some(seed) = options.seed {
        config.seed = seed;
    }
    if let Some(dir) = &options.output_dir {
        config.output_dir = dir.clone();
    }
    let mut out = ArtifactWriter::new(&config.output_dir, options.format)?;
    let summary = match command {
        Command::SolveField => solve_field_cmd(&config, &mut out)?,
        Command::PseudoMap => pseudo_map_cmd(&config, &mut out)?,
        Command::Secular => secular_cmd(&config, &mut out)?,
        Command::NeedleScan => needle_scan_cmd(&config, &mut out)?,
        Command::Crystal => crystal_cmd(&config, &mut out)?,
        Command::Trace => trace_cmd(&config, &mut out)?,
        Command::DesignCorrector => corrector_cmd(&config, &mut out)?,
        Command::Collect => collect_cmd(&config, &mut out)?,
        Command::Budget => budget_cmd(&config, &mut out)?,
        Command::ReproducePaper => reproduce_cmd(&config, &mut out)?,
    };
    let manifest = out.finish(&command.name(), &config.hash())?;
    Ok(Outcome { summary, manifest })
}

struct Csv(String);

impl Csv {
    fn new(header: &str) -> Self {
        Self(format!("{header}\n"))
    }

    fn row(&mut self, cells: fmt::Arguments) {
        let _ = self.0.write_fmt(cells);
        self.0.push('\n');
    }
}

pub fn solve_trap_for(config: &RunConfig) -> Result<TrapSolution, RunError> {
    let geometry = config.geometry()?;
    solve_trap(
        &geometry,
        &config.grid_spec(),
        &config.drive(),
        &config.ion(),
        &config.solve_options(),
    )
    .map_err(physics)
}

fn solve_field_cmd(config: &RunConfig, out: &mut ArtifactWriter) -> Result<Vec<String>, RunError> {
    let geometry = config.geometry()?;
    let mask = Arc::new(rasterize(&geometry, &config.grid_spec()).map_err(geometry_error)?);
    let options = config.solve_options();
    let rf = field::solve_laplace(&mask, &field::rf_unit_values(&mask), &options).map_err(physics)?;
    let mut lines = vec![format!(
        "solve-field nr={} nz={} iterations={} residual={:.3e}",
        mask.nr(),
        mask.nz(),
        rf.report.iterations,
        rf.report.final_residual
    )];
    write_field(out, "rf_unit", &rf.field)?;
    let has_dc = mask.electrodes.iter().any(|e| matches!(e.role, ElectrodeRole::Dc(v) if v != 0.0));
    if has_dc {
        let dc = field::solve_laplace(&mask, &field::dc_values(&mask), &options).map_err(physics)?;
        write_field(out, "dc", &dc.field)?;
        lines.push(format!("solve-field dc iterations={}", dc.report.iterations));
    }
    Ok(lines)
}

fn write_field(out: &mut ArtifactWriter, stem: &str, f: &ScalarField2D) -> Result<(), RunError> {
    let mut dump = Vec::new();
    f.write_dump(&mut dump)?;
    out.file(&format!("{stem}.bin"), &dump)?;
    let mut csv = Vec::new();
    f.write_csv(&mut csv)?;
    out.csv(&format!("{stem}.csv"), &String::from_utf8_lossy(&csv))?;
    let axis: Vec<(f64, f64)> = f.axis_cut().iter().map(|&(z, v)| (z * 1e3, v)).collect();
    out.svg(
        &format!("{stem}_axis.svg"),
        &line_plot("potential on axis, unit drive", "z (mm)", "phi (V)", &[Series { label: stem, points: &axis }]),
    )?;
    Ok(())
}

fn pseudo_map_cmd(config: &RunConfig, out: &mut ArtifactWriter) -> Result<Vec<String>, RunError> {
    let solution = solve_trap_for(config)?;
    let psi = &solution.psi;
    let centre_z = solution
        .analysis
        .as_ref()
        .map(|a| a.minimum_position.1)
        .unwrap_or(config.geometry().ok().and_then(|g| g.needle.map(|n| n.tip_z)).unwrap_or(0.0));
    let mut map = Csv::new("r_mm,z_mm,psi_ev");
    for j in 0..psi.nz() {
        let z = psi.grid.z(j);
        if (z - centre_z).abs() > MAP_HALF_WIDTH {
            continue;
        }
        for i in 0..psi.nr() {
            let r = psi.grid.r(i);
            if r > MAP_HALF_WIDTH {
                break;
            }
            if psi.mask.is_vacuum(i, j) {
                map.row(format_args!("{:.6},{:.6},{:.9e}", r * 1e3, z * 1e3, psi.at(i, j)));
            }
        }
    }
    out.csv("psi_map.csv", &map.0)?;
    let axis: Vec<(f64, f64)> = psi.axis_cut().iter().map(|&(z, v)| (z * 1e3, v)).collect();
    let radial: Vec<(f64, f64)> = psi.radial_cut(centre_z).iter().map(|&(r, v)| (r * 1e3, v)).collect();
    let mut csv = Csv::new("z_mm,psi_ev");
    for (z, v) in &axis {
        csv.row(format_args!("{z:.6},{v:.9e}"));
    }
    out.csv("psi_axis.csv", &csv.0)?;
    let mut csv = Csv::new("r_mm,psi_ev");
    for (r, v) in &radial {
        csv.row(format_args!("{r:.6},{v:.9e}"));
    }
    out.csv("psi_radial.csv", &csv.0)?;
    out.svg(
        "psi_axis.svg",
        &line_plot("pseudopotential along the axis", "z (mm)", "psi (eV)", &[Series { label: "axis", points: &axis }]),
    )?;
    out.svg(
        "psi_radial.svg",
        &line_plot(
            "pseudopotential across the minimum",
            "r (mm)",
            "psi (eV)",
            &[Series { label: "radial", points: &radial }],
        ),
    )?;
    summary_artifacts(&solution, out, "pseudo-map")
}

fn summary_artifacts(solution: &TrapSolution, out: &mut ArtifactWriter, label: &str) -> Result<Vec<String>, RunError> {
    let a = solution.analysis.as_ref().map_err(|e| physics(TrapFailure(e.clone())))?;
    let f = a.secular_frequencies;
    let mut csv = Csv::new("quantity,value,unit");
    csv.row(format_args!("minimum_z,{:.9e},m", a.minimum_position.1));
    if let Some(d) = a.distance_from_tip {
        csv.row(format_args!("distance_from_tip,{d:.9e},m"));
    }
    csv.row(format_args!("depth,{:.9e},eV", a.depth));
    csv.row(format_args!("escape_r,{:.9e},m", a.escape_saddle.0));
    csv.row(format_args!("escape_z,{:.9e},m", a.escape_saddle.1));
    csv.row(format_args!("axial_frequency,{:.9e},Hz", f.axial));
    csv.row(format_args!("radial_frequency,{:.9e},Hz", f.radial));
    csv.row(format_args!("frequency_ratio,{:.9e},1", f.ratio()));
    csv.row(format_args!("solver_iterations,{},1", solution.report.iterations));
    out.csv("trap_summary.csv", &csv.0)?;
    let distance = a
        .distance_from_tip
        .map(|d| format!(" distance_from_tip_mm={:.4}", d * 1e3))
        .unwrap_or_default();
    Ok(vec![format!(
        "{label} minimum_z_mm={:.4}{distance} depth_ev={:.5} axial_hz={:.0} radial_hz={:.0} ratio={:.3}",
        a.minimum_position.1 * 1e3,
        a.depth,
        f.axial,
        f.radial,
        f.ratio()
    )])
}

/// Trap analysis failure carried as text from the solver.
#[derive(Debug)]
struct TrapFailure(String);

impl Display for TrapFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

fn secular_cmd(config: &RunConfig, out: &mut ArtifactWriter) -> Result<Vec<String>, RunError> {
    let solution = solve_trap_for(config)?;
    summary_artifacts(&solution, out, "secular")
}

fn needle_scan_cmd(config: &RunConfig, out: &mut ArtifactWriter) -> Result<Vec<String>, RunError> {
    let geometry = config.geometry()?;
    if geometry.needle.is_none() {
        return Err(ConfigError::Invalid("needle-scan needs a [geometry.needle] section".into()).into());
    }
    let tips = config.scan_tips();
    let table = needle_scan(
        &geometry,
        &config.grid_spec(),
        &tips,
        &config.drive(),
        &config.ion(),
        &config.solve_options(),
    );
    let mut csv = Csv::new("tip_z_mm,minimum_z_mm,distance_mm,depth_ev,status");
    let mut distance = Vec::new();
    let mut depth = Vec::new();
    for row in &table.rows {
        match &row.outcome {
            Ok((z, d)) => {
                csv.row(format_args!(
                    "{:.6},{:.6},{:.6},{:.9e},ok",
                    row.tip_z * 1e3,
                    z * 1e3,
                    (z - row.tip_z) * 1e3,
                    d
                ));
                distance.push((row.tip_z * 1e3, z * 1e3));
                depth.push((row.tip_z * 1e3, *d));
            }
            Err(e) => csv.row(format_args!("{:.6},,,,\"{}\"", row.tip_z * 1e3, e.replace('"', "'"))),
        }
    }
    out.csv("needle_scan.csv", &csv.0)?;
    out.svg(
        "needle_scan.svg",
        &line_plot("minimum height vs tip height", "tip z (mm)", "minimum z (mm)", &[Series { label: "minimum", points: &distance }]),
    )?;
    out.svg(
        "needle_scan_depth.svg",
        &line_plot("trap depth vs tip height", "tip z (mm)", "depth (eV)", &[Series { label: "depth", points: &depth }]),
    )?;
    let fit = table.linear_fit(None);
    let variation = table.depth_variation(None);
    Ok(vec![format!(
        "needle-scan points={} valid={} slope={} r_squared={} depth_variation={}",
        table.rows.len(),
        distance.len(),
        fit.map_or("nan".into(), |f| format!("{:.4}", f.slope)),
        fit.map_or("nan".into(), |f| format!("{:.5}", f.r_squared)),
        variation.map_or("nan".into(), |v| format!("{v:.3}")),
    )])
}

fn crystal_cmd(config: &RunConfig, out: &mut ArtifactWriter) -> Result<Vec<String>, RunError> {
    let ion = config.ion();
    let trap = match config.crystal.trap {
        CrystalTrap::Harmonic => TrapModel::Harmonic {
            axial: config.crystal.axial_frequency * 1e6,
            radial: config.crystal.radial_frequency * 1e6,
        },
        CrystalTrap::Gridded => {
            let solution = solve_trap_for(config)?;
            TrapModel::Gridded(GriddedPotential::new(Arc::new(solution.psi)))
        }
    };
    let crystal = relax(config.crystal.ions, &trap, &ion, &config.relax_options()).map_err(physics)?;
    let class = classify(&crystal);
    let centroid = crystal.positions.iter().fold(Vec3::zeros(), |a, p| a + p) / crystal.positions.len() as f64;
    let mut csv = Csv::new("index,x_um,y_um,z_um");
    let mut xy = Vec::new();
    for (k, p) in crystal.positions.iter().enumerate() {
        let q = (p - centroid) * 1e6;
        csv.row(format_args!("{k},{:.6},{:.6},{:.6}", q.x, q.y, q.z));
        xy.push((q.x, q.y));
    }
    out.csv("crystal.csv", &csv.0)?;
    out.svg(
        "crystal.svg",
        &scatter_plot(
            &format!("{}-ion crystal, x-y projection", crystal.positions.len()),
            "x (um)",
            "y (um)",
            &[Series { label: "ions", points: &xy }],
        ),
    )?;
    let shells: Vec<String> = class.shells.iter().map(|s| s.to_string()).collect();
    Ok(vec![format!(
        "crystal ions={} shells=[{}] planarity={:.4} energy_j={:.6e} max_force_n={:.3e} converged={}",
        crystal.positions.len(),
        shells.join(","),
        class.planarity,
        crystal.energy,
        crystal.max_force,
        crystal.converged
    )])
}

/// Paraxial lateral magnification of the mirror for an on-axis source, `None` at the focus.
pub fn mirror_magnification(mirror: &MirrorSpec, source_z: f64) -> Option<f64> {
    let f = mirror.focus_z();
    let inverse_image = 1.0 / f - 1.0 / source_z;
    if inverse_image.abs() < 1e-12 / f {
        return None;
    }
    Some(-(1.0 / inverse_image) / source_z)
}

/// Mirror, then the viewport if configured.
pub fn uncorrected_stack(config: &RunConfig) -> SurfaceStack {
    let mut elements = vec![Element::Conic(config.mirror().surface())];
    if let Some(w) = config.window() {
        elements.push(Element::Window(w));
    }
    SurfaceStack::new(elements)
}

pub struct UncorrectedImage {
    pub spot: tack_core::rays::SpotDiagram,
    pub paths: Vec<tack_core::rays::RayPath>,
    pub magnification: f64,
    pub direction_spread: f64,
    /// Share of rays within the ion-referred radius, scaled by `|magnification|`.
    pub encircled: f64,
}

pub fn uncorrected_image(config: &RunConfig) -> Result<UncorrectedImage, RunError> {
    let spec = config.corrector_spec();
    let source_z = spec.source_z;
    let magnification = mirror_magnification(&spec.mirror, source_z)
        .ok_or_else(|| ConfigError::Invalid("optics.source_z at the mirror focus has no finite image".into()))?;
    let sampling = Sampling {
        n_rays: config.optics.rays,
        kind: SamplingKind::Fibonacci,
        min_angle: spec.hole_angle(),
        max_angle: spec.rim_angle(),
        offset: 0.0,
    };
    let stack = uncorrected_stack(config);
    let paths = trace_bundle(Vec3::new(0.0, 0.0, source_z), &stack, &sampling);
    let spot = best_focus(&paths, config.optics.focus_search_min * 1e-3, config.optics.focus_search_max * 1e-3)
        .map_err(physics)?;
    let encircled = spot.fraction_within(config.optics.spot_radius * 1e-3 * magnification.abs());
    Ok(UncorrectedImage {
        direction_spread: direction_spread(&paths),
        spot,
        paths,
        magnification,
        encircled,
    })
}

fn trace_cmd(config: &RunConfig, out: &mut ArtifactWriter) -> Result<Vec<String>, RunError> {
    let image = uncorrected_image(config)?;
    let spot = &image.spot;
    let mut csv = Csv::new("x_um,y_um");
    for (x, y) in &spot.hits {
        csv.row(format_args!("{:.6},{:.6}", x * 1e6, y * 1e6));
    }
    out.csv("spot_uncorrected.csv", &csv.0)?;
    let mut log = Csv::new("ray,point,x_mm,y_mm,z_mm");
    for (k, p) in image.paths.iter().take(LOGGED_PATHS).enumerate() {
        let pts = std::iter::once(p.start.origin).chain(p.points.iter().copied());
        for (m, q) in pts.enumerate() {
            log.row(format_args!("{k},{m},{:.9},{:.9},{:.9}", q.x * 1e3, q.y * 1e3, q.z * 1e3));
        }
    }
    out.csv("ray_paths.csv", &log.0)?;
    let pts: Vec<(f64, f64)> = spot.hits.iter().map(|&(x, y)| (x * 1e6, y * 1e6)).collect();
    out.svg(
        "spot_uncorrected.svg",
        &scatter_plot(
            &format!("uncorrected spot at z = {:.3} mm", spot.plane_z * 1e3),
            "x (um)",
            "y (um)",
            &[Series { label: "rays", points: &pts }],
        ),
    )?;
    Ok(vec![format!(
        "trace rays={} best_focus_mm={:.4} rms_um={:.3} magnification={:.3} within_{}um_ion={:.4} direction_spread_deg={:.3}",
        spot.hits.len(),
        spot.plane_z * 1e3,
        spot.rms_radius * 1e6,
        image.magnification,
        config.optics.spot_radius * 1e3,
        image.encircled,
        image.direction_spread.to_degrees()
    )])
}

fn corrector_cmd(config: &RunConfig, out: &mut ArtifactWriter) -> Result<Vec<String>, RunError> {
    let spec = config.corrector_spec();
    let profile = design(&spec).map_err(physics)?;
    let check = verify(&profile, &spec, &config.verify_options()).map_err(physics)?;
    let pitch = config.optics.corrector.export_pitch * 1e-3;
    out.csv("corrector_profile.csv", &export_profile(&profile, pitch).map_err(physics)?)?;
    let mut coef = Csv::new("term,coefficient_si");
    for (k, a) in profile.coefficients.iter().enumerate() {
        coef.row(format_args!("a{},{a:.12e}", 2 * (k + 1)));
    }
    out.csv("corrector_coefficients.csv", &coef.0)?;
    let hits = &check.refocus_spot.hits;
    let (cx, cy) = check.refocus_spot.centroid;
    let mut csv = Csv::new("x_um,y_um");
    for (x, y) in hits {
        csv.row(format_args!("{:.9},{:.9}", (x - cx) * 1e6, (y - cy) * 1e6));
    }
    out.csv("spot_corrected.csv", &csv.0)?;
    let pts: Vec<(f64, f64)> = hits.iter().map(|&(x, y)| ((x - cx) * 1e6, (y - cy) * 1e6)).collect();
    out.svg(
        "spot_corrected.svg",
        &scatter_plot("corrected refocus spot", "x (um)", "y (um)", &[Series { label: "rays", points: &pts }]),
    )?;
    let sag: Vec<(f64, f64)> = profile.samples.iter().map(|s| (s.0 * 1e3, s.1 * 1e3)).collect();
    out.svg(
        "corrector_profile.svg",
        &line_plot("designed surface sag", "r (mm)", "sag (mm)", &[Series { label: "sag", points: &sag }]),
    )?;
    Ok(vec![format!(
        "design-corrector r_max_mm={:.4} fit_residual_um={:.4} direction_spread_rad={:.3e} ion_rms_um={:.4e} diffraction_um={:.4} rays={}/{}",
        profile.r_max() * 1e3,
        profile.fit_residual_rms * 1e6,
        check.direction_spread,
        check.ion_referred_rms * 1e6,
        check.diffraction_scale * 1e6,
        check.rays_surviving,
        check.rays_traced
    )])
}

fn collected(config: &RunConfig, ion_z: f64, tip_offset: Option<f64>, emission: &EmissionModel, mode: SolidAngleMode) -> Result<collect::CollectedFraction, RunError> {
    let geometry = config.geometry()?;
    let needle = geometry.needle.map(|mut n| {
        if let Some(offset) = tip_offset {
            n.tip_z = ion_z - offset;
        }
        n
    });
    solid_angle(ion_z, &geometry.mirror, needle.as_ref(), emission, mode).map_err(physics)
}

fn collect_cmd(config: &RunConfig, out: &mut ArtifactWriter) -> Result<Vec<String>, RunError> {
    let ion_z = config.collection.ion_z * 1e-3;
    let emission = config.emission();
    let f = collected(config, ion_z, None, &emission, config.solid_angle_mode())?;
    let geometry = config.geometry()?;
    let mirror = &geometry.mirror;
    let mut csv = Csv::new("ion_z_mm,geometric_fraction,weighted_fraction");
    let mut curve_g = Vec::new();
    let mut curve_w = Vec::new();
    if let Some(needle) = &geometry.needle {
        let offset = ion_z - needle.tip_z;
        let n = config.collection.curve_points;
        let (lo, hi) = (mirror.focus_z() - 0.5 * needle.travel_range, mirror.focus_z() + 0.5 * needle.travel_range);
        for k in 0..n {
            let z = lo + (hi - lo) * k as f64 / (n - 1) as f64;
            if let Ok(c) = collected(config, z, Some(offset), &emission, SolidAngleMode::Quadrature) {
                csv.row(format_args!("{:.6},{:.9},{:.9}", z * 1e3, c.geometric_fraction, c.weighted_fraction));
                curve_g.push((z * 1e3, c.geometric_fraction));
                curve_w.push((z * 1e3, c.weighted_fraction));
            }
        }
    }
    out.csv("collection_curve.csv", &csv.0)?;
    out.svg(
        "collection_curve.svg",
        &line_plot(
            "collected fraction vs ion height",
            "ion z (mm)",
            "fraction of 4 pi",
            &[Series { label: "geometric", points: &curve_g }, Series { label: "weighted", points: &curve_w }],
        ),
    )?;
    let na = na_equivalent(f.weighted_fraction).map_err(physics)?;
    let mut summary = Csv::new("quantity,value,std_error");
    summary.row(format_args!("geometric_fraction,{:.9},{:.3e}", f.geometric_fraction, f.geometric_std_error));
    summary.row(format_args!("weighted_fraction,{:.9},{:.3e}", f.weighted_fraction, f.weighted_std_error));
    summary.row(format_args!("equivalent_solid_angle_sr,{:.9},", na.solid_angle));
    summary.row(format_args!("equivalent_na,{:.9},", na.numerical_aperture));
    out.csv("collection.csv", &summary.0)?;
    Ok(vec![format!(
        "collect ion_z_mm={} geometric_fraction={:.4} weighted_fraction={:.4} equivalent_na={:.3}",
        config.collection.ion_z, f.geometric_fraction, f.weighted_fraction, na.numerical_aperture
    )])
}

fn budget_cmd(config: &RunConfig, out: &mut ArtifactWriter) -> Result<Vec<String>, RunError> {
    let f = collected(config, config.collection.ion_z * 1e-3, None, &config.emission(), config.solid_angle_mode())?;
    let chain = config.loss_chain();
    let budget = photon_budget(f.geometric_fraction, f.weighted_fraction, &chain, config.collection.excitations)
        .map_err(physics)?;
    let mut csv = Csv::new("stage,transmittance,photons_per_excitation");
    let mut running = f.weighted_fraction;
    csv.row(format_args!("emission_into_mirror,{:.6},{running:.9e}", f.weighted_fraction));
    for e in &chain {
        running *= e.transmittance;
        csv.row(format_args!("{},{:.6},{running:.9e}", e.name, e.transmittance));
    }
    csv.row(format_args!("expected_counts,,{:.6}", budget.expected_counts));
    out.csv("budget.csv", &csv.0)?;
    let na = na_equivalent(f.weighted_fraction).map_err(physics)?;
    Ok(vec![format!(
        "budget weighted_fraction={:.4} throughput={:.5} detected_per_excitation={:.5e} expected_counts={:.1} equivalent_na={:.3}",
        f.weighted_fraction,
        collect::chain_throughput(&chain).map_err(physics)?,
        budget.detected_per_excitation,
        budget.expected_counts,
        na.numerical_aperture
    )])
}

fn reproduce_cmd(config: &RunConfig, out: &mut ArtifactWriter) -> Result<Vec<String>, RunError> {
    let report = reproduce::reproduce(config);
    out.csv("reproduce.csv", &report.csv())?;
    let mut lines = report.table();
    let passed = report.rows.iter().filter(|r| r.pass).count();
    lines.push(format!("reproduce-paper passed={passed} failed={}", report.rows.len() - passed));
    if let Some(e) = report.first_error {
        // the table is still useful when a criterion could not be computed
        for line in &lines {
            println!("{line}");
        }
        return Err(e);
    }
    Ok(lines)
}

#[cfg(test)]
mod tests {
    use super::*;
    use tack_core::pseudo::PseudoError;

    #[test]
    fn errors_map_to_exit_codes() {
        let e = physics(PseudoError::NoInteriorMinimum);
        assert_eq!(e.exit_code(), 3);
        assert!(e.machine_line().starts_with("error kind=PhysicsError reason=NoInteriorMinimum message="));
        let e: RunError = ConfigError::Invalid("x".into()).into();
        assert_eq!(e.exit_code(), 2);
        let e: RunError = io::Error::other("disk").into();
        assert_eq!(e.exit_code(), 4);
        assert_eq!(e.machine_line().lines().count(), 1);
    }

    #[test]
    fn magnification_of_the_default_mirror() {
        let m = mirror_magnification(&MirrorSpec::tack_default(), 2.25e-3).unwrap();
        assert!((m + 8.0).abs() < 1e-9);
        assert!(mirror_magnification(&MirrorSpec::tack_default(), 2.0e-3).is_none());
    }

    #[test]
    fn command_names_are_kebab_case() {
        assert_eq!(Command::DesignCorrector.name(), "design-corrector");
        assert_eq!(Command::ReproducePaper.name(), "reproduce-paper");
    }
}
