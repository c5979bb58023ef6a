use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tack_cli::manifest::RunManifest;

const COARSE: &str = "grid.spacing=0.05mm";

fn default_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../config/default.cfg")
}

fn tack(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tack"))
        .args(args)
        .arg("--output-dir")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn field(line: &str, key: &str) -> f64 {
    let prefix = format!("{key}=");
    line.split_whitespace()
        .find_map(|w| w.strip_prefix(&prefix))
        .unwrap_or_else(|| panic!("{key} missing from {line}"))
        .parse()
        .unwrap()
}

fn manifest(dir: &Path) -> RunManifest {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn secular_reports_a_trap_and_writes_a_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = default_config();
    let o = tack(&["secular", cfg.to_str().unwrap(), COARSE], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let line = stdout(&o);
    assert!(field(&line, "depth_ev") > 0.0);
    assert!(field(&line, "axial_hz") > field(&line, "radial_hz"));
    let m = manifest(dir.path());
    assert_eq!(m.subcommand, "secular");
    assert_eq!(m.config_hash.len(), 64);
    for f in &m.files {
        assert!(dir.path().join(f).exists(), "{f} listed but absent");
    }
}

#[test]
fn depth_scales_with_amplitude_squared() {
    let cfg = default_config();
    let run = |amplitude: &str| {
        let dir = tempfile::tempdir().unwrap();
        let o = tack(&["secular", cfg.to_str().unwrap(), COARSE, amplitude], dir.path());
        assert!(o.status.success());
        field(&stdout(&o), "depth_ev")
    };
    let ratio = run("drive.amplitude=540") / run("drive.amplitude=270");
    // depth is printed to five decimals
    assert!((ratio - 4.0).abs() < 4e-3, "ratio {ratio}");
}

#[test]
fn collection_from_the_focus() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = default_config();
    let o = tack(&["collect", cfg.to_str().unwrap(), "ion_z=2.0mm", "emission=isotropic"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let f = field(&stdout(&o), "geometric_fraction");
    assert!((f - 0.386).abs() <= 0.005, "{f}");
    assert!(dir.path().join("collection.csv").exists());
}

#[test]
fn invalid_values_exit_with_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = default_config();
    let o = tack(&["secular", cfg.to_str().unwrap(), "drive.frequency=-23"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.starts_with("error kind=ConfigError"), "{err}");
    assert!(!dir.path().join("manifest.json").exists());
}

#[test]
fn missing_geometry_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(default_config()).unwrap();
    let start = text.find("[geometry]").unwrap();
    let end = text.find("[drive]").unwrap();
    let cfg = dir.path().join("broken.cfg");
    fs::write(&cfg, format!("{}{}", &text[..start], &text[end..])).unwrap();
    let o = tack(&["secular", cfg.to_str().unwrap()], &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unknown_override_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = default_config();
    let o = tack(&["secular", cfg.to_str().unwrap(), "drive.phase=3"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn seeded_runs_are_byte_identical() {
    let cfg = default_config();
    let args = [
        "collect",
        cfg.to_str().unwrap(),
        "mode=monte_carlo",
        "samples=20000",
        "excitations=1000",
        "curve_points=3",
    ];
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert!(tack(&args, a.path()).status.success());
    assert!(tack(&args, b.path()).status.success());
    for name in ["collection.csv", "collection_curve.csv"] {
        assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap(), "{name}");
    }
    let c = tempfile::tempdir().unwrap();
    let mut seeded: Vec<&str> = args.to_vec();
    seeded.extend(["--seed", "7"]);
    assert!(tack(&seeded, c.path()).status.success());
    assert_ne!(manifest(a.path()).config_hash, manifest(c.path()).config_hash);
}

#[test]
fn crystal_positions_are_reproducible() {
    let cfg = default_config();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert!(tack(&["crystal", cfg.to_str().unwrap()], a.path()).status.success());
    assert!(tack(&["crystal", cfg.to_str().unwrap()], b.path()).status.success());
    let text = fs::read_to_string(a.path().join("crystal.csv")).unwrap();
    assert_eq!(text, fs::read_to_string(b.path().join("crystal.csv")).unwrap());
    assert_eq!(text.lines().count(), 8);
}

#[test]
fn override_matches_an_edited_file() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(default_config()).unwrap();
    let edited = dir.path().join("edited.cfg");
    fs::write(&edited, text.replace("amplitude = 270.0", "amplitude = 300.0")).unwrap();
    let cfg = default_config();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let oa = tack(&["budget", cfg.to_str().unwrap(), "drive.amplitude=300"], &a);
    let ob = tack(&["budget", edited.to_str().unwrap()], &b);
    assert!(oa.status.success() && ob.status.success());
    assert_eq!(manifest(&a).config_hash, manifest(&b).config_hash);
    assert_eq!(fs::read(a.join("budget.csv")).unwrap(), fs::read(b.join("budget.csv")).unwrap());
}

#[test]
fn csv_format_skips_plots() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = default_config();
    let o = Command::new(env!("CARGO_BIN_EXE_tack"))
        .args(["trace", cfg.to_str().unwrap(), "optics.rays=500", "--format", "csv", "--output-dir"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m = manifest(dir.path());
    assert!(m.files.iter().all(|f| !f.ends_with(".svg")), "{:?}", m.files);
    assert!(m.files.iter().any(|f| f == "spot_uncorrected.csv"));
}
