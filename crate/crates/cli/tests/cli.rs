use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_morphoflow"))
}

fn fig1() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/fig1.cfg")
}

fn run(args: &[&str], out: &Path) -> Output {
    bin().args(args).env("MORPHOFLOW_OUT", out).output().expect("spawn morphoflow")
}

fn write_cfg(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("run.cfg");
    fs::write(&path, text).unwrap();
    path
}

fn manifest(dir: &Path) -> morphoflow::io::Manifest {
    morphoflow::io::Manifest::parse(&fs::read_to_string(dir.join("manifest")).unwrap())
}

const SMALL: &str = "mesh.h = 0.15\ntime.T = 2\n";

#[test]
fn shipped_config_matches_the_reference_setup() {
    let c = morphoflow::parse_config(&fig1()).unwrap();
    assert_eq!((c.diffusion.rx, c.diffusion.ry), (0.025, 0.005));
    assert_eq!((c.elastic.lambda, c.elastic.mu), (0.0, 1.0));
    assert_eq!((c.potential.center.x, c.potential.center.y), (-0.5, 0.3));
    assert_eq!(c.mesh.semi_axes, (1.0, 0.6));
    assert_eq!(c.step_count(), 100);
    assert_eq!(c, morphoflow::SimulationConfig { output: c.output.clone(), ..Default::default() });
}

#[test]
fn simulate_fig1_completes_with_positive_jacobians() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("fig1");
    let res = run(&["simulate", fig1().to_str().unwrap()], &out);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let m = manifest(&out);
    assert_eq!(m.get("status"), Some("completed"));
    assert_eq!(m.get("snapshot_count"), Some("101"));
    assert_eq!(m.get("all_jacobians_positive"), Some("true"));
    assert!(out.join("step_0100.csv").exists() && out.join("boundary_0100.txt").exists());
    // every listed checksum matches the file on disk
    let mut checked = 0;
    for (k, v) in &m.entries {
        if let Some(name) = k.strip_prefix("sha256.") {
            assert_eq!(&morphoflow::io::sha256_file(&out.join(name)).unwrap(), v);
            checked += 1;
        }
    }
    assert_eq!(checked, 202);
}

#[test]
fn zero_potential_run_keeps_the_boundary() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(tmp.path(), &format!("{SMALL}potential.height = 0\n"));
    let out = tmp.path().join("out");
    let res = run(&["simulate", cfg.to_str().unwrap()], &out);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let first = fs::read_to_string(out.join("boundary_0000.txt")).unwrap();
    let last = fs::read_to_string(out.join("boundary_0008.txt")).unwrap();
    let parse = |s: &str| -> Vec<f64> { s.split_whitespace().map(|t| t.parse().unwrap()).collect() };
    for (a, b) in parse(&first).iter().zip(parse(&last)) {
        assert!((a - b).abs() <= 1e-12);
    }
}

#[test]
fn simulate_is_byte_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(tmp.path(), SMALL);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(run(&["simulate", cfg.to_str().unwrap()], &a).status.success());
    assert!(run(&["simulate", cfg.to_str().unwrap()], &b).status.success());
    for k in 0..=8 {
        let name = format!("step_{k:04}.csv");
        assert_eq!(fs::read(a.join(&name)).unwrap(), fs::read(b.join(&name)).unwrap(), "{name}");
    }
}

#[test]
fn bad_configs_fail_with_a_machine_readable_line() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(tmp.path(), "elastic.mu = 1\ntime.dt = -0.1\n");
    let res = run(&["simulate", cfg.to_str().unwrap()], tmp.path());
    assert!(!res.status.success());
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(err.starts_with("error kind=config message="), "{err}");
    assert!(err.contains(":2:") && err.contains("time.dt"), "{err}");

    let res = run(&["simulate", "/nonexistent/run.cfg"], tmp.path());
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).starts_with("error kind=config"));
}

#[test]
fn folding_run_is_aborted_with_partial_output() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(tmp.path(), "mesh.h = 0.15\nsolver.omega = 0.001\ntime.dt = 2\ntime.T = 40\n");
    let out = tmp.path().join("out");
    let res = run(&["simulate", cfg.to_str().unwrap()], &out);
    assert!(!res.status.success());
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(err.contains("kind=diffeomorphism_violation"), "{err}");
    let m = manifest(&out);
    assert_eq!(m.get("status"), Some("aborted"));
    assert_eq!(m.get("partial"), Some("true"));
    assert!(out.join("step_0000.csv").exists());
}

#[test]
fn mesh_command_writes_a_readable_mesh() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(tmp.path(), "mesh.h = 0.2\n");
    let res = run(&["mesh", cfg.to_str().unwrap()], tmp.path());
    assert!(res.status.success());
    let mesh = morphoflow::io::read_mesh(&tmp.path().join("mesh.txt")).unwrap();
    assert_eq!(mesh.node_count(), morphoflow::make_ellipse_mesh((1.0, 0.6), 0.2).unwrap().node_count());
}

#[test]
fn gridsearch_finds_the_truth_center() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(tmp.path(), "mesh.h = 0.12\ntime.T = 5\n");
    let out = tmp.path().join("grid");
    let res = run(
        &["gridsearch", cfg.to_str().unwrap(), "--grid", "-0.7:-0.3:3,0.1:0.5:3", "--tprime", "5", "--jobs", "2"],
        &out,
    );
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let csv = fs::read_to_string(out.join("landscape.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("cx,cy,distance"));
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|t| t.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 9);
    let best = rows.iter().min_by(|a, b| a[2].total_cmp(&b[2])).unwrap();
    assert!((best[0] + 0.5).abs() < 1e-12 && (best[1] - 0.3).abs() < 1e-12, "{best:?}");
    assert!(best[2] <= 1e-10);
    assert!(out.join("truth_boundary.txt").exists());
}

#[test]
fn gridsearch_rejects_malformed_grids() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(tmp.path(), SMALL);
    let res = run(&["gridsearch", cfg.to_str().unwrap(), "--grid", "0:1,0:1:2", "--tprime", "1"], tmp.path());
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("kind=usage"));
}
