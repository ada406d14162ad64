use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn nefem(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nefem")).args(args).env("RUST_LOG", "warn").output().expect("run nefem")
}

fn cases() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../cases")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn sample_curve_on_the_cylinder() {
    let curves = cases().join("cylinder/cylinder.curves");
    let out = nefem(&["sample-curve", path_str(&curves), "1", "4"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<Vec<f64>> =
        text.lines().skip(1).map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 5);
    for r in &rows {
        assert!((r[1].hypot(r[2]) - 0.5).abs() < 1e-12);
        assert!((r[3].hypot(r[4]) - 1.0).abs() < 1e-12);
        // normal points into the cylinder
        assert!(r[1] * r[3] + r[2] * r[4] < 0.0);
    }
    assert_eq!(rows[0][0], 0.0);
    assert_eq!(rows[4][0], 1.0);
}

#[test]
fn sample_curve_on_a_line_is_collinear() {
    let dir = tempfile::tempdir().unwrap();
    let curves = dir.path().join("line.curves");
    std::fs::write(&curves, "curve 7 degree 1 nctrl 2\n0 0 1 1\n0 0 1\n2 1 1\n").unwrap();
    let out = nefem(&["sample-curve", path_str(&curves), "7", "6"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for l in text.lines().skip(1) {
        let v: Vec<f64> = l.split(',').map(|s| s.parse().unwrap()).collect();
        assert!((v[2] - 0.5 * v[1]).abs() < 1e-15);
        assert!((v[3].hypot(v[4]) - 1.0).abs() < 1e-14);
    }
    let bad = nefem(&["sample-curve", path_str(&curves), "3", "6"]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn check_mesh_reports_the_wall() {
    let c = cases().join("cylinder");
    let out = nefem(&["check-mesh", path_str(&c.join("study_64.mesh")), path_str(&c.join("cylinder.curves"))]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(out.status.success(), "{text}");
    assert!(text.contains("boundary tag 1: 64 edges"), "{text}");
    assert!(text.contains("nefem elements 64"), "{text}");
    assert!(text.contains("PASS"));
}

#[test]
fn check_mesh_flags_an_off_curve_node() {
    let c = cases().join("cylinder");
    let text = std::fs::read_to_string(c.join("coarse.mesh")).unwrap();
    // first node line after the header is wall node 0 at (-0.5, 0)
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let k = lines.iter().position(|l| !l.starts_with('#') && !l.starts_with("nodes")).unwrap();
    let v: Vec<f64> = lines[k].split_whitespace().map(|s| s.parse().unwrap()).collect();
    lines[k] = format!("{} {}", v[0] - 1e-3, v[1]);
    let dir = tempfile::tempdir().unwrap();
    let mesh = dir.path().join("bad.mesh");
    std::fs::write(&mesh, lines.join("\n")).unwrap();
    let out = nefem(&["check-mesh", path_str(&mesh), path_str(&c.join("cylinder.curves"))]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(out.status.code(), Some(2), "{text}");
    assert!(text.contains("violation") && text.contains("from curve 1"), "{text}");
}

#[test]
fn check_mesh_without_curves_passes() {
    let dir = tempfile::tempdir().unwrap();
    let mesh = dir.path().join("square.mesh");
    nefem::meshgen::rectangle(3, 3, [0.0, 0.0], [1.0, 1.0]).save(&mesh).unwrap();
    let curves = dir.path().join("none.curves");
    std::fs::write(&curves, "# no curves\n").unwrap();
    let out = nefem(&["check-mesh", path_str(&mesh), path_str(&curves)]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(out.status.success(), "{text}");
    assert!(text.contains("nefem elements 0"));
}

fn free_stream_config(dir: &Path, extra: &str) -> PathBuf {
    let c = cases().join("cylinder");
    let cfg = dir.join("fs.cfg");
    let text = format!(
        "mesh = {}\ncurves = {}\nbc.1 = outflow\nbc.2 = inflow\nbc.3 = inflow\ncurve.1 = 1\n\
         freestream.rho = 1\nfreestream.u = 1\nfreestream.e = 1.1179\ngas.reynolds = 2e5\n\
         solver.max_slabs = 5\nsolver.steady_tol = 0\noutput.dir = out\noutput.cadence = 2\n{extra}",
        c.join("coarse.mesh").display(),
        c.join("cylinder.curves").display()
    );
    std::fs::write(&cfg, text).unwrap();
    cfg
}

#[test]
fn free_stream_run_writes_uniform_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = free_stream_config(dir.path(), "");
    let out = nefem(&["run", path_str(&cfg)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let o = dir.path().join("out");
    for f in ["field_00002.vtk", "field_00004.vtk", "field_final.vtk", "forces.csv", "summary.json"] {
        assert!(o.join(f).exists(), "{f} missing");
    }
    let vtk = std::fs::read_to_string(o.join("field_final.vtk")).unwrap();
    let lines: Vec<&str> = vtk.lines().collect();
    let k = lines.iter().position(|l| l.starts_with("SCALARS cp")).unwrap();
    let n: usize = lines.iter().find(|l| l.starts_with("POINTS")).unwrap().split_whitespace().nth(1).unwrap().parse().unwrap();
    for l in &lines[k + 2..k + 2 + n] {
        assert!(l.parse::<f64>().unwrap().abs() < 1e-9, "{l}");
    }
    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(o.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["slabs"], 5);
    let history = std::fs::read_to_string(o.join("forces.csv")).unwrap();
    assert_eq!(history.lines().count(), 6);
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = free_stream_config(dir.path(), "solver.bogus = 1\n");
    let out = nefem(&["run", path_str(&cfg)]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("fs.cfg:15") && err.contains("solver.bogus"), "{err}");
    let missing = nefem(&["run", path_str(&dir.path().join("nope.cfg"))]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn solver_failure_exits_with_three_and_dumps() {
    let dir = tempfile::tempdir().unwrap();
    // a single Newton iteration with a loose Krylov budget cannot converge
    let cfg = free_stream_config(dir.path(), "solver.max_newton = 1\nsolver.dt_retries = 0\nsolver.dt = 0.5\n");
    let text = std::fs::read_to_string(&cfg).unwrap().replace("bc.1 = outflow", "bc.1 = noslip");
    std::fs::write(&cfg, text).unwrap();
    let out = nefem(&["run", path_str(&cfg)]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("out/field_failed.vtk").exists());
}

#[test]
fn thread_variable_is_validated() {
    let out = Command::new(env!("CARGO_BIN_EXE_nefem"))
        .args(["sample-curve", "x", "1", "1"])
        .env("NEFEM_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("NEFEM_THREADS"));
}
