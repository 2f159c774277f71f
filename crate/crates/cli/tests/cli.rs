use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use lamb_strip::cross_section::{assemble_forms, build_grid, ProblemConfig};
use lamb_strip::modes_flux::{build_canonical_basis, Field, SymplecticGram};
use lamb_strip::pencil_spectrum::{compute_adjoint_chains, default_window, solve_qep, Branch};
use serde_json::Value;

const BASE: &str = r#"
[material]
lambda = 2.0
mu = 1.0
density = 1.0
[geometry]
half_thickness = 1.0
[frequency]
omega = 1.0
"#;

const CUTOFF: f64 = std::f64::consts::FRAC_PI_2;

fn run(dir: &Path, config: &str, verb: &str) -> Output {
    let cfg = dir.join("run.toml");
    std::fs::write(&cfg, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_lamb-strip"))
        .args(["--config", cfg.to_str().unwrap(), "--out", dir.join("out").to_str().unwrap(), verb])
        .output()
        .unwrap()
}

fn read_json(dir: &Path, name: &str) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("out").join(name)).unwrap()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn with_omega(w: f64) -> String {
    BASE.replace("omega = 1.0", &format!("omega = {w:?}"))
}

#[test]
fn modes_at_unit_frequency() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), BASE, "modes");
    assert!(o.status.success(), "{}", stderr(&o));
    let doc = read_json(dir.path(), "modes.json");
    let recs = doc["frequencies"][0]["records"].as_array().unwrap();
    assert_eq!(recs.len(), 6);
    let count = |c: &str| recs.iter().filter(|r| r["classification"] == c).count();
    assert_eq!((count("outgoing"), count("incoming")), (3, 3));
    for r in recs {
        let flux = r["flux"].as_f64().unwrap();
        let im = r["nu"][1].as_f64().unwrap();
        assert_eq!(flux > 0.0, r["classification"] == "outgoing");
        assert!(im.abs() > 0.1);
    }
}

#[test]
fn cutoff_record_is_a_null_flux_chain() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &with_omega(CUTOFF), "modes");
    assert!(o.status.success(), "{}", stderr(&o));
    let doc = read_json(dir.path(), "modes.json");
    let recs = doc["frequencies"][0]["records"].as_array().unwrap();
    let at_zero: Vec<&Value> = recs.iter().filter(|r| r["nu"][1].as_f64().unwrap().abs() < 1e-8).collect();
    assert!(!at_zero.is_empty());
    for r in at_zero {
        assert_eq!(r["algebraic_multiplicity"], 2);
        assert_eq!(r["classification"], "null-flux");
    }
}

#[test]
fn invalid_material_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &BASE.replace("lambda = 2.0", "lambda = -1.0"), "modes");
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("3λ+2μ"), "{}", stderr(&o));
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &format!("{BASE}\n[window]\ndelta_max = 0.1\n"), "modes");
    assert_eq!(o.status.code(), Some(2));
    let o = run(dir.path(), &BASE.replace("omega = 1.0", "sweep = [2.0, 1.0, 3]"), "dispersion");
    assert_eq!(o.status.code(), Some(2));
    let o = run(dir.path(), &format!("{BASE}\n[halfstrip]\ng_file = \"missing.csv\"\n"), "halfstrip");
    assert_eq!(o.status.code(), Some(2));
    let o = Command::new(env!("CARGO_BIN_EXE_lamb-strip")).arg("modes").output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn single_point_sweep_gives_six_rows() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &BASE.replace("omega = 1.0", "sweep = [1.0, 1.0, 1]"), "dispersion");
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(dir.path().join("out/dispersion.csv")).unwrap();
    assert_eq!(text.lines().count(), 1 + 6);
}

#[test]
fn dispersion_tracks_sh0_and_counts_branches() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &BASE.replace("omega = 1.0", "sweep = [0.5, 2.5, 9]"), "dispersion");
    assert!(o.status.success(), "{}", stderr(&o));
    let mut rdr = csv::Reader::from_path(dir.path().join("out/dispersion.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    let omegas: Vec<f64> = (0..9).map(|k| 0.5 + 0.25 * k as f64).collect();
    // the SH0 track is the one present at the first point with Im nu = +omega
    let first_sh0 = rows
        .iter()
        .find(|r| &r[1] == "SH" && (r[4].parse::<f64>().unwrap() - 0.5).abs() < 1e-6)
        .unwrap()[2]
        .to_string();
    let mut prev_count = 0;
    for &w in &omegas {
        let at: Vec<&csv::StringRecord> = rows.iter().filter(|r| (r[0].parse::<f64>().unwrap() - w).abs() < 1e-12).collect();
        let sh0 = at.iter().find(|r| r[2] == *first_sh0).expect("SH0 track continues");
        assert!((sh0[4].parse::<f64>().unwrap() - w).abs() < 1e-8);
        let sh = at.iter().filter(|r| &r[1] == "SH").count();
        assert!(sh >= prev_count);
        prev_count = sh;
    }
    // one SH cutoff (pi/2) inside the sweep
    assert_eq!(prev_count, 4);
    assert!(dir.path().join("out/dispersion_curves.csv").is_file());
}

#[test]
fn scatter_matrix_at_unit_frequency() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), BASE, "scatter");
    assert!(o.status.success(), "{}", stderr(&o));
    let doc = read_json(dir.path(), "scattering.json");
    assert_eq!(doc["t"], 3);
    assert!(doc["unitarity_residual"].as_f64().unwrap() <= 1e-6);
    let s = doc["s"].as_array().unwrap();
    assert_eq!(s.len(), 3);
    let modes = doc["modes"].as_array().unwrap();
    let sh: Vec<usize> = (0..3).filter(|&k| modes[k]["branch"] == "SH").collect();
    assert_eq!(sh.len(), 1);
    let k = sh[0];
    // incoming SH index is k as well in the mirrored basis
    let z = &s[k][k];
    assert!((z[0].as_f64().unwrap() + 1.0).abs() < 1e-6 && z[1].as_f64().unwrap().abs() < 1e-6, "{z}");
    for j in (0..3).filter(|&j| j != k) {
        let a = &s[k][j];
        assert!(a[0].as_f64().unwrap().hypot(a[1].as_f64().unwrap()) < 1e-6);
    }
}

#[test]
fn scatter_at_cutoff_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &with_omega(CUTOFF), "scatter");
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("Assumption violation"), "{}", stderr(&o));
}

/// Section nodes and the outgoing canonical traces at x3 = 0, computed through the library.
fn outgoing_traces() -> (Vec<f64>, Vec<(Branch, Vec<[f64; 6]>)>) {
    let problem = ProblemConfig::new(2.0, 1.0, 1.0, 1.0, 1.0);
    let grid = build_grid(&problem, lamb_strip::DEFAULT_ELEMENTS, lamb_strip::DEFAULT_ORDER).unwrap();
    let forms = assemble_forms(&problem, &grid);
    let window = default_window(&forms, None).unwrap();
    let modes = compute_adjoint_chains(&forms, &solve_qep(&forms, &window).unwrap()).unwrap();
    let basis = build_canonical_basis(&forms, &SymplecticGram::build(&forms, &modes).unwrap()).unwrap();
    let n = grid.dof_per_component();
    let traces = basis
        .outgoing()
        .iter()
        .map(|u| {
            let v = u.value(0.0);
            let rows = (0..n)
                .map(|a| {
                    let z = [v[a], v[n + a], v[2 * n + a]];
                    [z[0].re, z[0].im, z[1].re, z[1].im, z[2].re, z[2].im]
                })
                .collect();
            (u.branch().unwrap(), rows)
        })
        .collect();
    (grid.nodes.clone(), traces)
}

fn write_g(path: &Path, nodes: &[f64], rows: &[[f64; 6]]) {
    let mut text = String::from("x1,u1_re,u1_im,u2_re,u2_im,u3_re,u3_im\n");
    for (x, r) in nodes.iter().zip(rows) {
        let cols: Vec<String> = std::iter::once(*x).chain(r.iter().copied()).map(|v| format!("{v:?}")).collect();
        text += &cols.join(",");
        text.push('\n');
    }
    std::fs::write(path, text).unwrap();
}

fn halfstrip_config(g: &Path) -> String {
    format!("{BASE}\n[halfstrip]\ng_file = {:?}\n", g.to_str().unwrap())
}

fn amplitudes(dir: &Path) -> Vec<(String, f64, f64)> {
    read_json(dir, "halfstrip.json")["amplitudes"]
        .as_array()
        .unwrap()
        .iter()
        .map(|a| (a["branch"].as_str().unwrap().to_string(), a["a"][0].as_f64().unwrap(), a["a"][1].as_f64().unwrap()))
        .collect()
}

#[test]
fn zero_trace_has_zero_amplitudes() {
    let dir = tempfile::tempdir().unwrap();
    let (nodes, _) = outgoing_traces();
    let g = dir.path().join("g.csv");
    write_g(&g, &nodes, &vec![[0.0; 6]; nodes.len()]);
    let o = run(dir.path(), &halfstrip_config(&g), "halfstrip");
    assert!(o.status.success(), "{}", stderr(&o));
    for (_, re, im) in amplitudes(dir.path()) {
        assert_eq!((re, im), (0.0, 0.0));
    }
}

#[test]
fn sh0_trace_has_unit_amplitude() {
    let dir = tempfile::tempdir().unwrap();
    let (nodes, traces) = outgoing_traces();
    let k = traces.iter().position(|(b, _)| *b == Branch::Sh).unwrap();
    let g = dir.path().join("g.csv");
    write_g(&g, &nodes, &traces[k].1);
    let o = run(dir.path(), &halfstrip_config(&g), "halfstrip");
    assert!(o.status.success(), "{}", stderr(&o));
    let a = amplitudes(dir.path());
    for (j, (_, re, im)) in a.iter().enumerate() {
        let want = if j == k { 1.0 } else { 0.0 };
        assert!((re - want).hypot(*im) < 1e-6, "a_{j} = {re} + {im}i");
    }
    let doc = read_json(dir.path(), "halfstrip.json");
    assert!(doc["samples"].is_null());
}

#[test]
fn real_four_column_trace_is_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let (nodes, _) = outgoing_traces();
    let g = dir.path().join("g.csv");
    let text: String = nodes.iter().map(|x| format!("{x:?},0,1,0\n")).collect();
    std::fs::write(&g, text).unwrap();
    let o = run(dir.path(), &halfstrip_config(&g), "halfstrip");
    assert!(o.status.success(), "{}", stderr(&o));
    let a = amplitudes(dir.path());
    // a u2-only trace excites the SH branch alone
    for (b, re, im) in a {
        if b != "SH" {
            assert!(re.hypot(im) < 1e-8);
        }
    }
}

#[test]
fn wrong_row_count_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let (nodes, _) = outgoing_traces();
    let g = dir.path().join("g.csv");
    write_g(&g, &nodes[1..], &vec![[0.0; 6]; nodes.len() - 1]);
    let o = run(dir.path(), &halfstrip_config(&g), "halfstrip");
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("nodes"), "{}", stderr(&o));
}

#[test]
fn halfstrip_at_cutoff_is_an_assumption_violation() {
    let dir = tempfile::tempdir().unwrap();
    let g = dir.path().join("g.csv");
    std::fs::write(&g, "").unwrap();
    let cfg = halfstrip_config(&g).replace("omega = 1.0", &format!("omega = {CUTOFF:?}"));
    let o = run(dir.path(), &cfg, "halfstrip");
    // the g-file is read after the spectrum, so the malformed file is not reached
    assert!(matches!(o.status.code(), Some(2) | Some(4)), "{}", stderr(&o));
}

#[test]
fn outputs_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let read = |p: PathBuf| std::fs::read(p).unwrap();
    assert!(run(dir.path(), BASE, "modes").status.success());
    let first = read(dir.path().join("out/modes.json"));
    assert!(run(dir.path(), BASE, "modes").status.success());
    assert_eq!(first, read(dir.path().join("out/modes.json")));
    assert!(run(dir.path(), BASE, "scatter").status.success());
    let first = read(dir.path().join("out/scattering.json"));
    assert!(run(dir.path(), BASE, "scatter").status.success());
    assert_eq!(first, read(dir.path().join("out/scattering.json")));
}

#[test]
fn emitted_numbers_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run(dir.path(), BASE, "modes").status.success());
    let doc = read_json(dir.path(), "modes.json");
    let problem = ProblemConfig::new(2.0, 1.0, 1.0, 1.0, 1.0);
    let grid = build_grid(&problem, lamb_strip::DEFAULT_ELEMENTS, lamb_strip::DEFAULT_ORDER).unwrap();
    let forms = assemble_forms(&problem, &grid);
    let modes = solve_qep(&forms, &default_window(&forms, None).unwrap()).unwrap();
    let recs = doc["frequencies"][0]["records"].as_array().unwrap();
    assert_eq!(recs.len(), modes.modes.len());
    for (r, m) in recs.iter().zip(&modes.modes) {
        assert_eq!(r["nu"][0].as_f64().unwrap().to_bits(), m.nu.re.to_bits());
        assert_eq!(r["nu"][1].as_f64().unwrap().to_bits(), m.nu.im.to_bits());
    }
    let text = serde_json::to_string(&doc).unwrap();
    assert_eq!(serde_json::from_str::<Value>(&text).unwrap(), doc);
}

#[test]
fn selfcheck_without_strip_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &format!("{BASE}\n[selfcheck]\nstrip = false\n"), "selfcheck");
    assert!(o.status.success(), "{}\n{}", String::from_utf8_lossy(&o.stdout), stderr(&o));
    let doc = read_json(dir.path(), "selfcheck.json");
    assert_eq!(doc["passed"], true);
    let checks = doc["checks"].as_array().unwrap();
    assert!(checks.iter().any(|c| c["name"] == "strip-asymptotics" && c["status"] == "skipped"));
    assert!(checks.iter().filter(|c| c["status"] == "pass").count() >= 10);
}

#[test]
fn selfcheck_fails_with_a_tiny_tolerance_scale() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, format!("{BASE}\n[selfcheck]\nstrip = false\n")).unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_lamb-strip"))
        .args(["--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap(), "--tolerance-scale", "1e-9", "selfcheck"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(3));
}
