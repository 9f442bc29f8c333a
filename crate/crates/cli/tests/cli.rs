use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use qhd::scenario::ScenarioConfig;
use serde_json::Value;

fn qhd() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_qhd"));
    c.env_remove("QHD_OUTPUT_DIR");
    c
}

fn scenarios() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

const BOHM: &str = r#"name = "small"

[grid]
n_points = 64
length = 20.0

[physics]
hbar_kin = 1.0

[potential]
type = "harmonic"
omega = 1.0

[initial_condition]
type = "harmonic_ground_state"

[integration]
dt = 0.001
t_end = 0.05
sample_every = 10
"#;

fn kernel_config(n1: f64, d: f64, ell: f64) -> String {
    format!(
        r#"name = "kernel"

[grid]
n_points = 64
length = 20.0

[physics]
kt_over_m = 0.25

[kernel]
type = "hard_core_exponential"
n1 = {n1:e}
d = {d:e}
ell = {ell:e}

[potential]
type = "harmonic"
omega = 1.0

[initial_condition]
type = "harmonic_ground_state"

[integration]
dt = 0.001
t_end = 0.01
"#
    )
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

#[test]
fn nonpositive_dt_is_a_config_error_on_its_line() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "bad.toml", &BOHM.replace("dt = 0.001", "dt = 0.0"));
    let o = qhd().arg("run").arg(&cfg).arg("--output-dir").arg(tmp.path()).output().unwrap();
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let err = stderr(&o);
    assert!(err.contains("integration.dt"), "{err}");
    assert!(err.contains("bad.toml:18:"), "{err}");
    assert!(!tmp.path().join("small").exists());
}

#[test]
fn dt_override_is_validated_too() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "ok.toml", BOHM);
    let o = qhd()
        .arg("run")
        .arg(&cfg)
        .args(["--dt", "-1", "--quiet"])
        .arg("--output-dir")
        .arg(tmp.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("integration.dt"));
}

#[test]
fn parse_errors_point_at_the_line() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "typo.toml", &BOHM.replace("length = 20.0", "lenght = 20.0"));
    let o = qhd().arg("run").arg(&cfg).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("typo.toml:5:"), "{err}");
    assert!(err.contains("lenght"), "{err}");
}

#[test]
fn repulsive_kernel_is_a_runtime_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "k.toml", &kernel_config(0.0, 1e-5, 0.01));
    let o = qhd().arg("moments").arg(&cfg).arg("--output-dir").arg(tmp.path()).output().unwrap();
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("not net-attractive"), "{}", stderr(&o));
}

#[test]
fn moments_table_matches_closed_form() {
    let tmp = tempfile::tempdir().unwrap();
    // d / ell = 1e-3, with n1 chosen so that a is of order one.
    let cfg = write(tmp.path(), "k.toml", &kernel_config(3.3e7, 1e-5, 0.01));
    let o = qhd().arg("moments").arg(&cfg).arg("--output-dir").arg(tmp.path()).arg("-q").output().unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(o.stdout.is_empty());
    let dir = tmp.path().join("kernel");
    let m = read_json(&dir.join("moments.json"));
    assert!(m["n0"].as_f64().unwrap() > 0.0);
    assert!(m["a_squared"].as_f64().unwrap() > 0.0);
    let rows = m["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 4);
    let c2 = &rows[0];
    assert!((c2["c2n_quadrature"].as_f64().unwrap() - 1.0).abs() <= 1e-10);
    assert!((c2["c2n_closed_form"].as_f64().unwrap() - 1.0).abs() <= 1e-10);
    assert!(c2["relative_deviation"].as_f64().unwrap() <= 1e-10);
    assert!(rows[1]["relative_deviation"].as_f64().unwrap() <= 1e-2);

    let csv = fs::read_to_string(dir.join("moments.csv")).unwrap();
    assert!(csv.starts_with("n,n0,a_squared,ell_over_a,c2n_quadrature,c2n_closed_form,relative_deviation\n"));
    assert_eq!(csv.lines().count(), 5);
}

#[test]
fn report_lists_only_existing_files() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "s.toml", BOHM);
    let o = qhd().arg("compare").arg(&cfg).arg("--output-dir").arg(tmp.path()).output().unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let dir = tmp.path().join("small");
    let report = read_json(&dir.join("metrics.json"));
    let files = report["files"].as_array().unwrap();
    for f in files {
        assert!(dir.join(f.as_str().unwrap()).is_file(), "{f}");
    }
    // 50 steps sampled every 10: six snapshots per solver.
    assert_eq!(fs::read_dir(dir.join("snapshots")).unwrap().count(), 7);
    assert_eq!(fs::read_dir(dir.join("oracle")).unwrap().count(), 7);
    let snap = fs::read_to_string(dir.join("snapshots/snapshot_00000.csv")).unwrap();
    assert!(snap.starts_with("x,rho,S\n"));
    assert_eq!(snap.lines().count(), 65);
    let mon = fs::read_to_string(dir.join("monitors.csv")).unwrap();
    assert!(mon.starts_with("time,mass,energy,min_density\n"));
    assert_eq!(report["comparison"]["series"].as_array().unwrap().len(), 6);
    assert_eq!(report["pipelines"], serde_json::json!(["hydro", "oracle"]));
}

#[test]
fn formats_select_the_files_written() {
    let tmp = tempfile::tempdir().unwrap();
    let text = format!("{BOHM}\n[outputs]\nformats = [\"json\"]\n");
    let cfg = write(tmp.path(), "s.toml", &text);
    let o = qhd().arg("run").arg(&cfg).arg("--output-dir").arg(tmp.path()).output().unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let files: Vec<_> = tree(&tmp.path().join("small")).into_keys().collect();
    assert_eq!(files, vec![PathBuf::from("metrics.json")]);
}

#[test]
fn output_root_comes_from_the_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "s.toml", BOHM);
    let root = tmp.path().join("env-root");
    let o = qhd().arg("run").arg(&cfg).env("QHD_OUTPUT_DIR", &root).output().unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(root.join("small/metrics.json").is_file());
}

#[test]
fn identical_configs_give_identical_files() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = scenarios().join("free_gaussian.toml");
    let run = |sub: &str| {
        let out = tmp.path().join(sub);
        let o =
            qhd().arg("run").arg(&cfg).args(["--t-end", "0.2", "-q"]).arg("--output-dir").arg(&out).output().unwrap();
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        tree(&out)
    };
    let a = run("a");
    let b = run("b");
    assert!(a.len() > 5);
    assert_eq!(a.keys().collect::<Vec<_>>(), b.keys().collect::<Vec<_>>());
    for (k, v) in &a {
        assert!(v == &b[k], "{} differs between runs", k.display());
    }
}

#[test]
fn shipped_scenarios_round_trip() {
    for e in fs::read_dir(scenarios()).unwrap() {
        let p = e.unwrap().path();
        let text = fs::read_to_string(&p).unwrap();
        let cfg: ScenarioConfig = toml::from_str(&text).unwrap();
        cfg.validate().unwrap_or_else(|e| panic!("{}: {e}", p.display()));
        let again: ScenarioConfig = toml::from_str(&toml::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(cfg, again, "{}", p.display());
    }
}

#[test]
fn shipped_scenarios_run_in_parallel() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cmd = qhd();
    cmd.arg("run");
    for name in ["free_gaussian", "harmonic_ground", "coherent_state", "kernel_hierarchy"] {
        cmd.arg(scenarios().join(format!("{name}.toml")));
    }
    let o = cmd.arg("--output-dir").arg(tmp.path()).output().unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(String::from_utf8_lossy(&o.stdout).matches("  -> ").count(), 4);

    let free = read_json(&tmp.path().join("free_gaussian/metrics.json"));
    assert!(free["comparison"]["worst_rho_l2_rel"].as_f64().unwrap() <= 1e-3);
    for row in free["width"].as_array().unwrap() {
        let s = row["sigma"].as_f64().unwrap();
        let exact = row["sigma_analytic"].as_f64().unwrap();
        assert!((s - exact).abs() <= 1e-3 * exact, "{row}");
    }

    let ground = read_json(&tmp.path().join("harmonic_ground/metrics.json"));
    assert!(ground["summary"]["density_drift"].as_f64().unwrap() <= 1e-6);
    assert!(ground.get("comparison").is_none());

    let kh = read_json(&tmp.path().join("kernel_hierarchy/metrics.json"));
    assert_eq!(kh["moments"]["rows"].as_array().unwrap().len(), 4);
    assert!(tmp.path().join("kernel_hierarchy/moments.csv").is_file());
}

#[test]
fn colliding_output_directories_are_refused() {
    let tmp = tempfile::tempdir().unwrap();
    let a = write(tmp.path(), "a.toml", BOHM);
    let b = write(tmp.path(), "b.toml", BOHM);
    let o = qhd().arg("run").arg(&a).arg(&b).arg("--output-dir").arg(tmp.path()).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("b.toml:1: writes to"), "{}", stderr(&o));
}
