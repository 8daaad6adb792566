use serde_json::Value;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};
use std::time::Instant;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_stochburgers"));
    c.env_remove("STOCHBURGERS_OUT_DIR");
    c
}

fn run(out: &Path, args: &[&str], config: Option<&str>) -> Output {
    let dir = out.to_str().unwrap();
    let mut cmd = bin();
    cmd.args(["--out-dir", dir]).args(args);
    match config {
        Some(text) => {
            let path = out.join(format!("config-{}.toml", args.join("-")));
            std::fs::create_dir_all(out).unwrap();
            std::fs::write(&path, text).unwrap();
            cmd.arg(path).output().unwrap()
        }
        None => cmd.output().unwrap(),
    }
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn files(dir: &Path, suffix: &str) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.to_string_lossy().ends_with(suffix))
        .collect();
    v.sort();
    v
}

fn manifest(dir: &Path) -> Value {
    let m = files(dir, ".manifest.json");
    assert_eq!(m.len(), 1, "{m:?}");
    serde_json::from_str(&std::fs::read_to_string(&m[0]).unwrap()).unwrap()
}

fn csv_columns(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    (header, lines.map(|l| l.split(',').map(String::from).collect()).collect())
}

const SMALL: &str = "[basis]\nn_modes = 16\nn_quad = 32\n[noise]\nk_noise = 8\n";

#[test]
fn deterministic_bump_keeps_mass_column_constant() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!("{SMALL}[stepper]\nt_end = 1.0\nrecord_every = 10\n");
    let o = run(dir.path(), &["simulate"], Some(&cfg));
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let (header, rows) = csv_columns(&files(dir.path(), ".csv")[0]);
    assert_eq!(header.len(), 1 + 16 + 6);
    assert_eq!(&header[..2], ["tau", "u_0"]);
    assert_eq!(&header[17..], ["mass", "sup_norm", "l2k", "h1k", "tail_energy", "guard_tripped"]);
    assert_eq!(rows.len(), 11);
    let mass: Vec<f64> = rows.iter().map(|r| r[17].parse().unwrap()).collect();
    assert!(mass.iter().all(|m| (m - mass[0]).abs() <= 1e-13), "{mass:?}");
    // every float carries 17 significant digits
    assert!(rows[3][1].split('e').next().unwrap().trim_start_matches('-').len() == 18, "{}", rows[3][1]);

    let m = manifest(dir.path());
    assert_eq!(m["config"]["basis"]["nu"], 1.0);
    assert_eq!(m["config"]["stepper"]["scheme"], "deterministic");
    assert_eq!(m["config"]["ensemble"]["n_paths"], 200);
    assert_eq!(m["exit_code"], 0);
    assert!(m["wall_time_s"].as_f64().unwrap() >= 0.0);
    assert!(m["version"].is_string());
    let hash = m["config_hash"].as_str().unwrap();
    assert!(files(dir.path(), ".csv")[0].to_string_lossy().contains(&hash[..16]));
}

#[test]
fn zero_initial_condition_gives_zero_state() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!("{SMALL}[stepper]\nscheme = \"spde_ito\"\nt_end = 0.2\n[ic]\npreset = \"zero\"\n");
    let o = run(dir.path(), &["simulate"], Some(&cfg));
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let (_, rows) = csv_columns(&files(dir.path(), ".csv")[0]);
    assert_eq!(rows.len(), 21);
    for r in rows {
        assert!(r[1..17].iter().all(|c| c == "0"), "{r:?}");
    }
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!("{SMALL}[stepper]\nscheme = \"rde_corrected\"\ndt = 0.005\nepsilon = 0.05\nt_end = 0.5\n[ensemble]\nroot_seed = 42\n");
    let a = dir.path().join("a");
    let o = run(&a, &["simulate"], Some(&cfg));
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let b = dir.path().join("b");
    let o = run(&b, &["simulate"], Some(&cfg));
    assert_eq!(code(&o), 0);
    let (ca, cb) = (files(&a, ".csv"), files(&b, ".csv"));
    assert_eq!(std::fs::read(&ca[0]).unwrap(), std::fs::read(&cb[0]).unwrap());

    let c = dir.path().join("c");
    let m = files(&a, ".manifest.json");
    let o = bin().args(["--out-dir", c.to_str().unwrap(), "rerun"]).arg(&m[0]).output().unwrap();
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(std::fs::read(&ca[0]).unwrap(), std::fs::read(&files(&c, ".csv")[0]).unwrap());

    // a different seed gives a different path
    let d = dir.path().join("d");
    let o = bin().args(["--out-dir", d.to_str().unwrap(), "--seed", "7", "simulate"]).arg(a.join("config-simulate.toml")).output().unwrap();
    assert_eq!(code(&o), 0);
    assert_eq!(manifest(&d)["seed"], 7);
    assert_ne!(std::fs::read(&ca[0]).unwrap(), std::fs::read(&files(&d, ".csv")[0]).unwrap());
}

#[test]
fn rde_step_rule_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["simulate"], Some("[stepper]\nscheme = \"rde_plain\"\ndt = 0.01\nepsilon = 0.05\n"));
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("dt ≤ ε/10"), "{}", stderr(&o));
    assert!(files(dir.path(), ".csv").is_empty());
}

#[test]
fn unknown_key_is_fatal_with_suggestion() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["simulate"], Some("[basis]\nviscocity = 0.5\n[noise]\nk_noise = 80\n"));
    assert_eq!(code(&o), 2);
    let err = stderr(&o);
    assert!(err.contains("unknown key `viscocity`") && err.contains("did you mean `nu`"), "{err}");
    // both problems reported in one go
    assert!(err.contains("k_noise = 80"), "{err}");
}

#[test]
fn contraction_with_unequal_masses_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!("{SMALL}[stepper]\nscheme = \"rde_plain\"\ndt = 0.005\nepsilon = 0.05\n[experiment]\nsecond_mass = 1.5\n");
    let o = run(dir.path(), &["verify", "contraction"], Some(&cfg));
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("equal masses"), "{}", stderr(&o));
}

#[test]
fn compare_limit_needs_epsilons() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["compare-limit"], Some(SMALL));
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("experiment.epsilons"), "{}", stderr(&o));
}

#[test]
fn basis_check_passes_on_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["basis-check"], None);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(stdout.lines().filter(|l| l.starts_with("PASS")).count(), 4, "{stdout}");
    let report: Value = serde_json::from_str(&std::fs::read_to_string(&files(dir.path(), ".report.json")[0]).unwrap()).unwrap();
    assert_eq!(report["passed"], true);
    for c in report["checks"].as_array().unwrap() {
        assert_eq!(c["status"], "PASS");
        assert!(c["statistic"].is_number() && c["threshold"].is_number() && c["samples"].is_number());
    }
    assert_eq!(files(dir.path(), ".summary.txt").len(), 1);
}

#[test]
fn guard_trip_exits_3_and_keeps_partial_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!("{SMALL}[stepper]\nr_max = 0.2\nt_end = 1.0\n[ic]\npreset = \"nwave\"\nmass = 1.0\namp = 0.5\n");
    let o = run(dir.path(), &["simulate"], Some(&cfg));
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    let (_, rows) = csv_columns(&files(dir.path(), ".csv")[0]);
    assert!(!rows.is_empty());
    assert_eq!(rows.last().unwrap().last().unwrap(), "1");
    let m = manifest(dir.path());
    assert_eq!(m["exit_code"], 3);
    assert!(m["failure"].as_str().unwrap().contains("guard"));
}

#[test]
fn zero_noise_gives_zero_distances() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "[basis]\nn_modes = 16\nn_quad = 32\n[noise]\nsigma = 0.0\nk_noise = 8\n[ensemble]\nn_paths = 50\n\
               [experiment]\nepsilons = [0.1, 0.05]\ntau = 0.5\nrepetitions = 1\nmin_pass = 1\n";
    let o = run(dir.path(), &["compare-limit"], Some(cfg));
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let (header, rows) = csv_columns(&files(dir.path(), ".csv")[0]);
    assert_eq!(header, ["pairing", "repetition", "epsilon", "tau", "functional", "ks", "w1", "critical"]);
    assert_eq!(rows.len(), 2 * 5);
    for r in rows {
        assert_eq!((r[5].as_str(), r[6].as_str()), ("0", "0"), "{r:?}");
    }
}

#[test]
fn compare_limit_smoke_run_is_quick() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "[basis]\nn_modes = 32\nn_quad = 64\n[ensemble]\nn_paths = 200\n[experiment]\nepsilons = [0.1, 0.04]\ntau = 1.0\nrepetitions = 1\nmin_pass = 1\n";
    let t = Instant::now();
    let o = run(dir.path(), &["compare-limit"], Some(cfg));
    let secs = t.elapsed().as_secs_f64();
    assert!(code(&o) <= 1, "{}", stderr(&o));
    assert!(secs < 60.0, "{secs}");
    assert!(manifest(dir.path())["wall_time_s"].as_f64().unwrap() < 60.0);
}

#[test]
fn config_from_stdin_and_out_dir_from_env() {
    let dir = tempfile::tempdir().unwrap();
    let mut child = bin()
        .env("STOCHBURGERS_OUT_DIR", dir.path())
        .args(["simulate", "-"])
        .stdin(Stdio::piped())
        .stdout(Stdio::null())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(format!("{SMALL}[stepper]\nt_end = 0.1\n").as_bytes()).unwrap();
    let o = child.wait_with_output().unwrap();
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(manifest(dir.path())["config"]["basis"]["n_modes"], 16);
}

#[test]
fn unknown_suite_is_a_usage_error() {
    let o = bin().args(["verify", "stationarty"]).output().unwrap();
    assert_eq!(code(&o), 2);
}
