use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn arrival(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_arrival"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn small_config(dir: &Path, directions: &str, lambda: f64) -> PathBuf {
    let text = format!(
        r#"n_trajectories = 120
directions = [{directions}]
[physical]
detector_plane_l = 8.0
lambda = {lambda}
[grid]
z_max = 40.0
n_points = 2048
[binning]
t_max = 8.0
n_bins = 8
[sweep]
n_alpha = 3
[signaling]
n_rounds = [1, 10]
trials = 40
"#
    );
    let p = dir.join("run.toml");
    fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Exact POVM-generated distribution with a nominal sampling error.
fn write_dist(dir: &Path, name: &str, t_max: f64, masses: &[f64]) {
    let n = masses.len() - 1;
    let w = t_max / n as f64;
    let mut text = String::from("t_lo,t_hi,mass,stderr\n");
    for (k, m) in masses.iter().enumerate() {
        let hi = if k == n { "inf".to_string() } else { ((k + 1) as f64 * w).to_string() };
        text.push_str(&format!("{},{hi},{m},0.01\n", k as f64 * w));
    }
    fs::write(dir.join(name), text).unwrap();
}

fn write_index(dir: &Path, entries: &[([f64; 3], &str)]) {
    let mut text = String::new();
    for (d, f) in entries {
        text.push_str(&format!(
            "[[distribution]]\ndirection = [{}, {}, {}]\nfile = \"{f}\"\nn_samples = 1000\n\n",
            d[0], d[1], d[2]
        ));
    }
    fs::write(dir.join("distributions.toml"), text).unwrap();
}

/// `e0 = (0.4, 0.3, 0.3)`, `e = (0.2, -0.1, -0.1) z`.
fn synthetic_axes(dir: &Path) {
    write_dist(dir, "pz.csv", 2.0, &[0.6, 0.2, 0.2]);
    write_dist(dir, "mz.csv", 2.0, &[0.2, 0.4, 0.4]);
    for f in ["px.csv", "mx.csv", "py.csv", "my.csv"] {
        write_dist(dir, f, 2.0, &[0.4, 0.3, 0.3]);
    }
    write_index(
        dir,
        &[
            ([0.0, 0.0, 1.0], "pz.csv"),
            ([0.0, 0.0, -1.0], "mz.csv"),
            ([1.0, 0.0, 0.0], "px.csv"),
            ([-1.0, 0.0, 0.0], "mx.csv"),
            ([0.0, 1.0, 0.0], "py.csv"),
            ([0.0, -1.0, 0.0], "my.csv"),
        ],
    );
}

#[test]
fn toy_povm_controlled_flip_matches_born_rule() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = configs().join("toy_controlled_flip.toml");
    let out = arrival(&["toy-povm", "--experiment", s(&cfg), "--out", s(tmp.path())]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = fs::read_to_string(tmp.path().join("toy_report.toml")).unwrap();
    assert!(report.contains("\"0\" = { born = 0.360000000000, povm = 0.360000000000 }"));
    assert!(report.contains("decoupled = false"));
    assert!(tmp.path().join("manifest.toml").exists());
}

#[test]
fn toy_povm_decoupled_experiment() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = configs().join("toy_decoupled.toml");
    let out = arrival(&["toy-povm", "--experiment", s(&cfg), "--out", s(tmp.path())]);
    assert!(out.status.success());
    let report = fs::read_to_string(tmp.path().join("toy_report.toml")).unwrap();
    assert!(report.contains("decoupled = true"));
}

#[test]
fn toy_povm_rejects_non_unitary() {
    let tmp = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(configs().join("toy_decoupled.toml"))
        .unwrap()
        .replacen("[0.7071067811865476, 0.0]", "[0.9, 0.0]", 1);
    let p = tmp.path().join("bad.toml");
    fs::write(&p, text).unwrap();
    let out = arrival(&["toy-povm", "--experiment", s(&p), "--out", s(&tmp.path().join("o"))]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("unitary"));
}

#[test]
fn empty_direction_list_is_an_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path(), "", 1.0);
    let out = arrival(&["arrival-dist", "--config", s(&cfg), "--out", s(&tmp.path().join("o"))]);
    assert!(!out.status.success());
    assert!(!tmp.path().join("o").join("manifest.toml").exists());
}

#[test]
fn unknown_config_key_is_an_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path(), "\"+z\"", 1.0);
    let mut text = fs::read_to_string(&cfg).unwrap();
    text.insert_str(0, "typo_key = 3\n");
    fs::write(&cfg, text).unwrap();
    let out = arrival(&["arrival-dist", "--config", s(&cfg), "--out", s(&tmp.path().join("o"))]);
    assert!(!out.status.success());
}

#[test]
fn lambda_zero_curves_coincide_and_reruns_are_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path(), "\"+z\", \"+x\"", 0.0);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for dir in [&a, &b] {
        let out = arrival(&["arrival-dist", "--config", s(&cfg), "--seed", "7", "--workers", "1", "--out", s(dir)]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let z = fs::read_to_string(a.join("dist_pz.csv")).unwrap();
    let x = fs::read_to_string(a.join("dist_px.csv")).unwrap();
    assert_eq!(z, x);
    for f in ["dist_pz.csv", "records_px.csv", "arrival.svg", "manifest.toml"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let manifest = fs::read_to_string(a.join("manifest.toml")).unwrap();
    assert!(manifest.contains("seed = 7"));
    assert!(manifest.contains("input_sha256 = \""));
}

#[test]
fn povm_audit_passes_synthetic_povm_data() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("in");
    fs::create_dir(&input).unwrap();
    synthetic_axes(&input);
    let out_dir = tmp.path().join("o");
    let out = arrival(&["povm-audit", "--input", s(&input), "--out", s(&out_dir)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let verdict: toml::Table = fs::read_to_string(out_dir.join("verdict.toml")).unwrap().parse().unwrap();
    assert_eq!(verdict["any_violation"].as_bool(), Some(false));
    for f in ["fit_report.txt", "fitted_povm.csv", "manifest.toml"] {
        assert!(out_dir.join(f).exists(), "{f}");
    }
}

#[test]
fn povm_audit_missing_direction_fails() {
    let tmp = tempfile::tempdir().unwrap();
    synthetic_axes(tmp.path());
    write_index(tmp.path(), &[([0.0, 0.0, 1.0], "pz.csv"), ([1.0, 0.0, 0.0], "px.csv")]);
    let out = arrival(&["povm-audit", "--input", s(tmp.path()), "--out", s(&tmp.path().join("o"))]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing direction"));
}

#[test]
fn povm_audit_mixed_binning_fails() {
    let tmp = tempfile::tempdir().unwrap();
    synthetic_axes(tmp.path());
    write_dist(tmp.path(), "mx.csv", 3.0, &[0.4, 0.3, 0.3]);
    let out = arrival(&["povm-audit", "--input", s(tmp.path()), "--out", s(&tmp.path().join("o"))]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("binning"));
}

#[test]
fn ensemble_commands_write_their_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path(), "\"+z\", \"-z\", \"+x\", \"-x\"", 1.0);
    let audit = tmp.path().join("audit");
    let out = arrival(&["povm-audit", "--config", s(&cfg), "--out", s(&audit)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(audit.join("verdict.toml").exists());

    let sig = tmp.path().join("sig");
    let out = arrival(&["signaling", "--config", s(&cfg), "--input", s(&audit), "--out", s(&sig)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(sig.join("accuracy.csv")).unwrap();
    assert!(csv.starts_with("n_rounds,trials,accuracy,binomial_error\n"));
    assert_eq!(csv.lines().count(), 3);
    assert!(sig.join("accuracy_povm_control.csv").exists());

    let mva = tmp.path().join("mva");
    let out = arrival(&["mean-vs-alpha", "--config", s(&cfg), "--out", s(&mva)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(fs::read_to_string(mva.join("mean_vs_alpha.csv")).unwrap().lines().count(), 4);
    assert!(fs::read_to_string(mva.join("mean_vs_alpha.svg")).unwrap().starts_with("<svg"));
}

#[test]
fn checked_in_configs_parse() {
    for f in ["arrival_dist", "mean_vs_alpha", "povm_audit", "signaling", "stochastic"] {
        let text = fs::read_to_string(configs().join(format!("{f}.toml"))).unwrap();
        let t: toml::Table = text.parse().unwrap_or_else(|e| panic!("{f}: {e}"));
        assert!(t.contains_key("n_trajectories"), "{f}");
    }
}
