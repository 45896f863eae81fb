use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn hjb(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hjb"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

#[test]
fn ou_c4_holds_from_radius_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = hjb(&["check", "--preset", "ou-1d", "--conditions", "C4"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report = read_json(&dir.path().join("check.json"));
    assert_eq!(report["all_hold"], true);
    assert_eq!(report["reports"][0]["R0"].as_f64(), Some(1.0));
    assert!(dir.path().join("margins.csv").exists());
}

#[test]
fn strong_condition_fails_inside_box() {
    let dir = tempfile::tempdir().unwrap();
    let o = hjb(&["check", "--preset", "ou-1d", "--conditions", "C10strong", "--m", "1e6"], dir.path());
    assert_eq!(code(&o), 1);
    let report = read_json(&dir.path().join("check.json"));
    assert_eq!(report["reports"][0]["holds"], false);
    assert!(report["reports"][0]["R0"].is_null());
}

#[test]
fn configuration_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&hjb(&["ergodic", "--preset", "ou-1d", "--grid-n", "240"], dir.path())), 2);
    assert_eq!(code(&hjb(&["ergodic", "--preset", "no-such-preset"], dir.path())), 2);
    assert_eq!(code(&hjb(&["ergodic", "--ladder-factor", "1.5"], dir.path())), 2);
    assert_eq!(code(&hjb(&["check", "--conditions", "C10strong"], dir.path())), 2);
    assert_eq!(code(&hjb(&["parabolic", "--preset", "pucci-ou", "--dim", "2"], dir.path())), 2);
    assert_eq!(code(&hjb(&["ergodic", "--unknown-flag"], dir.path())), 2);
}

#[test]
fn cfl_violation_is_a_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    let o = hjb(&["parabolic", "--preset", "ou-1d", "--dt", "1", "--t-final", "1"], dir.path());
    assert_eq!(code(&o), 1);
    let manifest = read_json(&dir.path().join("manifest.json"));
    assert!(manifest["status"].as_str().unwrap().starts_with("exit 1"));
}

#[test]
fn constant_cost_ergodic_value() {
    let dir = tempfile::tempdir().unwrap();
    let o = hjb(&["ergodic", "--preset", "constant-cost"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = read_json(&dir.path().join("ergodic.json"));
    assert!((r["c"].as_f64().unwrap() + 2.0).abs() < 1e-8);
    assert!(dir.path().join("chi.csv").exists());
    assert!(dir.path().join("ladder.csv").exists());
}

#[test]
fn example_preset_ergodic_emits_corrector() {
    let dir = tempfile::tempdir().unwrap();
    let o = hjb(&["ergodic", "--preset", "paper-example", "--gnuplot"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = read_json(&dir.path().join("ergodic.json"));
    assert!(r["c"].as_f64().unwrap().abs() <= 5e-3);
    assert_eq!(r["ladder"].as_array().unwrap().len(), 7);
    let chi = std::fs::read_to_string(dir.path().join("chi.csv")).unwrap();
    assert!(chi.starts_with("x,value\n"));
    assert_eq!(chi.lines().count(), 1 + 481);
    assert!(dir.path().join("plot.gp").exists());
}

#[test]
fn reference_point_does_not_move_critical_value() {
    let c_at = |x_ref: &str| {
        let dir = tempfile::tempdir().unwrap();
        let o = hjb(&["ergodic", "--preset", "paper-example", "--ladder-len", "9", "--x-ref", x_ref], dir.path());
        assert_eq!(code(&o), 0);
        read_json(&dir.path().join("ergodic.json"))["c"].as_f64().unwrap()
    };
    assert!((c_at("0") - c_at("1.0")).abs() <= 1e-3);
}

#[test]
fn constant_datum_is_stationary() {
    let dir = tempfile::tempdir().unwrap();
    let o = hjb(&["parabolic", "--preset", "ou-1d", "--h0", "constant:3", "--t-final", "5"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let t = read_json(&dir.path().join("tail.json"));
    assert_eq!(t["statistics"]["ubar"].as_f64(), Some(3.0));
    assert_eq!(t["statistics"]["ulow"].as_f64(), Some(3.0));
    let snaps = std::fs::read_to_string(dir.path().join("snapshots.csv")).unwrap();
    assert!(snaps.starts_with("t,x,value\n"));
}

#[test]
fn ou_linear_matches_gaussian_average() {
    let dir = tempfile::tempdir().unwrap();
    let o = hjb(&["parabolic", "--preset", "ou-linear"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let t = read_json(&dir.path().join("tail.json"));
    let gap = t["gaussian_comparison"]["ubar_minus_average"].as_f64().unwrap();
    assert!(gap.abs() <= 1e-2);
    let s = &t["statistics"];
    assert!((s["ubar"].as_f64().unwrap() - s["ulow"].as_f64().unwrap()).abs() <= 1e-3);
}

#[test]
fn pucci_ou_stabilizes_to_a_constant() {
    let dir = tempfile::tempdir().unwrap();
    let o = hjb(&["parabolic", "--preset", "pucci-ou"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let t = read_json(&dir.path().join("tail.json"));
    assert!(t["statistics"]["spread_upper"].as_f64().unwrap() <= 1e-3);
}

#[test]
fn config_file_values_are_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "preset = constant-cost\ngrid-n = 41\nladder-len = 3\n").unwrap();
    let out = dir.path().join("out");
    let o = hjb(&["ergodic", "--config", cfg.to_str().unwrap(), "--ladder-len", "2"], &out);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = read_json(&out.join("ergodic.json"));
    assert_eq!(r["ladder"].as_array().unwrap().len(), 2);
    let m = read_json(&out.join("manifest.json"));
    assert_eq!(m["resolved"]["n_per_dim"], 41);
    assert_eq!(m["config"]["common"]["preset"], "constant-cost");
}

#[test]
fn manifest_and_outputs_are_reproducible() {
    let run = || {
        let dir = tempfile::tempdir().unwrap();
        let o = hjb(&["oracle", "--preset", "ou-1d", "--paths", "256", "--seed", "7", "--x", "0.5"], dir.path());
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        let m = read_json(&dir.path().join("manifest.json"));
        assert_eq!(m["seed"], 7);
        assert_eq!(m["status"], "ok");
        assert!(m["versions"]["hjb-core"].is_string());
        std::fs::read_to_string(dir.path().join("oracle.json")).unwrap()
    };
    assert_eq!(run(), run());
}

#[test]
fn discounted_solve_respects_bound() {
    let dir = tempfile::tempdir().unwrap();
    let o = hjb(&["discounted", "--preset", "strong-drift", "--delta", "0.1"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = read_json(&dir.path().join("discounted.json"));
    assert_eq!(r["bound"]["holds"], true);
}

#[test]
fn coefficient_table_round_trip() {
    use hjb_core::presets::Preset;
    let dir = tempfile::tempdir().unwrap();
    let p = Preset::by_name("constant-cost", 1).unwrap();
    let grid = hjb_core::Grid::new(1, 4.0, 41).unwrap();
    let table = dir.path().join("coef.csv");
    p.problem(&grid).unwrap().coefficients.write_csv(std::fs::File::create(&table).unwrap()).unwrap();
    let out = dir.path().join("out");
    let o = hjb(
        &["ergodic", "--preset", "constant-cost", "--grid-n", "41", "--coefficients", table.to_str().unwrap()],
        &out,
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!((read_json(&out.join("ergodic.json"))["c"].as_f64().unwrap() + 2.0).abs() < 1e-8);
    assert_eq!(code(&hjb(&["check", "--coefficients", table.to_str().unwrap(), "--grid-n", "41"], &out)), 2);
}
