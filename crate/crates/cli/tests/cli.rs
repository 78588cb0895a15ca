use spiral_lattice::rd_fhn::InhomogeneityCoeffs;
use spiral_lattice_cli::commands::repro_config;
use spiral_lattice_cli::{presets, run_cli, EXIT_NUMERICAL, EXIT_OK, EXIT_USAGE, EXIT_VALIDATION};
use std::path::{Path, PathBuf};
use std::process::Command;

const SIMDATA: &str = "\
mode = predict
[system]
v = 3.141592653589793, 1.4142135623730951
omega = 0
epsilon = 0.1
[spec]
fphi = 2*sin(4p) + cos(7a+6b) + cos(6a-7b)
fpsi1 = sin(5p)*sin(a+b) + cos(5p)*sin(a-b)
fpsi2 = cos(2p)*cos(2a+3b) - cos(2p)*cos(3a-2b)
";

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn cli(args: &[&str]) -> i32 {
    run_cli(std::iter::once("spiral-lattice").chain(args.iter().copied()))
}

fn read_json(p: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn bundled_presets_validate() {
    let dir = tempfile::tempdir().unwrap();
    for name in presets::names() {
        let p = write(dir.path(), &format!("{name}.cfg"), presets::lookup(name).unwrap());
        assert_eq!(cli(&["validate", p.to_str().unwrap()]), EXIT_OK, "{name}");
    }
}

#[test]
fn exp1_preset_uses_firstexp() {
    let cfg = repro_config("exp1").unwrap();
    let pde = cfg.pde.unwrap();
    assert_eq!(pde.coeffs, InhomogeneityCoeffs::FIRSTEXP);
    assert_eq!(pde.coeffs.a1, 0.028);
    assert_eq!(pde.coeffs.c2, 0.01);
    assert_eq!(repro_config("exp2").unwrap().pde.unwrap().coeffs, InhomogeneityCoeffs::SECONDEXP);
    assert_eq!(repro_config("exp3").unwrap().pde.unwrap().coeffs, InhomogeneityCoeffs::THIRDEXP);
    let exp2 = repro_config("exp2").unwrap().pde.unwrap();
    assert_eq!(exp2.conjugates + exp2.extra_spawns.len(), 5);
    assert_eq!(repro_config("exp3").unwrap().pde.unwrap().conjugates, 4);
}

#[test]
fn validate_simdata_and_reject_asymmetric() {
    let dir = tempfile::tempdir().unwrap();
    let ok = write(dir.path(), "ok.cfg", SIMDATA);
    assert_eq!(cli(&["validate", ok.to_str().unwrap()]), EXIT_OK);
    let bad = write(dir.path(), "bad.cfg", &SIMDATA.replace("fpsi1 = ", "fpsi1 = cos(a) + "));
    assert_eq!(cli(&["validate", bad.to_str().unwrap()]), EXIT_VALIDATION);
}

#[test]
fn config_errors_are_validation_failures() {
    let dir = tempfile::tempdir().unwrap();
    for (name, text) in [
        ("neg.cfg", SIMDATA.replace("omega = 0", "omega = -1")),
        ("typo.cfg", SIMDATA.replace("epsilon", "epsilom")),
        ("missing.cfg", SIMDATA.replace("epsilon = 0.1\n", "")),
    ] {
        let p = write(dir.path(), name, &text);
        assert_eq!(cli(&["validate", p.to_str().unwrap()]), EXIT_VALIDATION, "{name}");
    }
}

#[test]
fn usage_errors() {
    assert_eq!(cli(&["repro", "nope"]), EXIT_USAGE);
    assert_eq!(cli(&["frobnicate"]), EXIT_USAGE);
    assert_eq!(cli(&["validate", "/definitely/not/here.cfg"]), EXIT_USAGE);
    assert_eq!(cli(&["preset", "nope"]), EXIT_USAGE);
}

#[test]
fn predict_euclidean_case() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!("{}[output]\nprefix = eu\n", SIMDATA.replace("epsilon = 0.1", "epsilon = 0"));
    let p = write(dir.path(), "eu.cfg", &text);
    let out = dir.path().to_str().unwrap();
    assert_eq!(cli(&["predict", p.to_str().unwrap(), "--out-dir", out]), EXIT_OK);
    let v = read_json(&dir.path().join("eu_prediction.json"));
    assert_eq!(v["mode"], "none");
}

#[test]
fn predict_and_average_simdata() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "sim.cfg", SIMDATA);
    let out = dir.path().to_str().unwrap();
    assert_eq!(cli(&["predict", p.to_str().unwrap(), "--out-dir", out]), EXIT_OK);
    let v = read_json(&dir.path().join("predict_prediction.json"));
    assert_eq!(v["mode"], "travelling");
    let stable: Vec<f64> = v["travelling"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|t| t["stable"] == true)
        .map(|t| t["phi_star"].as_f64().unwrap())
        .collect();
    assert!(stable.iter().any(|p| (p - std::f64::consts::FRAC_PI_4).abs() < 1e-9));
    assert_eq!(cli(&["average", p.to_str().unwrap(), "--out-dir", out]), EXIT_OK);
    let a = read_json(&dir.path().join("predict_average.json"));
    assert_eq!(a["kind"], "m_function");
}

#[test]
fn ode_run_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        assert_eq!(cli(&["repro", "torus", "--t-end", "20", "--out-dir", d.path().to_str().unwrap()]), EXIT_OK);
    }
    let read = |d: &tempfile::TempDir| std::fs::read(d.path().join("torus_trajectory.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
    let diag = read_json(&a.path().join("torus_diagnostic.json"));
    assert!(diag["conjugacy_residual"].as_f64().unwrap() < 1e-6);
    assert_eq!(diag["epsilon_sweep"].as_array().unwrap().len(), 3);
}

const SMALL_PDE: &str = "\
mode = pde
[pde]
n = 50
coeffs = secondexp
dt = 0.01
t_end = 30
sample_every = 1
settle_time = 20
spawn = 1, -1
conjugates = 2
[output]
prefix = small
";

#[test]
fn pde_run_is_deterministic_and_conjugate() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let cfg = write(d.path(), "small.cfg", SMALL_PDE);
        let code = cli(&["pde-run", cfg.to_str().unwrap(), "--out-dir", d.path().to_str().unwrap()]);
        assert!(code == EXIT_OK || code == EXIT_NUMERICAL, "{code}");
    }
    for f in ["small_ic1_tips.csv", "small_ic2_tips.csv"] {
        let x = std::fs::read(a.path().join(f)).unwrap();
        assert!(!x.is_empty());
        assert_eq!(x, std::fs::read(b.path().join(f)).unwrap());
    }
    let summary = read_json(&a.path().join("small_summary.json"));
    assert_eq!(summary["runs"].as_array().unwrap().len(), 2);
    // Quarter-turn images of one state trace quarter-turned tip paths.
    let tips = |f: &str| {
        let text = std::fs::read_to_string(a.path().join(f)).unwrap();
        text.lines()
            .skip(1)
            .map(|l| l.split(',').map(|x| x.parse::<f64>().unwrap()).collect::<Vec<_>>())
            .collect::<Vec<_>>()
    };
    let (t1, t2) = (tips("small_ic1_tips.csv"), tips("small_ic2_tips.csv"));
    assert_eq!(t1.len(), t2.len());
    for (p, q) in t1.iter().zip(&t2) {
        assert!((q[1] + p[2]).abs() < 1e-6 && (q[2] - p[1]).abs() < 1e-6, "{p:?} {q:?}");
    }
}

#[test]
fn diverging_pde_is_a_numerical_failure() {
    let d = tempfile::tempdir().unwrap();
    let text = "mode = pde\n[pde]\nn = 50\na2 = 1000\nt_end = 5\nsettle_time = 0\n";
    let cfg = write(d.path(), "div.cfg", text);
    assert_eq!(cli(&["pde-run", cfg.to_str().unwrap(), "--out-dir", d.path().to_str().unwrap()]), EXIT_NUMERICAL);
}

#[test]
fn tip_analyze_classifies_a_circle() {
    let d = tempfile::tempdir().unwrap();
    let mut csv = String::from("t,x,y\n");
    for k in 0..2000 {
        let t = 0.1 * k as f64;
        let a = std::f64::consts::TAU * t / 10.0;
        csv.push_str(&format!("{t},{},{}\n", 12.566370614359172 + 0.8 * a.cos(), 0.8 * a.sin() + 0.3));
    }
    let tips = write(d.path(), "tips.csv", &csv);
    let out = d.path().join("c.json");
    assert_eq!(
        cli(&["tip-analyze", tips.to_str().unwrap(), "--out", out.to_str().unwrap()]),
        EXIT_OK
    );
    let v = read_json(&out);
    assert_eq!(v["kind"], "anchored_rotation");
    assert!((v["lattice_distance"].as_f64().unwrap() - 0.3).abs() < 1e-6);
    assert!((v["primary_period"].as_f64().unwrap() - 10.0).abs() < 0.05);

    let broken = write(d.path(), "broken.csv", "t,x,y\n0,1\n");
    assert_eq!(cli(&["tip-analyze", broken.to_str().unwrap()]), EXIT_VALIDATION);
}

#[test]
fn sweep_reports_the_guard() {
    let d = tempfile::tempdir().unwrap();
    let text = "mode = predict\n[system]\nv = 1, 0\nomega = 1\nepsilon = 0.1\n[spec]\nfphi = sin(4p)\nfpsi1 = -cos(p)*sin(a) - sin(p)*sin(b)\nfpsi2 = sin(p)*sin(a) - cos(p)*sin(b)\n";
    let cfg = write(d.path(), "s.cfg", text);
    assert_eq!(
        cli(&["sweep", cfg.to_str().unwrap(), "--omega-min", "0.1", "--omega-max", "1", "--steps", "4"]),
        EXIT_OK
    );
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_spiral-lattice");
    let code = |args: &[&str]| Command::new(bin).args(args).output().unwrap().status.code();
    assert_eq!(code(&["preset"]), Some(EXIT_OK));
    assert_eq!(code(&["repro", "nope"]), Some(EXIT_USAGE));
    let d = tempfile::tempdir().unwrap();
    let p = write(d.path(), "neg.cfg", &SIMDATA.replace("omega = 0", "omega = -1"));
    assert_eq!(code(&["validate", p.to_str().unwrap()]), Some(EXIT_VALIDATION));
}
