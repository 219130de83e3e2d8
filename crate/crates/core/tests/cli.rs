mod common;

use msgate::cli::main_with_args;
use std::path::Path;

fn run(dir: &Path, args: &[&str]) -> i32 {
    let mut v: Vec<std::ffi::OsString> = vec!["msgate".into()];
    for a in args {
        v.push(a.replace("@", dir.to_str().unwrap()).into());
    }
    main_with_args(v)
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn body(path: &Path) -> String {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .collect::<Vec<_>>()
        .join("\n")
}

fn setup(dir: &Path) {
    assert_eq!(
        run(dir, &["modes", "--ions", "2", "--com-hz", "2e6", "--tilt-hz", "1.95e6", "--eta", "0.1", "-o", "@/modes.json"]),
        0
    );
    std::fs::write(dir.join("cfg.json"), r#"{"gate_time": 100e-6, "target_angle": 0.39269908169872414}"#).unwrap();
    assert_eq!(
        run(dir, &["design", "--modes", "@/modes.json", "--config", "@/cfg.json", "--out-pulse", "@/half.json", "--out-report", "@/report.json"]),
        0
    );
}

#[test]
fn full_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    setup(d);
    let m = json(&d.join("modes.json"));
    assert_eq!(m["meta"]["tool"], "msgate");
    assert_eq!(m["meta"]["config_hash"].as_str().unwrap().len(), 64);
    let rep = json(&d.join("report.json"));
    assert_eq!(rep["converged"], true);
    assert!(rep["cost_history"].as_array().unwrap().len() > 1);

    assert_eq!(
        run(d, &["arobust", "--modes", "@/modes.json", "--half", "@/half.json", "--out-pulse", "@/ar.json", "--out-solution", "@/sol.json"]),
        0
    );
    let sol = json(&d.join("sol.json"));
    assert_eq!(sol["betas"][0], 1.0);
    assert!(sol["theta_residual_rad"].as_f64().unwrap() < 1e-8);

    assert_eq!(
        run(d, &["diagnose", "--modes", "@/modes.json", "--pulse", "@/ar.json", "--max-order", "2", "-o", "@/diag.json", "--out-csv", "@/diag.csv"]),
        0
    );
    assert!(json(&d.join("diag.json"))["err_alpha"].as_f64().unwrap() < 1e-4);
    assert!(std::fs::read_to_string(d.join("diag.csv")).unwrap().starts_with("# tool=msgate"));

    let scan = ["scan", "--modes", "@/modes.json", "--pulse", "@/ar.json", "--offsets=-1000:250:1000", "--repeats", "5", "-o"];
    assert_eq!(run(d, &[&scan[..], &["@/scan1.csv"]].concat()), 0);
    assert_eq!(run(d, &[&scan[..], &["@/scan2.csv"]].concat()), 0);
    let b1 = body(&d.join("scan1.csv"));
    assert_eq!(b1, body(&d.join("scan2.csv")));
    assert_eq!(b1.lines().count(), 1 + 9);

    std::fs::write(d.join("white.json"), r#"{"kind": "white", "amplitude": 1.0, "cutoff_hz": 1e5}"#).unwrap();
    assert_eq!(
        run(d, &["ff", "--modes", "@/modes.json", "--pulse", "@/ar.json", "--points", "50", "--spectrum", "@/white.json", "-o", "@/ff.csv", "--out-errors", "@/err.json"]),
        0
    );
    assert!(body(&d.join("ff.csv")).starts_with("freq_hz,f_alpha,f_theta"));
    assert!(json(&d.join("err.json"))["err_theta"].as_f64().unwrap() >= 0.0);

    std::fs::write(
        d.join("job.json"),
        format!(
            r#"{{"command": "simulate", "modes": "{0}/modes.json", "pulse": "{0}/ar.json", "n_max": 4, "counts": [1, 5], "out": "{0}/sim.json"}}"#,
            d.display()
        ),
    )
    .unwrap();
    assert_eq!(run(d, &["job", "@/job.json"]), 0);
    let sim = json(&d.join("sim.json"));
    assert!(sim["observables"]["fidelity"].as_f64().unwrap() > 0.999);
    assert_eq!(sim["fidelities"].as_array().unwrap().len(), 2);
}

#[test]
fn exit_codes_and_no_partial_output() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    setup(d);
    // config errors
    assert_eq!(run(d, &["scan", "--modes", "@/modes.json", "--pulse", "@/half.json", "--offsets", "5:-1:1", "-o", "@/x.csv"]), 2);
    assert!(!d.join("x.csv").exists());
    assert_eq!(run(d, &["scan", "--modes", "@/missing.json", "--pulse", "@/half.json", "--offsets", "0", "-o", "@/x.csv"]), 2);
    assert_eq!(run(d, &["modes", "--ions", "2", "--eta", "0.1", "-o", "@/m2.json"]), 2);
    assert!(!d.join("m2.json").exists());
    assert_eq!(run(d, &["bogus"]), 2);
    assert_eq!(run(d, &["--help"]), 0);
    // numerical: duplicate seeds give a singular weighting system
    assert_eq!(
        run(d, &["arobust", "--modes", "@/modes.json", "--seeds", "@/half.json,@/half.json", "--out-pulse", "@/p.json", "--out-solution", "@/s.json"]),
        4
    );
    // infeasible: amplitude limit below what the angle needs
    std::fs::write(d.join("weak.json"), r#"{"gate_time": 100e-6, "target_angle": 0.39269908169872414, "max_amplitude": 1000.0}"#).unwrap();
    assert_eq!(
        run(d, &["design", "--modes", "@/modes.json", "--config", "@/weak.json", "--out-pulse", "@/w.json", "--out-report", "@/wr.json"]),
        3
    );
    assert!(!d.join("w.json").exists() && !d.join("wr.json").exists());
    // config: gate counts that do not return to the Bell state
    assert_eq!(run(d, &["simulate", "--modes", "@/modes.json", "--pulse", "@/half.json", "--counts", "1,2", "-o", "@/sim.json"]), 2);
    // numerical: Fock space too small for the thermal state
    std::fs::write(
        d.join("hot.json"),
        r#"{"heating_rates": [0, 0], "motional_dephasing_t2": [null, null], "carrier_t2": null, "initial_nbar": [2.0, 2.0]}"#,
    )
    .unwrap();
    assert_eq!(
        run(d, &["simulate", "--modes", "@/modes.json", "--pulse", "@/half.json", "--noise", "@/hot.json", "--n-max", "3", "--counts", "1,5", "-o", "@/sim.json"]),
        4
    );
    assert!(!d.join("sim.json").exists());
}
