use std::fs;
use std::process::{Command, Output};

use serde_json::Value;

fn gasflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gasflow")).args(args).output().expect("binary runs")
}

fn stdout_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).expect("stdout is JSON")
}

#[test]
fn roots_on_stdout() {
    let o = gasflow(&["field", "roots", "--n", "2"]);
    assert!(o.status.success());
    assert_eq!(String::from_utf8_lossy(&o.stdout).trim(), r#"{"roots":[1,2]}"#);
    let o = gasflow(&["field", "roots", "--n", "3"]);
    assert_eq!(String::from_utf8_lossy(&o.stdout).trim(), r#"{"roots":[1,2,3]}"#);
}

#[test]
fn equilibrium_seed_gives_constant_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let o = gasflow(&[
        "ode",
        "run",
        "--system",
        "const-div",
        "--a0",
        "0",
        "--gtilde0",
        "0",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("t,a,Gtilde"));
    let mut rows = 0;
    for l in lines {
        let cells: Vec<&str> = l.split(',').collect();
        assert_eq!(&cells[1..], &["0", "0"]);
        rows += 1;
    }
    assert!(rows > 1);
}

#[test]
fn asymptotics_report_matches_rates() {
    let o = gasflow(&[
        "ode",
        "asymptotics",
        "--system",
        "2d-special",
        "--mu",
        "0.3",
        "--l",
        "0",
        "--gamma",
        "1.4",
        "--t-end",
        "1e4",
    ]);
    assert!(o.status.success());
    let v = stdout_json(&o);
    let fits = v["fits"].as_array().unwrap();
    let alpha = fits.iter().find(|f| f["component"] == "alpha" && f["compared"] == "prefactor").unwrap();
    assert!((alpha["predicted"].as_f64().unwrap() - 1.0 / 2.8).abs() < 1e-15);
    assert_eq!(alpha["fixed_exponent"].as_f64(), Some(-1.0));
    assert!(fits.iter().filter(|f| !f["compared"].is_null()).all(|f| f["within_tolerance"] == true));
}

#[test]
fn dry_run_echoes_config_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let o = gasflow(&["solution", "residual", "--dry-run", "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    let v = stdout_json(&o);
    assert_eq!(v["dry_run"], true);
    assert_eq!(v["config"]["grid"]["nodes_per_axis"], 9);
    assert!(!out.exists());
}

#[test]
fn every_subcommand_accepts_dry_run() {
    let cases: [&[&str]; 15] = [
        &["ode", "run", "--system", "3d"],
        &["ode", "phase", "--system", "dry-friction"],
        &["ode", "equilibria", "--system", "aero-friction"],
        &["ode", "asymptotics", "--system", "3d"],
        &["field", "check", "--field", r#"{"family":"identity-r"}"#],
        &["field", "sphere"],
        &["field", "characteristics", "--f", r#"{"kind":"tanh","amplitude":1,"scale":1}"#],
        &["field", "roots", "--n", "3"],
        &["solution", "assemble"],
        &["solution", "residual"],
        &["verify", "functionals"],
        &["verify", "identities"],
        &["verify", "lemma51", "--n", "3"],
        &["verify", "corollary"],
        &["verify", "singularity", "--f0", "1", "--lambda-plus", "1", "--mass", "1", "--energy", "1"],
    ];
    for args in cases {
        let mut a = args.to_vec();
        a.push("--dry-run");
        let o = gasflow(&a);
        assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
        assert_eq!(stdout_json(&o)["dry_run"], true, "{args:?}");
    }
}

#[test]
fn unknown_config_key_exits_2_with_field_name() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    fs::write(&cfg, "{\n  \"t_end\": 5,\n  \"tolerance\": 1e-8\n}\n").unwrap();
    let o = gasflow(&["ode", "run", "--system", "2d-special", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("tolerance") && err.contains("line 3"), "{err}");
}

#[test]
fn invalid_values_exit_2() {
    for args in [
        &["ode", "run", "--system", "2d-special", "--gamma", "0.5"][..],
        &["ode", "run", "--system", "2d-special", "--t-end", "-1"][..],
        &["verify", "lemma51", "--n", "4"][..],
        &["field", "roots", "--n", "7"][..],
        &["ode", "run", "--system", "5d"][..],
    ] {
        let o = gasflow(args);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn collapse_exits_3_with_event_file() {
    let dir = tempfile::tempdir().unwrap();
    // strongly converging flow without pressure support
    let o = gasflow(&[
        "ode",
        "run",
        "--system",
        "2d-special",
        "--k",
        "0",
        "--state",
        "1,0,-1",
        "--t-end",
        "5",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    let ev: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("event.json")).unwrap()).unwrap();
    assert!(!ev.as_array().unwrap().is_empty());
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let mut seen = Vec::new();
    for rep in 0..2 {
        let out = dir.path().join(rep.to_string());
        let o = gasflow(&["verify", "lemma51", "--trials", "8", "--seed", "4", "--out", out.to_str().unwrap()]);
        assert!(o.status.success());
        seen.push((o.stdout, fs::read(out.join("trials.csv")).unwrap(), fs::read(out.join("lemma51.json")).unwrap()));
    }
    assert_eq!(seen[0], seen[1]);
    let o = gasflow(&["verify", "lemma51", "--trials", "8", "--seed", "5"]);
    assert_ne!(o.stdout, seen[0].0);
}

#[test]
fn thread_count_does_not_change_output() {
    let run = |threads: &str| {
        Command::new(env!("CARGO_BIN_EXE_gasflow"))
            .args(["ode", "phase", "--system", "const-div"])
            .env("GASFLOW_THREADS", threads)
            .output()
            .unwrap()
    };
    let (a, b) = (run("1"), run("3"));
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(run("zero").status.code(), Some(2));
}

#[test]
fn phase_portrait_files() {
    let dir = tempfile::tempdir().unwrap();
    let o = gasflow(&[
        "ode",
        "phase",
        "--system",
        "dry-friction",
        "--mu",
        "0.6",
        "--k-s",
        "1.5",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let svg = fs::read_to_string(dir.path().join("portrait.svg")).unwrap();
    assert!(svg.contains(r#"viewBox="0 0 800 600""#));
    assert!(svg.matches("<polyline").count() >= 8);
    assert_eq!(svg.matches("<circle").count(), 2);
    let csv = fs::read_to_string(dir.path().join("portrait.csv")).unwrap();
    assert!(!csv.contains('\r'));
}

#[test]
fn corollary_examples() {
    let v = stdout_json(&gasflow(&["verify", "corollary", "--mu", "0", "--delta", "1"]));
    assert_eq!(v["feasible"], true);
    let v = stdout_json(&gasflow(&["verify", "corollary", "--mu", "0", "--delta", "0.1"]));
    assert_eq!(v["feasible"], false);
}
