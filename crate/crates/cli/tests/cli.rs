use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn plchaos(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_plchaos")).args(args).env_remove("PLCHAOS_THREADS").output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn data_rows(text: &str) -> Vec<Vec<f64>> {
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect()
}

#[test]
fn simulate_from_origin_stays_at_zero() {
    let o = plchaos(&["simulate", "--params", "1,1,1,0.25,3,1", "--x0", "0,0,0", "--T", "10"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.starts_with("t,x1,x2,x3\n"));
    assert!(!text.contains('\r'));
    let rows = data_rows(&text);
    assert!(rows.len() > 1);
    assert!((rows.last().unwrap()[0] - 10.0).abs() < 1e-12);
    assert!(rows.iter().all(|r| r[1..].iter().all(|v| *v == 0.0)));
}

#[test]
fn usage_errors_exit_with_two() {
    for args in [
        &["simulate", "--x0", "1,2"][..],
        &["simulate", "--no-such-flag"],
        &["frobnicate"],
        &["simulate", "--params", "1,1,1,-0.25,3,1"],
        &["continue", "--h0", "1", "--h-max", "0.1"],
        &["sweep", "--a", "1.2:1.1:10"],
    ] {
        let o = plchaos(args);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
        assert!(!o.stderr.is_empty());
    }
}

#[test]
fn domain_errors_exit_with_one() {
    // no period-1 point near this guess
    let o = plchaos(&["newton", "--start", "0.1,0.1", "--params", "1.205,1,1,0.25,3,1"]);
    assert_eq!(o.status.code(), Some(1));
    // Z is not a saddle for these constants
    let o = plchaos(&["manifold", "--kind", "equilibrium", "--params", "1,1,1,4,1,1"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn config_file_sits_between_defaults_and_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "# test run\nT = 2\nstride = 1\nx0 = 0.5,0,0.5\n").unwrap();
    let c = cfg.to_str().unwrap();

    let from_file = data_rows(&stdout(&plchaos(&["simulate", "--config", c])));
    assert_eq!(from_file.len(), 3);
    assert_eq!(from_file[0][1], 0.5);

    let overridden = data_rows(&stdout(&plchaos(&["simulate", "--config", c, "--T", "3"])));
    assert_eq!(overridden.len(), 4);
    assert_eq!(overridden[0][1], 0.5);

    fs::write(&cfg, "unknown_key = 1\n").unwrap();
    assert_eq!(plchaos(&["simulate", "--config", c]).status.code(), Some(2));
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["a", "b"] {
        let out = dir.path().join(format!("{name}.csv"));
        let o =
            plchaos(&["poincare", "--iterations", "20", "--params", "1.205,1,1,0.25,3,1", "-o", out.to_str().unwrap()]);
        assert!(o.status.success());
        let sync = dir.path().join(format!("{name}_sync.csv"));
        let o = plchaos(&["sync", "--seed", "4", "--T", "0.5", "-o", sync.to_str().unwrap()]);
        assert!(o.status.success());
    }
    let read = |n: &str| fs::read(dir.path().join(n)).unwrap();
    assert_eq!(read("a.csv"), read("b.csv"));
    assert_eq!(read("a_sync.csv"), read("b_sync.csv"));
}

#[test]
fn equilibria_report_matches_closed_form() {
    let o = plchaos(&["equilibria", "--params", "1,1,1,0.25,1,1"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let z3 = v["z"]["location"][2].as_f64().unwrap();
    assert!((z3 - 1.0).abs() < 1e-14);
    assert_eq!(v["z_mirror"][2].as_f64().unwrap(), -z3);
    let rho0 = v["analytic_orbit"]["rho0"].as_f64().unwrap();
    assert!((rho0 - 0.9375f64.sqrt()).abs() < 1e-14);
    // the real eigenvalue at O is r^2
    assert_eq!(v["origin"]["eigenvalues"][2][0].as_f64().unwrap(), 1.0);

    let o = plchaos(&["equilibria", "--params", "1.2,1,1,0.25,1,1"]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(v["analytic_orbit"].is_null());
}

#[test]
fn continuation_writes_branch_and_events() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("branch.csv");
    let o = plchaos(&["continue", "--range", "1.0:1.25", "-o", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&out).unwrap();
    assert!(text.starts_with("a,x1,x3,mult1_re,mult1_im,mult2_re,mult2_im,stability\n"));
    let events: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("branch.events.json")).unwrap()).unwrap();
    let bp = events.as_array().unwrap().iter().find(|e| e["kind"] == "BRANCH_POINT").unwrap();
    assert!((bp["a"].as_f64().unwrap() - 1.196).abs() < 0.005);
}

fn meta_line(path: &Path) -> String {
    fs::read_to_string(path).unwrap().lines().next().unwrap().to_string()
}

#[test]
fn reproduce_fig4_finds_the_branch_point() {
    let dir = tempfile::tempdir().unwrap();
    let o = plchaos(&["reproduce", "fig4", "--out-dir", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let branch = dir.path().join("fig4_branch_symmetric.csv");
    assert_eq!(meta_line(&branch), "# params=1,1,1,0.25,3,1, seed=1, version=0.1.0");
    let v: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("fig4_events.json")).unwrap()).unwrap();
    assert_eq!(v["meta"]["seed"], 1);
    let events = v["data"].as_array().unwrap();
    assert!(events.iter().any(|e| e["kind"] == "BRANCH_POINT" && (e["a"].as_f64().unwrap() - 1.196).abs() < 0.005));
    assert!(events.iter().any(|e| e["kind"] == "PERIOD_DOUBLING"));
}

#[test]
fn reproduce_small_targets_carry_metadata() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    for fig in ["table1", "fig3", "fig7", "fig8"] {
        let o = plchaos(&["reproduce", fig, "--out-dir", d, "--seed", "3"]);
        assert!(o.status.success(), "{fig}: {}", String::from_utf8_lossy(&o.stderr));
    }
    for (file, params) in [
        ("table1_regions.csv", "1,1,1,0.25,3,1"),
        ("fig3_manifold_z.csv", "1,1,1,0.25,1,1"),
        ("fig7_control.csv", "5,1,0.1,1.5,10,5"),
        ("fig8_sync.csv", "5,1,0.1,4,10,50"),
    ] {
        assert_eq!(meta_line(&dir.path().join(file)), format!("# params={params}, seed=3, version=0.1.0"));
    }
    // the regions table really samples every region with the right signs
    let text = fs::read_to_string(dir.path().join("table1_regions.csv")).unwrap();
    for line in text.lines().skip(2) {
        let f: Vec<&str> = line.split(',').collect();
        let re: f64 = f[4].parse().unwrap();
        let l3: f64 = f[6].parse().unwrap();
        let expected = match f[0] {
            "R1" => (true, false),
            "R2" => (false, false),
            "R3" => (false, true),
            "R4" => (true, true),
            other => panic!("unexpected region {other}"),
        };
        assert_eq!((re > 0.0, l3 > 0.0), expected, "{line}");
    }
}

#[test]
fn sweep_emits_one_row_per_retained_iterate() {
    let o = plchaos(&["sweep", "--a", "1.197:1.198:2", "--iterations", "30", "--keep", "5"]);
    assert!(o.status.success());
    let rows = data_rows(&stdout(&o));
    // two seeds, three grid values, five iterates each
    assert_eq!(rows.len(), 2 * 3 * 5);
    assert!(rows.iter().all(|r| r.len() == 2));
}

#[test]
fn thread_variable_is_validated() {
    let o = Command::new(env!("CARGO_BIN_EXE_plchaos"))
        .args(["equilibria"])
        .env("PLCHAOS_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    let o =
        Command::new(env!("CARGO_BIN_EXE_plchaos")).args(["equilibria"]).env("PLCHAOS_THREADS", "2").output().unwrap();
    assert!(o.status.success());
}
