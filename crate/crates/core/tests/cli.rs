use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_spde-powvar"));
    c.env_remove("SPDE_POWVAR_THREADS");
    c
}

fn run_in(dir: &Path, args: &[&str]) -> std::process::Output {
    bin().args(args).arg("--output-dir").arg(dir).output().unwrap()
}

#[test]
fn mu_is_printed_with_full_precision() {
    let out = bin().args(["kernels-table", "--op", "mu", "--a", "1", "--b", "0", "--gamma", "1"]).output().unwrap();
    assert!(out.status.success());
    assert_eq!(String::from_utf8(out.stdout).unwrap().trim(), "0.6666666666666666");
}

#[test]
fn exit_codes() {
    assert_eq!(bin().arg("--help").status().unwrap().code(), Some(0));
    assert_eq!(bin().arg("--version").status().unwrap().code(), Some(0));
    assert_eq!(bin().arg("nonsense").output().unwrap().status.code(), Some(1));
    assert_eq!(bin().args(["simulate", "--theta", "abc"]).output().unwrap().status.code(), Some(1));
    let dir = tempfile::tempdir().unwrap();
    // theta must be positive: a domain error
    assert_eq!(run_in(dir.path(), &["simulate", "--theta", "-1", "--N", "8"]).status.code(), Some(2));
    // M * N above the dense cap
    let big = run_in(dir.path(), &["simulate", "--domain", "line", "--kind", "ux_increments", "--N", "5000"]);
    assert_eq!(big.status.code(), Some(2));
    assert_eq!(run_in(dir.path(), &["estimate"]).status.code(), Some(1));
}

#[test]
fn simulate_is_deterministic_and_estimates_round_trip() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["simulate", "--N", "32", "--M", "2", "--T", "1", "--modes", "500", "--seed", "42"];
    assert!(run_in(a.path(), &args).status.success());
    assert!(run_in(b.path(), &args).status.success());
    for name in ["field.csv", "field.json"] {
        let x = std::fs::read(a.path().join(name)).unwrap();
        let y = std::fs::read(b.path().join(name)).unwrap();
        assert_eq!(x, y, "{name} differs between identical runs");
    }
    let other = tempfile::tempdir().unwrap();
    let mut changed = args.to_vec();
    *changed.last_mut().unwrap() = "43";
    assert!(run_in(other.path(), &changed).status.success());
    assert_ne!(
        std::fs::read(a.path().join("field.csv")).unwrap(),
        std::fs::read(other.path().join("field.csv")).unwrap()
    );

    let field = a.path().join("field.json");
    let out = run_in(a.path(), &["estimate", "--input", field.to_str().unwrap(), "--estimator", "sigma2_check"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(a.path().join("estimate.json")).unwrap()).unwrap();
    assert_eq!(report["estimator_id"], "sigma2_check");
    let csv = std::fs::read_to_string(a.path().join("estimate.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);

    let wrong = run_in(a.path(), &["estimate", "--input", field.to_str().unwrap(), "--estimator", "sigma2_ux"]);
    assert_eq!(wrong.status.code(), Some(2));
}

#[test]
fn config_echo_reproduces_the_run() {
    let a = tempfile::tempdir().unwrap();
    let conf = a.path().join("run.conf");
    std::fs::write(&conf, "# consistency sweep\nN = 16, 32\nreps = 3\nmodes = 200\nt = 0.5\n").unwrap();
    let out = run_in(a.path(), &["mc-consistency", "--config", conf.to_str().unwrap(), "--seed", "5"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let first = std::fs::read_to_string(a.path().join("consistency.csv")).unwrap();
    assert_eq!(first.lines().count(), 3);

    let b = tempfile::tempdir().unwrap();
    let echo = a.path().join("config_echo.json");
    let out = run_in(b.path(), &["mc-consistency", "--config", echo.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(first, std::fs::read_to_string(b.path().join("consistency.csv")).unwrap());
    let e1: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&echo).unwrap()).unwrap();
    let e2: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(b.path().join("config_echo.json")).unwrap()).unwrap();
    let strip = |mut v: serde_json::Value| {
        v.as_object_mut().unwrap().remove("output_dir");
        v
    };
    assert_eq!(strip(e1), strip(e2));
}

#[test]
fn thread_count_does_not_change_results() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["mc-normality", "--N", "32", "--t", "0.5", "--reps", "12", "--modes", "300", "--seed", "9"];
    let one = bin().args(args).arg("--output-dir").arg(a.path()).env("SPDE_POWVAR_THREADS", "1").output().unwrap();
    assert!(one.status.success(), "{}", String::from_utf8_lossy(&one.stderr));
    let many = bin().args(args).args(["--threads", "3"]).arg("--output-dir").arg(b.path()).output().unwrap();
    assert!(many.status.success());
    for name in ["normality.csv", "histogram.csv", "qq.csv"] {
        assert_eq!(
            std::fs::read(a.path().join(name)).unwrap(),
            std::fs::read(b.path().join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn verify_runs_and_reports() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["verify", "--trials", "5", "--tolerance", "1e-6"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("verify.json")).unwrap()).unwrap();
    assert_eq!(report["pass"], true);
}
