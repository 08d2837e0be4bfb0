use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command as Proc;

use qsure_cli::{run, Command, Invocation};
use serde_json::Value;

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("config.toml");
    fs::write(&path, body).unwrap();
    path
}

fn invoke(command: Command, config: &Path, out: &Path, threads: Option<usize>) -> Invocation {
    Invocation { command, config: config.to_owned(), out: Some(out.to_owned()), threads, seed: None }
}

fn json(path: &Path) -> Value {
    serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
}

fn binary(args: &[&str]) -> std::process::Output {
    Proc::new(env!("CARGO_BIN_EXE_qsure")).args(args).output().unwrap()
}

const LENS: &str = r#"
[grid]
horizon = 1.0
steps = 10000

[[family.members]]
id = "c4"
kind = "constant"
variance = 4.0

[run]
n_paths = 1
master_seed = 5
"#;

#[test]
fn simulate_reports_qv_near_four() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), LENS);
    let outcome = run(&invoke(Command::Simulate, &cfg, &dir.path().join("out"), None)).unwrap();
    let csv = fs::read_to_string(outcome.out_dir.join("drivers_c4.csv")).unwrap();
    let last = csv.lines().last().unwrap();
    let qv: f64 = last.rsplit(',').next().unwrap().parse().unwrap();
    assert!((qv - 4.0).abs() <= 0.17, "{qv}");
    assert_eq!(csv.lines().count(), 10_002);
    assert!(!csv.contains('\r'));
    let manifest = json(&outcome.out_dir.join("manifest.json"));
    assert_eq!(manifest["master_seed"], 5);
    assert_eq!(manifest["outputs"].as_array().unwrap().len(), 2);
}

#[test]
fn zero_paths_writes_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &LENS.replace("n_paths = 1", "n_paths = 0"));
    let out = dir.path().join("out");
    let status = binary(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    assert_eq!(fs::read_to_string(out.join("drivers_c4.csv")).unwrap(), "path_index,k,t_k,B_k,mu_k,qv_k\n");
}

#[test]
fn missing_seed_exits_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &LENS.replace("master_seed = 5\n", ""));
    let out = dir.path().join("out");
    let res = binary(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("master_seed"));
    assert!(!out.exists());
    // a seed on the command line is enough
    let res = binary(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--seed", "5"]);
    assert!(res.status.success());
}

#[test]
fn validate_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let body = |alpha: f64| {
        format!(
            "[grid]\nhorizon = 1.0\nsteps = 1\n\n[coefficients]\nname = \"sqrt_diffusion\"\nparams = {{ alpha = {alpha:?} }}\n\n[validate]\ndomain = [-1.0, 1.0]\nn_pairs = 5000\n\n[run]\nmaster_seed = 1\n"
        )
    };
    let cfg = write_config(dir.path(), &body(0.4));
    let out = dir.path().join("fail");
    let res = binary(&["validate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(6));
    let report = json(&out.join("validate.json"));
    assert_eq!(report["report"]["pass"], false);
    assert_eq!(report["report"]["sub_verdicts"]["divergence"], false);
    assert_eq!(json(&out.join("manifest.json"))["exit_code"], 6);

    let cfg = write_config(dir.path(), &body(0.5));
    let out = dir.path().join("pass");
    let res = binary(&["validate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
}

const OVERLAP: &str = r#"
[grid]
horizon = 1.0
steps = 100

[[family.members]]
id = "c4"
kind = "constant"
variance = 4.0

[[family.members]]
id = "rs14"
kind = "regime_switching"
states = [1.0, 4.0]
switch_prob = 0.2

[coefficients]
name = "gbm"
x0 = 1.0

[average]
left = "rs14"
right = "c4"

[run]
n_paths = 40
master_seed = 17
"#;

#[test]
fn compat_and_patch_on_overlap_family() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), OVERLAP);
    let outcome = run(&invoke(Command::Compat, &cfg, &dir.path().join("compat"), None)).unwrap();
    let report = json(&outcome.out_dir.join("compat.json"));
    assert_eq!(report["max_deviation"], 0.0);
    assert!(report["shared_paths"].as_u64().unwrap() >= 40);
    assert_eq!(report["average"]["pass"], true);

    let outcome = run(&invoke(Command::Patch, &cfg, &dir.path().join("patch"), None)).unwrap();
    let summary = json(&outcome.out_dir.join("table_summary.json"));
    assert_eq!(summary["summary"]["exceptional"], 0);
    assert_eq!(summary["summary"]["entries"], 80);
    assert_eq!(summary["max_residual"], 0.0);
    let table = fs::read_to_string(outcome.out_dir.join("table.csv")).unwrap();
    assert!(table.lines().any(|l| l.starts_with("c4#0,0,") && l.ends_with(",c4;rs14")));
}

#[test]
fn integrate_constant_integrand_stabilizes_at_once() {
    let dir = tempfile::tempdir().unwrap();
    let body = LENS.replace("steps = 10000", "steps = 64") + "\n[integrate]\nintegrand = \"constant\"\nconstant = 2.0\nn_max = 4\n";
    let cfg = write_config(dir.path(), &body);
    let outcome = run(&invoke(Command::Integrate, &cfg, &dir.path().join("out"), None)).unwrap();
    let summary = json(&outcome.out_dir.join("integrate_summary.json"));
    assert_eq!(summary["paths"][0]["stabilized_at"], 1);
    assert_eq!(summary["bound_violations"], 0);
    let csv = fs::read_to_string(outcome.out_dir.join("convergence.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 4);
}

#[test]
fn blow_up_maps_to_its_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let body = r#"
[grid]
horizon = 10.0
steps = 10

[[family.members]]
id = "c1"
kind = "constant"
variance = 1.0

[coefficients]
name = "cubic_monotone"
x0 = 100.0

[functional]
payoff = "identity"

[run]
n_paths = 4
master_seed = 1
"#;
    let cfg = write_config(dir.path(), body);
    let out = dir.path().join("out");
    let res = binary(&["price", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(3), "{}", String::from_utf8_lossy(&res.stderr));
}

#[test]
fn price_is_byte_identical_across_threads_and_seed_sensitive() {
    let dir = tempfile::tempdir().unwrap();
    let body = r#"
[grid]
horizon = 1.0
steps = 50

[[family.members]]
id = "lo"
kind = "constant"
variance = 0.01

[[family.members]]
id = "hi"
kind = "constant"
variance = 0.09

[coefficients]
name = "stochvol"
params = { mu = 0.0 }

[functional]
payoff = "call"
strike = 1.0

[run]
n_paths = 3000
master_seed = 4
"#;
    let cfg = write_config(dir.path(), body);
    let files = |threads: usize, name: &str| {
        let out = dir.path().join(name);
        run(&invoke(Command::Price, &cfg, &out, Some(threads))).unwrap();
        ["price.json", "breakdown.csv", "manifest.json"].map(|f| fs::read(out.join(f)).unwrap())
    };
    let a = files(1, "t1");
    let b = files(8, "t8");
    assert_eq!(a, b);
    let price = json(&dir.path().join("t1/price.json"));
    assert_eq!(price["argmax_id"], "hi");

    let mut inv = invoke(Command::Price, &cfg, &dir.path().join("reseeded"), Some(2));
    inv.seed = Some(5);
    run(&inv).unwrap();
    assert_ne!(fs::read(dir.path().join("reseeded/price.json")).unwrap(), a[0]);
}

#[test]
fn shipped_configs_parse() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in fs::read_dir(root).unwrap() {
        let path = entry.unwrap().path();
        let src = fs::read_to_string(&path).unwrap();
        qsure_cli::RunConfig::parse(&src, None).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        n += 1;
    }
    assert!(n >= 5);
}
