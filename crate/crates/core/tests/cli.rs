use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use crm_core::io::{load_portfolio, RunConfig};
use crm_core::simulate::{simulate_portfolio, ScenarioConfig};
use crm_core::{log_density_gaussian, ModelParams, PolicyHistory, QuadratureRule, ThetaParams, YearClaim};
use tempfile::TempDir;

fn crm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_crm"))
        .args(args)
        .env("CRM_THREADS", "1")
        .env("RUST_LOG", "error")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = crm(args);
    assert!(
        out.status.success(),
        "crm {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    crm(args).status.code().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

struct Workspace {
    dir: TempDir,
}

impl Workspace {
    fn new() -> Self {
        Self {
            dir: TempDir::new().unwrap(),
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn write(&self, name: &str, text: &str) -> PathBuf {
        let path = self.path(name);
        std::fs::write(&path, text).unwrap();
        path
    }

    /// Simulates a scenario into `name/` and returns the two CSV paths.
    fn simulate(&self, name: &str, scenario: &str, policies: &str, seed: &str) -> (PathBuf, PathBuf) {
        let out = self.path(name);
        ok(&[
            "simulate",
            "--scenario",
            scenario,
            "--policies",
            policies,
            "--seed",
            seed,
            "--out-dir",
            p(&out),
        ]);
        (out.join("policy_years.csv"), out.join("claims.csv"))
    }
}

fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap()
}

#[test]
fn pdcheck_prints_reference_correlations() {
    let out = ok(&["pdcheck", "--theta", "0.3,0.3,0.5,0.5", "--n", "2,3"]);
    assert!(out.contains("admissible=true"));
    assert!(out.contains("PD=true"));
    assert!(out.contains("rho=(0.3400, 0.3400, 0.0900, 0.0900, 0.0900)"), "{out}");

    let out = ok(&["pdcheck", "--theta", "0.9,0.9,0.9,0.9", "--n", "1,2"]);
    assert!(out.contains("admissible=false") && out.contains("PD=false"), "{out}");
}

#[test]
fn density_without_dependence_is_product_of_marginals() {
    let ws = Workspace::new();
    let params = ModelParams::intercept_only(1.3, 2500.0, 0.8, ThetaParams::ZERO);
    let params_path = ws.write("params.json", &serde_json::to_string(&params).unwrap());
    let history = ws.write("history.json", r#"{"years": [[1200.5, 40.25], [], [9000.0]]}"#);
    let out = ok(&["density", "--history", p(&history), "--params", p(&params_path)]);

    let h = PolicyHistory::from_claims(
        "1",
        vec![
            YearClaim::new(vec![1200.5, 40.25]),
            YearClaim::empty(),
            YearClaim::new(vec![9000.0]),
        ],
    );
    let mut want = 0.0;
    for y in &h.years {
        let n = y.claim.count as f64;
        want += n * 1.3f64.ln() - 1.3 - statrs::function::gamma::ln_gamma(n + 1.0);
        let scale = 2500.0 / statrs::function::gamma::gamma(1.0 + 1.0 / 0.8);
        for &v in &y.claim.severities {
            let z: f64 = v / scale;
            want += 0.8f64.ln() - scale.ln() + (0.8 - 1.0) * z.ln() - z.powf(0.8);
        }
    }
    let line = |key: &str| -> f64 {
        out.lines()
            .find_map(|l| l.strip_prefix(&format!("{key} = ")))
            .unwrap()
            .parse()
            .unwrap()
    };
    assert!((line("log_density") - want).abs() < 1e-10 * want.abs(), "{out}");
    assert_eq!(line("log_density"), line("independent_log_density"));
}

#[test]
fn density_matches_library_with_dependence() {
    let ws = Workspace::new();
    let params = ModelParams::intercept_only(2.0, 8f64.exp(), 0.7, ThetaParams::new(0.3, 0.3, 0.5, 0.5));
    let params_path = ws.write("params.json", &serde_json::to_string(&params).unwrap());
    let history = ws.write("history.json", r#"{"years": [[3000.0], [500.0, 7000.0]]}"#);
    let out = ok(&["density", "--history", p(&history), "--params", p(&params_path)]);
    let h = PolicyHistory::from_claims(
        "1",
        vec![YearClaim::new(vec![3000.0]), YearClaim::new(vec![500.0, 7000.0])],
    );
    let lib = log_density_gaussian(&h, &params, &QuadratureRule::default()).unwrap().log_density;
    assert!(out.contains(&format!("log_density = {lib:.12}")), "{out}");
}

#[test]
fn simulated_files_load_back_to_the_simulated_portfolio() {
    let ws = Workspace::new();
    let (py, cl) = ws.simulate("sim", "3", "120", "17");
    let loaded = load_portfolio(&py, &cl, &RunConfig::default()).unwrap();
    let cfg = ScenarioConfig {
        policies: 120,
        seed: 17,
        ..ScenarioConfig::reference(3).unwrap()
    };
    let direct = simulate_portfolio(&cfg, false).unwrap().portfolio;
    assert_eq!(loaded, direct);
}

#[test]
fn summarize_totals_match_file_rows() {
    let ws = Workspace::new();
    let (py, cl) = ws.simulate("sim", "1", "80", "2");
    let rows = |path: &Path| std::fs::read_to_string(path).unwrap().lines().count() - 1;
    let prefix = ws.path("summary");
    let out = ok(&[
        "summarize",
        "--policy-years",
        p(&py),
        "--claims",
        p(&cl),
        "--out",
        p(&prefix),
    ]);
    let totals: Vec<&str> = out.lines().filter(|l| l.trim_start().starts_with("total")).collect();
    let last_number = |l: &str| l.split_whitespace().last().unwrap().parse::<usize>().unwrap();
    assert_eq!(last_number(totals[0]), rows(&py));
    assert_eq!(last_number(totals[1]), rows(&cl));
    assert!(ws.path("summary_by_year.csv").exists());
    assert!(ws.path("summary_severity.csv").exists());
}

#[test]
fn fit_then_rho_writes_estimation_tables() {
    let ws = Workspace::new();
    let (py, cl) = ws.simulate("sim", "2", "150", "5");
    let config = ws.write("config.json", r#"{"quadrature": {"factor_nodes": 24}}"#);
    let fit_prefix = ws.path("fit");
    ok(&[
        "fit",
        "--policy-years",
        p(&py),
        "--claims",
        p(&cl),
        "--config",
        p(&config),
        "--variant",
        "no_within_year",
        "--out",
        p(&fit_prefix),
    ]);
    let report = std::fs::read_to_string(ws.path("fit.txt")).unwrap();
    assert!(report.contains("Estimation result (no_within_year model)"));
    for col in ["parameter", "est", "std.error", "t", "p-value"] {
        assert!(report.contains(col), "{col} missing from\n{report}");
    }
    for name in ["frequency:(Intercept)", "severity:(Intercept)", "nu_sev", "theta1", "theta2"] {
        assert!(report.contains(name), "{name} missing from\n{report}");
    }
    assert!(!report.contains("theta3"));
    let csv = std::fs::read_to_string(ws.path("fit.csv")).unwrap();
    assert!(csv.starts_with("parameter,estimate,std_error,t_value,p_value,significant"));

    let rho_prefix = ws.path("rho");
    let out = ok(&["rho", "--fit", p(&ws.path("fit.json")), "--out", p(&rho_prefix)]);
    assert!(out.contains("Latent correlations"));
    let rho_csv = std::fs::read_to_string(ws.path("rho.csv")).unwrap();
    assert_eq!(rho_csv.lines().count(), 6);
    // theta3 = theta4 = 0, so the within-year correlations equal the
    // cross-year ones.
    let est = |name: &str| -> f64 {
        rho_csv
            .lines()
            .find(|l| l.starts_with(&format!("{name},")))
            .unwrap()
            .split(',')
            .nth(1)
            .unwrap()
            .parse()
            .unwrap()
    };
    assert_eq!(est("rho1"), est("rho4"));
    assert_eq!(est("rho2"), est("rho5"));
}

#[test]
fn simulate_fit_predict_are_byte_identical_on_rerun() {
    let ws = Workspace::new();
    let (py, cl) = ws.simulate("a", "1", "100", "9");
    let (py2, cl2) = ws.simulate("b", "1", "100", "9");
    assert_eq!(read(&py), read(&py2));
    assert_eq!(read(&cl), read(&cl2));

    let config = ws.write(
        "config.json",
        r#"{"quadrature": {"factor_nodes": 24}, "split": {"test_year": 3}, "compute_standard_errors": false}"#,
    );
    for run in ["f1", "f2"] {
        ok(&[
            "fit",
            "--policy-years",
            p(&py),
            "--claims",
            p(&cl),
            "--config",
            p(&config),
            "--variant",
            "no_shared",
            "--out",
            p(&ws.path(run)),
        ]);
    }
    for ext in [".txt", ".csv", ".json"] {
        assert_eq!(read(&ws.path(&format!("f1{ext}"))), read(&ws.path(&format!("f2{ext}"))));
    }
    for run in ["p1.csv", "p2.csv"] {
        ok(&[
            "predict",
            "--policy-years",
            p(&py),
            "--claims",
            p(&cl),
            "--config",
            p(&config),
            "--fit",
            p(&ws.path("f1.json")),
            "--samples",
            "200",
            "--seed",
            "3",
            "--out",
            p(&ws.path(run)),
        ]);
    }
    let preds = read(&ws.path("p1.csv"));
    assert_eq!(preds, read(&ws.path("p2.csv")));
    assert_eq!(String::from_utf8(preds).unwrap().lines().count(), 101);
}

#[test]
fn validate_writes_comparison_table() {
    let ws = Workspace::new();
    let (py, cl) = ws.simulate("sim", "2", "120", "4");
    let config = ws.write(
        "config.json",
        r#"{"quadrature": {"factor_nodes": 24}, "compute_standard_errors": false}"#,
    );
    let prefix = ws.path("cmp");
    let out = ok(&[
        "validate",
        "--policy-years",
        p(&py),
        "--claims",
        p(&cl),
        "--config",
        p(&config),
        "--year",
        "3",
        "--samples",
        "100",
        "--out",
        p(&prefix),
    ]);
    for label in ["Full model", "Nested 1", "Nested 2", "Nested 3", "MSE", "RMSE", "MAE", "Gini"] {
        assert!(out.contains(label), "{label} missing from\n{out}");
    }
    let csv = std::fs::read_to_string(ws.path("cmp.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
    let preds = std::fs::read_to_string(ws.path("cmp_predictions.csv")).unwrap();
    assert_eq!(preds.lines().count(), 1 + 4 * 120);
}

#[test]
fn exit_codes_separate_input_and_numerical_failures() {
    let ws = Workspace::new();
    assert_eq!(code(&["pdcheck", "--theta", "0.1,0.2", "--n", "1"]), 1);
    assert_eq!(code(&["rho", "--theta", "0.9,0.1,0.9,0.1"]), 1);
    assert_eq!(code(&["fit", "--policy-years", "missing.csv", "--claims", "missing.csv", "--out", "x"]), 1);
    assert_eq!(code(&["no-such-command"]), 1);
    assert_eq!(code(&["rho", "--theta", "0.1,0.1,0.1,0.1"]), 0);

    let bad_threads = Command::new(env!("CARGO_BIN_EXE_crm"))
        .args(["pdcheck", "--theta", "0,0,0,0", "--n", "1"])
        .env("CRM_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(bad_threads.status.code(), Some(1));

    // An optimizer allowed a single iteration cannot converge.
    let (py, cl) = ws.simulate("sim", "1", "60", "1");
    let config = ws.write("config.json", r#"{"optimizer": {"max_iterations": 1}}"#);
    let fit_prefix = ws.path("fit");
    let args = [
        "fit",
        "--policy-years",
        p(&py),
        "--claims",
        p(&cl),
        "--config",
        p(&config),
        "--out",
        p(&fit_prefix),
    ];
    assert_eq!(code(&args), 2);

    // A severity far below the clamp gives a zero density.
    let params = ModelParams::intercept_only(2.0, 8f64.exp(), 0.7, ThetaParams::new(0.3, 0.3, 0.5, 0.5));
    let params_path = ws.write("params.json", &serde_json::to_string(&params).unwrap());
    let history = ws.write("history.json", r#"{"years": [[1e-30]]}"#);
    assert_eq!(code(&["density", "--history", p(&history), "--params", p(&params_path)]), 2);
}
