use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const GOLDEN: &[(&str, &str)] = &[
    ("fig1_k5", "simulate-limit"),
    ("fig1_k15", "simulate-limit"),
    ("fig2", "simulate-limit"),
    ("fig3", "simulate-limit"),
    ("fig4", "simulate-limit"),
    ("fig5", "simulate-limit"),
    ("fig6", "simulate-finite"),
    ("fig7", "simulate-finite"),
    ("fig8", "simulate-finite"),
];

fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

fn contagion(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_contagion"))
        .args(args)
        .env_remove("CONTAGION_THREADS")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

const SMALL: &str = r#"
[model]
alpha = 4.0
lambda_bar = 0.2
sigma = 0.9
beta_c = 2.0
beta_s = 2.0
lambda0 = 0.2

[risk]
kind = "cir"
x0 = 0.5
kappa = 4.0
theta = 0.5
epsilon = 0.5

[grid]
dt = 0.01
horizon = 0.5

[sim]
trials = 50
seed = 7
"#;

#[test]
fn golden_files_reproduce_for_any_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    for &(name, sub) in GOLDEN {
        let config = golden_dir().join(format!("{name}.toml"));
        let expected = std::fs::read(golden_dir().join(format!("{name}.csv"))).unwrap();
        for threads in ["1", "3"] {
            let out = dir.path().join(format!("{name}_{threads}.csv"));
            let o = contagion(&[
                sub,
                "--config",
                config.to_str().unwrap(),
                "--out",
                out.to_str().unwrap(),
                "--threads",
                threads,
            ]);
            assert!(o.status.success(), "{name}: {}", String::from_utf8_lossy(&o.stderr));
            assert!(
                std::fs::read(&out).unwrap() == expected,
                "{name} differs with {threads} threads"
            );
        }
    }
}

#[test]
fn sidecar_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", SMALL);
    let first = dir.path().join("a.csv");
    let second = dir.path().join("b.csv");
    let o = contagion(&[
        "simulate-limit",
        "--config",
        &cfg,
        "--out",
        first.to_str().unwrap(),
        "--seed",
        "99",
    ]);
    assert!(o.status.success());
    let sidecar = format!("{}.json", first.display());
    let text = std::fs::read_to_string(&sidecar).unwrap();
    assert!(
        text.contains("\"seed\": 99") && text.contains("simulate-limit"),
        "{text}"
    );
    let o = contagion(&[
        "simulate-limit",
        "--config",
        &sidecar,
        "--out",
        second.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(std::fs::read(&first).unwrap(), std::fs::read(&second).unwrap());
}

#[test]
fn thread_count_comes_from_the_environment_too() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", &format!("{SMALL}\n[solver]\nnames = 200\n"));
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    assert!(
        contagion(&["simulate-finite", "--config", &cfg, "--out", a.to_str().unwrap()])
            .status
            .success()
    );
    let o = Command::new(env!("CARGO_BIN_EXE_contagion"))
        .args(["simulate-finite", "--config", &cfg, "--out", b.to_str().unwrap()])
        .env("CONTAGION_THREADS", "4")
        .output()
        .unwrap();
    assert!(o.status.success());
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn validation_errors_exit_one_and_name_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o.csv");
    let cases = [
        (SMALL.replace("sigma = 0.9", "sigma = -0.9"), "model.sigma"),
        (format!("{SMALL}\n[solver]\ntruncaton = 5\n"), "truncaton"),
        (SMALL.replace("dt = 0.01", "dt = 0.0"), "grid.dt"),
    ];
    for (text, key) in cases {
        let cfg = write_config(dir.path(), "bad.toml", &text);
        let o = contagion(&["simulate-limit", "--config", &cfg, "--out", out.to_str().unwrap()]);
        let err = String::from_utf8_lossy(&o.stderr);
        assert_eq!(o.status.code(), Some(1), "{err}");
        assert!(err.contains(key), "{key} missing from {err}");
    }
}

#[test]
fn instability_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let text = SMALL
        .replace("lambda_bar = 0.2", "lambda_bar = 1.0")
        .replace("sigma = 0.9", "sigma = 1.0")
        .replace("beta_c = 2.0", "beta_c = 1.5")
        .replace("beta_s = 2.0", "beta_s = 5.0")
        .replace("lambda0 = 0.2", "lambda0 = 2.0")
        .replace("kind = \"cir\"", "kind = \"brownian\"")
        .replace("horizon = 0.5", "horizon = 0.1")
        .replace("trials = 50", "trials = 2")
        + "\n[solver]\nmesh_delta = 0.1\nlambda_max = 10.0\n";
    let cfg = write_config(dir.path(), "spde.toml", &text);
    let out = dir.path().join("o.csv");
    let o = contagion(&["solve-spde-fd", "--config", &cfg, "--out", out.to_str().unwrap()]);
    let err = String::from_utf8_lossy(&o.stderr);
    assert_eq!(o.status.code(), Some(2), "{err}");
    assert!(err.contains("instability detected"), "{err}");
}

#[test]
fn deterministic_solver_reports_the_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let text = SMALL
        .replace("beta_c = 2.0", "beta_c = 0.0")
        .replace("beta_s = 2.0", "beta_s = 0.0")
        + "\n[solver]\nmesh_delta = 0.01\n";
    let cfg = write_config(dir.path(), "det.toml", &text);
    let out = dir.path().join("o.csv");
    let o = contagion(&["solve-deterministic", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let mut r = csv::Reader::from_path(&out).unwrap();
    assert_eq!(
        r.headers().unwrap(),
        vec!["horizon", "loss", "first_moment", "analytic_loss"]
    );
    let rows: Vec<_> = r.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 51);
    let last = rows.last().unwrap();
    let loss: f64 = last[1].parse().unwrap();
    let analytic: f64 = last[3].parse().unwrap();
    assert!((loss - analytic).abs() < 1e-3, "{loss} vs {analytic}");
}

#[test]
fn compare_and_analyze_agree_on_ks() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!("{SMALL}\n[solver]\nnames = 300\n\n[compare]\nleft = \"finite\"\nright = \"moments\"\n");
    let cfg = write_config(dir.path(), "cmp.toml", &text);
    let p = |n: &str| dir.path().join(n).to_string_lossy().into_owned();
    assert!(contagion(&["compare", "--config", &cfg, "--out", &p("cmp.csv")])
        .status
        .success());
    assert!(contagion(&["simulate-finite", "--config", &cfg, "--out", &p("f.csv")])
        .status
        .success());
    assert!(contagion(&["simulate-limit", "--config", &cfg, "--out", &p("l.csv")])
        .status
        .success());
    let o = contagion(&[
        "analyze",
        "--input",
        &p("f.csv"),
        "--input",
        &p("l.csv"),
        "--out",
        &p("an.csv"),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let mut cmp = csv::Reader::from_path(p("cmp.csv")).unwrap();
    let ks_col = cmp.headers().unwrap().iter().position(|h| h == "ks").unwrap();
    let cmp_ks: f64 = cmp.records().next().unwrap().unwrap()[ks_col].parse().unwrap();
    let mut an = csv::Reader::from_path(p("an.csv")).unwrap();
    let ks_col = an.headers().unwrap().iter().position(|h| h == "ks_to_first").unwrap();
    let rows: Vec<_> = an.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 2);
    assert_eq!(&rows[0][ks_col], "0");
    let an_ks: f64 = rows[1][ks_col].parse().unwrap();
    assert_eq!(cmp_ks, an_ks);
}

#[test]
fn compare_rejects_the_deterministic_solver() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!("{SMALL}\n[compare]\nleft = \"fd-deterministic\"\nright = \"moments\"\n");
    let cfg = write_config(dir.path(), "cmp.toml", &text);
    let out = dir.path().join("o.csv");
    let o = contagion(&["compare", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn fixed_point_writes_samples_with_errors() {
    let dir = tempfile::tempdir().unwrap();
    let text = SMALL.replace("trials = 50", "trials = 2") + "\n[solver]\ninner_trials = 2000\ntol = 1e-5\n";
    let cfg = write_config(dir.path(), "fp.toml", &text);
    let out = dir.path().join("o.csv");
    let o = contagion(&["solve-fixed-point", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.starts_with("trial,horizon,loss,x_value,loss_se,iterations\n"));
    assert_eq!(text.lines().count(), 3);
}

#[test]
fn figure_one_run_writes_one_row_per_trial() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fig1.csv");
    let config = golden_dir().join("fig1_k15.toml");
    let o = contagion(&[
        "simulate-limit",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--trials",
        "50000",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 50_001);
    assert!(text.lines().skip(1).all(|l| l.split(',').nth(1) == Some("1")));
}
