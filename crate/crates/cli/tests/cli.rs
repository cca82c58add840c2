use std::path::Path;
use std::process::{Command, Output};

fn svreg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_svreg"))
        .args(args)
        .output()
        .expect("spawn svreg")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn simulate_fit_predict() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("train.csv");
    let truth = dir.path().join("truth.json");
    let model = dir.path().join("model.json");
    let preds = dir.path().join("preds.csv");

    let out = svreg(&[
        "simulate",
        "--dist",
        "gaussian",
        "--d",
        "4",
        "--func",
        "f1",
        "--noise",
        "0.01",
        "--n",
        "3000",
        "--seed",
        "11",
        "-o",
        p(&data),
        "--manifest",
        p(&truth),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let csv = std::fs::read_to_string(&data).unwrap();
    assert!(csv.starts_with("x1,x2,x3,x4,y\n"));
    assert_eq!(csv.lines().count(), 3001);
    let truth: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&truth).unwrap()).unwrap();
    assert_eq!(truth["direction"].as_array().unwrap().len(), 4);

    let out = svreg(&["fit", "--data", p(&data), "-o", p(&model), "--level", "5"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let m: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&model).unwrap()).unwrap();
    for key in [
        "direction",
        "method",
        "level_l",
        "interval_i",
        "scale_j",
        "degree_m",
        "coeffs",
        "fallback",
    ] {
        assert!(m.get(key).is_some(), "model JSON lacks `{key}`");
    }
    assert_eq!(m["level_l"], 5);

    let out = svreg(&[
        "predict",
        "--model",
        p(&model),
        "--data",
        p(&data),
        "-o",
        p(&preds),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = std::fs::read_to_string(&preds).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("row,prediction"));
    assert_eq!(lines.count(), 3000);
    let mse: f64 = stderr(&out)
        .trim()
        .strip_prefix("mse: ")
        .unwrap()
        .parse()
        .unwrap();
    // Noise variance is (0.01 · 3.53)² ≈ 1.2e-3.
    assert!(mse < 2e-3, "mse {mse}");
}

#[test]
fn simulate_is_deterministic_and_reads_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sim.toml");
    std::fs::write(
        &cfg,
        "dist = \"s2\"\nn = 50\nseed = 4\nnoise = 0.0\n[function]\nkind = \"f2\"\n",
    )
    .unwrap();
    let a = svreg(&["simulate", "--config", p(&cfg)]);
    let b = svreg(&["simulate", "--config", p(&cfg)]);
    assert!(a.status.success(), "{}", stderr(&a));
    assert_eq!(a.stdout, b.stdout);
    let text = String::from_utf8(a.stdout).unwrap();
    assert!(text.starts_with("x1,x2,y\n"));
    let c = svreg(&["simulate", "--config", p(&cfg), "--seed", "5"]);
    assert_ne!(text.as_bytes(), &c.stdout[..]);
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(svreg(&["fit"]).status.code(), Some(1));
    assert_eq!(svreg(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(
        svreg(&["bench", "index", "--preset", "nope"]).status.code(),
        Some(1)
    );
    assert_eq!(svreg(&["simulate", "--func", "f9"]).status.code(), Some(1));
    let out = svreg(&["bench", "index", "--methods", "knn", "--replicates", "1"]);
    assert_eq!(out.status.code(), Some(1), "{}", stderr(&out));
    assert_eq!(svreg(&["--help"]).status.code(), Some(0));
}

#[test]
fn data_errors_exit_2_with_line_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "x1,x2,y\n1,2,3\n4,five,6\n").unwrap();
    let out = svreg(&["fit", "--data", p(&bad)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("line 3"), "{}", stderr(&out));

    let header = dir.path().join("header.csv");
    std::fs::write(&header, "a,b,y\n1,2,3\n").unwrap();
    let out = svreg(&["fit", "--data", p(&header)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("line 1"));

    let missing = dir.path().join("missing.csv");
    assert_eq!(
        svreg(&["fit", "--data", p(&missing)]).status.code(),
        Some(2)
    );
}

#[test]
fn numerical_failures_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let flat = dir.path().join("flat.csv");
    let mut text = String::from("x1,x2,y\n");
    for i in 0..20 {
        text.push_str(&format!("{},{},{}\n", i, 2 * i, i));
    }
    std::fs::write(&flat, text).unwrap();
    let out = svreg(&["fit", "--data", p(&flat)]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
}

#[test]
fn predict_checks_dimension() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    let model = dir.path().join("m.json");
    let x = dir.path().join("x.csv");
    assert!(
        svreg(&["simulate", "--d", "3", "--n", "500", "-o", p(&data)])
            .status
            .success()
    );
    assert!(svreg(&["fit", "--data", p(&data), "-o", p(&model)])
        .status
        .success());
    std::fs::write(&x, "x1,x2\n0,0\n").unwrap();
    assert_eq!(
        svreg(&["predict", "--model", p(&model), "--data", p(&x)])
            .status
            .code(),
        Some(1)
    );
    std::fs::write(&x, "x1,x2,x3\n0,0,0\n1e3,0,0\n").unwrap();
    let out = svreg(&["predict", "--model", p(&model), "--data", p(&x)]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    // Far outside the fitted interval the link estimate is zero.
    assert_eq!(text.lines().last(), Some("2,0.0"));
}

#[test]
fn bench_outputs_csv_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bench.toml");
    std::fs::write(
        &cfg,
        "settings = [\"s2\"]\nnoise = [0.0, 0.01]\nmethods = [\"sir\", \"svr\"]\nreplicates = 3\nbase_seed = 9\n",
    )
    .unwrap();
    let csv = dir.path().join("out.csv");
    let out = svreg(&[
        "bench",
        "index",
        "--config",
        p(&cfg),
        "--csv",
        p(&csv),
        "--replicates",
        "4",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("bench,dist,d,func,noise,method,n,l,j,statistic,spread,count,failed")
    );
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| r.contains(",4,0")));
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("out.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["base_seed"], 9);
    assert_eq!(manifest["config"]["replicates"], 4);
    assert_eq!(
        manifest["provenance"]["config_hash"]
            .as_str()
            .unwrap()
            .len(),
        64
    );
    assert!(manifest["stage_seconds"]["index"].is_number());
}

#[test]
fn bench_is_thread_count_invariant() {
    let run = |threads: &str| {
        let out = svreg(&[
            "bench",
            "rate",
            "--preset",
            "index-rate",
            "--n-grid",
            "500,700,1000,1400",
            "--replicates",
            "3",
            "--threads",
            threads,
        ]);
        assert!(out.status.success(), "{}", stderr(&out));
        assert!(stderr(&out).contains("slope"));
        out.stdout
    };
    assert_eq!(run("1"), run("3"));
}

#[test]
fn bench_heatmap_grid() {
    let out = svreg(&[
        "bench",
        "heatmap",
        "--n-grid",
        "800",
        "--l-grid",
        "2,3",
        "--j-grid",
        "0,1,2",
        "--replicates",
        "3",
        "--test-n",
        "200",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 1 + 2 * 3);
}
