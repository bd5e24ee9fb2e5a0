use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn dapcnn(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dapcnn"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

fn error_line(out: &Output) -> String {
    assert!(!out.status.success());
    String::from_utf8_lossy(&out.stderr).lines().last().unwrap_or("").to_string()
}

#[test]
fn gen_data_is_byte_identical_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["a.csv", "b.csv"] {
        ok(&dapcnn(
            &["gen-data", "--benchmark", "on10", "--strategy", "monte-carlo", "--size", "50", "--seed", "9", "--output", name],
            dir.path(),
        ));
    }
    let a = fs::read(dir.path().join("a.csv")).unwrap();
    assert_eq!(a, fs::read(dir.path().join("b.csv")).unwrap());
    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with("# dapcnn "));
    assert!(text.contains("config-sha256 "));
    assert!(text.contains("w1,w2,w3,w4,w5,w6,w7,w8,w9,w10,r1\n"));
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 51);
}

#[test]
fn gaussian_grid_sizes() {
    let dir = tempfile::tempdir().unwrap();
    for (size, rows) in [("27", 27), ("216", 216), ("1331", 1331), ("1000", 1000)] {
        ok(&dapcnn(
            &["gen-data", "--benchmark", "ishigami", "--strategy", "gaussian-grid", "--size", size, "--output", "g.csv"],
            dir.path(),
        ));
        let text = fs::read_to_string(dir.path().join("g.csv")).unwrap();
        assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), rows + 1);
    }
}

#[test]
fn train_eval_sobol_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&dapcnn(&["gen-data", "--benchmark", "ishigami", "--size", "128", "--output", "train.csv"], d));
    ok(&dapcnn(
        &["gen-data", "--benchmark", "ishigami", "--strategy", "monte-carlo", "--size", "200", "--seed", "4", "--output", "val.csv"],
        d,
    ));
    fs::write(
        d.join("arch.toml"),
        "method = \"dapcnn\"\nlayers = [3, 1]\ndegrees = [2, 2]\nactivation = \"normalized\"\nloss = \"MSE+MSW\"\n",
    )
    .unwrap();
    fs::write(d.join("cfg.toml"), "max_iterations = 15\n").unwrap();
    for model in ["m1.json", "m2.json"] {
        ok(&dapcnn(
            &["train", "--data", "train.csv", "--arch", "arch.toml", "--config", "cfg.toml", "--seed", "2", "--output", model, "--history", "h.csv"],
            d,
        ));
    }
    assert_eq!(fs::read(d.join("m1.json")).unwrap(), fs::read(d.join("m2.json")).unwrap());
    let history = fs::read_to_string(d.join("h.csv")).unwrap();
    assert!(history.contains("iteration,loss,mse,msw,damping,accepted"));

    let out = dapcnn(&["eval", "--model", "m1.json", "--data", "val.csv", "--output", "pred.csv"], d);
    ok(&out);
    let metrics = String::from_utf8(out.stdout).unwrap();
    assert!(metrics.starts_with("metric,value\nmse,"));
    let pred = fs::read_to_string(d.join("pred.csv")).unwrap();
    assert_eq!(pred.lines().filter(|l| !l.starts_with('#')).count(), 201);

    let out = dapcnn(&["sobol", "--model", "m1.json"], d);
    ok(&out);
    let text = String::from_utf8(out.stdout).unwrap();
    let total: f64 = text
        .lines()
        .filter(|l| l.starts_with("term,"))
        .map(|l| l.rsplit(',').next().unwrap().parse::<f64>().unwrap())
        .sum();
    assert!((total - 1.0).abs() < 1e-12);

    let out = dapcnn(&["sobol", "--model", "m1.json", "--layer", "3"], d);
    assert!(error_line(&out).starts_with("error: invalid-config: "));
}

#[test]
fn apc_training_with_flags() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&dapcnn(&["gen-data", "--benchmark", "ishigami", "--size", "100", "--output", "t.csv"], d));
    let out = dapcnn(&["train", "--data", "t.csv", "--method", "apc", "--degree", "4", "--output", "a.json"], d);
    ok(&out);
    assert!(String::from_utf8_lossy(&out.stdout).contains("weights 35"));
}

#[test]
fn grid_apc_with_distribution_bases_gives_ishigami_indices() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&dapcnn(
        &["gen-data", "--benchmark", "ishigami", "--strategy", "gaussian-grid", "--size", "729", "--output", "g.csv"],
        d,
    ));
    ok(&dapcnn(
        &["train", "--data", "g.csv", "--method", "apc", "--degree", "8", "--input-distribution", "ishigami", "--output", "a.json"],
        d,
    ));
    let out = dapcnn(&["sobol", "--model", "a.json"], d);
    ok(&out);
    let text = String::from_utf8(out.stdout).unwrap();
    let first: Vec<f64> = text
        .lines()
        .filter(|l| l.starts_with("first,"))
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .collect();
    let exact = [0.3139, 0.4424, 0.0];
    assert_eq!(first.len(), 3);
    for (s, e) in first.iter().zip(exact) {
        assert!((s - e).abs() < 0.05, "{first:?}");
    }
}

#[test]
fn errors_are_machine_readable() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("bad.csv"), "w1,w2,r1\n1,2,3\n4,NaN,6\n").unwrap();
    let out = dapcnn(&["train", "--data", "bad.csv", "--layers", "1", "--degree", "1", "--output", "m.json"], d);
    let line = error_line(&out);
    assert!(line.starts_with("error: parse-error: "), "{line}");
    assert!(line.contains("row 2 column 2"), "{line}");

    fs::write(d.join("empty.csv"), "# nothing\nw1,r1\n").unwrap();
    let out = dapcnn(&["train", "--data", "empty.csv", "--layers", "1", "--degree", "1", "--output", "m.json"], d);
    assert!(error_line(&out).starts_with("error: empty-dataset: "));

    ok(&dapcnn(&["gen-data", "--benchmark", "ishigami", "--size", "64", "--output", "t.csv"], d));
    ok(&dapcnn(&["train", "--data", "t.csv", "--method", "apc", "--degree", "2", "--output", "a.json"], d));
    let doc = fs::read_to_string(d.join("a.json")).unwrap();
    fs::write(d.join("future.json"), doc.replacen("\"schema_version\": 1", "\"schema_version\": 7", 1)).unwrap();
    let out = dapcnn(&["eval", "--model", "future.json", "--data", "t.csv"], d);
    assert!(error_line(&out).starts_with("error: unsupported-schema: "));

    let out = dapcnn(&["gen-data", "--benchmark", "nope", "--size", "3", "--output", "x.csv"], d);
    assert!(!out.status.success());
}

#[test]
fn sweep_csv_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let args = [
        "sweep", "--benchmark", "ishigami", "--sizes", "10,50", "--validation-size", "100", "--max-iterations", "8", "--seed", "5",
    ];
    let a = dapcnn(&[&args[..], &["--output", "a.csv"]].concat(), d);
    ok(&a);
    let b = dapcnn(&[&args[..], &["--output", "b.csv", "--jobs", "1"]].concat(), d);
    ok(&b);
    let a = fs::read_to_string(d.join("a.csv")).unwrap();
    assert_eq!(a, fs::read_to_string(d.join("b.csv")).unwrap());
    let body: Vec<&str> = a.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(body[0], "size,method,n_train,n_weights,mse,rel_mean_err,rel_std_err,train_loss,iterations,error");
    assert_eq!(body.len(), 7);

    let out = dapcnn(&["sweep", "--benchmark", "ishigami", "--sizes", "10", "--validation-size", "0"], d);
    assert!(error_line(&out).starts_with("error: empty-dataset: "));
}
