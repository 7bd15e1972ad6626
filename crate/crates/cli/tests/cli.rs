use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tunability::hyperspace::{parse_space, DatasetInfo, Value};
use tunability::metadata::{write_meta, ExperimentRow, MetaDataset};
use tunability::metrics::Measure;
use tunability::report::{read_defaults, read_overall};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tunability"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn files(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let path = e.unwrap().path();
        if path.is_dir() {
            for (k, v) in files(&path) {
                out.insert(Path::new(path.file_name().unwrap()).join(k), v);
            }
        } else {
            out.insert(path.file_name().unwrap().into(), std::fs::read(&path).unwrap());
        }
    }
    out
}

/// Brier meta-data of two quadratic risk curves with minima at 0.2 and 0.6,
/// observed on the 101-point grid of [0, 1].
fn quadratic_meta(dir: &Path) -> PathBuf {
    let space = parse_space(
        r#"{"algorithm":"quad","params":[{"name":"theta","kind":"numeric","lower":0,"upper":1}]}"#,
    )
    .unwrap();
    let mut rows = Vec::new();
    for (id, centre) in [("a", 0.2), ("b", 0.6)] {
        for i in 0..=100 {
            let x = i as f64 / 100.0;
            rows.push(ExperimentRow {
                dataset_id: id.into(),
                config: space.configuration(vec![Value::Num(x)]),
                measures: BTreeMap::from([(Measure::Brier, (x - centre).powi(2))]),
            });
        }
    }
    let meta = MetaDataset {
        algorithm: "quad".into(),
        space,
        datasets: vec![DatasetInfo::new("a", 100, 2).unwrap(), DatasetInfo::new("b", 100, 2).unwrap()],
        measures: vec![Measure::Brier],
        rows,
        seed: None,
    };
    let path = dir.join("quad.csv");
    write_meta(&meta, &path).unwrap();
    path
}

fn analyze_quadratic(meta: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        "analyze", "--meta", p(meta), "--measure", "brier", "--surrogate", "knn", "--mode", "grid",
        "--grid-levels", "101", "--seed", "1", "--out", p(out),
    ];
    args.extend_from_slice(extra);
    run(&args)
}

#[test]
fn generate_counts_rows_and_is_repeatable() {
    let dir = tempfile::tempdir().unwrap();
    let gen = |out: &Path, workers: &str| {
        let o = run(&[
            "generate", "--learners", "knn", "--datasets", "3", "--rows", "30", "--seed", "7",
            "--workers", workers, "--out", p(out),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    };
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    gen(&a, "1");
    gen(&b, "8");
    let data = std::fs::read_to_string(a.join("kknn.csv")).unwrap();
    assert_eq!(data.lines().count(), 1 + 90);
    assert_eq!(files(&a), files(&b));
}

#[test]
fn missing_seed_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["generate", "--learners", "knn", "--datasets", "1", "--rows", "5", "--out", p(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["analyze", "--meta", "nowhere.csv", "--out", p(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["analyze", "--bogus-flag"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unreadable_meta_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["analyze", "--meta", p(&dir.path().join("missing.csv")), "--seed", "1", "--out", p(dir.path())]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!dir.path().join("defaults.csv").exists());
}

#[test]
fn two_quadratics_give_defaults_at_point_four() {
    let dir = tempfile::tempdir().unwrap();
    let meta = quadratic_meta(dir.path());
    let out = dir.path().join("out");
    let o = analyze_quadratic(&meta, &out, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let defaults = read_defaults(&out.join("defaults.csv")).unwrap();
    let theta: f64 = defaults[0].def_o.parse().unwrap();
    assert!((theta - 0.4).abs() <= 0.01, "theta* = {theta}");
    let overall = read_overall(&out.join("tunability_overall.csv")).unwrap();
    assert!((overall[0].tun_o.unwrap() - 0.04).abs() < 1e-9);
    // no package defaults exist for a custom space
    assert_eq!(overall[0].tun_p, None);
}

#[test]
fn package_reference_fills_improvement() {
    let dir = tempfile::tempdir().unwrap();
    let meta = quadratic_meta(dir.path());
    let pkg = dir.path().join("pkg.json");
    std::fs::write(&pkg, r#"{"quad": {"theta": 0.9}}"#).unwrap();
    let out = dir.path().join("out");
    let o = analyze_quadratic(&meta, &out, &["--reference", "package", "--package-defaults", p(&pkg)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let row = &read_overall(&out.join("tunability_overall.csv")).unwrap()[0];
    let (tp, to) = (row.tun_p.unwrap(), row.tun_o.unwrap());
    // (0.7^2 + 0.3^2) / 2
    assert!((tp - 0.29).abs() < 1e-9, "Tun.P = {tp}");
    assert!((row.improv.unwrap() - (tp - to)).abs() < 1e-12);

    let o = analyze_quadratic(&meta, &dir.path().join("o2"), &["--reference", "package"]);
    assert_eq!(o.status.code(), Some(1), "package reference without defaults must fail");
}

#[test]
fn config_file_supplies_flags_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    quadratic_meta(dir.path());
    std::fs::write(
        dir.path().join("run.toml"),
        "seed = 1\nmeta = \"quad.csv\"\nout = \"from_config\"\nmeasure = \"brier\"\nsurrogate = \"knn\"\nmode = \"grid\"\ngrid_levels = 101\n",
    )
    .unwrap();
    let cfg = dir.path().join("run.toml");
    let o = run(&["analyze", "--config", p(&cfg)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.path().join("from_config/defaults.csv").exists());

    let flag_out = dir.path().join("from_flag");
    let o = run(&["analyze", "--config", p(&cfg), "--out", p(&flag_out), "--grid-levels", "11"]);
    assert!(o.status.success());
    assert!(flag_out.join("defaults.csv").exists());

    std::fs::write(dir.path().join("bad.toml"), "sede = 1\n").unwrap();
    let o = run(&["analyze", "--config", p(&dir.path().join("bad.toml"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn surrogates_report_and_error_entries() {
    let dir = tempfile::tempdir().unwrap();
    let meta_dir = dir.path().join("meta");
    let o = run(&[
        "generate", "--learners", "knn", "--datasets", "2", "--rows", "12", "--seed", "3", "--out", p(&meta_dir),
    ]);
    assert!(o.status.success());
    let meta = meta_dir.join("kknn.csv");
    let out = dir.path().join("s");
    let o = run(&[
        "surrogates", "--meta", p(&meta), "--kinds", "constant,linear,knn,cart,forest", "--reps", "2", "--folds",
        "5", "--trees", "10", "--seed", "1", "--out", p(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let table = std::fs::read_to_string(out.join("surrogate_eval.csv")).unwrap();
    assert_eq!(table.lines().count(), 1 + 2 * 5);
    assert!(table.starts_with("dataset_id,kind,r2,tau,completed_folds,planned_folds,error"));

    // 12 rows per dataset cannot fill 20 folds
    let o = run(&[
        "surrogates", "--meta", p(&meta), "--kinds", "constant", "--folds", "20", "--seed", "1", "--out",
        p(&dir.path().join("s2")),
    ]);
    assert_eq!(o.status.code(), Some(1));
    let table = std::fs::read_to_string(dir.path().join("s2/surrogate_eval.csv")).unwrap();
    assert!(table.lines().skip(1).all(|l| !l.ends_with(',')));
}

#[test]
fn analyze_outputs_are_identical_across_workers_and_reruns() {
    let dir = tempfile::tempdir().unwrap();
    let meta_dir = dir.path().join("meta");
    let o = run(&[
        "generate", "--learners", "knn", "--datasets", "3", "--rows", "40", "--seed", "11", "--out", p(&meta_dir),
    ]);
    assert!(o.status.success());
    let meta = meta_dir.join("kknn.csv");
    let analyze = |out: &Path, workers: &str| {
        let o = run(&[
            "analyze", "--meta", p(&meta), "--seed", "5", "--workers", workers, "--out", p(out), "--pairs",
            "--cv-across-datasets", "3", "--budget", "3000", "--pair-budget", "500", "--trees", "20",
            "--histograms", "6", "--reference", "package",
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        files(out)
    };
    let one = analyze(&dir.path().join("w1"), "1");
    let eight = analyze(&dir.path().join("w8"), "8");
    let again = analyze(&dir.path().join("w8b"), "8");
    assert!(one.contains_key(Path::new("report.json")));
    assert!(one.contains_key(Path::new("hist_k.csv")));
    assert_eq!(one, eight);
    assert_eq!(eight, again);
}
