use std::path::Path;
use std::process::{Command, Output};

use gwpva::datasets;
use gwpva::io::{parse_life_table, write_life_table, PosteriorDocument};

const FLAT_PRIOR: &str =
    r#"{"format_version":1,"types":1,"pairs":[{"from":1,"to":1,"kind":"categorical","kappa":4,"rule":"flat"}]}"#;

fn gwpva(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gwpva"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn fitted(dir: &Path) {
    std::fs::write(dir.join("table.csv"), write_life_table(&datasets::synthetic_learning_table())).unwrap();
    std::fs::write(dir.join("prior.json"), FLAT_PRIOR).unwrap();
    ok(&gwpva(
        &["fit", "--table", "table.csv", "--prior", "prior.json", "--out", "post.json"],
        dir,
    ));
}

#[test]
fn fit_on_learning_table() {
    let dir = tempfile::tempdir().unwrap();
    fitted(dir.path());
    let text = std::fs::read_to_string(dir.path().join("post.json")).unwrap();
    let doc = PosteriorDocument::from_json(&text).unwrap();
    let post = doc.posterior().unwrap();
    let one = gwpva::model::TypeIndex::new(1, 1).unwrap();
    assert_eq!(
        post.pair(one, one),
        &gwpva::inference::PairParams::Categorical {
            alpha: vec![145.0, 128.0, 20.0, 14.0, 8.0]
        }
    );
    let m = doc.mean_matrix.unwrap();
    assert!((m[0][0] - 242.0 / 315.0).abs() < 1e-12);
    assert_eq!(doc.intervals.len(), 5);
}

#[test]
fn time_bounds_on_learning_posterior() {
    let dir = tempfile::tempdir().unwrap();
    fitted(dir.path());
    let stdout = ok(&gwpva(
        &[
            "time-bounds", "--posterior", "post.json", "--pop", "22", "--alpha", "0.05", "--nprec", "2000",
            "--seed", "7", "--curves", "curves.csv", "--out", "tb.json",
        ],
        dir.path(),
    ));
    assert!(stdout.contains("extinction between"));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("tb.json")).unwrap()).unwrap();
    let upper = report["results"]["bounds"]["upper"].as_u64().unwrap();
    assert!((29..=33).contains(&upper), "upper {upper}");
    assert_eq!(report["inputs"]["seed"], 7);
    assert_eq!(report["inputs"]["n_prec"], 2000);
    let curves = std::fs::read_to_string(dir.path().join("curves.csv")).unwrap();
    assert!(curves.starts_with("t,upper,lower\n"));
}

#[test]
fn reports_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    fitted(dir.path());
    for out in ["a.json", "b.json"] {
        ok(&gwpva(
            &["viability", "--posterior", "post.json", "--nprec", "500", "--seed", "3", "--out", out],
            dir.path(),
        ));
    }
    let a = std::fs::read(dir.path().join("a.json")).unwrap();
    let b = std::fs::read(dir.path().join("b.json")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn simulate_is_deterministic_and_tables_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    fitted(dir.path());
    let run = |out: &str, tables: &str| {
        ok(&gwpva(
            &[
                "simulate", "--posterior", "post.json", "--pop", "100", "--horizon", "6", "--seed", "11", "--reps",
                "3", "--tables", tables, "--out", out,
            ],
            dir.path(),
        ))
    };
    let first = run("s1.json", "t1");
    let second = run("s2.json", "t2");
    assert_eq!(first, second);
    assert_eq!(
        std::fs::read(dir.path().join("s1.json")).unwrap(),
        std::fs::read(dir.path().join("s2.json")).unwrap()
    );
    for r in 0..3 {
        let name = format!("replicate_{r}.csv");
        let a = std::fs::read_to_string(dir.path().join("t1").join(&name)).unwrap();
        let b = std::fs::read_to_string(dir.path().join("t2").join(&name)).unwrap();
        assert_eq!(a, b);
        let table = parse_life_table(&a, Some(1)).unwrap();
        assert_eq!(write_life_table(&table), a);
    }
}

#[test]
fn baseline_from_table() {
    let dir = tempfile::tempdir().unwrap();
    fitted(dir.path());
    let stdout = ok(&gwpva(&["baseline", "--table", "table.csv", "--level", "0.9"], dir.path()));
    assert!(stdout.contains("abundances: 100 75 59 43 33 22"), "{stdout}");
}

#[test]
fn stochastic_commands_require_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    fitted(dir.path());
    let out = gwpva(&["viability", "--posterior", "post.json"], dir.path());
    assert!(!out.status.success());
}

#[test]
fn errors_are_machine_readable() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.csv"), "i,j,k,t,count\n1,1,2,0,-3\n").unwrap();
    std::fs::write(dir.path().join("prior.json"), FLAT_PRIOR).unwrap();
    let out = gwpva(
        &["fit", "--table", "bad.csv", "--prior", "prior.json", "--out", "p.json"],
        dir.path(),
    );
    assert!(!out.status.success());
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "parse");
    assert!(err["message"].as_str().unwrap().contains("line 2"));

    let out = gwpva(&["fit", "--table", "missing.csv", "--prior", "prior.json", "--out", "p.json"], dir.path());
    assert!(!out.status.success());
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "io");
}

#[test]
fn scenarios_table() {
    let dir = tempfile::tempdir().unwrap();
    fitted(dir.path());
    let stdout = ok(&gwpva(
        &["scenarios", "--posterior", "post.json", "--quantiles", "0.05,0.5,0.95", "--out", "sc.json"],
        dir.path(),
    ));
    assert_eq!(stdout.lines().count(), 3);
}
