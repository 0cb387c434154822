use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

use cqreg::datagen::{gen_setting, SimSetting};
use cqreg::qr::{fit_constrained, QuantileSpec};

fn cqreg(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cqreg"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) {
    let out = cqreg(dir, args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn json(path: PathBuf) -> Value {
    serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap()
}

fn error_json(out: &Output) -> Value {
    assert_eq!(out.status.code(), Some(1));
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().last().expect("error line");
    serde_json::from_str(line).unwrap_or_else(|_| panic!("not JSON: {text}"))
}

fn estimates(results: &Value) -> Vec<f64> {
    results["fit"]["coefficients"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["estimate"].as_f64().unwrap())
        .collect()
}

#[test]
fn intercept_only_median() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("d.csv"), "y\n3\n1\n2\n").unwrap();
    fs::write(
        dir.path().join("c.json"),
        r#"{"input": "d.csv", "response": "y", "tau": 0.5}"#,
    )
    .unwrap();
    ok(
        dir.path(),
        &["fit", "--config", "c.json", "--output-dir", "out"],
    );
    let r = json(dir.path().join("out/results.json"));
    assert_eq!(estimates(&r), vec![2.0]);
    assert_eq!(r["fit"]["loss"].as_f64().unwrap(), 1.0);
    assert!(r["config"].is_object());
}

/// Demand against price with a sign restriction on the log-price slope,
/// rows supplied out of date order.
#[test]
fn sign_constraint_on_transformed_column() {
    let dir = tempfile::tempdir().unwrap();
    let mut csv = String::from("date,demand,price,temp,school\n");
    for i in 0..120 {
        let day = (i * 37) % 120;
        let price = 20.0 + (day % 13) as f64 * 3.0;
        let temp = 10.0 + (day % 7) as f64;
        let school = (day % 7 < 5) as u8;
        // Demand increases with price here, so the constraint must bind.
        let demand = 100.0
            + 8.0 * (price as f64).ln()
            + 0.3 * temp * temp / 10.0
            + 2.0 * school as f64
            + ((day * 7919) % 17) as f64 / 4.0;
        csv.push_str(&format!(
            "2020-{:02}-{:02},{demand},{price},{temp},{school}\n",
            day / 28 + 1,
            day % 28 + 1
        ));
    }
    fs::write(dir.path().join("d.csv"), csv).unwrap();
    fs::write(
        dir.path().join("c.json"),
        r#"{
            "input": "d.csv", "order_by": "date", "response": "log_demand",
            "transforms": [
                {"column": "demand", "op": "log"},
                {"column": "price", "op": "log", "as": "log_price"},
                {"column": "temp", "op": "square"}
            ],
            "predictors": ["log_price", "temp_sq", "school"],
            "constraints": [{"coefficients": {"log_price": -1.0}, "bound": 0.0}],
            "tested": ["school"]
        }"#,
    )
    .unwrap();
    ok(
        dir.path(),
        &["fit", "--config", "c.json", "--output-dir", "out"],
    );
    let r = json(dir.path().join("out/results.json"));
    let b = estimates(&r);
    assert!(b[1] <= 0.0, "log-price coefficient {}", b[1]);
    assert_eq!(r["fit"]["active_constraints"], serde_json::json!([0]));

    ok(
        dir.path(),
        &[
            "test",
            "--config",
            "c.json",
            "--B",
            "100",
            "--output-dir",
            "t",
        ],
    );
    let t = json(dir.path().join("t/results.json"));
    assert_eq!(t["tests"].as_array().unwrap().len(), 2);
    for test in t["tests"].as_array().unwrap() {
        let p = test["p_value"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&p));
    }
}

#[test]
fn cli_fit_matches_library_bit_for_bit() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        dir.path(),
        &[
            "gen",
            "--setting",
            "2",
            "--n",
            "300",
            "--beta1",
            "0.3",
            "--tau",
            "0.8",
            "--seed",
            "9",
            "--output-dir",
            "g",
        ],
    );
    fs::write(
        dir.path().join("c.json"),
        r#"{
            "input": "g/data.csv", "response": "y", "predictors": ["x"], "tau": 0.8,
            "constraint_matrix": [[1, 0], [0, 1]], "constraint_offset": [0, 0]
        }"#,
    )
    .unwrap();
    ok(
        dir.path(),
        &["fit", "--config", "c.json", "--output-dir", "f"],
    );

    let sim = gen_setting(&SimSetting {
        id: 2,
        n: 300,
        beta0: 1.0,
        beta1: 0.3,
        tau: 0.8,
        seed: 9,
    })
    .unwrap();
    let lib = fit_constrained(&sim.data, QuantileSpec::new(0.8).unwrap(), 2).unwrap();
    let cli = estimates(&json(dir.path().join("f/results.json")));
    assert_eq!(cli, lib.beta.as_slice());
}

#[test]
fn gen_then_simulate_smoke() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        dir.path(),
        &["gen", "--setting", "1", "--n", "200", "--output-dir", "g"],
    );
    let data = fs::read_to_string(dir.path().join("g/data.csv")).unwrap();
    assert!(data.starts_with("# config: "));
    assert_eq!(data.lines().nth(1), Some("t,y,x"));
    assert_eq!(data.lines().count(), 202);

    for mode in ["type_i", "coverage", "power"] {
        let out = format!("s_{mode}");
        ok(
            dir.path(),
            &[
                "simulate",
                "--mode",
                mode,
                "--setting",
                "1",
                "--n",
                "200",
                "--reps",
                "10",
                "--B",
                "100",
                "--output-dir",
                &out,
            ],
        );
        let r = json(dir.path().join(&out).join("results.json"));
        let cells = r["cells"].as_array().unwrap();
        assert!(!cells.is_empty());
        for c in cells {
            let rate = c["rate"].as_f64().unwrap();
            assert!((0.0..=1.0).contains(&rate));
            assert_eq!(
                c["reps"].as_u64().unwrap() + c["failures"].as_u64().unwrap(),
                10
            );
        }
        let summary = fs::read_to_string(dir.path().join(&out).join("summary.csv")).unwrap();
        assert_eq!(summary.lines().count(), cells.len() + 2);
    }
}

fn small_problem(dir: &Path) {
    ok(
        dir,
        &[
            "gen",
            "--setting",
            "1",
            "--n",
            "150",
            "--seed",
            "4",
            "--output-dir",
            "g",
        ],
    );
    fs::write(
        dir.join("c.json"),
        r#"{
            "input": "g/data.csv", "response": "y", "predictors": ["x"],
            "constraints": [{"coefficients": {"x": 1}}, {"coefficients": {"intercept": 1}}],
            "tested": ["x"]
        }"#,
    )
    .unwrap();
}

#[test]
fn replicate_count_is_validated() {
    let dir = tempfile::tempdir().unwrap();
    small_problem(dir.path());
    for cmd in ["ci", "test"] {
        let e = error_json(&cqreg(
            dir.path(),
            &[cmd, "--config", "c.json", "--B", "99"],
        ));
        assert!(e["error"]["message"].as_str().unwrap().contains("B < 100"));
        assert_eq!(e["error"]["module"], "bootstrap");
    }
    ok(
        dir.path(),
        &[
            "ci",
            "--config",
            "c.json",
            "--B",
            "100",
            "--output-dir",
            "ci",
        ],
    );
    let intervals = fs::read_to_string(dir.path().join("ci/intervals.csv")).unwrap();
    assert_eq!(intervals.lines().count(), 4);
}

#[test]
fn identical_seeds_give_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    small_problem(dir.path());
    let runs: [&[&str]; 4] = [
        &["fit", "--config", "c.json"],
        &[
            "ci",
            "--config",
            "c.json",
            "--B",
            "200",
            "--seed",
            "5",
            "--dump-replicates",
        ],
        &[
            "test",
            "--config",
            "c.json",
            "--B",
            "200",
            "--seed",
            "5",
            "--dump-replicates",
        ],
        &[
            "simulate",
            "--mode",
            "coverage",
            "--setting",
            "3",
            "--n",
            "120",
            "--reps",
            "8",
            "--B",
            "100",
            "--seed",
            "2",
        ],
    ];
    for (k, args) in runs.iter().enumerate() {
        let mut outputs = Vec::new();
        for run in 0..2 {
            let root = dir.path().join(format!("run{run}"));
            fs::create_dir_all(&root).unwrap();
            fs::copy(dir.path().join("c.json"), root.join("c.json")).unwrap();
            if run == 0 || k == 0 {
                let _ = fs::create_dir_all(root.join("g"));
                fs::copy(dir.path().join("g/data.csv"), root.join("g/data.csv")).unwrap();
            }
            let mut a: Vec<&str> = args.to_vec();
            let out = format!("o{k}");
            a.extend(["--output-dir", &out]);
            ok(&root, &a);
            let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(root.join(&out))
                .unwrap()
                .map(|e| {
                    let e = e.unwrap();
                    (
                        e.file_name().into_string().unwrap(),
                        fs::read(e.path()).unwrap(),
                    )
                })
                .collect();
            files.sort();
            outputs.push(files);
        }
        assert!(!outputs[0].is_empty());
        assert_eq!(outputs[0], outputs[1], "{args:?}");
    }
}

#[test]
fn schema_and_data_errors_are_reported_as_json() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.json"), r#"{"tau": 0.5, "tua": 0.3}"#).unwrap();
    let e = error_json(&cqreg(dir.path(), &["fit", "--config", "bad.json"]));
    assert_eq!(e["error"]["module"], "config");
    assert!(e["error"]["message"].as_str().unwrap().contains("tua"));

    fs::write(dir.path().join("d.csv"), "y,x\n1,2\n2,oops\n3,1\n").unwrap();
    fs::write(
        dir.path().join("c.json"),
        r#"{"input": "d.csv", "response": "y", "predictors": ["x"]}"#,
    )
    .unwrap();
    let e = error_json(&cqreg(dir.path(), &["fit", "--config", "c.json"]));
    let msg = e["error"]["message"].as_str().unwrap();
    assert!(msg.contains("row 2") && msg.contains("'x'"), "{msg}");

    fs::write(
        dir.path().join("c2.json"),
        r#"{"input": "d.csv", "response": "y", "predictors": ["z"]}"#,
    )
    .unwrap();
    let e = error_json(&cqreg(dir.path(), &["fit", "--config", "c2.json"]));
    assert!(e["error"]["message"].as_str().unwrap().contains("'z'"));

    let e = error_json(&cqreg(dir.path(), &["fit", "--no-such-flag"]));
    assert_eq!(e["error"]["module"], "config");
}

#[test]
fn entangled_tested_coefficient_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    small_problem(dir.path());
    fs::write(
        dir.path().join("e.json"),
        r#"{
            "input": "g/data.csv", "response": "y", "predictors": ["x"],
            "constraints": [{"coefficients": {"x": 1, "intercept": 1}}],
            "tested": ["x"]
        }"#,
    )
    .unwrap();
    let e = error_json(&cqreg(
        dir.path(),
        &["test", "--config", "e.json", "--B", "100"],
    ));
    assert!(e["error"]["message"]
        .as_str()
        .unwrap()
        .contains("entangled"));
}
