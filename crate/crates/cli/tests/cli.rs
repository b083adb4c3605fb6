use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn pcrf(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pcrf"))
        .args(args)
        .current_dir(cwd)
        .env("PCRF_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], cwd: &Path) -> String {
    let out = pcrf(args, cwd);
    assert!(
        out.status.success(),
        "pcrf {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str], cwd: &Path) -> i32 {
    pcrf(args, cwd).status.code().expect("exit code")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

const TINY: &[&str] = &[
    "--subjects",
    "5",
    "--sequences",
    "3",
    "--frames",
    "20",
    "--seed",
    "4",
];
const FAST: &[&str] = &["--trees", "6", "--candidate-scale", "0.1"];

fn corpus(dir: &Path, name: &str, extra: &[&str]) {
    let mut args = vec!["synth-gen", "--out", name];
    args.extend_from_slice(TINY);
    args.extend_from_slice(extra);
    ok(&args, dir);
}

fn train(dir: &Path, data: &str, out: &str, models: &str) {
    let mut args = vec!["train", "--data", data, "--out", out, "--models", models];
    args.extend_from_slice(FAST);
    ok(&args, dir);
}

/// Sequence decisions recomputed from `traces.csv`: the label of the
/// largest non-neutral probability, earliest frame and lowest label first.
fn decisions_from_traces(path: &Path) -> Vec<(String, String)> {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let labels: Vec<&str> = header[5..]
        .iter()
        .map(|h| h.trim_start_matches("p_"))
        .collect();
    let mut out: Vec<(String, String, f64)> = Vec::new();
    for line in lines {
        let cols: Vec<&str> = line.split(',').collect();
        let seq = cols[0].to_string();
        if out.last().is_none_or(|o| o.0 != seq) {
            out.push((seq, String::new(), f64::NEG_INFINITY));
        }
        let cur = out.last_mut().unwrap();
        for (l, v) in labels.iter().zip(&cols[5..]) {
            let v: f64 = v.parse().unwrap();
            if *l != "neutral" && v > cur.2 {
                cur.1 = l.to_string();
                cur.2 = v;
            }
        }
    }
    out.into_iter().map(|(s, l, _)| (s, l)).collect()
}

#[test]
fn generate_train_evaluate() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    corpus(dir, "corpus", &[]);
    for f in [
        "manifest.csv",
        "manifest.json",
        "generator.json",
        "run.json",
    ] {
        assert!(dir.join("corpus").join(f).exists(), "{f}");
    }
    train(dir, "corpus/manifest.csv", "model.pcrf", "rf,full,pcrf");
    let manifest = json(&dir.join("model.pcrf.json"));
    assert_eq!(manifest["command"], "train");
    assert_eq!(manifest["options"]["static_params"]["n_trees"], 6);
    assert_eq!(manifest["inputs"][0]["sha256"].as_str().unwrap().len(), 64);
    assert_eq!(
        manifest["summary"]["models"],
        serde_json::json!(["rf", "full", "pcrf"])
    );

    for kind in ["rf", "full", "pcrf"] {
        let out = format!("eval_{kind}");
        let stdout = ok(
            &[
                "eval",
                "--data",
                "corpus/manifest.csv",
                "--model",
                "model.pcrf",
                "--kind",
                kind,
                "--out",
                &out,
            ],
            dir,
        );
        assert!(stdout.starts_with(kind));
        let metrics = json(&dir.join(&out).join("metrics.json"));
        assert_eq!(metrics["sequences"], 15);

        let sequences = fs::read_to_string(dir.join(&out).join("sequences.csv")).unwrap();
        let rows: Vec<Vec<String>> = sequences
            .lines()
            .skip(1)
            .map(|l| l.split(',').map(String::from).collect())
            .collect();
        let replay = decisions_from_traces(&dir.join(&out).join("traces.csv"));
        assert_eq!(replay.len(), rows.len());
        let mut correct = 0;
        for (row, (seq, label)) in rows.iter().zip(&replay) {
            assert_eq!(&row[0], seq);
            assert_eq!(&row[3], label);
            correct += usize::from(row[2] == *label);
        }
        let accuracy = metrics["accuracy"].as_f64().unwrap();
        assert_eq!(accuracy, correct as f64 / rows.len() as f64);
    }
}

#[test]
fn identical_config_gives_identical_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    corpus(dir, "a", &[]);
    corpus(dir, "b", &[]);
    assert_eq!(
        fs::read(dir.join("a/manifest.csv")).unwrap(),
        fs::read(dir.join("b/manifest.csv")).unwrap()
    );
    train(dir, "a/manifest.csv", "m1.pcrf", "pcrf");
    train(dir, "a/manifest.csv", "m2.pcrf", "pcrf");
    assert_eq!(
        fs::read(dir.join("m1.pcrf")).unwrap(),
        fs::read(dir.join("m2.pcrf")).unwrap()
    );
    for out in ["e1", "e2"] {
        ok(
            &[
                "eval",
                "--data",
                "a/manifest.csv",
                "--model",
                "m1.pcrf",
                "--out",
                out,
                "--trees",
                "4",
            ],
            dir,
        );
    }
    for f in ["traces.csv", "sequences.csv", "metrics.json"] {
        assert_eq!(
            fs::read(dir.join("e1").join(f)).unwrap(),
            fs::read(dir.join("e2").join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn config_file_with_flag_overrides() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    fs::write(
        dir.join("gen.json"),
        r#"{"n_subjects": 3, "frames_per_sequence": 12, "seed": 9}"#,
    )
    .unwrap();
    ok(
        &[
            "synth-gen",
            "--out",
            "c",
            "--config",
            "gen.json",
            "--sequences",
            "2",
        ],
        dir,
    );
    let run = json(&dir.join("c/run.json"));
    assert_eq!(run["options"]["n_subjects"], 3);
    assert_eq!(run["options"]["n_sequences_per_subject"], 2);
    assert_eq!(run["options"]["seed"], 9);
    assert_eq!(run["options"]["noise"], 0.008);
}

#[test]
fn multiview_model_on_frontal_corpus() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    corpus(dir, "corpus", &[]);
    train(dir, "corpus/manifest.csv", "mv.pcrf", "mvpcrf");
    let stdout = ok(
        &[
            "eval",
            "--data",
            "corpus/manifest.csv",
            "--model",
            "mv.pcrf",
            "--kind",
            "mvpcrf",
            "--out",
            "ev",
        ],
        dir,
    );
    assert!(stdout.starts_with("mvpcrf"));
}

#[test]
fn oob_and_bench_reports() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    corpus(dir, "corpus", &[]);
    let mut args = vec![
        "oob",
        "--data",
        "corpus/manifest.csv",
        "--out",
        "oob",
        "--models",
        "pcrf",
    ];
    args.extend_from_slice(FAST);
    ok(&args, dir);
    let oob = json(&dir.join("oob/oob.json"));
    let forests = oob["forests"].as_array().unwrap();
    assert_eq!(forests[0]["forest"], "static");
    assert!(forests[0]["confusion"].as_array().unwrap().len() == 7);
    assert!(forests.iter().any(|f| f["forest"] == "pcrf/neutral"));

    train(dir, "corpus/manifest.csv", "m.pcrf", "pcrf");
    let stdout = ok(
        &[
            "bench",
            "--data",
            "corpus/manifest.csv",
            "--model",
            "m.pcrf",
            "--kind",
            "pcrf",
            "--trees",
            "20,40",
            "--frames",
            "20",
            "--out",
            "bench.json",
        ],
        dir,
    );
    let report: Value = serde_json::from_str(&stdout).unwrap();
    assert!(report["channels"]["mean_ms"].as_f64().unwrap() > 0.0);
    assert_eq!(report["evaluation"].as_array().unwrap().len(), 2);
    assert_eq!(report["evaluation"][1]["trees"], 40);
    assert!(dir.join("bench.json").exists());
    assert!(dir.join("bench.json.run.json").exists());
}

#[test]
fn exit_codes_and_cleanup() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    assert_eq!(code(&["train", "--bogus"], dir), 1);
    assert_eq!(
        code(&["synth-gen", "--out", "x", "--pose-mode", "sideways"], dir),
        1
    );
    assert!(!dir.join("x").exists());
    assert_eq!(
        code(&["train", "--data", "missing.csv", "--out", "m.pcrf"], dir),
        2
    );

    corpus(dir, "corpus", &[]);
    let text = fs::read_to_string(dir.join("corpus/manifest.csv")).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    lines.swap(2, 3);
    fs::create_dir(dir.join("bad")).unwrap();
    fs::copy(
        dir.join("corpus/manifest.json"),
        dir.join("bad/manifest.json"),
    )
    .unwrap();
    fs::write(dir.join("bad/manifest.csv"), lines.join("\n")).unwrap();
    let out = pcrf(
        &["train", "--data", "bad/manifest.csv", "--out", "bad.pcrf"],
        dir,
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains(":4:"));
    assert!(!dir.join("bad.pcrf").exists());

    train(dir, "corpus/manifest.csv", "rf.pcrf", "rf");
    let args = [
        "eval",
        "--data",
        "corpus/manifest.csv",
        "--model",
        "rf.pcrf",
        "--kind",
        "pcrf",
        "--out",
        "ev",
    ];
    assert_eq!(code(&args, dir), 1);
    assert!(!dir.join("ev").exists());
    assert_eq!(
        code(
            &[
                "bench",
                "--data",
                "corpus/manifest.csv",
                "--model",
                "rf.pcrf",
                "--trees",
                "0"
            ],
            dir
        ),
        1
    );

    let out = Command::new(env!("CARGO_BIN_EXE_pcrf"))
        .args(["synth-gen", "--out", "t"])
        .current_dir(dir)
        .env("PCRF_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}
