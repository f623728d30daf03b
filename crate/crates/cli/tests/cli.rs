use std::path::Path;
use std::process::{Command, Output};

use pgsr_core::models::{Checkpoint, ModelConfig, ModelParams};
use pgsr_core::sigcore::Signal;
use sha2::{Digest, Sha256};

fn pgsr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pgsr"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout_lines(o: &Output) -> Vec<serde_json::Value> {
    String::from_utf8_lossy(&o.stdout)
        .lines()
        .map(|l| serde_json::from_str(l).unwrap_or_else(|e| panic!("{e}: {l}")))
        .collect()
}

fn sha(p: &Path) -> String {
    hex::encode(Sha256::digest(std::fs::read(p).unwrap()))
}

#[test]
fn leakage_demo_reports_bin_limited_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = pgsr(&[
        "leakage-demo",
        "--fps",
        "30",
        "--hr-bpm",
        "72",
        "--out-dir",
        out,
    ]);
    assert_eq!(o.status.code(), Some(0));
    let lines = stdout_lines(&o);
    assert_eq!(lines[0]["command"], "leakage-demo");
    let w = &lines[1]["windows"];
    assert!(w[0]["error_bpm"].as_f64().unwrap() >= 12.0);
    assert!(w[1]["error_bpm"].as_f64().unwrap() <= 3.0);
    assert_eq!(w[0]["bin_spacing_bpm"].as_f64(), Some(30.0));
    assert!(dir.path().join("psd.csv").is_file());

    let o = pgsr(&["leakage-demo", "--hr-bpm", "60", "--out-dir", out]);
    assert_eq!(
        stdout_lines(&o)[1]["windows"][0]["error_bpm"].as_f64(),
        Some(0.0)
    );
}

#[test]
fn usage_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(
        pgsr(&["leakage-demo", "--hr-bpm", "30", "--out-dir", out])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        pgsr(&["leakage-demo", "--bogus", "--out-dir", out])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        pgsr(&["ablate", "sideways", "--corpus", out, "--out", "x.csv"])
            .status
            .code(),
        Some(2)
    );
    let missing = dir.path().join("nope");
    let o = pgsr(&["train", "--corpus", missing.to_str().unwrap(), "--out", out]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn duplication_needs_no_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.csv");
    let s = Signal::new((0..60).map(|i| (i as f64 * 0.25).sin()).collect(), 30).unwrap();
    s.save(&input).unwrap();
    let out = dir.path().join("out.csv");
    let args = [
        "reconstruct",
        "--input",
        input.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--strategy",
    ];
    let o = pgsr(&[&args[..], &["duplication"]].concat());
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    assert_eq!(Signal::load(&out).unwrap().len(), 300);
    assert_eq!(
        pgsr(&[&args[..], &["fwd-bwd"]].concat()).status.code(),
        Some(2)
    );
}

#[test]
fn train_is_reproducible_and_eval_refuses_untrained() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    let c = corpus.to_str().unwrap();
    let o = pgsr(&["corpus", "--out", c, "--n-records", "10", "--seed", "3"]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );

    let mut hashes = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        let o = pgsr(&[
            "train",
            "--corpus",
            c,
            "--out",
            out.to_str().unwrap(),
            "--strategy",
            "fwd-bwd",
            "--seed",
            "7",
            "--epochs",
            "2",
            "--lr-t",
            "1e-3",
            "--lr-g",
            "1e-3",
        ]);
        assert_eq!(
            o.status.code(),
            Some(0),
            "{}",
            String::from_utf8_lossy(&o.stderr)
        );
        assert_eq!(stdout_lines(&o)[0]["train"]["seed"], 7);
        hashes.push((sha(&out.join("model.ckpt")), sha(&out.join("runlog.jsonl"))));
    }
    assert_eq!(hashes[0], hashes[1]);

    let csv = dir.path().join("eval.csv");
    let ck = dir.path().join("a").join("model.ckpt");
    let o = pgsr(&[
        "eval",
        "--corpus",
        c,
        "--checkpoint",
        ck.to_str().unwrap(),
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("record_id,gt_bpm,raw2s_psd,raw2s_ibi,recon10s_psd,recon10s_ibi\n"));
    assert_eq!(text.lines().count(), 1 + 2 * 5);

    let untrained = dir.path().join("untrained.ckpt");
    Checkpoint::new(ModelParams::init(ModelConfig::default(), 1).unwrap(), false)
        .save(&untrained)
        .unwrap();
    let o = pgsr(&[
        "eval",
        "--corpus",
        c,
        "--checkpoint",
        untrained.to_str().unwrap(),
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("untrained"));
}
