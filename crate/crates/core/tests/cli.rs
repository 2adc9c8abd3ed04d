use std::fs;
use std::path::Path;

use hfo_core::cli::run;

fn hfo(args: &[&str]) -> i32 {
    run(std::iter::once("hfo").chain(args.iter().copied()))
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn simulate_train_eval_predict() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("sim.csv");
    let model = dir.path().join("svm.model");
    let report = dir.path().join("report.csv");
    let roc = dir.path().join("roc.csv");
    let preds = dir.path().join("pred.csv");
    let pgm = dir.path().join("pgm");

    let args = [
        "simulate",
        "--per-class",
        "12",
        "--snr-db",
        "15",
        "--seed",
        "3",
        "--out",
        p(&data),
    ];
    assert_eq!(hfo(&args), 0);
    let ds = hfo_core::io::read_dataset(&data).unwrap();
    assert_eq!(ds.len(), 36);

    assert_eq!(
        hfo(&[
            "scalogram",
            "--data",
            p(&data),
            "--out-dir",
            p(&pgm),
            "--limit",
            "2",
            "--image-size",
            "16"
        ]),
        0
    );
    let mut written: Vec<_> = fs::read_dir(&pgm)
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    written.sort();
    assert_eq!(written.len(), 2);
    let pgm_bytes = fs::read(pgm.join(&written[0])).unwrap();
    assert!(pgm_bytes.starts_with(b"P5\n16 16\n65535\n"));
    assert_eq!(pgm_bytes.len(), b"P5\n16 16\n65535\n".len() + 16 * 16 * 2);

    let train = [
        "train",
        "--model",
        "svm",
        "--data",
        p(&data),
        "--out",
        p(&model),
        "--report",
        p(&report),
        "--roc",
        p(&roc),
        "--image-size",
        "16",
        "--pool-size",
        "8",
        "--seed",
        "1",
    ];
    assert_eq!(hfo(&train), 0);
    let first = fs::read_to_string(&report).unwrap();
    assert!(first.starts_with("# metrics\n"));
    assert!(fs::read_to_string(&roc).unwrap().lines().count() > 3);

    // same split again through eval gives the same report
    assert_eq!(
        hfo(&[
            "eval",
            "--model",
            p(&model),
            "--data",
            p(&data),
            "--split",
            "0.7",
            "--report",
            p(&report)
        ]),
        0
    );
    assert_eq!(fs::read_to_string(&report).unwrap(), first);

    assert_eq!(
        hfo(&[
            "eval",
            "--model",
            p(&model),
            "--data",
            p(&data),
            "--kfold",
            "3",
            "--report",
            p(&report)
        ]),
        0
    );
    assert!(fs::read_to_string(&report).unwrap().contains("fold"));

    assert_eq!(
        hfo(&[
            "predict",
            "--model",
            p(&model),
            "--data",
            p(&data),
            "--out",
            p(&preds)
        ]),
        0
    );
    let text = fs::read_to_string(&preds).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "event_id,label,predicted,score_Ripple,score_FastRipple,score_SpikeRipple"
    );
    assert_eq!(lines.count(), 36);
}

#[test]
fn usage_and_runtime_errors() {
    assert_eq!(hfo(&["train", "--model", "tree"]), 2);
    assert_eq!(hfo(&["frobnicate"]), 2);
    assert_eq!(
        hfo(&["eval", "--model", "m", "--data", "d", "--kfold", "3", "--split", "0.5"]),
        2
    );
    assert_eq!(hfo(&["--help"]), 0);
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.csv");
    assert_eq!(
        hfo(&["predict", "--model", p(&missing), "--data", p(&missing)]),
        1
    );
    let out = dir.path().join("x.csv");
    assert_eq!(
        hfo(&[
            "simulate",
            "--profile",
            "imported",
            "--per-class",
            "2",
            "--out",
            p(&out)
        ]),
        1
    );
}
