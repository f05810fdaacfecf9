use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn placerec(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_placerec"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .expect("binary runs")
}

fn code(args: &[&str]) -> i32 {
    placerec(args).status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn tiny_dataset(out: &Path) {
    let args = [
        "--out",
        s(out),
        "synth-dataset",
        "--classes",
        "2",
        "--images-per-class",
        "4",
        "--sequences",
        "2",
        "--width",
        "64",
        "--height",
        "48",
    ];
    assert_eq!(code(&args), 0);
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(code(&[]), 1);
    assert_eq!(code(&["frobnicate"]), 1);
    assert_eq!(code(&["features"]), 1);
    assert_eq!(code(&["--jobs", "many", "features", "m.tsv"]), 1);
    assert_eq!(code(&["--help"]), 0);
    assert_eq!(code(&["--version"]), 0);
}

#[test]
fn bad_inputs_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nope.tsv");
    assert_eq!(code(&["--out", s(&tmp.path().join("o")), "features", s(&missing)]), 2);

    let data = tmp.path().join("data");
    tiny_dataset(&data);
    let manifest = data.join("manifest.tsv");
    let conf = tmp.path().join("bad.conf");
    fs::write(&conf, "classifier.kind = perceptron\n").unwrap();
    assert_eq!(code(&["--config", s(&conf), "features", s(&manifest)]), 2);
    fs::write(&conf, "no.such.key = 1\n").unwrap();
    assert_eq!(code(&["--config", s(&conf), "features", s(&manifest)]), 2);

    let out = tmp.path().join("run");
    let run = |extra: &[&str]| {
        let mut args = vec!["--config", s(&conf), "--out", s(&out)];
        args.extend_from_slice(extra);
        placerec(&args)
    };
    fs::write(&conf, "features.parts = rgb,hsv\n").unwrap();
    for stage in ["features", "train", "predict"] {
        assert!(run(&[stage, s(&manifest)]).status.success(), "{stage}");
    }
    let evaluated = run(&["evaluate", s(&manifest)]);
    assert!(evaluated.status.success());
    assert!(String::from_utf8_lossy(&evaluated.stdout).contains("accuracy"));

    // the model was trained on rgb,hsv; predicting with rgb alone is refused
    fs::write(&conf, "features.parts = rgb\n").unwrap();
    assert_eq!(run(&["predict", s(&manifest)]).status.code(), Some(2));
    // no selected rows
    assert_eq!(run(&["train", s(&manifest), "--sequences", "9"]).status.code(), Some(2));
}

#[test]
fn unwritable_output_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let blocker = tmp.path().join("file");
    fs::write(&blocker, "x").unwrap();
    assert_eq!(code(&["--out", s(&blocker), "synth-dataset", "--classes", "1", "--images-per-class", "1"]), 3);
}
