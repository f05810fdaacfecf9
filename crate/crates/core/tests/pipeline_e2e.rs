use std::fs;
use std::path::Path;

use placerec_core::classify::{FeatureConfig, PartKind};
use placerec_core::error::Error;
use placerec_core::eval::ConfusionMatrix;
use placerec_core::histogram::FeatureHistogram;
use placerec_core::pipeline::*;

fn small(dir: &Path) -> Manifest {
    let spec = SynthSpec {
        classes: 3,
        images_per_class: 6,
        sequences: 2,
        width: 128,
        height: 96,
        seed: 3,
    };
    synth_dataset(dir, &spec).unwrap();
    Manifest::load(&dir.join("manifest.tsv")).unwrap()
}

fn quick_config() -> PipelineConfig {
    PipelineConfig {
        vocab_k: 8,
        ..PipelineConfig::default()
    }
}

#[test]
fn features_are_cached_and_failures_are_isolated() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = small(&tmp.path().join("data"));
    let three = Manifest::new(manifest.entries()[..3].to_vec()).unwrap();
    let ws = Workspace::new(tmp.path().join("out"));
    let cfg = quick_config();

    let first = cmd_features(&three, &cfg, &ws).unwrap();
    assert_eq!((first.written, first.unchanged, first.failed), (3, 0, 0));
    assert_eq!(fs::read_dir(ws.features_dir()).unwrap().count(), 3);
    let again = cmd_features(&three, &cfg, &ws).unwrap();
    assert_eq!((again.written, again.unchanged), (0, 3));

    fs::write(&three.entries()[1].path, b"P6\nnot an image").unwrap();
    let broken = cmd_features(&three, &cfg, &ws).unwrap();
    assert_eq!((broken.unchanged, broken.failed), (2, 1));
    assert!(!ws.bundle_path(&three.entries()[1]).exists());

    for e in three.entries() {
        fs::write(&e.path, b"junk").unwrap();
    }
    assert!(cmd_features(&three, &cfg, &ws).is_err());
}

#[test]
fn full_run_is_reproducible_and_consistent() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = small(&tmp.path().join("data"));
    let train = manifest.select_sequences(&["1"]);
    let test = manifest.select_sequences(&["2"]);
    let cfg = quick_config();

    let ws = Workspace::new(tmp.path().join("a"));
    cmd_features(&manifest, &cfg, &ws).unwrap();
    cmd_vocab(&train, &cfg, &ws).unwrap();
    let vocab = fs::read(ws.vocab_path()).unwrap();
    cmd_vocab(&train, &cfg, &ws).unwrap();
    assert_eq!(fs::read(ws.vocab_path()).unwrap(), vocab);

    assert_eq!(cmd_encode(&manifest, &cfg, &ws).unwrap(), manifest.len());
    for e in manifest.entries() {
        let bow = FeatureHistogram::from_csv(&fs::read_to_string(ws.bow_path(e)).unwrap()).unwrap();
        assert_eq!(bow.len(), 8);
        assert!((bow.total() - 1.0).abs() <= 1e-9);
    }

    cmd_train(&train, &cfg, &ws, &ws.model_path()).unwrap();
    let preds = cmd_predict(&test, &cfg, &ws, &ws.model_path(), &ws.predictions_path()).unwrap();
    assert_eq!(preds.len(), test.len());
    assert_eq!(load_predictions(&ws.predictions_path()).unwrap().len(), preds.len());

    let report = cmd_evaluate(&test, &preds, &ws.report_dir()).unwrap();
    let cm = ConfusionMatrix::from_csv(&fs::read_to_string(ws.report_dir().join("confusion.csv")).unwrap()).unwrap();
    assert_eq!(cm, report.confusion);
    assert_eq!(cm.labels().len(), 3);

    // a model trained for another feature layout is refused
    let rgb_only = PipelineConfig {
        features: FeatureConfig::equal(&[PartKind::Rgb]).unwrap(),
        ..cfg.clone()
    };
    let err = cmd_predict(&test, &rgb_only, &ws, &ws.model_path(), &tmp.path().join("p.csv")).unwrap_err();
    assert!(matches!(err, Error::ConfigMismatch(_)), "{err}");
}

#[test]
fn nn_with_open_thresholds_recognizes_its_gallery() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = small(&tmp.path().join("data"));
    let cfg = PipelineConfig {
        features: FeatureConfig::equal(&[PartKind::Rgb, PartKind::Hsv]).unwrap(),
        classifier: ClassifierKind::Nn,
        nn_thresholds: NnThresholds::Open,
        ..quick_config()
    };
    let ws = Workspace::new(tmp.path().join("out"));
    cmd_features(&manifest, &cfg, &ws).unwrap();
    cmd_train(&manifest, &cfg, &ws, &ws.model_path()).unwrap();
    let preds = cmd_predict(&manifest, &cfg, &ws, &ws.model_path(), &ws.predictions_path()).unwrap();
    let report = cmd_evaluate(&manifest, &preds, &ws.report_dir()).unwrap();
    assert_eq!(report.confusion.accuracy(), 1.0);
    assert!(preds.iter().all(|p| p.score.abs() <= 1e-9), "{preds:?}");
}
