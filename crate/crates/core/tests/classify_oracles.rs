use nalgebra::DMatrix;
use placerec_core::classify::*;
use placerec_core::eval::UNKNOWN;
use placerec_core::histogram::FeatureHistogram;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn random_points(n: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect()
}

#[test]
fn gram_matrices_are_psd() {
    let xs = random_points(50, 5, 1);
    for spec in [KernelSpec::Rbf { sigma: 0.8 }, KernelSpec::Linear { c: 0.0 }] {
        let g = gram_matrix(&xs, &spec);
        let m = DMatrix::from_fn(50, 50, |i, j| g[i][j]);
        assert_eq!(m, m.transpose());
        let min = m.symmetric_eigen().eigenvalues.min();
        assert!(min >= -1e-8, "{spec}: {min}");
    }
}

fn blobs(per: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<String>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 0.1).unwrap();
    let centers = [(0.0, 0.0), (3.0, 0.0), (1.5, 3.0)];
    let mut x = Vec::new();
    let mut y = Vec::new();
    for (c, (cx, cy)) in centers.iter().enumerate() {
        for _ in 0..per {
            x.push(vec![cx + noise.sample(&mut rng), cy + noise.sample(&mut rng)]);
            y.push(format!("blob{c}"));
        }
    }
    (x, y)
}

#[test]
fn three_blobs_are_separated() {
    let (x, y) = blobs(30, 4);
    let sigma = median_heuristic(&x, 0).unwrap();
    let model = ova_train(&x, &y, KernelSpec::Rbf { sigma }, DEFAULT_C, "toy").unwrap();
    let correct = x.iter().zip(&y).filter(|(v, l)| ova_predict(&model, v).unwrap().0 == **l).count();
    assert!(correct as f64 / x.len() as f64 >= 0.99, "{correct}");
    for m in &model.machines {
        assert!(m.coef.iter().sum::<f64>().abs() <= 1e-6);
        assert!(m.coef.iter().all(|c| c.abs() <= DEFAULT_C + 1e-9));
    }
}

#[test]
fn binary_dual_constraint_holds() {
    let xs = random_points(40, 3, 2);
    let y: Vec<f64> = xs.iter().map(|v| if v[0] + 0.3 * v[1] > 0.1 { 1.0 } else { -1.0 }).collect();
    for spec in [KernelSpec::Linear { c: 0.0 }, KernelSpec::Rbf { sigma: 0.5 }] {
        let m = svm_train(&xs, &y, spec, 1.0).unwrap();
        assert!(m.coef.iter().sum::<f64>().abs() <= 1e-6);
    }
}

fn hist_feature(cfg: &FeatureConfig, rng: &mut ChaCha8Rng, center: &[f64]) -> CompositeFeature {
    let parts = cfg
        .parts()
        .iter()
        .map(|_| {
            let raw: Vec<f64> = center.iter().map(|c| c + rng.gen_range(0.0..0.3)).collect();
            FeatureHistogram::from_values(raw).unwrap().normalize_l1().unwrap()
        })
        .collect();
    cfg.compose(parts).unwrap()
}

#[test]
fn nn_matches_exhaustive_scan() {
    let cfg = FeatureConfig::equal(&[PartKind::Rgb, PartKind::Hsv]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let centers = [[1.0, 0.1, 0.1, 0.1], [0.1, 1.0, 0.1, 0.1], [0.1, 0.1, 1.0, 0.4]];
    let gallery: Vec<Labeled> = (0..45)
        .map(|i| (format!("c{}", i % 3), hist_feature(&cfg, &mut rng, &centers[i % 3])))
        .collect();
    let thresholds = ThresholdSet::uniform(&["c0", "c1", "c2"], 0.05).unwrap();
    for q in 0..100 {
        let query = hist_feature(&cfg, &mut rng, &centers[q % 3]);
        let mut best: Option<(f64, &str)> = None;
        for (label, g) in &gallery {
            let d = composite_distance(&query, g).unwrap();
            let better = match best {
                None => true,
                Some((bd, bl)) => d < bd || (d == bd && label.as_str() < bl),
            };
            if better {
                best = Some((d, label));
            }
        }
        let (d, label) = best.unwrap();
        let expected = if d <= 0.05 { label } else { UNKNOWN };
        let got = nn_classify(&query, &gallery, &thresholds).unwrap();
        assert_eq!(got.label, expected);
        assert_eq!(got.neighbor.distance, d);
    }
}

fn noisy_matches(seed: u64) -> Vec<ValidationMatch> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..150)
        .map(|i| {
            let truth = format!("k{}", i % 5);
            let wrong = rng.gen_bool(0.3);
            let label = if wrong { format!("k{}", (i + 1) % 5) } else { truth.clone() };
            let d = if wrong { rng.gen_range(0.3..1.0) } else { rng.gen_range(0.0..0.7) };
            ValidationMatch {
                truth,
                neighbor_label: label,
                distance: d,
            }
        })
        .collect()
}

#[test]
fn elitist_ga_never_loses_ground() {
    let items = noisy_matches(3);
    let classes: Vec<String> = (0..5).map(|i| format!("k{i}")).collect();
    let params = GaParams {
        seed: 17,
        ..GaParams::default()
    };
    let out = ga_optimize_matches(&items, &classes, &params).unwrap();
    assert_eq!(out.history.len(), 1001);
    assert!(out.history.windows(2).all(|w| w[1] >= w[0]));
    assert_eq!(out.best_fitness, *out.history.last().unwrap());
    // rejecting the far, mostly wrong matches pays off
    assert!(out.best_fitness > out.history[0] || out.history[0] == 1.0);
}

#[test]
fn ga_solves_separable_toy() {
    let cfg = FeatureConfig::equal(&[PartKind::Rgb]).unwrap();
    let feat = |p: f64| cfg.compose(vec![FeatureHistogram::from_values(vec![p, 1.0 - p]).unwrap()]).unwrap();
    let train: Vec<Labeled> = vec![("a".into(), feat(0.1)), ("b".into(), feat(0.9))];
    let validation: Vec<Labeled> = [0.12, 0.15, 0.05, 0.85, 0.88, 0.95]
        .iter()
        .map(|&p| (if p < 0.5 { "a" } else { "b" }.to_string(), feat(p)))
        .collect();
    let params = GaParams {
        generations: 50,
        seed: 1,
        ..GaParams::default()
    };
    let out = ga_optimize_thresholds(&train, &validation, &params).unwrap();
    assert_eq!(out.best_fitness, 1.0);
    for (label, f) in &validation {
        assert_eq!(&nn_classify(f, &train, &out.thresholds).unwrap().label, label);
    }
}
