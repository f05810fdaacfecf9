use std::collections::BTreeSet;

use log::warn;
use rayon::prelude::*;

use super::kernel::{gram_matrix, KernelSpec};
use crate::binio::{Reader, Writer};
use crate::error::{Error, Result};

pub const DEFAULT_C: f64 = 10.0;
/// Stopping tolerance on the maximal KKT violation.
pub const SMO_TOLERANCE: f64 = 1e-3;
const TAU: f64 = 1e-12;

pub const MODEL_MAGIC: &[u8; 4] = b"PRSM";
pub const MODEL_VERSION: u32 = 1;

/// Dual solution of one binary problem.
struct Dual {
    alpha: Vec<f64>,
    rho: f64,
}

/// Sequential minimal optimization on a precomputed kernel matrix, with
/// second-order working-set selection. Labels are +1/-1.
fn smo(k: &[Vec<f64>], y: &[f64], c: f64) -> Dual {
    let n = y.len();
    let mut alpha = vec![0.0; n];
    // gradient of 1/2 a'Qa - e'a with Q_ij = y_i y_j K_ij
    let mut grad = vec![-1.0; n];
    let upper = |a: f64| a >= c;
    let lower = |a: f64| a <= 0.0;
    let max_iter = (100 * n).max(10_000_000);

    let mut iter = 0;
    loop {
        // i: maximal violating index in the "up" set
        let (mut gmax, mut i) = (f64::NEG_INFINITY, usize::MAX);
        for t in 0..n {
            let in_up = if y[t] > 0.0 { !upper(alpha[t]) } else { !lower(alpha[t]) };
            if in_up && -y[t] * grad[t] >= gmax {
                gmax = -y[t] * grad[t];
                i = t;
            }
        }
        let (mut gmax2, mut j, mut best_obj) = (f64::NEG_INFINITY, usize::MAX, f64::INFINITY);
        if i != usize::MAX {
            for t in 0..n {
                let in_low = if y[t] > 0.0 { !lower(alpha[t]) } else { !upper(alpha[t]) };
                if !in_low {
                    continue;
                }
                let v = y[t] * grad[t];
                gmax2 = gmax2.max(v);
                let diff = gmax + v;
                if diff > 0.0 {
                    let quad = k[i][i] + k[t][t] - 2.0 * k[i][t];
                    let obj = -(diff * diff) / if quad > 0.0 { quad } else { TAU };
                    if obj <= best_obj {
                        best_obj = obj;
                        j = t;
                    }
                }
            }
        }
        if i == usize::MAX || j == usize::MAX || gmax + gmax2 < SMO_TOLERANCE {
            break;
        }
        iter += 1;
        if iter > max_iter {
            warn!("SMO stopped after {max_iter} iterations without reaching tolerance");
            break;
        }

        let (ai, aj) = (alpha[i], alpha[j]);
        let qij = y[i] * y[j] * k[i][j];
        if y[i] != y[j] {
            let quad = (k[i][i] + k[j][j] + 2.0 * qij).max(TAU);
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = ai - aj;
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let quad = (k[i][i] + k[j][j] - 2.0 * qij).max(TAU);
            let delta = (grad[i] - grad[j]) / quad;
            let sum = ai + aj;
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - ai, alpha[j] - aj);
        for t in 0..n {
            grad[t] += y[t] * (y[i] * k[i][t] * di + y[j] * k[j][t] * dj);
        }
    }

    // offset from free vectors, or the midpoint of the feasible interval
    let (mut ub, mut lb, mut sum_free, mut n_free) = (f64::INFINITY, f64::NEG_INFINITY, 0.0, 0usize);
    for t in 0..n {
        let yg = y[t] * grad[t];
        if upper(alpha[t]) {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if lower(alpha[t]) {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            n_free += 1;
            sum_free += yg;
        }
    }
    let rho = if n_free > 0 { sum_free / n_free as f64 } else { 0.5 * (ub + lb) };
    Dual { alpha, rho }
}

fn check_training(x: &[Vec<f64>], n_labels: usize, c: f64) -> Result<usize> {
    if x.len() != n_labels {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: n_labels,
        });
    }
    let dim = x.first().map(Vec::len).ok_or(Error::EmptyInput("no training vectors"))?;
    if x.iter().any(|v| v.len() != dim) {
        return Err(Error::InvalidParameter("training vectors differ in dimension".into()));
    }
    if !(c > 0.0) || !c.is_finite() {
        return Err(Error::InvalidParameter(format!("C must be positive, got {c}")));
    }
    Ok(dim)
}

/// A trained two-class machine: `f(x) = sum coef_i K(sv_i, x) + bias`, where
/// `coef_i = alpha_i y_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct BinarySvm {
    pub kernel: KernelSpec,
    pub support: Vec<Vec<f64>>,
    pub coef: Vec<f64>,
    pub bias: f64,
}

impl BinarySvm {
    pub fn decision(&self, x: &[f64]) -> f64 {
        self.support
            .iter()
            .zip(&self.coef)
            .map(|(s, c)| c * self.kernel.apply(s, x))
            .sum::<f64>()
            + self.bias
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        if self.decision(x) >= 0.0 {
            1.0
        } else {
            -1.0
        }
    }
}

/// Soft-margin SVM with labels in {+1, -1}.
pub fn svm_train(x: &[Vec<f64>], y: &[f64], kernel: KernelSpec, c: f64) -> Result<BinarySvm> {
    check_training(x, y.len(), c)?;
    if y.iter().any(|&v| v != 1.0 && v != -1.0) {
        return Err(Error::InvalidLabel("binary labels must be +1 or -1".into()));
    }
    if !y.contains(&1.0) || !y.contains(&-1.0) {
        return Err(Error::DegenerateTraining("both classes need at least one example".into()));
    }
    let k = gram_matrix(x, &kernel);
    let dual = smo(&k, y, c);
    let (support, coef) = x
        .iter()
        .zip(&dual.alpha)
        .zip(y)
        .filter(|((_, a), _)| **a > 0.0)
        .map(|((v, a), l)| (v.clone(), a * l))
        .unzip();
    Ok(BinarySvm {
        kernel,
        support,
        coef,
        bias: -dual.rho,
    })
}

/// One class-versus-rest machine, with coefficients over the model's shared
/// vector table.
#[derive(Debug, Clone, PartialEq)]
pub struct Machine {
    pub coef: Vec<f64>,
    pub bias: f64,
}

/// One-versus-all multi-class SVM.
#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel {
    pub kernel: KernelSpec,
    pub c: f64,
    /// Sorted class labels; `machines[i]` separates `labels[i]` from the rest.
    pub labels: Vec<String>,
    /// Support vectors of any machine, in training order.
    pub vectors: Vec<Vec<f64>>,
    pub machines: Vec<Machine>,
    /// Identifier of the feature configuration the model was trained on.
    pub config_id: String,
}

pub fn ova_train(x: &[Vec<f64>], labels: &[String], kernel: KernelSpec, c: f64, config_id: &str) -> Result<SvmModel> {
    check_training(x, labels.len(), c)?;
    let classes: Vec<String> = labels.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
    if classes.len() < 2 {
        return Err(Error::DegenerateTraining(format!("one-vs-all needs at least 2 classes, got {}", classes.len())));
    }
    let k = gram_matrix(x, &kernel);
    let duals: Vec<Dual> = classes
        .par_iter()
        .map(|cls| {
            let y: Vec<f64> = labels.iter().map(|l| if l == cls { 1.0 } else { -1.0 }).collect();
            smo(&k, &y, c)
        })
        .collect();
    let used: Vec<usize> = (0..x.len()).filter(|&i| duals.iter().any(|d| d.alpha[i] > 0.0)).collect();
    let machines = classes
        .iter()
        .zip(&duals)
        .map(|(cls, d)| Machine {
            coef: used
                .iter()
                .map(|&i| if labels[i] == *cls { d.alpha[i] } else { -d.alpha[i] })
                .collect(),
            bias: -d.rho,
        })
        .collect();
    Ok(SvmModel {
        kernel,
        c,
        labels: classes,
        vectors: used.iter().map(|&i| x[i].clone()).collect(),
        machines,
        config_id: config_id.to_string(),
    })
}

/// Predicted label (highest score, ties to the lowest label) and the score of
/// every class in label order.
pub fn ova_predict(model: &SvmModel, x: &[f64]) -> Result<(String, Vec<f64>)> {
    if let Some(v) = model.vectors.first() {
        if v.len() != x.len() {
            return Err(Error::LengthMismatch {
                left: x.len(),
                right: v.len(),
            });
        }
    }
    let kx: Vec<f64> = model.vectors.iter().map(|v| model.kernel.apply(v, x)).collect();
    let scores: Vec<f64> = model
        .machines
        .iter()
        .map(|m| m.coef.iter().zip(&kx).map(|(c, k)| c * k).sum::<f64>() + m.bias)
        .collect();
    let mut best = 0;
    for (i, s) in scores.iter().enumerate() {
        if *s > scores[best] {
            best = i;
        }
    }
    Ok((model.labels[best].clone(), scores))
}

impl SvmModel {
    /// Like [`ova_predict`], but refuses features from another configuration.
    pub fn predict_checked(&self, config_id: &str, x: &[f64]) -> Result<(String, Vec<f64>)> {
        if config_id != self.config_id {
            return Err(Error::ConfigMismatch(format!(
                "model trained on {:?}, features from {:?}",
                self.config_id, config_id
            )));
        }
        ova_predict(self, x)
    }

    /// Binary form: magic `PRSM`, version, configuration id, kernel id, C,
    /// labels, the vector table and one coefficient row plus bias per class.
    /// Reals are stored as little-endian `f64` so predictions survive a round trip.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new(MODEL_MAGIC, MODEL_VERSION);
        w.str(&self.config_id);
        w.str(&self.kernel.to_string());
        w.f64(self.c);
        w.len(self.labels.len());
        self.labels.iter().for_each(|l| w.str(l));
        w.len(self.vectors.len());
        self.vectors.iter().for_each(|v| w.f64s(v));
        for m in &self.machines {
            w.f64s(&m.coef);
            w.f64(m.bias);
        }
        w.buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::open(bytes, MODEL_MAGIC, MODEL_VERSION, "SVM model")?;
        let config_id = r.str()?;
        let kernel: KernelSpec = r.str()?.parse()?;
        let c = r.f64()?;
        let labels = (0..r.len()?).map(|_| r.str()).collect::<Result<Vec<_>>>()?;
        let vectors = (0..r.len()?).map(|_| r.f64s()).collect::<Result<Vec<_>>>()?;
        let machines = (0..labels.len())
            .map(|_| {
                let coef = r.f64s()?;
                if coef.len() != vectors.len() {
                    return Err(Error::Format("coefficient row length differs from vector count".into()));
                }
                Ok(Machine { coef, bias: r.f64()? })
            })
            .collect::<Result<Vec<_>>>()?;
        r.finish()?;
        Ok(Self {
            kernel,
            c,
            labels,
            vectors,
            machines,
            config_id,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_points_split_at_zero() {
        let x = vec![vec![-1.0], vec![1.0]];
        let m = svm_train(&x, &[-1.0, 1.0], KernelSpec::Linear { c: 0.0 }, 1e6).unwrap();
        // f(x) = w x + b with w = 1, b = 0
        assert!(m.decision(&[0.0]).abs() < 1e-3);
        assert!((m.decision(&[1.0]) - 1.0).abs() < 1e-3);
        assert_eq!(m.predict(&[-1.0]), -1.0);
        assert_eq!(m.predict(&[1.0]), 1.0);
        assert!(m.coef.iter().sum::<f64>().abs() < 1e-12);
    }

    #[test]
    fn separable_toy_is_fit() {
        let x: Vec<Vec<f64>> = (0..20).map(|i| vec![(i % 5) as f64, (i / 5) as f64 + if i % 2 == 0 { 3.0 } else { -3.0 }]).collect();
        let y: Vec<f64> = (0..20).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let m = svm_train(&x, &y, KernelSpec::Linear { c: 0.0 }, DEFAULT_C).unwrap();
        for (v, l) in x.iter().zip(&y) {
            assert_eq!(m.predict(v), *l);
        }
        assert!(m.coef.iter().all(|c| c.abs() <= DEFAULT_C + 1e-12));
    }

    #[test]
    fn degenerate_inputs() {
        let x = vec![vec![0.0], vec![1.0]];
        assert!(matches!(svm_train(&x, &[1.0, 1.0], KernelSpec::Chi2, 1.0), Err(Error::DegenerateTraining(_))));
        assert!(svm_train(&x, &[1.0, 0.0], KernelSpec::Chi2, 1.0).is_err());
        assert!(svm_train(&x, &[1.0, -1.0], KernelSpec::Chi2, 0.0).is_err());
        let labels = vec!["a".to_string(), "a".to_string()];
        assert!(ova_train(&x, &labels, KernelSpec::Chi2, 1.0, "cfg").is_err());
    }

    #[test]
    fn two_class_ova_agrees_with_binary() {
        let x: Vec<Vec<f64>> = (0..12).map(|i| vec![i as f64 / 4.0, ((i * 7) % 5) as f64 / 5.0]).collect();
        let labels: Vec<String> = (0..12).map(|i| if i < 6 { "lo" } else { "hi" }.to_string()).collect();
        let y: Vec<f64> = labels.iter().map(|l| if l == "hi" { 1.0 } else { -1.0 }).collect();
        let kernel = KernelSpec::Rbf { sigma: 1.0 };
        let bin = svm_train(&x, &y, kernel, DEFAULT_C).unwrap();
        let model = ova_train(&x, &labels, kernel, DEFAULT_C, "cfg").unwrap();
        for q in [[0.1, 0.5], [2.9, 0.1], [1.4, 0.9], [1.6, 0.2]] {
            let (label, scores) = ova_predict(&model, &q).unwrap();
            assert_eq!(scores.len(), 2);
            let expected = if bin.predict(&q) > 0.0 { "hi" } else { "lo" };
            assert_eq!(label, expected, "{q:?}");
        }
    }

    #[test]
    fn model_roundtrip_and_config_guard() {
        let x: Vec<Vec<f64>> = (0..9).map(|i| vec![(i % 3) as f64 * 3.0 + 0.1 * i as f64, (i % 3) as f64]).collect();
        let labels: Vec<String> = (0..9).map(|i| ["a", "b", "c"][i % 3].to_string()).collect();
        let model = ova_train(&x, &labels, KernelSpec::Rbf { sigma: 1.0 }, DEFAULT_C, "rgb:jeffrey:1").unwrap();
        let back = SvmModel::from_bytes(&model.to_bytes()).unwrap();
        assert_eq!(back, model);
        assert_eq!(back.predict_checked("rgb:jeffrey:1", &x[4]).unwrap(), ova_predict(&model, &x[4]).unwrap());
        assert!(matches!(back.predict_checked("hsv:kl:1", &x[4]), Err(Error::ConfigMismatch(_))));
        assert!(SvmModel::from_bytes(&model.to_bytes()[..20]).is_err());
    }

    #[test]
    fn argmax_ignores_common_shift() {
        let x: Vec<Vec<f64>> = (0..9).map(|i| vec![(i % 3) as f64, 0.5 * (i / 3) as f64]).collect();
        let labels: Vec<String> = (0..9).map(|i| ["a", "b", "c"][i % 3].to_string()).collect();
        let mut model = ova_train(&x, &labels, KernelSpec::Linear { c: 0.0 }, DEFAULT_C, "cfg").unwrap();
        let before: Vec<String> = x.iter().map(|v| ova_predict(&model, v).unwrap().0).collect();
        model.machines.iter_mut().for_each(|m| m.bias += 3.25);
        let after: Vec<String> = x.iter().map(|v| ova_predict(&model, v).unwrap().0).collect();
        assert_eq!(before, after);
    }
}
