//! Retrieval-style metrics, confusion matrices, precision/recall curves and
//! CSV report files.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Label emitted when a classifier rejects a query.
pub const UNKNOWN: &str = "UNKNOWN";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
    pub error_rate: f64,
}

/// Precision, recall, F-measure and error rate from raw counts.
///
/// Precision is 0 when nothing was retrieved, recall is 0 when nothing is
/// relevant, and F is 0 when `P + R = 0`. The error rate is `1 - R`.
pub fn metrics(relevant_retrieved: u64, retrieved: u64, relevant: u64) -> Result<Metrics> {
    if relevant_retrieved > retrieved.min(relevant) {
        return Err(Error::InvalidParameter(format!(
            "inconsistent counts: {relevant_retrieved} relevant retrieved of {retrieved} retrieved, {relevant} relevant"
        )));
    }
    let ratio = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let precision = ratio(relevant_retrieved, retrieved);
    let recall = ratio(relevant_retrieved, relevant);
    let f_measure = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(Metrics {
        precision,
        recall,
        f_measure,
        error_rate: 1.0 - recall,
    })
}

/// Counts indexed `[true class][predicted class]`, with one extra trailing
/// column for rejected (`UNKNOWN`) predictions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    labels: Vec<String>,
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn correct(&self) -> u64 {
        (0..self.labels.len()).map(|i| self.counts[i][i]).sum()
    }

    pub fn accuracy(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            0.0
        } else {
            self.correct() as f64 / total as f64
        }
    }

    /// Per-class metrics: class `c` is relevant for items whose truth is `c`
    /// and retrieved for items predicted as `c`.
    pub fn class_metrics(&self, class: usize) -> Metrics {
        let n = self.labels.len();
        let rr = self.counts[class][class];
        let retrieved = (0..n).map(|t| self.counts[t][class]).sum();
        let relevant = self.counts[class].iter().sum();
        metrics(rr, retrieved, relevant).expect("counts from one matrix are consistent")
    }

    /// Micro-averaged metrics over pooled counts. Rejections count as not
    /// retrieved.
    pub fn micro_metrics(&self) -> Metrics {
        let n = self.labels.len();
        let retrieved = self.counts.iter().map(|row| row[..n].iter().sum::<u64>()).sum();
        metrics(self.correct(), retrieved, self.total()).expect("counts from one matrix are consistent")
    }

    /// CSV with a `true\predicted` header row, one row per true class.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("true\\predicted");
        for l in self.labels.iter().map(String::as_str).chain([UNKNOWN]) {
            out.push(',');
            out.push_str(l);
        }
        out.push('\n');
        for (label, row) in self.labels.iter().zip(&self.counts) {
            out.push_str(label);
            for c in row {
                let _ = write!(out, ",{c}");
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header: Vec<&str> = lines
            .next()
            .ok_or_else(|| Error::Format("empty confusion CSV".into()))?
            .split(',')
            .collect();
        if header.len() < 2 || header.last() != Some(&UNKNOWN) {
            return Err(Error::Format("confusion CSV header must end with UNKNOWN".into()));
        }
        let labels: Vec<String> = header[1..header.len() - 1].iter().map(|s| s.to_string()).collect();
        let mut counts = Vec::new();
        for (i, line) in lines.enumerate() {
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != labels.len() + 2 || labels.get(i).map(String::as_str) != Some(cells[0]) {
                return Err(Error::Format(format!("malformed confusion row {}", i + 1)));
            }
            let row = cells[1..]
                .iter()
                .map(|c| c.parse::<u64>().map_err(|_| Error::Format(format!("bad count {c:?}"))))
                .collect::<Result<Vec<_>>>()?;
            counts.push(row);
        }
        if counts.len() != labels.len() {
            return Err(Error::Format("confusion CSV row count differs from label count".into()));
        }
        Ok(Self { labels, counts })
    }
}

/// Tallies predictions against truths. Classes are the sorted distinct truth
/// labels plus any extra `classes` given; predictions must be one of those or
/// `UNKNOWN`.
pub fn confusion_matrix<S: AsRef<str>>(predictions: &[S], truths: &[S], classes: &[String]) -> Result<ConfusionMatrix> {
    if predictions.len() != truths.len() {
        return Err(Error::LengthMismatch {
            left: predictions.len(),
            right: truths.len(),
        });
    }
    let mut labels: Vec<String> = classes.to_vec();
    labels.extend(truths.iter().map(|t| t.as_ref().to_string()));
    labels.sort();
    labels.dedup();
    if labels.iter().any(|l| l == UNKNOWN) {
        return Err(Error::InvalidLabel(format!("{UNKNOWN} cannot be a true class")));
    }
    let index: HashMap<&str, usize> = labels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
    let n = labels.len();
    let mut counts = vec![vec![0u64; n + 1]; n];
    for (p, t) in predictions.iter().zip(truths) {
        let row = index[t.as_ref()];
        let col = match p.as_ref() {
            UNKNOWN => n,
            other => *index
                .get(other)
                .ok_or_else(|| Error::InvalidLabel(format!("prediction {other:?} is not a known class")))?,
        };
        counts[row][col] += 1;
    }
    Ok(ConfusionMatrix { labels, counts })
}

/// Whether larger or smaller scores mean more confident.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreDirection {
    HigherIsBetter,
    LowerIsBetter,
}

/// Sweeps an acceptance threshold over the distinct scores, from most to
/// least confident, and reports `(recall, precision)` after each step.
pub fn pr_curve(scores: &[(f64, bool)], direction: ScoreDirection) -> Result<Vec<(f64, f64)>> {
    if scores.is_empty() {
        return Err(Error::EmptyInput("no scores for a precision/recall curve"));
    }
    if scores.iter().any(|(s, _)| !s.is_finite()) {
        return Err(Error::InvalidParameter("scores must be finite".into()));
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| match direction {
        ScoreDirection::HigherIsBetter => b.0.total_cmp(&a.0),
        ScoreDirection::LowerIsBetter => a.0.total_cmp(&b.0),
    });
    let relevant = scores.iter().filter(|s| s.1).count() as u64;
    let mut out = Vec::new();
    let (mut tp, mut retrieved) = (0u64, 0u64);
    for (i, &(score, rel)) in sorted.iter().enumerate() {
        retrieved += 1;
        tp += rel as u64;
        let last_of_tie = sorted.get(i + 1).map_or(true, |next| next.0 != score);
        if last_of_tie {
            let m = metrics(tp, retrieved, relevant)?;
            out.push((m.recall, m.precision));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub confusion: ConfusionMatrix,
    pub per_class: Vec<Metrics>,
    pub aggregate: Metrics,
    pub pr_curve: Vec<(f64, f64)>,
}

impl EvalReport {
    pub fn new(confusion: ConfusionMatrix, pr_curve: Vec<(f64, f64)>) -> Self {
        let per_class = (0..confusion.labels.len()).map(|c| confusion.class_metrics(c)).collect();
        let aggregate = confusion.micro_metrics();
        Self {
            confusion,
            per_class,
            aggregate,
            pr_curve,
        }
    }

    pub fn summary_csv(&self) -> String {
        let mut out = String::from("class,precision,recall,f_measure,error_rate,support\n");
        let row = |out: &mut String, name: &str, m: &Metrics, support: u64| {
            let _ = writeln!(
                out,
                "{name},{:.6},{:.6},{:.6},{:.6},{support}",
                m.precision, m.recall, m.f_measure, m.error_rate
            );
        };
        for ((label, m), counts) in self.confusion.labels.iter().zip(&self.per_class).zip(&self.confusion.counts) {
            row(&mut out, label, m, counts.iter().sum());
        }
        row(&mut out, "micro", &self.aggregate, self.confusion.total());
        out
    }

    pub fn pr_csv(&self) -> String {
        let mut out = String::from("recall,precision\n");
        for (r, p) in &self.pr_curve {
            let _ = writeln!(out, "{r:.6},{p:.6}");
        }
        out
    }
}

/// Writes `confusion.csv`, `pr_curve.csv` and `summary.csv` into `dir`.
pub fn write_report(report: &EvalReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (name, body) in [
        ("confusion.csv", report.confusion.to_csv()),
        ("pr_curve.csv", report.pr_csv()),
        ("summary.csv", report.summary_csv()),
    ] {
        let path = dir.join(name);
        fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hand_counts() {
        let m = metrics(8, 10, 16).unwrap();
        assert_eq!(m.precision, 0.8);
        assert_eq!(m.recall, 0.5);
        assert_eq!(m.f_measure, 2.0 * 0.8 * 0.5 / 1.3);
        assert!((m.f_measure - 0.6154).abs() < 1e-4);
        assert_eq!(m.error_rate, 0.5);

        let perfect = metrics(7, 7, 7).unwrap();
        assert_eq!((perfect.precision, perfect.recall, perfect.f_measure, perfect.error_rate), (1.0, 1.0, 1.0, 0.0));
        let none = metrics(0, 0, 5).unwrap();
        assert_eq!((none.precision, none.recall, none.f_measure, none.error_rate), (0.0, 0.0, 0.0, 1.0));
        assert!(metrics(3, 2, 5).is_err());
    }

    proptest! {
        #[test]
        fn error_rate_complements_recall(relevant in 0u64..10_000, a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let rr = (relevant as f64 * a) as u64;
            let retrieved = rr + (b * 1000.0) as u64;
            let m = metrics(rr, retrieved, relevant).unwrap();
            prop_assert_eq!(m.error_rate + m.recall, 1.0);
            prop_assert!((0.0..=1.0).contains(&m.f_measure));
        }
    }

    fn s(v: &[&str]) -> Vec<String> {
        v.iter().map(|x| x.to_string()).collect()
    }

    #[test]
    fn five_item_confusion() {
        let truth = s(&["a", "b", "a", "c", "b"]);
        let pred = s(&["a", "a", "UNKNOWN", "c", "b"]);
        let cm = confusion_matrix(&pred, &truth, &[]).unwrap();
        assert_eq!(cm.labels(), &s(&["a", "b", "c"])[..]);
        assert_eq!(cm.counts(), &[vec![1, 0, 0, 1], vec![1, 1, 0, 0], vec![0, 0, 1, 0]]);
        assert_eq!(cm.total(), 5);
        assert_eq!(cm.accuracy(), 0.6);
        let micro = cm.micro_metrics();
        assert_eq!(micro.precision, 0.75);
        assert_eq!(micro.recall, 0.6);
        assert_eq!(ConfusionMatrix::from_csv(&cm.to_csv()).unwrap(), cm);
    }

    #[test]
    fn confusion_edge_cases() {
        let truth = s(&["x", "y", "y"]);
        let all_unknown = confusion_matrix(&s(&["UNKNOWN"; 3]), &truth, &[]).unwrap();
        assert_eq!(all_unknown.counts(), &[vec![0, 0, 1], vec![0, 0, 2]]);
        let diag = confusion_matrix(&truth, &truth, &[]).unwrap();
        assert_eq!(diag.counts(), &[vec![1, 0, 0], vec![0, 2, 0]]);
        assert!(confusion_matrix(&s(&["z", "x", "x"]), &truth, &[]).is_err());
        assert!(confusion_matrix(&s(&["x"]), &truth, &[]).is_err());
        // classes absent from the truths still get a row
        let wide = confusion_matrix(&truth, &truth, &s(&["w"])).unwrap();
        assert_eq!(wide.labels().len(), 3);
    }

    #[test]
    fn pr_curve_hand_example() {
        let scores = [(0.9, true), (0.8, false), (0.7, true), (0.1, false)];
        let curve = pr_curve(&scores, ScoreDirection::HigherIsBetter).unwrap();
        assert_eq!(curve, vec![(0.5, 1.0), (0.5, 0.5), (1.0, 2.0 / 3.0), (1.0, 0.5)]);
        let flipped: Vec<(f64, bool)> = scores.iter().map(|&(s, r)| (-s, r)).collect();
        assert_eq!(pr_curve(&flipped, ScoreDirection::LowerIsBetter).unwrap(), curve);
    }

    #[test]
    fn pr_curve_properties() {
        let sep = [(3.0, true), (2.0, true), (1.0, false), (0.0, false)];
        let curve = pr_curve(&sep, ScoreDirection::HigherIsBetter).unwrap();
        assert_eq!(&curve[..2], &[(0.5, 1.0), (1.0, 1.0)]);
        // ties collapse into one point
        let tied = [(1.0, true), (1.0, false), (1.0, true)];
        assert_eq!(pr_curve(&tied, ScoreDirection::HigherIsBetter).unwrap(), vec![(1.0, 2.0 / 3.0)]);
        assert!(pr_curve(&[], ScoreDirection::HigherIsBetter).is_err());
        assert!(pr_curve(&[(f64::NAN, true)], ScoreDirection::HigherIsBetter).is_err());
    }

    #[test]
    fn report_files() {
        let truth = s(&["a", "b", "a"]);
        let cm = confusion_matrix(&truth, &truth, &[]).unwrap();
        let report = EvalReport::new(cm.clone(), vec![(1.0, 1.0)]);
        let dir = tempfile::tempdir().unwrap();
        write_report(&report, dir.path()).unwrap();
        let summary = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
        assert_eq!(summary.lines().count(), 1 + 2 + 1);
        assert!(summary.lines().last().unwrap().starts_with("micro,1.000000,1.000000,1.000000,0.000000,3"));
        assert!(!summary.contains('\r'));
        let back = std::fs::read_to_string(dir.path().join("confusion.csv")).unwrap();
        assert_eq!(ConfusionMatrix::from_csv(&back).unwrap(), cm);
        assert_eq!(std::fs::read_to_string(dir.path().join("pr_curve.csv")).unwrap(), "recall,precision\n1.000000,1.000000\n");
    }
}
