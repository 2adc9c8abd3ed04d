//! Confusion matrices, one-vs-rest metrics with macro averaging, stratified
//! splitting, k-fold cross-validation and ROC/AUC.

use std::fmt::Write as _;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng::rng_from;

/// Rows are true classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub counts: Vec<u64>,
    pub classes: usize,
}

impl ConfusionMatrix {
    pub fn zeros(classes: usize) -> Self {
        ConfusionMatrix {
            counts: vec![0; classes * classes],
            classes,
        }
    }

    pub fn get(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth * self.classes + pred]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn correct(&self) -> u64 {
        (0..self.classes).map(|i| self.get(i, i)).sum()
    }

    /// One-vs-rest reduction for `class`.
    pub fn one_vs_rest(&self, class: usize) -> ConfusionCounts {
        let tp = self.get(class, class);
        let row: u64 = (0..self.classes).map(|j| self.get(class, j)).sum();
        let col: u64 = (0..self.classes).map(|i| self.get(i, class)).sum();
        let fn_ = row - tp;
        let fp = col - tp;
        ConfusionCounts {
            tp,
            fp,
            fn_,
            tn: self.total() - tp - fp - fn_,
        }
    }

    pub fn add(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.classes != self.classes {
            return Err(Error::DimensionMismatch {
                expected: self.classes,
                found: other.classes,
            });
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }
}

pub fn confusion_matrix(
    truth: &[usize],
    pred: &[usize],
    classes: usize,
) -> Result<ConfusionMatrix> {
    if truth.len() != pred.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            found: pred.len(),
        });
    }
    let mut cm = ConfusionMatrix::zeros(classes);
    for (&t, &p) in truth.iter().zip(pred) {
        if t >= classes || p >= classes {
            return Err(Error::invalid(format!(
                "class index {} outside [0, {classes})",
                t.max(p)
            )));
        }
        cm.counts[t * classes + p] += 1;
    }
    Ok(cm)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

/// The five reported metrics, in report column order.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Metrics {
    pub precision: f64,
    pub f1: f64,
    pub specificity: f64,
    pub sensitivity: f64,
    pub accuracy: f64,
}

pub const METRIC_NAMES: [&str; 5] = ["precision", "f1", "specificity", "sensitivity", "accuracy"];

impl Metrics {
    pub fn as_array(&self) -> [f64; 5] {
        [
            self.precision,
            self.f1,
            self.specificity,
            self.sensitivity,
            self.accuracy,
        ]
    }

    fn mean(items: &[Metrics]) -> Metrics {
        let n = items.len().max(1) as f64;
        let mut sum = [0.0; 5];
        for m in items {
            for (s, v) in sum.iter_mut().zip(m.as_array()) {
                *s += v;
            }
        }
        Metrics {
            precision: sum[0] / n,
            f1: sum[1] / n,
            specificity: sum[2] / n,
            sensitivity: sum[3] / n,
            accuracy: sum[4] / n,
        }
    }
}

/// A metric whose denominator was zero; its value is reported as 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UndefinedMetric {
    pub class: usize,
    pub metric: &'static str,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// Returns the metrics and the names of those with a zero denominator.
    pub fn metrics(&self) -> (Metrics, Vec<&'static str>) {
        let (tp, fp, tn) = (self.tp as f64, self.fp as f64, self.tn as f64);
        let ratio = |num: f64, den: u64| (den > 0).then(|| num / den as f64);
        let values = [
            ("precision", ratio(tp, self.tp + self.fp)),
            ("f1", ratio(2.0 * tp, 2 * self.tp + self.fp + self.fn_)),
            (
                "specificity",
                (self.fp + self.tn > 0).then(|| 1.0 - fp / (fp + tn)),
            ),
            ("sensitivity", ratio(tp, self.tp + self.fn_)),
            ("accuracy", ratio(tp + tn, self.total())),
        ];
        let undefined = values
            .iter()
            .filter(|(_, v)| v.is_none())
            .map(|(name, _)| *name)
            .collect();
        let v = values.map(|(_, v)| v.unwrap_or(0.0));
        (
            Metrics {
                precision: v[0],
                f1: v[1],
                specificity: v[2],
                sensitivity: v[3],
                accuracy: v[4],
            },
            undefined,
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricSummary {
    pub per_class: Vec<Metrics>,
    /// Unweighted mean of the per-class metrics.
    pub macro_avg: Metrics,
    pub undefined: Vec<UndefinedMetric>,
}

pub fn metrics_from_cm(cm: &ConfusionMatrix) -> Result<MetricSummary> {
    if cm.classes == 0 || cm.total() == 0 {
        return Err(Error::Empty("confusion matrix holds no examples".into()));
    }
    let mut per_class = Vec::with_capacity(cm.classes);
    let mut undefined = Vec::new();
    for class in 0..cm.classes {
        let (m, flags) = cm.one_vs_rest(class).metrics();
        per_class.push(m);
        undefined.extend(
            flags
                .into_iter()
                .map(|metric| UndefinedMetric { class, metric }),
        );
    }
    Ok(MetricSummary {
        macro_avg: Metrics::mean(&per_class),
        per_class,
        undefined,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

fn indices_by_class(labels: &[usize]) -> Vec<Vec<usize>> {
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut by_class = vec![Vec::new(); classes];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l].push(i);
    }
    by_class
}

/// Per-class shuffle, then `round(n * train_frac)` items of each class go to
/// training (at least one on each side).
pub fn stratified_split(labels: &[usize], train_frac: f64, seed: u64) -> Result<Split> {
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(Error::invalid("train fraction must lie in (0, 1)"));
    }
    let mut rng = rng_from(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (class, mut idx) in indices_by_class(labels).into_iter().enumerate() {
        if idx.is_empty() {
            continue;
        }
        if idx.len() < 2 {
            return Err(Error::invalid(format!(
                "class {class} has {} example(s); at least 2 are needed to split",
                idx.len()
            )));
        }
        idx.shuffle(&mut rng);
        let n_train = ((idx.len() as f64 * train_frac).round() as usize).clamp(1, idx.len() - 1);
        train.extend_from_slice(&idx[..n_train]);
        test.extend_from_slice(&idx[n_train..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(Split { train, test })
}

/// Stratified folds: each class is shuffled and dealt round-robin, carrying
/// the dealing position across classes so fold sizes stay balanced.
pub fn kfold_indices(labels: &[usize], k: usize, seed: u64) -> Result<Vec<Split>> {
    if k < 2 {
        return Err(Error::invalid("k must be at least 2"));
    }
    let mut rng = rng_from(seed);
    let mut fold_of = vec![0usize; labels.len()];
    let mut next = 0usize;
    for (class, mut idx) in indices_by_class(labels).into_iter().enumerate() {
        if idx.is_empty() {
            continue;
        }
        if idx.len() < k {
            return Err(Error::invalid(format!(
                "class {class} has {} example(s), fewer than k = {k}",
                idx.len()
            )));
        }
        idx.shuffle(&mut rng);
        for i in idx {
            fold_of[i] = next % k;
            next += 1;
        }
    }
    Ok((0..k)
        .map(|f| {
            let (test, train): (Vec<usize>, Vec<usize>) =
                (0..labels.len()).partition(|&i| fold_of[i] == f);
            Split { train, test }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Roc {
    /// `(fpr, tpr)` from `(0, 0)` to `(1, 1)`.
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
}

/// Threshold sweep over the distinct scores, highest first. Tied scores move
/// along one diagonal segment.
pub fn roc_auc(scores: &[f64], truth: &[bool]) -> Result<Roc> {
    if scores.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            expected: scores.len(),
            found: truth.len(),
        });
    }
    let pos = truth.iter().filter(|&&t| t).count();
    let neg = truth.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::SingleClass);
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::invalid("scores must not be NaN"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if truth[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
    }
    let auc = points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0)
        .sum();
    Ok(Roc { points, auc })
}

/// Metrics, confusion matrix and per-class ROC for one set of predictions.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub class_names: Vec<String>,
    pub cm: ConfusionMatrix,
    pub per_class: Vec<Metrics>,
    pub macro_avg: Metrics,
    pub undefined: Vec<UndefinedMetric>,
    /// One-vs-rest curve per class; `None` when the class is absent or is
    /// the only class present.
    pub roc: Vec<Option<Roc>>,
    pub macro_auc: Option<f64>,
    /// Fraction of examples whose predicted class is correct.
    pub overall_accuracy: f64,
    /// Wall-clock seconds; not part of the CSV output.
    pub runtime_s: f64,
}

impl EvaluationReport {
    /// `scores[k][j]` ranks example `k` for class `j` (higher means more
    /// likely).
    pub fn from_predictions(
        class_names: &[String],
        truth: &[usize],
        pred: &[usize],
        scores: &[Vec<f64>],
    ) -> Result<Self> {
        let c = class_names.len();
        let cm = confusion_matrix(truth, pred, c)?;
        let summary = metrics_from_cm(&cm)?;
        if scores.len() != truth.len() {
            return Err(Error::DimensionMismatch {
                expected: truth.len(),
                found: scores.len(),
            });
        }
        let mut roc = Vec::with_capacity(c);
        for j in 0..c {
            let col = scores
                .iter()
                .map(|s| {
                    s.get(j).copied().ok_or(Error::DimensionMismatch {
                        expected: c,
                        found: s.len(),
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            let is_j: Vec<bool> = truth.iter().map(|&t| t == j).collect();
            roc.push(roc_auc(&col, &is_j).ok());
        }
        let aucs: Vec<f64> = roc.iter().flatten().map(|r| r.auc).collect();
        let macro_auc = (!aucs.is_empty()).then(|| aucs.iter().sum::<f64>() / aucs.len() as f64);
        Ok(EvaluationReport {
            class_names: class_names.to_vec(),
            overall_accuracy: cm.correct() as f64 / cm.total() as f64,
            cm,
            per_class: summary.per_class,
            macro_avg: summary.macro_avg,
            undefined: summary.undefined,
            roc,
            macro_auc,
            runtime_s: 0.0,
        })
    }

    /// Metric, confusion and AUC blocks. Values are printed with six decimals
    /// so identical predictions always produce identical bytes.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str("# metrics\n");
        write_metric_header(&mut out, "scope");
        for (name, m) in self.class_names.iter().zip(&self.per_class) {
            write_metric_row(&mut out, name, m);
        }
        write_metric_row(&mut out, "macro", &self.macro_avg);
        self.write_tail(&mut out);
        out
    }

    fn write_tail(&self, out: &mut String) {
        out.push_str("# confusion (rows = true class, columns = predicted class)\n");
        out.push_str("true\\pred");
        for name in &self.class_names {
            let _ = write!(out, ",{name}");
        }
        out.push('\n');
        for (i, name) in self.class_names.iter().enumerate() {
            out.push_str(name);
            for j in 0..self.cm.classes {
                let _ = write!(out, ",{}", self.cm.get(i, j));
            }
            out.push('\n');
        }
        out.push_str("# auc\nclass,auc\n");
        for (name, roc) in self.class_names.iter().zip(&self.roc) {
            let _ = writeln!(out, "{name},{}", fmt_opt(roc.as_ref().map(|r| r.auc)));
        }
        let _ = writeln!(out, "macro,{}", fmt_opt(self.macro_auc));
        out.push_str("# summary\n");
        let _ = writeln!(out, "examples,{}", self.cm.total());
        let _ = writeln!(out, "overall_accuracy,{:.6}", self.overall_accuracy);
        let flags: Vec<String> = self
            .undefined
            .iter()
            .map(|u| format!("{}:{}", self.class_names[u.class], u.metric))
            .collect();
        let _ = writeln!(out, "undefined,{}", flags.join(";"));
    }

    /// `class,fpr,tpr` rows for every available curve.
    pub fn roc_csv(&self) -> String {
        let mut out = String::from("class,fpr,tpr\n");
        for (name, roc) in self.class_names.iter().zip(&self.roc) {
            if let Some(roc) = roc {
                for (fpr, tpr) in &roc.points {
                    let _ = writeln!(out, "{name},{fpr:.6},{tpr:.6}");
                }
            }
        }
        out
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |v| format!("{v:.6}"))
}

fn write_metric_header(out: &mut String, first: &str) {
    out.push_str(first);
    for name in METRIC_NAMES {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
}

fn write_metric_row(out: &mut String, scope: &str, m: &Metrics) {
    out.push_str(scope);
    for v in m.as_array() {
        let _ = write!(out, ",{v:.6}");
    }
    out.push('\n');
}

/// Per-fold reports plus one pooled report over all out-of-fold predictions.
#[derive(Debug, Clone, PartialEq)]
pub struct CvReport {
    pub folds: Vec<EvaluationReport>,
    pub pooled: EvaluationReport,
}

impl CvReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("# folds (macro averages)\n");
        write_metric_header(&mut out, "fold");
        for (i, f) in self.folds.iter().enumerate() {
            write_metric_row(&mut out, &i.to_string(), &f.macro_avg);
        }
        let mean = Metrics::mean(&self.folds.iter().map(|f| f.macro_avg).collect::<Vec<_>>());
        write_metric_row(&mut out, "mean", &mean);
        out.push_str("# pooled out-of-fold metrics\n");
        write_metric_header(&mut out, "scope");
        for (name, m) in self.pooled.class_names.iter().zip(&self.pooled.per_class) {
            write_metric_row(&mut out, name, m);
        }
        write_metric_row(&mut out, "macro", &self.pooled.macro_avg);
        self.pooled.write_tail(&mut out);
        out
    }
}

/// Predictions for the test indices of one split: class and per-class score.
pub type FoldPredictions = Vec<(usize, Vec<f64>)>;

/// Runs `fit_predict` on every stratified fold and assembles the reports.
pub fn cross_validate<F>(
    class_names: &[String],
    labels: &[usize],
    k: usize,
    seed: u64,
    mut fit_predict: F,
) -> Result<CvReport>
where
    F: FnMut(&Split) -> Result<FoldPredictions>,
{
    let splits = kfold_indices(labels, k, seed)?;
    let mut folds = Vec::with_capacity(k);
    let mut all_truth = Vec::new();
    let mut all_pred = Vec::new();
    let mut all_scores = Vec::new();
    for split in &splits {
        let preds = fit_predict(split)?;
        if preds.len() != split.test.len() {
            return Err(Error::DimensionMismatch {
                expected: split.test.len(),
                found: preds.len(),
            });
        }
        let truth: Vec<usize> = split.test.iter().map(|&i| labels[i]).collect();
        let (pred, scores): (Vec<usize>, Vec<Vec<f64>>) = preds.into_iter().unzip();
        folds.push(EvaluationReport::from_predictions(
            class_names,
            &truth,
            &pred,
            &scores,
        )?);
        all_truth.extend(truth);
        all_pred.extend(pred);
        all_scores.extend(scores);
    }
    let pooled =
        EvaluationReport::from_predictions(class_names, &all_truth, &all_pred, &all_scores)?;
    Ok(CvReport { folds, pooled })
}
