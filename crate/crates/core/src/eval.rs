//! Stratified k-fold assignment and the evaluation metric suite: accuracy,
//! support-weighted precision/recall/F1, and the normalized confusion matrix,
//! reported as mean with a (max, min) tuple across folds.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

/// A partition of record indices into k folds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FoldAssignment {
    pub folds: Vec<Vec<usize>>,
    /// Set when a class had fewer than k members and plain k-fold was used.
    pub plain_fallback: bool,
}

impl FoldAssignment {
    /// Train indices for one fold: everything outside it, in dataset order.
    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        let n: usize = self.folds.iter().map(|f| f.len()).sum();
        let mut in_test = vec![false; n];
        for &i in &self.folds[fold] {
            in_test[i] = true;
        }
        (0..n).filter(|i| !in_test[*i]).collect()
    }
}

/// Deal records into k folds preserving class proportions.
///
/// Members of each class are shuffled and dealt round-robin, so per-fold
/// class counts differ from the proportional target by at most one. Classes
/// with fewer than k members trigger a plain shuffled k-fold instead.
pub fn stratified_folds(labels: &[u8], k: usize, master_seed: u64) -> Result<FoldAssignment> {
    let n = labels.len();
    if k == 0 {
        return Err(Error::Config("k must be positive".into()));
    }
    if n < k {
        return Err(Error::Data(format!("cannot split {n} records into {k} folds")));
    }
    let mut rng = seed::rng(seed::derive(master_seed, seed::tag::SHUFFLE));
    let mut folds = vec![Vec::new(); k];

    let positives: Vec<usize> = (0..n).filter(|&i| labels[i] == 1).collect();
    let negatives: Vec<usize> = (0..n).filter(|&i| labels[i] == 0).collect();
    let plain_fallback = positives.len() < k || negatives.len() < k;

    if plain_fallback {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        for (i, idx) in order.into_iter().enumerate() {
            folds[i % k].push(idx);
        }
    } else {
        for class in [negatives, positives] {
            let mut order = class;
            order.shuffle(&mut rng);
            for (i, idx) in order.into_iter().enumerate() {
                folds[i % k].push(idx);
            }
        }
    }
    for fold in &mut folds {
        fold.sort_unstable();
    }
    Ok(FoldAssignment { folds, plain_fallback })
}

/// 2x2 confusion counts; rows are true classes, columns predictions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[usize; 2]; 2],
}

impl ConfusionMatrix {
    pub fn from_pairs(truths: &[u8], predictions: &[u8]) -> Result<Self> {
        if truths.len() != predictions.len() {
            return Err(Error::Data(format!(
                "{} truths vs {} predictions",
                truths.len(),
                predictions.len()
            )));
        }
        let mut counts = [[0usize; 2]; 2];
        for (t, p) in truths.iter().zip(predictions) {
            counts[*t as usize][*p as usize] += 1;
        }
        Ok(ConfusionMatrix { counts })
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    /// Rows scaled to sum one; an absent class leaves a zero row.
    pub fn row_normalized(&self) -> [[f64; 2]; 2] {
        let mut out = [[0.0; 2]; 2];
        for (i, row) in self.counts.iter().enumerate() {
            let total: usize = row.iter().sum();
            if total > 0 {
                out[i][0] = row[0] as f64 / total as f64;
                out[i][1] = row[1] as f64 / total as f64;
            }
        }
        out
    }
}

/// The four headline metrics of one evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub weighted_precision: f64,
    pub weighted_recall: f64,
    pub weighted_f1: f64,
}

/// Accuracy plus support-weighted precision/recall/F1.
///
/// Per-class precision and recall define 0/0 as 0. Weights are class
/// supports over the total, and the weighted F1 is the harmonic mean of the
/// weighted precision and recall.
pub fn metrics(cm: &ConfusionMatrix) -> Metrics {
    let total = cm.total() as f64;
    let accuracy = (cm.counts[0][0] + cm.counts[1][1]) as f64 / total;

    let mut weighted_precision = 0.0;
    let mut weighted_recall = 0.0;
    for class in 0..2 {
        let tp = cm.counts[class][class] as f64;
        let predicted = (cm.counts[0][class] + cm.counts[1][class]) as f64;
        let support = (cm.counts[class][0] + cm.counts[class][1]) as f64;
        let precision = if predicted > 0.0 { tp / predicted } else { 0.0 };
        let recall = if support > 0.0 { tp / support } else { 0.0 };
        let weight = support / total;
        weighted_precision += weight * precision;
        weighted_recall += weight * recall;
    }
    let weighted_f1 = if weighted_precision + weighted_recall > 0.0 {
        2.0 * weighted_precision * weighted_recall / (weighted_precision + weighted_recall)
    } else {
        0.0
    };
    Metrics {
        accuracy,
        weighted_precision,
        weighted_recall,
        weighted_f1,
    }
}

/// Whether per-fold confusion matrices are normalized before or after the
/// fold average.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CmOrder {
    NormalizeThenAverage,
    AverageThenNormalize,
}

impl Default for CmOrder {
    fn default() -> Self {
        CmOrder::NormalizeThenAverage
    }
}

/// Mean with the (max, min) tuple across folds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    pub max: f64,
    pub min: f64,
}

impl MetricSummary {
    fn over(values: impl Iterator<Item = f64> + Clone) -> MetricSummary {
        let mut n = 0usize;
        let mut sum = 0.0;
        let mut max = f64::NEG_INFINITY;
        let mut min = f64::INFINITY;
        for v in values {
            n += 1;
            sum += v;
            max = max.max(v);
            min = min.min(v);
        }
        MetricSummary { mean: sum / n as f64, max, min }
    }
}

/// One fold's metrics and raw confusion counts.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FoldMetrics {
    pub metrics: Metrics,
    pub confusion: ConfusionMatrix,
}

/// Per-fold and aggregate evaluation results for one task.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub per_fold: Vec<FoldMetrics>,
    pub accuracy: MetricSummary,
    pub weighted_precision: MetricSummary,
    pub weighted_recall: MetricSummary,
    pub weighted_f1: MetricSummary,
    pub normalized_confusion: [[f64; 2]; 2],
    pub cm_order: CmOrder,
}

impl MetricsReport {
    pub fn from_confusions(confusions: &[ConfusionMatrix], cm_order: CmOrder) -> Result<Self> {
        if confusions.is_empty() {
            return Err(Error::Data("metrics report needs at least one fold".into()));
        }
        let per_fold: Vec<FoldMetrics> = confusions
            .iter()
            .map(|cm| FoldMetrics { metrics: metrics(cm), confusion: *cm })
            .collect();

        let summary = |f: fn(&Metrics) -> f64| {
            MetricSummary::over(per_fold.iter().map(move |fm| f(&fm.metrics)))
        };

        let normalized_confusion = match cm_order {
            CmOrder::NormalizeThenAverage => {
                let mut acc = [[0.0; 2]; 2];
                for cm in confusions {
                    let norm = cm.row_normalized();
                    for i in 0..2 {
                        for j in 0..2 {
                            acc[i][j] += norm[i][j];
                        }
                    }
                }
                let k = confusions.len() as f64;
                for row in &mut acc {
                    for v in row.iter_mut() {
                        *v /= k;
                    }
                }
                acc
            }
            CmOrder::AverageThenNormalize => {
                let mut sums = [[0.0; 2]; 2];
                for cm in confusions {
                    for i in 0..2 {
                        for j in 0..2 {
                            sums[i][j] += cm.counts[i][j] as f64;
                        }
                    }
                }
                let mut out = [[0.0; 2]; 2];
                for i in 0..2 {
                    let total = sums[i][0] + sums[i][1];
                    if total > 0.0 {
                        out[i][0] = sums[i][0] / total;
                        out[i][1] = sums[i][1] / total;
                    }
                }
                out
            }
        };

        Ok(MetricsReport {
            accuracy: summary(|m| m.accuracy),
            weighted_precision: summary(|m| m.weighted_precision),
            weighted_recall: summary(|m| m.weighted_recall),
            weighted_f1: summary(|m| m.weighted_f1),
            per_fold,
            normalized_confusion,
            cm_order,
        })
    }

    /// Rows of `metric,mean,max,min`.
    pub fn to_table_csv(&self) -> String {
        let mut out = String::from("metric,mean,max,min\n");
        let mut push = |name: &str, s: &MetricSummary| {
            out.push_str(&format!("{name},{},{},{}\n", s.mean, s.max, s.min));
        };
        push("accuracy", &self.accuracy);
        push("weighted_precision", &self.weighted_precision);
        push("weighted_recall", &self.weighted_recall);
        push("weighted_f1", &self.weighted_f1);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn folds_partition_and_stratify() {
        let mut labels = vec![0u8; 804];
        labels.extend(vec![1u8; 164]);
        let assignment = stratified_folds(&labels, 10, 7).unwrap();
        assert!(!assignment.plain_fallback);
        assert_eq!(assignment.folds.len(), 10);

        let mut seen = vec![false; labels.len()];
        for fold in &assignment.folds {
            for &i in fold {
                assert!(!seen[i], "index {i} assigned twice");
                seen[i] = true;
            }
        }
        assert!(seen.iter().all(|s| *s));

        for fold in &assignment.folds {
            let pos = fold.iter().filter(|&&i| labels[i] == 1).count();
            assert!(pos == 16 || pos == 17, "fold has {pos} positives");
        }
    }

    #[test]
    fn folds_are_deterministic_and_seed_sensitive() {
        let labels: Vec<u8> = (0..50).map(|i| (i % 3 == 0) as u8).collect();
        let a = stratified_folds(&labels, 5, 1).unwrap();
        let b = stratified_folds(&labels, 5, 1).unwrap();
        assert_eq!(a, b);
        let c = stratified_folds(&labels, 5, 2).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn singleton_folds_when_n_equals_k() {
        let labels = [0u8, 0, 1, 1];
        let assignment = stratified_folds(&labels, 4, 3).unwrap();
        assert!(assignment.plain_fallback);
        for fold in &assignment.folds {
            assert_eq!(fold.len(), 1);
        }
    }

    #[test]
    fn too_few_records_is_an_error() {
        assert!(stratified_folds(&[0, 1], 3, 0).is_err());
    }

    #[test]
    fn metrics_hand_case() {
        let cm = ConfusionMatrix { counts: [[50, 10], [5, 35]] };
        let m = metrics(&cm);
        assert!((m.accuracy - 0.85).abs() < 1e-12);
        let want_precision = 0.6 * (50.0 / 55.0) + 0.4 * (35.0 / 45.0);
        assert!((m.weighted_precision - want_precision).abs() < 1e-12);
        assert!((m.weighted_recall - 0.85).abs() < 1e-12);
        let want_f1 = 2.0 * want_precision * 0.85 / (want_precision + 0.85);
        assert!((m.weighted_f1 - want_f1).abs() < 1e-12);
        assert!((m.weighted_f1 - 0.8533).abs() < 1e-4);
    }

    #[test]
    fn perfect_and_degenerate_matrices() {
        let perfect = metrics(&ConfusionMatrix { counts: [[30, 0], [0, 20]] });
        assert_eq!(perfect.accuracy, 1.0);
        assert_eq!(perfect.weighted_precision, 1.0);
        assert_eq!(perfect.weighted_recall, 1.0);
        assert_eq!(perfect.weighted_f1, 1.0);

        // Everything predicted negative on balanced truth.
        let one_sided = metrics(&ConfusionMatrix { counts: [[25, 0], [25, 0]] });
        assert!((one_sided.accuracy - 0.5).abs() < 1e-12);
        assert!((one_sided.weighted_recall - 0.5).abs() < 1e-12);
    }

    /// Brute-force metric recomputation from prediction lists.
    fn metrics_oracle(cm: &ConfusionMatrix) -> Metrics {
        let mut truths = Vec::new();
        let mut preds = Vec::new();
        for t in 0..2u8 {
            for p in 0..2u8 {
                for _ in 0..cm.counts[t as usize][p as usize] {
                    truths.push(t);
                    preds.push(p);
                }
            }
        }
        let n = truths.len() as f64;
        let hits = truths.iter().zip(&preds).filter(|(t, p)| t == p).count() as f64;
        let mut wp = 0.0;
        let mut wr = 0.0;
        for class in 0..2u8 {
            let support = truths.iter().filter(|&&t| t == class).count() as f64;
            let predicted = preds.iter().filter(|&&p| p == class).count() as f64;
            let tp = truths
                .iter()
                .zip(&preds)
                .filter(|(t, p)| **t == class && **p == class)
                .count() as f64;
            let precision = if predicted > 0.0 { tp / predicted } else { 0.0 };
            let recall = if support > 0.0 { tp / support } else { 0.0 };
            wp += support / n * precision;
            wr += support / n * recall;
        }
        let f1 = if wp + wr > 0.0 { 2.0 * wp * wr / (wp + wr) } else { 0.0 };
        Metrics {
            accuracy: hits / n,
            weighted_precision: wp,
            weighted_recall: wr,
            weighted_f1: f1,
        }
    }

    #[test]
    fn metrics_match_brute_force_on_random_matrices() {
        let mut rng = crate::seed::rng(0x21);
        for _ in 0..500 {
            let cm = ConfusionMatrix {
                counts: [
                    [rng.gen_range(0..40), rng.gen_range(0..40)],
                    [rng.gen_range(0..40), rng.gen_range(0..40)],
                ],
            };
            if cm.total() == 0 {
                continue;
            }
            let got = metrics(&cm);
            let want = metrics_oracle(&cm);
            assert!((got.accuracy - want.accuracy).abs() < 1e-12);
            assert!((got.weighted_precision - want.weighted_precision).abs() < 1e-12);
            assert!((got.weighted_recall - want.weighted_recall).abs() < 1e-12);
            assert!((got.weighted_f1 - want.weighted_f1).abs() < 1e-12);
        }
    }

    #[test]
    fn report_summaries_and_confusion_orders() {
        let folds = vec![
            ConfusionMatrix { counts: [[8, 2], [1, 9]] },
            ConfusionMatrix { counts: [[7, 3], [2, 8]] },
            ConfusionMatrix { counts: [[9, 1], [3, 7]] },
        ];
        let report =
            MetricsReport::from_confusions(&folds, CmOrder::NormalizeThenAverage).unwrap();
        assert!(report.accuracy.min <= report.accuracy.mean);
        assert!(report.accuracy.mean <= report.accuracy.max);
        for row in report.normalized_confusion {
            assert!((row[0] + row[1] - 1.0).abs() < 1e-9);
        }

        let averaged =
            MetricsReport::from_confusions(&folds, CmOrder::AverageThenNormalize).unwrap();
        for row in averaged.normalized_confusion {
            assert!((row[0] + row[1] - 1.0).abs() < 1e-9);
        }
        assert_ne!(report.normalized_confusion, averaged.normalized_confusion);

        let csv = report.to_table_csv();
        assert!(csv.starts_with("metric,mean,max,min\n"));
        assert_eq!(csv.lines().count(), 5);
    }
}
