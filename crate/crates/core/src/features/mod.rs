//! Deterministic single-modal feature computation.
//!
//! MFCC from raw audio, a frozen statistic vector for physiological time
//! series, duration standardization, task-level averaging, and Z-score
//! normalization. All operations are pure.

mod mfcc;
mod wav;

pub use mfcc::{full_power_spectrum, mfcc, power_spectrum, MfccConfig};
pub use wav::read_wav;

use serde::{Deserialize, Serialize};

use crate::dataset::FeatureSequence;
use crate::error::{Error, Result};

/// Truncate or zero-pad a sample sequence to exactly `target` samples.
pub fn standardize_duration(samples: &[f64], target: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(target);
    out.extend(samples.iter().take(target));
    out.resize(target, 0.0);
    out
}

/// Number of statistics produced by [`ts_features`]. Order is frozen.
pub const TS_FEATURE_COUNT: usize = 12;

/// Names of the `ts_features` entries, in output order.
pub const TS_FEATURE_NAMES: [&str; TS_FEATURE_COUNT] = [
    "abs_energy",
    "max_abs",
    "mean",
    "variance",
    "std",
    "min",
    "max",
    "median",
    "first",
    "last",
    "mean_abs_change",
    "count_above_mean",
];

/// Fixed ordered statistic vector for a scalar time series.
pub fn ts_features(series: &[f64]) -> Result<Vec<f64>> {
    if series.len() < 2 {
        return Err(Error::Data(format!(
            "ts_features requires at least 2 points, got {}",
            series.len()
        )));
    }
    let n = series.len() as f64;
    let abs_energy: f64 = series.iter().map(|x| x * x).sum();
    let max_abs = series.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let mean = series.iter().sum::<f64>() / n;
    let variance = series.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let std = variance.sqrt();
    let min = series.iter().fold(f64::INFINITY, |m, &x| m.min(x));
    let max = series.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x));
    let median = {
        let mut sorted = series.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mid = sorted.len() / 2;
        if sorted.len() % 2 == 1 {
            sorted[mid]
        } else {
            (sorted[mid - 1] + sorted[mid]) / 2.0
        }
    };
    let first = series[0];
    let last = series[series.len() - 1];
    let mean_abs_change =
        series.windows(2).map(|w| (w[1] - w[0]).abs()).sum::<f64>() / (n - 1.0);
    let count_above_mean = series.iter().filter(|&&x| x > mean).count() as f64;

    Ok(vec![
        abs_energy,
        max_abs,
        mean,
        variance,
        std,
        min,
        max,
        median,
        first,
        last,
        mean_abs_change,
        count_above_mean,
    ])
}

/// Column-wise mean over time steps, collapsing a sequence to one vector.
pub fn task_fuse(seq: &FeatureSequence) -> Vec<f64> {
    let t = seq.len_t() as f64;
    let mut out = vec![0.0; seq.dim()];
    for row in &seq.values {
        for (o, v) in out.iter_mut().zip(row) {
            *o += v;
        }
    }
    for o in &mut out {
        *o /= t;
    }
    out
}

/// Per-dimension mean and population standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZScoreStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Fit Z-score statistics over a list of equal-length vectors.
pub fn zscore_fit(features: &[Vec<f64>]) -> Result<ZScoreStats> {
    let Some(first) = features.first() else {
        return Err(Error::Data("zscore_fit requires a non-empty list".into()));
    };
    let dim = first.len();
    let n = features.len() as f64;
    let mut mean = vec![0.0; dim];
    for v in features {
        if v.len() != dim {
            return Err(Error::Data(format!(
                "zscore_fit: vector of length {} among length-{dim} vectors",
                v.len()
            )));
        }
        for (m, x) in mean.iter_mut().zip(v) {
            *m += x;
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    let mut std = vec![0.0; dim];
    for v in features {
        for ((s, x), m) in std.iter_mut().zip(v).zip(&mean) {
            *s += (x - m) * (x - m);
        }
    }
    for s in &mut std {
        *s = (*s / n).sqrt();
    }
    Ok(ZScoreStats { mean, std })
}

/// Standardize a vector; dimensions with zero deviation map to 0.
pub fn zscore_apply(v: &[f64], stats: &ZScoreStats) -> Result<Vec<f64>> {
    if v.len() != stats.mean.len() {
        return Err(Error::Data(format!(
            "zscore_apply: vector length {} does not match stats length {}",
            v.len(),
            stats.mean.len()
        )));
    }
    Ok(v.iter()
        .zip(&stats.mean)
        .zip(&stats.std)
        .map(|((x, m), s)| if *s == 0.0 { 0.0 } else { (x - m) / s })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::ModalityId;
    use proptest::prelude::*;

    #[test]
    fn duration_identity_truncate_pad() {
        let same: Vec<f64> = (0..160_000).map(|i| i as f64).collect();
        assert_eq!(standardize_duration(&same, 160_000), same);

        let long: Vec<f64> = (0..200_000).map(|i| i as f64).collect();
        let truncated = standardize_duration(&long, 160_000);
        assert_eq!(truncated.len(), 160_000);
        assert_eq!(truncated[159_999], 159_999.0);

        let short: Vec<f64> = (0..100_000).map(|i| i as f64 + 1.0).collect();
        let padded = standardize_duration(&short, 160_000);
        assert_eq!(padded.len(), 160_000);
        assert_eq!(padded[99_999], 100_000.0);
        assert!(padded[100_000..].iter().all(|&v| v == 0.0));
    }

    /// Independent recomputation of the statistic vector, coded naively.
    fn ts_features_naive(series: &[f64]) -> Vec<f64> {
        let n = series.len();
        let mean = series.iter().sum::<f64>() / n as f64;
        let mut sorted = series.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = if n % 2 == 1 {
            sorted[n / 2]
        } else {
            (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
        };
        let mut abs_energy = 0.0;
        let mut max_abs = 0.0f64;
        let mut var = 0.0;
        let mut min = series[0];
        let mut max = series[0];
        let mut above = 0.0;
        for &x in series {
            abs_energy += x * x;
            max_abs = max_abs.max(x.abs());
            var += (x - mean).powi(2);
            if x < min {
                min = x;
            }
            if x > max {
                max = x;
            }
            if x > mean {
                above += 1.0;
            }
        }
        var /= n as f64;
        let mut change = 0.0;
        for i in 1..n {
            change += (series[i] - series[i - 1]).abs();
        }
        change /= (n - 1) as f64;
        vec![
            abs_energy,
            max_abs,
            mean,
            var,
            var.sqrt(),
            min,
            max,
            median,
            series[0],
            series[n - 1],
            change,
            above,
        ]
    }

    #[test]
    fn ts_features_hand_cases() {
        let v = ts_features(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(v.len(), TS_FEATURE_COUNT);
        assert_eq!(v[0], 14.0); // abs energy
        assert_eq!(v[1], 3.0); // max |x|
        assert_eq!(v[2], 2.0); // mean

        let c = ts_features(&[5.0, 5.0, 5.0, 5.0]).unwrap();
        assert_eq!(c[3], 0.0); // variance
        assert_eq!(c[10], 0.0); // mean abs change

        let w = ts_features(&[-3.0, 4.0]).unwrap();
        assert_eq!(w[1], 4.0);
        assert_eq!(w[0], 25.0);

        assert!(ts_features(&[1.0]).is_err());
    }

    proptest! {
        #[test]
        fn ts_features_matches_naive(series in proptest::collection::vec(-100.0f64..100.0, 2..40)) {
            let got = ts_features(&series).unwrap();
            let want = ts_features_naive(&series);
            for (g, w) in got.iter().zip(&want) {
                let tol = 1e-12 * (1.0 + w.abs());
                prop_assert!((g - w).abs() <= tol, "{g} vs {w}");
            }
        }
    }

    #[test]
    fn task_fuse_cases() {
        let single = FeatureSequence::new(ModalityId::Physio, vec![vec![1.0, -2.0, 3.0]]).unwrap();
        assert_eq!(task_fuse(&single), vec![1.0, -2.0, 3.0]);

        let two =
            FeatureSequence::new(ModalityId::Physio, vec![vec![1.0, 1.0], vec![3.0, 3.0]]).unwrap();
        assert_eq!(task_fuse(&two), vec![2.0, 2.0]);
    }

    #[test]
    fn zscore_hand_case() {
        let stats = zscore_fit(&[vec![1.0], vec![2.0], vec![3.0]]).unwrap();
        assert!((stats.mean[0] - 2.0).abs() < 1e-15);
        assert!((stats.std[0] - (2.0f64 / 3.0).sqrt()).abs() < 1e-12);
        let z = zscore_apply(&[1.0], &stats).unwrap();
        assert!((z[0] - (-1.224744871391589)).abs() < 1e-12);
        let at_mean = zscore_apply(&[2.0], &stats).unwrap();
        assert_eq!(at_mean[0], 0.0);
    }

    #[test]
    fn zscore_constant_dimension_maps_to_zero() {
        let stats = zscore_fit(&[vec![4.0, 1.0], vec![4.0, 3.0]]).unwrap();
        let z = zscore_apply(&[4.0, 9.0], &stats).unwrap();
        assert_eq!(z[0], 0.0);
        assert!(z[1] > 0.0);
    }

    proptest! {
        #[test]
        fn zscore_fit_apply_standardizes(
            rows in proptest::collection::vec(
                proptest::collection::vec(-50.0f64..50.0, 3),
                2..30,
            )
        ) {
            let stats = zscore_fit(&rows).unwrap();
            let z: Vec<Vec<f64>> = rows
                .iter()
                .map(|r| zscore_apply(r, &stats).unwrap())
                .collect();
            let restats = zscore_fit(&z).unwrap();
            for d in 0..3 {
                prop_assert!(restats.mean[d].abs() < 1e-9);
                if stats.std[d] > 1e-9 {
                    prop_assert!((restats.std[d] - 1.0).abs() < 1e-9);
                }
            }
        }
    }
}
