//! Dynamic time warping between 1-D real sequences of unequal length.
//!
//! Point cost is the squared difference. The distance is the minimum
//! cumulative cost over all warping paths that start at (1,1), end at (m,n),
//! move monotonically, and advance by at most one step per coordinate. An
//! exhaustive-enumeration oracle is provided for testing small instances.

use crate::error::{Error, Result};

/// An alignment between two sequences, as 1-based index pairs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WarpingPath {
    pub pairs: Vec<(usize, usize)>,
}

impl WarpingPath {
    /// Check boundary, monotonicity, and continuity against lengths (m, n).
    pub fn is_valid(&self, m: usize, n: usize) -> bool {
        let Some(&first) = self.pairs.first() else {
            return false;
        };
        let Some(&last) = self.pairs.last() else {
            return false;
        };
        if first != (1, 1) || last != (m, n) {
            return false;
        }
        self.pairs.windows(2).all(|w| {
            let (e0, f0) = w[0];
            let (e1, f1) = w[1];
            let de = e1.wrapping_sub(e0);
            let df = f1.wrapping_sub(f0);
            e1 >= e0 && f1 >= f0 && de <= 1 && df <= 1 && de + df >= 1
        })
    }
}

/// DTW distance together with one optimal path realizing it.
#[derive(Debug, Clone, PartialEq)]
pub struct DtwResult {
    pub distance: f64,
    pub path: WarpingPath,
}

fn point_cost(a: f64, b: f64) -> f64 {
    let d = a - b;
    d * d
}

/// Compute the DTW distance and an optimal warping path.
///
/// Ties during backtracking are broken diagonal, then vertical, then
/// horizontal, so paths are reproducible.
pub fn dtw(x: &[f64], y: &[f64]) -> Result<DtwResult> {
    let (m, n) = (x.len(), y.len());
    if m == 0 || n == 0 {
        return Err(Error::Data("dtw requires non-empty sequences".into()));
    }
    for v in x.iter().chain(y.iter()) {
        if !v.is_finite() {
            return Err(Error::Data("dtw requires finite entries".into()));
        }
    }

    // Accumulated cost with a virtual border row/column of infinity.
    let width = n + 1;
    let mut acc = vec![f64::INFINITY; (m + 1) * width];
    acc[0] = 0.0;
    for i in 1..=m {
        for j in 1..=n {
            let best = acc[(i - 1) * width + (j - 1)]
                .min(acc[(i - 1) * width + j])
                .min(acc[i * width + (j - 1)]);
            acc[i * width + j] = point_cost(x[i - 1], y[j - 1]) + best;
        }
    }

    // Backtrack from (m, n); tie order diagonal, vertical, horizontal.
    let mut pairs = Vec::with_capacity(m + n);
    let (mut i, mut j) = (m, n);
    pairs.push((i, j));
    while (i, j) != (1, 1) {
        let diag = acc[(i - 1) * width + (j - 1)];
        let vert = acc[(i - 1) * width + j];
        let horiz = acc[i * width + (j - 1)];
        let best = diag.min(vert).min(horiz);
        if diag == best {
            i -= 1;
            j -= 1;
        } else if vert == best {
            i -= 1;
        } else {
            j -= 1;
        }
        pairs.push((i, j));
    }
    pairs.reverse();

    Ok(DtwResult {
        distance: acc[m * width + n],
        path: WarpingPath { pairs },
    })
}

/// Minimum path cost by exhaustive enumeration of all valid warping paths.
///
/// Test oracle only; refuses instances with more than 64 grid cells.
pub fn dtw_oracle(x: &[f64], y: &[f64]) -> Result<f64> {
    let (m, n) = (x.len(), y.len());
    if m == 0 || n == 0 {
        return Err(Error::Data("dtw_oracle requires non-empty sequences".into()));
    }
    if m * n > 64 {
        return Err(Error::Config(format!(
            "dtw_oracle enumeration bound exceeded: {m}x{n} > 64 cells"
        )));
    }

    fn walk(x: &[f64], y: &[f64], i: usize, j: usize, cost_so_far: f64, best: &mut f64) {
        let cost = cost_so_far + point_cost(x[i - 1], y[j - 1]);
        if i == x.len() && j == y.len() {
            if cost < *best {
                *best = cost;
            }
            return;
        }
        if i < x.len() && j < y.len() {
            walk(x, y, i + 1, j + 1, cost, best);
        }
        if i < x.len() {
            walk(x, y, i + 1, j, cost, best);
        }
        if j < y.len() {
            walk(x, y, i, j + 1, cost, best);
        }
    }

    let mut best = f64::INFINITY;
    walk(x, y, 1, 1, 0.0, &mut best);
    Ok(best)
}

/// Cost of a path: the sum of point costs over its pairs.
pub fn path_cost(x: &[f64], y: &[f64], path: &WarpingPath) -> f64 {
    path.pairs
        .iter()
        .map(|&(e, f)| point_cost(x[e - 1], y[f - 1]))
        .sum()
}
