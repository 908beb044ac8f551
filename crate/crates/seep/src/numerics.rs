//! Small shared numeric helpers.

/// Sum with a fixed-order pairwise (tree) reduction.
///
/// Used for every reduction over collocation points and lanes so that a run
/// is bit-reproducible: the summation order depends only on the slice layout,
/// never on scheduling, and the tree shape keeps rounding error ~O(log n).
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 32 {
        let mut acc = 0.0;
        for &x in xs {
            acc += x;
        }
        return acc;
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Mean via [`pairwise_sum`]; 0.0 for an empty slice.
pub fn pairwise_mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        pairwise_sum(xs) / xs.len() as f64
    }
}

/// |a - b| / max(|a| + |b|, floor) -- symmetric relative error used by the
/// gradient and jet checks.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / (a.abs() + b.abs()).max(1e-8)
}
