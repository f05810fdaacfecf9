//! Mutual nearest-neighbor descriptor matching under L2.

use super::LocalFeature;

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(query: &[f64], set: &[LocalFeature]) -> Option<usize> {
    set.iter()
        .enumerate()
        .map(|(i, f)| (i, sq_dist(query, &f.descriptor)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(i, _)| i)
}

/// Pairs `(i, j)` where `b[j]` is the nearest descriptor to `a[i]` and vice versa.
pub fn mutual_nearest_neighbors(a: &[LocalFeature], b: &[LocalFeature]) -> Vec<(usize, usize)> {
    let b_to_a: Vec<Option<usize>> = b.iter().map(|f| nearest(&f.descriptor, a)).collect();
    a.iter()
        .enumerate()
        .filter_map(|(i, f)| {
            let j = nearest(&f.descriptor, b)?;
            (b_to_a[j] == Some(i)).then_some((i, j))
        })
        .collect()
}
