use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Local outlier factor of every row of `x` with exactly `k` neighbors.
///
/// Neighbors are the `k` nearest other rows (ties by row order), the
/// reachability distance is `max(k-dist(o), d(p, o))`, and
/// `lrd = 1 / (mean reach + 1e-10)` as in scikit-learn.
pub fn lof_scores(x: &DMatrix<f64>, k: usize) -> Result<Vec<f64>> {
    let n = x.nrows();
    if k == 0 || k >= n {
        return Err(Error::InvalidArgument(format!("LOF needs 1 ≤ k < N, got k={k}, N={n}")));
    }
    let rows: Vec<Vec<f64>> = (0..n).map(|i| x.row(i).iter().copied().collect()).collect();
    let neighbors: Vec<Vec<(f64, usize)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut d: Vec<(f64, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| {
                    let s: f64 = rows[i].iter().zip(&rows[j]).map(|(a, b)| (a - b).powi(2)).sum();
                    (s.sqrt(), j)
                })
                .collect();
            d.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            d.truncate(k);
            d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            d
        })
        .collect();
    let kdist: Vec<f64> = neighbors.iter().map(|nb| nb[k - 1].0).collect();
    let lrd: Vec<f64> = neighbors
        .iter()
        .map(|nb| {
            let reach: f64 = nb.iter().map(|&(d, j)| d.max(kdist[j])).sum::<f64>() / k as f64;
            1.0 / (reach + 1e-10)
        })
        .collect();
    Ok(neighbors
        .iter()
        .zip(&lrd)
        .map(|(nb, &own)| nb.iter().map(|&(_, j)| lrd[j]).sum::<f64>() / k as f64 / own)
        .collect())
}

/// Indices of the `n` most inlying rows (smallest LOF), in row order.
pub fn select_inliers(x: &DMatrix<f64>, k: usize, n: usize) -> Result<Vec<usize>> {
    if n >= x.nrows() {
        return Ok((0..x.nrows()).collect());
    }
    let scores = lof_scores(x, k)?;
    let mut order: Vec<usize> = (0..x.nrows()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
    order.truncate(n);
    order.sort_unstable();
    Ok(order)
}
