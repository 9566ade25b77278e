use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Grid-search outcome. Failed fits are recorded as `None`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvReport<T> {
    pub candidates: Vec<T>,
    /// `fold_mape[candidate][fold]`.
    pub fold_mape: Vec<Vec<Option<f64>>>,
    pub mean_mape: Vec<Option<f64>>,
    pub selected: usize,
    pub folds: usize,
    pub seed: u64,
}

impl<T> CvReport<T> {
    pub fn best(&self) -> &T {
        &self.candidates[self.selected]
    }
}

/// Contiguous validation blocks in sample order. The split ignores the
/// seed, so it is trivially a function of `(n, folds, seed)`.
pub fn fold_ranges(n: usize, folds: usize, _seed: u64) -> Result<Vec<Range<usize>>> {
    if folds < 2 {
        return Err(Error::InvalidArgument("need at least 2 folds".into()));
    }
    let base = n / folds;
    let extra = n % folds;
    let mut out = Vec::with_capacity(folds);
    let mut start = 0;
    for f in 0..folds {
        let len = base + usize::from(f < extra);
        if len < 2 {
            return Err(Error::InvalidArgument(format!("fold {f} would hold {len} samples")));
        }
        out.push(start..start + len);
        start += len;
    }
    Ok(out)
}

/// Scores every candidate on every fold with `eval(candidate, train, val)`
/// and selects the lowest mean MAPE, first candidate on ties.
pub fn kfold_grid_search<T, F>(grid: &[T], n: usize, folds: usize, seed: u64, eval: F) -> Result<CvReport<T>>
where
    T: Clone + Sync,
    F: Fn(&T, &[usize], &[usize]) -> Result<f64> + Sync,
{
    if grid.is_empty() {
        return Err(Error::Empty("grid"));
    }
    let ranges = fold_ranges(n, folds, seed)?;
    let jobs: Vec<(usize, usize)> = (0..grid.len()).flat_map(|c| (0..folds).map(move |f| (c, f))).collect();
    let scores: Vec<Option<f64>> = jobs
        .par_iter()
        .map(|&(c, f)| {
            let val: Vec<usize> = ranges[f].clone().collect();
            let train: Vec<usize> = (0..n).filter(|i| !ranges[f].contains(i)).collect();
            match eval(&grid[c], &train, &val) {
                Ok(m) if m.is_finite() => Some(m),
                Ok(_) => None,
                Err(e) => {
                    log::debug!("candidate {c} fold {f} failed: {e}");
                    None
                }
            }
        })
        .collect();
    let fold_mape: Vec<Vec<Option<f64>>> = scores.chunks(folds).map(<[_]>::to_vec).collect();
    let mean_mape: Vec<Option<f64>> = fold_mape
        .iter()
        .map(|row| row.iter().copied().sum::<Option<f64>>().map(|s| s / folds as f64))
        .collect();
    let mut selected = None;
    for (c, m) in mean_mape.iter().enumerate() {
        if let Some(m) = m {
            if selected.is_none_or(|(_, best)| *m < best) {
                selected = Some((c, *m));
            }
        }
    }
    let (selected, _) =
        selected.ok_or_else(|| Error::Degenerate("every grid candidate failed".into()))?;
    Ok(CvReport { candidates: grid.to_vec(), fold_mape, mean_mape, selected, folds, seed })
}
