use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of CSI lags in every feature vector.
pub const LAGS: usize = 6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FeatureKind {
    Temperature,
    Height,
    Magnitude,
    Divergence,
    Vorticity,
}

impl FeatureKind {
    pub const ALL: [FeatureKind; 5] = [
        FeatureKind::Temperature,
        FeatureKind::Height,
        FeatureKind::Magnitude,
        FeatureKind::Divergence,
        FeatureKind::Vorticity,
    ];

    pub fn short(self) -> &'static str {
        match self {
            FeatureKind::Temperature => "t",
            FeatureKind::Height => "h",
            FeatureKind::Magnitude => "m",
            FeatureKind::Divergence => "d",
            FeatureKind::Vorticity => "c",
        }
    }
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short())
    }
}

/// Weighted `(m, s)` pairs per source (horizon map index, 1-based) and
/// feature kind, in [`FeatureKind::ALL`] order.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MomentBlocks(pub BTreeMap<usize, [(f64, f64); 5]>);

impl MomentBlocks {
    pub fn insert(&mut self, source: usize, block: [(f64, f64); 5]) {
        self.0.insert(source, block);
    }

    pub fn get(&self, source: usize) -> Option<&[(f64, f64); 5]> {
        self.0.get(&source)
    }
}

fn sorted_sources(sources: &[usize]) -> Vec<usize> {
    let mut s = sources.to_vec();
    s.sort_unstable();
    s.dedup();
    s
}

/// Feature dimension for a given number of selected sources.
pub fn feature_dim(n_sources: usize) -> usize {
    LAGS + 2 + FeatureKind::ALL.len() * 2 * n_sources
}

/// `[lags | elevation, azimuth | T | H | M | D | C]`, each feature block
/// holding `(m, s)` for every source in ascending order.
pub fn assemble_feature_vector(
    lags: &[f64],
    angles: (f64, f64),
    blocks: &MomentBlocks,
    sources: &[usize],
) -> Result<Vec<f64>> {
    if lags.len() != LAGS {
        return Err(Error::InvalidArgument(format!(
            "need {LAGS} CSI lags, got {}",
            lags.len()
        )));
    }
    let sources = sorted_sources(sources);
    let mut x = Vec::with_capacity(feature_dim(sources.len()));
    x.extend_from_slice(lags);
    x.push(angles.0);
    x.push(angles.1);
    for k in 0..FeatureKind::ALL.len() {
        for &s in &sources {
            let block = blocks
                .get(s)
                .ok_or_else(|| Error::InvalidArgument(format!("missing moment block for source {s}")))?;
            x.push(block[k].0);
            x.push(block[k].1);
        }
    }
    Ok(x)
}

/// Column names matching [`assemble_feature_vector`].
pub fn feature_names(sources: &[usize]) -> Vec<String> {
    let sources = sorted_sources(sources);
    let mut names: Vec<String> = (1..=LAGS).map(|l| format!("lag{l}")).collect();
    names.push("elevation".into());
    names.push("azimuth".into());
    for kind in FeatureKind::ALL {
        for &s in &sources {
            names.push(format!("{kind}_m_h{s}"));
            names.push(format!("{kind}_s_h{s}"));
        }
    }
    names
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blocks(n: usize) -> MomentBlocks {
        let mut b = MomentBlocks::default();
        for s in 1..=n {
            b.insert(s, std::array::from_fn(|k| (s as f64 * 10.0 + k as f64, -(k as f64))));
        }
        b
    }

    #[test]
    fn dimensions() {
        let lags = [1.0; 6];
        let x = assemble_feature_vector(&lags, (40.0, 180.0), &blocks(6), &[5, 1, 3]).unwrap();
        assert_eq!(x.len(), 38);
        assert_eq!(feature_dim(3), 38);
        let x0 = assemble_feature_vector(&lags, (40.0, 180.0), &blocks(6), &[]).unwrap();
        assert_eq!(x0.len(), 8);
        assert_eq!(feature_names(&[5, 1, 3]).len(), 38);
    }

    #[test]
    fn ordering_is_feature_major_with_ascending_sources() {
        let lags = [0.9, 0.8, 0.7, 0.6, 0.5, 0.4];
        let x = assemble_feature_vector(&lags, (40.0, 180.0), &blocks(3), &[3, 1]).unwrap();
        assert_eq!(&x[..8], &[0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 40.0, 180.0]);
        assert_eq!(&x[8..12], &[10.0, 0.0, 30.0, 0.0]);
        assert_eq!(&x[12..16], &[11.0, -1.0, 31.0, -1.0]);
        let names = feature_names(&[3, 1]);
        assert_eq!(&names[8..12], &["t_m_h1", "t_s_h1", "t_m_h3", "t_s_h3"]);
        let again = assemble_feature_vector(&lags, (40.0, 180.0), &blocks(3), &[3, 1]).unwrap();
        assert!(x.iter().zip(&again).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn missing_inputs_fail() {
        assert!(assemble_feature_vector(&[1.0; 5], (0.0, 0.0), &blocks(1), &[1]).is_err());
        assert!(assemble_feature_vector(&[1.0; 6], (0.0, 0.0), &blocks(1), &[2]).is_err());
    }
}
