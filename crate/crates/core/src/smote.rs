//! Synthetic minority oversampling by interpolation toward same-class
//! nearest neighbors.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{check_dim, squared_distance, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SmoteConfig {
    pub k: usize,
    /// Per-class target count; `None` balances to the majority class.
    pub target: Option<usize>,
    pub seed: u64,
}

impl Default for SmoteConfig {
    fn default() -> Self {
        SmoteConfig {
            k: 5,
            target: None,
            seed: 42,
        }
    }
}

/// Indices of the `k` members nearest to `members[i]`, excluding itself.
/// Distance ties resolve to the lower row index.
pub fn nearest_neighbors(x: &Matrix, members: &[usize], i: usize, k: usize) -> Vec<usize> {
    let base = x.row(members[i]);
    let mut d: Vec<(f64, usize)> = members
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(_, &r)| (squared_distance(base, x.row(r)), r))
        .collect();
    d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    d.into_iter().take(k).map(|(_, r)| r).collect()
}

fn synthesize(x: &Matrix, members: &[usize], count: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    if members.len() == 1 {
        log::warn!("class with a single sample is duplicated instead of interpolated");
        return vec![x.row(members[0]).to_vec(); count];
    }
    let k = k.min(members.len() - 1);
    let neighbors: Vec<Vec<usize>> = (0..members.len()).map(|i| nearest_neighbors(x, members, i, k)).collect();
    (0..count)
        .map(|_| {
            let i = rng.random_range(0..members.len());
            let nb = neighbors[i][rng.random_range(0..k)];
            let lambda: f64 = rng.random();
            x.row(members[i])
                .iter()
                .zip(x.row(nb))
                .map(|(a, b)| a + lambda * (b - a))
                .collect()
        })
        .collect()
}

/// Returns the originals unchanged and in order, followed by synthetic rows
/// grouped by ascending class.
pub fn oversample(x: &Matrix, labels: &[usize], config: &SmoteConfig) -> Result<(Matrix, Vec<usize>)> {
    check_dim(x.rows(), labels.len())?;
    if config.k == 0 {
        return Err(Error::InvalidConfig("smote k must be at least 1".into()));
    }
    let n_classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, &l) in labels.iter().enumerate() {
        members[l].push(i);
    }
    let majority = members.iter().map(Vec::len).max().unwrap_or(0);
    let target = config.target.unwrap_or(majority);
    if target < majority {
        return Err(Error::InvalidConfig(format!(
            "smote target {target} is below the largest class count {majority}"
        )));
    }
    let synthetic: Vec<Vec<Vec<f64>>> = members
        .par_iter()
        .enumerate()
        .map(|(class, m)| {
            if m.is_empty() || m.len() >= target {
                return Vec::new();
            }
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(class as u64);
            synthesize(x, m, target - m.len(), config.k, &mut rng)
        })
        .collect();
    let mut out = x.clone();
    let mut out_labels = labels.to_vec();
    for (class, rows) in synthetic.into_iter().enumerate() {
        for r in rows {
            out.push_row(&r)?;
            out_labels.push(class);
        }
    }
    Ok((out, out_labels))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn balanced_input_unchanged() {
        let x = Matrix::from_rows(&[[0.0], [1.0], [2.0], [3.0]]).unwrap();
        let y = [0, 1, 0, 1];
        let (x2, y2) = oversample(&x, &y, &SmoteConfig::default()).unwrap();
        assert_eq!(x2, x);
        assert_eq!(y2, y);
    }

    #[test]
    fn two_point_class_stays_in_segment() {
        let x = Matrix::from_rows(&[[0.0], [1.0], [5.0], [6.0], [7.0], [8.0], [9.0]]).unwrap();
        let y = [0, 0, 1, 1, 1, 1, 1];
        let (x2, y2) = oversample(&x, &y, &SmoteConfig::default()).unwrap();
        assert_eq!(x2.rows(), 10);
        assert_eq!(&y2[7..], &[0, 0, 0]);
        for i in 7..10 {
            assert!((0.0..=1.0).contains(&x2.row(i)[0]));
        }
    }

    #[test]
    fn singleton_duplicated() {
        let x = Matrix::from_rows(&[[4.0, 4.0], [0.0, 0.0], [1.0, 0.0], [2.0, 0.0]]).unwrap();
        let (x2, y2) = oversample(&x, &[1, 0, 0, 0], &SmoteConfig::default()).unwrap();
        assert_eq!(y2, vec![1, 0, 0, 0, 1, 1]);
        assert_eq!(x2.row(4), &[4.0, 4.0]);
        assert_eq!(x2.row(5), &[4.0, 4.0]);
    }

    #[test]
    fn histogram_uniform_and_target_checked() {
        let rows: Vec<[f64; 2]> = (0..23).map(|i| [i as f64, (i * i % 7) as f64]).collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let y: Vec<usize> = (0..23).map(|i| if i < 15 { 0 } else if i < 20 { 1 } else { 2 }).collect();
        let cfg = SmoteConfig { target: Some(20), ..SmoteConfig::default() };
        let (_, y2) = oversample(&x, &y, &cfg).unwrap();
        for c in 0..3 {
            assert_eq!(y2.iter().filter(|&&l| l == c).count(), 20);
        }
        let low = SmoteConfig { target: Some(10), ..SmoteConfig::default() };
        assert!(oversample(&x, &y, &low).is_err());
        let a = oversample(&x, &y, &SmoteConfig::default()).unwrap();
        let b = oversample(&x, &y, &SmoteConfig::default()).unwrap();
        assert_eq!(a, b);
    }
}
