//! Random forest classifier: bootstrap-aggregated Gini trees with random
//! feature subsets, combined by majority vote.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hurdat2::StatusCode;
use crate::labels::{argmax, LabelSet};
use crate::matrix::{check_dim, Matrix};
use crate::tree::{DecisionTree, FeatureSampling, Targets, TreeParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubsetMode {
    /// Fresh feature subset at every split.
    #[default]
    PerSplit,
    /// One feature subset per tree.
    PerTree,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RfConfig {
    pub n_trees: usize,
    /// Features considered per split (or per tree); `None` means ⌈√d⌉.
    pub max_features: Option<usize>,
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    pub bootstrap: bool,
    pub subset_mode: SubsetMode,
    pub seed: u64,
}

impl Default for RfConfig {
    fn default() -> Self {
        RfConfig {
            n_trees: 200,
            max_features: None,
            max_depth: None,
            min_samples_leaf: 1,
            bootstrap: true,
            subset_mode: SubsetMode::PerSplit,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RfModel {
    pub classes: LabelSet,
    pub n_features: usize,
    pub features_per_split: usize,
    pub tree_seeds: Vec<u64>,
    pub trees: Vec<DecisionTree>,
    pub config: RfConfig,
}

/// Rows drawn uniformly with replacement, as many as the training set.
pub fn bootstrap_rows(n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

/// Fits a forest on encoded labels (`labels[i]` indexes `classes`).
pub fn fit_rf(x: &Matrix, labels: &[usize], classes: LabelSet, config: &RfConfig) -> Result<RfModel> {
    check_dim(x.rows(), labels.len())?;
    if config.n_trees == 0 || config.min_samples_leaf == 0 {
        return Err(Error::InvalidConfig(
            "rf n_trees and min_samples_leaf must be at least 1".into(),
        ));
    }
    let mut present = vec![false; classes.len()];
    for &l in labels {
        if l >= classes.len() {
            return Err(Error::InvalidConfig("label index out of range".into()));
        }
        present[l] = true;
    }
    if present.iter().filter(|&&p| p).count() < 2 {
        return Err(Error::InsufficientData(
            "random forest needs at least 2 classes in the training data".into(),
        ));
    }
    let d = x.cols();
    let m = config
        .max_features
        .unwrap_or_else(|| (d as f64).sqrt().ceil() as usize)
        .clamp(1, d.max(1));
    let mut master = ChaCha8Rng::seed_from_u64(config.seed);
    let tree_seeds: Vec<u64> = (0..config.n_trees).map(|_| master.next_u64()).collect();
    let params = TreeParams {
        max_depth: config.max_depth,
        min_samples_leaf: config.min_samples_leaf,
    };
    let n_classes = classes.len();
    let trees = tree_seeds
        .par_iter()
        .map(|&seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let rows = if config.bootstrap {
                bootstrap_rows(x.rows(), &mut rng)
            } else {
                (0..x.rows()).collect()
            };
            let sampling = match config.subset_mode {
                _ if m >= d => FeatureSampling::All,
                SubsetMode::PerSplit => FeatureSampling::PerSplit(m),
                SubsetMode::PerTree => {
                    let mut f = rand::seq::index::sample(&mut rng, d, m).into_vec();
                    f.sort_unstable();
                    FeatureSampling::Subset(f)
                }
            };
            DecisionTree::fit_rows(
                x,
                Targets::Classes { labels, n_classes },
                &rows,
                &params,
                &sampling,
                Some(&mut rng),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RfModel {
        classes,
        n_features: d,
        features_per_split: m,
        tree_seeds,
        trees,
        config: *config,
    })
}

impl RfModel {
    /// Per-class vote counts.
    pub fn votes(&self, features: &[f64]) -> Result<Vec<usize>> {
        check_dim(self.n_features, features.len())?;
        let mut votes = vec![0usize; self.classes.len()];
        for t in &self.trees {
            votes[t.predict_unchecked(features) as usize] += 1;
        }
        Ok(votes)
    }

    pub fn predict_index(&self, features: &[f64]) -> Result<usize> {
        let votes: Vec<f64> = self.votes(features)?.into_iter().map(|v| v as f64).collect();
        Ok(argmax(&votes))
    }
}

/// Majority-vote class and per-class vote fractions. Tied votes go to the
/// lexicographically first status code.
pub fn predict_rf(model: &RfModel, features: &[f64]) -> Result<(StatusCode, Vec<f64>)> {
    let votes = model.votes(features)?;
    let total = model.trees.len() as f64;
    let fractions: Vec<f64> = votes.iter().map(|&v| v as f64 / total).collect();
    let best = argmax(&fractions);
    Ok((model.classes.get(best).clone(), fractions))
}

/// Mean impurity decrease per feature, normalized to sum to one. Returns all
/// zeros (with a warning) when no tree has a split.
pub fn feature_importance(model: &RfModel) -> Result<Vec<f64>> {
    if model.trees.is_empty() {
        return Err(Error::InvalidConfig("forest has no fitted trees".into()));
    }
    let mut total = vec![0.0; model.n_features];
    for t in &model.trees {
        let gains = t.feature_gains();
        let sum: f64 = gains.iter().sum();
        if sum > 0.0 {
            for (acc, g) in total.iter_mut().zip(gains) {
                *acc += g / sum;
            }
        }
    }
    let sum: f64 = total.iter().sum();
    if sum > 0.0 {
        total.iter_mut().for_each(|v| *v /= sum);
    } else {
        log::warn!("no tree in the forest split; feature importances are all zero");
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> (Matrix, Vec<usize>, LabelSet) {
        let rows = [
            [0.0, 1.0],
            [0.2, 0.3],
            [0.4, 0.8],
            [0.6, 0.1],
            [1.0, 0.9],
            [1.2, 0.2],
            [1.4, 0.7],
            [1.6, 0.4],
        ];
        let labels = vec![0, 0, 0, 0, 1, 1, 1, 1];
        let classes = LabelSet::new(vec![StatusCode::HU, StatusCode::TS]);
        (Matrix::from_rows(&rows).unwrap(), labels, classes)
    }

    #[test]
    fn degenerate_forest_equals_tree() {
        let (x, y, classes) = toy();
        let cfg = RfConfig {
            n_trees: 1,
            max_features: Some(2),
            bootstrap: false,
            ..RfConfig::default()
        };
        let rf = fit_rf(&x, &y, classes, &cfg).unwrap();
        let tree = DecisionTree::fit(
            &x,
            Targets::Classes { labels: &y, n_classes: 2 },
            &TreeParams::default(),
            &FeatureSampling::All,
            None,
        )
        .unwrap();
        assert_eq!(rf.trees[0], tree);
    }

    #[test]
    fn vote_matches_tally() {
        let (x, y, classes) = toy();
        let cfg = RfConfig {
            n_trees: 7,
            ..RfConfig::default()
        };
        let rf = fit_rf(&x, &y, classes, &cfg).unwrap();
        for i in 0..x.rows() {
            let mut tally = [0usize; 2];
            for t in &rf.trees {
                tally[t.predict(x.row(i)).unwrap() as usize] += 1;
            }
            let (class, frac) = predict_rf(&rf, x.row(i)).unwrap();
            let expected = if tally[1] > tally[0] { StatusCode::TS } else { StatusCode::HU };
            assert_eq!(class, expected);
            assert!((frac.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert_eq!(frac[0], tally[0] as f64 / 7.0);
        }
    }

    #[test]
    fn tie_goes_to_lexicographic_first() {
        let (x, y, classes) = toy();
        let mut rf = fit_rf(&x, &y, classes, &RfConfig { n_trees: 2, ..RfConfig::default() }).unwrap();
        let leaf = |v| DecisionTree::fit(
            &Matrix::from_rows(&[[0.0, 0.0]]).unwrap(),
            Targets::Classes { labels: &[v], n_classes: 2 },
            &TreeParams::default(),
            &FeatureSampling::All,
            None,
        )
        .unwrap();
        rf.trees = vec![leaf(1), leaf(0)];
        let (class, frac) = predict_rf(&rf, &[0.0, 0.0]).unwrap();
        assert_eq!(class, StatusCode::HU);
        assert_eq!(frac, vec![0.5, 0.5]);
    }

    #[test]
    fn single_class_rejected() {
        let (x, _, classes) = toy();
        assert!(fit_rf(&x, &[0; 8], classes, &RfConfig::default()).is_err());
    }

    #[test]
    fn informative_feature_dominates() {
        let rows: Vec<[f64; 3]> = (0..60)
            .map(|i| {
                let noise = ((i * 37) % 17) as f64 / 17.0;
                let noise2 = ((i * 11) % 13) as f64 / 13.0;
                [noise, if i < 30 { 0.0 } else { 1.0 }, noise2]
            })
            .collect();
        let y: Vec<usize> = (0..60).map(|i| usize::from(i >= 30)).collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let rf = fit_rf(&x, &y, LabelSet::new(vec![StatusCode::HU, StatusCode::TS]), &RfConfig { n_trees: 25, ..RfConfig::default() }).unwrap();
        let imp = feature_importance(&rf).unwrap();
        assert!(imp[1] > imp[0] && imp[1] > imp[2], "{imp:?}");
        assert!((imp.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bootstrap_unique_fraction() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 20_000;
        let rows = bootstrap_rows(n, &mut rng);
        assert_eq!(rows.len(), n);
        let mut seen = vec![false; n];
        rows.iter().for_each(|&r| seen[r] = true);
        let frac = seen.iter().filter(|&&s| s).count() as f64 / n as f64;
        assert!((0.55..=0.70).contains(&frac), "{frac}");
    }
}
