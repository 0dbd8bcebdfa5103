//! Gradient boosted regression trees with squared-error loss.
//!
//! Each of the four forecast targets gets its own ensemble. Stage `t` fits a
//! depth-limited tree to the residuals `y - F_{t-1}(x)` (the negative
//! gradient of ½(y - F)²) and adds it with shrinkage `η`.

use std::f64::consts::TAU;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{check_dim, Matrix};
use crate::tree::{DecisionTree, FeatureSampling, SortedColumns, Targets, TreeParams};
use crate::windowing::{RegressionSample, TARGET_NAMES};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GbrConfig {
    pub n_stages: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
}

impl Default for GbrConfig {
    fn default() -> Self {
        GbrConfig {
            n_stages: 300,
            learning_rate: 0.1,
            max_depth: 3,
            min_samples_leaf: 1,
        }
    }
}

impl GbrConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "gbr learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.n_stages == 0 {
            return Err(Error::InvalidConfig("gbr n_stages must be at least 1".into()));
        }
        if self.max_depth == 0 || self.min_samples_leaf == 0 {
            return Err(Error::InvalidConfig(
                "gbr max_depth and min_samples_leaf must be at least 1".into(),
            ));
        }
        Ok(())
    }

    fn tree_params(&self) -> TreeParams {
        TreeParams {
            max_depth: Some(self.max_depth),
            min_samples_leaf: self.min_samples_leaf,
        }
    }
}

/// Single-target boosted ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbrModel {
    pub initial: f64,
    pub learning_rate: f64,
    pub trees: Vec<DecisionTree>,
    /// Mean squared training error after 0, 1, …, n stages.
    pub train_loss: Vec<f64>,
    pub n_features: usize,
}

fn mse(y: &[f64], f: &[f64]) -> f64 {
    y.iter().zip(f).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / y.len() as f64
}

impl GbrModel {
    /// Boosts `n_stages` trees. `n_stages = 0` is allowed here and yields the
    /// constant mean predictor.
    pub fn fit(x: &Matrix, y: &[f64], n_stages: usize, learning_rate: f64, params: &TreeParams) -> Result<GbrModel> {
        if x.is_empty() {
            return Err(Error::InsufficientData("gbr needs training rows".into()));
        }
        check_dim(x.rows(), y.len())?;
        if !(learning_rate > 0.0) {
            return Err(Error::InvalidConfig("learning rate must be positive".into()));
        }
        let initial = y.iter().sum::<f64>() / y.len() as f64;
        let mut current = vec![initial; y.len()];
        let mut train_loss = vec![mse(y, &current)];
        let mut trees = Vec::with_capacity(n_stages);
        let rows: Vec<usize> = (0..x.rows()).collect();
        let sorted = SortedColumns::new(x, &rows);
        let mut residual = vec![0.0; y.len()];
        for _ in 0..n_stages {
            for ((r, yi), fi) in residual.iter_mut().zip(y).zip(&current) {
                *r = yi - fi;
            }
            let tree = DecisionTree::fit_presorted(
                x,
                Targets::Values(&residual),
                &sorted,
                params,
                &FeatureSampling::All,
                None,
            )?;
            for (i, fi) in current.iter_mut().enumerate() {
                *fi += learning_rate * tree.predict_unchecked(x.row(i));
            }
            train_loss.push(mse(y, &current));
            trees.push(tree);
        }
        Ok(GbrModel {
            initial,
            learning_rate,
            trees,
            train_loss,
            n_features: x.cols(),
        })
    }

    pub fn predict(&self, row: &[f64]) -> Result<f64> {
        check_dim(self.n_features, row.len())?;
        Ok(self.predict_unchecked(row))
    }

    fn predict_unchecked(&self, row: &[f64]) -> f64 {
        let mut f = self.initial;
        for t in &self.trees {
            f += self.learning_rate * t.predict_unchecked(row);
        }
        f
    }
}

/// Four independent ensembles predicting `wind_std, pressure_std, length,
/// direction` of the next step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbrRegressor {
    pub config: GbrConfig,
    pub targets: Vec<GbrModel>,
}

pub fn fit_gbr(train: &[RegressionSample], config: &GbrConfig) -> Result<GbrRegressor> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::InsufficientData("gbr needs training samples".into()));
    }
    let x = Matrix::from_rows(&train.iter().map(|s| s.features.as_slice()).collect::<Vec<_>>())?;
    let params = config.tree_params();
    let targets = (0..TARGET_NAMES.len())
        .into_par_iter()
        .map(|k| {
            let y: Vec<f64> = train.iter().map(|s| s.targets[k]).collect();
            GbrModel::fit(&x, &y, config.n_stages, config.learning_rate, &params)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GbrRegressor {
        config: *config,
        targets,
    })
}

impl GbrRegressor {
    pub fn n_features(&self) -> usize {
        self.targets[0].n_features
    }

    /// Next-step `[wind_std, pressure_std, length, direction]`; length is
    /// floored at zero and direction wrapped into [0, 2π).
    pub fn predict(&self, features: &[f64]) -> Result<[f64; 4]> {
        check_dim(self.n_features(), features.len())?;
        let mut out = [0.0; 4];
        for (o, m) in out.iter_mut().zip(&self.targets) {
            *o = m.predict_unchecked(features);
        }
        out[2] = out[2].max(0.0);
        out[3] = out[3].rem_euclid(TAU);
        if out[3] >= TAU {
            out[3] = 0.0;
        }
        Ok(out)
    }
}

pub fn predict_gbr(model: &GbrRegressor, features: &[f64]) -> Result<[f64; 4]> {
    model.predict(features)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic(n: usize) -> (Matrix, Vec<f64>) {
        let rows: Vec<[f64; 2]> = (0..n)
            .map(|i| [(i as f64 * 0.37).sin(), (i as f64 * 0.11).cos()])
            .collect();
        let y = rows.iter().map(|r| 3.0 * r[0] - r[1] * r[1]).collect();
        (Matrix::from_rows(&rows).unwrap(), y)
    }

    #[test]
    fn zero_stages_predicts_mean() {
        let (x, y) = synthetic(20);
        let m = GbrModel::fit(&x, &y, 0, 0.1, &TreeParams::default()).unwrap();
        let mean = y.iter().sum::<f64>() / 20.0;
        for i in 0..20 {
            assert_eq!(m.predict(x.row(i)).unwrap(), mean);
        }
    }

    #[test]
    fn unit_rate_deep_trees_interpolate() {
        let (x, y) = synthetic(20);
        let p = TreeParams {
            max_depth: Some(10),
            min_samples_leaf: 1,
        };
        let m = GbrModel::fit(&x, &y, 3, 1.0, &p).unwrap();
        let mae: f64 = (0..20).map(|i| (m.predict(x.row(i)).unwrap() - y[i]).abs()).sum::<f64>() / 20.0;
        assert!(mae <= 1e-6, "mae {mae}");
    }

    #[test]
    fn loss_never_increases() {
        let (x, y) = synthetic(60);
        let m = GbrModel::fit(&x, &y, 50, 0.1, &TreeParams { max_depth: Some(3), min_samples_leaf: 1 }).unwrap();
        for w in m.train_loss.windows(2) {
            assert!(w[1] <= w[0], "{} > {}", w[1], w[0]);
        }
    }

    #[test]
    fn single_stage_is_mean_plus_scaled_tree() {
        let (x, y) = synthetic(30);
        let p = TreeParams { max_depth: Some(2), min_samples_leaf: 1 };
        let m = GbrModel::fit(&x, &y, 1, 0.3, &p).unwrap();
        let mean = y.iter().sum::<f64>() / 30.0;
        let resid: Vec<f64> = y.iter().map(|v| v - mean).collect();
        let tree = DecisionTree::fit(&x, Targets::Values(&resid), &p, &FeatureSampling::All, None).unwrap();
        for i in 0..30 {
            let manual = mean + 0.3 * tree.predict(x.row(i)).unwrap();
            assert_eq!(m.predict(x.row(i)).unwrap(), manual);
        }
    }

    #[test]
    fn invalid_config() {
        let c = GbrConfig { learning_rate: 0.0, ..GbrConfig::default() };
        assert!(c.validate().is_err());
        let c = GbrConfig { n_stages: 0, ..GbrConfig::default() };
        assert!(c.validate().is_err());
    }
}
