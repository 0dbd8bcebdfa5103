//! Sliding-window sample construction and train/test splitting.
//!
//! Regression samples concatenate `w` consecutive observations and predict
//! the step after them. Classification samples carry a `w`-step history plus
//! the labeled step's own intensity and position, which is the slot the
//! regressor's output fills in at inference time.

use chrono::NaiveDateTime;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write;

use crate::error::{Error, Result};
use crate::hurdat2::{StatusCode, StormId, RADII_COUNT, RADII_NAMES};
use crate::preprocess::{CleanPoint, CleanStorm, ScaledStorm};

/// Fields contributed by each regression window step.
pub const REGRESSION_STEP_FIELDS: usize = 4 + RADII_COUNT;
/// Fields contributed by each classification step.
pub const CLASSIFICATION_STEP_FIELDS: usize = 4;
/// Regression targets in output order.
pub const TARGET_NAMES: [&str; 4] = ["wind_std", "pressure_std", "length", "direction"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WindowConfig {
    pub regression: usize,
    pub classification: usize,
}

impl Default for WindowConfig {
    fn default() -> Self {
        WindowConfig {
            regression: 5,
            classification: 4,
        }
    }
}

impl WindowConfig {
    pub fn regression_features(&self) -> usize {
        self.regression * REGRESSION_STEP_FIELDS + 1
    }

    pub fn classification_features(&self) -> usize {
        (self.classification + 1) * CLASSIFICATION_STEP_FIELDS + 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.regression == 0 || self.classification == 0 {
            return Err(Error::InvalidConfig("window sizes must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionSample {
    pub storm_id: StormId,
    /// Timestamp of the predicted step.
    pub timestamp: NaiveDateTime,
    pub features: Vec<f64>,
    /// `wind_std, pressure_std, length, direction` of the predicted step.
    pub targets: [f64; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationSample {
    pub storm_id: StormId,
    /// Timestamp of the labeled step.
    pub timestamp: NaiveDateTime,
    pub features: Vec<f64>,
    pub label: StatusCode,
}

/// Location of a window inside a list of storms: `target` is the index of
/// the predicted step, preceded by `window` consecutive six-hourly steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowRef {
    pub storm: usize,
    pub target: usize,
}

/// Every target index whose preceding `window` steps form an unbroken
/// six-hourly chain ending right before it.
pub fn window_targets(follows_previous: &[bool], window: usize) -> Vec<usize> {
    (window..follows_previous.len())
        .filter(|&t| follows_previous[t + 1 - window..=t].iter().all(|&f| f))
        .collect()
}

pub fn clean_window_refs(storms: &[CleanStorm], window: usize) -> Vec<WindowRef> {
    storms
        .iter()
        .enumerate()
        .flat_map(|(s, storm)| {
            let follows: Vec<bool> = storm.records.iter().map(|r| r.follows_previous).collect();
            window_targets(&follows, window)
                .into_iter()
                .map(move |target| WindowRef { storm: s, target })
        })
        .collect()
}

fn scaled_window_refs(storms: &[ScaledStorm], window: usize) -> Vec<WindowRef> {
    storms
        .iter()
        .enumerate()
        .flat_map(|(s, storm)| {
            let follows: Vec<bool> = storm.points.iter().map(|p| p.follows_previous).collect();
            window_targets(&follows, window)
                .into_iter()
                .map(move |target| WindowRef { storm: s, target })
        })
        .collect()
}

/// Regression feature vector for a window of consecutive points, oldest
/// first, followed by the month of the predicted step.
pub fn regression_features(window: &[CleanPoint], month_norm: f64) -> Vec<f64> {
    let mut f = Vec::with_capacity(window.len() * REGRESSION_STEP_FIELDS + 1);
    for p in window {
        f.extend([p.x, p.y, p.wind_std, p.pressure_std]);
        f.extend(p.radii_std);
    }
    f.push(month_norm);
    f
}

/// Intensity and position of the step being classified.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurrentStep {
    pub wind_std: f64,
    pub pressure_std: f64,
    pub x: f64,
    pub y: f64,
    pub month_norm: f64,
}

impl From<&CleanPoint> for CurrentStep {
    fn from(p: &CleanPoint) -> Self {
        CurrentStep {
            wind_std: p.wind_std,
            pressure_std: p.pressure_std,
            x: p.x,
            y: p.y,
            month_norm: p.month_norm,
        }
    }
}

pub fn classification_features(history: &[CleanPoint], current: CurrentStep) -> Vec<f64> {
    let mut f = Vec::with_capacity((history.len() + 1) * CLASSIFICATION_STEP_FIELDS + 1);
    for p in history {
        f.extend([p.wind_std, p.pressure_std, p.x, p.y]);
    }
    f.extend([current.wind_std, current.pressure_std, current.x, current.y]);
    f.push(current.month_norm);
    f
}

pub fn regression_sample(storm: &ScaledStorm, target: usize, window: usize) -> RegressionSample {
    let t = &storm.points[target];
    RegressionSample {
        storm_id: storm.id,
        timestamp: t.timestamp,
        features: regression_features(&storm.points[target - window..target], t.month_norm),
        targets: [
            t.wind_std,
            t.pressure_std,
            t.displacement.length,
            t.displacement.direction,
        ],
    }
}

pub fn classification_sample(
    storm: &ScaledStorm,
    target: usize,
    window: usize,
) -> ClassificationSample {
    let t = &storm.points[target];
    ClassificationSample {
        storm_id: storm.id,
        timestamp: t.timestamp,
        features: classification_features(&storm.points[target - window..target], t.into()),
        label: t.status.clone(),
    }
}

/// A storm of `n` unbroken points yields `max(0, n - window)` samples.
pub fn build_regression_windows(storms: &[ScaledStorm], window: usize) -> Vec<RegressionSample> {
    scaled_window_refs(storms, window)
        .into_iter()
        .map(|r| regression_sample(&storms[r.storm], r.target, window))
        .collect()
}

pub fn build_classification_windows(
    storms: &[ScaledStorm],
    window: usize,
) -> Vec<ClassificationSample> {
    scaled_window_refs(storms, window)
        .into_iter()
        .map(|r| classification_sample(&storms[r.storm], r.target, window))
        .collect()
}

fn lag_name(field: &str, lag: usize) -> String {
    format!("{field}_lag{lag}")
}

/// Column names of the regression feature layout.
pub fn regression_feature_names(window: usize) -> Vec<String> {
    let mut names = Vec::new();
    for lag in (1..=window).rev() {
        for field in ["x", "y", "wind_std", "pressure_std"] {
            names.push(lag_name(field, lag));
        }
        for r in RADII_NAMES {
            names.push(lag_name(&format!("{r}_std"), lag));
        }
    }
    names.push("month_norm".into());
    names
}

/// Column names of the classification feature layout.
pub fn classification_feature_names(window: usize) -> Vec<String> {
    let fields = ["wind_std", "pressure_std", "x", "y"];
    let mut names = Vec::new();
    for lag in (1..=window).rev() {
        names.extend(fields.iter().map(|f| lag_name(f, lag)));
    }
    names.extend(fields.iter().map(|f| f.to_string()));
    names.push("month_norm".into());
    names
}

pub fn export_regression_csv<W: Write>(
    samples: &[RegressionSample],
    window: usize,
    out: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["storm_id".to_string(), "timestamp".to_string()];
    header.extend(regression_feature_names(window));
    header.extend(TARGET_NAMES.iter().map(|t| format!("target_{t}")));
    w.write_record(&header)?;
    for s in samples {
        let mut row = vec![
            s.storm_id.to_string(),
            s.timestamp.format("%Y-%m-%dT%H:%M:%SZ").to_string(),
        ];
        row.extend(s.features.iter().chain(&s.targets).map(f64::to_string));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn export_classification_csv<W: Write>(
    samples: &[ClassificationSample],
    window: usize,
    out: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["storm_id".to_string(), "timestamp".to_string()];
    header.extend(classification_feature_names(window));
    header.push("label".into());
    w.write_record(&header)?;
    for s in samples {
        let mut row = vec![
            s.storm_id.to_string(),
            s.timestamp.format("%Y-%m-%dT%H:%M:%SZ").to_string(),
        ];
        row.extend(s.features.iter().map(f64::to_string));
        row.push(s.label.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    /// Shuffle individual samples.
    #[default]
    Sample,
    /// Keep every storm's samples on one side of the split.
    Storm,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitConfig {
    pub test_fraction: f64,
    pub seed: u64,
    pub mode: SplitMode,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            test_fraction: 0.2,
            seed: 42,
            mode: SplitMode::Sample,
        }
    }
}

pub trait HasStorm {
    fn storm_id(&self) -> StormId;
}

impl HasStorm for RegressionSample {
    fn storm_id(&self) -> StormId {
        self.storm_id
    }
}

impl HasStorm for ClassificationSample {
    fn storm_id(&self) -> StormId {
        self.storm_id
    }
}

impl HasStorm for CleanStorm {
    fn storm_id(&self) -> StormId {
        self.id
    }
}

impl HasStorm for ScaledStorm {
    fn storm_id(&self) -> StormId {
        self.id
    }
}

impl HasStorm for StormId {
    fn storm_id(&self) -> StormId {
        *self
    }
}

/// Train and test indices, each ascending.
pub fn split_indices(storm_ids: &[StormId], config: &SplitConfig) -> Result<(Vec<usize>, Vec<usize>)> {
    let n = storm_ids.len();
    if !(config.test_fraction > 0.0 && config.test_fraction < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "test_fraction {} must lie in (0, 1)",
            config.test_fraction
        )));
    }
    if n < 5 {
        return Err(Error::InsufficientData(format!(
            "need at least 5 samples to split, got {n}"
        )));
    }
    let n_test = ((n as f64 * config.test_fraction).round() as usize).clamp(1, n - 1);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut is_test = vec![false; n];
    match config.mode {
        SplitMode::Sample => {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng);
            for &i in &order[..n_test] {
                is_test[i] = true;
            }
        }
        SplitMode::Storm => {
            let mut groups: BTreeMap<StormId, Vec<usize>> = BTreeMap::new();
            for (i, id) in storm_ids.iter().enumerate() {
                groups.entry(*id).or_default().push(i);
            }
            if groups.len() < 2 {
                return Err(Error::InsufficientData(
                    "storm-level split needs at least 2 storms".into(),
                ));
            }
            let mut storms: Vec<Vec<usize>> = groups.into_values().collect();
            storms.shuffle(&mut rng);
            let mut taken = 0;
            for members in &storms[..storms.len() - 1] {
                if taken >= n_test {
                    break;
                }
                taken += members.len();
                for &i in members {
                    is_test[i] = true;
                }
            }
        }
    }
    let (test, train): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| is_test[i]);
    Ok((train, test))
}

/// Partitions samples into `(train, test)`, deterministic given the seed.
pub fn split<T: HasStorm>(samples: Vec<T>, config: &SplitConfig) -> Result<(Vec<T>, Vec<T>)> {
    let ids: Vec<StormId> = samples.iter().map(HasStorm::storm_id).collect();
    let (_, test) = split_indices(&ids, config)?;
    let mut is_test = vec![false; samples.len()];
    for i in test {
        is_test[i] = true;
    }
    let mut train = Vec::new();
    let mut tst = Vec::new();
    for (s, t) in samples.into_iter().zip(is_test) {
        if t {
            tst.push(s);
        } else {
            train.push(s);
        }
    }
    Ok((train, tst))
}

/// Removes one storm from the list, returning `(remaining, held_out)`.
pub fn holdout_storm<T: HasStorm>(id: StormId, sequences: Vec<T>) -> Result<(Vec<T>, T)> {
    let pos = sequences
        .iter()
        .position(|s| s.storm_id() == id)
        .ok_or_else(|| Error::UnknownStorm(id.to_string()))?;
    let mut remaining = sequences;
    let held = remaining.remove(pos);
    Ok((remaining, held))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preprocess::Displacement;
    use chrono::Duration;

    fn id(n: u8) -> StormId {
        StormId {
            basin: crate::hurdat2::Basin::Atlantic,
            number: n,
            year: 2010,
        }
    }

    pub(crate) fn synthetic_storm(number: u8, n: usize) -> ScaledStorm {
        let start = chrono::NaiveDate::from_ymd_opt(2010, 8, 1)
            .unwrap()
            .and_hms_opt(0, 0, 0)
            .unwrap();
        let points = (0..n)
            .map(|i| CleanPoint {
                timestamp: start + Duration::hours(6 * i as i64),
                x: 0.3 + 0.001 * i as f64,
                y: 0.6 + 0.002 * i as f64,
                month_norm: 7.0 / 11.0,
                wind_std: i as f64 * 0.1,
                pressure_std: -(i as f64) * 0.1,
                radii_std: [number as f64; RADII_COUNT],
                displacement: Displacement {
                    length: 0.002,
                    direction: 0.4,
                },
                status: if i % 2 == 0 { StatusCode::TS } else { StatusCode::HU },
                follows_previous: i > 0,
            })
            .collect();
        ScaledStorm {
            id: id(number),
            name: format!("S{number}"),
            points,
        }
    }

    #[test]
    fn regression_window_counts() {
        assert!(build_regression_windows(&[synthetic_storm(1, 5)], 5).is_empty());
        assert_eq!(build_regression_windows(&[synthetic_storm(1, 6)], 5).len(), 1);
        assert_eq!(build_regression_windows(&[synthetic_storm(1, 31)], 5).len(), 26);
        let s = &build_regression_windows(&[synthetic_storm(1, 6)], 5)[0];
        assert_eq!(s.features.len(), 81);
        assert_eq!(s.features.len(), regression_feature_names(5).len());
    }

    #[test]
    fn classification_window_counts() {
        assert!(build_classification_windows(&[synthetic_storm(1, 4)], 4).is_empty());
        let one = build_classification_windows(&[synthetic_storm(1, 5)], 4);
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].label, synthetic_storm(1, 5).points[4].status);
        assert_eq!(build_classification_windows(&[synthetic_storm(1, 31)], 4).len(), 27);
        assert_eq!(one[0].features.len(), classification_feature_names(4).len());
        assert_eq!(one[0].features.len(), WindowConfig::default().classification_features());
    }

    #[test]
    fn windows_skip_gaps() {
        let mut s = synthetic_storm(1, 12);
        s.points[6].follows_previous = false;
        // targets 5 only on the first chain (0..=5), 11 on the second (6..=11)
        let samples = build_regression_windows(&[s], 5);
        assert_eq!(samples.len(), 2);
    }

    #[test]
    fn windows_never_mix_storms() {
        let storms = vec![synthetic_storm(1, 9), synthetic_storm(2, 7)];
        for s in build_regression_windows(&storms, 5) {
            let marker = s.features[4];
            for step in 0..5 {
                assert_eq!(s.features[step * REGRESSION_STEP_FIELDS + 4], marker);
            }
            assert_eq!(marker, s.storm_id.number as f64);
        }
    }

    #[test]
    fn split_counts_and_determinism() {
        let ids: Vec<StormId> = (0..100).map(|i| id(1 + (i % 20) as u8)).collect();
        let cfg = SplitConfig::default();
        let (train, test) = split_indices(&ids, &cfg).unwrap();
        assert_eq!((train.len(), test.len()), (80, 20));
        assert_eq!(split_indices(&ids, &cfg).unwrap(), (train.clone(), test.clone()));
        let mut all: Vec<usize> = train.iter().chain(&test).copied().collect();
        all.sort();
        assert_eq!(all, (0..100).collect::<Vec<_>>());

        let ten: Vec<StormId> = (0..10).map(|_| id(1)).collect();
        let (a, b) = split_indices(&ten, &cfg).unwrap();
        assert_eq!((a.len(), b.len()), (8, 2));
        assert!(split_indices(&ten[..4], &cfg).is_err());
    }

    #[test]
    fn storm_split_keeps_storms_together() {
        let ids: Vec<StormId> = (0..100).map(|i| id(1 + (i / 5) as u8)).collect();
        let cfg = SplitConfig {
            mode: SplitMode::Storm,
            ..SplitConfig::default()
        };
        let (train, test) = split_indices(&ids, &cfg).unwrap();
        assert_eq!(test.len(), 20);
        for t in &test {
            assert!(train.iter().all(|r| ids[*r] != ids[*t]));
        }
    }

    #[test]
    fn holdout() {
        let storms = vec![synthetic_storm(1, 8), synthetic_storm(12, 31), synthetic_storm(3, 1)];
        let before = build_regression_windows(&storms, 5).len();
        let (rest, held) = holdout_storm(id(12), storms.clone()).unwrap();
        assert_eq!(held.id, id(12));
        let after = build_regression_windows(&rest, 5).len();
        assert_eq!(before - after, build_regression_windows(&[held], 5).len());
        let (rest, _) = holdout_storm(id(3), storms.clone()).unwrap();
        assert_eq!(build_regression_windows(&rest, 5).len(), before);
        assert!(matches!(
            holdout_storm(id(99), storms),
            Err(Error::UnknownStorm(_))
        ));
    }
}
