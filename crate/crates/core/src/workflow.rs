//! End-to-end runs: train every model from parsed tracks, evaluate on the
//! held-out split, and run the single-storm case study.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::artifact;
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::forest::{feature_importance, fit_rf};
use crate::gbr::fit_gbr;
use crate::hurdat2::{StormId, StormTrack};
use crate::labels::LabelSet;
use crate::matrix::Matrix;
use crate::metrics::{
    classification_report, error_to_physical, mae, r_squared, ClassificationReport, ConfusionMatrix,
    PhysicalError, RegressionScore, RegressionTarget,
};
use crate::mlp::fit_mlp;
use crate::pipeline::{
    evaluate_case, forecast_storm, to_geojson, to_svg, write_steps_csv, CaseStudyReport, ClassifierKind,
    DistanceMethod, ForecastMode, Models,
};
use crate::preprocess::{clean, fit_scalers, CleanOptions, CleanStorm};
use crate::smote::oversample;
use crate::svm::fit_ovr;
use crate::windowing::{
    build_classification_windows, classification_feature_names, clean_window_refs, holdout_storm,
    regression_sample, split, split_indices, ClassificationSample, TARGET_NAMES,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSummary {
    pub storms: usize,
    pub points: usize,
    pub clean_storms: usize,
    pub clean_points: usize,
    pub holdout: Option<StormId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSummary {
    pub regression_train: usize,
    pub regression_test: usize,
    pub classification_train: usize,
    pub classification_test: usize,
    /// Test samples whose status never occurs in training.
    pub classification_test_dropped: usize,
    pub class_counts_before_smote: BTreeMap<String, usize>,
    pub class_counts_after_smote: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierResult {
    pub classifier: ClassifierKind,
    pub report: ClassificationReport,
    pub confusion: ConfusionMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub data: DataSummary,
    pub split: SplitSummary,
    pub regression: Vec<RegressionScore>,
    pub physical: Vec<PhysicalError>,
    pub rf_feature_importance: Vec<(String, f64)>,
    pub classifiers: Vec<ClassifierResult>,
    pub case_study: Option<CaseStudyReport>,
}

impl TrainReport {
    pub fn regression_score(&self, target: &str) -> Option<&RegressionScore> {
        self.regression.iter().find(|r| r.target == target)
    }

    pub fn classifier(&self, kind: ClassifierKind) -> Option<&ClassifierResult> {
        self.classifiers.iter().find(|c| c.classifier == kind)
    }

    /// Plain-text summary of every table in the report.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!(
            "data: {} storms, {} points parsed; {} storms, {} points after cleaning\n\n",
            self.data.storms, self.data.points, self.data.clean_storms, self.data.clean_points
        ));
        s.push_str("regression (held-out windows)\n");
        s.push_str(&format!("{:>14} {:>10} {:>10} {:>12}\n", "target", "mae", "r2", "physical"));
        for (r, p) in self.regression.iter().zip(&self.physical) {
            s.push_str(&format!(
                "{:>14} {:>10.5} {:>10.4} {:>9.3} {}\n",
                r.target, r.mae, r.r_squared, p.value, p.unit
            ));
        }
        for c in &self.classifiers {
            s.push_str(&format!("\n{} (held-out windows)\n", c.classifier.name()));
            s.push_str(&c.report.to_text());
        }
        if let Some(cs) = &self.case_study {
            s.push_str(&case_text(cs));
        }
        s
    }
}

pub fn case_text(cs: &CaseStudyReport) -> String {
    let mut s = format!(
        "\ncase study {} {} ({} steps), mean track error {:.1} km\n",
        cs.storm_id,
        cs.name,
        cs.steps.len(),
        cs.mean_track_error_km
    );
    for (r, p) in cs.regression.iter().zip(&cs.physical) {
        s.push_str(&format!(
            "{:>14} mae {:>9.5} r2 {:>8.4}  {:>8.3} {}\n",
            r.target, r.mae, r.r_squared, p.value, p.unit
        ));
    }
    for c in &cs.classifiers {
        s.push_str(&format!(
            "{:>5} weighted recall {:.3} (observed features {:.3})\n",
            c.classifier.name(),
            c.two_stage.weighted_avg.recall,
            c.ground_truth.weighted_avg.recall
        ));
    }
    s
}

pub struct Trained {
    pub models: Models,
    pub report: TrainReport,
    /// Wall-clock fit time per model in seconds. Kept out of the report so
    /// reports stay reproducible.
    pub fit_seconds: BTreeMap<&'static str, f64>,
}

fn matrix_of(samples: &[ClassificationSample]) -> Result<Matrix> {
    Matrix::from_rows(&samples.iter().map(|s| s.features.as_slice()).collect::<Vec<_>>())
}

fn histogram(labels: &[usize], classes: &LabelSet) -> BTreeMap<String, usize> {
    let mut h = BTreeMap::new();
    for &l in labels {
        *h.entry(classes.get(l).to_string()).or_insert(0) += 1;
    }
    h
}

/// Trains the regressor and all three classifiers and scores them.
pub fn train(config: &RunConfig, tracks: &[StormTrack]) -> Result<Trained> {
    let config = config.resolved();
    config.validate()?;
    let w = config.windows;

    let mut storms = clean(tracks, config.clean);
    let data_points: usize = tracks.iter().map(|t| t.points.len()).sum();
    let holdout = match config.holdout {
        Some(id) => {
            let (rest, held) = holdout_storm(id, storms)?;
            storms = rest;
            Some(held)
        }
        None => None,
    };
    let data = DataSummary {
        storms: tracks.len(),
        points: data_points,
        clean_storms: storms.len() + usize::from(holdout.is_some()),
        clean_points: storms.iter().chain(&holdout).map(|s| s.records.len()).sum(),
        holdout: config.holdout,
    };

    // Regression windows are split first; scalers see only the points those
    // training windows cover.
    let lead = w.regression.max(w.classification);
    let refs = clean_window_refs(&storms, lead);
    let ids: Vec<StormId> = refs.iter().map(|r| storms[r.storm].id).collect();
    let (train_idx, test_idx) = split_indices(&ids, &config.split)?;
    let mut covered: BTreeSet<(usize, usize)> = BTreeSet::new();
    for &i in &train_idx {
        let r = refs[i];
        covered.extend((r.target - w.regression..=r.target).map(|k| (r.storm, k)));
    }
    let scalers = fit_scalers(covered.iter().map(|&(s, k)| &storms[s].records[k]))?;
    let scaled: Vec<_> = storms.iter().map(|s| scalers.apply_storm(s)).collect();
    let reg_train: Vec<_> = train_idx
        .iter()
        .map(|&i| regression_sample(&scaled[refs[i].storm], refs[i].target, w.regression))
        .collect();
    let reg_test: Vec<_> = test_idx
        .iter()
        .map(|&i| regression_sample(&scaled[refs[i].storm], refs[i].target, w.regression))
        .collect();
    let mut fit_seconds = BTreeMap::new();
    let mut clock = Instant::now();
    let mut lap = |name: &'static str| {
        fit_seconds.insert(name, clock.elapsed().as_secs_f64());
        clock = Instant::now();
    };
    log::info!("fitting gbr on {} windows", reg_train.len());
    let gbr = fit_gbr(&reg_train, &config.gbr)?;
    lap("gbr");
    let mut regression = Vec::new();
    let mut physical = Vec::new();
    for (k, target) in RegressionTarget::ALL.iter().enumerate() {
        let truth: Vec<f64> = reg_test.iter().map(|s| s.targets[k]).collect();
        let pred: Vec<f64> = reg_test
            .iter()
            .map(|s| gbr.predict(&s.features).map(|p| p[k]))
            .collect::<Result<_>>()?;
        let m = mae(&truth, &pred)?;
        regression.push(RegressionScore {
            target: TARGET_NAMES[k].to_string(),
            mae: m,
            r_squared: r_squared(&truth, &pred)?,
        });
        let scaler = match target {
            RegressionTarget::Wind => Some(&scalers.wind),
            RegressionTarget::Pressure => Some(&scalers.pressure),
            _ => None,
        };
        physical.push(error_to_physical(*target, m, scaler)?);
    }

    let cls_samples = build_classification_windows(&scaled, w.classification);
    let (cls_train, cls_test) = split(cls_samples, &config.split)?;
    let classes = LabelSet::from_labels(cls_train.iter().map(|s| &s.label));
    let y_train = classes.encode(&cls_train.iter().map(|s| s.label.clone()).collect::<Vec<_>>())?;
    let (cls_test, dropped): (Vec<_>, Vec<_>) = cls_test.into_iter().partition(|s| classes.index_of(&s.label).is_some());
    if !dropped.is_empty() {
        log::warn!("{} test windows carry a status absent from training and are skipped", dropped.len());
    }
    let y_test = classes.encode(&cls_test.iter().map(|s| s.label.clone()).collect::<Vec<_>>())?;
    let x_train = matrix_of(&cls_train)?;
    let (x_bal, y_bal) = oversample(&x_train, &y_train, &config.smote)?;
    log::info!("smote: {} -> {} classification windows", x_train.rows(), x_bal.rows());
    lap("smote");

    log::info!("fitting rf");
    let rf = fit_rf(&x_bal, &y_bal, classes.clone(), &config.rf)?;
    lap("rf");
    log::info!("fitting svm");
    let svm = fit_ovr(&x_bal, &y_bal, classes.clone(), &config.svm)?;
    lap("svm");
    log::info!("fitting mlp");
    let mlp = fit_mlp(&x_bal, &y_bal, classes.clone(), &config.mlp)?;
    lap("mlp");
    let models = Models {
        scalers,
        windows: w,
        gbr,
        rf,
        svm,
        mlp,
    };
    models.validate()?;

    let mut classifiers = Vec::new();
    if !cls_test.is_empty() {
        for kind in ClassifierKind::ALL {
            let pred: Vec<usize> = cls_test
                .iter()
                .map(|s| models.classify_index(kind, &s.features))
                .collect::<Result<_>>()?;
            let (report, confusion) = classification_report(&y_test, &pred, &classes)?;
            classifiers.push(ClassifierResult {
                classifier: kind,
                report,
                confusion,
            });
        }
    }
    let importance = feature_importance(&models.rf)?;
    let rf_feature_importance = classification_feature_names(w.classification)
        .into_iter()
        .zip(importance)
        .collect();

    let case_study = match &holdout {
        Some(h) => Some(case_study(&models, h, ForecastMode::OneStep, DistanceMethod::Equirectangular)?),
        None => None,
    };

    let split = SplitSummary {
        regression_train: reg_train.len(),
        regression_test: reg_test.len(),
        classification_train: cls_train.len(),
        classification_test: cls_test.len(),
        classification_test_dropped: dropped.len(),
        class_counts_before_smote: histogram(&y_train, &classes),
        class_counts_after_smote: histogram(&y_bal, &classes),
    };
    Ok(Trained {
        models,
        report: TrainReport {
            data,
            split,
            regression,
            physical,
            rf_feature_importance,
            classifiers,
            case_study,
        },
        fit_seconds,
    })
}

/// Forecasts and scores one cleaned storm.
pub fn case_study(
    models: &Models,
    storm: &CleanStorm,
    mode: ForecastMode,
    distance: DistanceMethod,
) -> Result<CaseStudyReport> {
    let scaled = models.scalers.apply_storm(storm);
    let steps = forecast_storm(models, &scaled, mode)?;
    evaluate_case(models, &scaled, &steps, mode, distance)
}

/// Finds and cleans one storm by id. Short storms are kept so the forecast
/// step can report them explicitly.
pub fn find_storm(tracks: &[StormTrack], id: StormId, options: CleanOptions) -> Result<CleanStorm> {
    let track = tracks
        .iter()
        .find(|t| t.id() == id)
        .ok_or_else(|| Error::UnknownStorm(id.to_string()))?;
    let opts = CleanOptions {
        min_points: 1,
        ..options
    };
    clean(std::slice::from_ref(track), opts)
        .pop()
        .ok_or_else(|| Error::InsufficientData(format!("storm {id} has no usable observations")))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    std::fs::write(path, bytes)?;
    Ok(())
}

pub fn write_case_outputs(dir: &Path, report: &CaseStudyReport) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_json(&dir.join("case_study.json"), report)?;
    write_json(&dir.join("track.geojson"), &to_geojson(report))?;
    std::fs::write(dir.join("track.svg"), to_svg(report))?;
    write_steps_csv(report, std::fs::File::create(dir.join("steps.csv"))?)?;
    for c in &report.classifiers {
        c.two_stage_confusion
            .write_csv(std::fs::File::create(dir.join(format!("confusion_{}.csv", c.classifier.name())))?)?;
    }
    Ok(())
}

/// Writes models under `out/models` and the report, config and diagnostics
/// beside them.
pub fn write_train_outputs(out: &Path, trained: &Trained, config: &RunConfig) -> Result<()> {
    std::fs::create_dir_all(out)?;
    let resolved = config.resolved();
    artifact::save_models(&out.join("models"), &trained.models, serde_json::to_value(&resolved)?)?;
    write_json(&out.join("config.json"), &resolved)?;
    write_json(&out.join("report.json"), &trained.report)?;
    std::fs::write(out.join("report.txt"), trained.report.to_text())?;
    trained
        .models
        .mlp
        .write_loss_csv(std::fs::File::create(out.join("mlp_loss.csv"))?)?;
    for c in &trained.report.classifiers {
        c.confusion
            .write_csv(std::fs::File::create(out.join(format!("confusion_{}.csv", c.classifier.name())))?)?;
    }
    if let Some(cs) = &trained.report.case_study {
        write_case_outputs(&out.join("case_study"), cs)?;
    }
    Ok(())
}
