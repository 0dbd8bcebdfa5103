//! Two-stage forecast: regress the next step's intensity and displacement,
//! rebuild its position, then classify its status from the regressed values.

use std::fmt::Write as _;
use std::io::Write;

use chrono::{Datelike, NaiveDateTime};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::forest::RfModel;
use crate::gbr::GbrRegressor;
use crate::hurdat2::{StatusCode, StormId};
use crate::labels::LabelSet;
use crate::metrics::{
    classification_report, error_to_physical, mae, r_squared, ClassificationReport, ConfusionMatrix,
    PhysicalError, RegressionScore, RegressionTarget, KM_PER_DEGREE,
};
use crate::mlp::MlpModel;
use crate::preprocess::{CleanPoint, Displacement, Position, ScaledStorm, ScalerSet};
use crate::svm::OvrSvm;
use crate::windowing::{
    classification_features, regression_features, window_targets, CurrentStep, WindowConfig, TARGET_NAMES,
};

pub const EARTH_RADIUS_KM: f64 = 6371.0088;

/// Inverse of `displacement_from`: moves `length` along the bearing
/// `direction`, measured clockwise from north.
pub fn reconstruct_position(prev: Position, length: f64, direction: f64) -> Position {
    Position {
        x: prev.x + length * direction.sin(),
        y: prev.y + length * direction.cos(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierKind {
    Rf,
    Svm,
    Mlp,
}

impl ClassifierKind {
    pub const ALL: [ClassifierKind; 3] = [ClassifierKind::Rf, ClassifierKind::Svm, ClassifierKind::Mlp];

    pub fn name(&self) -> &'static str {
        match self {
            ClassifierKind::Rf => "rf",
            ClassifierKind::Svm => "svm",
            ClassifierKind::Mlp => "mlp",
        }
    }
}

/// Everything needed to forecast: scalers, window sizes and the four models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Models {
    pub scalers: ScalerSet,
    pub windows: WindowConfig,
    pub gbr: GbrRegressor,
    pub rf: RfModel,
    pub svm: OvrSvm,
    pub mlp: MlpModel,
}

impl Models {
    pub fn classes(&self) -> &LabelSet {
        &self.rf.classes
    }

    /// Fails unless every model agrees with the window layout and class list.
    pub fn validate(&self) -> Result<()> {
        self.windows.validate()?;
        let reg = self.windows.regression_features();
        let cls = self.windows.classification_features();
        if self.gbr.n_features() != reg {
            return Err(Error::Artifact(format!(
                "regressor expects {} features, windows give {reg}",
                self.gbr.n_features()
            )));
        }
        for (name, n) in [
            ("rf", self.rf.n_features),
            ("svm", self.svm.n_features),
            ("mlp", self.mlp.n_features()),
        ] {
            if n != cls {
                return Err(Error::Artifact(format!("{name} expects {n} features, windows give {cls}")));
            }
        }
        if self.svm.classes != self.rf.classes || self.mlp.classes != self.rf.classes {
            return Err(Error::Artifact("classifiers disagree on the class list".into()));
        }
        Ok(())
    }

    pub fn classify_index(&self, kind: ClassifierKind, features: &[f64]) -> Result<usize> {
        match kind {
            ClassifierKind::Rf => self.rf.predict_index(features),
            ClassifierKind::Svm => self.svm.predict_index(features),
            ClassifierKind::Mlp => self.mlp.predict_index(features),
        }
    }

    fn classify_all(&self, features: &[f64]) -> Result<Statuses> {
        let get = |k| self.classify_index(k, features).map(|i| self.classes().get(i).clone());
        Ok(Statuses {
            rf: get(ClassifierKind::Rf)?,
            svm: get(ClassifierKind::Svm)?,
            mlp: get(ClassifierKind::Mlp)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Statuses {
    pub rf: StatusCode,
    pub svm: StatusCode,
    pub mlp: StatusCode,
}

impl Statuses {
    pub fn get(&self, kind: ClassifierKind) -> &StatusCode {
        match kind {
            ClassifierKind::Rf => &self.rf,
            ClassifierKind::Svm => &self.svm,
            ClassifierKind::Mlp => &self.mlp,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastStep {
    /// Index of the forecast point within the storm.
    pub target_index: usize,
    pub timestamp: NaiveDateTime,
    pub wind_std: f64,
    pub pressure_std: f64,
    pub length: f64,
    pub direction: f64,
    pub x: f64,
    pub y: f64,
    pub latitude: f64,
    pub longitude: f64,
    pub wind_kt: f64,
    pub pressure_mb: f64,
    pub status: Statuses,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForecastMode {
    /// Every window uses observed history.
    #[default]
    OneStep,
    /// Each forecast feeds the next window.
    Rollout,
}

/// Classification input for the current step as the regressor sees it.
fn current_from_prediction(prev: Position, pred: [f64; 4], month_norm: f64) -> (CurrentStep, Position) {
    let pos = reconstruct_position(prev, pred[2], pred[3]);
    let current = CurrentStep {
        wind_std: pred[0],
        pressure_std: pred[1],
        x: pos.x,
        y: pos.y,
        month_norm,
    };
    (current, pos)
}

fn forecast_at(models: &Models, history: &[CleanPoint], target: &CleanPoint, index: usize) -> Result<(ForecastStep, CleanPoint)> {
    let w = &models.windows;
    let reg = regression_features(&history[history.len() - w.regression..], target.month_norm);
    let pred = models.gbr.predict(&reg)?;
    let prev = history[history.len() - 1].position();
    let (current, pos) = current_from_prediction(prev, pred, target.month_norm);
    let cls = classification_features(&history[history.len() - w.classification..], current);
    debug_assert_eq!(cls.len(), w.classification_features());
    let status = models.classify_all(&cls)?;
    let s = &models.scalers;
    let step = ForecastStep {
        target_index: index,
        timestamp: target.timestamp,
        wind_std: pred[0],
        pressure_std: pred[1],
        length: pred[2],
        direction: pred[3],
        x: pos.x,
        y: pos.y,
        latitude: s.latitude.inverse(pos.y),
        longitude: s.longitude.inverse(pos.x),
        wind_kt: s.wind.inverse(pred[0]),
        pressure_mb: s.pressure.inverse(pred[1]),
        status: status.clone(),
    };
    // Radii are not forecast; the last known values persist.
    let point = CleanPoint {
        timestamp: target.timestamp,
        x: pos.x,
        y: pos.y,
        month_norm: target.month_norm,
        wind_std: pred[0],
        pressure_std: pred[1],
        radii_std: history[history.len() - 1].radii_std,
        displacement: Displacement {
            length: pred[2],
            direction: pred[3],
        },
        status: status.rf,
        follows_previous: true,
    };
    Ok((step, point))
}

/// Forecasts every step of `storm` that has a full regression window.
pub fn forecast_storm(models: &Models, storm: &ScaledStorm, mode: ForecastMode) -> Result<Vec<ForecastStep>> {
    let w = models.windows;
    w.validate()?;
    let lead = w.regression.max(w.classification);
    let follows: Vec<bool> = storm.points.iter().map(|p| p.follows_previous).collect();
    let targets: Vec<usize> = window_targets(&follows, lead);
    if storm.points.len() <= lead || targets.is_empty() {
        return Err(Error::InsufficientData(format!(
            "storm {} has no unbroken run of {} six-hourly points",
            storm.id,
            lead + 1
        )));
    }
    match mode {
        ForecastMode::OneStep => targets
            .par_iter()
            .map(|&t| forecast_at(models, &storm.points[..t], &storm.points[t], t).map(|(s, _)| s))
            .collect(),
        ForecastMode::Rollout => {
            let start = targets[0];
            let mut history: Vec<CleanPoint> = storm.points[..start].to_vec();
            let mut steps = Vec::new();
            for t in start..storm.points.len() {
                let (step, point) = forecast_at(models, &history, &storm.points[t], t)?;
                history.push(point);
                steps.push(step);
            }
            Ok(steps)
        }
    }
}

/// Forecasts the unobserved step six hours after the last point of `prefix`.
pub fn forecast_next(models: &Models, prefix: &ScaledStorm) -> Result<ForecastStep> {
    let w = models.windows;
    w.validate()?;
    let lead = w.regression.max(w.classification);
    let n = prefix.points.len();
    if n < lead || !prefix.points[n + 1 - lead..].iter().all(|p| p.follows_previous) {
        return Err(Error::InsufficientData(format!(
            "forecasting needs the last {lead} points six hours apart, got {n} points"
        )));
    }
    let last = &prefix.points[n - 1];
    let timestamp = last.timestamp + chrono::Duration::hours(6);
    let target = CleanPoint {
        timestamp,
        month_norm: models.scalers.month.transform(f64::from(timestamp.month())),
        ..last.clone()
    };
    forecast_at(models, &prefix.points, &target, n).map(|(s, _)| s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceMethod {
    /// Flat-earth approximation at the track's mean latitude.
    #[default]
    Equirectangular,
    Haversine,
}

pub fn haversine_km(a: (f64, f64), b: (f64, f64)) -> f64 {
    let (lat1, lon1) = (a.0.to_radians(), a.1.to_radians());
    let (lat2, lon2) = (b.0.to_radians(), b.1.to_radians());
    let h = ((lat2 - lat1) / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * ((lon2 - lon1) / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

/// Distance between `(lat, lon)` pairs with longitudes scaled by
/// `cos(ref_lat)`.
pub fn equirectangular_km(a: (f64, f64), b: (f64, f64), ref_lat: f64) -> f64 {
    let mut dlon = b.1 - a.1;
    if dlon > 180.0 {
        dlon -= 360.0;
    } else if dlon < -180.0 {
        dlon += 360.0;
    }
    let dx = dlon * ref_lat.to_radians().cos();
    let dy = b.0 - a.0;
    KM_PER_DEGREE * (dx * dx + dy * dy).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseStep {
    pub target_index: usize,
    pub timestamp: NaiveDateTime,
    pub true_latitude: f64,
    pub true_longitude: f64,
    pub predicted_latitude: f64,
    pub predicted_longitude: f64,
    pub error_km: f64,
    pub true_status: StatusCode,
    pub predicted_status: Statuses,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierEvaluation {
    pub classifier: ClassifierKind,
    /// Statuses predicted from regressed features.
    pub two_stage: ClassificationReport,
    pub two_stage_confusion: ConfusionMatrix,
    /// Statuses predicted from observed features, bypassing the regressor.
    pub ground_truth: ClassificationReport,
    pub ground_truth_confusion: ConfusionMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseStudyReport {
    pub storm_id: StormId,
    pub name: String,
    pub mode: ForecastMode,
    pub distance_method: DistanceMethod,
    pub steps: Vec<CaseStep>,
    pub regression: Vec<RegressionScore>,
    pub physical: Vec<PhysicalError>,
    pub mean_track_error_km: f64,
    pub classifiers: Vec<ClassifierEvaluation>,
}

impl CaseStudyReport {
    pub fn classifier(&self, kind: ClassifierKind) -> Option<&ClassifierEvaluation> {
        self.classifiers.iter().find(|c| c.classifier == kind)
    }
}

/// Scores forecasts against the observed storm.
pub fn evaluate_case(
    models: &Models,
    storm: &ScaledStorm,
    steps: &[ForecastStep],
    mode: ForecastMode,
    distance: DistanceMethod,
) -> Result<CaseStudyReport> {
    if steps.is_empty() {
        return Err(Error::InsufficientData("no forecast steps to evaluate".into()));
    }
    let mut truth: Vec<&CleanPoint> = Vec::with_capacity(steps.len());
    for s in steps {
        match storm.points.get(s.target_index) {
            Some(p) if p.timestamp == s.timestamp => truth.push(p),
            _ => {
                return Err(Error::DimensionMismatch {
                    expected: storm.points.len(),
                    actual: s.target_index,
                })
            }
        }
    }
    let sc = &models.scalers;
    let true_ll: Vec<(f64, f64)> = truth
        .iter()
        .map(|p| (sc.latitude.inverse(p.y), sc.longitude.inverse(p.x)))
        .collect();
    let ref_lat = true_ll.iter().map(|p| p.0).sum::<f64>() / true_ll.len() as f64;
    let case_steps: Vec<CaseStep> = steps
        .iter()
        .zip(&truth)
        .zip(&true_ll)
        .map(|((s, p), &ll)| {
            let pred = (s.latitude, s.longitude);
            let error_km = match distance {
                DistanceMethod::Equirectangular => equirectangular_km(ll, pred, ref_lat),
                DistanceMethod::Haversine => haversine_km(ll, pred),
            };
            CaseStep {
                target_index: s.target_index,
                timestamp: s.timestamp,
                true_latitude: ll.0,
                true_longitude: ll.1,
                predicted_latitude: s.latitude,
                predicted_longitude: s.longitude,
                error_km,
                true_status: p.status.clone(),
                predicted_status: s.status.clone(),
            }
        })
        .collect();
    let mean_track_error_km = case_steps.iter().map(|c| c.error_km).sum::<f64>() / case_steps.len() as f64;

    let mut regression = Vec::new();
    let mut physical = Vec::new();
    for (k, target) in RegressionTarget::ALL.iter().enumerate() {
        let t: Vec<f64> = truth
            .iter()
            .map(|p| [p.wind_std, p.pressure_std, p.displacement.length, p.displacement.direction][k])
            .collect();
        let f: Vec<f64> = steps
            .iter()
            .map(|s| [s.wind_std, s.pressure_std, s.length, s.direction][k])
            .collect();
        let m = mae(&t, &f)?;
        regression.push(RegressionScore {
            target: TARGET_NAMES[k].to_string(),
            mae: m,
            r_squared: r_squared(&t, &f).unwrap_or(f64::NAN),
        });
        let scaler = match target {
            RegressionTarget::Wind => Some(&sc.wind),
            RegressionTarget::Pressure => Some(&sc.pressure),
            _ => None,
        };
        physical.push(error_to_physical(*target, m, scaler)?);
    }

    let classes = models.classes();
    let y_true = classes.encode(&truth.iter().map(|p| p.status.clone()).collect::<Vec<_>>())?;
    let w = models.windows;
    let observed: Vec<Vec<f64>> = steps
        .iter()
        .map(|s| {
            let t = s.target_index;
            classification_features(&storm.points[t - w.classification..t], (&storm.points[t]).into())
        })
        .collect();
    let mut classifiers = Vec::new();
    for kind in ClassifierKind::ALL {
        let two: Vec<usize> = steps
            .iter()
            .map(|s| classes.index_of(s.status.get(kind)).ok_or_else(|| Error::UnknownClass(s.status.get(kind).to_string())))
            .collect::<Result<_>>()?;
        let gt: Vec<usize> = observed
            .iter()
            .map(|f| models.classify_index(kind, f))
            .collect::<Result<_>>()?;
        let (two_stage, two_stage_confusion) = classification_report(&y_true, &two, classes)?;
        let (ground_truth, ground_truth_confusion) = classification_report(&y_true, &gt, classes)?;
        classifiers.push(ClassifierEvaluation {
            classifier: kind,
            two_stage,
            two_stage_confusion,
            ground_truth,
            ground_truth_confusion,
        });
    }

    Ok(CaseStudyReport {
        storm_id: storm.id,
        name: storm.name.clone(),
        mode,
        distance_method: distance,
        steps: case_steps,
        regression,
        physical,
        mean_track_error_km,
        classifiers,
    })
}

/// Point features for observed (red) and forecast (blue) positions.
pub fn to_geojson(report: &CaseStudyReport) -> serde_json::Value {
    let mut features = Vec::with_capacity(report.steps.len() * 2);
    for (i, s) in report.steps.iter().enumerate() {
        for (kind, lat, lon, status, color) in [
            ("truth", s.true_latitude, s.true_longitude, s.true_status.as_str(), "#ff0000"),
            ("predicted", s.predicted_latitude, s.predicted_longitude, s.predicted_status.rf.as_str(), "#0000ff"),
        ] {
            features.push(json!({
                "type": "Feature",
                "geometry": { "type": "Point", "coordinates": [lon, lat] },
                "properties": {
                    "step": i,
                    "timestamp": s.timestamp.format("%Y-%m-%dT%H:%MZ").to_string(),
                    "kind": kind,
                    "status": status,
                    "marker-color": color,
                },
            }));
        }
    }
    json!({ "type": "FeatureCollection", "features": features })
}

/// Scatter of observed (red) and forecast (blue) positions on a lon/lat
/// plane, padded around the track extent.
pub fn to_svg(report: &CaseStudyReport) -> String {
    const W: f64 = 800.0;
    const H: f64 = 600.0;
    const PAD: f64 = 40.0;
    let pts = report
        .steps
        .iter()
        .flat_map(|s| [(s.true_longitude, s.true_latitude), (s.predicted_longitude, s.predicted_latitude)]);
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for (x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    let span = (x1 - x0).max(y1 - y0).max(1e-6);
    let k = ((W - 2.0 * PAD) / span).min((H - 2.0 * PAD) / span);
    let px = |lon: f64| PAD + (lon - x0) * k;
    let py = |lat: f64| H - PAD - (lat - y0) * k;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{PAD}" y="24" font-family="sans-serif" font-size="16">{} ({}): observed red, forecast blue</text>"#,
        report.name, report.storm_id
    );
    for (color, pick) in [("red", true), ("blue", false)] {
        let path: Vec<String> = report
            .steps
            .iter()
            .map(|st| {
                let (lon, lat) = if pick {
                    (st.true_longitude, st.true_latitude)
                } else {
                    (st.predicted_longitude, st.predicted_latitude)
                };
                format!("{:.2},{:.2}", px(lon), py(lat))
            })
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-opacity="0.4" points="{}"/>"#,
            path.join(" ")
        );
        for p in &path {
            let (cx, cy) = p.split_once(',').unwrap_or(("0", "0"));
            let _ = writeln!(s, r#"<circle cx="{cx}" cy="{cy}" r="3" fill="{color}"/>"#);
        }
    }
    s.push_str("</svg>\n");
    s
}

pub fn write_steps_csv<W: Write>(report: &CaseStudyReport, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "step",
        "timestamp",
        "true_lat",
        "true_lon",
        "pred_lat",
        "pred_lon",
        "error_km",
        "true_status",
        "rf_status",
        "svm_status",
        "mlp_status",
    ])?;
    for (i, s) in report.steps.iter().enumerate() {
        w.write_record([
            i.to_string(),
            s.timestamp.format("%Y-%m-%d %H:%M").to_string(),
            format!("{:.4}", s.true_latitude),
            format!("{:.4}", s.true_longitude),
            format!("{:.4}", s.predicted_latitude),
            format!("{:.4}", s.predicted_longitude),
            format!("{:.3}", s.error_km),
            s.true_status.to_string(),
            s.predicted_status.rf.to_string(),
            s.predicted_status.svm.to_string(),
            s.predicted_status.mlp.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preprocess::displacement_from;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn reconstruct_basics() {
        let p = Position { x: 0.3, y: 0.6 };
        assert_eq!(reconstruct_position(p, 0.0, 1.0), p);
        let n = reconstruct_position(p, 0.01, 0.0);
        assert_eq!(n.x, p.x);
        assert!((n.y - 0.61).abs() < 1e-15);
        let e = reconstruct_position(p, 0.01, FRAC_PI_2);
        assert!((e.x - 0.31).abs() < 1e-15);
        let d = displacement_from(p, e);
        assert!((d.length - 0.01).abs() < 1e-12 && (d.direction - FRAC_PI_2).abs() < 1e-9);
    }

    #[test]
    fn distances_agree_at_short_range() {
        let a = (25.0, -80.0);
        let b = (25.5, -80.4);
        let h = haversine_km(a, b);
        let e = equirectangular_km(a, b, 25.25);
        assert!((h - e).abs() / h < 0.01, "{h} vs {e}");
        assert_eq!(equirectangular_km(a, a, 25.0), 0.0);
        // one degree of latitude
        assert!((haversine_km((0.0, 0.0), (1.0, 0.0)) - KM_PER_DEGREE).abs() < 1e-3);
    }
}
