//! Regression and classification scores, plus conversion of scaled errors
//! back to physical units.

use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hurdat2::StatusCode;
use crate::labels::LabelSet;
use crate::matrix::check_dim;
use crate::preprocess::{FittedScaler, LAT_BOUNDS};

/// Mean meridional length of one degree of latitude.
pub const KM_PER_DEGREE: f64 = 111.195;
/// Kilometres per unit of normalized `y`, which spans the full 180° of
/// latitude. Applied to displacement lengths in either axis.
pub const KM_PER_UNIT: f64 = KM_PER_DEGREE * (LAT_BOUNDS.1 - LAT_BOUNDS.0);

fn check_pair(y_true: &[f64], y_pred: &[f64]) -> Result<()> {
    check_dim(y_true.len(), y_pred.len())?;
    if y_true.is_empty() {
        return Err(Error::InsufficientData("metric over empty input".into()));
    }
    Ok(())
}

pub fn mae(y_true: &[f64], y_pred: &[f64]) -> Result<f64> {
    check_pair(y_true, y_pred)?;
    Ok(y_true.iter().zip(y_pred).map(|(a, b)| (a - b).abs()).sum::<f64>() / y_true.len() as f64)
}

/// `1 − SS_res / SS_tot`.
pub fn r_squared(y_true: &[f64], y_pred: &[f64]) -> Result<f64> {
    check_pair(y_true, y_pred)?;
    let mean = y_true.iter().sum::<f64>() / y_true.len() as f64;
    let ss_tot: f64 = y_true.iter().map(|v| (v - mean).powi(2)).sum();
    if !(ss_tot > 0.0) {
        return Err(Error::ConstantFeature {
            feature: "y_true".into(),
        });
    }
    let ss_res: f64 = y_true.iter().zip(y_pred).map(|(a, b)| (a - b).powi(2)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionScore {
    pub target: String,
    pub mae: f64,
    pub r_squared: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegressionTarget {
    Wind,
    Pressure,
    Length,
    Direction,
}

impl RegressionTarget {
    pub const ALL: [RegressionTarget; 4] = [
        RegressionTarget::Wind,
        RegressionTarget::Pressure,
        RegressionTarget::Length,
        RegressionTarget::Direction,
    ];

    pub fn unit(&self) -> &'static str {
        match self {
            RegressionTarget::Wind => "kt",
            RegressionTarget::Pressure => "mb",
            RegressionTarget::Length => "km",
            RegressionTarget::Direction => "deg",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhysicalError {
    pub scaled: f64,
    pub value: f64,
    pub unit: String,
}

/// Converts a scaled-unit MAE into physical units. Wind and pressure need
/// their fitted standard scaler.
pub fn error_to_physical(
    target: RegressionTarget,
    mae_scaled: f64,
    scaler: Option<&FittedScaler>,
) -> Result<PhysicalError> {
    let value = match target {
        RegressionTarget::Wind | RegressionTarget::Pressure => {
            let s = scaler.ok_or_else(|| Error::MissingScaler(format!("{target:?}").to_lowercase()))?;
            mae_scaled * s.scale()
        }
        RegressionTarget::Length => mae_scaled * KM_PER_UNIT,
        RegressionTarget::Direction => mae_scaled.to_degrees(),
    };
    Ok(PhysicalError {
        scaled: mae_scaled,
        value,
        unit: target.unit().to_string(),
    })
}

/// `counts[i][j]`: samples of true class `i` predicted as class `j`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub classes: LabelSet,
    pub counts: Vec<Vec<usize>>,
}

impl ConfusionMatrix {
    pub fn from_labels(y_true: &[usize], y_pred: &[usize], classes: &LabelSet) -> Result<ConfusionMatrix> {
        check_labels(y_true, y_pred, classes)?;
        let k = classes.len();
        let mut counts = vec![vec![0; k]; k];
        for (&t, &p) in y_true.iter().zip(y_pred) {
            counts[t][p] += 1;
        }
        Ok(ConfusionMatrix {
            classes: classes.clone(),
            counts,
        })
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn support(&self, i: usize) -> usize {
        self.counts[i].iter().sum()
    }

    pub fn predicted(&self, j: usize) -> usize {
        self.counts.iter().map(|r| r[j]).sum()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["true\\predicted".to_string()];
        header.extend(self.classes.classes().iter().map(ToString::to_string));
        w.write_record(&header)?;
        for (c, row) in self.classes.classes().iter().zip(&self.counts) {
            let mut rec = vec![c.to_string()];
            rec.extend(row.iter().map(ToString::to_string));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn check_labels(y_true: &[usize], y_pred: &[usize], classes: &LabelSet) -> Result<()> {
    check_dim(y_true.len(), y_pred.len())?;
    if y_true.is_empty() {
        return Err(Error::InsufficientData("classification report over empty input".into()));
    }
    if let Some(&bad) = y_true.iter().chain(y_pred).find(|&&l| l >= classes.len()) {
        return Err(Error::UnknownClass(format!("label index {bad}")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassScore {
    pub class: StatusCode,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
    pub predicted: usize,
    /// Never predicted, so precision was reported as 0.
    pub precision_undefined: bool,
    /// No support, so recall was reported as 0.
    pub recall_undefined: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Averages {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Per-class rows cover only classes that occur in the truth or the
/// predictions; the macro average is their unweighted mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub classes: Vec<ClassScore>,
    pub macro_avg: Averages,
    pub weighted_avg: Averages,
    pub accuracy: f64,
    pub total: usize,
}

fn ratio(num: usize, den: usize) -> (f64, bool) {
    if den == 0 {
        (0.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

impl ClassificationReport {
    fn from_counts(classes: &LabelSet, tp: &[usize], support: &[usize], predicted: &[usize], total: usize) -> Self {
        let mut rows = Vec::new();
        for i in 0..classes.len() {
            if support[i] == 0 && predicted[i] == 0 {
                continue;
            }
            let (precision, precision_undefined) = ratio(tp[i], predicted[i]);
            let (recall, recall_undefined) = ratio(tp[i], support[i]);
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            rows.push(ClassScore {
                class: classes.get(i).clone(),
                precision,
                recall,
                f1,
                support: support[i],
                predicted: predicted[i],
                precision_undefined,
                recall_undefined,
            });
        }
        let k = rows.len() as f64;
        let n = total as f64;
        let avg = |w: &dyn Fn(&ClassScore) -> f64| Averages {
            precision: rows.iter().map(|r| w(r) * r.precision).sum(),
            recall: rows.iter().map(|r| w(r) * r.recall).sum(),
            f1: rows.iter().map(|r| w(r) * r.f1).sum(),
        };
        let macro_avg = avg(&|_| 1.0 / k);
        let weighted_avg = avg(&|r| r.support as f64 / n);
        ClassificationReport {
            accuracy: tp.iter().sum::<usize>() as f64 / n,
            classes: rows,
            macro_avg,
            weighted_avg,
            total,
        }
    }

    pub fn from_confusion(cm: &ConfusionMatrix) -> ClassificationReport {
        let k = cm.classes.len();
        let tp: Vec<usize> = (0..k).map(|i| cm.counts[i][i]).collect();
        let support: Vec<usize> = (0..k).map(|i| cm.support(i)).collect();
        let predicted: Vec<usize> = (0..k).map(|j| cm.predicted(j)).collect();
        Self::from_counts(&cm.classes, &tp, &support, &predicted, cm.total())
    }

    /// Counts taken straight from the label vectors, bypassing the matrix.
    pub fn from_labels(y_true: &[usize], y_pred: &[usize], classes: &LabelSet) -> Result<ClassificationReport> {
        check_labels(y_true, y_pred, classes)?;
        let k = classes.len();
        let (mut tp, mut support, mut predicted) = (vec![0; k], vec![0; k], vec![0; k]);
        for (&t, &p) in y_true.iter().zip(y_pred) {
            support[t] += 1;
            predicted[p] += 1;
            if t == p {
                tp[t] += 1;
            }
        }
        Ok(Self::from_counts(classes, &tp, &support, &predicted, y_true.len()))
    }

    pub fn class(&self, code: &StatusCode) -> Option<&ClassScore> {
        self.classes.iter().find(|c| &c.class == code)
    }

    /// Aligned plain-text table; undefined scores are marked with `*`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:>12} {:>10} {:>10} {:>10} {:>10}", "", "precision", "recall", "f1-score", "support");
        let _ = writeln!(s);
        let mark = |u: bool| if u { "*" } else { " " };
        for c in &self.classes {
            let _ = writeln!(
                s,
                "{:>12} {:>9.4}{} {:>9.4}{} {:>10.4} {:>10}",
                c.class.as_str(),
                c.precision,
                mark(c.precision_undefined),
                c.recall,
                mark(c.recall_undefined),
                c.f1,
                c.support
            );
        }
        let _ = writeln!(s);
        let _ = writeln!(s, "{:>12} {:>10} {:>10} {:>10.4} {:>10}", "accuracy", "", "", self.accuracy, self.total);
        for (name, a) in [("macro avg", self.macro_avg), ("weighted avg", self.weighted_avg)] {
            let _ = writeln!(
                s,
                "{:>12} {:>10.4} {:>10.4} {:>10.4} {:>10}",
                name, a.precision, a.recall, a.f1, self.total
            );
        }
        if self.classes.iter().any(|c| c.precision_undefined || c.recall_undefined) {
            let _ = writeln!(s, "* undefined (zero denominator), reported as 0");
        }
        s
    }
}

/// Report and confusion matrix for encoded labels.
pub fn classification_report(
    y_true: &[usize],
    y_pred: &[usize],
    classes: &LabelSet,
) -> Result<(ClassificationReport, ConfusionMatrix)> {
    let cm = ConfusionMatrix::from_labels(y_true, y_pred, classes)?;
    Ok((ClassificationReport::from_confusion(&cm), cm))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn three() -> LabelSet {
        LabelSet::new(vec![StatusCode::HU, StatusCode::TD, StatusCode::TS])
    }

    #[test]
    fn regression_basics() {
        assert_eq!(mae(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mae(&[0.0, 2.0], &[1.0, 1.0]).unwrap(), 1.0);
        assert!(mae(&[], &[]).is_err());
        let y = [1.0, 2.0, 4.0];
        assert_eq!(r_squared(&y, &y).unwrap(), 1.0);
        let m = 7.0 / 3.0;
        assert!(r_squared(&y, &[m, m, m]).unwrap().abs() < 1e-15);
        assert!(r_squared(&[2.0, 2.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn hand_report() {
        let t = [0, 0, 1, 1, 2, 2];
        let p = [0, 1, 1, 1, 2, 0];
        let (r, cm) = classification_report(&t, &p, &three()).unwrap();
        assert_eq!(cm.counts, vec![vec![1, 1, 0], vec![0, 2, 0], vec![1, 0, 1]]);
        let close = |a: f64, b: f64| assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        close(r.classes[0].precision, 0.5);
        close(r.classes[0].recall, 0.5);
        close(r.classes[1].precision, 2.0 / 3.0);
        close(r.classes[1].recall, 1.0);
        close(r.classes[1].f1, 0.8);
        close(r.classes[2].precision, 1.0);
        close(r.classes[2].f1, 2.0 / 3.0);
        close(r.accuracy, 4.0 / 6.0);
        close(r.macro_avg.precision, (0.5 + 2.0 / 3.0 + 1.0) / 3.0);
        close(r.macro_avg.f1, (0.5 + 0.8 + 2.0 / 3.0) / 3.0);
        close(r.weighted_avg.recall, r.accuracy);
        assert_eq!(r, ClassificationReport::from_labels(&t, &p, &three()).unwrap());
        assert!(r.to_text().contains("weighted avg"));
    }

    #[test]
    fn all_correct_and_undefined() {
        let (r, _) = classification_report(&[0, 2, 2], &[0, 2, 2], &three()).unwrap();
        assert_eq!(r.accuracy, 1.0);
        assert_eq!(r.classes.len(), 2, "class with no support and no predictions is omitted");
        assert!(r.classes.iter().all(|c| c.f1 == 1.0));

        let (r, _) = classification_report(&[0, 0], &[0, 1], &three()).unwrap();
        let td = r.class(&StatusCode::TD).unwrap();
        assert!(td.recall_undefined && !td.precision_undefined);
        assert_eq!(td.f1, 0.0);
        assert!(r.to_text().contains('*'));
        assert!(classification_report(&[0], &[5], &three()).is_err());
        assert!(classification_report(&[], &[], &three()).is_err());
    }

    #[test]
    fn physical_units() {
        let d = error_to_physical(RegressionTarget::Direction, 0.372, None).unwrap();
        assert!((d.value - 21.314).abs() < 1e-3);
        let s = FittedScaler::Standard { mean: 1000.0, std: 18.3 };
        let p = error_to_physical(RegressionTarget::Pressure, 0.121, Some(&s)).unwrap();
        assert!((p.value - 2.2143).abs() < 1e-9);
        assert_eq!(error_to_physical(RegressionTarget::Wind, 0.0, Some(&s)).unwrap().value, 0.0);
        assert!(error_to_physical(RegressionTarget::Wind, 0.1, None).is_err());
        let l = error_to_physical(RegressionTarget::Length, 1.0, None).unwrap();
        assert_eq!(l.value, KM_PER_UNIT);
    }

    #[test]
    fn confusion_csv() {
        let cm = ConfusionMatrix::from_labels(&[0, 1], &[1, 1], &three()).unwrap();
        let mut buf = Vec::new();
        cm.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), "true\\predicted,HU,TD,TS");
        assert_eq!(text.lines().nth(1).unwrap(), "HU,0,1,0");
    }
}
