//! Feature scaling, movement geometry and dataset cleaning.
//!
//! Positions live on a flat grid: longitude and latitude are min-max scaled
//! with their fixed physical bounds, so `x = (lon + 180) / 360` and
//! `y = (lat + 90) / 180`. Movement between consecutive observations is kept
//! as a length in grid units and a bearing in radians, clockwise from north.

use std::f64::consts::{PI, TAU};
use std::io::Write;

use chrono::{Datelike, Duration, NaiveDateTime};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hurdat2::{StatusCode, StormId, StormTrack, RADII_COUNT, RADII_NAMES};

pub const LON_BOUNDS: (f64, f64) = (-180.0, 180.0);
pub const LAT_BOUNDS: (f64, f64) = (-90.0, 90.0);
pub const MONTH_BOUNDS: (f64, f64) = (1.0, 12.0);

pub fn minmax_normalize(x: f64, min: f64, max: f64) -> Result<f64> {
    if !(max > min) {
        return Err(Error::InvalidBounds { min, max });
    }
    Ok((x - min) / (max - min))
}

pub fn standardize(x: f64, mean: f64, std: f64) -> Result<f64> {
    if !(std > 0.0) {
        return Err(Error::ConstantFeature {
            feature: "value".into(),
        });
    }
    Ok((x - mean) / std)
}

fn norm(v: [f64; 2]) -> f64 {
    v[0].hypot(v[1])
}

/// Angle in [0, π] between two non-zero vectors, `arccos(A·B / (|A||B|))`.
///
/// The cosine is clamped to [-1, 1]. Near 0 and π arccos loses about half
/// the available precision, so there the same angle is taken from the
/// cross-product sine instead.
pub fn angle_between(a: [f64; 2], b: [f64; 2]) -> Result<f64> {
    let (na, nb) = (norm(a), norm(b));
    if !(na > 0.0) || !(nb > 0.0) {
        return Err(Error::ZeroVector);
    }
    let cos = ((a[0] * b[0] + a[1] * b[1]) / (na * nb)).clamp(-1.0, 1.0);
    if cos.abs() <= 0.9 {
        return Ok(cos.acos());
    }
    let sin = ((a[0] * b[1] - a[1] * b[0]).abs() / (na * nb)).min(1.0);
    Ok(if cos > 0.0 { sin.asin() } else { PI - sin.asin() })
}

/// Point on the normalized grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub fn from_degrees(latitude: f64, longitude: f64) -> Position {
        Position {
            x: (longitude - LON_BOUNDS.0) / (LON_BOUNDS.1 - LON_BOUNDS.0),
            y: (latitude - LAT_BOUNDS.0) / (LAT_BOUNDS.1 - LAT_BOUNDS.0),
        }
    }

    pub fn longitude(&self) -> f64 {
        self.x * (LON_BOUNDS.1 - LON_BOUNDS.0) + LON_BOUNDS.0
    }

    pub fn latitude(&self) -> f64 {
        self.y * (LAT_BOUNDS.1 - LAT_BOUNDS.0) + LAT_BOUNDS.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Displacement {
    /// Grid units.
    pub length: f64,
    /// Radians in [0, 2π), clockwise from north.
    pub direction: f64,
}

const NORTH: [f64; 2] = [0.0, 1.0];

/// Movement from `prev` to `cur`. A zero move has length 0 and direction 0.
pub fn displacement_from(prev: Position, cur: Position) -> Displacement {
    let d = [cur.x - prev.x, cur.y - prev.y];
    let length = norm(d);
    let Ok(angle) = angle_between(d, NORTH) else {
        return Displacement::default();
    };
    let mut direction = if d[0] < 0.0 { TAU - angle } else { angle };
    if direction >= TAU {
        direction = 0.0;
    }
    Displacement { length, direction }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FittedScaler {
    MinMax { min: f64, max: f64 },
    Standard { mean: f64, std: f64 },
}

impl FittedScaler {
    pub fn min_max(min: f64, max: f64) -> Result<FittedScaler> {
        if !(max > min) {
            return Err(Error::InvalidBounds { min, max });
        }
        Ok(FittedScaler::MinMax { min, max })
    }

    /// Population mean and standard deviation of `values`.
    pub fn fit_standard(values: &[f64], feature: &str) -> Result<FittedScaler> {
        if values.len() < 2 {
            return Err(Error::InsufficientData(format!(
                "need at least 2 rows to fit {feature}"
            )));
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let std = var.sqrt();
        if !(std > 0.0) {
            return Err(Error::ConstantFeature {
                feature: feature.to_string(),
            });
        }
        Ok(FittedScaler::Standard { mean, std })
    }

    pub fn transform(&self, x: f64) -> f64 {
        match *self {
            FittedScaler::MinMax { min, max } => (x - min) / (max - min),
            FittedScaler::Standard { mean, std } => (x - mean) / std,
        }
    }

    pub fn inverse(&self, z: f64) -> f64 {
        match *self {
            FittedScaler::MinMax { min, max } => z * (max - min) + min,
            FittedScaler::Standard { mean, std } => z * std + mean,
        }
    }

    /// Factor converting a difference in scaled units back to physical units.
    pub fn scale(&self) -> f64 {
        match *self {
            FittedScaler::MinMax { min, max } => max - min,
            FittedScaler::Standard { std, .. } => std,
        }
    }
}

/// A fully populated observation in physical units, before scaling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CleanRecord {
    pub timestamp: NaiveDateTime,
    pub status: StatusCode,
    pub latitude: f64,
    pub longitude: f64,
    pub position: Position,
    pub month: u32,
    pub wind: f64,
    pub pressure: f64,
    pub radii: [f64; RADII_COUNT],
    /// Movement from the previous retained record; zero for the first one.
    pub displacement: Displacement,
    /// Whether the previous retained record is exactly six hours earlier.
    pub follows_previous: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CleanStorm {
    pub id: StormId,
    pub name: String,
    pub records: Vec<CleanRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CleanOptions {
    /// Storms with fewer retained records are dropped entirely.
    pub min_points: usize,
    /// Keep only 00/06/12/18 UTC observations.
    pub synoptic_only: bool,
}

impl Default for CleanOptions {
    fn default() -> Self {
        CleanOptions {
            min_points: 6,
            synoptic_only: true,
        }
    }
}

/// Drops rows with missing fields or unknown status and storms left with
/// fewer than `min_points` rows.
pub fn clean(tracks: &[StormTrack], options: CleanOptions) -> Vec<CleanStorm> {
    let six_hours = Duration::hours(6);
    tracks
        .iter()
        .filter_map(|track| {
            let mut records: Vec<CleanRecord> = Vec::new();
            for p in &track.points {
                if !p.status.is_known() || (options.synoptic_only && !p.is_synoptic()) {
                    continue;
                }
                let (Some(wind), Some(pressure)) = (p.max_wind, p.min_pressure) else {
                    continue;
                };
                if p.radii.iter().any(Option::is_none) {
                    continue;
                }
                let radii = p.radii.map(|r| f64::from(r.unwrap_or_default()));
                let position = Position::from_degrees(p.latitude, p.longitude);
                let (displacement, follows_previous) = match records.last() {
                    Some(prev) => (
                        displacement_from(prev.position, position),
                        p.timestamp - prev.timestamp == six_hours,
                    ),
                    None => (Displacement::default(), false),
                };
                records.push(CleanRecord {
                    timestamp: p.timestamp,
                    status: p.status.clone(),
                    latitude: p.latitude,
                    longitude: p.longitude,
                    position,
                    month: p.timestamp.month(),
                    wind: f64::from(wind),
                    pressure: f64::from(pressure),
                    radii,
                    displacement,
                    follows_previous,
                });
            }
            (records.len() >= options.min_points.max(1)).then(|| CleanStorm {
                id: track.header.id,
                name: track.header.name.clone(),
                records,
            })
        })
        .collect()
}

/// Scaled observation, the unit every model consumes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CleanPoint {
    pub timestamp: NaiveDateTime,
    pub x: f64,
    pub y: f64,
    pub month_norm: f64,
    pub wind_std: f64,
    pub pressure_std: f64,
    pub radii_std: [f64; RADII_COUNT],
    pub displacement: Displacement,
    pub status: StatusCode,
    pub follows_previous: bool,
}

impl CleanPoint {
    pub fn position(&self) -> Position {
        Position {
            x: self.x,
            y: self.y,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaledStorm {
    pub id: StormId,
    pub name: String,
    pub points: Vec<CleanPoint>,
}

/// Every scaler the pipeline applies, fitted once on training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerSet {
    pub longitude: FittedScaler,
    pub latitude: FittedScaler,
    pub month: FittedScaler,
    pub wind: FittedScaler,
    pub pressure: FittedScaler,
    pub radii: [FittedScaler; RADII_COUNT],
}

/// Fits min-max scalers on fixed bounds and standard scalers for wind,
/// pressure and every radii column on the given training rows.
pub fn fit_scalers<'a, I>(rows: I) -> Result<ScalerSet>
where
    I: IntoIterator<Item = &'a CleanRecord>,
{
    let rows: Vec<&CleanRecord> = rows.into_iter().collect();
    if rows.len() < 2 {
        return Err(Error::InsufficientData(
            "need at least 2 training rows to fit scalers".into(),
        ));
    }
    let column = |f: &dyn Fn(&CleanRecord) -> f64| rows.iter().map(|r| f(r)).collect::<Vec<_>>();
    let wind = FittedScaler::fit_standard(&column(&|r| r.wind), "max_wind")?;
    let pressure = FittedScaler::fit_standard(&column(&|r| r.pressure), "min_pressure")?;
    let mut radii = [FittedScaler::Standard { mean: 0.0, std: 1.0 }; RADII_COUNT];
    for (k, slot) in radii.iter_mut().enumerate() {
        *slot = FittedScaler::fit_standard(&column(&|r| r.radii[k]), RADII_NAMES[k])?;
    }
    Ok(ScalerSet {
        longitude: FittedScaler::min_max(LON_BOUNDS.0, LON_BOUNDS.1)?,
        latitude: FittedScaler::min_max(LAT_BOUNDS.0, LAT_BOUNDS.1)?,
        month: FittedScaler::min_max(MONTH_BOUNDS.0, MONTH_BOUNDS.1)?,
        wind,
        pressure,
        radii,
    })
}

impl ScalerSet {
    pub fn apply(&self, r: &CleanRecord) -> CleanPoint {
        let mut radii_std = [0.0; RADII_COUNT];
        for (k, slot) in radii_std.iter_mut().enumerate() {
            *slot = self.radii[k].transform(r.radii[k]);
        }
        CleanPoint {
            timestamp: r.timestamp,
            x: self.longitude.transform(r.longitude),
            y: self.latitude.transform(r.latitude),
            month_norm: self.month.transform(f64::from(r.month)),
            wind_std: self.wind.transform(r.wind),
            pressure_std: self.pressure.transform(r.pressure),
            radii_std,
            displacement: r.displacement,
            status: r.status.clone(),
            follows_previous: r.follows_previous,
        }
    }

    pub fn apply_storm(&self, storm: &CleanStorm) -> ScaledStorm {
        ScaledStorm {
            id: storm.id,
            name: storm.name.clone(),
            points: storm.records.iter().map(|r| self.apply(r)).collect(),
        }
    }
}

pub fn cleaned_csv_header() -> Vec<String> {
    let mut cols: Vec<String> = [
        "storm_id",
        "timestamp",
        "x",
        "y",
        "month_norm",
        "wind_std",
        "pressure_std",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    cols.extend(RADII_NAMES.iter().map(|n| format!("{n}_std")));
    cols.extend(["length", "direction", "status"].map(String::from));
    cols
}

/// Writes scaled storms using [`cleaned_csv_header`] column order.
pub fn export_cleaned_csv<W: Write>(storms: &[ScaledStorm], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(cleaned_csv_header())?;
    for storm in storms {
        for p in &storm.points {
            let mut row = vec![
                storm.id.to_string(),
                p.timestamp.format("%Y-%m-%dT%H:%M:%SZ").to_string(),
                p.x.to_string(),
                p.y.to_string(),
                p.month_norm.to_string(),
                p.wind_std.to_string(),
                p.pressure_std.to_string(),
            ];
            row.extend(p.radii_std.iter().map(f64::to_string));
            row.push(p.displacement.length.to_string());
            row.push(p.displacement.direction.to_string());
            row.push(p.status.to_string());
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}
