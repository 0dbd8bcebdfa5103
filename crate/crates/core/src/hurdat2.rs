//! Reader and writer for the NHC HURDAT2 best-track text format.
//!
//! A file is a sequence of storm blocks. Each block opens with a header line
//! (`AL122005,            KATRINA,     34,`) followed by exactly the declared
//! number of observation lines:
//!
//! ```text
//! 20050823, 1800,  , TD, 23.1N,  75.1W,  30, 1008,    0,    0, ...
//! ```
//!
//! Observation lines carry 8 fields (date, time, record identifier, status,
//! latitude, longitude, wind, pressure), 20 fields (plus the twelve wind
//! radii) or 21 fields (plus radius of maximum wind, added in newer
//! vintages). Negative numeric values are missing-value sentinels (`-99` for
//! wind, `-999` elsewhere) and are stored as `None`.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use chrono::{NaiveDate, NaiveDateTime, NaiveTime, Timelike};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of wind radii columns: 34/50/64 kt thresholds times four quadrants.
pub const RADII_COUNT: usize = 12;

/// Names of the wind radii columns in file order.
pub const RADII_NAMES: [&str; RADII_COUNT] = [
    "r34_ne", "r34_se", "r34_sw", "r34_nw", "r50_ne", "r50_se", "r50_sw", "r50_nw", "r64_ne",
    "r64_se", "r64_sw", "r64_nw",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Basin {
    #[serde(rename = "AL")]
    Atlantic,
    #[serde(rename = "EP")]
    EastPacific,
    #[serde(rename = "CP")]
    CentralPacific,
}

impl Basin {
    pub fn code(self) -> &'static str {
        match self {
            Basin::Atlantic => "AL",
            Basin::EastPacific => "EP",
            Basin::CentralPacific => "CP",
        }
    }
}

impl FromStr for Basin {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "AL" => Ok(Basin::Atlantic),
            "EP" => Ok(Basin::EastPacific),
            "CP" => Ok(Basin::CentralPacific),
            other => Err(format!("unknown basin code {other:?}")),
        }
    }
}

/// Storm identity, rendered as basin + two-digit number + year (`AL122005`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StormId {
    pub basin: Basin,
    pub number: u8,
    pub year: i32,
}

impl fmt::Display for StormId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{:02}{:04}", self.basin.code(), self.number, self.year)
    }
}

impl FromStr for StormId {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let s = s.trim();
        if s.len() != 8 || !s.is_ascii() {
            return Err(format!("storm id {s:?} must be 8 characters (e.g. AL122005)"));
        }
        let basin = s[..2].parse::<Basin>()?;
        let number = s[2..4]
            .parse::<u8>()
            .map_err(|_| format!("storm id {s:?}: bad cyclone number"))?;
        if !(1..=99).contains(&number) {
            return Err(format!("storm id {s:?}: cyclone number must be 1-99"));
        }
        let year = s[4..]
            .parse::<i32>()
            .map_err(|_| format!("storm id {s:?}: bad year"))?;
        Ok(StormId { basin, number, year })
    }
}

impl Serialize for StormId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for StormId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = String::deserialize(d)?;
        raw.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StormHeader {
    pub id: StormId,
    pub name: String,
    pub declared_entries: usize,
}

/// Two-letter system status. Unrecognized codes are kept verbatim.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum StatusCode {
    TD,
    TS,
    HU,
    EX,
    SD,
    SS,
    LO,
    WV,
    DB,
    Unknown(String),
}

impl StatusCode {
    pub const KNOWN: [StatusCode; 9] = [
        StatusCode::DB,
        StatusCode::EX,
        StatusCode::HU,
        StatusCode::LO,
        StatusCode::SD,
        StatusCode::SS,
        StatusCode::TD,
        StatusCode::TS,
        StatusCode::WV,
    ];

    pub fn parse(raw: &str) -> StatusCode {
        match raw.trim() {
            "TD" => StatusCode::TD,
            "TS" => StatusCode::TS,
            "HU" => StatusCode::HU,
            "EX" => StatusCode::EX,
            "SD" => StatusCode::SD,
            "SS" => StatusCode::SS,
            "LO" => StatusCode::LO,
            "WV" => StatusCode::WV,
            "DB" => StatusCode::DB,
            other => StatusCode::Unknown(other.to_string()),
        }
    }

    pub fn as_str(&self) -> &str {
        match self {
            StatusCode::TD => "TD",
            StatusCode::TS => "TS",
            StatusCode::HU => "HU",
            StatusCode::EX => "EX",
            StatusCode::SD => "SD",
            StatusCode::SS => "SS",
            StatusCode::LO => "LO",
            StatusCode::WV => "WV",
            StatusCode::DB => "DB",
            StatusCode::Unknown(raw) => raw,
        }
    }

    pub fn is_known(&self) -> bool {
        !matches!(self, StatusCode::Unknown(_))
    }
}

/// Ordered by the two-letter code, which is the tie-break order used by the
/// classifiers.
impl Ord for StatusCode {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.as_str().cmp(other.as_str())
    }
}

impl PartialOrd for StatusCode {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for StatusCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for StatusCode {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for StatusCode {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        Ok(StatusCode::parse(&String::deserialize(d)?))
    }
}

/// One best-track observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackPoint {
    pub timestamp: NaiveDateTime,
    pub record_identifier: Option<char>,
    pub status: StatusCode,
    pub latitude: f64,
    pub longitude: f64,
    /// Knots.
    pub max_wind: Option<u16>,
    /// Millibars.
    pub min_pressure: Option<u16>,
    /// Nautical miles, ordered as [`RADII_NAMES`].
    pub radii: [Option<u16>; RADII_COUNT],
    pub radius_max_wind: Option<u16>,
}

impl TrackPoint {
    /// True for the 00/06/12/18 UTC entries; special entries (landfalls,
    /// intensity peaks) fall between them.
    pub fn is_synoptic(&self) -> bool {
        let t = self.timestamp.time();
        t.minute() == 0 && t.second() == 0 && t.hour().is_multiple_of(6)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StormTrack {
    pub header: StormHeader,
    pub points: Vec<TrackPoint>,
}

impl StormTrack {
    pub fn id(&self) -> StormId {
        self.header.id
    }
}

/// Splits a comma-separated line into trimmed fields, dropping the empty
/// field produced by a trailing comma.
fn split_fields(line: &str) -> Vec<&str> {
    let mut fields: Vec<&str> = line.split(',').map(str::trim).collect();
    if fields.len() > 1 && fields.last() == Some(&"") {
        fields.pop();
    }
    fields
}

fn looks_like_header(line: &str) -> bool {
    let fields = split_fields(line);
    fields.len() == 3 && fields[0].len() == 8 && fields[0][..2].chars().all(|c| c.is_ascii_alphabetic())
}

pub fn parse_header_line(line: &str) -> std::result::Result<StormHeader, String> {
    let fields = split_fields(line);
    if fields.len() != 3 {
        return Err(format!("header must have 3 fields, found {}", fields.len()));
    }
    let id = fields[0].parse::<StormId>()?;
    let declared_entries = fields[2]
        .parse::<usize>()
        .map_err(|_| format!("entry count {:?} is not a non-negative integer", fields[2]))?;
    Ok(StormHeader {
        id,
        name: fields[1].to_string(),
        declared_entries,
    })
}

/// Parses `28.0N` / `94.8W` style tokens into signed degrees. Longitudes are
/// normalized into (-180, 180].
pub fn parse_coordinate(token: &str) -> Result<f64> {
    let token = token.trim();
    let err = |reason| Error::Coordinate {
        token: token.to_string(),
        reason,
    };
    let hemisphere = token.chars().last().ok_or_else(|| err("empty token"))?;
    let magnitude: f64 = token[..token.len() - hemisphere.len_utf8()]
        .parse()
        .map_err(|_| err("magnitude is not a number"))?;
    if !magnitude.is_finite() || magnitude < 0.0 {
        return Err(err("magnitude must be a non-negative number"));
    }
    let value = match hemisphere.to_ascii_uppercase() {
        'N' | 'S' if magnitude > 90.0 => return Err(err("latitude magnitude exceeds 90")),
        'E' | 'W' if magnitude > 360.0 => return Err(err("longitude magnitude exceeds 360")),
        'N' => magnitude,
        'S' => -magnitude,
        'E' => normalize_longitude(magnitude),
        'W' => normalize_longitude(-magnitude),
        _ => return Err(err("missing hemisphere letter (N/S/E/W)")),
    };
    Ok(value + 0.0)
}

fn normalize_longitude(lon: f64) -> f64 {
    let shifted = if lon > 180.0 {
        lon - 360.0
    } else if lon <= -180.0 {
        lon + 360.0
    } else {
        return lon;
    };
    // Keep to the file's tenth-of-a-degree grid so writing and re-reading is exact.
    (shifted * 10.0).round() / 10.0
}

fn parse_measure(field: &str, what: &str) -> std::result::Result<Option<u16>, String> {
    let value: i64 = field
        .parse()
        .map_err(|_| format!("{what} {field:?} is not an integer"))?;
    if value < 0 {
        return Ok(None);
    }
    u16::try_from(value)
        .map(Some)
        .map_err(|_| format!("{what} {value} out of range"))
}

/// Parses a single observation line.
pub fn parse_data_line(line: &str) -> std::result::Result<TrackPoint, String> {
    let fields = split_fields(line);
    if !matches!(fields.len(), 8 | 20 | 21) {
        return Err(format!(
            "data line must have 8, 20 or 21 fields, found {}",
            fields.len()
        ));
    }
    let date = NaiveDate::parse_from_str(fields[0], "%Y%m%d")
        .map_err(|_| format!("bad date {:?}", fields[0]))?;
    if fields[1].len() != 4 {
        return Err(format!("bad time {:?}", fields[1]));
    }
    let time = NaiveTime::parse_from_str(fields[1], "%H%M")
        .map_err(|_| format!("bad time {:?}", fields[1]))?;
    let record_identifier = match fields[2] {
        "" => None,
        s if s.chars().count() == 1 => s.chars().next(),
        s => return Err(format!("record identifier {s:?} must be one character")),
    };
    let status = StatusCode::parse(fields[3]);
    let latitude = parse_coordinate(fields[4]).map_err(|e| e.to_string())?;
    if !matches!(fields[4].chars().last(), Some('N' | 'S' | 'n' | 's')) {
        return Err(format!("latitude {:?} must end in N or S", fields[4]));
    }
    let longitude = parse_coordinate(fields[5]).map_err(|e| e.to_string())?;
    if !matches!(fields[5].chars().last(), Some('E' | 'W' | 'e' | 'w')) {
        return Err(format!("longitude {:?} must end in E or W", fields[5]));
    }
    let max_wind = parse_measure(fields[6], "wind")?;
    let min_pressure = parse_measure(fields[7], "pressure")?;
    let mut radii = [None; RADII_COUNT];
    if fields.len() >= 20 {
        for (slot, (field, name)) in radii.iter_mut().zip(fields[8..20].iter().zip(RADII_NAMES)) {
            *slot = parse_measure(field, name)?;
        }
    }
    let radius_max_wind = match fields.get(20) {
        Some(field) => parse_measure(field, "radius of maximum wind")?,
        None => None,
    };
    Ok(TrackPoint {
        timestamp: NaiveDateTime::new(date, time),
        record_identifier,
        status,
        latitude,
        longitude,
        max_wind,
        min_pressure,
        radii,
        radius_max_wind,
    })
}

/// Streams a HURDAT2 file into storm tracks, in file order.
pub fn parse_file<R: BufRead>(reader: R) -> Result<Vec<StormTrack>> {
    let mut lines = reader.lines().enumerate().map(|(i, l)| (i + 1, l));
    let mut storms = Vec::new();
    let mut last_line;

    while let Some((line_no, line)) = lines.next() {
        let line = line?;
        last_line = line_no;
        if line.trim().is_empty() {
            continue;
        }
        let header = parse_header_line(&line).map_err(|message| Error::Parse {
            line: line_no,
            message: format!("malformed header: {message}"),
        })?;
        let mut points = Vec::with_capacity(header.declared_entries);
        while points.len() < header.declared_entries {
            let Some((line_no, line)) = lines.next() else {
                return Err(Error::Parse {
                    line: last_line + 1,
                    message: format!(
                        "storm {} declares {} entries but the file ends after {}",
                        header.id,
                        header.declared_entries,
                        points.len()
                    ),
                });
            };
            let line = line?;
            last_line = line_no;
            if looks_like_header(&line) {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!(
                        "storm {} declares {} entries but only {} precede the next header",
                        header.id,
                        header.declared_entries,
                        points.len()
                    ),
                });
            }
            let point = parse_data_line(&line).map_err(|message| Error::Parse {
                line: line_no,
                message,
            })?;
            points.push(point);
        }
        if !points.windows(2).all(|w| w[0].timestamp <= w[1].timestamp) {
            log::warn!("storm {} has out-of-order entries; sorting", header.id);
            points.sort_by_key(|p| p.timestamp);
        }
        storms.push(StormTrack { header, points });
    }
    Ok(storms)
}

pub fn parse_str(text: &str) -> Result<Vec<StormTrack>> {
    parse_file(text.as_bytes())
}

pub fn parse_path(path: impl AsRef<std::path::Path>) -> Result<Vec<StormTrack>> {
    let file = std::fs::File::open(path)?;
    parse_file(std::io::BufReader::new(file))
}

fn format_coordinate(value: f64, positive: char, negative: char) -> String {
    if value < 0.0 {
        format!("{:.1}{negative}", -value)
    } else {
        format!("{value:.1}{positive}")
    }
}

fn format_measure(value: Option<u16>, sentinel: i32) -> String {
    value.map_or(sentinel.to_string(), |v| v.to_string())
}

/// Writes tracks back out in the 21-field HURDAT2 layout.
pub fn write_hurdat2<W: Write>(tracks: &[StormTrack], mut out: W) -> Result<()> {
    for track in tracks {
        writeln!(
            out,
            "{},{:>19},{:>7},",
            track.header.id,
            track.header.name,
            track.points.len()
        )?;
        for p in &track.points {
            let mut line = format!(
                "{}, {},{:>2}, {}, {:>5}, {:>6}, {:>3}, {:>4}",
                p.timestamp.format("%Y%m%d"),
                p.timestamp.format("%H%M"),
                p.record_identifier.map_or(String::new(), String::from),
                p.status,
                format_coordinate(p.latitude, 'N', 'S'),
                format_coordinate(p.longitude, 'E', 'W'),
                format_measure(p.max_wind, -99),
                format_measure(p.min_pressure, -999),
            );
            for r in p.radii.iter().chain(std::iter::once(&p.radius_max_wind)) {
                line.push_str(&format!(", {:>4}", format_measure(*r, -999)));
            }
            writeln!(out, "{line},")?;
        }
    }
    Ok(())
}

/// Header of the normalized point CSV.
pub fn csv_header() -> Vec<&'static str> {
    let mut cols = vec![
        "storm_id",
        "name",
        "timestamp",
        "record_identifier",
        "status",
        "latitude",
        "longitude",
        "max_wind",
        "min_pressure",
    ];
    cols.extend(RADII_NAMES);
    cols.push("radius_max_wind");
    cols
}

/// One row per track point, ISO-8601 UTC timestamps, missing values empty.
pub fn export_csv<W: Write>(tracks: &[StormTrack], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(csv_header())?;
    let opt = |v: Option<u16>| v.map_or(String::new(), |v| v.to_string());
    for track in tracks {
        for p in &track.points {
            let mut row = vec![
                track.header.id.to_string(),
                track.header.name.clone(),
                p.timestamp.format("%Y-%m-%dT%H:%M:%SZ").to_string(),
                p.record_identifier.map_or(String::new(), String::from),
                p.status.to_string(),
                format!("{:.1}", p.latitude),
                format!("{:.1}", p.longitude),
                opt(p.max_wind),
                opt(p.min_pressure),
            ];
            row.extend(p.radii.iter().map(|r| opt(*r)));
            row.push(opt(p.radius_max_wind));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads the CSV written by [`export_csv`], grouping consecutive rows with the
/// same storm id into tracks.
pub fn import_csv<R: std::io::Read>(input: R) -> Result<Vec<StormTrack>> {
    let mut reader = csv::Reader::from_reader(input);
    let expected = csv_header();
    let headers = reader.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(Error::Parse {
            line: 1,
            message: format!("CSV header must be: {}", expected.join(",")),
        });
    }
    let mut tracks: Vec<StormTrack> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record?;
        let perr = |message: String| Error::Parse { line, message };
        let id: StormId = record[0].parse().map_err(perr)?;
        let timestamp = NaiveDateTime::parse_from_str(&record[2], "%Y-%m-%dT%H:%M:%SZ")
            .map_err(|e| perr(format!("bad timestamp {:?}: {e}", &record[2])))?;
        let num = |s: &str| -> Result<f64> {
            s.parse()
                .map_err(|_| perr(format!("{s:?} is not a number")))
        };
        let opt = |s: &str, what: &str| -> Result<Option<u16>> {
            if s.is_empty() {
                Ok(None)
            } else {
                parse_measure(s, what).map_err(perr)
            }
        };
        let mut radii = [None; RADII_COUNT];
        for (k, slot) in radii.iter_mut().enumerate() {
            *slot = opt(&record[9 + k], RADII_NAMES[k])?;
        }
        let point = TrackPoint {
            timestamp,
            record_identifier: record[3].chars().next(),
            status: StatusCode::parse(&record[4]),
            latitude: num(&record[5])?,
            longitude: num(&record[6])?,
            max_wind: opt(&record[7], "wind")?,
            min_pressure: opt(&record[8], "pressure")?,
            radii,
            radius_max_wind: opt(&record[21], "radius of maximum wind")?,
        };
        match tracks.last_mut() {
            Some(t) if t.header.id == id => {
                t.points.push(point);
                t.header.declared_entries += 1;
            }
            _ => tracks.push(StormTrack {
                header: StormHeader {
                    id,
                    name: record[1].to_string(),
                    declared_entries: 1,
                },
                points: vec![point],
            }),
        }
    }
    Ok(tracks)
}
