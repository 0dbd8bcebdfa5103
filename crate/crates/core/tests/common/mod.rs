//! Seeded synthetic best-track corpus with realistic life cycles: genesis as
//! a depression, intensification, recurvature and extratropical decay.
#![allow(dead_code)]

use chrono::{Duration, NaiveDate, NaiveDateTime};
use cyclone_core::config::RunConfig;
use cyclone_core::forest::RfConfig;
use cyclone_core::gbr::GbrConfig;
use cyclone_core::hurdat2::{Basin, StatusCode, StormHeader, StormId, StormTrack, TrackPoint, RADII_COUNT};
use cyclone_core::mlp::MlpConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn status_for(wind: f64, t: usize, n: usize, lat: f64, subtropical: bool, genesis_low: bool) -> StatusCode {
    if genesis_low && t < 2 {
        return StatusCode::LO;
    }
    if t + 3 >= n && lat > 33.0 {
        return StatusCode::EX;
    }
    match (subtropical, wind) {
        (true, w) if w < 34.0 => StatusCode::SD,
        (true, w) if w < 50.0 => StatusCode::SS,
        (_, w) if w < 34.0 => StatusCode::TD,
        (_, w) if w < 64.0 => StatusCode::TS,
        _ => StatusCode::HU,
    }
}

fn radii(wind: f64, rng: &mut ChaCha8Rng) -> [Option<u16>; RADII_COUNT] {
    let quad = [1.2, 1.0, 0.7, 0.9];
    let mut r = [Some(0); RADII_COUNT];
    for (band, threshold) in [34.0, 50.0, 64.0].iter().enumerate() {
        if wind >= *threshold {
            let base = 20.0 + 2.2 * (wind - threshold) + rng.random_range(0.0..10.0);
            for q in 0..4 {
                r[band * 4 + q] = Some((base * quad[q] / (band as f64 + 1.0)).round() as u16);
            }
        }
    }
    r
}

pub fn storm(number: u8, year: i32, name: &str, n: usize, rng: &mut ChaCha8Rng, extras: usize, gap: bool) -> StormTrack {
    let start = NaiveDate::from_ymd_opt(year, rng.random_range(7..=10), rng.random_range(1..=28))
        .unwrap()
        .and_hms_opt(6 * rng.random_range(0..4), 0, 0)
        .unwrap();
    let peak: f64 = rng.random_range(15.0..125.0);
    let subtropical = number % 11 == 3;
    let genesis_low = number.is_multiple_of(3);
    let mut lat: f64 = rng.random_range(11.0..21.0);
    let mut lon: f64 = rng.random_range(-62.0..-28.0);
    let speed: f64 = rng.random_range(0.4..1.1);
    let mut points = Vec::new();
    let mut added = 0;
    for t in 0..n {
        let frac = t as f64 / n as f64;
        let wind_raw = 22.0 + peak * (std::f64::consts::PI * frac).sin().powf(1.5) + rng.random_range(-3.0..3.0);
        let wind = (wind_raw / 5.0).round() * 5.0;
        let pressure = 1012.0 - 0.9 * (wind - 25.0) - 0.006 * (wind - 25.0).powi(2) + rng.random_range(-2.0..2.0);
        let bearing = (290.0 + 120.0 * frac * frac).to_radians();
        let ts: NaiveDateTime = start + Duration::hours(6 * t as i64);
        if !(gap && t == n / 2) {
            points.push(TrackPoint {
                timestamp: ts,
                record_identifier: None,
                status: status_for(wind, t, n, lat, subtropical, genesis_low),
                latitude: (lat * 10.0).round() / 10.0,
                longitude: (lon * 10.0).round() / 10.0,
                max_wind: Some(wind.max(15.0) as u16),
                min_pressure: Some(pressure.round() as u16),
                radii: radii(wind, rng),
                radius_max_wind: Some(rng.random_range(10..60)),
            });
            if added < extras && t % 7 == 3 {
                added += 1;
                let mut special = points.last().unwrap().clone();
                special.timestamp = ts + Duration::minutes(150);
                special.record_identifier = Some('L');
                points.push(special);
            }
        }
        lat += speed * bearing.cos() + rng.random_range(-0.05..0.05);
        lon += speed * bearing.sin() / lat.to_radians().cos() + rng.random_range(-0.05..0.05);
    }
    StormTrack {
        header: StormHeader {
            id: StormId { basin: Basin::Atlantic, number, year },
            name: name.to_string(),
            declared_entries: points.len(),
        },
        points,
    }
}

/// `n_storms` storms plus an `AL122005` with 31 synoptic and 3 special entries.
pub fn synthetic_tracks(n_storms: usize, seed: u64) -> Vec<StormTrack> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tracks = Vec::new();
    for k in 0..n_storms {
        let year = 2004 + (k / 20) as i32;
        let number = (k % 20) as u8 + 1;
        if year == 2005 && number == 12 {
            continue;
        }
        let n = rng.random_range(18..42);
        tracks.push(storm(number, year, "SYNTH", n, &mut rng, 0, k % 10 == 7));
    }
    let katrina = storm(12, 2005, "KATRINA", 31, &mut rng, 3, false);
    assert_eq!(katrina.points.len(), 34);
    tracks.push(katrina);
    tracks.sort_by_key(|t| (t.header.id.year, t.header.id.number));
    tracks
}

/// Small models so full runs take seconds.
pub fn small_config() -> RunConfig {
    RunConfig {
        gbr: GbrConfig { n_stages: 40, ..GbrConfig::default() },
        rf: RfConfig { n_trees: 20, ..RfConfig::default() },
        mlp: MlpConfig { hidden: vec![16, 8], epochs: 15, ..MlpConfig::default() },
        ..RunConfig::default()
    }
}
