//! Exercises the C ABI from Rust: handle lifecycles, error reporting and a
//! forecast through a freshly trained artifact.

use std::ffi::{c_char, CStr, CString};
use std::fmt::Write as _;
use std::ptr;

use cyclone_core::artifact::save_models;
use cyclone_core::config::RunConfig;
use cyclone_core::forest::RfConfig;
use cyclone_core::gbr::GbrConfig;
use cyclone_core::hurdat2::parse_str;
use cyclone_core::mlp::MlpConfig;
use cyclone_core::workflow::train;
use cyclone_ffi::*;

fn last_error() -> String {
    let p = cyclone_last_error();
    assert!(!p.is_null(), "expected an error message");
    unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_string()
}

/// Deterministic HURDAT2 text: storms that strengthen, peak and decay while
/// drifting north-west, with extratropical transition at high latitude.
fn corpus(n_storms: usize) -> String {
    let mut s = String::new();
    for k in 0..n_storms {
        let n = 16 + (k * 7) % 15;
        let peak = 40.0 + ((k * 37) % 100) as f64;
        writeln!(s, "AL{:02}{},{:>19},{:>7},", k % 30 + 1, 2000 + k / 30, "TEST", n).unwrap();
        for t in 0..n {
            let phase = t as f64 / (n - 1) as f64;
            let wind = (25.0 + (peak - 25.0) * (std::f64::consts::PI * phase).sin()).round();
            let lat = 12.0 + (k % 5) as f64 + 1.1 * t as f64;
            let lon = 40.0 + (k % 7) as f64 + 1.3 * t as f64 - 0.04 * (t * t) as f64;
            let status = if t + 3 >= n && lat > 30.0 {
                "EX"
            } else if wind < 34.0 {
                "TD"
            } else if wind < 64.0 {
                "TS"
            } else {
                "HU"
            };
            let pressure = (1012.0 - 0.9 * (wind - 25.0)).round();
            let day = 1 + t / 4;
            let hour = (t % 4) * 6;
            let mut line = format!(
                "200{}08{:02}, {:02}00,  , {status}, {lat:.1}N, {lon:.1}W, {wind:>3}, {pressure:>4}",
                k % 10,
                day,
                hour
            );
            for (band, threshold) in [34.0, 50.0, 64.0].into_iter().enumerate() {
                let r = if wind >= threshold { 20.0 + 2.0 * (wind - threshold) + (t % 3) as f64 * 5.0 } else { 0.0 };
                for q in 0..4 {
                    write!(line, ", {:>4}", (r * [1.2, 1.0, 0.7, 0.9][q] / (band + 1) as f64).round()).unwrap();
                }
            }
            line.push_str(&format!(", {:>4}", 15 + t % 20));
            writeln!(s, "{line},").unwrap();
        }
    }
    s
}

unsafe fn parse(text: &str) -> *mut CycloneTracks {
    let c = CString::new(text).unwrap();
    let mut tracks = ptr::null_mut();
    assert_eq!(cyclone_tracks_parse_str(c.as_ptr(), &mut tracks), CycloneStatus::Ok);
    assert!(!tracks.is_null());
    tracks
}

#[test]
fn tracks_counts_and_ids() {
    unsafe {
        let tracks = parse(&corpus(3));
        let (mut storms, mut points) = (0usize, 0usize);
        assert_eq!(cyclone_tracks_storm_count(tracks, &mut storms), CycloneStatus::Ok);
        assert_eq!(cyclone_tracks_point_count(tracks, &mut points), CycloneStatus::Ok);
        assert_eq!(storms, 3);
        assert_eq!(points, 16 + 23 + 30);
        let mut buf = [0 as c_char; 9];
        assert_eq!(cyclone_tracks_storm_id(tracks, 1, buf.as_mut_ptr(), buf.len()), CycloneStatus::Ok);
        assert_eq!(CStr::from_ptr(buf.as_ptr()).to_str().unwrap(), "AL022000");
        assert!(cyclone_last_error().is_null());
        assert_eq!(cyclone_tracks_storm_id(tracks, 1, buf.as_mut_ptr(), 8), CycloneStatus::InvalidInput);
        assert_eq!(cyclone_tracks_storm_id(tracks, 3, buf.as_mut_ptr(), 9), CycloneStatus::NotFound);
        assert!(last_error().contains("out of range"));
        cyclone_tracks_free(tracks);
        cyclone_tracks_free(ptr::null_mut());
    }
}

#[test]
fn errors_are_reported() {
    unsafe {
        let mut tracks = ptr::null_mut();
        assert_eq!(cyclone_tracks_parse(ptr::null(), &mut tracks), CycloneStatus::NullPointer);
        let missing = CString::new("/nonexistent/hurdat2.txt").unwrap();
        assert_eq!(cyclone_tracks_parse(missing.as_ptr(), &mut tracks), CycloneStatus::NotFound);
        assert!(tracks.is_null());
        let bad = CString::new("AL012000,              TEST,      1,\n20000801, 0000,  , TS, 91.0N, 40.0W,  50, 1000,\n").unwrap();
        assert_eq!(cyclone_tracks_parse_str(bad.as_ptr(), &mut tracks), CycloneStatus::Parse);
        assert!(last_error().contains("line 2"), "{}", last_error());
        let invalid = [0xffu8 as c_char, 0];
        assert_eq!(cyclone_tracks_parse_str(invalid.as_ptr(), &mut tracks), CycloneStatus::InvalidUtf8);
        assert_eq!(cyclone_tracks_storm_count(ptr::null(), ptr::null_mut()), CycloneStatus::NullPointer);
        let mut model = ptr::null_mut();
        let dir = tempfile::tempdir().unwrap();
        let d = CString::new(dir.path().to_str().unwrap()).unwrap();
        assert_eq!(cyclone_model_load(d.as_ptr(), &mut model), CycloneStatus::Model);
        assert!(model.is_null());
        let version = CStr::from_ptr(cyclone_version()).to_str().unwrap();
        assert_eq!(version, env!("CARGO_PKG_VERSION"));
    }
}

#[test]
fn forecast_through_loaded_model() {
    let text = corpus(60);
    let cfg = RunConfig {
        holdout: None,
        gbr: GbrConfig { n_stages: 20, ..GbrConfig::default() },
        rf: RfConfig { n_trees: 10, ..RfConfig::default() },
        mlp: MlpConfig { hidden: vec![8], epochs: 5, ..MlpConfig::default() },
        ..RunConfig::default()
    };
    let trained = train(&cfg, &parse_str(&text).unwrap()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    save_models(dir.path(), &trained.models, serde_json::Value::Null).unwrap();
    unsafe {
        let d = CString::new(dir.path().to_str().unwrap()).unwrap();
        let mut model = ptr::null_mut();
        assert_eq!(cyclone_model_load(d.as_ptr(), &mut model), CycloneStatus::Ok, "{:?}", cyclone_last_error());
        let tracks = parse(&text);
        let id = CString::new("AL052000").unwrap();
        let mut f: CycloneForecast = std::mem::zeroed();
        assert_eq!(cyclone_model_forecast_next(model, tracks, id.as_ptr(), &mut f), CycloneStatus::Ok, "{}", last_error());
        assert!(f.latitude.is_finite() && f.longitude.is_finite() && f.wind_kt.is_finite());
        assert!((-90.0..=90.0).contains(&f.latitude));
        let rf = CStr::from_ptr(f.status_rf.as_ptr()).to_str().unwrap();
        assert!(["TD", "TS", "HU", "EX"].contains(&rf), "{rf}");
        let mut again: CycloneForecast = std::mem::zeroed();
        cyclone_model_forecast_next(model, tracks, id.as_ptr(), &mut again);
        assert_eq!(f.latitude.to_bits(), again.latitude.to_bits());

        let absent = CString::new("EP012000").unwrap();
        assert_eq!(cyclone_model_forecast_next(model, tracks, absent.as_ptr(), &mut f), CycloneStatus::NotFound);
        let junk = CString::new("nope").unwrap();
        assert_eq!(cyclone_model_forecast_next(model, tracks, junk.as_ptr(), &mut f), CycloneStatus::InvalidInput);
        cyclone_tracks_free(tracks);
        cyclone_model_free(model);
    }
}
