//! C ABI over `cyclone-core`.
//!
//! Handles are opaque pointers created by `*_parse` / `*_load` and released
//! with the matching `*_free`. Every fallible call returns a
//! [`CycloneStatus`]; on failure [`cyclone_last_error`] describes the cause.
//! No panic crosses the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use cyclone_core::artifact::load_models;
use cyclone_core::hurdat2::{parse_path, parse_str, StatusCode, StormId, StormTrack};
use cyclone_core::pipeline::{forecast_next, Models};
use cyclone_core::preprocess::{clean, CleanOptions};
use cyclone_core::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CycloneStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Parse = 4,
    InvalidInput = 5,
    NotFound = 6,
    Model = 7,
    Panic = 8,
}

/// Parsed best-track file.
pub struct CycloneTracks {
    tracks: Vec<StormTrack>,
}

/// Trained model set loaded from an artifact directory.
pub struct CycloneModel {
    models: Models,
}

/// Status codes are at most a few ASCII letters; longer ones are truncated.
pub const CYCLONE_STATUS_LEN: usize = 8;

/// Forecast for the step after a track prefix.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct CycloneForecast {
    /// Index within the storm of the forecast point.
    pub target_index: usize,
    pub latitude: f64,
    pub longitude: f64,
    pub wind_kt: f64,
    pub pressure_mb: f64,
    /// Displacement from the last observation, normalized grid units.
    pub length: f64,
    /// Radians clockwise from north.
    pub direction: f64,
    /// NUL-terminated status codes from each classifier.
    pub status_rf: [c_char; CYCLONE_STATUS_LEN],
    pub status_svm: [c_char; CYCLONE_STATUS_LEN],
    pub status_mlp: [c_char; CYCLONE_STATUS_LEN],
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: CycloneStatus, message: impl Into<String>) -> CycloneStatus {
    set_error(message.into());
    status
}

fn status_of(error: &Error) -> CycloneStatus {
    match error {
        Error::Parse { .. } | Error::Coordinate { .. } | Error::Csv(_) => CycloneStatus::Parse,
        Error::Io(e) if e.kind() == std::io::ErrorKind::NotFound => CycloneStatus::NotFound,
        Error::Io(_) => CycloneStatus::Io,
        Error::UnknownStorm(_) => CycloneStatus::NotFound,
        Error::Artifact(_) | Error::Json(_) => CycloneStatus::Model,
        _ => CycloneStatus::InvalidInput,
    }
}

fn from_core(error: Error) -> CycloneStatus {
    fail(status_of(&error), error.to_string())
}

/// Runs `f`, turning a panic into [`CycloneStatus::Panic`].
fn guard(f: impl FnOnce() -> CycloneStatus) -> CycloneStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => {
            if status == CycloneStatus::Ok {
                LAST_ERROR.with(|e| *e.borrow_mut() = None);
            }
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            fail(CycloneStatus::Panic, format!("internal panic: {msg}"))
        }
    }
}

/// # Safety
/// `s` must be null or a valid NUL-terminated string.
unsafe fn text<'a>(s: *const c_char, what: &str) -> Result<&'a str, CycloneStatus> {
    if s.is_null() {
        return Err(fail(CycloneStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| fail(CycloneStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

fn write_status(slot: &mut [c_char; CYCLONE_STATUS_LEN], code: &StatusCode) {
    *slot = [0; CYCLONE_STATUS_LEN];
    for (dst, b) in slot.iter_mut().zip(code.as_str().bytes().take(CYCLONE_STATUS_LEN - 1)) {
        *dst = b as c_char;
    }
}

/// Message for the most recent failure on this thread, or null after a
/// success. Valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn cyclone_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn cyclone_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

fn store_tracks(tracks: Vec<StormTrack>, out: *mut *mut CycloneTracks) -> CycloneStatus {
    // SAFETY: caller guarantees `out` is writable; checked non-null.
    unsafe { *out = Box::into_raw(Box::new(CycloneTracks { tracks })) };
    CycloneStatus::Ok
}

/// Parses a HURDAT2 file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn cyclone_tracks_parse(path: *const c_char, out: *mut *mut CycloneTracks) -> CycloneStatus {
    guard(|| {
        if out.is_null() {
            return fail(CycloneStatus::NullPointer, "out is null");
        }
        let path = match text(path, "path") {
            Ok(p) => p,
            Err(s) => return s,
        };
        match parse_path(path) {
            Ok(t) => store_tracks(t, out),
            Err(e) => from_core(e),
        }
    })
}

/// Parses HURDAT2 text held in memory.
///
/// # Safety
/// `contents` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn cyclone_tracks_parse_str(
    contents: *const c_char,
    out: *mut *mut CycloneTracks,
) -> CycloneStatus {
    guard(|| {
        if out.is_null() {
            return fail(CycloneStatus::NullPointer, "out is null");
        }
        let contents = match text(contents, "contents") {
            Ok(c) => c,
            Err(s) => return s,
        };
        match parse_str(contents) {
            Ok(t) => store_tracks(t, out),
            Err(e) => from_core(e),
        }
    })
}

/// # Safety
/// `tracks` must come from a parse call and not be freed; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cyclone_tracks_storm_count(tracks: *const CycloneTracks, out: *mut usize) -> CycloneStatus {
    guard(|| match (tracks.as_ref(), out.is_null()) {
        (Some(t), false) => {
            *out = t.tracks.len();
            CycloneStatus::Ok
        }
        _ => fail(CycloneStatus::NullPointer, "tracks or out is null"),
    })
}

/// Total observation lines across all storms.
///
/// # Safety
/// As for [`cyclone_tracks_storm_count`].
#[no_mangle]
pub unsafe extern "C" fn cyclone_tracks_point_count(tracks: *const CycloneTracks, out: *mut usize) -> CycloneStatus {
    guard(|| match (tracks.as_ref(), out.is_null()) {
        (Some(t), false) => {
            *out = t.tracks.iter().map(|s| s.points.len()).sum();
            CycloneStatus::Ok
        }
        _ => fail(CycloneStatus::NullPointer, "tracks or out is null"),
    })
}

/// Writes the id of storm `index` (e.g. `AL122005`) with a trailing NUL.
/// `buf_len` must be at least 9.
///
/// # Safety
/// `tracks` as above; `buf` must hold `buf_len` bytes.
#[no_mangle]
pub unsafe extern "C" fn cyclone_tracks_storm_id(
    tracks: *const CycloneTracks,
    index: usize,
    buf: *mut c_char,
    buf_len: usize,
) -> CycloneStatus {
    guard(|| {
        let Some(t) = tracks.as_ref() else {
            return fail(CycloneStatus::NullPointer, "tracks is null");
        };
        if buf.is_null() {
            return fail(CycloneStatus::NullPointer, "buf is null");
        }
        let Some(storm) = t.tracks.get(index) else {
            return fail(CycloneStatus::NotFound, format!("storm index {index} out of range ({})", t.tracks.len()));
        };
        let id = storm.id().to_string();
        if buf_len < id.len() + 1 {
            return fail(CycloneStatus::InvalidInput, format!("buffer of {buf_len} bytes cannot hold {id}"));
        }
        ptr::copy_nonoverlapping(id.as_ptr().cast::<c_char>(), buf, id.len());
        *buf.add(id.len()) = 0;
        CycloneStatus::Ok
    })
}

/// # Safety
/// `tracks` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cyclone_tracks_free(tracks: *mut CycloneTracks) {
    if !tracks.is_null() {
        drop(Box::from_raw(tracks));
    }
}

/// Loads the model directory written by `cyclone train`.
///
/// # Safety
/// `dir` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn cyclone_model_load(dir: *const c_char, out: *mut *mut CycloneModel) -> CycloneStatus {
    guard(|| {
        if out.is_null() {
            return fail(CycloneStatus::NullPointer, "out is null");
        }
        let dir = match text(dir, "dir") {
            Ok(d) => d,
            Err(s) => return s,
        };
        match load_models(Path::new(dir)) {
            Ok(models) => {
                *out = Box::into_raw(Box::new(CycloneModel { models }));
                CycloneStatus::Ok
            }
            Err(e) => from_core(e),
        }
    })
}

/// Forecasts the step after the last observation of `storm_id` in
/// `tracks`. The storm's final observations must cover the model's window.
///
/// # Safety
/// Handles must be live; `storm_id` NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cyclone_model_forecast_next(
    model: *const CycloneModel,
    tracks: *const CycloneTracks,
    storm_id: *const c_char,
    out: *mut CycloneForecast,
) -> CycloneStatus {
    guard(|| {
        let (Some(m), Some(t)) = (model.as_ref(), tracks.as_ref()) else {
            return fail(CycloneStatus::NullPointer, "model or tracks is null");
        };
        if out.is_null() {
            return fail(CycloneStatus::NullPointer, "out is null");
        }
        let raw = match text(storm_id, "storm_id") {
            Ok(s) => s,
            Err(s) => return s,
        };
        let id: StormId = match raw.parse() {
            Ok(id) => id,
            Err(e) => return fail(CycloneStatus::InvalidInput, e),
        };
        let Some(track) = t.tracks.iter().find(|s| s.id() == id) else {
            return fail(CycloneStatus::NotFound, format!("storm {id} is not in the parsed tracks"));
        };
        let opts = CleanOptions { min_points: 1, ..CleanOptions::default() };
        let Some(cleaned) = clean(std::slice::from_ref(track), opts).pop() else {
            return fail(CycloneStatus::InvalidInput, format!("storm {id} has no usable observations"));
        };
        let scaled = m.models.scalers.apply_storm(&cleaned);
        let step = match forecast_next(&m.models, &scaled) {
            Ok(s) => s,
            Err(e) => return from_core(e),
        };
        let mut f = CycloneForecast {
            target_index: step.target_index,
            latitude: step.latitude,
            longitude: step.longitude,
            wind_kt: step.wind_kt,
            pressure_mb: step.pressure_mb,
            length: step.length,
            direction: step.direction,
            status_rf: [0; CYCLONE_STATUS_LEN],
            status_svm: [0; CYCLONE_STATUS_LEN],
            status_mlp: [0; CYCLONE_STATUS_LEN],
        };
        write_status(&mut f.status_rf, &step.status.rf);
        write_status(&mut f.status_svm, &step.status.svm);
        write_status(&mut f.status_mlp, &step.status.mlp);
        *out = f;
        CycloneStatus::Ok
    })
}

/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cyclone_model_free(model: *mut CycloneModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}
