#ifndef CYCLONE_H
#define CYCLONE_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes are at most a few ASCII letters; longer ones are truncated.
 */
#define CYCLONE_STATUS_LEN 8

typedef enum {
  CYCLONE_STATUS_OK = 0,
  CYCLONE_STATUS_NULL_POINTER = 1,
  CYCLONE_STATUS_INVALID_UTF8 = 2,
  CYCLONE_STATUS_IO = 3,
  CYCLONE_STATUS_PARSE = 4,
  CYCLONE_STATUS_INVALID_INPUT = 5,
  CYCLONE_STATUS_NOT_FOUND = 6,
  CYCLONE_STATUS_MODEL = 7,
  CYCLONE_STATUS_PANIC = 8,
} CycloneStatus;

/**
 * Trained model set loaded from an artifact directory.
 */
typedef struct CycloneModel CycloneModel;

/**
 * Parsed best-track file.
 */
typedef struct CycloneTracks CycloneTracks;

/**
 * Forecast for the step after a track prefix.
 */
typedef struct {
  /**
   * Index within the storm of the forecast point.
   */
  size_t target_index;
  double latitude;
  double longitude;
  double wind_kt;
  double pressure_mb;
  /**
   * Displacement from the last observation, normalized grid units.
   */
  double length;
  /**
   * Radians clockwise from north.
   */
  double direction;
  /**
   * NUL-terminated status codes from each classifier.
   */
  char status_rf[CYCLONE_STATUS_LEN];
  char status_svm[CYCLONE_STATUS_LEN];
  char status_mlp[CYCLONE_STATUS_LEN];
} CycloneForecast;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread, or null after a
 * success. Valid until the next call into this library on the same thread.
 */
const char *cyclone_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *cyclone_version(void);

/**
 * Parses a HURDAT2 file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a writable pointer.
 */
CycloneStatus cyclone_tracks_parse(const char *path, CycloneTracks **out);

/**
 * Parses HURDAT2 text held in memory.
 *
 * # Safety
 * `contents` must be a NUL-terminated string and `out` a writable pointer.
 */
CycloneStatus cyclone_tracks_parse_str(const char *contents, CycloneTracks **out);

/**
 * # Safety
 * `tracks` must come from a parse call and not be freed; `out` writable.
 */
CycloneStatus cyclone_tracks_storm_count(const CycloneTracks *tracks, size_t *out);

/**
 * Total observation lines across all storms.
 *
 * # Safety
 * As for [`cyclone_tracks_storm_count`].
 */
CycloneStatus cyclone_tracks_point_count(const CycloneTracks *tracks, size_t *out);

/**
 * Writes the id of storm `index` (e.g. `AL122005`) with a trailing NUL.
 * `buf_len` must be at least 9.
 *
 * # Safety
 * `tracks` as above; `buf` must hold `buf_len` bytes.
 */
CycloneStatus cyclone_tracks_storm_id(const CycloneTracks *tracks,
                                      size_t index,
                                      char *buf,
                                      size_t buf_len);

/**
 * # Safety
 * `tracks` must be null or a handle not yet freed.
 */
void cyclone_tracks_free(CycloneTracks *tracks);

/**
 * Loads the model directory written by `cyclone train`.
 *
 * # Safety
 * `dir` must be a NUL-terminated string and `out` a writable pointer.
 */
CycloneStatus cyclone_model_load(const char *dir, CycloneModel **out);

/**
 * Forecasts the step after the last observation of `storm_id` in
 * `tracks`. The storm's final observations must cover the model's window.
 *
 * # Safety
 * Handles must be live; `storm_id` NUL-terminated; `out` writable.
 */
CycloneStatus cyclone_model_forecast_next(const CycloneModel *model,
                                          const CycloneTracks *tracks,
                                          const char *storm_id,
                                          CycloneForecast *out);

/**
 * # Safety
 * `model` must be null or a handle not yet freed.
 */
void cyclone_model_free(CycloneModel *model);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CYCLONE_H */
