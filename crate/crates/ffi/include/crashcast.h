#ifndef CRASHCAST_H
#define CRASHCAST_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define CCAST_CLASS_CAR 0

#define CCAST_CLASS_BUS 1

#define CCAST_CLASS_PEDESTRIAN 2

#define CCAST_CLASS_OTHER 3

#define CCAST_GATING_INTERSECT_ONLY 0

#define CCAST_GATING_DEVIATION_GATED 1

#define CCAST_PREDICTOR_CONSTANT_VELOCITY 0

#define CCAST_PREDICTOR_LEAST_SQUARES 1

typedef enum CcastStatus {
  CCAST_STATUS_OK = 0,
  CCAST_STATUS_NULL_ARGUMENT = 1,
  CCAST_STATUS_INVALID_CONFIG = 2,
  CCAST_STATUS_INVALID_ARGUMENT = 3,
  CCAST_STATUS_OUT_OF_ORDER = 4,
  CCAST_STATUS_OUT_OF_RANGE = 5,
  CCAST_STATUS_PANIC = 6,
} CcastStatus;

/**
 * Opaque engine handle.
 */
typedef struct CcastEngine CcastEngine;

/**
 * Engine settings. Start from `ccast_config_default()` and adjust.
 */
typedef struct CcastConfig {
  /**
   * States kept per object.
   */
  uint32_t history;
  /**
   * Frames predicted per round.
   */
  uint32_t horizon;
  /**
   * Predictions run on frames divisible by this.
   */
  uint32_t cadence;
  double fps;
  /**
   * `CCAST_GATING_*`.
   */
  uint32_t gating;
  double overlap_margin;
  uint32_t dedup_cooldown;
  /**
   * `CCAST_PREDICTOR_*`.
   */
  uint32_t predictor;
  /**
   * Velocity span for constant velocity, polynomial degree for least squares.
   */
  uint32_t predictor_param;
  double eps_move;
  uint32_t min_obs;
  uint32_t max_gap;
} CcastConfig;

/**
 * Center-size box in pixels.
 */
typedef struct CcastBox {
  double cx;
  double cy;
  double w;
  double h;
} CcastBox;

typedef struct CcastObservation {
  /**
   * NUL-terminated UTF-8.
   */
  const char *object_id;
  /**
   * `CCAST_CLASS_*`; unknown values map to other.
   */
  uint32_t class_label;
  struct CcastBox bbox;
} CcastObservation;

typedef struct CcastAlert {
  uint64_t emitted_at;
  uint64_t predicted_frame;
  uint64_t lead_frames;
  /**
   * Pair members in lexicographic order; owned by the engine.
   */
  const char *id_a;
  const char *id_b;
  uint32_t class_a;
  uint32_t class_b;
  /**
   * Predicted collision location.
   */
  double cx;
  double cy;
} CcastAlert;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Defaults: history 10, horizon 20, cadence 5, 30 fps, intersect-only,
 * constant velocity over 3 steps.
 */
struct CcastConfig ccast_config_default(void);

/**
 * Message for the last failed call on this thread; empty if none. Valid
 * until the next failing call on the same thread.
 */
const char *ccast_last_error(void);

/**
 * # Safety
 * `config` must point to a `CcastConfig`; `out` to writable storage.
 */
enum CcastStatus ccast_engine_new(const struct CcastConfig *config, struct CcastEngine **out);

/**
 * # Safety
 * `engine` must be null or a handle from `ccast_engine_new` not yet freed.
 */
void ccast_engine_free(struct CcastEngine *engine);

/**
 * Feeds one frame. Frames must strictly increase across calls. `n_alerts`
 * (optional) receives the number of alerts raised by this frame.
 *
 * # Safety
 * `observations` must point to `len` valid entries (or be null with `len` 0).
 */
enum CcastStatus ccast_engine_step(struct CcastEngine *engine,
                                   uint64_t frame,
                                   const struct CcastObservation *observations,
                                   size_t len,
                                   size_t *n_alerts);

/**
 * Copies alert `index` of the last step into `out`.
 *
 * # Safety
 * `engine` must be a live handle; `out` writable.
 */
enum CcastStatus ccast_engine_alert(const struct CcastEngine *engine,
                                    size_t index,
                                    struct CcastAlert *out);

/**
 * Anomaly flag of one object as of the last step: 1 anomalous, 0 not, -1 when
 * the object has no matured residuals.
 *
 * # Safety
 * `engine` must be a live handle, `object_id` a NUL-terminated string and
 * `out` writable.
 */
enum CcastStatus ccast_engine_anomaly(const struct CcastEngine *engine,
                                      const char *object_id,
                                      int32_t *out);

/**
 * Inclusive overlap test with `margin` extra pixels per axis. Writes 1 or 0.
 *
 * # Safety
 * `a`, `b` must point to boxes; `out` writable.
 */
enum CcastStatus ccast_boxes_overlap(const struct CcastBox *a,
                                     const struct CcastBox *b,
                                     double margin,
                                     int32_t *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CRASHCAST_H */
