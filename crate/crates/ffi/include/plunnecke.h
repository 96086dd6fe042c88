#ifndef PLUNNECKE_H
#define PLUNNECKE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum PlkStatus {
  PLK_STATUS_OK = 0,
  PLK_STATUS_NULL_POINTER = 1,
  PLK_STATUS_INVALID_ARGUMENT = 2,
  PLK_STATUS_OUT_OF_WINDOW = 3,
  PLK_STATUS_PARSE = 4,
  PLK_STATUS_GUARD_EXCEEDED = 5,
  PLK_STATUS_HYPOTHESIS = 6,
  /*
   A checked inequality failed; the report is still written.
   */
  PLK_STATUS_VIOLATION = 7,
  PLK_STATUS_INTERNAL = 8,
  PLK_STATUS_PANIC = 9,
} PlkStatus;

/*
 Opaque point set on a finite window `[0,w) x [0,h)`.
 */
typedef struct PlkPointSet PlkPointSet;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message for the last failed call on this thread. Valid until the next
 failing call; never null.
 */
const char *plk_last_error(void);

/*
 # Safety
 `s` must come from this library or be null.
 */
void plk_string_free(char *s);

/*
 Empty set on `[0,w) x [0,h)`.

 # Safety
 `out` must be writable.
 */
enum PlkStatus plk_pointset_new(size_t w, size_t h, struct PlkPointSet **out);

/*
 Parses `{"w":..,"h":..,"points":[[x,y],..]}`.

 # Safety
 `json` must be a NUL-terminated string, `out` writable.
 */
enum PlkStatus plk_pointset_from_json(const char *json, struct PlkPointSet **out);

/*
 # Safety
 `set` must be a live handle, `out` writable.
 */
enum PlkStatus plk_pointset_to_json(const struct PlkPointSet *set, char **out);

/*
 # Safety
 `set` must come from this library or be null; it is invalid afterwards.
 */
void plk_pointset_free(struct PlkPointSet *set);

/*
 # Safety
 `set` must be a live handle.
 */
enum PlkStatus plk_pointset_insert(struct PlkPointSet *set, size_t x, size_t y);

/*
 Writes 1 to `out` if `(x,y)` is in the set, else 0.

 # Safety
 `set` must be a live handle, `out` writable.
 */
enum PlkStatus plk_pointset_contains(const struct PlkPointSet *set,
                                     size_t x,
                                     size_t y,
                                     int32_t *out);

/*
 Number of points; 0 for a null handle.

 # Safety
 `set` must be a live handle or null.
 */
size_t plk_pointset_len(const struct PlkPointSet *set);

/*
 `A + B` clipped to the window of `a`. Both sets must share a window.

 # Safety
 `a`, `b` must be live handles, `out` writable.
 */
enum PlkStatus plk_sumset(const struct PlkPointSet *a,
                          const struct PlkPointSet *b,
                          struct PlkPointSet **out);

/*
 Exact `σ_{N,M}(A)` as a decimal ratio string such as `"3/4"`.

 # Safety
 `set` must be a live handle, `out` writable.
 */
enum PlkStatus plk_schnirelmann(const struct PlkPointSet *set, size_t n, size_t m, char **out);

/*
 Least density over tableau regions with at most `l` boxes, corners above
 `r` on the `stride` lattice inside `extent_w x extent_h` (0 for the set's
 extent). Writes the estimate as JSON.

 # Safety
 `set` must be a live handle, `out` writable.
 */
enum PlkStatus plk_tab_lower_estimate(const struct PlkPointSet *set,
                                      uint64_t r,
                                      size_t l,
                                      uint64_t stride,
                                      uint64_t extent_w,
                                      uint64_t extent_h,
                                      char **out);

/*
 Closed-form rectangle and tableau densities of a fractal pattern given as
 `{"n":..,"points":[[x,y],..]}`. Writes `{"rect_density","tab_density"}`.

 # Safety
 `pattern_json` must be NUL-terminated, `out` writable.
 */
enum PlkStatus plk_fractal_densities(const char *pattern_json, char **out);

/*
 Replays the density argument for a pipeline config. Writes the trace as
 JSON and returns `Violation` if any checked step fails.

 # Safety
 `config_json` must be NUL-terminated, `out` writable.
 */
enum PlkStatus plk_pipeline_replay(const char *config_json, char **out);

/*
 Runs `budget` instances (0 for all remaining) of a σ-inequality search
 from `cursor`. Writes the report as JSON; `Violation` if any was found.

 # Safety
 `config_json` must be NUL-terminated, `out` writable.
 */
enum PlkStatus plk_search_schnirelmann(const char *config_json,
                                       uint64_t cursor,
                                       uint64_t budget,
                                       char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PLUNNECKE_H */
