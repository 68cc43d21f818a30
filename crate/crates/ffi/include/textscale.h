#ifndef TEXTSCALE_H
#define TEXTSCALE_H

/* Generated by cbindgen. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum TsStatus {
  TS_STATUS_OK = 0,
  TS_STATUS_NULL_POINTER = 1,
  TS_STATUS_INVALID_UTF8 = 2,
  TS_STATUS_IO = 3,
  TS_STATUS_FORMAT = 4,
  TS_STATUS_INVALID_ARGUMENT = 5,
  TS_STATUS_DIMENSION_MISMATCH = 6,
  TS_STATUS_NUMERICAL = 7,
  TS_STATUS_DATA = 8,
  TS_STATUS_BUFFER_TOO_SMALL = 9,
  TS_STATUS_PANIC = 10,
} TsStatus;

typedef enum TsKernelFamily {
  TS_KERNEL_FAMILY_DISCRETE_GAUSSIAN = 0,
  TS_KERNEL_FAMILY_SAMPLED_GAUSSIAN = 1,
  TS_KERNEL_FAMILY_POISSON = 2,
} TsKernelFamily;

typedef enum TsBoundary {
  TS_BOUNDARY_MIRROR = 0,
  TS_BOUNDARY_RENORMALIZE = 1,
  TS_BOUNDARY_ZERO_PAD = 2,
} TsBoundary;

typedef struct TsGraph TsGraph;

typedef struct TsScaleDistribution TsScaleDistribution;

typedef struct TsSignal TsSignal;

typedef struct TsVocabulary TsVocabulary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next call into this library on the same thread.
 */
const char *ts_last_error_message(void);

/**
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum TsStatus ts_vocabulary_load(const char *path, struct TsVocabulary **out);

/**
 * # Safety
 * `vocab` must be a live handle or null.
 */
size_t ts_vocabulary_len(const struct TsVocabulary *vocab);

/**
 * # Safety
 * `vocab` must come from [`ts_vocabulary_load`] and not be used afterwards.
 */
void ts_vocabulary_free(struct TsVocabulary *vocab);

/**
 * # Safety
 * `path` must be a NUL-terminated string, `vocab` a live handle and `out`
 * a valid pointer.
 */
enum TsStatus ts_graph_load(const char *path,
                            const struct TsVocabulary *vocab,
                            struct TsGraph **out);

/**
 * # Safety
 * `graph` must be a live handle or null.
 */
size_t ts_graph_edge_count(const struct TsGraph *graph);

/**
 * # Safety
 * `graph` must come from [`ts_graph_load`] and not be used afterwards.
 */
void ts_graph_free(struct TsGraph *graph);

/**
 * Copies a row-major `rows` by `cols` array into a new signal.
 *
 * # Safety
 * `values` must point to `rows * cols` doubles and `out` be a valid
 * pointer.
 */
enum TsStatus ts_signal_new(const double *values, size_t rows, size_t cols, struct TsSignal **out);

/**
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum TsStatus ts_signal_load(const char *path, struct TsSignal **out);

/**
 * # Safety
 * `signal` must be a live handle and `path` a NUL-terminated string.
 */
enum TsStatus ts_signal_save(const struct TsSignal *signal, const char *path);

/**
 * # Safety
 * `signal` must be a live handle; `rows` and `cols` valid pointers.
 */
enum TsStatus ts_signal_shape(const struct TsSignal *signal, size_t *rows, size_t *cols);

/**
 * Copies the values row-major into `buffer` of `capacity` doubles.
 *
 * # Safety
 * `signal` must be a live handle and `buffer` point to `capacity` doubles.
 */
enum TsStatus ts_signal_values(const struct TsSignal *signal, double *buffer, size_t capacity);

/**
 * # Safety
 * `signal` must come from this library and not be used afterwards.
 */
void ts_signal_free(struct TsSignal *signal);

/**
 * Smooths at `(sx, sy)`. With a null `graph` the semantic axis is left
 * unchanged; otherwise the distance kernel of the graph is applied.
 *
 * # Safety
 * `signal` must be a live handle, `graph` a live handle or null, and `out`
 * a valid pointer.
 */
enum TsStatus ts_smooth(const struct TsSignal *signal,
                        const struct TsGraph *graph,
                        double sx,
                        double sy,
                        enum TsKernelFamily family,
                        enum TsBoundary boundary,
                        double trunc_mass,
                        struct TsSignal **out);

/**
 * Writes the taps of a smoothing kernel into `buffer`. `len` receives the
 * tap count and `center` the index of the zero-displacement tap; when the
 * buffer is too small only those two are written.
 *
 * # Safety
 * `buffer` must point to `capacity` doubles (or be null with capacity 0);
 * `len` and `center` must be valid pointers.
 */
enum TsStatus ts_kernel_taps(enum TsKernelFamily family,
                             double s,
                             double trunc_mass,
                             double *buffer,
                             size_t capacity,
                             size_t *len,
                             size_t *center);

/**
 * Learns the scale distribution from a row-major `rows` by `cols` margin
 * table over the ascending `scales`. The result is l2-normalized.
 *
 * # Safety
 * `margins` must point to `rows * cols` doubles, `scales` to `cols`
 * doubles, and `out` be a valid pointer.
 */
enum TsStatus ts_learn_scale_distribution(const double *margins,
                                          size_t rows,
                                          size_t cols,
                                          const double *scales,
                                          struct TsScaleDistribution **out);

/**
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum TsStatus ts_distribution_load(const char *path, struct TsScaleDistribution **out);

/**
 * # Safety
 * `dist` must be a live handle and `path` a NUL-terminated string.
 */
enum TsStatus ts_distribution_save(const struct TsScaleDistribution *dist, const char *path);

/**
 * # Safety
 * `dist` must be a live handle or null.
 */
size_t ts_distribution_len(const struct TsScaleDistribution *dist);

/**
 * Copies scales and weights into two buffers of `capacity` doubles each.
 *
 * # Safety
 * `dist` must be a live handle; `scales` and `weights` must each point to
 * `capacity` doubles.
 */
enum TsStatus ts_distribution_values(const struct TsScaleDistribution *dist,
                                     double *scales,
                                     double *weights,
                                     size_t capacity);

/**
 * # Safety
 * `dist` must come from this library and not be used afterwards.
 */
void ts_distribution_free(struct TsScaleDistribution *dist);

/**
 * MAP, P@5 and P@10 of a TREC run file against a qrels file.
 *
 * # Safety
 * Paths must be NUL-terminated strings; outputs must be valid pointers.
 */
enum TsStatus ts_eval_run(const char *qrels_path,
                          const char *run_path,
                          double *map,
                          double *p5,
                          double *p10);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TEXTSCALE_H */
