#ifndef SMALLGAN_H
#define SMALLGAN_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SmallganStatus {
  SMALLGAN_STATUS_OK = 0,
  SMALLGAN_STATUS_NULL_POINTER = 1,
  SMALLGAN_STATUS_INVALID_ARGUMENT = 2,
  SMALLGAN_STATUS_FORMAT = 3,
  SMALLGAN_STATUS_IO = 4,
  SMALLGAN_STATUS_ORACLE_TOO_LARGE = 5,
  SMALLGAN_STATUS_NOT_PSD = 6,
  SMALLGAN_STATUS_DIVERGED = 7,
  SMALLGAN_STATUS_PANIC = 8,
} SmallganStatus;

// Embedding cache loaded from disk.
typedef struct SmallganEmbeddingCache SmallganEmbeddingCache;

// Row-major `n x d` point set.
typedef struct SmallganPointSet SmallganPointSet;

// Gaussian random projection matrix.
typedef struct SmallganProjection SmallganProjection;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copies the calling thread's last error message into `buf` (NUL
// terminated, truncated to `len`). Returns the full message length in bytes
// excluding the terminator.
//
// # Safety
// `buf` must be null or point to `len` writable bytes.
size_t smallgan_last_error_message(char *buf, size_t len);

// Library version as a static NUL-terminated string.
const char *smallgan_version(void);

// Copies `n * d` row-major values into a new point set.
//
// # Safety
// `data` must point to `n * d` readable doubles and `out` must be writable.
enum SmallganStatus smallgan_points_new(const double *data,
                                        size_t n,
                                        size_t d,
                                        struct SmallganPointSet **out);

// # Safety
// `points` must be null or a handle from [`smallgan_points_new`] not yet freed.
void smallgan_points_free(struct SmallganPointSet *points);

// Number of rows, or 0 for a null handle.
//
// # Safety
// `points` must be null or a live handle.
size_t smallgan_points_len(const struct SmallganPointSet *points);

// Number of columns, or 0 for a null handle.
//
// # Safety
// `points` must be null or a live handle.
size_t smallgan_points_dim(const struct SmallganPointSet *points);

// Greedy k-center selection with a seeded first center. Writes `k` row
// indices in selection order and, if `out_radius` is non-null, the coverage
// radius.
//
// # Safety
// `out_indices` must have room for `k` values.
enum SmallganStatus smallgan_greedy_coreset(const struct SmallganPointSet *points,
                                            size_t k,
                                            uint64_t seed,
                                            size_t *out_indices,
                                            double *out_radius);

// Greedy k-center selection starting from row `first`.
//
// # Safety
// `out_indices` must have room for `k` values.
enum SmallganStatus smallgan_greedy_coreset_from(const struct SmallganPointSet *points,
                                                 size_t k,
                                                 size_t first,
                                                 size_t *out_indices,
                                                 double *out_radius);

// Optimal k-center by enumeration, for at most 20 points. Indices are
// written in increasing order.
//
// # Safety
// `out_indices` must have room for `k` values.
enum SmallganStatus smallgan_exact_kcenter(const struct SmallganPointSet *points,
                                           size_t k,
                                           size_t *out_indices,
                                           double *out_radius);

// Largest distance from any point to its nearest selected row.
//
// # Safety
// `selected` must point to `count` readable indices.
enum SmallganStatus smallgan_coverage_radius(const struct SmallganPointSet *points,
                                             const size_t *selected,
                                             size_t count,
                                             double *out_radius);

// Loads a binary embedding cache.
//
// # Safety
// `path` must be a NUL-terminated string and `out` must be writable.
enum SmallganStatus smallgan_cache_load(const char *path, struct SmallganEmbeddingCache **out);

// Builds a cache from `n` ids and `n * d` row-major float32 values.
//
// # Safety
// `ids` must hold `n` values, `values` must hold `n * d`, `out` must be writable.
enum SmallganStatus smallgan_cache_new(const uint64_t *ids,
                                       const float *values,
                                       size_t n,
                                       size_t d,
                                       struct SmallganEmbeddingCache **out);

// # Safety
// `cache` must be a live handle and `path` a NUL-terminated string.
enum SmallganStatus smallgan_cache_save(const struct SmallganEmbeddingCache *cache,
                                        const char *path);

// # Safety
// `cache` must be null or a handle not yet freed.
void smallgan_cache_free(struct SmallganEmbeddingCache *cache);

// # Safety
// `cache` must be null or a live handle.
size_t smallgan_cache_len(const struct SmallganEmbeddingCache *cache);

// # Safety
// `cache` must be null or a live handle.
size_t smallgan_cache_dim(const struct SmallganEmbeddingCache *cache);

// Copies all ids into `out_ids`.
//
// # Safety
// `out_ids` must have room for `smallgan_cache_len(cache)` values.
enum SmallganStatus smallgan_cache_ids(const struct SmallganEmbeddingCache *cache,
                                       uint64_t *out_ids);

// Selects `k` dataset ids from the cache. The embeddings are first
// projected to `proj_dim` dimensions; pass 0 to select on raw embeddings.
// Ids are written in selection order.
//
// # Safety
// `out_ids` must have room for `k` values.
enum SmallganStatus smallgan_cache_coreset(const struct SmallganEmbeddingCache *cache,
                                           size_t k,
                                           size_t proj_dim,
                                           uint64_t seed,
                                           uint64_t *out_ids,
                                           double *out_radius);

// Seeded Gaussian projection from `input_dim` to `output_dim` dimensions.
//
// # Safety
// `out` must be writable.
enum SmallganStatus smallgan_projection_new(size_t input_dim,
                                            size_t output_dim,
                                            uint64_t seed,
                                            struct SmallganProjection **out);

// # Safety
// `proj` must be null or a handle not yet freed.
void smallgan_projection_free(struct SmallganProjection *proj);

// Projects `n` row-major input rows into `out` (`n * output_dim` values).
//
// # Safety
// `rows` must hold `n * input_dim` values and `out` room for `n * output_dim`.
enum SmallganStatus smallgan_projection_apply(const struct SmallganProjection *proj,
                                              const double *rows,
                                              size_t n,
                                              double *out);

// Frechet distance between N(mean_a, cov_a) and N(mean_b, cov_b) in `d`
// dimensions. Covariances are row-major `d x d`.
//
// # Safety
// Means must hold `d` values and covariances `d * d`.
enum SmallganStatus smallgan_gaussian_fid(const double *mean_a,
                                          const double *cov_a,
                                          const double *mean_b,
                                          const double *cov_b,
                                          size_t d,
                                          double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SMALLGAN_H */
