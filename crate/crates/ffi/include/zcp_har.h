#ifndef ZCP_HAR_H
#define ZCP_HAR_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes. `ZCP_STATUS_OK` is zero; everything else is an error.
typedef enum ZcpStatus {
  ZCP_STATUS_OK = 0,
  ZCP_STATUS_NULL_POINTER = 1,
  ZCP_STATUS_INVALID_UTF8 = 2,
  ZCP_STATUS_INVALID_ARGUMENT = 3,
  ZCP_STATUS_PARSE_ERROR = 4,
  ZCP_STATUS_INVALID_ARCH = 5,
  ZCP_STATUS_SHAPE_MISMATCH = 6,
  ZCP_STATUS_DEGENERATE = 7,
  ZCP_STATUS_PANIC = 8,
  ZCP_STATUS_INTERNAL = 9,
} ZcpStatus;

// A list of sampled architectures.
typedef struct ZcpArchList ZcpArchList;

// An architecture description.
typedef struct ZcpArchSpec ZcpArchSpec;

// An initialised network.
typedef struct ZcpModel ZcpModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the most recent failure on this thread, or NULL. The pointer
// stays valid until the next failing call on this thread.
const char *zcp_last_error_message(void);

// Releases a string returned by this library.
//
// # Safety
// `s` must be NULL or a pointer obtained from this library that has not
// been freed.
void zcp_string_free(char *s);

// Parses the canonical JSON text form of an architecture.
//
// # Safety
// `text` must be a NUL-terminated string; `out` must be writable.
enum ZcpStatus zcp_arch_from_text(const char *text, struct ZcpArchSpec **out);

// Canonical text form of an architecture.
//
// # Safety
// `spec` must be a live handle; `out` must be writable.
enum ZcpStatus zcp_arch_to_text(const struct ZcpArchSpec *spec, char **out);

// Hex SHA-256 of the canonical text form.
//
// # Safety
// `spec` must be a live handle; `out` must be writable.
enum ZcpStatus zcp_arch_hash(const struct ZcpArchSpec *spec, char **out);

// # Safety
// `spec` must be NULL or a live handle.
void zcp_arch_free(struct ZcpArchSpec *spec);

// Samples architectures. `search_space_toml` may be NULL for the default
// ranges.
//
// # Safety
// `search_space_toml` must be NULL or NUL-terminated; `out` must be
// writable.
enum ZcpStatus zcp_sample_architectures(const char *search_space_toml,
                                        uint64_t seed,
                                        struct ZcpArchList **out);

// Number of architectures in a list (0 for NULL).
//
// # Safety
// `list` must be NULL or a live handle.
size_t zcp_arch_list_len(const struct ZcpArchList *list);

// Copies element `index` into a new architecture handle.
//
// # Safety
// `list` must be a live handle; `out` must be writable.
enum ZcpStatus zcp_arch_list_get(const struct ZcpArchList *list,
                                 size_t index,
                                 struct ZcpArchSpec **out);

// # Safety
// `list` must be NULL or a live handle.
void zcp_arch_list_free(struct ZcpArchList *list);

// Exact search-space sizes as decimal strings. `search_space_toml` may be
// NULL for the default ranges.
//
// # Safety
// `search_space_toml` must be NULL or NUL-terminated; both outputs must be
// writable.
enum ZcpStatus zcp_count_search_space(const char *search_space_toml,
                                      char **cnn_total,
                                      char **lstm_total);

// Builds and Xavier-initialises the network for `spec`.
//
// # Safety
// `spec` must be a live handle; `out` must be writable.
enum ZcpStatus zcp_model_new(const struct ZcpArchSpec *spec,
                             size_t num_classes,
                             size_t seq_len,
                             uint64_t seed,
                             struct ZcpModel **out);

// Total number of scalar parameters (0 for NULL).
//
// # Safety
// `model` must be NULL or a live handle.
size_t zcp_model_num_params(const struct ZcpModel *model);

// Inference: writes `batch * num_classes` logits to `out_logits`.
//
// # Safety
// `input` must hold `batch * channels * seq_len` doubles and `out_logits`
// `out_len` doubles.
enum ZcpStatus zcp_model_forward(const struct ZcpModel *model,
                                 const double *input,
                                 size_t batch,
                                 double *out_logits,
                                 size_t out_len);

// # Safety
// `model` must be NULL or a live handle.
void zcp_model_free(struct ZcpModel *model);

// Scores `model` with one per-architecture proxy (by name, e.g.
// `"synflow"`) on a labelled batch. The ensemble and `initial_val_f1` need
// more than one batch and are rejected. Parameters are left unchanged.
//
// # Safety
// `inputs` must hold `batch * channels * seq_len` doubles and `labels`
// `batch` entries; outputs must be writable.
enum ZcpStatus zcp_score_proxy(struct ZcpModel *model,
                               const char *proxy,
                               const double *inputs,
                               const size_t *labels,
                               size_t batch,
                               double *value,
                               bool *degenerate);

// Spearman rank correlation with average ranks on ties.
//
// # Safety
// `x` and `y` must each hold `n` doubles; `out` must be writable.
enum ZcpStatus zcp_spearman(const double *x, const double *y, size_t n, double *out);

// Macro F1 over the classes present in `labels`.
//
// # Safety
// `predictions` and `labels` must each hold `n` entries; `out` must be
// writable.
enum ZcpStatus zcp_macro_f1(const size_t *predictions, const size_t *labels, size_t n, double *out);

// Names of all proxies accepted by [`zcp_score_proxy`] and the pipeline,
// comma separated.
//
// # Safety
// `out` must be writable.
enum ZcpStatus zcp_proxy_names(char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ZCP_HAR_H */
