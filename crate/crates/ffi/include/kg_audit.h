#ifndef KG_AUDIT_H
#define KG_AUDIT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum KgStatus {
  KG_STATUS_OK = 0,
  KG_STATUS_NULL_ARGUMENT = 1,
  KG_STATUS_INVALID_UTF8 = 2,
  KG_STATUS_IO = 3,
  KG_STATUS_PARSE = 4,
  KG_STATUS_INVALID_CONFIG = 5,
  KG_STATUS_EVALUATION = 6,
  KG_STATUS_PANIC = 99,
} KgStatus;

typedef enum KgPredictor {
  KG_PREDICTOR_RULE = 0,
  KG_PREDICTOR_CARTESIAN = 1,
  KG_PREDICTOR_FREQUENCY = 2,
} KgPredictor;

typedef enum KgFilterScope {
  KG_FILTER_SCOPE_ALL = 0,
  KG_FILTER_SCOPE_TRAIN_TEST = 1,
} KgFilterScope;

/**
 * The outcome of an audit.
 */
typedef struct KgAudit KgAudit;

/**
 * A loaded dataset.
 */
typedef struct KgDataset KgDataset;

/**
 * Per-query ranks from an evaluation or an ingested rankings file.
 */
typedef struct KgReport KgReport;

typedef struct KgAuditConfig {
  double theta1;
  double theta2;
  double cartesian_threshold;
  double category_cutoff;
  uint64_t min_triples;
} KgAuditConfig;

typedef struct KgStats {
  uint64_t entities;
  uint64_t relations;
  uint64_t train;
  uint64_t valid;
  uint64_t test;
} KgStats;

typedef struct KgMetrics {
  uint64_t count;
  double mr;
  double fmr;
  double mrr;
  double fmrr;
} KgMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing the last failure on this thread, or null. The pointer
 * stays valid until the next call into this library on the same thread.
 */
const char *kg_last_error(void);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed already.
 */
void kg_string_free(char *s);

/**
 * The default detection thresholds.
 */
struct KgAuditConfig kg_audit_config_default(void);

/**
 * Loads `train.txt`, `valid.txt` and `test.txt` from `dir`.
 *
 * # Safety
 * `dir` must be a NUL-terminated string and `out` a writable pointer.
 */
enum KgStatus kg_dataset_load(const char *dir, struct KgDataset **out);

/**
 * # Safety
 * `ds` must be null or a handle from [`kg_dataset_load`] not yet freed.
 */
void kg_dataset_free(struct KgDataset *ds);

/**
 * # Safety
 * `ds` must be a live handle and `out` writable.
 */
enum KgStatus kg_dataset_stats(const struct KgDataset *ds, struct KgStats *out);

/**
 * Runs the redundancy audit. `config` may be null for the defaults.
 *
 * # Safety
 * `ds` must be a live handle, `config` null or valid, `out` writable.
 */
enum KgStatus kg_audit_run(const struct KgDataset *ds,
                           const struct KgAuditConfig *config,
                           struct KgAudit **out);

/**
 * # Safety
 * `audit` must be null or a handle from [`kg_audit_run`] not yet freed.
 */
void kg_audit_free(struct KgAudit *audit);

/**
 * Number of findings of all kinds.
 *
 * # Safety
 * `audit` must be a live handle and `out` writable.
 */
enum KgStatus kg_audit_finding_count(const struct KgAudit *audit, uint64_t *out);

/**
 * Fills `counts[code]` with the number of test triples per 4-bit
 * redundancy code.
 *
 * # Safety
 * `audit` must be a live handle and `counts` point to 16 writable values.
 */
enum KgStatus kg_audit_histogram(const struct KgAudit *audit, uint64_t *counts);

/**
 * The audit as a JSON document; free with [`kg_string_free`].
 *
 * # Safety
 * `audit` must be a live handle and `out` writable.
 */
enum KgStatus kg_audit_json(const struct KgAudit *audit, char **out);

/**
 * Ranks every test query with a baseline predictor. `config` may be null.
 *
 * # Safety
 * `ds` must be a live handle, `config` null or valid, `out` writable.
 */
enum KgStatus kg_evaluate(const struct KgDataset *ds,
                          enum KgPredictor predictor,
                          const struct KgAuditConfig *config,
                          enum KgFilterScope scope,
                          struct KgReport **out);

/**
 * Reads a rankings JSONL file covering every test query.
 *
 * # Safety
 * `ds` must be a live handle, `path` NUL-terminated, `out` writable.
 */
enum KgStatus kg_ingest_rankings(const struct KgDataset *ds,
                                 const char *path,
                                 enum KgFilterScope scope,
                                 struct KgReport **out);

/**
 * Writes the report's ranks as a rankings JSONL file.
 *
 * # Safety
 * `ds` and `report` must be live handles, `path` NUL-terminated.
 */
enum KgStatus kg_report_write_rankings(const struct KgDataset *ds,
                                       const struct KgReport *report,
                                       const char *path);

/**
 * # Safety
 * `report` must be null or a handle not yet freed.
 */
void kg_report_free(struct KgReport *report);

/**
 * # Safety
 * `report` must be a live handle and `out` writable.
 */
enum KgStatus kg_report_metrics(const struct KgReport *report, struct KgMetrics *out);

/**
 * Raw and filtered hits@k, in percent, for any positive `k`.
 *
 * # Safety
 * `report` must be a live handle; `raw` and `filtered` writable.
 */
enum KgStatus kg_report_hits(const struct KgReport *report,
                             uint32_t k,
                             double *raw,
                             double *filtered);

/**
 * Overall metrics as JSON; free with [`kg_string_free`].
 *
 * # Safety
 * `report` must be a live handle and `out` writable.
 */
enum KgStatus kg_report_json(const struct KgReport *report, char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* KG_AUDIT_H */
