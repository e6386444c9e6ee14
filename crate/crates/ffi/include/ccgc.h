#ifndef CCGC_H
#define CCGC_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes. Zero is success.
 */
typedef enum CcgcStatus {
  CCGC_STATUS_OK = 0,
  CCGC_STATUS_NULL_POINTER = 1,
  CCGC_STATUS_INVALID_ARGUMENT = 2,
  CCGC_STATUS_DIMENSION_MISMATCH = 3,
  CCGC_STATUS_IO = 4,
  CCGC_STATUS_PARSE = 5,
  CCGC_STATUS_INVALID_DATASET = 6,
  CCGC_STATUS_DIVERGED = 7,
  CCGC_STATUS_JSON = 8,
  CCGC_STATUS_INVALID_UTF8 = 9,
  CCGC_STATUS_PANIC = 10,
  CCGC_STATUS_INTERNAL = 11,
} CcgcStatus;

/**
 * Metric selector for [`ccgc_report_metric`].
 */
typedef enum CcgcMetric {
  CCGC_METRIC_ACC = 0,
  CCGC_METRIC_NMI = 1,
  CCGC_METRIC_ARI = 2,
  CCGC_METRIC_F1 = 3,
} CcgcMetric;

/**
 * Training configuration.
 */
typedef struct CcgcConfig CcgcConfig;

/**
 * A loaded or generated graph.
 */
typedef struct CcgcDataset CcgcDataset;

/**
 * Results of a multi-seed training run.
 */
typedef struct CcgcReport CcgcReport;

/**
 * Clustering scores for one partition, each in its natural range.
 */
typedef struct CcgcMetrics {
  double acc;
  double nmi;
  double ari;
  double f1;
} CcgcMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread, or null if the last
 * call succeeded. Valid until the next call into this library on the thread.
 */
const char *ccgc_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *ccgc_version(void);

/**
 * Loads a dataset bundle directory.
 */
enum CcgcStatus ccgc_dataset_load(const char *path, struct CcgcDataset **out);

/**
 * Samples a planted-partition graph with `blocks` equal blocks.
 */
enum CcgcStatus ccgc_dataset_make_sbm(uint64_t seed,
                                      size_t blocks,
                                      size_t block_size,
                                      double p_in,
                                      double p_out,
                                      size_t feature_dim,
                                      double feature_noise,
                                      struct CcgcDataset **out);

/**
 * Node count; 0 for a null handle.
 */
size_t ccgc_dataset_num_nodes(const struct CcgcDataset *dataset);

/**
 * Feature dimension; 0 for a null handle.
 */
size_t ccgc_dataset_feature_dim(const struct CcgcDataset *dataset);

/**
 * Number of ground-truth classes; 0 when unlabeled or null.
 */
size_t ccgc_dataset_num_classes(const struct CcgcDataset *dataset);

/**
 * Copies ground-truth labels into `buf`, which must hold exactly
 * `ccgc_dataset_num_nodes` entries.
 */
enum CcgcStatus ccgc_dataset_labels(const struct CcgcDataset *dataset, size_t *buf, size_t len);

void ccgc_dataset_free(struct CcgcDataset *dataset);

/**
 * Default configuration.
 */
enum CcgcStatus ccgc_config_new(struct CcgcConfig **out);

/**
 * Configuration from a JSON object; missing fields take defaults.
 */
enum CcgcStatus ccgc_config_from_json(const char *json, struct CcgcConfig **out);

enum CcgcStatus ccgc_config_set_epochs(struct CcgcConfig *config, size_t epochs);

enum CcgcStatus ccgc_config_set_tau(struct CcgcConfig *config, double tau);

enum CcgcStatus ccgc_config_set_alpha(struct CcgcConfig *config, double alpha);

/**
 * Cluster count; 0 means the dataset's class count.
 */
enum CcgcStatus ccgc_config_set_clusters(struct CcgcConfig *config, size_t k);

enum CcgcStatus ccgc_config_set_seeds(struct CcgcConfig *config, const uint64_t *seeds, size_t len);

/**
 * Selects the model variant by name, e.g. `"full"` or `"wo_dps"`.
 */
enum CcgcStatus ccgc_config_set_variant(struct CcgcConfig *config, const char *name);

void ccgc_config_free(struct CcgcConfig *config);

/**
 * Trains one model per configured seed. Succeeds if at least one seed
 * finished; per-seed failures are listed in the report.
 */
enum CcgcStatus ccgc_train(const struct CcgcDataset *dataset,
                           const struct CcgcConfig *config,
                           struct CcgcReport **out);

size_t ccgc_report_num_runs(const struct CcgcReport *report);

size_t ccgc_report_num_failures(const struct CcgcReport *report);

/**
 * Mean and population standard deviation of a metric across seeds.
 */
enum CcgcStatus ccgc_report_metric(const struct CcgcReport *report,
                                   enum CcgcMetric metric,
                                   double *mean,
                                   double *std);

/**
 * Seed of run `index`.
 */
enum CcgcStatus ccgc_report_run_seed(const struct CcgcReport *report, size_t index, uint64_t *seed);

/**
 * Metrics of run `index`.
 */
enum CcgcStatus ccgc_report_run_metrics(const struct CcgcReport *report,
                                        size_t index,
                                        struct CcgcMetrics *metrics);

/**
 * Copies the cluster assignment of run `index` into `buf`, which must hold
 * exactly one entry per node.
 */
enum CcgcStatus ccgc_report_assignments(const struct CcgcReport *report,
                                        size_t index,
                                        size_t *buf,
                                        size_t len);

/**
 * Serializes the report to JSON. Free the string with [`ccgc_string_free`].
 */
enum CcgcStatus ccgc_report_to_json(const struct CcgcReport *report, char **out);

void ccgc_report_free(struct CcgcReport *report);

void ccgc_string_free(char *s);

/**
 * Scores a predicted partition against ground truth.
 */
enum CcgcStatus ccgc_evaluate(const size_t *predicted,
                              const size_t *truth,
                              size_t len,
                              struct CcgcMetrics *metrics);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CCGC_H */
