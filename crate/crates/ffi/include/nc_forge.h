#ifndef NC_FORGE_H
#define NC_FORGE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every fallible call.
typedef enum NcfStatus {
  NCF_STATUS_OK = 0,
  NCF_STATUS_INVALID_INPUT = 1,
  NCF_STATUS_SHAPE_ERROR = 2,
  NCF_STATUS_NUMERICAL_ERROR = 3,
  NCF_STATUS_FORMAT_ERROR = 4,
  NCF_STATUS_SPEC_ERROR = 5,
  NCF_STATUS_DEGENERATE_GEOMETRY = 6,
  NCF_STATUS_CONFIG_ERROR = 7,
  NCF_STATUS_GRAPH_ERROR = 8,
  NCF_STATUS_IO_ERROR = 9,
  NCF_STATUS_NULL_POINTER = 10,
  NCF_STATUS_PANIC = 11,
} NcfStatus;

// Opaque labelled feature matrix.
typedef struct NcfDataset NcfDataset;

// Opaque trained network (feature extractor plus linear head).
typedef struct NcfModel NcfModel;

// Training settings. Obtain defaults from [`ncf_train_options_default`].
typedef struct NcfTrainOptions {
  size_t epochs;
  size_t batch_size;
  // Multi-step schedule with milestones at 70% and 90% of the epochs.
  double lr;
  double momentum;
  double weight_decay;
  double lambda1;
  double lambda2;
  size_t start_epoch;
  // Epoch at which class re-weighting starts; negative disables it.
  int64_t drw_epoch;
  uint64_t seed;
  // Number of hidden layers before the feature layer, all `hidden_width` wide.
  size_t hidden_layers;
  size_t hidden_width;
  size_t feature_dim;
} NcfTrainOptions;

// Collapse metrics of a model's features on a dataset.
typedef struct NcfNcReport {
  double nc1;
  double nc2_cos_dev;
  double nc2_norm_cv;
  double nc3_align;
  double nc4_agree;
  bool etf_ok;
  double etf_alpha;
} NcfNcReport;

typedef struct NcfEtfCheck {
  bool verdict;
  double alpha;
  double residual;
} NcfEtfCheck;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copies the calling thread's last error message into `buf` (always
// NUL-terminated when `len > 0`) and returns the full message length in
// bytes, excluding the terminator. An empty message means the last call
// succeeded.
//
// # Safety
// `buf` must be null or point to `len` writable bytes.
size_t ncf_last_error_message(char *buf, size_t len);

// Samples a `K`-class isotropic Gaussian mixture with `per_class` points
// per class.
//
// # Safety
// `out` must be a valid pointer to a handle slot.
enum NcfStatus ncf_dataset_gaussian(size_t num_classes,
                                    size_t dim,
                                    size_t per_class,
                                    double separation,
                                    double spread,
                                    uint64_t seed,
                                    struct NcfDataset **out_ds);

// Builds a dataset from an `n x dim` feature buffer and `n` labels.
//
// # Safety
// `features` must hold `n * dim` doubles and `labels` `n` values.
enum NcfStatus ncf_dataset_from_arrays(const double *features,
                                       const uint32_t *labels,
                                       size_t n,
                                       size_t dim,
                                       size_t num_classes,
                                       struct NcfDataset **out_ds);

// Reads an IDX image/label file pair; pixels are scaled to `[0, 1]`.
//
// # Safety
// Both paths must be NUL-terminated strings.
enum NcfStatus ncf_dataset_load_idx(const char *images_path,
                                    const char *labels_path,
                                    struct NcfDataset **out_ds);

// Exponentially decaying per-class subsample with head/tail ratio
// `imbalance_ratio`; class 0 stays the head.
//
// # Safety
// `ds` must be a live dataset handle and `out` a valid slot.
enum NcfStatus ncf_dataset_long_tail(const struct NcfDataset *ds,
                                     double imbalance_ratio,
                                     uint64_t seed,
                                     struct NcfDataset **out_ds);

// Number of samples; 0 for a null handle.
//
// # Safety
// `ds` must be null or a live dataset handle.
size_t ncf_dataset_len(const struct NcfDataset *ds);

// Feature dimension; 0 for a null handle.
//
// # Safety
// `ds` must be null or a live dataset handle.
size_t ncf_dataset_dim(const struct NcfDataset *ds);

// Number of classes; 0 for a null handle.
//
// # Safety
// `ds` must be null or a live dataset handle.
size_t ncf_dataset_num_classes(const struct NcfDataset *ds);

// Writes the per-class sample counts into `counts` (`len` must equal the
// number of classes).
//
// # Safety
// `counts` must point to `len` writable values.
enum NcfStatus ncf_dataset_class_counts(const struct NcfDataset *ds, size_t *counts, size_t len);

// # Safety
// `ds` must be null or a handle not yet freed.
void ncf_dataset_free(struct NcfDataset *ds);

// Desk-scale defaults: 60 epochs, batch 128, lr 0.05, momentum 0.9, weight
// decay 0.005, two hidden layers of 64, 64 features, no regularizers, no
// re-weighting.
struct NcfTrainOptions ncf_train_options_default(void);

// Trains a model on `ds`. Deterministic in `(ds, options)`.
//
// # Safety
// `ds` must be a live dataset handle, `options` valid, `out` a valid slot.
enum NcfStatus ncf_train(const struct NcfDataset *ds,
                         const struct NcfTrainOptions *options,
                         struct NcfModel **out_model);

// Number of epochs logged so far (0 for a loaded model).
//
// # Safety
// `model` must be null or a live model handle.
size_t ncf_model_epochs(const struct NcfModel *model);

// Accuracy on `ds`.
//
// # Safety
// Handles must be live; `accuracy` must be writable.
enum NcfStatus ncf_evaluate(const struct NcfModel *model,
                            const struct NcfDataset *ds,
                            double *accuracy);

// Predicted class for each of `n` rows of `features` (`n x dim`).
//
// # Safety
// `features` must hold `n * dim` doubles, `labels` `n` writable values.
enum NcfStatus ncf_predict(const struct NcfModel *model,
                           const double *features,
                           size_t n,
                           size_t dim,
                           uint32_t *labels);

// Collapse metrics of the model's features on `ds`. Metrics that are
// undefined for the data come back as NaN.
//
// # Safety
// Handles must be live; `report` must be writable.
enum NcfStatus ncf_nc_report(const struct NcfModel *model,
                             const struct NcfDataset *ds,
                             struct NcfNcReport *report);

// Writes the model as a checkpoint file.
//
// # Safety
// `model` must be live and `path` NUL-terminated.
enum NcfStatus ncf_model_save(const struct NcfModel *model, const char *path);

// Loads a checkpoint written by [`ncf_model_save`] or the command-line
// tool.
//
// # Safety
// `path` must be NUL-terminated and `out` a valid slot.
enum NcfStatus ncf_model_load(const char *path, struct NcfModel **out_model);

// # Safety
// `model` must be null or a handle not yet freed.
void ncf_model_free(struct NcfModel *model);

// Tests whether the columns of `m` (`p x k`, row-major) form a simplex
// equiangular tight frame up to `tol`.
//
// # Safety
// `m` must hold `p * k` doubles; `result` must be writable.
enum NcfStatus ncf_is_simplex_etf(const double *m,
                                  size_t p,
                                  size_t k,
                                  double tol,
                                  struct NcfEtfCheck *result);

// Between-class regularizer of `k` centered class means (`k x p`,
// row-major): the negated mean over classes of the angle to the nearest
// other mean, in radians.
//
// # Safety
// `centered` must hold `k * p` doubles; `value` must be writable.
enum NcfStatus ncf_between_class_reg(const double *centered, size_t k, size_t p, double *value);

// Within-class regularizer of `n` features (`n x p`) under `labels`.
//
// # Safety
// `h` must hold `n * p` doubles, `labels` `n` values; `value` writable.
enum NcfStatus ncf_within_class_reg(const double *h,
                                    const uint32_t *labels,
                                    size_t n,
                                    size_t p,
                                    double *value);

// Library version as a static NUL-terminated string.
const char *ncf_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NC_FORGE_H */
