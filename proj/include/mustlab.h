/* mustlab — multi-source student-teacher domain-adaptation laboratory.
 *
 * C interface of the shared library. All functions return MUST_OK (0) on
 * success or a must_status error code; must_last_error() returns a
 * thread-local message for the most recent failure on the calling thread.
 * Objects are opaque handles created and released through this interface.
 */

#ifndef MUSTLAB_H
#define MUSTLAB_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef int32_t must_status;

enum {
  MUST_OK = 0,
  MUST_ERR_INVALID_ARGUMENT = 1,
  MUST_ERR_DIMENSION = 2,
  MUST_ERR_PARSE = 3,
  MUST_ERR_IO = 4,
  MUST_ERR_STATE = 5,
  MUST_ERR_INTERNAL = 6,
};

const char* must_version(void);
const char* must_status_name(must_status status);

/* Message for the last failure on this thread; empty string if none. */
const char* must_last_error(void);

/* ----------------------------- run configuration ----------------------------- */

typedef struct must_config must_config;

must_status must_config_create(must_config** out);
void must_config_free(must_config* cfg);

/* Merges a key=value file over the current values. Unknown or duplicate
 * keys are rejected. */
must_status must_config_load_file(must_config* cfg, const char* path);
must_status must_config_set(must_config* cfg, const char* key,
                            const char* value);
must_status must_config_get(const must_config* cfg, const char* key, char* buf,
                            size_t bufsize);

/* Static key table: name, default and help text per known key. */
size_t must_config_key_count(void);
must_status must_config_key_info(size_t index, const char** name,
                                 const char** default_value, const char** help);

/* ----------------------------- commands ----------------------------- */

must_status must_cmd_gen_data(const must_config* cfg);
must_status must_cmd_train(const must_config* cfg);
must_status must_cmd_sweep(const must_config* cfg);
/* which: "bound" | "consistency" | "margin" */
must_status must_cmd_analyze(const must_config* cfg, const char* which);

/* ----------------------------- datasets ----------------------------- */

typedef struct must_dataset must_dataset;

must_status must_dataset_load_csv(const char* path, const char* domain_name,
                                  must_dataset** out);
must_status must_dataset_save_csv(const must_dataset* ds, const char* path);
must_status must_dataset_shape(const must_dataset* ds, int64_t* rows,
                               int64_t* cols);
/* Row-major copy into caller storage; buffers must hold rows*cols doubles
 * and rows int32 labels respectively. Label -1 means unlabeled. */
must_status must_dataset_features(const must_dataset* ds, double* buf,
                                  size_t buflen);
must_status must_dataset_labels(const must_dataset* ds, int32_t* buf,
                                size_t buflen);
void must_dataset_free(must_dataset* ds);

/* ----------------------------- networks ----------------------------- */

typedef struct must_network must_network;

must_status must_network_load(const char* path, must_network** out);
must_status must_network_save(const must_network* net, const char* path);
must_status must_network_num_domains(const must_network* net, int32_t* out);
must_status must_network_input_dim(const must_network* net, int64_t* out);
/* Class predictions for a row-major feature block, using the given
 * batch-norm entry; pass -1 for the deployed-on-target entry. */
must_status must_network_predict(const must_network* net,
                                 const double* features, int64_t rows,
                                 int64_t cols, int32_t domain_id,
                                 int32_t* labels_out);
void must_network_free(must_network* net);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* MUSTLAB_H */
