#include "mustlab.h"

#include <cstring>
#include <string>

#include "core/commands.hpp"
#include "core/data.hpp"
#include "core/run_config.hpp"
#include "core/trainer.hpp"

using must::Error;
using must::ErrorCode;

struct must_config {
  must::RunConfig cfg;
};

struct must_dataset {
  must::Dataset ds;
};

struct must_network {
  must::Network net;
};

namespace {

thread_local std::string t_last_error;

must_status status_of(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_argument: return MUST_ERR_INVALID_ARGUMENT;
    case ErrorCode::dimension_mismatch: return MUST_ERR_DIMENSION;
    case ErrorCode::parse: return MUST_ERR_PARSE;
    case ErrorCode::io: return MUST_ERR_IO;
    case ErrorCode::state: return MUST_ERR_STATE;
    case ErrorCode::internal: return MUST_ERR_INTERNAL;
  }
  return MUST_ERR_INTERNAL;
}

/// Runs `fn`, translating exceptions into status codes + the thread-local
/// message. No exception escapes the library boundary.
template <class Fn>
must_status guarded(Fn&& fn) {
  try {
    fn();
    t_last_error.clear();
    return MUST_OK;
  } catch (const Error& e) {
    t_last_error = e.what();
    return status_of(e.code());
  } catch (const std::exception& e) {
    t_last_error = e.what();
    return MUST_ERR_INTERNAL;
  } catch (...) {
    t_last_error = "unknown failure";
    return MUST_ERR_INTERNAL;
  }
}

must_status require(bool ok, const char* message) {
  if (ok) return MUST_OK;
  t_last_error = message;
  return MUST_ERR_INVALID_ARGUMENT;
}

}  // namespace

extern "C" {

const char* must_version(void) { return "0.1.0"; }

const char* must_status_name(must_status status) {
  switch (status) {
    case MUST_OK: return "ok";
    case MUST_ERR_INVALID_ARGUMENT: return "invalid_argument";
    case MUST_ERR_DIMENSION: return "dimension_mismatch";
    case MUST_ERR_PARSE: return "parse";
    case MUST_ERR_IO: return "io";
    case MUST_ERR_STATE: return "state";
    case MUST_ERR_INTERNAL: return "internal";
  }
  return "unknown";
}

const char* must_last_error(void) { return t_last_error.c_str(); }

/* ----------------------------- config ----------------------------- */

must_status must_config_create(must_config** out) {
  if (must_status s = require(out != nullptr, "null out pointer")) return s;
  return guarded([&] { *out = new must_config(); });
}

void must_config_free(must_config* cfg) { delete cfg; }

must_status must_config_load_file(must_config* cfg, const char* path) {
  if (must_status s = require(cfg && path, "null argument")) return s;
  return guarded([&] { cfg->cfg.load_file(path); });
}

must_status must_config_set(must_config* cfg, const char* key,
                            const char* value) {
  if (must_status s = require(cfg && key && value, "null argument")) return s;
  return guarded([&] { cfg->cfg.set(key, value); });
}

must_status must_config_get(const must_config* cfg, const char* key, char* buf,
                            size_t bufsize) {
  if (must_status s = require(cfg && key && buf && bufsize > 0, "null argument")) {
    return s;
  }
  return guarded([&] {
    const std::string& v = cfg->cfg.get(key);
    if (v.size() + 1 > bufsize) {
      must::fail(ErrorCode::invalid_argument, "buffer of ", bufsize,
                 " bytes too small for value of ", v.size(), " bytes");
    }
    std::memcpy(buf, v.c_str(), v.size() + 1);
  });
}

size_t must_config_key_count(void) { return must::config_keys().size(); }

must_status must_config_key_info(size_t index, const char** name,
                                 const char** default_value,
                                 const char** help) {
  auto keys = must::config_keys();
  if (must_status s = require(index < keys.size(), "key index out of range")) {
    return s;
  }
  if (name) *name = keys[index].name;
  if (default_value) *default_value = keys[index].def;
  if (help) *help = keys[index].help;
  return MUST_OK;
}

/* ----------------------------- commands ----------------------------- */

must_status must_cmd_gen_data(const must_config* cfg) {
  if (must_status s = require(cfg != nullptr, "null config")) return s;
  return guarded([&] { must::commands::gen_data(cfg->cfg); });
}

must_status must_cmd_train(const must_config* cfg) {
  if (must_status s = require(cfg != nullptr, "null config")) return s;
  return guarded([&] { must::commands::train_run(cfg->cfg); });
}

must_status must_cmd_sweep(const must_config* cfg) {
  if (must_status s = require(cfg != nullptr, "null config")) return s;
  return guarded([&] { must::commands::sweep(cfg->cfg); });
}

must_status must_cmd_analyze(const must_config* cfg, const char* which) {
  if (must_status s = require(cfg && which, "null argument")) return s;
  return guarded([&] { must::commands::analyze(cfg->cfg, which); });
}

/* ----------------------------- datasets ----------------------------- */

must_status must_dataset_load_csv(const char* path, const char* domain_name,
                                  must_dataset** out) {
  if (must_status s = require(path && domain_name && out, "null argument")) {
    return s;
  }
  return guarded([&] {
    *out = new must_dataset{must::load_csv(path, domain_name)};
  });
}

must_status must_dataset_save_csv(const must_dataset* ds, const char* path) {
  if (must_status s = require(ds && path, "null argument")) return s;
  return guarded([&] { must::save_csv(ds->ds, path); });
}

must_status must_dataset_shape(const must_dataset* ds, int64_t* rows,
                               int64_t* cols) {
  if (must_status s = require(ds && rows && cols, "null argument")) return s;
  *rows = ds->ds.size();
  *cols = ds->ds.dim();
  return MUST_OK;
}

must_status must_dataset_features(const must_dataset* ds, double* buf,
                                  size_t buflen) {
  if (must_status s = require(ds && buf, "null argument")) return s;
  return guarded([&] {
    auto data = ds->ds.features.data();
    if (buflen < data.size()) {
      must::fail(ErrorCode::invalid_argument, "buffer holds ", buflen,
                 " doubles, need ", data.size());
    }
    std::memcpy(buf, data.data(), data.size() * sizeof(double));
  });
}

must_status must_dataset_labels(const must_dataset* ds, int32_t* buf,
                                size_t buflen) {
  if (must_status s = require(ds && buf, "null argument")) return s;
  return guarded([&] {
    if (buflen < ds->ds.labels.size()) {
      must::fail(ErrorCode::invalid_argument, "buffer holds ", buflen,
                 " labels, need ", ds->ds.labels.size());
    }
    std::memcpy(buf, ds->ds.labels.data(),
                ds->ds.labels.size() * sizeof(int32_t));
  });
}

void must_dataset_free(must_dataset* ds) { delete ds; }

/* ----------------------------- networks ----------------------------- */

must_status must_network_load(const char* path, must_network** out) {
  if (must_status s = require(path && out, "null argument")) return s;
  return guarded([&] {
    *out = new must_network{must::Network::load(path)};
  });
}

must_status must_network_save(const must_network* net, const char* path) {
  if (must_status s = require(net && path, "null argument")) return s;
  return guarded([&] { net->net.save(path); });
}

must_status must_network_num_domains(const must_network* net, int32_t* out) {
  if (must_status s = require(net && out, "null argument")) return s;
  *out = net->net.num_domains();
  return MUST_OK;
}

must_status must_network_input_dim(const must_network* net, int64_t* out) {
  if (must_status s = require(net && out, "null argument")) return s;
  *out = net->net.input_dim();
  return MUST_OK;
}

must_status must_network_predict(const must_network* net,
                                 const double* features, int64_t rows,
                                 int64_t cols, int32_t domain_id,
                                 int32_t* labels_out) {
  if (must_status s = require(net && features && labels_out, "null argument")) {
    return s;
  }
  return guarded([&] {
    must::Matrix x(rows, cols);
    std::memcpy(x.data().data(), features,
                static_cast<size_t>(rows * cols) * sizeof(double));
    const int32_t entry =
        domain_id < 0 ? must::target_domain_of(net->net) : domain_id;
    std::vector<int32_t> labels = must::predict(net->net, x, entry);
    std::memcpy(labels_out, labels.data(), labels.size() * sizeof(int32_t));
  });
}

void must_network_free(must_network* net) { delete net; }

}  // extern "C"
