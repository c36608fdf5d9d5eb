// mustlab command-line front end. Everything goes through the C API of the
// shared library; this translation unit knows nothing about the core types.

#include <cstdio>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "mustlab.h"

namespace {

struct ConfigDeleter {
  void operator()(must_config* cfg) const { must_config_free(cfg); }
};
using ConfigPtr = std::unique_ptr<must_config, ConfigDeleter>;

int fail_with(must_status status) {
  std::fprintf(stderr, "error (%s): %s\n", must_status_name(status),
               must_last_error());
  return 1;
}

/// Builds the effective configuration: defaults, then the config file, then
/// --set pairs in command-line order, then dedicated flags (which win).
int build_config(ConfigPtr& out, const std::string& config_file,
                 const std::vector<std::string>& sets,
                 const std::vector<std::pair<std::string, std::string>>& flags) {
  must_config* raw = nullptr;
  if (must_status s = must_config_create(&raw)) return fail_with(s);
  out.reset(raw);
  if (!config_file.empty()) {
    if (must_status s = must_config_load_file(raw, config_file.c_str())) {
      return fail_with(s);
    }
  }
  for (const std::string& kv : sets) {
    size_t eq = kv.find('=');
    if (eq == std::string::npos) {
      std::fprintf(stderr, "error: --set expects key=value, got '%s'\n",
                   kv.c_str());
      return 1;
    }
    if (must_status s = must_config_set(raw, kv.substr(0, eq).c_str(),
                                        kv.substr(eq + 1).c_str())) {
      return fail_with(s);
    }
  }
  for (const auto& [key, value] : flags) {
    if (must_status s = must_config_set(raw, key.c_str(), value.c_str())) {
      return fail_with(s);
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mustlab: multi-source student-teacher adaptation laboratory"};
  app.require_subcommand(1);
  app.set_version_flag("--version", must_version());

  std::string config_file;
  std::vector<std::string> sets;
  std::vector<std::pair<std::string, std::string>> flag_values;
  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_file, "run-config file (key = value)");
    cmd->add_option("--set", sets, "override a config key (key=value)")
        ->take_all();
    for (const char* key : {"out_dir", "manifest", "seed", "seeds", "steps",
                            "lambda", "c_th", "variant", "scenario",
                            "criterion", "snapshot_every"}) {
      const std::string opt = std::string("--") + key;
      cmd->add_option_function<std::string>(
          opt, [&flag_values, key](const std::string& v) {
            flag_values.emplace_back(key, v);
          },
          std::string("sets config key '") + key + "'");
    }
  };

  CLI::App* gen = app.add_subcommand("gen-data", "generate a synthetic scenario");
  add_common(gen);
  CLI::App* train = app.add_subcommand("train", "train on a manifest");
  add_common(train);
  CLI::App* sweep = app.add_subcommand("sweep", "hyperparameter sweep");
  add_common(sweep);
  CLI::App* analyze = app.add_subcommand("analyze", "post-hoc analyses");
  add_common(analyze);
  std::string which;
  analyze->add_option("--which", which, "bound | consistency | margin")
      ->required();
  CLI::App* keys = app.add_subcommand("keys", "list all config keys");

  CLI11_PARSE(app, argc, argv);

  if (keys->parsed()) {
    for (size_t i = 0; i < must_config_key_count(); ++i) {
      const char *name = nullptr, *def = nullptr, *help = nullptr;
      must_config_key_info(i, &name, &def, &help);
      std::printf("%-15s default=%-14s %s\n", name,
                  *def ? def : "(empty)", help);
    }
    return 0;
  }

  ConfigPtr cfg;
  if (int rc = build_config(cfg, config_file, sets, flag_values)) return rc;

  must_status status = MUST_OK;
  if (gen->parsed()) {
    status = must_cmd_gen_data(cfg.get());
  } else if (train->parsed()) {
    status = must_cmd_train(cfg.get());
  } else if (sweep->parsed()) {
    status = must_cmd_sweep(cfg.get());
  } else if (analyze->parsed()) {
    status = must_cmd_analyze(cfg.get(), which.c_str());
  }
  return status == MUST_OK ? 0 : fail_with(status);
}
