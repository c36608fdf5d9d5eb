#pragma once

#include <string>

#include "core/run_config.hpp"

namespace must {
namespace commands {

/// Generates the configured synthetic scenario and writes per-domain CSVs
/// plus a manifest into the output directory.
void gen_data(const RunConfig& cfg);

/// Trains the configured variant against the manifest's domains; writes
/// log.csv, checkpoints and (optionally) snapshots.csv per seed.
void train_run(const RunConfig& cfg);

/// Hyperparameter sweep via reverse validation (or student source accuracy);
/// writes sweep_results.csv and best_config.txt.
void sweep(const RunConfig& cfg);

/// which is one of bound | consistency | margin; writes the analysis CSV and
/// a structured-text summary.
void analyze(const RunConfig& cfg, const std::string& which);

}  // namespace commands
}  // namespace must
