#pragma once

// Experiment commands behind the command-line tool. Each training run writes
//
//   <out>/<run_id>/config.json   resolved config and its hash
//   <out>/<run_id>/curve.csv     per-epoch or per-eval rows
//   <out>/<run_id>/model.bin     network parameters (+ model.json header)
//   <out>/<run_id>/bundle.json   model kind and the non-network state
//   <out>/<run_id>/summary.json  written last
//
// and eval-density adds metrics.csv (+ eval.json) to a run directory.

#include "nkcme/config.hpp"
#include "nkcme/datasets.hpp"

#include <exception>
#include <string>
#include <vector>

namespace nkcme::cli {

enum ExitCode : int { exit_ok = 0, exit_failure = 1, exit_config = 2, exit_divergence = 3, exit_io = 4 };

/// Maps a library exception to the process exit code.
int exit_code_for(const std::exception& e);

/// Writes one toy dataset as CSV; returns the path.
std::string cmd_gen_data(const config::Config& c);

/// Trains one model per seed; returns the run directories.
std::vector<std::string> cmd_train_density(const config::Config& c);

/// Evaluates each bundle (writing its metrics.csv). With a non-empty
/// aggregate_out, also writes mean/std across bundles there. Returns the
/// metrics files written.
std::vector<std::string> cmd_eval_density(const std::vector<std::string>& bundles, const config::Config& c,
                                          const std::string& aggregate_out = "");

/// Trains one agent per seed; returns the run directories.
std::vector<std::string> cmd_train_rl(const config::Config& c);

/// Deterministic run id: <prefix>-<8 hex digits of the config hash>-s<seed>.
std::string make_run_id(const std::string& prefix, const std::string& config_hash, std::uint64_t seed);

/// Standardized training data, plus raw train/test splits, as train-density builds them.
struct PreparedData {
  data::LabeledDataset train_raw;
  data::LabeledDataset test_raw;  // empty when test_fraction = 0
  data::LabeledDataset train;     // standardized with training statistics
  bool toy = false;
  data::ToyFamily family = data::ToyFamily::bimodal;
};

PreparedData prepare_density_data(const config::Config& c);

/// spectral_norm = auto resolves to on for csv data and off for toy families.
bool spectral_norm_enabled(const config::Config& c);

}  // namespace nkcme::cli
