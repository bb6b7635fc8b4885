#pragma once

#include <optional>
#include <string>
#include <vector>

#include "rbclab/lab/experiment_config.hpp"
#include "rbclab/nets/policy.hpp"

namespace rbclab::lab {

struct BaselineResult {
  std::string snapshot_path;
  std::string metadata_path;
  double nu_base = 0.0;         // time average over the final half of the horizon
  double nu_at_snapshot = 0.0;  // instantaneous value of the saved state
};

/// Run the uncontrolled simulation to the configured horizon, store the
/// developed snapshot and its Nusselt statistics under <out>/baseline/.
BaselineResult cmd_baseline(const ExperimentConfig& cfg, const std::string& out_dir);

struct BaselineInfo {
  double nu_base = 0.0;
  double nu_at_snapshot = 0.0;
  double horizon = 0.0;
  std::uint64_t seed = 0;
};

std::string baseline_snapshot_path(const std::string& out_dir);

/// Reads <out>/baseline/baseline.json; a missing baseline is a
/// configuration error directing to the baseline command.
BaselineInfo read_baseline_info(const std::string& out_dir);

struct TrainArtifacts {
  std::vector<std::string> seed_csvs;
  std::vector<std::string> curve_csvs;  // per-seed curves plus the averaged file
  std::vector<std::string> final_checkpoints;
};

/// Train once per configured seed, then emit per-seed learning-curve CSVs
/// and one averaged file with 25-episode moving-average columns.
/// config_path, when given, is copied verbatim into the run directory.
TrainArtifacts cmd_train(const ExperimentConfig& cfg, const std::string& out_dir,
                         const std::string& config_path = "");

struct EvaluateResult {
  std::string csv_path;
  std::vector<std::string> snapshot_paths;
  double final_nu = 0.0;
};

/// One episode from the stored baseline under the trained policy.
/// CSV columns: actuation_index,nu_global,nu_local_0..,action_0.. .
EvaluateResult cmd_evaluate(const ExperimentConfig& cfg, const std::string& out_dir,
                            const std::string& checkpoint_path, nets::ActMode mode,
                            std::uint64_t seed, bool export_snapshot_csv = false);

struct PlotArtifacts {
  std::vector<std::string> files;
};

/// Render learning-curve and action-history SVGs for each run directory and
/// emit the exact plotted series as CSV next to them.
PlotArtifacts cmd_plot(const std::vector<std::string>& run_dirs);

/// Trailing moving average over `window` samples; entries before the first
/// full window are NaN (rendered as empty CSV cells).
std::vector<double> moving_average(const std::vector<double>& series, int window);

/// The plotting convention for unlearning: once the moving average has
/// dropped below 97% of the baseline, any later climb above 99% of the
/// baseline marks the run as unlearned and suppresses its moving average.
bool detect_unlearning(const std::vector<double>& ma, double nu_base);

}  // namespace rbclab::lab
