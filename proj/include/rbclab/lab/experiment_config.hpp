#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rbclab/dns/solver.hpp"
#include "rbclab/env/environment.hpp"
#include "rbclab/nets/policy.hpp"
#include "rbclab/train/ppo.hpp"

namespace rbclab::lab {

struct RunConfig {
  std::vector<std::uint64_t> seeds = {1, 2};
  std::string out_dir = "runs/exp";
  int episodes = 300;
  double baseline_horizon = 500.0;  // uncontrolled development, time units
  std::uint64_t baseline_seed = 2024;
  double baseline_amplitude = 0.3;
  int checkpoint_every = 50;
  std::vector<double> snapshot_times;  // evaluation field snapshots

  bool operator==(const RunConfig&) const = default;
};

/// The full serializable description of a run. JSON sections mirror the
/// module boundaries; unknown keys are errors.
struct ExperimentConfig {
  dns::SolverConfig solver;
  env::EnvConfig environment;
  nets::NetworkSpec network;
  train::PPOHyper ppo;
  RunConfig run;
  /// reward_offset = "auto" in the file: fill n from the measured baseline.
  bool reward_offset_auto = true;

  void validate() const;
  bool operator==(const ExperimentConfig&) const;
};

ExperimentConfig parse_config_text(const std::string& json_text);
ExperimentConfig load_config(const std::string& path);
std::string serialize_config(const ExperimentConfig& cfg);

}  // namespace rbclab::lab
