#pragma once

#include <memory>
#include <string>
#include <vector>

#include "rbclab/dns/solver.hpp"

namespace rbclab::env {

/// The 3-channel probe image shared by all pseudo-environments.
using GlobalObservation = dns::ProbeImage;

struct EnvConfig {
  int n_segments = 10;
  int actions_per_episode = 200;
  double action_duration = 1.5;
  double beta = 0.0015;        // local-Nusselt weight in the reward
  double reward_scale = 1.0;   // m
  double reward_offset = 0.0;  // n; the lab layer fills this from the baseline
  double clamp_limit = 0.75;
  bool pe_enabled = false;
  double pe_amplitude = 1.0;
  // The printed form of the encoding, sin(x/2pi), does not vanish at the
  // domain ends; the default sin(2 pi x / Lx) does. The literal variant
  // stays available for comparison.
  bool pe_literal_form = false;

  void validate() const;
};

/// Mean-subtract the raw actions, then clamp each entry to the limit.
/// Raw values must lie in [-1, 1]. Returns the final per-segment offsets.
std::vector<double> process_actions(const std::vector<double>& raw, const EnvConfig& cfg);

/// r = m (n - (1 - beta) Nu_global - beta Nu_local).
double reward(double nu_global, double nu_local, const EnvConfig& cfg);

/// Row-constant encoding values at the probe x-stations x_p = p Lx / cols.
std::vector<double> positional_encoding_field(const EnvConfig& cfg, double domain_width,
                                              int cols);

/// Add the encoding to the temperature channel only; u and v stay
/// bit-identical. Applied before recentering; never used for rewards.
GlobalObservation inject_positional_encoding(const GlobalObservation& obs,
                                             const EnvConfig& cfg, double domain_width);

/// Circular column shift placing agent i's segment center at the image
/// center. The offset is chosen so that shift(i) + shift(N_s-1-i) = 1
/// (mod cols), which makes recentering commute exactly with the solver's
/// mirror operation (whose axis passes through station 0). With an odd
/// N_s the self-paired middle agent is the one exception, off by the
/// rounding of half a column.
int recenter_shift(int agent_index, const EnvConfig& cfg, int cols);

/// Pure circular column permutation: output column p holds input column
/// (p + shift) mod cols on every channel.
GlobalObservation recenter_by_shift(const GlobalObservation& obs, int shift);

GlobalObservation recenter(const GlobalObservation& obs, int agent_index,
                           const EnvConfig& cfg);

struct AgentView {
  int agent_index = 0;
  GlobalObservation observation;  // recentered; PE included when enabled
  double reward = 0.0;
  bool done = false;
};

struct StepResult {
  std::vector<AgentView> views;  // empty when the episode aborted mid-action
  bool done = false;
  bool blown_up = false;
  double nu_global = 0.0;
  std::vector<double> nu_local;
  std::vector<double> applied_offsets;
  // Clamping can reintroduce a small mean; it is reported, never removed.
  double post_clamp_mean = 0.0;
};

/// One shared simulation serving N_s pseudo-environments: merged actions
/// drive the solver, the observation is probed once, and per-agent
/// recentered views are produced. Rewards always come from the PE-free
/// fields. Sequential; one environment owns one solver.
class Environment {
 public:
  Environment(dns::SolverConfig solver_cfg, EnvConfig env_cfg);

  const EnvConfig& config() const { return ecfg_; }
  const dns::Solver& solver() const { return solver_; }
  const dns::FlowState& state() const;

  /// Start an episode from a developed baseline snapshot.
  void reset(const dns::FlowState& snapshot);

  /// Same, loading from a snapshot file with a compatibility check. A
  /// missing file is a configuration error directing to the baseline
  /// command.
  void reset_from_file(const std::string& path);

  bool episode_active() const;
  int steps_taken() const { return steps_; }

  /// Merged action step of Algorithms 1-3.
  StepResult step(const std::vector<double>& raw_actions);

  /// PE-free probe of the current state.
  GlobalObservation observe() const;

  /// Observation as the policy sees it (PE injected when enabled).
  GlobalObservation observe_for_policy() const;

  /// Recentered per-agent view of the current state (reward field unset).
  AgentView view_for(int agent_index) const;

  double nu_global() const;
  double nu_local(int segment) const;

 private:
  dns::Solver solver_;
  EnvConfig ecfg_;
  dns::FlowState state_;
  bool has_state_ = false;
  int steps_ = 0;
  bool blown_up_ = false;
};

}  // namespace rbclab::env
