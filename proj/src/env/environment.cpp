#include "rbclab/env/environment.hpp"

#include <cmath>
#include <filesystem>

#include "rbclab/errors.hpp"

namespace rbclab::env {

void EnvConfig::validate() const {
  if (n_segments < 1) throw ConfigError("n_segments must be >= 1");
  if (actions_per_episode < 1) throw ConfigError("actions_per_episode must be >= 1");
  if (!(action_duration > 0.0)) throw ConfigError("action_duration must be positive");
  if (beta < 0.0 || beta > 1.0) throw ConfigError("beta must lie in [0, 1]");
  if (!(clamp_limit > 0.0)) throw ConfigError("clamp_limit must be positive");
  if (pe_amplitude < 0.0) throw ConfigError("pe_amplitude must be >= 0");
}

std::vector<double> process_actions(const std::vector<double>& raw, const EnvConfig& cfg) {
  if (static_cast<int>(raw.size()) != cfg.n_segments) {
    throw UsageError("process_actions: got " + std::to_string(raw.size()) +
                     " raw actions for " + std::to_string(cfg.n_segments) + " segments");
  }
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (!(raw[i] >= -1.0 && raw[i] <= 1.0)) {
      throw UsageError("process_actions: raw action " + std::to_string(i) + " = " +
                       std::to_string(raw[i]) + " outside [-1, 1]");
    }
  }
  double mean = 0.0;
  for (double a : raw) mean += a;
  mean /= raw.size();
  std::vector<double> out(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const double centered = raw[i] - mean;
    out[i] = std::min(std::max(centered, -cfg.clamp_limit), cfg.clamp_limit);
  }
  return out;
}

double reward(double nu_global, double nu_local, const EnvConfig& cfg) {
  if (!std::isfinite(nu_global) || !std::isfinite(nu_local)) {
    throw UsageError("reward: non-finite Nusselt input");
  }
  return cfg.reward_scale *
         (cfg.reward_offset - (1.0 - cfg.beta) * nu_global - cfg.beta * nu_local);
}

std::vector<double> positional_encoding_field(const EnvConfig& cfg, double domain_width,
                                              int cols) {
  std::vector<double> f(cols, 0.0);
  for (int p = 0; p < cols; ++p) {
    const double xp = domain_width * p / cols;
    const double arg = cfg.pe_literal_form ? xp / (2.0 * M_PI) : 2.0 * M_PI * p / cols;
    f[p] = cfg.pe_amplitude * std::sin(arg);
  }
  return f;
}

GlobalObservation inject_positional_encoding(const GlobalObservation& obs,
                                             const EnvConfig& cfg, double domain_width) {
  GlobalObservation out = obs;
  if (cfg.pe_amplitude == 0.0) return out;
  const auto field = positional_encoding_field(cfg, domain_width, obs.cols);
  for (int q = 0; q < obs.rows; ++q) {
    for (int p = 0; p < obs.cols; ++p) out.at(0, q, p) += field[p];
  }
  return out;
}

int recenter_shift(int agent_index, const EnvConfig& cfg, int cols) {
  if (agent_index < 0 || agent_index >= cfg.n_segments) {
    throw UsageError("recenter: agent index " + std::to_string(agent_index) +
                     " out of range [0, " + std::to_string(cfg.n_segments) + ")");
  }
  const double ns = cfg.n_segments;
  const double ideal = cols * agent_index / ns + cols / (2.0 * ns) - (cols - 1) / 2.0;
  const double r = std::round(ideal);  // half-away-from-zero, sign-symmetric
  return static_cast<int>(r);
}

GlobalObservation recenter_by_shift(const GlobalObservation& obs, int shift) {
  GlobalObservation out = obs;
  const int W = obs.cols;
  const int s = ((shift % W) + W) % W;
  for (int ch = 0; ch < 3; ++ch) {
    for (int q = 0; q < obs.rows; ++q) {
      for (int p = 0; p < W; ++p) out.at(ch, q, p) = obs.at(ch, q, (p + s) % W);
    }
  }
  return out;
}

GlobalObservation recenter(const GlobalObservation& obs, int agent_index,
                           const EnvConfig& cfg) {
  return recenter_by_shift(obs, recenter_shift(agent_index, cfg, obs.cols));
}

Environment::Environment(dns::SolverConfig solver_cfg, EnvConfig env_cfg)
    : solver_(solver_cfg), ecfg_(env_cfg) {
  ecfg_.validate();
  if (solver_cfg.nx % ecfg_.n_segments != 0) {
    throw ConfigError("nx = " + std::to_string(solver_cfg.nx) +
                      " must be divisible by n_segments = " +
                      std::to_string(ecfg_.n_segments));
  }
}

const dns::FlowState& Environment::state() const {
  if (!has_state_) throw UsageError("environment has no state; call reset first");
  return state_;
}

void Environment::reset(const dns::FlowState& snapshot) {
  if (snapshot.nx != solver_.config().nx || snapshot.ny != solver_.config().ny) {
    throw ConfigError("snapshot grid does not match the solver configuration");
  }
  state_ = snapshot;
  has_state_ = true;
  steps_ = 0;
  blown_up_ = false;
}

void Environment::reset_from_file(const std::string& path) {
  if (!std::filesystem::exists(path)) {
    throw ConfigError("baseline snapshot not found at '" + path +
                      "'; run the baseline command first to create it");
  }
  dns::SnapshotHeader h;
  auto s = dns::load_snapshot(path, &h);
  dns::require_snapshot_compatible(h, solver_.config());
  reset(s);
}

bool Environment::episode_active() const {
  return has_state_ && !blown_up_ && steps_ < ecfg_.actions_per_episode;
}

StepResult Environment::step(const std::vector<double>& raw_actions) {
  if (!episode_active()) {
    throw UsageError("episode is not active; call reset before stepping");
  }
  StepResult res;
  res.applied_offsets = process_actions(raw_actions, ecfg_);
  double m = 0.0;
  for (double a : res.applied_offsets) m += a;
  res.post_clamp_mean = m / res.applied_offsets.size();

  dns::WallProfile profile{res.applied_offsets};
  try {
    solver_.advance(state_, profile, ecfg_.action_duration);
  } catch (const BlowUpError&) {
    blown_up_ = true;
    res.blown_up = true;
    res.done = true;
    return res;
  }

  steps_ += 1;
  res.done = steps_ >= ecfg_.actions_per_episode;
  res.nu_global = solver_.nusselt_global(state_);
  res.nu_local.resize(ecfg_.n_segments);
  for (int i = 0; i < ecfg_.n_segments; ++i) {
    res.nu_local[i] = solver_.nusselt_local(state_, i, ecfg_.n_segments);
  }

  const GlobalObservation policy_obs = observe_for_policy();
  res.views.resize(ecfg_.n_segments);
  for (int i = 0; i < ecfg_.n_segments; ++i) {
    res.views[i].agent_index = i;
    res.views[i].observation = recenter(policy_obs, i, ecfg_);
    res.views[i].reward = reward(res.nu_global, res.nu_local[i], ecfg_);
    res.views[i].done = res.done;
  }
  return res;
}

GlobalObservation Environment::observe() const { return solver_.probe(state()); }

GlobalObservation Environment::observe_for_policy() const {
  GlobalObservation obs = observe();
  if (ecfg_.pe_enabled) {
    obs = inject_positional_encoding(obs, ecfg_, solver_.config().domain_width);
  }
  return obs;
}

AgentView Environment::view_for(int agent_index) const {
  AgentView v;
  v.agent_index = agent_index;
  v.observation = recenter(observe_for_policy(), agent_index, ecfg_);
  v.done = !episode_active();
  return v;
}

double Environment::nu_global() const { return solver_.nusselt_global(state()); }

double Environment::nu_local(int segment) const {
  return solver_.nusselt_local(state(), segment, ecfg_.n_segments);
}

}  // namespace rbclab::env
