#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rbclab/autodiff/adam.hpp"
#include "rbclab/autodiff/tensor.hpp"
#include "rbclab/env/environment.hpp"
#include "rbclab/nets/policy.hpp"

namespace rbclab::train {

struct PPOHyper {
  double clip_epsilon = 0.2;
  double discount = 0.99;
  double gae_lambda = 0.95;
  double learning_rate = 3.0e-4;
  int update_epochs = 8;
  int minibatch_size = 256;
  int episodes_per_update = 1;
  double kl_stop = 0.02;        // approximate-KL early stop for the epoch loop
  double entropy_coef = 0.0;    // no entropy bonus unless enabled

  void validate() const;
};

/// One (agent, step) sample: recentered state, executed action, behavior
/// log-probability, reward, value estimate, and the computed advantage and
/// return target.
struct Transition {
  std::vector<double> state;
  double action = 0.0;
  double log_prob = 0.0;
  double reward = 0.0;
  double value = 0.0;
  double advantage = 0.0;
  double ret = 0.0;
  int agent = 0;
  int step = 0;
};

struct EpisodeRecord {
  std::vector<Transition> transitions;  // step-major, agent-minor
  std::vector<double> nu_history;       // nu_global after each action
  std::vector<double> bootstrap;        // per-agent value beyond the horizon
  double max_post_clamp_mean = 0.0;     // reported, never silently removed
  int steps = 0;
  bool truncated = false;  // solver blow-up; bootstrap stays zero, flagged
};

struct RolloutBuffer {
  std::vector<EpisodeRecord> episodes;
  int n_agents = 0;
  bool advantages_ready = false;

  std::size_t size() const;
  std::vector<const Transition*> flat() const;
};

/// Generalized advantage estimation per agent stream within each episode;
/// returns = advantages + values. The value beyond the horizon comes from
/// the episode's bootstrap entries (zero when absent: the fixed horizon is
/// treated as terminal, and blow-up truncations are zeroed and flagged).
/// When normalize is set (the training default) advantages are normalized
/// to zero mean and unit standard deviation over the whole buffer.
void compute_gae(RolloutBuffer& buffer, const PPOHyper& hyper, bool normalize = true);

/// The clipped per-sample surrogate objective, min(r A, clip(r) A).
double clipped_objective(double ratio, double advantage, double epsilon);

struct UpdateReport {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double clip_fraction = 0.0;
  double approx_kl = 0.0;
  int epochs_run = 0;
  int minibatches = 0;
};

struct EpisodeStats {
  double mean_nu = 0.0;
  double final_nu = 0.0;
  double mean_reward = 0.0;
  int steps = 0;
  bool truncated = false;
};

/// PPO-Clip over the multi-agent environment: one shared policy serves all
/// N_s agents; each environment step contributes N_s transitions. Rollouts
/// and updates never interleave; everything is driven by one master seed.
class Trainer {
 public:
  Trainer(dns::SolverConfig solver_cfg, env::EnvConfig env_cfg, nets::NetworkSpec net_spec,
          PPOHyper hyper, std::uint64_t seed);

  env::Environment& environment() { return env_; }
  nets::PolicyNet& policy() { return policy_; }
  const PPOHyper& hyper() const { return hyper_; }

  /// Run full episodes from the snapshot with stochastic actions,
  /// recording one transition per (agent, step).
  RolloutBuffer collect_rollout(const dns::FlowState& snapshot, int episodes);

  /// Minibatch Adam epochs on the clipped surrogate and the value MSE,
  /// with the approximate-KL early stop. Advantages must be computed.
  /// On a non-finite loss the pre-update parameters are restored, saved to
  /// abort_checkpoint_path when set, and NumericalError is thrown.
  UpdateReport update(const RolloutBuffer& buffer);

  EpisodeStats episode_stats(const EpisodeRecord& ep, int total_agents) const;

  void set_abort_checkpoint_path(std::string path) { abort_path_ = std::move(path); }

 private:
  env::Environment env_;
  nets::PolicyNet policy_;
  PPOHyper hyper_;
  RandomStream master_;
  RandomStream action_rng_;
  RandomStream shuffle_rng_;
  autodiff::AdamState policy_opt_;
  autodiff::AdamState value_opt_;
  bool opt_ready_ = false;
  std::string abort_path_;
};

struct TrainSinks {
  std::string csv_path;          // per-episode training log
  std::string events_path;       // JSON-lines update reports
  std::string checkpoint_dir;    // periodic + final checkpoints
  int checkpoint_every = 50;
};

struct TrainRow {
  int episode = 0;
  double mean_nu = 0.0;
  double final_nu = 0.0;
  double mean_reward = 0.0;
  double clip_fraction = 0.0;
  double approx_kl = 0.0;
  double wall_seconds = 0.0;  // excluded from determinism comparisons
};

extern const char* kTrainCsvHeader;

struct TrainResult {
  std::vector<TrainRow> rows;
  std::string final_checkpoint;
};

/// Alternate collect/update for the episode budget, appending one CSV row
/// per episode (flushed immediately), one JSONL event per update, and
/// periodic checkpoints. Fully deterministic under a fixed seed except for
/// the wall_seconds column.
TrainResult run_training(dns::SolverConfig solver_cfg, env::EnvConfig env_cfg,
                  nets::NetworkSpec net_spec, PPOHyper hyper, std::uint64_t seed,
                  int episode_budget, const dns::FlowState& snapshot,
                  const TrainSinks& sinks);

}  // namespace rbclab::train
