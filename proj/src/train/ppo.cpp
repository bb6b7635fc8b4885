#include "rbclab/train/ppo.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "rbclab/autodiff/gaussian.hpp"
#include "rbclab/errors.hpp"

namespace rbclab::train {

namespace ad = rbclab::autodiff;

void PPOHyper::validate() const {
  if (!(clip_epsilon > 0.0 && clip_epsilon < 1.0)) throw ConfigError("clip_epsilon must be in (0, 1)");
  if (!(discount > 0.0 && discount <= 1.0)) throw ConfigError("discount must be in (0, 1]");
  if (gae_lambda < 0.0 || gae_lambda > 1.0) throw ConfigError("gae_lambda must be in [0, 1]");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (update_epochs < 1) throw ConfigError("update_epochs must be >= 1");
  if (minibatch_size < 1) throw ConfigError("minibatch_size must be >= 1");
  if (episodes_per_update < 1) throw ConfigError("episodes_per_update must be >= 1");
  if (!(kl_stop > 0.0)) throw ConfigError("kl_stop must be positive");
  if (entropy_coef < 0.0) throw ConfigError("entropy_coef must be >= 0");
}

std::size_t RolloutBuffer::size() const {
  std::size_t n = 0;
  for (const auto& e : episodes) n += e.transitions.size();
  return n;
}

std::vector<const Transition*> RolloutBuffer::flat() const {
  std::vector<const Transition*> out;
  out.reserve(size());
  for (const auto& e : episodes) {
    for (const auto& t : e.transitions) out.push_back(&t);
  }
  return out;
}

void compute_gae(RolloutBuffer& buffer, const PPOHyper& hyper, bool normalize) {
  if (buffer.size() == 0) throw UsageError("compute_gae: empty rollout buffer");
  const double gamma = hyper.discount;
  const double lam = hyper.gae_lambda;

  for (auto& ep : buffer.episodes) {
    const int na = buffer.n_agents;
    const int steps = ep.steps;
    for (int a = 0; a < na; ++a) {
      double next_value =
          static_cast<int>(ep.bootstrap.size()) == na ? ep.bootstrap[a] : 0.0;
      double next_adv = 0.0;
      for (int t = steps - 1; t >= 0; --t) {
        Transition& tr = ep.transitions[static_cast<std::size_t>(t) * na + a];
        const double delta = tr.reward + gamma * next_value - tr.value;
        const double adv = delta + gamma * lam * next_adv;
        tr.advantage = adv;
        tr.ret = adv + tr.value;
        next_value = tr.value;
        next_adv = adv;
      }
    }
  }

  if (normalize) {
    double mean = 0.0;
    std::size_t n = 0;
    for (auto& ep : buffer.episodes) {
      for (auto& tr : ep.transitions) {
        mean += tr.advantage;
        ++n;
      }
    }
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (auto& ep : buffer.episodes) {
      for (auto& tr : ep.transitions) {
        const double d = tr.advantage - mean;
        var += d * d;
      }
    }
    const double std = std::sqrt(var / static_cast<double>(n));
    for (auto& ep : buffer.episodes) {
      for (auto& tr : ep.transitions) tr.advantage = (tr.advantage - mean) / (std + 1e-8);
    }
  }
  buffer.advantages_ready = true;
}

double clipped_objective(double ratio, double advantage, double epsilon) {
  const double clipped = std::min(std::max(ratio, 1.0 - epsilon), 1.0 + epsilon);
  return std::min(ratio * advantage, clipped * advantage);
}

// ---- trainer -------------------------------------------------------------------

Trainer::Trainer(dns::SolverConfig solver_cfg, env::EnvConfig env_cfg,
                 nets::NetworkSpec net_spec, PPOHyper hyper, std::uint64_t seed)
    : env_(solver_cfg, env_cfg),
      policy_([&] {
        nets::NetworkSpec s = net_spec;
        s.obs_channels = 3;
        s.obs_rows = solver_cfg.probe_rows;
        s.obs_cols = solver_cfg.probe_cols;
        return s;
      }(), RandomStream(seed).derive(1).seed()),
      hyper_(hyper),
      master_(seed),
      action_rng_(master_.derive(2)),
      shuffle_rng_(master_.derive(3)) {
  hyper_.validate();
}

RolloutBuffer Trainer::collect_rollout(const dns::FlowState& snapshot, int episodes) {
  RolloutBuffer buffer;
  const int na = env_.config().n_segments;
  buffer.n_agents = na;

  for (int e = 0; e < episodes; ++e) {
    EpisodeRecord ep;
    env_.reset(snapshot);
    std::vector<env::AgentView> views(na);
    for (int i = 0; i < na; ++i) views[i] = env_.view_for(i);

    while (env_.episode_active()) {
      std::vector<Transition> staged(na);
      std::vector<double> raw(na);
      for (int i = 0; i < na; ++i) {
        const auto out = policy_.forward(views[i].observation);
        const auto sample = nets::act(out, nets::ActMode::Stochastic, action_rng_);
        raw[i] = sample.action;
        Transition& tr = staged[i];
        tr.state = views[i].observation.data;
        tr.action = sample.action;
        tr.log_prob = *sample.log_prob;
        tr.value = out.value;
        tr.agent = i;
        tr.step = ep.steps;
      }
      const auto result = env_.step(raw);
      if (result.blown_up) {
        ep.truncated = true;  // staged transitions have no reward; drop them
        break;
      }
      for (int i = 0; i < na; ++i) {
        staged[i].reward = result.views[i].reward;
        ep.transitions.push_back(std::move(staged[i]));
        views[i] = result.views[i];
      }
      ep.nu_history.push_back(result.nu_global);
      ep.max_post_clamp_mean =
          std::max(ep.max_post_clamp_mean, std::abs(result.post_clamp_mean));
      ep.steps += 1;
    }
    buffer.episodes.push_back(std::move(ep));
  }
  return buffer;
}

EpisodeStats Trainer::episode_stats(const EpisodeRecord& ep, int total_agents) const {
  EpisodeStats st;
  st.steps = ep.steps;
  st.truncated = ep.truncated;
  if (!ep.nu_history.empty()) {
    st.mean_nu = std::accumulate(ep.nu_history.begin(), ep.nu_history.end(), 0.0) /
                 static_cast<double>(ep.nu_history.size());
    st.final_nu = ep.nu_history.back();
  }
  if (!ep.transitions.empty()) {
    double acc = 0.0;
    for (const auto& t : ep.transitions) acc += t.reward;
    st.mean_reward = acc / static_cast<double>(ep.transitions.size());
  }
  (void)total_agents;
  return st;
}

namespace {

struct MiniBatch {
  ad::Tensor states;
  ad::Tensor actions;
  ad::Tensor old_logp;
  ad::Tensor advantages;
  ad::Tensor returns;
  int size = 0;
};

MiniBatch gather(const std::vector<const Transition*>& flat, const std::vector<int>& idx,
                 std::size_t lo, std::size_t hi) {
  MiniBatch mb;
  mb.size = static_cast<int>(hi - lo);
  const int f = static_cast<int>(flat[0]->state.size());
  std::vector<double> xs(static_cast<std::size_t>(mb.size) * f);
  std::vector<double> acts(mb.size), lps(mb.size), advs(mb.size), rets(mb.size);
  for (std::size_t r = lo; r < hi; ++r) {
    const Transition& t = *flat[idx[r]];
    std::copy(t.state.begin(), t.state.end(), xs.begin() + (r - lo) * f);
    acts[r - lo] = t.action;
    lps[r - lo] = t.log_prob;
    advs[r - lo] = t.advantage;
    rets[r - lo] = t.ret;
  }
  mb.states = ad::Tensor::from({mb.size, f}, std::move(xs));
  mb.actions = ad::Tensor::from({mb.size, 1}, std::move(acts));
  mb.old_logp = ad::Tensor::from({mb.size, 1}, std::move(lps));
  mb.advantages = ad::Tensor::from({mb.size, 1}, std::move(advs));
  mb.returns = ad::Tensor::from({mb.size, 1}, std::move(rets));
  return mb;
}

}  // namespace

UpdateReport Trainer::update(const RolloutBuffer& buffer) {
  if (!buffer.advantages_ready) {
    throw UsageError("update: advantages not computed; call compute_gae first");
  }
  const auto flat = buffer.flat();
  if (flat.empty()) throw UsageError("update: empty rollout buffer");

  if (!opt_ready_) {
    policy_opt_ = ad::adam_init(policy_.policy_params());
    value_opt_ = ad::adam_init(policy_.value_params());
    opt_ready_ = true;
  }

  // pre-update parameter copy for the non-finite abort path
  std::vector<std::vector<double>> saved;
  for (const auto& p : policy_.all_params()) {
    saved.emplace_back(p.values().begin(), p.values().end());
  }
  auto restore = [&] {
    auto params = policy_.all_params();
    for (std::size_t i = 0; i < params.size(); ++i) {
      std::copy(saved[i].begin(), saved[i].end(), params[i].values().begin());
    }
  };

  UpdateReport rep;
  double loss_acc = 0.0, vloss_acc = 0.0, clip_acc = 0.0, kl_acc = 0.0;
  int mb_count = 0;

  std::vector<int> idx(flat.size());
  std::iota(idx.begin(), idx.end(), 0);

  const double eps = hyper_.clip_epsilon;
  for (int epoch = 0; epoch < hyper_.update_epochs; ++epoch) {
    shuffle_rng_.shuffle(idx);
    double epoch_kl = 0.0;
    int epoch_mbs = 0;
    for (std::size_t lo = 0; lo < idx.size(); lo += hyper_.minibatch_size) {
      const std::size_t hi = std::min(idx.size(), lo + hyper_.minibatch_size);
      auto mb = gather(flat, idx, lo, hi);

      auto g = policy_.forward_graph(mb.states);
      auto ls = ad::expand_scalar(g.log_std, {mb.size, 1});
      auto logp = ad::gaussian_logpdf(mb.actions, g.mean, ls);
      auto ratio = ad::exp_(ad::sub(logp, mb.old_logp));

      const auto rv = ratio.values();
      for (int i = 0; i < mb.size; ++i) {
        if (!std::isfinite(rv[i])) {
          restore();
          if (!abort_path_.empty()) policy_.save_checkpoint(abort_path_);
          throw NumericalError("non-finite probability ratio at sample index " +
                               std::to_string(idx[lo + i]));
        }
      }

      auto surr1 = ad::mul(ratio, mb.advantages);
      auto surr2 = ad::mul(ad::clip_by_value(ratio, 1.0 - eps, 1.0 + eps), mb.advantages);
      auto policy_loss = ad::scale(ad::mean(ad::min_pairwise(surr1, surr2)), -1.0);
      if (hyper_.entropy_coef > 0.0) {
        // diagonal Gaussian entropy: 0.5 log(2 pi e) + log_std
        auto ent = ad::add(g.log_std,
                           ad::Tensor::scalar(0.5 * (ad::kLog2Pi + 1.0)));
        policy_loss = ad::sub(policy_loss, ad::scale(ent, hyper_.entropy_coef));
      }
      auto verr = ad::sub(g.value, mb.returns);
      auto value_loss = ad::mean(ad::mul(verr, verr));

      if (!std::isfinite(policy_loss.scalar_value()) ||
          !std::isfinite(value_loss.scalar_value())) {
        restore();
        if (!abort_path_.empty()) policy_.save_checkpoint(abort_path_);
        throw NumericalError("non-finite loss during update");
      }

      policy_.zero_grad();
      ad::backward(policy_loss);
      ad::backward(value_loss);
      ad::adam_step(policy_.policy_params(), policy_opt_, hyper_.learning_rate);
      ad::adam_step(policy_.value_params(), value_opt_, hyper_.learning_rate);

      // diagnostics
      double clip_frac = 0.0, kl = 0.0;
      const auto lpv = logp.values();
      const auto olpv = mb.old_logp.values();
      for (int i = 0; i < mb.size; ++i) {
        if (std::abs(rv[i] - 1.0) > eps) clip_frac += 1.0;
        kl += olpv[i] - lpv[i];
      }
      clip_frac /= mb.size;
      kl /= mb.size;

      loss_acc += policy_loss.scalar_value();
      vloss_acc += value_loss.scalar_value();
      clip_acc += clip_frac;
      kl_acc = kl;  // most recent minibatch KL
      epoch_kl += kl;
      ++epoch_mbs;
      ++mb_count;
    }
    rep.epochs_run = epoch + 1;
    if (epoch_mbs > 0 && epoch_kl / epoch_mbs > hyper_.kl_stop) break;
  }

  rep.minibatches = mb_count;
  rep.policy_loss = loss_acc / mb_count;
  rep.value_loss = vloss_acc / mb_count;
  rep.clip_fraction = clip_acc / mb_count;
  rep.approx_kl = kl_acc;
  return rep;
}

// ---- training loop ----------------------------------------------------------------

const char* kTrainCsvHeader = "episode,mean_nu,final_nu,mean_reward,clip_fraction,approx_kl,wall_seconds";

namespace {

std::string format_g17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

TrainResult run_training(dns::SolverConfig solver_cfg, env::EnvConfig env_cfg,
                  nets::NetworkSpec net_spec, PPOHyper hyper, std::uint64_t seed,
                  int episode_budget, const dns::FlowState& snapshot,
                  const TrainSinks& sinks) {
  Trainer trainer(solver_cfg, env_cfg, net_spec, hyper, seed);
  TrainResult result;

  std::ofstream csv;
  if (!sinks.csv_path.empty()) {
    csv.open(sinks.csv_path, std::ios::trunc);
    if (!csv) throw UsageError("cannot open training log: " + sinks.csv_path);
    csv << kTrainCsvHeader << "\n" << std::flush;
  }
  std::ofstream events;
  if (!sinks.events_path.empty()) {
    events.open(sinks.events_path, std::ios::trunc);
    if (!events) throw UsageError("cannot open event stream: " + sinks.events_path);
  }
  if (!sinks.checkpoint_dir.empty()) {
    std::filesystem::create_directories(sinks.checkpoint_dir);
    trainer.set_abort_checkpoint_path(sinks.checkpoint_dir + "/abort.ckpt");
  }

  int episode = 0;
  while (episode < episode_budget) {
    const auto wall0 = std::chrono::steady_clock::now();
    const int batch_eps = std::min(hyper.episodes_per_update, episode_budget - episode);
    auto buffer = trainer.collect_rollout(snapshot, batch_eps);
    compute_gae(buffer, hyper);
    const auto rep = trainer.update(buffer);
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - wall0).count() /
        batch_eps;

    for (const auto& ep : buffer.episodes) {
      const auto st = trainer.episode_stats(ep, buffer.n_agents);
      TrainRow row;
      row.episode = episode;
      row.mean_nu = st.mean_nu;
      row.final_nu = st.final_nu;
      row.mean_reward = st.mean_reward;
      row.clip_fraction = rep.clip_fraction;
      row.approx_kl = rep.approx_kl;
      row.wall_seconds = wall;
      result.rows.push_back(row);
      if (csv.is_open()) {
        csv << row.episode << ',' << format_g17(row.mean_nu) << ',' << format_g17(row.final_nu)
            << ',' << format_g17(row.mean_reward) << ',' << format_g17(row.clip_fraction)
            << ',' << format_g17(row.approx_kl) << ',' << format_g17(row.wall_seconds) << "\n"
            << std::flush;
      }
      ++episode;
    }

    if (events.is_open()) {
      nlohmann::json j{{"event", "update"},
                       {"episode", episode - 1},
                       {"policy_loss", rep.policy_loss},
                       {"value_loss", rep.value_loss},
                       {"clip_fraction", rep.clip_fraction},
                       {"approx_kl", rep.approx_kl},
                       {"epochs_run", rep.epochs_run},
                       {"minibatches", rep.minibatches},
                       {"transitions", buffer.size()},
                       {"max_post_clamp_mean", [&] {
                          double m = 0.0;
                          for (const auto& ep : buffer.episodes)
                            m = std::max(m, ep.max_post_clamp_mean);
                          return m;
                        }()}};
      events << j.dump() << "\n" << std::flush;
    }

    if (!sinks.checkpoint_dir.empty() && sinks.checkpoint_every > 0 &&
        episode % sinks.checkpoint_every == 0) {
      char name[64];
      std::snprintf(name, sizeof name, "/ep_%05d.ckpt", episode);
      trainer.policy().save_checkpoint(sinks.checkpoint_dir + name);
    }
  }

  if (!sinks.checkpoint_dir.empty()) {
    result.final_checkpoint = sinks.checkpoint_dir + "/final.ckpt";
    trainer.policy().save_checkpoint(result.final_checkpoint);
  }
  return result;
}

}  // namespace rbclab::train
