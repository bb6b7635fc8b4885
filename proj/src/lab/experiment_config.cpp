#include "rbclab/lab/experiment_config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "rbclab/errors.hpp"

namespace rbclab::lab {

using nlohmann::json;

namespace {

// Strict section reader: every key must be consumed exactly once.
class Section {
 public:
  Section(const json& j, std::string name) : name_(std::move(name)) {
    if (!j.is_object()) throw ConfigError("section '" + name_ + "' must be an object");
    obj_ = &j;
  }

  template <typename T>
  void get(const char* key, T& out) {
    auto it = obj_->find(key);
    if (it == obj_->end()) return;  // keep the default
    try {
      out = it->get<T>();
    } catch (const json::exception& e) {
      throw ConfigError("bad value for '" + name_ + "." + key + "': " + e.what());
    }
    seen_.insert(key);
  }

  void get_string(const char* key, std::string& out) { get<std::string>(key, out); }

  bool has(const char* key) const { return obj_->contains(key); }
  void mark(const char* key) { seen_.insert(key); }

  void finish() const {
    for (auto it = obj_->begin(); it != obj_->end(); ++it) {
      if (!seen_.count(it.key())) {
        throw ConfigError("unknown key '" + it.key() + "' in section '" + name_ + "'");
      }
    }
  }

  const json& raw(const char* key) { return (*obj_)[key]; }

 private:
  const json* obj_ = nullptr;
  std::string name_;
  std::set<std::string> seen_;
};

nets::TrunkKind parse_trunk(const std::string& s) {
  if (s == "fc") return nets::TrunkKind::FC;
  if (s == "gi-nn") return nets::TrunkKind::GI_NN;
  if (s == "gi-cnn") return nets::TrunkKind::GI_CNN;
  throw ConfigError("network.trunk must be one of fc, gi-nn, gi-cnn (got '" + s + "')");
}

std::string trunk_str(nets::TrunkKind k) {
  switch (k) {
    case nets::TrunkKind::FC: return "fc";
    case nets::TrunkKind::GI_NN: return "gi-nn";
    case nets::TrunkKind::GI_CNN: return "gi-cnn";
  }
  return "fc";
}

}  // namespace

void ExperimentConfig::validate() const {
  solver.validate();
  environment.validate();
  network.validate();
  ppo.validate();
  if (run.episodes < 1) throw ConfigError("run.episodes must be >= 1");
  if (run.seeds.empty()) throw ConfigError("run.seeds must not be empty");
  if (!(run.baseline_horizon > 0.0)) throw ConfigError("run.baseline_horizon must be positive");
  if (solver.nx % environment.n_segments != 0) {
    throw ConfigError("solver.nx must be divisible by environment.n_segments");
  }
}

bool ExperimentConfig::operator==(const ExperimentConfig& o) const {
  auto solver_eq = [&] {
    const auto& a = solver;
    const auto& b = o.solver;
    return a.rayleigh == b.rayleigh && a.prandtl == b.prandtl &&
           a.domain_width == b.domain_width && a.nx == b.nx && a.ny == b.ny && a.dt == b.dt &&
           a.top_temperature == b.top_temperature &&
           a.bottom_temperature == b.bottom_temperature && a.probe_rows == b.probe_rows &&
           a.probe_cols == b.probe_cols;
  };
  auto env_eq = [&] {
    const auto& a = environment;
    const auto& b = o.environment;
    return a.n_segments == b.n_segments && a.actions_per_episode == b.actions_per_episode &&
           a.action_duration == b.action_duration && a.beta == b.beta &&
           a.reward_scale == b.reward_scale && a.reward_offset == b.reward_offset &&
           a.clamp_limit == b.clamp_limit && a.pe_enabled == b.pe_enabled &&
           a.pe_amplitude == b.pe_amplitude && a.pe_literal_form == b.pe_literal_form;
  };
  auto ppo_eq = [&] {
    const auto& a = ppo;
    const auto& b = o.ppo;
    return a.clip_epsilon == b.clip_epsilon && a.discount == b.discount &&
           a.gae_lambda == b.gae_lambda && a.learning_rate == b.learning_rate &&
           a.update_epochs == b.update_epochs && a.minibatch_size == b.minibatch_size &&
           a.episodes_per_update == b.episodes_per_update && a.kl_stop == b.kl_stop &&
           a.entropy_coef == b.entropy_coef;
  };
  return solver_eq() && env_eq() && network == o.network && ppo_eq() && run == o.run &&
         reward_offset_auto == o.reward_offset_auto;
}

ExperimentConfig parse_config_text(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config root must be a JSON object");
  const std::set<std::string> known = {"solver", "environment", "network", "ppo", "run"};
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!known.count(it.key())) {
      throw ConfigError("unknown top-level section '" + it.key() + "'");
    }
  }

  ExperimentConfig cfg;

  if (j.contains("solver")) {
    Section s(j["solver"], "solver");
    s.get("rayleigh", cfg.solver.rayleigh);
    s.get("prandtl", cfg.solver.prandtl);
    s.get("domain_width", cfg.solver.domain_width);
    s.get("nx", cfg.solver.nx);
    s.get("ny", cfg.solver.ny);
    s.get("dt", cfg.solver.dt);
    s.get("top_temperature", cfg.solver.top_temperature);
    s.get("bottom_temperature", cfg.solver.bottom_temperature);
    s.get("probe_rows", cfg.solver.probe_rows);
    s.get("probe_cols", cfg.solver.probe_cols);
    s.finish();
  }

  if (j.contains("environment")) {
    Section s(j["environment"], "environment");
    s.get("n_segments", cfg.environment.n_segments);
    s.get("actions_per_episode", cfg.environment.actions_per_episode);
    s.get("action_duration", cfg.environment.action_duration);
    s.get("beta", cfg.environment.beta);
    s.get("reward_scale", cfg.environment.reward_scale);
    if (s.has("reward_offset")) {
      const auto& v = s.raw("reward_offset");
      if (v.is_string()) {
        if (v.get<std::string>() != "auto") {
          throw ConfigError("environment.reward_offset must be a number or \"auto\"");
        }
        cfg.reward_offset_auto = true;
      } else if (v.is_number()) {
        cfg.reward_offset_auto = false;
        cfg.environment.reward_offset = v.get<double>();
      } else {
        throw ConfigError("environment.reward_offset must be a number or \"auto\"");
      }
      s.mark("reward_offset");
    }
    s.get("clamp_limit", cfg.environment.clamp_limit);
    s.get("pe_enabled", cfg.environment.pe_enabled);
    s.get("pe_amplitude", cfg.environment.pe_amplitude);
    s.get("pe_literal_form", cfg.environment.pe_literal_form);
    s.finish();
  }

  if (j.contains("network")) {
    Section s(j["network"], "network");
    std::string trunk = trunk_str(cfg.network.trunk);
    s.get_string("trunk", trunk);
    cfg.network.trunk = parse_trunk(trunk);
    s.get("hidden_width", cfg.network.hidden_width);
    s.get("hidden_layers", cfg.network.hidden_layers);
    s.get("conv_kernels", cfg.network.conv_kernels);
    s.get("gicnn_hidden", cfg.network.gicnn_hidden);
    std::string flip = cfg.network.flip_mode == nets::FlipMode::Physical ? "physical" : "naive";
    s.get_string("flip_mode", flip);
    if (flip == "physical") cfg.network.flip_mode = nets::FlipMode::Physical;
    else if (flip == "naive") cfg.network.flip_mode = nets::FlipMode::Naive;
    else throw ConfigError("network.flip_mode must be physical or naive");
    std::string act = cfg.network.activation == nets::Activation::Tanh ? "tanh" : "softplus";
    s.get_string("activation", act);
    if (act == "tanh") cfg.network.activation = nets::Activation::Tanh;
    else if (act == "softplus") cfg.network.activation = nets::Activation::Softplus;
    else throw ConfigError("network.activation must be tanh or softplus");
    s.get("ginn_half_scale", cfg.network.ginn_half_scale);
    s.get("init_log_std", cfg.network.init_log_std);
    s.finish();
  }

  if (j.contains("ppo")) {
    Section s(j["ppo"], "ppo");
    s.get("clip_epsilon", cfg.ppo.clip_epsilon);
    s.get("discount", cfg.ppo.discount);
    s.get("gae_lambda", cfg.ppo.gae_lambda);
    s.get("learning_rate", cfg.ppo.learning_rate);
    s.get("update_epochs", cfg.ppo.update_epochs);
    s.get("minibatch_size", cfg.ppo.minibatch_size);
    s.get("episodes_per_update", cfg.ppo.episodes_per_update);
    s.get("kl_stop", cfg.ppo.kl_stop);
    s.get("entropy_coef", cfg.ppo.entropy_coef);
    s.finish();
  }

  if (j.contains("run")) {
    Section s(j["run"], "run");
    s.get("seeds", cfg.run.seeds);
    s.get("out_dir", cfg.run.out_dir);
    s.get("episodes", cfg.run.episodes);
    s.get("baseline_horizon", cfg.run.baseline_horizon);
    s.get("baseline_seed", cfg.run.baseline_seed);
    s.get("baseline_amplitude", cfg.run.baseline_amplitude);
    s.get("checkpoint_every", cfg.run.checkpoint_every);
    s.get("snapshot_times", cfg.run.snapshot_times);
    s.finish();
  }

  // the network consumes observations shaped by the solver's probe grid
  cfg.network.obs_channels = 3;
  cfg.network.obs_rows = cfg.solver.probe_rows;
  cfg.network.obs_cols = cfg.solver.probe_cols;

  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file: " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config_text(ss.str());
}

std::string serialize_config(const ExperimentConfig& cfg) {
  json j;
  j["solver"] = {{"rayleigh", cfg.solver.rayleigh},
                 {"prandtl", cfg.solver.prandtl},
                 {"domain_width", cfg.solver.domain_width},
                 {"nx", cfg.solver.nx},
                 {"ny", cfg.solver.ny},
                 {"dt", cfg.solver.dt},
                 {"top_temperature", cfg.solver.top_temperature},
                 {"bottom_temperature", cfg.solver.bottom_temperature},
                 {"probe_rows", cfg.solver.probe_rows},
                 {"probe_cols", cfg.solver.probe_cols}};
  j["environment"] = {{"n_segments", cfg.environment.n_segments},
                      {"actions_per_episode", cfg.environment.actions_per_episode},
                      {"action_duration", cfg.environment.action_duration},
                      {"beta", cfg.environment.beta},
                      {"reward_scale", cfg.environment.reward_scale},
                      {"clamp_limit", cfg.environment.clamp_limit},
                      {"pe_enabled", cfg.environment.pe_enabled},
                      {"pe_amplitude", cfg.environment.pe_amplitude},
                      {"pe_literal_form", cfg.environment.pe_literal_form}};
  if (cfg.reward_offset_auto) {
    j["environment"]["reward_offset"] = "auto";
  } else {
    j["environment"]["reward_offset"] = cfg.environment.reward_offset;
  }
  j["network"] = {{"trunk", trunk_str(cfg.network.trunk)},
                  {"hidden_width", cfg.network.hidden_width},
                  {"hidden_layers", cfg.network.hidden_layers},
                  {"conv_kernels", cfg.network.conv_kernels},
                  {"gicnn_hidden", cfg.network.gicnn_hidden},
                  {"flip_mode",
                   cfg.network.flip_mode == nets::FlipMode::Physical ? "physical" : "naive"},
                  {"activation",
                   cfg.network.activation == nets::Activation::Tanh ? "tanh" : "softplus"},
                  {"ginn_half_scale", cfg.network.ginn_half_scale},
                  {"init_log_std", cfg.network.init_log_std}};
  j["ppo"] = {{"clip_epsilon", cfg.ppo.clip_epsilon},
              {"discount", cfg.ppo.discount},
              {"gae_lambda", cfg.ppo.gae_lambda},
              {"learning_rate", cfg.ppo.learning_rate},
              {"update_epochs", cfg.ppo.update_epochs},
              {"minibatch_size", cfg.ppo.minibatch_size},
              {"episodes_per_update", cfg.ppo.episodes_per_update},
              {"kl_stop", cfg.ppo.kl_stop},
              {"entropy_coef", cfg.ppo.entropy_coef}};
  j["run"] = {{"seeds", cfg.run.seeds},
              {"out_dir", cfg.run.out_dir},
              {"episodes", cfg.run.episodes},
              {"baseline_horizon", cfg.run.baseline_horizon},
              {"baseline_seed", cfg.run.baseline_seed},
              {"baseline_amplitude", cfg.run.baseline_amplitude},
              {"checkpoint_every", cfg.run.checkpoint_every},
              {"snapshot_times", cfg.run.snapshot_times}};
  return j.dump(2) + "\n";
}

}  // namespace rbclab::lab
