#include "rbclab/lab/commands.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "rbclab/env/environment.hpp"
#include "rbclab/errors.hpp"
#include "rbclab/lab/svg.hpp"
#include "rbclab/train/ppo.hpp"

namespace rbclab::lab {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string g17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void copy_file_bytes(const std::string& from, const std::string& to) {
  std::ifstream in(from, std::ios::binary);
  std::ofstream out(to, std::ios::binary | std::ios::trunc);
  out << in.rdbuf();
}

double resolve_reward_offset(const ExperimentConfig& cfg, const std::string& out_dir) {
  if (!cfg.reward_offset_auto) return cfg.environment.reward_offset;
  return read_baseline_info(out_dir).nu_base;
}

}  // namespace

std::string baseline_snapshot_path(const std::string& out_dir) {
  return out_dir + "/baseline/snapshot.rbc";
}

BaselineResult cmd_baseline(const ExperimentConfig& cfg, const std::string& out_dir) {
  cfg.validate();
  fs::create_directories(out_dir + "/baseline");

  dns::Solver solver(cfg.solver);
  auto state = solver.init_perturbed(cfg.run.baseline_seed, cfg.run.baseline_amplitude);
  const auto profile = dns::WallProfile::uniform(cfg.environment.n_segments);

  // advance in unit chunks, recording Nu for the time average
  std::vector<double> nu_series;
  const int chunks = static_cast<int>(std::llround(cfg.run.baseline_horizon));
  for (int c = 0; c < std::max(chunks, 1); ++c) {
    solver.advance(state, profile, 1.0);
    nu_series.push_back(solver.nusselt_global(state));
  }
  double nu_base = 0.0;
  const std::size_t half = nu_series.size() / 2;
  for (std::size_t i = half; i < nu_series.size(); ++i) nu_base += nu_series[i];
  nu_base /= static_cast<double>(nu_series.size() - half);

  BaselineResult res;
  res.snapshot_path = baseline_snapshot_path(out_dir);
  res.metadata_path = out_dir + "/baseline/baseline.json";
  res.nu_base = nu_base;
  res.nu_at_snapshot = solver.nusselt_global(state);
  dns::save_snapshot(state, cfg.solver, res.snapshot_path);

  json meta{{"nu_base", res.nu_base},
            {"nu_at_snapshot", res.nu_at_snapshot},
            {"horizon", cfg.run.baseline_horizon},
            {"seed", cfg.run.baseline_seed},
            {"snapshot_time", state.time}};
  std::ofstream mf(res.metadata_path, std::ios::trunc);
  mf << meta.dump(2) << "\n";

  // Nu history alongside, for inspection
  std::ofstream nf(out_dir + "/baseline/nu_history.csv", std::ios::trunc);
  nf << "time,nu_global\n";
  for (std::size_t i = 0; i < nu_series.size(); ++i) {
    nf << (i + 1) << ',' << g17(nu_series[i]) << "\n";
  }
  return res;
}

BaselineInfo read_baseline_info(const std::string& out_dir) {
  const std::string path = out_dir + "/baseline/baseline.json";
  std::ifstream f(path);
  if (!f) {
    throw ConfigError("no baseline found at '" + path +
                      "'; run `rbclab baseline --config <cfg> --out " + out_dir + "` first");
  }
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw ConfigError("unreadable baseline metadata at " + path + ": " + e.what());
  }
  BaselineInfo info;
  info.nu_base = j.at("nu_base").get<double>();
  info.nu_at_snapshot = j.at("nu_at_snapshot").get<double>();
  info.horizon = j.at("horizon").get<double>();
  info.seed = j.at("seed").get<std::uint64_t>();
  return info;
}

std::vector<double> moving_average(const std::vector<double>& series, int window) {
  std::vector<double> out(series.size(), std::numeric_limits<double>::quiet_NaN());
  for (std::size_t i = 0; i < series.size(); ++i) {
    if (i + 1 < static_cast<std::size_t>(window)) continue;
    double acc = 0.0;
    for (int k = 0; k < window; ++k) acc += series[i - k];
    out[i] = acc / window;
  }
  return out;
}

bool detect_unlearning(const std::vector<double>& ma, double nu_base) {
  bool learned = false;
  for (double v : ma) {
    if (std::isnan(v)) continue;
    if (v < 0.97 * nu_base) learned = true;
    if (learned && v > 0.99 * nu_base) return true;
  }
  return false;
}

namespace {

constexpr int kMovingAverageWindow = 25;

struct Curve {
  std::vector<double> mean_nu;
  std::vector<double> final_nu;
};

void write_curve_csv(const std::string& path, const std::string& variant,
                     const std::vector<double>& series, double nu_base) {
  const auto ma = moving_average(series, kMovingAverageWindow);
  const bool unlearned = detect_unlearning(ma, nu_base);
  std::ofstream f(path, std::ios::trunc);
  f << "episode,variant,mean_nu,moving_avg_25,unlearned\n";
  for (std::size_t i = 0; i < series.size(); ++i) {
    f << i << ',' << variant << ',' << g17(series[i]) << ',';
    if (!std::isnan(ma[i])) f << g17(ma[i]);
    f << ',' << (unlearned ? 1 : 0) << "\n";
  }
}

}  // namespace

TrainArtifacts cmd_train(const ExperimentConfig& cfg, const std::string& out_dir,
                         const std::string& config_path) {
  cfg.validate();
  fs::create_directories(out_dir);
  if (!config_path.empty()) {
    copy_file_bytes(config_path, out_dir + "/config.json");
  } else {
    std::ofstream f(out_dir + "/config.json", std::ios::trunc);
    f << serialize_config(cfg);
  }

  const auto info = read_baseline_info(out_dir);
  auto env_cfg = cfg.environment;
  env_cfg.reward_offset = resolve_reward_offset(cfg, out_dir);
  const auto snapshot = dns::load_snapshot(baseline_snapshot_path(out_dir));

  TrainArtifacts arts;
  const std::string variant = nets::variant_name(cfg.network, env_cfg.pe_enabled);
  std::vector<Curve> curves;
  std::string seed_errors;

  for (const auto seed : cfg.run.seeds) {
    const std::string sdir = out_dir + "/seed_" + std::to_string(seed);
    fs::create_directories(sdir);
    train::TrainSinks sinks;
    sinks.csv_path = sdir + "/train_log.csv";
    sinks.events_path = sdir + "/events.jsonl";
    sinks.checkpoint_dir = sdir + "/checkpoints";
    sinks.checkpoint_every = cfg.run.checkpoint_every;
    train::TrainResult result;
    try {
      result = train::run_training(cfg.solver, env_cfg, cfg.network, cfg.ppo, seed,
                                   cfg.run.episodes, snapshot, sinks);
    } catch (const std::exception& e) {
      // a failing seed must not take the surviving seeds' artifacts with it
      seed_errors += "seed " + std::to_string(seed) + ": " + e.what() + "; ";
      continue;
    }
    arts.seed_csvs.push_back(sinks.csv_path);
    arts.final_checkpoints.push_back(result.final_checkpoint);

    Curve c;
    for (const auto& row : result.rows) {
      c.mean_nu.push_back(row.mean_nu);
      c.final_nu.push_back(row.final_nu);
    }
    curves.push_back(std::move(c));

    const std::string cpath = out_dir + "/learning_curve_seed" + std::to_string(seed) + ".csv";
    write_curve_csv(cpath, variant, curves.back().mean_nu, info.nu_base);
    arts.curve_csvs.push_back(cpath);
  }
  if (curves.empty()) {
    throw NumericalError("every seed failed: " + seed_errors);
  }

  // averaged curve over seeds, truncated to the shortest run
  std::size_t min_len = std::numeric_limits<std::size_t>::max();
  for (const auto& c : curves) min_len = std::min(min_len, c.mean_nu.size());
  std::vector<double> avg(min_len, 0.0);
  for (std::size_t i = 0; i < min_len; ++i) {
    for (const auto& c : curves) avg[i] += c.mean_nu[i];
    avg[i] /= static_cast<double>(curves.size());
  }
  // plotting convention: unlearning in any single run suppresses the
  // moving average of the averaged curve
  bool any_unlearned = false;
  for (const auto& c : curves) {
    any_unlearned =
        any_unlearned ||
        detect_unlearning(moving_average(c.mean_nu, kMovingAverageWindow), info.nu_base);
  }
  {
    const auto ma = moving_average(avg, kMovingAverageWindow);
    const std::string apath = out_dir + "/learning_curve_avg.csv";
    std::ofstream f(apath, std::ios::trunc);
    f << "episode,variant,avg_mean_nu,moving_avg_25,unlearned\n";
    for (std::size_t i = 0; i < avg.size(); ++i) {
      f << i << ',' << variant << ',' << g17(avg[i]) << ',';
      if (!std::isnan(ma[i]) && !any_unlearned) f << g17(ma[i]);
      f << ',' << (any_unlearned ? 1 : 0) << "\n";
    }
    arts.curve_csvs.push_back(apath);
  }
  if (!seed_errors.empty()) {
    throw NumericalError("some seeds failed (surviving artifacts were written): " +
                         seed_errors);
  }
  return arts;
}

EvaluateResult cmd_evaluate(const ExperimentConfig& cfg, const std::string& out_dir,
                            const std::string& checkpoint_path, nets::ActMode mode,
                            std::uint64_t seed, bool export_snapshot_csv) {
  cfg.validate();
  auto env_cfg = cfg.environment;
  env_cfg.reward_offset = resolve_reward_offset(cfg, out_dir);

  auto policy = nets::PolicyNet::load_checkpoint(checkpoint_path);
  {
    nets::NetworkSpec want = cfg.network;
    want.obs_channels = 3;
    want.obs_rows = cfg.solver.probe_rows;
    want.obs_cols = cfg.solver.probe_cols;
    const auto& got = policy.spec();
    if (!(got == want)) {
      throw ConfigError("checkpoint '" + checkpoint_path +
                        "' was trained with a different network/observation spec than the "
                        "configuration (checkpoint: " +
                        nets::trunk_name(got.trunk) + " " + std::to_string(got.obs_rows) + "x" +
                        std::to_string(got.obs_cols) + ")");
    }
  }

  env::Environment env(cfg.solver, env_cfg);
  env.reset_from_file(baseline_snapshot_path(out_dir));

  const std::string mdir =
      out_dir + (mode == nets::ActMode::Deterministic ? "/eval_deterministic" : "/eval_stochastic");
  fs::create_directories(mdir);
  EvaluateResult res;
  res.csv_path = mdir + "/evaluation.csv";
  std::ofstream csv(res.csv_path, std::ios::trunc);
  const int ns = env_cfg.n_segments;
  csv << "actuation_index,nu_global";
  for (int i = 0; i < ns; ++i) csv << ",nu_local_" << i;
  for (int i = 0; i < ns; ++i) csv << ",action_" << i;
  csv << "\n";

  RandomStream rng(seed);
  std::vector<double> pending = cfg.run.snapshot_times;
  std::sort(pending.begin(), pending.end());
  std::size_t next_snap = 0;
  const double t0 = env.state().time;

  int k = 0;
  while (env.episode_active()) {
    std::vector<double> raw(ns);
    for (int i = 0; i < ns; ++i) {
      const auto out = policy.forward(env.view_for(i).observation);
      raw[i] = nets::act(out, mode, rng).action;
    }
    const auto r = env.step(raw);
    if (r.blown_up) break;
    csv << k << ',' << g17(r.nu_global);
    for (int i = 0; i < ns; ++i) csv << ',' << g17(r.nu_local[i]);
    for (int i = 0; i < ns; ++i) csv << ',' << g17(r.applied_offsets[i]);
    csv << "\n";
    res.final_nu = r.nu_global;

    const double elapsed = env.state().time - t0;
    while (next_snap < pending.size() && elapsed + 1e-9 >= pending[next_snap]) {
      char label[32];
      std::snprintf(label, sizeof label, "t%07.2f", pending[next_snap]);
      fs::create_directories(mdir + "/snapshots");
      const std::string spath = mdir + "/snapshots/" + label + ".rbc";
      dns::save_snapshot(env.state(), cfg.solver, spath);
      res.snapshot_paths.push_back(spath);
      if (export_snapshot_csv) {
        const std::string cpath = mdir + "/snapshots/" + label + ".csv";
        std::ofstream sf(cpath, std::ios::trunc);
        sf << "ix,iy,T,u,v\n";
        const auto& st = env.state();
        for (int iy = 0; iy < st.ny; ++iy) {
          for (int ix = 0; ix < st.nx; ++ix) {
            sf << ix << ',' << iy << ',' << g17(st.T[iy * st.nx + ix]) << ','
               << g17(st.u[iy * st.nx + ix]) << ',' << g17(st.v[iy * st.nx + ix]) << "\n";
          }
        }
        res.snapshot_paths.push_back(cpath);
      }
      ++next_snap;
    }
    ++k;
  }
  return res;
}

// ---- plotting -----------------------------------------------------------------------

namespace {

struct CurveFile {
  std::vector<double> episode;
  std::vector<double> value;
  std::vector<double> ma;
  std::string variant;
  bool unlearned = false;
};

CurveFile read_curve(const std::string& path, int value_col) {
  std::ifstream f(path);
  if (!f) throw UsageError("cannot open curve file: " + path);
  std::string line;
  std::getline(f, line);
  CurveFile c;
  while (std::getline(f, line)) {
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (static_cast<int>(cells.size()) < 5) continue;
    c.episode.push_back(std::stod(cells[0]));
    c.variant = cells[1];
    c.value.push_back(std::stod(cells[value_col]));
    c.ma.push_back(cells[3].empty() ? std::numeric_limits<double>::quiet_NaN()
                                    : std::stod(cells[3]));
    c.unlearned = cells[4] == "1";
  }
  return c;
}

}  // namespace

PlotArtifacts cmd_plot(const std::vector<std::string>& run_dirs) {
  PlotArtifacts arts;
  for (const auto& dir : run_dirs) {
    const std::string avg_path = dir + "/learning_curve_avg.csv";
    if (!fs::exists(avg_path)) {
      throw UsageError("no learning_curve_avg.csv under '" + dir +
                       "'; run `rbclab train` first");
    }
    auto avg = read_curve(avg_path, 2);

    SvgPlot plot(860, 480);
    plot.set_labels("episode", "mean Nu", avg.variant + " learning curve");
    // instantaneous series, transparent
    plot.add_series(avg.episode, avg.value, "#888888", 1.0, "", 0.35,
                    "episode mean Nu");
    // per-seed moving averages, dotted
    for (const auto& entry : fs::directory_iterator(dir)) {
      const auto name = entry.path().filename().string();
      if (name.rfind("learning_curve_seed", 0) == 0 && entry.path().extension() == ".csv") {
        auto c = read_curve(entry.path().string(), 2);
        if (!c.unlearned) {
          plot.add_series(c.episode, c.ma, "#4477aa", 1.2, "4 3", 0.9, "single run (25-ep MA)");
        }
      }
    }
    // averaged moving average, solid (absent when any run unlearned)
    if (!avg.unlearned) {
      plot.add_series(avg.episode, avg.ma, "#cc3311", 2.0, "", 1.0, "multi-run (25-ep MA)");
    }
    const std::string svg_path = dir + "/learning_curve.svg";
    plot.write(svg_path);
    arts.files.push_back(svg_path);

    // the exact plotted series as CSV for external tooling
    const std::string series_path = dir + "/learning_curve_series.csv";
    std::ofstream sf(series_path, std::ios::trunc);
    sf << "episode,instantaneous,moving_avg_25\n";
    for (std::size_t i = 0; i < avg.episode.size(); ++i) {
      sf << avg.episode[i] << ',' << g17(avg.value[i]) << ',';
      if (!std::isnan(avg.ma[i]) && !avg.unlearned) sf << g17(avg.ma[i]);
      sf << "\n";
    }
    arts.files.push_back(series_path);

    // action-history panels from any evaluation run present
    for (const char* sub : {"/eval_deterministic", "/eval_stochastic"}) {
      const std::string epath = dir + sub + "/evaluation.csv";
      if (!fs::exists(epath)) continue;
      std::ifstream f(epath);
      std::string line;
      std::getline(f, line);
      std::stringstream hs(line);
      std::vector<std::string> header;
      std::string cell;
      while (std::getline(hs, cell, ',')) header.push_back(cell);
      int first_action = -1, n_actions = 0;
      for (std::size_t i = 0; i < header.size(); ++i) {
        if (header[i].rfind("action_", 0) == 0) {
          if (first_action < 0) first_action = static_cast<int>(i);
          ++n_actions;
        }
      }
      if (first_action < 0) {
        throw FormatError("no action_* columns in " + epath, 0);
      }
      std::vector<double> idx;
      std::vector<std::vector<double>> actions(n_actions);
      while (std::getline(f, line)) {
        std::stringstream ss(line);
        std::vector<std::string> cells;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        idx.push_back(std::stod(cells[0]));
        for (int a = 0; a < n_actions; ++a) {
          actions[a].push_back(std::stod(cells[first_action + a]));
        }
      }
      SvgPlot ap(860, 480);
      ap.set_labels("actuation", "temperature offset",
                    std::string("action history (") + (sub + 6) + ")");
      for (int a = 0; a < n_actions; ++a) {
        const int hue = (a * 360) / n_actions;
        char color[24];
        std::snprintf(color, sizeof color, "hsl(%d,60%%,40%%)", hue);
        ap.add_series(idx, actions[a], color, 1.2, "", 0.9,
                      "segment " + std::to_string(a));
      }
      const std::string apath = dir + sub + "/action_history.svg";
      ap.write(apath);
      arts.files.push_back(apath);
    }
  }
  return arts;
}

}  // namespace rbclab::lab
