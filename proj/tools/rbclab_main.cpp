// rbclab: command-line laboratory for DRL control of 2D Rayleigh-Benard
// convection. Subcommands: baseline, train, evaluate, verify, plot.
// Exit codes: 0 success, 1 check/runtime failure, 2 usage error.
#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rbclab/errors.hpp"
#include "rbclab/lab/commands.hpp"
#include "rbclab/lab/experiment_config.hpp"
#include "rbclab/lab/verify.hpp"

namespace {

using namespace rbclab;

std::vector<std::uint64_t> parse_seed_list(const std::string& s) {
  std::vector<std::uint64_t> seeds;
  std::size_t pos = 0;
  while (pos < s.size()) {
    const auto comma = s.find(',', pos);
    const auto tok = s.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
    try {
      seeds.push_back(std::stoull(tok));
    } catch (const std::exception&) {
      throw UsageError("bad seed '" + tok + "' in --seed list");
    }
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  if (seeds.empty()) throw UsageError("--seed list is empty");
  return seeds;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"rbclab: multi-agent DRL control of 2D Rayleigh-Benard convection"};
  app.require_subcommand(1);

  std::string config_path, out_dir, checkpoint, mode = "deterministic", seed_list;
  std::uint64_t eval_seed = 1;
  bool long_suite = false, export_csv = false;
  std::vector<std::string> run_dirs;

  auto* cmd_base = app.add_subcommand("baseline",
                                      "develop and store the uncontrolled baseline flow");
  cmd_base->add_option("--config", config_path, "experiment configuration file")->required();
  cmd_base->add_option("--out", out_dir, "output directory (default: run.out_dir)");

  auto* cmd_tr = app.add_subcommand("train", "train the configured variant for every seed");
  cmd_tr->add_option("--config", config_path)->required();
  cmd_tr->add_option("--seed", seed_list, "comma-separated seed override");
  cmd_tr->add_option("--out", out_dir);

  auto* cmd_ev = app.add_subcommand("evaluate", "run one episode under a trained policy");
  cmd_ev->add_option("--config", config_path)->required();
  cmd_ev->add_option("--checkpoint", checkpoint, "policy checkpoint")->required();
  cmd_ev->add_option("--mode", mode)->check(CLI::IsMember({"stochastic", "deterministic"}));
  cmd_ev->add_option("--seed", eval_seed, "sampling seed (stochastic mode)");
  cmd_ev->add_option("--out", out_dir);
  cmd_ev->add_flag("--export-csv", export_csv, "also export field snapshots as CSV");

  auto* cmd_ver = app.add_subcommand(
      "verify", "solver physics, network invariance and gradient check suites");
  cmd_ver->add_option("--config", config_path,
                      "optional configuration to validate before the pinned suite");
  cmd_ver->add_flag("--long", long_suite, "include the desk-scale learning smoke test");

  auto* cmd_pl = app.add_subcommand("plot", "render learning curves and action histories");
  cmd_pl->add_option("dirs", run_dirs, "run directories")->required()->expected(-1);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;  // --help exits cleanly, bad usage is 2
  }

  try {
    if (*cmd_base) {
      const auto cfg = lab::load_config(config_path);
      const std::string out = out_dir.empty() ? cfg.run.out_dir : out_dir;
      const auto res = lab::cmd_baseline(cfg, out);
      std::printf("baseline written: %s\n", res.snapshot_path.c_str());
      std::printf("Nu_base (time average) = %.6f\n", res.nu_base);
      std::printf("Nu at snapshot         = %.6f\n", res.nu_at_snapshot);
      return 0;
    }
    if (*cmd_tr) {
      auto cfg = lab::load_config(config_path);
      if (!seed_list.empty()) cfg.run.seeds = parse_seed_list(seed_list);
      const std::string out = out_dir.empty() ? cfg.run.out_dir : out_dir;
      const auto arts = lab::cmd_train(cfg, out, config_path);
      for (const auto& p : arts.seed_csvs) std::printf("training log: %s\n", p.c_str());
      for (const auto& p : arts.curve_csvs) std::printf("learning curve: %s\n", p.c_str());
      for (const auto& p : arts.final_checkpoints) std::printf("checkpoint: %s\n", p.c_str());
      return 0;
    }
    if (*cmd_ev) {
      const auto cfg = lab::load_config(config_path);
      const std::string out = out_dir.empty() ? cfg.run.out_dir : out_dir;
      const auto m = mode == "stochastic" ? nets::ActMode::Stochastic
                                          : nets::ActMode::Deterministic;
      const auto res = lab::cmd_evaluate(cfg, out, checkpoint, m, eval_seed, export_csv);
      std::printf("evaluation CSV: %s\n", res.csv_path.c_str());
      for (const auto& p : res.snapshot_paths) std::printf("snapshot: %s\n", p.c_str());
      std::printf("final Nu = %.6f\n", res.final_nu);
      return 0;
    }
    if (*cmd_ver) {
      if (!config_path.empty()) {
        lab::load_config(config_path);  // surface config errors before the suite
        std::printf("config OK: %s\n", config_path.c_str());
      }
      const auto checks = lab::run_verify_suite(long_suite);
      const int failures = lab::report_checks(checks);
      return failures == 0 ? 0 : 1;
    }
    if (*cmd_pl) {
      const auto arts = lab::cmd_plot(run_dirs);
      for (const auto& p : arts.files) std::printf("wrote %s\n", p.c_str());
      return 0;
    }
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "configuration error: %s\n", e.what());
    return 2;
  } catch (const UsageError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 2;
}
