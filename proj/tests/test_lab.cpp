#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "rbclab/errors.hpp"
#include "rbclab/lab/commands.hpp"
#include "rbclab/lab/experiment_config.hpp"
#include "rbclab/lab/verify.hpp"
#include "rbclab/rng.hpp"

using namespace rbclab;
using namespace rbclab::lab;
namespace fs = std::filesystem;

namespace {

ExperimentConfig tiny_config() {
  ExperimentConfig cfg;
  cfg.solver.nx = 20;
  cfg.solver.ny = 17;
  cfg.solver.dt = 0.01;
  cfg.environment.actions_per_episode = 3;
  cfg.environment.action_duration = 0.2;
  cfg.network.hidden_width = 16;
  cfg.ppo.minibatch_size = 30;
  cfg.ppo.update_epochs = 2;
  cfg.run.seeds = {1, 2};
  cfg.run.episodes = 4;
  cfg.run.baseline_horizon = 4.0;
  cfg.run.checkpoint_every = 0;
  return cfg;
}

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string str() const { return path.string(); }
};

}  // namespace

TEST_CASE("config round trip and strict parsing") {
  SUBCASE("parse(serialize(config)) == config") {
    ExperimentConfig cfg = tiny_config();
    cfg.solver.rayleigh = 12345.678;
    cfg.environment.beta = 0.0015;
    cfg.network.trunk = nets::TrunkKind::GI_CNN;
    cfg.run.snapshot_times = {1.0, 40.5};
    cfg.reward_offset_auto = true;
    auto back = parse_config_text(serialize_config(cfg));
    CHECK(back == cfg);

    cfg.reward_offset_auto = false;
    cfg.environment.reward_offset = 2.625;
    back = parse_config_text(serialize_config(cfg));
    CHECK(back == cfg);
  }

  SUBCASE("unknown keys are errors") {
    CHECK_THROWS_WITH_AS(parse_config_text(R"({"sover": {}})"),
                         doctest::Contains("unknown top-level section"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_config_text(R"({"solver": {"raileigh": 1e4}})"),
                         doctest::Contains("unknown key"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_config_text(R"({"ppo": {"clip": 0.2}})"),
                         doctest::Contains("unknown key 'clip'"), ConfigError);
  }

  SUBCASE("bad values are named") {
    CHECK_THROWS_AS(parse_config_text(R"({"solver": {"nx": "lots"}})"), ConfigError);
    CHECK_THROWS_AS(parse_config_text(R"({"network": {"trunk": "gcn"}})"), ConfigError);
    CHECK_THROWS_AS(parse_config_text(R"({"environment": {"reward_offset": "maybe"}})"),
                    ConfigError);
    CHECK_THROWS_AS(parse_config_text("not json at all"), ConfigError);
  }

  SUBCASE("constraint violations surface at parse time") {
    // nx = 20 not divisible by 7 segments
    CHECK_THROWS_AS(
        parse_config_text(R"({"solver": {"nx": 20}, "environment": {"n_segments": 7}})"),
        ConfigError);
  }
}

TEST_CASE("moving average matches an independent recomputation") {
  RandomStream rng(5);
  std::vector<double> series(120);
  for (auto& x : series) x = 2.5 + 0.3 * rng.gaussian();
  const auto ma = moving_average(series, 25);
  for (std::size_t i = 0; i < series.size(); ++i) {
    if (i + 1 < 25) {
      CHECK(std::isnan(ma[i]));
    } else {
      double acc = 0.0;
      for (std::size_t k = i + 1 - 25; k <= i; ++k) acc += series[k];
      CHECK(std::abs(ma[i] - acc / 25.0) <= 1e-12);
    }
  }
}

TEST_CASE("unlearning detection follows the plotting convention") {
  const double nu_base = 3.0;
  // learned then relapsed
  std::vector<double> relapse = {3.0, 2.9, 2.8, 2.6, 2.7, 2.95, 3.0};
  CHECK(detect_unlearning(relapse, nu_base));
  // monotone learning: never flagged
  std::vector<double> good = {3.0, 2.95, 2.9, 2.85, 2.8, 2.75};
  CHECK(!detect_unlearning(good, nu_base));
  // never learned: the early plateau near baseline is not unlearning
  std::vector<double> flat = {3.0, 2.99, 3.01, 3.0, 2.995};
  CHECK(!detect_unlearning(flat, nu_base));
}

TEST_CASE("baseline command") {
  TempDir dir("rbclab_test_baseline");

  SUBCASE("subcritical baseline sits at the conduction Nusselt number") {
    auto cfg = tiny_config();
    cfg.solver.rayleigh = 1.0e3;
    cfg.run.baseline_horizon = 30.0;
    const auto res = cmd_baseline(cfg, dir.str());
    CHECK(std::abs(res.nu_base - 1.0) <= 0.01);
  }

  SUBCASE("repeated invocation with the same seed is bit-identical") {
    auto cfg = tiny_config();
    const auto r1 = cmd_baseline(cfg, dir.str());
    const auto bytes1 = slurp(r1.snapshot_path);
    const auto r2 = cmd_baseline(cfg, dir.str());
    CHECK(bytes1 == slurp(r2.snapshot_path));
    CHECK(r1.nu_base == r2.nu_base);
  }

  SUBCASE("supercritical default develops convection, Nu_base > 1") {
    auto cfg = tiny_config();
    cfg.run.baseline_horizon = 15.0;
    const auto res = cmd_baseline(cfg, dir.str());
    CHECK(res.nu_base > 1.0);
    const auto info = read_baseline_info(dir.str());
    CHECK(info.nu_base == res.nu_base);
    CHECK(info.nu_at_snapshot == res.nu_at_snapshot);
  }

  SUBCASE("missing baseline points at the baseline command") {
    CHECK_THROWS_WITH_AS(read_baseline_info(dir.str() + "/nowhere"),
                         doctest::Contains("baseline"), ConfigError);
  }
}

TEST_CASE("train and evaluate commands") {
  TempDir dir("rbclab_test_train");
  auto cfg = tiny_config();
  cmd_baseline(cfg, dir.str());
  const auto arts = cmd_train(cfg, dir.str());

  SUBCASE("two seeds give three learning-curve files with the variant column") {
    CHECK(arts.curve_csvs.size() == 3);  // two single-run + one averaged
    for (const auto& path : arts.curve_csvs) {
      std::ifstream f(path);
      std::string header, row;
      std::getline(f, header);
      std::getline(f, row);
      CHECK(header.find("variant") != std::string::npos);
      CHECK(row.find("FC") != std::string::npos);
    }
    // averaged row count equals the (equal) single-run length
    std::ifstream f(dir.str() + "/learning_curve_avg.csv");
    std::string line;
    int rows = -1;  // minus header
    while (std::getline(f, line)) ++rows;
    CHECK(rows == cfg.run.episodes);
  }

  SUBCASE("per-seed curve file moving average matches a recomputation") {
    std::ifstream f(dir.str() + "/learning_curve_seed1.csv");
    std::string line;
    std::getline(f, line);
    std::vector<double> nu, ma;
    std::vector<bool> has_ma;
    while (std::getline(f, line)) {
      std::stringstream ss(line);
      std::string cell;
      std::vector<std::string> cells;
      while (std::getline(ss, cell, ',')) cells.push_back(cell);
      nu.push_back(std::stod(cells[2]));
      has_ma.push_back(cells.size() > 3 && !cells[3].empty());
      ma.push_back(has_ma.back() ? std::stod(cells[3]) : 0.0);
    }
    const auto expect = moving_average(nu, 25);
    for (std::size_t i = 0; i < nu.size(); ++i) {
      if (i + 1 < 25) {
        CHECK(!has_ma[i]);
      } else {
        CHECK(has_ma[i]);
        CHECK(std::abs(ma[i] - expect[i]) <= 1e-12);
      }
    }
  }

  SUBCASE("config lands verbatim in the run directory") {
    CHECK(fs::exists(dir.path / "config.json"));
  }

  SUBCASE("evaluation: stochastic seeds differ, actions bounded, spec mismatch rejected") {
    const std::string ckpt = arts.final_checkpoints[0];
    auto r1 = cmd_evaluate(cfg, dir.str(), ckpt, nets::ActMode::Stochastic, 7);
    const auto bytes1 = slurp(r1.csv_path);
    auto r2 = cmd_evaluate(cfg, dir.str(), ckpt, nets::ActMode::Stochastic, 8);
    CHECK(bytes1 != slurp(r2.csv_path));

    // every action column within the clamp
    std::ifstream f(r2.csv_path);
    std::string line;
    std::getline(f, line);
    while (std::getline(f, line)) {
      std::stringstream ss(line);
      std::string cell;
      std::vector<std::string> cells;
      while (std::getline(ss, cell, ',')) cells.push_back(cell);
      for (std::size_t i = cells.size() - 10; i < cells.size(); ++i) {
        CHECK(std::abs(std::stod(cells[i])) <= 0.75 + 1e-15);
      }
    }

    auto wrong = cfg;
    wrong.network.hidden_width = 24;  // checkpoint was trained with 16
    CHECK_THROWS_AS(cmd_evaluate(wrong, dir.str(), ckpt, nets::ActMode::Deterministic, 1),
                    ConfigError);
  }

  SUBCASE("configured snapshot times produce field snapshots") {
    auto cfg2 = cfg;
    cfg2.run.snapshot_times = {0.2, 0.5};
    const auto res = cmd_evaluate(cfg2, dir.str(), arts.final_checkpoints[0],
                                  nets::ActMode::Deterministic, 1, /*export_csv=*/true);
    int rbc = 0, csv = 0;
    for (const auto& p : res.snapshot_paths) {
      CHECK(fs::exists(p));
      if (p.ends_with(".rbc")) ++rbc;
      if (p.ends_with(".csv")) ++csv;
    }
    CHECK(rbc == 2);
    CHECK(csv == 2);
    // the binary snapshots reload
    dns::SnapshotHeader h;
    auto st = dns::load_snapshot(res.snapshot_paths.front(), &h);
    CHECK(h.nx == cfg.solver.nx);
    CHECK(st.time > 0.0);
  }

  SUBCASE("plot renders curves and the exact plotted series") {
    cmd_evaluate(cfg, dir.str(), arts.final_checkpoints[0], nets::ActMode::Deterministic, 1);
    const auto plots = cmd_plot({dir.str()});
    bool svg = false, series = false, actions = false;
    for (const auto& p : plots.files) {
      svg = svg || p.find("learning_curve.svg") != std::string::npos;
      series = series || p.find("learning_curve_series.csv") != std::string::npos;
      actions = actions || p.find("action_history.svg") != std::string::npos;
      CHECK(fs::exists(p));
    }
    CHECK(svg);
    CHECK(series);
    CHECK(actions);
  }

  SUBCASE("plot reports schema problems with the file name") {
    TempDir bad("rbclab_test_badplot");
    fs::create_directories(bad.path / "eval_deterministic");
    {
      std::ofstream f(bad.path / "learning_curve_avg.csv");
      f << "episode,variant,avg_mean_nu,moving_avg_25,unlearned\n0,FC,2.5,,0\n";
      std::ofstream g(bad.path / "eval_deterministic/evaluation.csv");
      g << "actuation_index,nu_global\n0,2.5\n";  // no action_* columns
    }
    CHECK_THROWS_WITH_AS(cmd_plot({bad.str()}), doctest::Contains("evaluation.csv"),
                         FormatError);
    CHECK_THROWS_WITH_AS(cmd_plot({(bad.path / "absent").string()}),
                         doctest::Contains("learning_curve_avg"), UsageError);
  }
}

TEST_CASE("mis-signed flip is caught by the mirror-coupling check") {
  // physical flip: exact pairing
  CHECK(marl_coupling_gap(nets::FlipMode::Physical, false, 77) <= 1e-8);
  // the naive (value-preserving) flip asserted as the physical symmetry
  // must fail the same check
  CHECK(marl_coupling_gap(nets::FlipMode::Naive, false, 77) > 1e-3);
}

#ifdef RBCLAB_CLI_PATH
TEST_CASE("CLI exit codes") {
  const std::string cli = RBCLAB_CLI_PATH;
  CHECK(std::system((cli + " >/dev/null 2>&1").c_str()) != 0);

  // usage error: missing required option
  int rc = std::system((cli + " train >/dev/null 2>&1").c_str());
  CHECK(WEXITSTATUS(rc) == 2);

  // usage error: nonexistent config
  rc = std::system((cli + " baseline --config /no/such.json >/dev/null 2>&1").c_str());
  CHECK(WEXITSTATUS(rc) == 2);

  // bad config contents
  TempDir dir("rbclab_test_cli");
  {
    std::ofstream f(dir.path / "bad.json");
    f << "{\"solver\": {\"rayleigh\": -5}}";
  }
  rc = std::system((cli + " baseline --config " + (dir.path / "bad.json").string() +
                    " >/dev/null 2>&1").c_str());
  CHECK(WEXITSTATUS(rc) == 2);
}
#endif
