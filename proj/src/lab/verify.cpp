#include "rbclab/lab/verify.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "rbclab/autodiff/tensor.hpp"
#include "rbclab/env/environment.hpp"
#include "rbclab/errors.hpp"
#include "rbclab/lab/commands.hpp"
#include "rbclab/rng.hpp"
#include "rbclab/train/ppo.hpp"

namespace rbclab::lab {

namespace ad = rbclab::autodiff;
namespace fs = std::filesystem;

namespace {

std::string fmt(const char* pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, v);
  return buf;
}

CheckResult make_check(std::string name, bool passed, std::string detail) {
  return CheckResult{std::move(name), passed, std::move(detail)};
}

template <typename Fn>
CheckResult guarded(std::string name, Fn&& fn) {
  try {
    return fn(std::move(name));
  } catch (const std::exception& e) {
    return make_check(name, false, std::string("exception: ") + e.what());
  }
}

dns::ProbeImage random_observation(RandomStream& rng, int rows, int cols) {
  dns::ProbeImage o;
  o.rows = rows;
  o.cols = cols;
  o.data.resize(static_cast<std::size_t>(3) * rows * cols);
  for (auto& x : o.data) x = rng.gaussian();
  return o;
}

}  // namespace

// ---- network invariance -------------------------------------------------------------

std::vector<CheckResult> verify_network_invariance() {
  std::vector<CheckResult> out;
  constexpr int kPairs = 1000;
  constexpr double kInvarianceTol = 1e-9;
  constexpr double kControlGap = 1e-3;

  for (auto kind : {nets::TrunkKind::GI_NN, nets::TrunkKind::GI_CNN}) {
    out.push_back(guarded(
        "network invariance: " + nets::trunk_name(kind) +
            " policy/value invariant under flip (1000 pairs, tol 1e-9)",
        [&](std::string name) {
          nets::NetworkSpec spec;
          spec.trunk = kind;
          nets::PolicyNet net(spec, 7);
          RandomStream obs_rng(100);
          double worst = 0.0;
          for (int i = 0; i < kPairs; ++i) {
            RandomStream prng(5000 + i);
            net.randomize(prng, 1.0);
            const auto o = random_observation(obs_rng, spec.obs_rows, spec.obs_cols);
            const auto a = net.forward(o);
            const auto b = net.forward(nets::flip_observation(o, spec.flip_mode));
            worst = std::max(worst, std::abs(a.action_mean - b.action_mean));
            worst = std::max(worst, std::abs(a.value - b.value));
          }
          return make_check(std::move(name), worst <= kInvarianceTol,
                            "worst |phi(s) - phi(flip s)| = " + fmt("%.3e", worst));
        }));
  }

  out.push_back(guarded(
      "network invariance: FC baseline fails flip invariance for >= 95% of pairs",
      [&](std::string name) {
        nets::NetworkSpec spec;  // FC default
        nets::PolicyNet net(spec, 7);
        RandomStream obs_rng(101);
        int broken = 0;
        for (int i = 0; i < kPairs; ++i) {
          RandomStream prng(9000 + i);
          net.randomize(prng, 1.0);
          const auto o = random_observation(obs_rng, spec.obs_rows, spec.obs_cols);
          const auto a = net.forward(o);
          const auto b = net.forward(nets::flip_observation(o, spec.flip_mode));
          if (std::abs(a.action_mean - b.action_mean) > kControlGap) ++broken;
        }
        return make_check(std::move(name), broken >= 950,
                          std::to_string(broken) + " / 1000 pairs exceed 1e-3");
      }));
  return out;
}

// ---- parameter counts ---------------------------------------------------------------

std::vector<CheckResult> verify_parameter_counts() {
  std::vector<CheckResult> out;
  out.push_back(guarded("parameter count: FC trunk weights equal 655360 exactly",
                        [&](std::string name) {
                          nets::NetworkSpec spec;
                          nets::PolicyNet net(spec, 1);
                          const auto n = net.parameter_report().trunk_weight_count();
                          return make_check(std::move(name), n == 655360,
                                            "count = " + std::to_string(n));
                        }));
  out.push_back(guarded(
      "parameter count: GI-CNN breakdown reported against the 420864 target",
      [&](std::string name) {
        nets::NetworkSpec spec;
        spec.trunk = nets::TrunkKind::GI_CNN;
        nets::PolicyNet net(spec, 1);
        const auto rep = net.parameter_report();
        const auto n = rep.trunk_weight_count();
        std::ostringstream os;
        os << "count = " << n << " (target 420864, "
           << (n == 420864 ? "matches" : "differs") << ")\n"
           << rep.to_string();
        return make_check(std::move(name), !rep.rows.empty(), os.str());
      }));
  return out;
}

// ---- action pipeline ------------------------------------------------------------------

std::vector<CheckResult> verify_action_pipeline() {
  std::vector<CheckResult> out;
  out.push_back(guarded(
      "action pipeline: 1e6 vectors keep pre-clamp mean <= 1e-12 and outputs within 0.75",
      [&](std::string name) {
        env::EnvConfig cfg;
        cfg.n_segments = 10;
        RandomStream rng(42);
        double worst_mean = 0.0, worst_abs = 0.0;
        std::vector<double> raw(10);
        for (int trial = 0; trial < 1000000; ++trial) {
          for (auto& a : raw) a = rng.uniform(-1.0, 1.0);
          double mean = 0.0;
          for (double a : raw) mean += a;
          mean /= raw.size();
          double presum = 0.0;
          for (double a : raw) presum += a - mean;
          worst_mean = std::max(worst_mean, std::abs(presum) / raw.size());
          const auto processed = env::process_actions(raw, cfg);
          for (double a : processed) worst_abs = std::max(worst_abs, std::abs(a));
        }
        const bool pass = worst_mean <= 1e-12 && worst_abs <= 0.75;
        return make_check(std::move(name), pass,
                          "worst pre-clamp mean = " + fmt("%.3e", worst_mean) +
                              ", worst |offset| = " + fmt("%.6f", worst_abs));
      }));
  return out;
}

// ---- clip algebra ------------------------------------------------------------------------

std::vector<CheckResult> verify_clip_algebra() {
  std::vector<CheckResult> out;
  out.push_back(guarded("clip algebra: worked examples hold exactly", [&](std::string name) {
    const bool ok = train::clipped_objective(1.5, 1.0, 0.2) == 1.2 &&
                    train::clipped_objective(0.5, -1.0, 0.2) == -0.8 &&
                    train::clipped_objective(1.0, 0.37, 0.2) == 0.37;
    return make_check(std::move(name), ok,
                      "min(1.5,1.2)=1.2, min(-0.5,-0.8)=-0.8, ratio 1 passes through");
  }));

  out.push_back(guarded(
      "clip algebra: per-sample policy gradient is exactly zero beyond the band",
      [&](std::string name) {
        const double eps = 0.2;
        auto gate = [&](double logp_new0, double adv) {
          auto lp = ad::Tensor::scalar(logp_new0, true);
          auto ratio = ad::exp_(ad::sub(lp, ad::Tensor::scalar(0.0)));
          auto surr1 = ad::mul(ratio, ad::Tensor::scalar(adv));
          auto surr2 =
              ad::mul(ad::clip_by_value(ratio, 1.0 - eps, 1.0 + eps), ad::Tensor::scalar(adv));
          ad::backward(ad::scale(ad::min_pairwise(surr1, surr2), -1.0));
          return lp.grad()[0];
        };
        const bool ok = gate(0.5, 1.0) == 0.0 && gate(-0.5, -1.0) == 0.0 &&
                        gate(0.05, 1.0) != 0.0 && gate(-0.05, -1.0) != 0.0;
        return make_check(std::move(name), ok,
                          "zero outside the band, live inside (both advantage signs)");
      }));
  return out;
}

// ---- gradient checks ----------------------------------------------------------------------

namespace {

double central_diff_leaf(ad::Tensor& leaf, int64_t i, const std::function<double()>& f,
                         double h = 1e-5) {
  auto v = leaf.values();
  const double saved = v[i];
  v[i] = saved + h;
  const double fp = f();
  v[i] = saved - h;
  const double fm = f();
  v[i] = saved;
  return (fp - fm) / (2.0 * h);
}

bool grad_close(double analytic, double fd, double rel_tol) {
  const double diff = std::abs(analytic - fd);
  const double scale = std::max(std::abs(analytic), std::abs(fd));
  return diff <= rel_tol * scale + 1e-8;
}

}  // namespace

std::vector<CheckResult> verify_gradients() {
  std::vector<CheckResult> out;
  constexpr double kRelTol = 1e-4;

  out.push_back(guarded(
      "gradients: differentiable op suite vs central differences (100 seeds, rel 1e-4)",
      [&](std::string name) {
        int failures = 0;
        double worst = 0.0;
        for (std::uint64_t seed = 0; seed < 100; ++seed) {
          RandomStream rng(300 + seed);
          const int c = 1 + static_cast<int>(rng.below(4));
          const int h = 1 + static_cast<int>(rng.below(8));
          const int w = 1 + static_cast<int>(rng.below(8));
          std::vector<double> xv(static_cast<std::size_t>(c) * h * w);
          std::vector<double> yv(xv.size());
          for (auto& x : xv) x = rng.gaussian();
          for (auto& y : yv) y = rng.gaussian();
          auto x = ad::Tensor::from({c, h, w}, xv, true);
          auto y = ad::Tensor::from({c, h, w}, yv, true);
          std::vector<double> mask(c);
          for (auto& s : mask) s = rng.uniform() < 0.5 ? 1.0 : -1.0;
          std::vector<double> kv(static_cast<std::size_t>(2) * c * 9);
          for (auto& k : kv) k = rng.gaussian();
          auto kern = ad::Tensor::from({2, c, 3, 3}, kv, true);

          auto loss_t = [&] {
            auto conv = ad::conv2d_zero_pad(x, kern);
            auto u = ad::add(ad::mul(ad::tanh_(x), ad::exp_(ad::scale(y, 0.1))),
                             ad::reverse_width(x, mask));
            auto v = ad::min_pairwise(u, ad::clip_by_value(y, -0.5, 0.5));
            auto lp = ad::gaussian_logpdf(ad::tanh_(x), ad::scale(y, 0.2),
                                          ad::clip_by_value(y, -1.0, 1.0));
            return ad::add(ad::add(ad::mean(ad::softplus(v)), ad::mean(lp)),
                           ad::mean(ad::mul(conv, conv)));
          };
          x.zero_grad();
          y.zero_grad();
          kern.zero_grad();
          ad::backward(loss_t());
          auto f = [&] { return loss_t().scalar_value(); };
          auto probe = [&](ad::Tensor& t) {
            const int64_t stride = std::max<int64_t>(1, t.size() / 3);
            for (int64_t i = 0; i < t.size(); i += stride) {
              const double fd = central_diff_leaf(t, i, f);
              if (!grad_close(t.grad()[i], fd, kRelTol)) ++failures;
              worst = std::max(worst, std::abs(t.grad()[i] - fd));
            }
          };
          probe(x);
          probe(y);
          probe(kern);
        }
        return make_check(std::move(name), failures == 0,
                          std::to_string(failures) + " failures, worst abs gap " +
                              fmt("%.3e", worst));
      }));

  out.push_back(guarded(
      "gradients: all three trunk families vs central differences (100 seeds, rel 1e-4)",
      [&](std::string name) {
        int failures = 0;
        const nets::TrunkKind kinds[] = {nets::TrunkKind::FC, nets::TrunkKind::GI_NN,
                                         nets::TrunkKind::GI_CNN};
        for (std::uint64_t seed = 0; seed < 100; ++seed) {
          nets::NetworkSpec spec;
          spec.trunk = kinds[seed % 3];
          spec.hidden_width = 12;
          spec.hidden_layers = 2;
          spec.conv_kernels = 4;
          spec.gicnn_hidden = 6;
          spec.obs_rows = 4;
          spec.obs_cols = 8;
          nets::PolicyNet net(spec, 17 + seed);
          RandomStream rng(18 + seed);
          std::vector<double> feat(spec.obs_features());
          for (auto& x : feat) x = rng.gaussian();
          auto batch = ad::Tensor::from({1, static_cast<int>(spec.obs_features())}, feat);
          auto loss_t = [&] {
            auto g = net.forward_graph(batch);
            return ad::add(ad::add(ad::mean(ad::mul(g.mean, g.mean)),
                                   ad::mean(ad::mul(g.value, g.value))),
                           ad::mean(g.log_std));
          };
          net.zero_grad();
          ad::backward(loss_t());
          auto f = [&] { return loss_t().scalar_value(); };
          for (auto& p : net.all_params()) {
            const int64_t stride = std::max<int64_t>(1, p.size() / 3);
            for (int64_t i = 0; i < p.size(); i += stride) {
              if (!grad_close(p.grad()[i], central_diff_leaf(p, i, f), kRelTol)) ++failures;
            }
          }
        }
        return make_check(std::move(name), failures == 0,
                          std::to_string(failures) + " coordinate failures");
      }));
  return out;
}

// ---- solver physics --------------------------------------------------------------------

namespace {

double growth_rate(double rayleigh, double t_total) {
  dns::SolverConfig cfg;
  cfg.nx = 16;
  cfg.ny = 25;
  cfg.dt = 0.01;
  cfg.rayleigh = rayleigh;
  dns::Solver sol(cfg);
  auto s = sol.init_perturbed(1234, 1e-6);
  const auto p = dns::WallProfile::uniform(8);
  std::vector<double> ts, loge;
  const double sample = 2.0;
  for (double t = sample; t <= t_total + 1e-9; t += sample) {
    sol.advance(s, p, sample);
    ts.push_back(t);
    loge.push_back(std::log(std::max(sol.kinetic_energy(s), 1e-300)));
  }
  const std::size_t n0 = ts.size() / 2;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int n = 0;
  for (std::size_t i = n0; i < ts.size(); ++i) {
    sx += ts[i];
    sy += loge[i];
    sxx += ts[i] * ts[i];
    sxy += ts[i] * loge[i];
    ++n;
  }
  return 0.5 * (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace

std::vector<CheckResult> verify_solver_physics() {
  std::vector<CheckResult> out;

  out.push_back(guarded(
      "solver physics (a): conduction fixed-point drift <= 1e-8 over 1e4 steps",
      [&](std::string name) {
        dns::SolverConfig cfg;  // default 60 x 33 grid
        dns::Solver sol(cfg);
        const auto ref = sol.init_conduction();
        auto s = ref;
        const auto p = dns::WallProfile::uniform(10);
        for (int i = 0; i < 10000; ++i) sol.step(s, p);
        double drift = 0.0;
        for (std::size_t i = 0; i < ref.T.size(); ++i) {
          drift = std::max(drift, std::abs(s.T[i] - ref.T[i]));
          drift = std::max(drift, std::abs(s.u[i] - ref.u[i]));
          drift = std::max(drift, std::abs(s.v[i] - ref.v[i]));
        }
        return make_check(std::move(name), drift <= 1e-8, "drift = " + fmt("%.3e", drift));
      }));

  out.push_back(guarded("solver physics (b): Nu = 1 within 1% at Ra = 1e3",
                        [&](std::string name) {
                          dns::SolverConfig cfg;
                          cfg.rayleigh = 1.0e3;
                          cfg.nx = 32;
                          cfg.ny = 25;
                          cfg.dt = 0.01;
                          dns::Solver sol(cfg);
                          auto s = sol.init_perturbed(7, 1e-3);
                          sol.advance(s, dns::WallProfile::uniform(8), 60.0);
                          const double nu = sol.nusselt_global(s);
                          return make_check(std::move(name), std::abs(nu - 1.0) <= 0.01,
                                            "Nu = " + fmt("%.6f", nu));
                        }));

  out.push_back(guarded(
      "solver physics (c): bisected critical Rayleigh within 5% of 1708",
      [&](std::string name) {
        double lo = 1000.0, hi = 5000.0;
        const double sig_lo = growth_rate(lo, 100.0);
        const double sig_hi = growth_rate(hi, 100.0);
        if (!(sig_lo < 0.0) || !(sig_hi > 0.0)) {
          return make_check(std::move(name), false,
                            "bracket invalid: sigma(1000) = " + fmt("%.3e", sig_lo) +
                                ", sigma(5000) = " + fmt("%.3e", sig_hi));
        }
        for (int iter = 0; iter < 8; ++iter) {
          const double mid = 0.5 * (lo + hi);
          // near the onset the rates are small; integrate longer there
          const double t_run = std::abs(mid - 1708.0) < 300.0 ? 200.0 : 100.0;
          if (growth_rate(mid, t_run) > 0.0) hi = mid;
          else lo = mid;
        }
        const double ra_c = 0.5 * (lo + hi);
        const double dev = std::abs(ra_c - 1708.0) / 1708.0;
        return make_check(std::move(name), dev <= 0.05,
                          "Ra_c = " + fmt("%.1f", ra_c) + " (deviation " +
                              fmt("%.2f", 100.0 * dev) + "% from 1708)");
      }));

  {
    // Shared developed states for the two equivariance checks.
    dns::SolverConfig cfg;  // default grid
    auto check_equivariance = [cfg](bool translation) {
      dns::Solver sol(cfg);
      dns::WallProfile p{{0.1, -0.2, 0.3, 0.05, -0.05, -0.1, 0.2, -0.3, 0.0, 0.0}};
      double worst = 0.0;
      for (int trial = 0; trial < 100; ++trial) {
        auto s = sol.init_perturbed(500 + trial, 0.3);
        sol.advance(s, dns::WallProfile::uniform(10), 0.25);
        if (!translation) {
          dns::WallProfile pm = dns::WallProfile::uniform(10);
          for (int i = 0; i < 10; ++i) pm.offsets[i] = p.offsets[9 - i];
          auto sm = dns::mirror(s);
          sol.step(sm, pm);
          auto s1 = s;
          sol.step(s1, p);
          auto ms1 = dns::mirror(s1);
          for (std::size_t i = 0; i < s.T.size(); ++i) {
            worst = std::max(worst, std::abs(sm.T[i] - ms1.T[i]));
            worst = std::max(worst, std::abs(sm.u[i] - ms1.u[i]));
            worst = std::max(worst, std::abs(sm.v[i] - ms1.v[i]));
          }
        } else {
          dns::WallProfile pt = dns::WallProfile::uniform(10);
          for (int i = 0; i < 10; ++i) pt.offsets[(i + 3) % 10] = p.offsets[i];
          auto st = dns::translate(s, 3, 10);
          sol.step(st, pt);
          auto s1 = s;
          sol.step(s1, p);
          auto ts1 = dns::translate(s1, 3, 10);
          for (std::size_t i = 0; i < s.T.size(); ++i) {
            worst = std::max(worst, std::abs(st.T[i] - ts1.T[i]));
            worst = std::max(worst, std::abs(st.u[i] - ts1.u[i]));
            worst = std::max(worst, std::abs(st.v[i] - ts1.v[i]));
          }
        }
      }
      return worst;
    };

    out.push_back(guarded(
        "solver physics (d): step commutes with mirror within 1e-8 (100 states)",
        [&](std::string name) {
          const double worst = check_equivariance(false);
          return make_check(std::move(name), worst <= 1e-8, "worst gap = " + fmt("%.3e", worst));
        }));
    out.push_back(guarded(
        "solver physics (e): step commutes with segment translation within 1e-10 (100 states)",
        [&](std::string name) {
          const double worst = check_equivariance(true);
          return make_check(std::move(name), worst <= 1e-10,
                            "worst gap = " + fmt("%.3e", worst));
        }));
  }
  return out;
}

// ---- MARL symmetry coupling ---------------------------------------------------------------

double marl_coupling_gap(nets::FlipMode mode, bool pe_enabled, std::uint64_t param_seed) {
  dns::SolverConfig scfg;
  scfg.nx = 40;
  scfg.ny = 25;
  scfg.dt = 0.005;
  env::EnvConfig ecfg;
  ecfg.pe_enabled = pe_enabled;

  env::Environment env(scfg, ecfg);
  dns::Solver sol(scfg);
  auto s = sol.init_perturbed(77, 0.3);
  sol.advance(s, dns::WallProfile::uniform(10), 1.0);
  auto m = dns::mirror(s);
  for (std::size_t i = 0; i < s.T.size(); ++i) {
    s.T[i] = 0.5 * (s.T[i] + m.T[i]);
    s.u[i] = 0.5 * (s.u[i] + m.u[i]);
    s.v[i] = 0.5 * (s.v[i] + m.v[i]);
  }
  env.reset(s);

  nets::NetworkSpec spec;
  spec.trunk = nets::TrunkKind::GI_NN;
  spec.flip_mode = mode;
  nets::PolicyNet net(spec, 11);
  RandomStream prng(param_seed);
  net.randomize(prng, 1.0);

  double worst = 0.0;
  for (int i = 0; i < 5; ++i) {
    const auto a = net.forward(env.view_for(i).observation);
    const auto b = net.forward(env.view_for(9 - i).observation);
    worst = std::max(worst, std::abs(a.action_mean - b.action_mean));
  }
  return worst;
}

std::vector<CheckResult> verify_marl_coupling() {
  std::vector<CheckResult> out;
  out.push_back(guarded(
      "MARL coupling: GI action means for agents i and N_s-1-i agree within 1e-8",
      [&](std::string name) {
        double worst = 0.0;
        for (std::uint64_t seed = 0; seed < 5; ++seed) {
          worst = std::max(worst,
                           marl_coupling_gap(nets::FlipMode::Physical, false, 600 + seed));
        }
        return make_check(std::move(name), worst <= 1e-8, "worst gap = " + fmt("%.3e", worst));
      }));
  out.push_back(guarded(
      "MARL coupling: positional encoding breaks the pairing by more than 1e-3",
      [&](std::string name) {
        double smallest = 1e300;
        for (std::uint64_t seed = 0; seed < 5; ++seed) {
          smallest = std::min(smallest,
                              marl_coupling_gap(nets::FlipMode::Physical, true, 700 + seed));
        }
        return make_check(std::move(name), smallest > 1e-3,
                          "smallest max-pair gap over 5 parameter draws = " +
                              fmt("%.3e", smallest));
      }));
  return out;
}

// ---- determinism -----------------------------------------------------------------------

namespace {

// the training CSV minus its wall-clock column (the one honest
// nondeterministic field)
std::string csv_without_wall(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw UsageError("missing CSV for determinism check: " + path);
  std::ostringstream out;
  std::string line;
  while (std::getline(f, line)) {
    const auto pos = line.rfind(',');
    out << (pos == std::string::npos ? line : line.substr(0, pos)) << '\n';
  }
  return out.str();
}

std::string file_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  std::ostringstream out;
  out << f.rdbuf();
  return out.str();
}

}  // namespace

std::vector<CheckResult> verify_determinism() {
  std::vector<CheckResult> out;
  out.push_back(guarded(
      "determinism: twin 5-episode runs produce identical CSVs (wall clock masked) "
      "and deterministic evaluation reruns bit-identically",
      [&](std::string name) {
        ExperimentConfig cfg;
        cfg.solver.nx = 20;
        cfg.solver.ny = 17;
        cfg.solver.dt = 0.01;
        cfg.environment.actions_per_episode = 10;
        cfg.environment.action_duration = 0.5;
        cfg.network.hidden_width = 64;
        cfg.ppo.minibatch_size = 50;
        cfg.ppo.update_epochs = 4;
        cfg.run.seeds = {11};
        cfg.run.episodes = 5;
        cfg.run.baseline_horizon = 10.0;
        cfg.run.checkpoint_every = 0;

        const auto root = fs::temp_directory_path() / "rbclab_verify_determinism";
        fs::remove_all(root);
        const std::string dir_a = (root / "a").string();
        const std::string dir_b = (root / "b").string();
        fs::create_directories(dir_a);
        fs::create_directories(dir_b);

        cmd_baseline(cfg, dir_a);
        cmd_baseline(cfg, dir_b);
        const bool snap_same = file_bytes(baseline_snapshot_path(dir_a)) ==
                               file_bytes(baseline_snapshot_path(dir_b));

        cmd_train(cfg, dir_a);
        cmd_train(cfg, dir_b);
        const bool log_same = csv_without_wall(dir_a + "/seed_11/train_log.csv") ==
                              csv_without_wall(dir_b + "/seed_11/train_log.csv");

        const std::string ckpt = dir_a + "/seed_11/checkpoints/final.ckpt";
        cmd_evaluate(cfg, dir_a, ckpt, nets::ActMode::Deterministic, 1);
        const auto eval1 = file_bytes(dir_a + "/eval_deterministic/evaluation.csv");
        cmd_evaluate(cfg, dir_a, ckpt, nets::ActMode::Deterministic, 2);
        const auto eval2 = file_bytes(dir_a + "/eval_deterministic/evaluation.csv");
        const bool eval_same = !eval1.empty() && eval1 == eval2;

        fs::remove_all(root);
        std::string detail = std::string("baseline ") + (snap_same ? "ok" : "DIFFERS") +
                             ", training log " + (log_same ? "ok" : "DIFFERS") +
                             ", deterministic eval " + (eval_same ? "ok" : "DIFFERS");
        return make_check(std::move(name), snap_same && log_same && eval_same, detail);
      }));
  return out;
}

// ---- desk-scale learning smoke test --------------------------------------------------------

std::vector<CheckResult> verify_learning_smoke() {
  std::vector<CheckResult> out;
  out.push_back(guarded(
      "learning smoke (long): PE-FC 10-episode moving-average Nu drops >= 3% below the "
      "baseline, and GI-NN reaches the 0.97 Nu_base threshold no later than FC in at "
      "least 1 of 2 seed pairs",
      [&](std::string name) {
        ExperimentConfig cfg;
        cfg.solver.nx = 40;
        cfg.solver.ny = 25;
        cfg.solver.dt = 0.01;  // 150 steps per action, comfortably stable at Ra 1e4
        cfg.environment.actions_per_episode = 200;
        cfg.environment.action_duration = 1.5;
        cfg.run.episodes = 50;
        cfg.run.baseline_horizon = 300.0;
        cfg.ppo.update_epochs = 6;

        const auto root = fs::temp_directory_path() / "rbclab_verify_smoke";
        fs::remove_all(root);
        fs::create_directories(root);
        const std::string dir = root.string();
        const auto base = cmd_baseline(cfg, dir);
        const auto snapshot = dns::load_snapshot(base.snapshot_path);
        const double nu_base = base.nu_base;

        auto run_variant = [&](nets::TrunkKind kind, bool pe, std::uint64_t seed) {
          auto env_cfg = cfg.environment;
          env_cfg.pe_enabled = pe;
          env_cfg.reward_offset = nu_base;
          auto net_spec = cfg.network;
          net_spec.trunk = kind;
          net_spec.obs_rows = cfg.solver.probe_rows;
          net_spec.obs_cols = cfg.solver.probe_cols;
          train::TrainSinks sinks;
          sinks.csv_path = dir + "/smoke_" + nets::variant_name(net_spec, pe) + "_seed" +
                           std::to_string(seed) + ".csv";
          sinks.checkpoint_every = 0;
          auto res = train::run_training(cfg.solver, env_cfg, net_spec, cfg.ppo, seed,
                                         cfg.run.episodes, snapshot, sinks);
          std::vector<double> nus;
          for (const auto& r : res.rows) nus.push_back(r.mean_nu);
          return nus;
        };
        auto first_hit = [&](const std::vector<double>& nus, double threshold) {
          const auto ma = moving_average(nus, 10);
          for (std::size_t i = 0; i < ma.size(); ++i) {
            if (!std::isnan(ma[i]) && ma[i] <= threshold) return static_cast<int>(i);
          }
          return -1;
        };

        std::ostringstream detail;
        detail << "Nu_base = " << fmt("%.4f", nu_base) << "\n";

        // PE-FC: minimum of the 10-episode moving average
        const auto pefc = run_variant(nets::TrunkKind::FC, true, 1);
        const auto pema = moving_average(pefc, 10);
        double best_ma = 1e300;
        for (double v : pema) {
          if (!std::isnan(v)) best_ma = std::min(best_ma, v);
        }
        const bool pe_ok = best_ma <= 0.97 * nu_base;
        detail << "PE-FC best MA10 Nu = " << fmt("%.4f", best_ma) << " (target <= "
               << fmt("%.4f", 0.97 * nu_base) << ")\n";

        // GI-NN vs FC first-hitting comparison on matched seeds
        const double threshold = 0.97 * nu_base;
        int pairs_won = 0;
        for (std::uint64_t seed : {std::uint64_t{1}, std::uint64_t{2}}) {
          const int gi = first_hit(run_variant(nets::TrunkKind::GI_NN, false, seed), threshold);
          const int fc = first_hit(run_variant(nets::TrunkKind::FC, false, seed), threshold);
          const bool win = (gi >= 0) && (fc < 0 || gi <= fc);
          pairs_won += win ? 1 : 0;
          detail << "seed " << seed << ": GI-NN hits at " << gi << ", FC hits at " << fc
                 << (win ? " (GI-NN no later)" : " (FC earlier)") << "\n";
        }
        const bool gi_ok = pairs_won >= 1;

        // keep the per-variant CSVs around for inspection when the check fails
        if (pe_ok && gi_ok) fs::remove_all(root);
        else detail << "per-variant logs kept under " << dir << "\n";
        return make_check(std::move(name), pe_ok && gi_ok, detail.str());
      }));
  return out;
}

// ---- suite ---------------------------------------------------------------------------------

std::vector<CheckResult> run_verify_suite(bool include_long) {
  std::vector<CheckResult> all;
  auto absorb = [&](std::vector<CheckResult> v) {
    for (auto& c : v) all.push_back(std::move(c));
  };
  absorb(verify_network_invariance());
  absorb(verify_parameter_counts());
  absorb(verify_action_pipeline());
  absorb(verify_clip_algebra());
  absorb(verify_gradients());
  absorb(verify_solver_physics());
  absorb(verify_marl_coupling());
  absorb(verify_determinism());
  if (include_long) absorb(verify_learning_smoke());
  return all;
}

int report_checks(const std::vector<CheckResult>& checks) {
  int failures = 0;
  for (const auto& c : checks) {
    std::printf("[%s] %s\n", c.passed ? "PASS" : "FAIL", c.name.c_str());
    if (!c.detail.empty()) {
      std::istringstream ss(c.detail);
      std::string line;
      while (std::getline(ss, line)) std::printf("       %s\n", line.c_str());
    }
    if (!c.passed) ++failures;
  }
  std::printf("%zu checks, %d failed\n", checks.size(), failures);
  return failures;
}

}  // namespace rbclab::lab
