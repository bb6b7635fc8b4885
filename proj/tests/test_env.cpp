#include <doctest.h>

#include <cmath>
#include <numeric>

#include "rbclab/env/environment.hpp"
#include "rbclab/errors.hpp"
#include "rbclab/rng.hpp"

using namespace rbclab;
using namespace rbclab::env;

namespace {

dns::SolverConfig small_solver() {
  dns::SolverConfig cfg;
  cfg.nx = 40;
  cfg.ny = 25;
  cfg.dt = 0.005;
  return cfg;
}

EnvConfig small_env() {
  EnvConfig e;
  e.n_segments = 10;
  e.actions_per_episode = 3;
  e.action_duration = 0.05;
  return e;
}

GlobalObservation flip_obs(const GlobalObservation& o, bool negate_u) {
  GlobalObservation out = o;
  for (int ch = 0; ch < 3; ++ch) {
    const double sgn = (negate_u && ch == 1) ? -1.0 : 1.0;
    for (int q = 0; q < o.rows; ++q) {
      for (int p = 0; p < o.cols; ++p) out.at(ch, q, p) = sgn * o.at(ch, q, o.cols - 1 - p);
    }
  }
  return out;
}

double obs_max_diff(const GlobalObservation& a, const GlobalObservation& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) m = std::max(m, std::abs(a.data[i] - b.data[i]));
  return m;
}

}  // namespace

TEST_CASE("quoted defaults are pinned") {
  EnvConfig e;
  CHECK(e.n_segments == 10);
  CHECK(e.actions_per_episode == 200);
  CHECK(e.action_duration == 1.5);
  CHECK(e.beta == 0.0015);
  CHECK(e.clamp_limit == 0.75);
  CHECK(e.pe_amplitude == 1.0);

  dns::SolverConfig s;
  CHECK(s.rayleigh == 1.0e4);
  CHECK(s.prandtl == 0.7);
  CHECK(s.nx == 60);
  CHECK(s.ny == 33);
  CHECK(s.dt == 0.005);
  CHECK(s.domain_width == doctest::Approx(2.0 * M_PI).epsilon(1e-15));
  CHECK(s.probe_rows == 8);
  CHECK(s.probe_cols == 32);
}

TEST_CASE("action processing (mean removal then clamp)") {
  EnvConfig cfg;
  cfg.n_segments = 10;

  SUBCASE("equal raw actions annihilate") {
    auto out = process_actions(std::vector<double>(10, 0.7), cfg);
    for (double a : out) CHECK(std::abs(a) <= 1e-15);
  }
  SUBCASE("symmetric pair exceeding the clamp") {
    EnvConfig two = cfg;
    two.n_segments = 2;
    auto out = process_actions({1.0, -1.0}, two);
    CHECK(out[0] == 0.75);
    CHECK(out[1] == -0.75);
  }
  SUBCASE("mean-zero within the clamp passes through") {
    EnvConfig four = cfg;
    four.n_segments = 4;
    auto out = process_actions({0.4, 0.0, -0.4, 0.0}, four);
    CHECK(out[0] == doctest::Approx(0.4).epsilon(1e-15));
    CHECK(out[1] == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(out[2] == doctest::Approx(-0.4).epsilon(1e-15));
  }
  SUBCASE("raw outside [-1, 1] is rejected") {
    std::vector<double> raw(10, 0.0);
    raw[3] = 1.5;
    CHECK_THROWS_AS(process_actions(raw, cfg), UsageError);
  }
  SUBCASE("pre-clamp mean is zero and outputs respect the bound") {
    RandomStream rng(55);
    for (int trial = 0; trial < 2000; ++trial) {
      std::vector<double> raw(10);
      for (auto& a : raw) a = rng.uniform(-1.0, 1.0);
      double mean = std::accumulate(raw.begin(), raw.end(), 0.0) / raw.size();
      double presum = 0.0;
      for (double a : raw) presum += a - mean;
      CHECK(std::abs(presum) / raw.size() <= 1e-12);
      auto out = process_actions(raw, cfg);
      for (double a : out) CHECK(std::abs(a) <= 0.75);
    }
  }
}

TEST_CASE("reward formula") {
  EnvConfig cfg;
  SUBCASE("plain formula") {
    cfg.reward_scale = 1.0;
    cfg.reward_offset = 0.0;
    cfg.beta = 0.0;
    CHECK(reward(2.0, 7.0, cfg) == -2.0);
  }
  SUBCASE("offsets cancel when both Nusselt numbers equal n") {
    cfg.reward_scale = 1.0;
    cfg.reward_offset = 2.5;
    cfg.beta = 0.0015;
    CHECK(reward(2.5, 2.5, cfg) == doctest::Approx(0.0).epsilon(1e-15));
  }
  SUBCASE("beta = 1 ignores the global Nusselt number") {
    cfg.beta = 1.0;
    CHECK(reward(2.0, 3.0, cfg) == reward(99.0, 3.0, cfg));
  }
  SUBCASE("strictly decreasing in both arguments for m > 0") {
    cfg.beta = 0.3;
    cfg.reward_scale = 2.0;
    CHECK(reward(2.0, 2.0, cfg) > reward(2.1, 2.0, cfg));
    CHECK(reward(2.0, 2.0, cfg) > reward(2.0, 2.1, cfg));
  }
}

TEST_CASE("positional encoding field") {
  EnvConfig cfg;
  cfg.pe_amplitude = 1.0;
  const double lx = 2.0 * M_PI;
  auto f = positional_encoding_field(cfg, lx, 32);

  CHECK(f[0] == 0.0);                               // column at x = 0
  CHECK(f[8] == 1.0);                               // column at x = Lx/4
  for (int p = 0; p < 32; ++p) {                    // antisymmetry about Lx
    CHECK(f[p] == doctest::Approx(-f[(32 - p) % 32]).epsilon(1e-12));
  }

  SUBCASE("amplitude scales the field") {
    cfg.pe_amplitude = 0.25;
    auto g = positional_encoding_field(cfg, lx, 32);
    for (int p = 0; p < 32; ++p) CHECK(g[p] == doctest::Approx(0.25 * f[p]).epsilon(1e-15));
  }
  SUBCASE("literal printed form differs and misses the end-zero property") {
    cfg.pe_literal_form = true;
    auto g = positional_encoding_field(cfg, lx, 32);
    CHECK(g[0] == 0.0);
    CHECK(std::abs(g[31]) > 0.1);  // sin(x_31 / 2pi) is nowhere near zero
  }
}

TEST_CASE("positional encoding injection") {
  EnvConfig cfg;
  cfg.pe_enabled = true;
  const double lx = 2.0 * M_PI;
  GlobalObservation obs;
  obs.rows = 8;
  obs.cols = 32;
  obs.data.resize(3 * 8 * 32);
  RandomStream rng(77);
  for (auto& x : obs.data) x = rng.gaussian();

  SUBCASE("u and v stay bit-identical") {
    auto out = inject_positional_encoding(obs, cfg, lx);
    for (int ch = 1; ch < 3; ++ch) {
      for (int q = 0; q < 8; ++q) {
        for (int p = 0; p < 32; ++p) CHECK(out.at(ch, q, p) == obs.at(ch, q, p));
      }
    }
  }
  SUBCASE("injecting twice adds the field twice") {
    auto once = inject_positional_encoding(obs, cfg, lx);
    auto twice = inject_positional_encoding(once, cfg, lx);
    auto field = positional_encoding_field(cfg, lx, 32);
    for (int q = 0; q < 8; ++q) {
      for (int p = 0; p < 32; ++p) {
        CHECK(twice.at(0, q, p) - once.at(0, q, p) ==
              doctest::Approx(field[p]).epsilon(1e-12));
      }
    }
  }
  SUBCASE("zero amplitude is the identity") {
    cfg.pe_amplitude = 0.0;
    auto out = inject_positional_encoding(obs, cfg, lx);
    CHECK(out.data == obs.data);
  }
}

TEST_CASE("recentering is a pure permutation with mirror-compatible shifts") {
  EnvConfig cfg;
  cfg.n_segments = 10;
  GlobalObservation obs;
  obs.rows = 8;
  obs.cols = 32;
  obs.data.resize(3 * 8 * 32);
  RandomStream rng(78);
  for (auto& x : obs.data) x = rng.gaussian();

  SUBCASE("zero shift is the identity") {
    CHECK(recenter_by_shift(obs, 0).data == obs.data);
    CHECK(recenter_by_shift(obs, 32).data == obs.data);
  }
  SUBCASE("composition with the inverse shift restores the input") {
    for (int i = 0; i < 10; ++i) {
      const int s = recenter_shift(i, cfg, 32);
      auto back = recenter_by_shift(recenter(obs, i, cfg), -s);
      CHECK(back.data == obs.data);
    }
  }
  SUBCASE("column multiset is preserved") {
    auto r = recenter(obs, 3, cfg);
    auto a = obs.data;
    auto b = r.data;
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    CHECK(a == b);
  }
  SUBCASE("shift pairing: shift(i) + shift(N_s-1-i) = 1 (mod W)") {
    for (int cols : {32, 30}) {
      for (int i = 0; i < 10; ++i) {
        const int a = recenter_shift(i, cfg, cols);
        const int b = recenter_shift(9 - i, cfg, cols);
        CHECK(((a + b) % cols + cols) % cols == 1 % cols);
      }
    }
  }
  SUBCASE("segment center lands on the image center") {
    // put a spike in the middle of segment 4's probe columns and recenter
    GlobalObservation spike;
    spike.rows = 8;
    spike.cols = 32;
    spike.data.assign(3 * 8 * 32, 0.0);
    // segment 4 covers x in [4, 5) * Lx/10 -> stations 12.8 .. 16: center 14.4
    spike.at(0, 0, 14) = 1.0;
    auto r = recenter(spike, 4, cfg);
    // center of a 32-wide image sits between columns 15 and 16
    CHECK((r.at(0, 0, 15) == 1.0 || r.at(0, 0, 16) == 1.0));
  }
}

TEST_CASE("episode loop on the shared simulation") {
  Environment env(small_solver(), small_env());
  dns::Solver ref(small_solver());
  auto snap = ref.init_perturbed(3, 0.3);
  ref.advance(snap, dns::WallProfile::uniform(10), 1.0);

  SUBCASE("reset is reproducible and matches the snapshot") {
    env.reset(snap);
    auto a = env.observe();
    env.reset(snap);
    auto b = env.observe();
    CHECK(a.data == b.data);
    CHECK(env.nu_global() == ref.nusselt_global(snap));
    CHECK(env.state().time == snap.time);
  }

  SUBCASE("zero actions reproduce the uncontrolled trajectory") {
    env.reset(snap);
    auto r = env.step(std::vector<double>(10, 0.0));
    auto direct = snap;
    ref.advance(direct, dns::WallProfile::uniform(10), small_env().action_duration);
    CHECK(env.state() == direct);
    CHECK(static_cast<int>(r.views.size()) == 10);
  }

  SUBCASE("done flips after actions_per_episode steps") {
    env.reset(snap);
    std::vector<double> zeros(10, 0.0);
    auto r1 = env.step(zeros);
    CHECK(!r1.done);
    auto r2 = env.step(zeros);
    CHECK(!r2.done);
    auto r3 = env.step(zeros);
    CHECK(r3.done);
    for (const auto& v : r3.views) CHECK(v.done);
    CHECK(!env.episode_active());
    CHECK_THROWS_AS(env.step(zeros), UsageError);
  }

  SUBCASE("rewards use the PE-free fields") {
    EnvConfig pe_cfg = small_env();
    pe_cfg.pe_enabled = true;
    pe_cfg.reward_offset = 2.0;
    Environment env_pe(small_solver(), pe_cfg);
    EnvConfig plain_cfg = pe_cfg;
    plain_cfg.pe_enabled = false;
    Environment env_plain(small_solver(), plain_cfg);
    env_pe.reset(snap);
    env_plain.reset(snap);
    auto rp = env_pe.step(std::vector<double>(10, 0.0));
    auto rq = env_plain.step(std::vector<double>(10, 0.0));
    for (int i = 0; i < 10; ++i) CHECK(rp.views[i].reward == rq.views[i].reward);
    // but the PE observation differs in the temperature channel
    CHECK(obs_max_diff(rp.views[0].observation, rq.views[0].observation) > 1e-3);
  }

  SUBCASE("missing snapshot file names the baseline command") {
    CHECK_THROWS_WITH_AS(env.reset_from_file("no_such_snapshot.rbc"),
                         doctest::Contains("baseline"), ConfigError);
  }
}

TEST_CASE("translation compatibility of recentered views") {
  // With 30 columns (3 per segment) the index algebra is exact; states are
  // compared after probing, so agreement is at interpolation precision.
  auto scfg = small_solver();
  scfg.probe_cols = 30;
  EnvConfig ecfg = small_env();
  Environment env(scfg, ecfg);
  dns::Solver ref(scfg);
  auto snap = ref.init_perturbed(4, 0.3);
  ref.advance(snap, dns::WallProfile::uniform(10), 1.0);

  for (int k : {1, 3, 7}) {
    auto shifted = dns::translate(snap, k, 10);
    env.reset(snap);
    std::vector<GlobalObservation> base_views;
    for (int i = 0; i < 10; ++i) base_views.push_back(env.view_for(i).observation);
    env.reset(shifted);
    for (int i = 0; i < 10; ++i) {
      auto v = env.view_for((i + k) % 10).observation;
      CHECK(obs_max_diff(v, base_views[i]) < 1e-10);
    }
  }

  // Default 32 columns, k = 5 (station shift 16, integral): exact except
  // for agents 2 and 7, whose ideal shifts land on a rounding half-tie.
  // The tie must break sign-symmetrically to keep the mirror pairing
  // exact, which costs one column of translation uniformity there.
  Environment env32(small_solver(), ecfg);
  env32.reset(snap);
  std::vector<GlobalObservation> base32;
  for (int i = 0; i < 10; ++i) base32.push_back(env32.view_for(i).observation);
  env32.reset(dns::translate(snap, 5, 10));
  for (int i : {0, 1, 3, 4, 5, 6, 8, 9}) {
    auto v = env32.view_for((i + 5) % 10).observation;
    CHECK(obs_max_diff(v, base32[i]) < 1e-10);
  }
  for (int i : {2, 7}) {
    auto v = env32.view_for((i + 5) % 10).observation;
    auto nudged = recenter_by_shift(base32[i], i == 2 ? 1 : -1);
    CHECK(obs_max_diff(v, nudged) < 1e-10);
  }
}

TEST_CASE("mirror consistency ties recentering to the solver mirror") {
  Environment env(small_solver(), small_env());
  dns::Solver ref(small_solver());
  auto snap = ref.init_perturbed(6, 0.3);
  ref.advance(snap, dns::WallProfile::uniform(10), 1.0);

  env.reset(snap);
  std::vector<GlobalObservation> views;
  for (int i = 0; i < 10; ++i) views.push_back(env.view_for(i).observation);
  env.reset(dns::mirror(snap));
  for (int i = 0; i < 10; ++i) {
    auto v = env.view_for(i).observation;
    auto expect = flip_obs(views[9 - i], /*negate_u=*/true);
    CHECK(obs_max_diff(v, expect) < 1e-10);
  }
}
