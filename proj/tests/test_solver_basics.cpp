#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "rbclab/dns/solver.hpp"
#include "rbclab/errors.hpp"

using namespace rbclab;
using namespace rbclab::dns;

namespace {

SolverConfig small_config() {
  SolverConfig cfg;
  cfg.nx = 40;
  cfg.ny = 25;
  cfg.dt = 0.005;
  return cfg;
}

double max_field_diff(const FlowState& a, const FlowState& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.T.size(); ++i) {
    m = std::max(m, std::abs(a.T[i] - b.T[i]));
    m = std::max(m, std::abs(a.u[i] - b.u[i]));
    m = std::max(m, std::abs(a.v[i] - b.v[i]));
  }
  return m;
}

}  // namespace

TEST_CASE("config validation") {
  SolverConfig cfg = small_config();
  CHECK_NOTHROW(cfg.validate());
  SolverConfig bad = cfg;
  bad.rayleigh = -1;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.nx = 15;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.ny = 10;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.top_temperature = 3.0;  // hotter than the bottom
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("conduction state: Nu, divergence, mirror fixed point") {
  Solver sol(small_config());
  auto s = sol.init_conduction();

  CHECK(sol.nusselt_global(s) == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(sol.divergence_max(s) == 0.0);
  CHECK(mirror(s) == s);
  for (int i = 0; i < 10; ++i) {
    CHECK(sol.nusselt_local(s, i, 10) == doctest::Approx(1.0).epsilon(1e-8));
  }
}

TEST_CASE("perturbed initial state") {
  Solver sol(small_config());

  SUBCASE("zero amplitude reproduces conduction exactly") {
    CHECK(sol.init_perturbed(42, 0.0) == sol.init_conduction());
  }
  SUBCASE("same seed is deterministic") {
    CHECK(sol.init_perturbed(42, 0.1) == sol.init_perturbed(42, 0.1));
  }
  SUBCASE("different seeds differ") {
    CHECK(!(sol.init_perturbed(42, 0.1) == sol.init_perturbed(43, 0.1)));
  }
  SUBCASE("perturbation vanishes on both walls exactly") {
    auto s = sol.init_perturbed(42, 0.1);
    auto c = sol.init_conduction();
    for (int ix = 0; ix < s.nx; ++ix) {
      CHECK(s.T[ix] == c.T[ix]);
      CHECK(s.T[(s.ny - 1) * s.nx + ix] == c.T[(s.ny - 1) * s.nx + ix]);
    }
  }
  SUBCASE("amplitude is the max-abs of the perturbation") {
    auto s = sol.init_perturbed(42, 0.05);
    auto c = sol.init_conduction();
    double m = 0.0;
    for (std::size_t i = 0; i < s.T.size(); ++i) m = std::max(m, std::abs(s.T[i] - c.T[i]));
    CHECK(m == doctest::Approx(0.05).epsilon(1e-12));
  }
}

TEST_CASE("conduction is a fixed point of step") {
  Solver sol(small_config());
  auto ref = sol.init_conduction();
  auto s = ref;
  auto p = WallProfile::uniform(10);
  for (int i = 0; i < 500; ++i) sol.step(s, p);
  CHECK(max_field_diff(s, ref) < 1e-10);
}

TEST_CASE("advance semantics") {
  Solver sol(small_config());
  auto p = WallProfile::uniform(10, 0.0);

  SUBCASE("advance(2 dt) equals two composed steps exactly") {
    auto s1 = sol.init_perturbed(3, 0.1);
    auto s2 = s1;
    sol.advance(s1, p, 2 * sol.config().dt);
    sol.step(s2, p);
    sol.step(s2, p);
    CHECK(s1 == s2);
  }
  SUBCASE("zero or negative duration is rejected") {
    auto s = sol.init_conduction();
    CHECK_THROWS_AS(sol.advance(s, p, 0.0), UsageError);
    CHECK_THROWS_AS(sol.advance(s, p, -1.0), UsageError);
    CHECK_THROWS_AS(sol.advance(s, p, 1e-9), UsageError);  // rounds to zero steps
  }
  SUBCASE("time increments by the duration") {
    auto s = sol.init_conduction();
    sol.advance(s, p, 1.5);
    CHECK(std::abs(s.time - 1.5) < 1e-12);
  }
}

TEST_CASE("nusselt_local properties") {
  SolverConfig cfg = small_config();
  Solver sol(cfg);
  auto s = sol.init_perturbed(17, 0.3);
  sol.advance(s, WallProfile::uniform(10), 3.0);

  SUBCASE("segment mean equals the bottom-wall average") {
    double mean = 0.0;
    for (int i = 0; i < 10; ++i) mean += sol.nusselt_local(s, i, 10);
    mean /= 10.0;
    // the same quantity computed directly: plain x-average of the wall flux
    double direct = 0.0;
    {
      // central-difference-free: reuse the solver itself on a translated copy
      // by summing segments of one column each... simpler: recompute via the
      // segment average with a single segment spanning the whole wall.
      direct = sol.nusselt_local(s, 0, 1);
    }
    CHECK(mean == doctest::Approx(direct).epsilon(1e-6));
  }
  SUBCASE("mirror maps segment i to N_s-1-i") {
    auto m = mirror(s);
    for (int i = 0; i < 10; ++i) {
      CHECK(sol.nusselt_local(m, i, 10) ==
            doctest::Approx(sol.nusselt_local(s, 9 - i, 10)).epsilon(1e-10));
    }
  }
  SUBCASE("index out of range") {
    CHECK_THROWS_AS(sol.nusselt_local(s, 10, 10), UsageError);
    CHECK_THROWS_AS(sol.nusselt_local(s, -1, 10), UsageError);
  }

  SUBCASE("mirror preserves global Nu") {
    CHECK(sol.nusselt_global(mirror(s)) == doctest::Approx(sol.nusselt_global(s)).epsilon(1e-12));
  }
}

TEST_CASE("probe image") {
  Solver sol(small_config());

  SUBCASE("conduction: u, v zero and T column-constant") {
    auto img = sol.probe(sol.init_conduction());
    CHECK(img.rows == 8);
    CHECK(img.cols == 32);
    for (int q = 0; q < 8; ++q) {
      for (int p = 0; p < 32; ++p) {
        CHECK(std::abs(img.at(1, q, p)) < 1e-14);
        CHECK(std::abs(img.at(2, q, p)) < 1e-14);
        CHECK(img.at(0, q, p) == doctest::Approx(img.at(0, q, 0)).epsilon(1e-12));
      }
    }
  }

  SUBCASE("probing is linear") {
    auto sa = sol.init_perturbed(1, 0.2);
    auto sb = sol.init_perturbed(2, 0.2);
    FlowState sc = sa;
    for (std::size_t i = 0; i < sc.T.size(); ++i) {
      sc.T[i] = 2.0 * sa.T[i] - 0.5 * sb.T[i];
      sc.u[i] = 2.0 * sa.u[i] - 0.5 * sb.u[i];
      sc.v[i] = 2.0 * sa.v[i] - 0.5 * sb.v[i];
    }
    auto ia = sol.probe(sa), ib = sol.probe(sb), ic = sol.probe(sc);
    for (std::size_t i = 0; i < ic.data.size(); ++i) {
      CHECK(ic.data[i] == doctest::Approx(2.0 * ia.data[i] - 0.5 * ib.data[i]).epsilon(1e-10));
    }
  }

  SUBCASE("probe of the mirrored state is the reversed image shifted one column") {
    // Stations sit at x = p Lx/W (station 0 on the reflection axis), so
    // x -> Lx - x maps station p to station (W - p) mod W: a column
    // reversal composed with a one-column circular shift, u negated.
    auto s = sol.init_perturbed(9, 0.3);
    sol.advance(s, WallProfile::uniform(10), 2.0);
    auto img = sol.probe(s);
    auto imgm = sol.probe(mirror(s));
    const int W = img.cols;
    for (int ch = 0; ch < 3; ++ch) {
      const double sgn = ch == 1 ? -1.0 : 1.0;
      for (int q = 0; q < img.rows; ++q) {
        for (int p = 0; p < W; ++p) {
          CHECK(imgm.at(ch, q, p) ==
                doctest::Approx(sgn * img.at(ch, q, (W - p) % W)).epsilon(1e-12));
        }
      }
    }
  }
}

TEST_CASE("mirror and translate") {
  Solver sol(small_config());
  auto s = sol.init_perturbed(21, 0.3);
  sol.advance(s, WallProfile::uniform(10), 1.0);

  SUBCASE("mirror is an involution") { CHECK(mirror(mirror(s)) == s); }
  SUBCASE("mirror preserves the divergence-free property") {
    CHECK(sol.divergence_max(mirror(s)) < 1e-12);
  }
  SUBCASE("translate by N_s or 0 is the identity") {
    CHECK(translate(s, 10, 10) == s);
    CHECK(translate(s, 0, 10) == s);
  }
  SUBCASE("translate composition") {
    CHECK(translate(translate(s, 3, 10), 7, 10) == s);
  }
  SUBCASE("misaligned grid is a configuration error") {
    CHECK_THROWS_AS(translate(s, 1, 7), ConfigError);
  }
}

TEST_CASE("step commutes with mirror and segment translation") {
  Solver sol(small_config());
  WallProfile p{{0.1, -0.2, 0.3, 0.05, -0.05, -0.1, 0.2, -0.3, 0.0, 0.0}};

  double worst_mirror = 0.0, worst_trans = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    auto s = sol.init_perturbed(100 + trial, 0.3);
    sol.advance(s, p, 1.0);

    WallProfile pm = WallProfile::uniform(10);
    for (int i = 0; i < 10; ++i) pm.offsets[i] = p.offsets[9 - i];
    auto sm = mirror(s);
    sol.step(sm, pm);
    auto s1 = s;
    sol.step(s1, p);
    worst_mirror = std::max(worst_mirror, max_field_diff(sm, mirror(s1)));

    WallProfile pt = WallProfile::uniform(10);
    for (int i = 0; i < 10; ++i) pt.offsets[(i + 3) % 10] = p.offsets[i];
    auto st = translate(s, 3, 10);
    sol.step(st, pt);
    auto s2 = s;
    sol.step(s2, p);
    worst_trans = std::max(worst_trans, max_field_diff(st, translate(s2, 3, 10)));
  }
  CHECK(worst_mirror < 1e-8);
  CHECK(worst_trans < 1e-10);
}

TEST_CASE("incompressibility is maintained while stepping") {
  Solver sol(small_config());
  auto s = sol.init_perturbed(33, 0.3);
  auto p = WallProfile::uniform(10);
  double worst = 0.0;
  for (int i = 0; i < 50; ++i) {
    sol.step(s, p);
    worst = std::max(worst, sol.divergence_max(s));
  }
  CHECK(worst < 1e-8);
}

TEST_CASE("snapshot round trip and error paths") {
  Solver sol(small_config());
  auto s = sol.init_perturbed(5, 0.25);
  sol.advance(s, WallProfile::uniform(10), 0.5);
  const std::string path = "test_snapshot.rbc";

  SUBCASE("round trip is bit-exact") {
    save_snapshot(s, sol.config(), path);
    SnapshotHeader h;
    auto loaded = load_snapshot(path, &h);
    CHECK(loaded == s);
    CHECK(h.nx == s.nx);
    CHECK(h.rayleigh == sol.config().rayleigh);
    CHECK_NOTHROW(require_snapshot_compatible(h, sol.config()));
    SolverConfig other = sol.config();
    other.rayleigh *= 2;
    CHECK_THROWS_AS(require_snapshot_compatible(h, other), ConfigError);
  }

  SUBCASE("truncated file is a format error") {
    save_snapshot(s, sol.config(), path);
    auto full = std::filesystem::file_size(path);
    std::filesystem::resize_file(path, full - 100);
    CHECK_THROWS_AS(load_snapshot(path), FormatError);
  }

  SUBCASE("bad magic is a format error") {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    f << "NOTASNAPFILE____________________";
    f.close();
    CHECK_THROWS_AS(load_snapshot(path), FormatError);
  }

  SUBCASE("unknown version is a version error") {
    save_snapshot(s, sol.config(), path);
    std::fstream f(path, std::ios::binary | std::ios::in | std::ios::out);
    f.seekp(8);
    const std::uint32_t bad = 99;
    f.write(reinterpret_cast<const char*>(&bad), 4);
    f.close();
    CHECK_THROWS_AS(load_snapshot(path), VersionError);
  }

  std::remove(path.c_str());
}

TEST_CASE("blow-up raises with the failure time") {
  SolverConfig cfg = small_config();
  cfg.rayleigh = 1e4;
  Solver sol(cfg);
  auto s = sol.init_conduction();
  // poison the state far beyond the bound; one step must flag it
  for (auto& x : s.u) x = 5e3;
  auto p = WallProfile::uniform(10);
  CHECK_THROWS_AS(sol.step(s, p), BlowUpError);
}
