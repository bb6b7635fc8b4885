#include "rbclab/dns/solver.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstring>

#include "rbclab/dns/chebyshev.hpp"
#include "rbclab/errors.hpp"
#include "rbclab/kernels/kernels.hpp"
#include "rbclab/rng.hpp"

namespace rbclab::dns {

namespace {
constexpr double kBlowUpBound = 1.0e3;
const kernels::Ops& ops() { return kernels::active(); }
using Cplx = std::complex<double>;
}  // namespace

void SolverConfig::validate() const {
  if (!(rayleigh > 0.0)) throw ConfigError("rayleigh must be positive");
  if (!(prandtl > 0.0)) throw ConfigError("prandtl must be positive");
  if (!(domain_width > 0.0)) throw ConfigError("domain_width must be positive");
  if (nx < 16 || nx % 2 != 0) throw ConfigError("nx must be even and >= 16");
  if (ny < 17) throw ConfigError("ny must be >= 17");
  if (!(dt > 0.0)) throw ConfigError("dt must be positive");
  if (!(bottom_temperature > top_temperature)) {
    throw ConfigError("bottom_temperature must exceed top_temperature (heated from below)");
  }
  if (probe_rows < 1 || probe_rows > ny - 2) throw ConfigError("probe_rows out of range");
  if (probe_cols < 2) throw ConfigError("probe_cols must be >= 2");
}

bool operator==(const FlowState& a, const FlowState& b) {
  return a.nx == b.nx && a.ny == b.ny && a.time == b.time && a.T == b.T && a.u == b.u &&
         a.v == b.v;
}

FlowState mirror(const FlowState& s) {
  FlowState out;
  out.nx = s.nx;
  out.ny = s.ny;
  out.time = s.time;
  out.T.resize(s.T.size());
  out.u.resize(s.u.size());
  out.v.resize(s.v.size());
  for (int iy = 0; iy < s.ny; ++iy) {
    for (int ix = 0; ix < s.nx; ++ix) {
      const int jx = (s.nx - ix) % s.nx;
      out.T[iy * s.nx + ix] = s.T[iy * s.nx + jx];
      out.v[iy * s.nx + ix] = s.v[iy * s.nx + jx];
      out.u[iy * s.nx + ix] = -s.u[iy * s.nx + jx];
    }
  }
  return out;
}

FlowState translate(const FlowState& s, int k_segments, int n_segments) {
  if (n_segments < 1 || s.nx % n_segments != 0) {
    throw ConfigError("translate: nx = " + std::to_string(s.nx) +
                      " is not divisible by n_segments = " + std::to_string(n_segments));
  }
  const int w = s.nx / n_segments;
  const int shift = ((k_segments % n_segments) + n_segments) % n_segments * w;
  FlowState out;
  out.nx = s.nx;
  out.ny = s.ny;
  out.time = s.time;
  out.T.resize(s.T.size());
  out.u.resize(s.u.size());
  out.v.resize(s.v.size());
  for (int iy = 0; iy < s.ny; ++iy) {
    for (int ix = 0; ix < s.nx; ++ix) {
      const int jx = (ix - shift + s.nx) % s.nx;
      out.T[iy * s.nx + ix] = s.T[iy * s.nx + jx];
      out.u[iy * s.nx + ix] = s.u[iy * s.nx + jx];
      out.v[iy * s.nx + ix] = s.v[iy * s.nx + jx];
    }
  }
  return out;
}

// ---- spectral state and solver internals ------------------------------------

struct Solver::Impl {
  SolverConfig cfg;
  int nx, ny, nkx, mmax;
  double k0, nu, kappa, lx;

  std::vector<double> ynodes;
  std::vector<double> d1, d2;  // ny x ny
  std::vector<double> ccw;     // quadrature over [0,1]

  // Per-mode operators, index m in [0, mmax].
  std::vector<std::vector<double>> bt;  // I + cT (D2 - k^2)
  std::vector<DenseLU> at;              // I - cT (D2 - k^2), Dirichlet rows
  std::vector<std::vector<double>> bv;  // L + cv L^2   (m >= 1)
  std::vector<DenseLU> av;              // L - cv L^2, 4 BC rows (m >= 1)
  std::vector<double> bu;               // I + cv D2
  DenseLU au;                           // I - cv D2, Dirichlet rows

  // Probe machinery.
  std::vector<double> py;   // probe_rows x ny
  std::vector<Cplx> ex;     // (mmax+1) x probe_cols phases

  // FFT plans bound to aligned scratch.
  double* phys_buf = nullptr;
  fftw_complex* spec_buf = nullptr;
  double* row_buf = nullptr;
  fftw_complex* rowspec_buf = nullptr;
  fftw_plan plan_r2c = nullptr, plan_c2r = nullptr;
  fftw_plan plan_row_r2c = nullptr;

  using Spec = std::vector<Cplx>;  // layout [m][iy], m in 0..mmax

  int sidx(int m, int iy) const { return m * ny + iy; }
  double wavenum(int m) const { return k0 * m; }

  explicit Impl(SolverConfig c) : cfg(c) {
    cfg.validate();
    nx = cfg.nx;
    ny = cfg.ny;
    nkx = nx / 2 + 1;
    mmax = nx / 3;  // 2/3 dealiasing: keep |m| <= nx/3, Nyquist always dropped
    lx = cfg.domain_width;
    k0 = 2.0 * M_PI / lx;
    nu = std::sqrt(cfg.prandtl / cfg.rayleigh);
    kappa = 1.0 / std::sqrt(cfg.rayleigh * cfg.prandtl);

    ynodes = cgl_nodes(ny);
    d1 = cgl_diff_matrix(ny);
    d2.assign(static_cast<std::size_t>(ny) * ny, 0.0);
    ops().matmul_nn(d1.data(), d1.data(), d2.data(), ny, ny, ny);
    ccw = cgl_quad_weights(ny);

    build_operators();
    build_probe();

    phys_buf = fftw_alloc_real(static_cast<std::size_t>(ny) * nx);
    spec_buf = fftw_alloc_complex(static_cast<std::size_t>(ny) * nkx);
    row_buf = fftw_alloc_real(nx);
    rowspec_buf = fftw_alloc_complex(nkx);
    int n[] = {nx};
    plan_r2c = fftw_plan_many_dft_r2c(1, n, ny, phys_buf, nullptr, 1, nx, spec_buf, nullptr,
                                      1, nkx, FFTW_ESTIMATE);
    plan_c2r = fftw_plan_many_dft_c2r(1, n, ny, spec_buf, nullptr, 1, nkx, phys_buf, nullptr,
                                      1, nx, FFTW_ESTIMATE);
    plan_row_r2c = fftw_plan_dft_r2c_1d(nx, row_buf, rowspec_buf, FFTW_ESTIMATE);
  }

  ~Impl() {
    fftw_destroy_plan(plan_r2c);
    fftw_destroy_plan(plan_c2r);
    fftw_destroy_plan(plan_row_r2c);
    fftw_free(phys_buf);
    fftw_free(spec_buf);
    fftw_free(row_buf);
    fftw_free(rowspec_buf);
  }

  void build_operators() {
    const double ct = 0.5 * cfg.dt * kappa;
    const double cv = 0.5 * cfg.dt * nu;
    const std::size_t n2 = static_cast<std::size_t>(ny) * ny;

    bt.resize(mmax + 1);
    at.resize(mmax + 1);
    bv.resize(mmax + 1);
    av.resize(mmax + 1);

    std::vector<double> lap(n2), lap2(n2), m_at(n2), m_av(n2);
    for (int m = 0; m <= mmax; ++m) {
      const double k2 = wavenum(m) * wavenum(m);
      // lap = D2 - k^2 I
      for (std::size_t i = 0; i < n2; ++i) lap[i] = d2[i];
      for (int i = 0; i < ny; ++i) lap[static_cast<std::size_t>(i) * ny + i] -= k2;

      bt[m].assign(n2, 0.0);
      for (std::size_t i = 0; i < n2; ++i) {
        bt[m][i] = ct * lap[i];
        m_at[i] = -ct * lap[i];
      }
      for (int i = 0; i < ny; ++i) {
        bt[m][static_cast<std::size_t>(i) * ny + i] += 1.0;
        m_at[static_cast<std::size_t>(i) * ny + i] += 1.0;
      }
      set_row_unit(m_at, 0);
      set_row_unit(m_at, ny - 1);
      at[m] = DenseLU::factor(m_at, ny);

      if (m >= 1) {
        ops().matmul_nn(lap.data(), lap.data(), lap2.data(), ny, ny, ny);
        bv[m].assign(n2, 0.0);
        for (std::size_t i = 0; i < n2; ++i) {
          bv[m][i] = lap[i] + cv * lap2[i];
          m_av[i] = lap[i] - cv * lap2[i];
        }
        set_row_unit(m_av, 0);
        set_row_copy(m_av, 1, d1, 0);
        set_row_copy(m_av, ny - 2, d1, ny - 1);
        set_row_unit(m_av, ny - 1);
        av[m] = DenseLU::factor(m_av, ny);
      }
    }

    bu.assign(n2, 0.0);
    std::vector<double> m_au(n2);
    for (std::size_t i = 0; i < n2; ++i) {
      bu[i] = cv * d2[i];
      m_au[i] = -cv * d2[i];
    }
    for (int i = 0; i < ny; ++i) {
      bu[static_cast<std::size_t>(i) * ny + i] += 1.0;
      m_au[static_cast<std::size_t>(i) * ny + i] += 1.0;
    }
    set_row_unit(m_au, 0);
    set_row_unit(m_au, ny - 1);
    au = DenseLU::factor(m_au, ny);
  }

  void set_row_unit(std::vector<double>& m, int row) const {
    for (int j = 0; j < ny; ++j) m[static_cast<std::size_t>(row) * ny + j] = 0.0;
    m[static_cast<std::size_t>(row) * ny + row] = 1.0;
  }

  void set_row_copy(std::vector<double>& m, int row, const std::vector<double>& src,
                    int src_row) const {
    for (int j = 0; j < ny; ++j) {
      m[static_cast<std::size_t>(row) * ny + j] = src[static_cast<std::size_t>(src_row) * ny + j];
    }
  }

  void build_probe() {
    const int pr = cfg.probe_rows;
    const int pc = cfg.probe_cols;
    py.assign(static_cast<std::size_t>(pr) * ny, 0.0);
    for (int q = 0; q < pr; ++q) {
      const double yq = 0.5 * (1.0 - std::cos(M_PI * (q + 1) / (pr + 1)));
      const auto row = cgl_interp_row(ynodes, yq);
      std::copy(row.begin(), row.end(), py.begin() + static_cast<std::size_t>(q) * ny);
    }
    ex.assign(static_cast<std::size_t>(mmax + 1) * pc, Cplx(0.0, 0.0));
    for (int m = 0; m <= mmax; ++m) {
      for (int p = 0; p < pc; ++p) {
        const double xp = lx * p / pc;
        const double ph = wavenum(m) * xp;
        ex[static_cast<std::size_t>(m) * pc + p] = Cplx(std::cos(ph), std::sin(ph));
      }
    }
  }

  // ---- transforms ------------------------------------------------------------

  void to_spectral(const std::vector<double>& phys, Spec& out) const {
    std::memcpy(phys_buf, phys.data(), sizeof(double) * ny * nx);
    fftw_execute(plan_r2c);
    out.assign(static_cast<std::size_t>(mmax + 1) * ny, Cplx(0.0, 0.0));
    const double inv = 1.0 / nx;
    for (int iy = 0; iy < ny; ++iy) {
      for (int m = 0; m <= mmax; ++m) {
        const fftw_complex& c = spec_buf[static_cast<std::size_t>(iy) * nkx + m];
        out[sidx(m, iy)] = Cplx(c[0] * inv, c[1] * inv);
      }
    }
  }

  void to_physical(const Spec& in, std::vector<double>& phys) const {
    std::memset(spec_buf, 0, sizeof(fftw_complex) * ny * nkx);
    for (int iy = 0; iy < ny; ++iy) {
      for (int m = 0; m <= mmax; ++m) {
        const Cplx c = in[sidx(m, iy)];
        spec_buf[static_cast<std::size_t>(iy) * nkx + m][0] = c.real();
        spec_buf[static_cast<std::size_t>(iy) * nkx + m][1] = c.imag();
      }
    }
    fftw_execute(plan_c2r);
    phys.resize(static_cast<std::size_t>(ny) * nx);
    std::memcpy(phys.data(), phys_buf, sizeof(double) * ny * nx);
  }

  // D1 applied along y to a spectral field, all modes at once:
  // out[m] = D1 * in[m]. Complex columns are ny x 2 real matrices.
  void dy_spec(const Spec& in, Spec& out) const {
    out.resize(in.size());
    for (int m = 0; m <= mmax; ++m) {
      ops().matmul_nn(d1.data(), reinterpret_cast<const double*>(&in[sidx(m, 0)]),
                      reinterpret_cast<double*>(&out[sidx(m, 0)]), ny, ny, 2);
    }
  }

  void dy_phys(const std::vector<double>& in, std::vector<double>& out) const {
    out.resize(in.size());
    ops().matmul_nn(d1.data(), in.data(), out.data(), ny, ny, nx);
  }

  void dx_spec(const Spec& in, Spec& out) const {
    out.resize(in.size());
    for (int m = 0; m <= mmax; ++m) {
      const Cplx ik(0.0, wavenum(m));
      for (int iy = 0; iy < ny; ++iy) out[sidx(m, iy)] = ik * in[sidx(m, iy)];
    }
  }

  // ---- nonlinear terms --------------------------------------------------------

  struct Rhs {
    Spec nt;                  // energy equation, -(u . grad T)
    Spec nv;                  // wall-normal equation explicit term (m >= 1)
    std::vector<double> nu0;  // mean-flow equation, -Hx mode 0
  };

  void eval_rhs(const std::vector<double>& T, const std::vector<double>& u,
                const std::vector<double>& v, const Spec& th, const Spec& uh,
                const Spec& vh, Rhs& r) const {
    const std::size_t nn = static_cast<std::size_t>(ny) * nx;
    Spec tmp;
    std::vector<double> dTdx, dudx, dvdx, dTdy, dudy, dvdy;

    dx_spec(th, tmp);
    to_physical(tmp, dTdx);
    dx_spec(uh, tmp);
    to_physical(tmp, dudx);
    dx_spec(vh, tmp);
    to_physical(tmp, dvdx);
    dy_phys(T, dTdy);
    dy_phys(u, dudy);
    dy_phys(v, dvdy);

    std::vector<double> hx(nn), hy(nn), advt(nn);
    ops().mul(u.data(), dudx.data(), hx.data(), nn);
    ops().fmadd(v.data(), dudy.data(), hx.data(), nn);
    ops().mul(u.data(), dvdx.data(), hy.data(), nn);
    ops().fmadd(v.data(), dvdy.data(), hy.data(), nn);
    ops().mul(u.data(), dTdx.data(), advt.data(), nn);
    ops().fmadd(v.data(), dTdy.data(), advt.data(), nn);

    Spec hxh, hyh, advth;
    to_spectral(hx, hxh);
    to_spectral(hy, hyh);
    to_spectral(advt, advth);

    r.nt.resize(advth.size());
    for (std::size_t i = 0; i < advth.size(); ++i) r.nt[i] = -advth[i];

    Spec dhx;
    dy_spec(hxh, dhx);
    r.nv.assign(hxh.size(), Cplx(0.0, 0.0));
    for (int m = 1; m <= mmax; ++m) {
      const double k = wavenum(m);
      const Cplx ik(0.0, k);
      for (int iy = 0; iy < ny; ++iy) {
        r.nv[sidx(m, iy)] = ik * dhx[sidx(m, iy)] + k * k * hyh[sidx(m, iy)];
      }
    }

    r.nu0.resize(ny);
    for (int iy = 0; iy < ny; ++iy) r.nu0[iy] = -hxh[sidx(0, iy)].real();
  }

  // ---- implicit solves ----------------------------------------------------------

  // Bottom-wall spectral values for the segment profile: nodes on a segment
  // boundary take the average of the two adjacent segments (the trig
  // interpolant's midpoint value), which keeps the profile exactly
  // mirror- and translation-equivariant on the grid.
  void wall_spectrum(const WallProfile& profile, std::vector<Cplx>& whall) const {
    const int ns = static_cast<int>(profile.offsets.size());
    if (ns < 1) throw UsageError("wall profile needs at least one segment");
    for (int j = 0; j < nx; ++j) {
      const long long num = static_cast<long long>(j) * ns;
      double val;
      if (num % nx == 0) {
        const int seg = static_cast<int>(num / nx) % ns;
        const int prev = (seg - 1 + ns) % ns;
        val = 0.5 * (profile.offsets[seg] + profile.offsets[prev]);
      } else {
        const int seg = static_cast<int>(num / nx) % ns;
        val = profile.offsets[seg];
      }
      row_buf[j] = cfg.bottom_temperature + val;
    }
    fftw_execute(plan_row_r2c);
    whall.assign(mmax + 1, Cplx(0.0, 0.0));
    const double inv = 1.0 / nx;
    for (int m = 0; m <= mmax; ++m) {
      whall[m] = Cplx(rowspec_buf[m][0] * inv, rowspec_buf[m][1] * inv);
    }
  }

  void solve_temperature(const Spec& th0, const Spec& nt, const std::vector<Cplx>& whall,
                         Spec& out) const {
    out.resize(th0.size());
    std::vector<Cplx> rhs(ny);
    for (int m = 0; m <= mmax; ++m) {
      ops().matmul_nn(bt[m].data(), reinterpret_cast<const double*>(&th0[sidx(m, 0)]),
                      reinterpret_cast<double*>(rhs.data()), ny, ny, 2);
      for (int iy = 0; iy < ny; ++iy) rhs[iy] += cfg.dt * nt[sidx(m, iy)];
      rhs[0] = whall[m];
      rhs[ny - 1] = (m == 0) ? Cplx(cfg.top_temperature, 0.0) : Cplx(0.0, 0.0);
      at[m].solve(reinterpret_cast<double*>(rhs.data()), 2);
      std::copy(rhs.begin(), rhs.end(), out.begin() + sidx(m, 0));
    }
  }

  void solve_wall_normal(const Spec& vh0, const Spec& nv, const Spec& th_old,
                         const Spec& th_new, Spec& out) const {
    out.assign(vh0.size(), Cplx(0.0, 0.0));
    std::vector<Cplx> rhs(ny);
    for (int m = 1; m <= mmax; ++m) {
      const double k2 = wavenum(m) * wavenum(m);
      ops().matmul_nn(bv[m].data(), reinterpret_cast<const double*>(&vh0[sidx(m, 0)]),
                      reinterpret_cast<double*>(rhs.data()), ny, ny, 2);
      for (int iy = 0; iy < ny; ++iy) {
        const Cplx buoy = -k2 * 0.5 * (th_old[sidx(m, iy)] + th_new[sidx(m, iy)]);
        rhs[iy] += cfg.dt * (nv[sidx(m, iy)] + buoy);
      }
      rhs[0] = rhs[1] = rhs[ny - 2] = rhs[ny - 1] = Cplx(0.0, 0.0);
      av[m].solve(reinterpret_cast<double*>(rhs.data()), 2);
      std::copy(rhs.begin(), rhs.end(), out.begin() + sidx(m, 0));
    }
  }

  void solve_mean_flow(const std::vector<double>& u00, const std::vector<double>& nu0,
                       std::vector<double>& out) const {
    out.resize(ny);
    ops().matmul_nn(bu.data(), u00.data(), out.data(), ny, ny, 1);
    for (int iy = 0; iy < ny; ++iy) out[iy] += cfg.dt * nu0[iy];
    out[0] = 0.0;
    out[ny - 1] = 0.0;
    au.solve(out.data(), 1);
  }

  // Horizontal velocity from continuity: u_m = i (D1 v_m) / k for m >= 1,
  // mean mode from its own equation. Divergence-free by construction.
  void derive_u(const Spec& vh, const std::vector<double>& u0, Spec& uh) const {
    uh.assign(vh.size(), Cplx(0.0, 0.0));
    Spec dv;
    dy_spec(vh, dv);
    for (int m = 1; m <= mmax; ++m) {
      const double invk = 1.0 / wavenum(m);
      for (int iy = 0; iy < ny; ++iy) {
        const Cplx d = dv[sidx(m, iy)];
        uh[sidx(m, iy)] = Cplx(-d.imag() * invk, d.real() * invk);  // i * d / k
      }
    }
    for (int iy = 0; iy < ny; ++iy) uh[sidx(0, iy)] = Cplx(u0[iy], 0.0);
  }

  void mean_mode_real(const Spec& fh, std::vector<double>& out) const {
    out.resize(ny);
    for (int iy = 0; iy < ny; ++iy) out[iy] = fh[sidx(0, iy)].real();
  }
};

// ---- Solver public API ----------------------------------------------------------

Solver::Solver(SolverConfig cfg) : cfg_(cfg), impl_(std::make_unique<Impl>(cfg)) {
  cfg_ = impl_->cfg;
}

Solver::~Solver() = default;

FlowState Solver::init_conduction() const {
  FlowState s;
  s.nx = cfg_.nx;
  s.ny = cfg_.ny;
  s.time = 0.0;
  const std::size_t nn = static_cast<std::size_t>(cfg_.ny) * cfg_.nx;
  s.T.assign(nn, 0.0);
  s.u.assign(nn, 0.0);
  s.v.assign(nn, 0.0);
  const double th = cfg_.bottom_temperature;
  const double tc = cfg_.top_temperature;
  for (int iy = 0; iy < cfg_.ny; ++iy) {
    const double y = impl_->ynodes[iy];
    const double t = th + (tc - th) * y;
    for (int ix = 0; ix < cfg_.nx; ++ix) s.T[iy * cfg_.nx + ix] = t;
  }
  return s;
}

FlowState Solver::init_perturbed(std::uint64_t seed, double amplitude) const {
  if (amplitude < 0.0) throw UsageError("init_perturbed: amplitude must be >= 0");
  FlowState s = init_conduction();
  if (amplitude == 0.0) return s;

  RandomStream rng(seed);
  const int modes = std::min(4, impl_->mmax);
  std::vector<double> ca(modes + 1), cb(modes + 1);
  for (int m = 1; m <= modes; ++m) {
    ca[m] = rng.gaussian();
    cb[m] = rng.gaussian();
  }
  std::vector<double> pert(static_cast<std::size_t>(cfg_.ny) * cfg_.nx, 0.0);
  double max_abs = 0.0;
  for (int iy = 0; iy < cfg_.ny; ++iy) {
    const double env = std::sin(M_PI * impl_->ynodes[iy]);
    for (int ix = 0; ix < cfg_.nx; ++ix) {
      const double x = cfg_.domain_width * ix / cfg_.nx;
      double val = 0.0;
      for (int m = 1; m <= modes; ++m) {
        const double ph = impl_->wavenum(m) * x;
        val += ca[m] * std::cos(ph) + cb[m] * std::sin(ph);
      }
      pert[iy * cfg_.nx + ix] = val * env;
      max_abs = std::max(max_abs, std::abs(val * env));
    }
  }
  if (max_abs > 0.0) {
    const double scale = amplitude / max_abs;
    for (std::size_t i = 0; i < pert.size(); ++i) s.T[i] += scale * pert[i];
  }
  // boundary rows exact
  for (int ix = 0; ix < cfg_.nx; ++ix) {
    s.T[ix] = cfg_.bottom_temperature;
    s.T[(cfg_.ny - 1) * cfg_.nx + ix] = cfg_.top_temperature;
  }
  return s;
}

void Solver::step(FlowState& s, const WallProfile& profile) const {
  if (s.nx != cfg_.nx || s.ny != cfg_.ny) {
    throw DimensionError("step: state grid " + std::to_string(s.nx) + "x" +
                         std::to_string(s.ny) + " does not match config " +
                         std::to_string(cfg_.nx) + "x" + std::to_string(cfg_.ny));
  }
  Impl& im = *impl_;
  using Spec = Impl::Spec;

  Spec th0, uh0, vh0;
  im.to_spectral(s.T, th0);
  im.to_spectral(s.u, uh0);
  im.to_spectral(s.v, vh0);
  std::vector<double> u00;
  im.mean_mode_real(uh0, u00);

  std::vector<Cplx> whall;
  im.wall_spectrum(profile, whall);

  Impl::Rhs r0;
  im.eval_rhs(s.T, s.u, s.v, th0, uh0, vh0, r0);

  // predictor
  Spec tha, vha, uha;
  std::vector<double> u0a;
  im.solve_temperature(th0, r0.nt, whall, tha);
  im.solve_wall_normal(vh0, r0.nv, th0, tha, vha);
  im.solve_mean_flow(u00, r0.nu0, u0a);
  im.derive_u(vha, u0a, uha);

  std::vector<double> ta, ua, va;
  im.to_physical(tha, ta);
  im.to_physical(uha, ua);
  im.to_physical(vha, va);

  Impl::Rhs ra;
  im.eval_rhs(ta, ua, va, tha, uha, vha, ra);

  // corrector with averaged explicit terms
  Impl::Rhs ravg;
  ravg.nt.resize(r0.nt.size());
  ravg.nv.resize(r0.nv.size());
  ravg.nu0.resize(im.ny);
  for (std::size_t i = 0; i < r0.nt.size(); ++i) ravg.nt[i] = 0.5 * (r0.nt[i] + ra.nt[i]);
  for (std::size_t i = 0; i < r0.nv.size(); ++i) ravg.nv[i] = 0.5 * (r0.nv[i] + ra.nv[i]);
  for (int iy = 0; iy < im.ny; ++iy) ravg.nu0[iy] = 0.5 * (r0.nu0[iy] + ra.nu0[iy]);

  Spec th1, vh1, uh1;
  std::vector<double> u01;
  im.solve_temperature(th0, ravg.nt, whall, th1);
  im.solve_wall_normal(vh0, ravg.nv, th0, th1, vh1);
  im.solve_mean_flow(u00, ravg.nu0, u01);
  im.derive_u(vh1, u01, uh1);

  im.to_physical(th1, s.T);
  im.to_physical(uh1, s.u);
  im.to_physical(vh1, s.v);
  s.time += cfg_.dt;

  const double mx = field_max_abs(s);
  if (!(mx <= kBlowUpBound)) {
    throw BlowUpError("solver blow-up: field magnitude " + std::to_string(mx) +
                          " exceeds " + std::to_string(kBlowUpBound),
                      s.time);
  }
}

void Solver::advance(FlowState& s, const WallProfile& profile, double duration) const {
  if (!(duration > 0.0)) throw UsageError("advance: duration must be positive");
  const long long n = std::llround(duration / cfg_.dt);
  if (n < 1) {
    throw UsageError("advance: duration " + std::to_string(duration) +
                     " rounds to zero steps of dt = " + std::to_string(cfg_.dt));
  }
  for (long long i = 0; i < n; ++i) step(s, profile);
}

double Solver::nusselt_global(const FlowState& s) const {
  const Impl& im = *impl_;
  std::vector<double> dtdy;
  im.dy_phys(s.T, dtdy);
  const double conv_coef = std::sqrt(cfg_.rayleigh * cfg_.prandtl);
  const double ref = cfg_.bottom_temperature - cfg_.top_temperature;
  double total = 0.0;
  for (int iy = 0; iy < im.ny; ++iy) {
    double row = 0.0;
    for (int ix = 0; ix < im.nx; ++ix) {
      const int i = iy * im.nx + ix;
      row += conv_coef * s.v[i] * s.T[i] - dtdy[i];
    }
    total += im.ccw[iy] * (row / im.nx);
  }
  return total / ref;
}

double Solver::nusselt_local(const FlowState& s, int segment, int n_segments) const {
  if (segment < 0 || segment >= n_segments) {
    throw UsageError("nusselt_local: segment " + std::to_string(segment) + " out of range [0, " +
                     std::to_string(n_segments) + ")");
  }
  if (cfg_.nx % n_segments != 0) {
    throw ConfigError("nusselt_local: nx not divisible by n_segments");
  }
  const Impl& im = *impl_;
  const int w = cfg_.nx / n_segments;
  // wall-normal temperature gradient at the bottom wall
  std::vector<double> dtdy0(im.nx, 0.0);
  ops().matmul_nn(im.d1.data(), s.T.data(), dtdy0.data(), 1, im.ny, im.nx);
  const double ref = cfg_.bottom_temperature - cfg_.top_temperature;
  // trapezoid over the closed segment: half weight on both boundary nodes
  double acc = 0.5 * (-dtdy0[segment * w]) + 0.5 * (-dtdy0[(segment * w + w) % im.nx]);
  for (int j = 1; j < w; ++j) acc += -dtdy0[segment * w + j];
  return acc / w / ref;
}

ProbeImage Solver::probe(const FlowState& s) const {
  const Impl& im = *impl_;
  const int pr = cfg_.probe_rows;
  const int pc = cfg_.probe_cols;
  ProbeImage img;
  img.rows = pr;
  img.cols = pc;
  img.data.assign(static_cast<std::size_t>(3) * pr * pc, 0.0);

  Impl::Spec fh;
  std::vector<Cplx> g(static_cast<std::size_t>(im.mmax + 1) * pr);
  const std::vector<double>* fields[3] = {&s.T, &s.u, &s.v};
  for (int ch = 0; ch < 3; ++ch) {
    im.to_spectral(*fields[ch], fh);
    // y interpolation per mode: g[m][q] = sum_iy py[q][iy] * fh[m][iy]
    for (int m = 0; m <= im.mmax; ++m) {
      for (int q = 0; q < pr; ++q) {
        Cplx acc(0.0, 0.0);
        for (int iy = 0; iy < im.ny; ++iy) {
          acc += im.py[static_cast<std::size_t>(q) * im.ny + iy] * fh[im.sidx(m, iy)];
        }
        g[static_cast<std::size_t>(m) * pr + q] = acc;
      }
    }
    // x evaluation: f(x_p) = g0 + 2 sum_m Re(g_m e^{i k_m x_p})
    for (int q = 0; q < pr; ++q) {
      for (int p = 0; p < pc; ++p) {
        double val = g[q].real();
        for (int m = 1; m <= im.mmax; ++m) {
          const Cplx z = g[static_cast<std::size_t>(m) * pr + q] *
                         im.ex[static_cast<std::size_t>(m) * pc + p];
          val += 2.0 * z.real();
        }
        img.at(ch, q, p) = val;
      }
    }
  }
  for (double x : img.data) {
    if (!std::isfinite(x)) throw NumericalError("probe: non-finite observation value");
  }
  return img;
}

double Solver::kinetic_energy(const FlowState& s) const {
  const Impl& im = *impl_;
  double total = 0.0;
  for (int iy = 0; iy < im.ny; ++iy) {
    double row = 0.0;
    for (int ix = 0; ix < im.nx; ++ix) {
      const int i = iy * im.nx + ix;
      row += s.u[i] * s.u[i] + s.v[i] * s.v[i];
    }
    total += im.ccw[iy] * (row / im.nx);
  }
  return 0.5 * total;
}

double Solver::divergence_max(const FlowState& s) const {
  const Impl& im = *impl_;
  Impl::Spec uh, vh, dv;
  im.to_spectral(s.u, uh);
  im.to_spectral(s.v, vh);
  im.dy_spec(vh, dv);
  Impl::Spec div(uh.size());
  for (int m = 0; m <= im.mmax; ++m) {
    const Cplx ik(0.0, im.wavenum(m));
    for (int iy = 0; iy < im.ny; ++iy) {
      div[im.sidx(m, iy)] = ik * uh[im.sidx(m, iy)] + dv[im.sidx(m, iy)];
    }
  }
  std::vector<double> dphys;
  im.to_physical(div, dphys);
  double mx = 0.0;
  for (double x : dphys) mx = std::max(mx, std::abs(x));
  return mx;
}

double Solver::field_max_abs(const FlowState& s) const {
  double mx = 0.0;
  for (double x : s.T) mx = std::max(mx, std::abs(x));
  for (double x : s.u) mx = std::max(mx, std::abs(x));
  for (double x : s.v) mx = std::max(mx, std::abs(x));
  return mx;
}

const std::vector<double>& Solver::y_nodes() const { return impl_->ynodes; }

std::vector<double> Solver::probe_x() const {
  std::vector<double> x(cfg_.probe_cols);
  for (int p = 0; p < cfg_.probe_cols; ++p) x[p] = cfg_.domain_width * p / cfg_.probe_cols;
  return x;
}

std::vector<double> Solver::probe_y() const {
  std::vector<double> y(cfg_.probe_rows);
  for (int q = 0; q < cfg_.probe_rows; ++q) {
    y[q] = 0.5 * (1.0 - std::cos(M_PI * (q + 1) / (cfg_.probe_rows + 1)));
  }
  return y;
}

}  // namespace rbclab::dns
