#pragma once

#include <complex>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace rbclab::dns {

/// Nondimensional configuration of the convection cell. Lengths are in units
/// of the gap height H (walls at y = 0 and y = 1), temperatures in units of
/// the unactuated wall difference, time in free-fall units; the governing
/// equations then carry sqrt(Pr/Ra) as viscosity and 1/sqrt(Ra Pr) as
/// thermal diffusivity.
struct SolverConfig {
  double rayleigh = 1.0e4;
  double prandtl = 0.7;
  double domain_width = 2.0 * 3.14159265358979323846;  // Lx / H
  int nx = 60;   // periodic direction, even
  int ny = 33;   // wall-normal collocation points
  double dt = 0.005;
  double top_temperature = 1.0;     // T_C
  double bottom_temperature = 2.0;  // T_H before actuation
  int probe_rows = 8;
  int probe_cols = 32;

  /// Throws ConfigError when a constraint is violated.
  void validate() const;
};

/// The prognostic fields on the collocation grid, physical space.
/// Layout: value(ix, iy) = field[iy * nx + ix], iy = 0 is the bottom wall.
struct FlowState {
  int nx = 0;
  int ny = 0;
  double time = 0.0;
  std::vector<double> T;
  std::vector<double> u;  // horizontal velocity
  std::vector<double> v;  // wall-normal velocity

  double& at(std::vector<double>& f, int ix, int iy) { return f[iy * nx + ix]; }
  double at(const std::vector<double>& f, int ix, int iy) const { return f[iy * nx + ix]; }
};

bool operator==(const FlowState& a, const FlowState& b);

/// Per-segment temperature offsets applied to the base bottom-wall value
/// over equal-width segments. The environment clamps offsets before they
/// reach the solver.
struct WallProfile {
  std::vector<double> offsets;

  static WallProfile uniform(int n_segments, double offset = 0.0) {
    return WallProfile{std::vector<double>(n_segments, offset)};
  }
};

/// 3-channel probe image, channels ordered (T, u, v), rows bottom to top.
/// Layout: data[(ch * rows + r) * cols + c].
struct ProbeImage {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;  // 3 * rows * cols

  double& at(int ch, int r, int c) { return data[(ch * rows + r) * cols + c]; }
  double at(int ch, int r, int c) const { return data[(ch * rows + r) * cols + c]; }
};

/// x -> Lx - x reflection: T and v reflected, u reflected and negated.
/// Maps segment i onto N_s - 1 - i. An involution.
FlowState mirror(const FlowState& s);

/// Periodic shift by k segment widths; requires nx divisible by n_segments.
FlowState translate(const FlowState& s, int k_segments, int n_segments);

/// Direct numerical simulation of 2D Rayleigh-Benard convection: Fourier in
/// x, Chebyshev collocation in y, pressure eliminated through the
/// fourth-order wall-normal velocity equation plus a mean-flow equation.
/// Diffusion is advanced by Crank-Nicolson, convection and buoyancy by a
/// Heun predictor-corrector, so a step is one self-contained map of the
/// physical state. Convection products are dealiased by the 2/3 rule; all
/// prognostic fields live strictly inside the kept band.
class Solver {
 public:
  explicit Solver(SolverConfig cfg);
  ~Solver();
  Solver(const Solver&) = delete;
  Solver& operator=(const Solver&) = delete;

  const SolverConfig& config() const { return cfg_; }

  /// Zero velocity, linear conduction profile, time 0. Nu = 1 exactly.
  FlowState init_conduction() const;

  /// Conduction plus a seeded temperature perturbation of the given
  /// max-abs amplitude, exactly zero on both walls.
  FlowState init_perturbed(std::uint64_t seed, double amplitude) const;

  /// Advance by one dt with the bottom-wall profile held fixed.
  /// Throws BlowUpError when any field exceeds the bound 1e3.
  void step(FlowState& s, const WallProfile& profile) const;

  /// Repeated steps covering `duration`, which must round to >= 1 step;
  /// the step count is llround(duration / dt).
  void advance(FlowState& s, const WallProfile& profile, double duration) const;

  /// Instantaneous domain-averaged heat flux over the conductive reference:
  /// <sqrt(Ra Pr) v T - dT/dy> / ((T_H - T_C)/H).
  double nusselt_global(const FlowState& s) const;

  /// Conductive flux -dT/dy averaged over segment i of the bottom wall,
  /// normalized by the conductive reference. Segment averages use
  /// trapezoid weights (half weight on shared boundary nodes) so that the
  /// mean over segments equals the bottom-wall average exactly.
  double nusselt_local(const FlowState& s, int segment, int n_segments) const;

  /// 3 x probe_rows x probe_cols sample of (T, u, v): trigonometric
  /// interpolation at x_p = p Lx / probe_cols, barycentric interpolation at
  /// interior Chebyshev stations in y. Linear and deterministic.
  ProbeImage probe(const FlowState& s) const;

  double kinetic_energy(const FlowState& s) const;
  double divergence_max(const FlowState& s) const;
  double field_max_abs(const FlowState& s) const;

  const std::vector<double>& y_nodes() const;
  std::vector<double> probe_x() const;
  std::vector<double> probe_y() const;

 private:
  SolverConfig cfg_;
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Snapshot file: magic "RBCSNAP\0", u32 version, i32 nx, i32 ny, f64 Ra,
/// f64 Pr, f64 Lx, f64 time, then T, u, v each as ny rows of nx doubles
/// (bottom row first). Bit-exact round trip.
struct SnapshotHeader {
  int nx = 0;
  int ny = 0;
  double rayleigh = 0.0;
  double prandtl = 0.0;
  double domain_width = 0.0;
  double time = 0.0;
};

void save_snapshot(const FlowState& s, const SolverConfig& cfg, const std::string& path);
FlowState load_snapshot(const std::string& path, SnapshotHeader* header = nullptr);

/// Throws ConfigError unless the snapshot header matches the configuration.
void require_snapshot_compatible(const SnapshotHeader& h, const SolverConfig& cfg);

}  // namespace rbclab::dns
