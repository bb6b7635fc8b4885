#include <cstdint>
#include <cstring>
#include <fstream>

#include "rbclab/dns/solver.hpp"
#include "rbclab/errors.hpp"

namespace rbclab::dns {

namespace {

constexpr char kMagic[8] = {'R', 'B', 'C', 'S', 'N', 'A', 'P', '\0'};
constexpr std::uint32_t kVersion = 1;

void write_bytes(std::ofstream& f, const void* p, std::size_t n) {
  f.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

void read_bytes(std::ifstream& f, void* p, std::size_t n, long long offset,
                const char* what) {
  f.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(f.gcount()) != n) {
    throw FormatError(std::string("snapshot truncated while reading ") + what, offset);
  }
}

}  // namespace

void save_snapshot(const FlowState& s, const SolverConfig& cfg, const std::string& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw UsageError("cannot open snapshot file for writing: " + path);
  write_bytes(f, kMagic, 8);
  write_bytes(f, &kVersion, 4);
  const std::int32_t nx = s.nx, ny = s.ny;
  write_bytes(f, &nx, 4);
  write_bytes(f, &ny, 4);
  write_bytes(f, &cfg.rayleigh, 8);
  write_bytes(f, &cfg.prandtl, 8);
  write_bytes(f, &cfg.domain_width, 8);
  write_bytes(f, &s.time, 8);
  write_bytes(f, s.T.data(), s.T.size() * 8);
  write_bytes(f, s.u.data(), s.u.size() * 8);
  write_bytes(f, s.v.data(), s.v.size() * 8);
  if (!f) throw UsageError("write failure on snapshot file: " + path);
}

FlowState load_snapshot(const std::string& path, SnapshotHeader* header) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw UsageError("cannot open snapshot file: " + path);

  char magic[8];
  read_bytes(f, magic, 8, 0, "magic");
  if (std::memcmp(magic, kMagic, 8) != 0) {
    throw FormatError("not a flow snapshot (bad magic)", 0);
  }
  std::uint32_t version = 0;
  read_bytes(f, &version, 4, 8, "version");
  if (version != kVersion) {
    throw VersionError("snapshot format version " + std::to_string(version) +
                       " not supported (expected " + std::to_string(kVersion) + ")");
  }
  std::int32_t nx = 0, ny = 0;
  read_bytes(f, &nx, 4, 12, "nx");
  read_bytes(f, &ny, 4, 16, "ny");
  if (nx < 1 || ny < 1 || nx > (1 << 20) || ny > (1 << 20)) {
    throw FormatError("implausible grid extents in snapshot header", 12);
  }
  SnapshotHeader h;
  h.nx = nx;
  h.ny = ny;
  read_bytes(f, &h.rayleigh, 8, 20, "rayleigh");
  read_bytes(f, &h.prandtl, 8, 28, "prandtl");
  read_bytes(f, &h.domain_width, 8, 36, "domain_width");
  read_bytes(f, &h.time, 8, 44, "time");

  FlowState s;
  s.nx = nx;
  s.ny = ny;
  s.time = h.time;
  const std::size_t nn = static_cast<std::size_t>(nx) * ny;
  s.T.resize(nn);
  s.u.resize(nn);
  s.v.resize(nn);
  long long off = 52;
  read_bytes(f, s.T.data(), nn * 8, off, "temperature field");
  off += static_cast<long long>(nn) * 8;
  read_bytes(f, s.u.data(), nn * 8, off, "u field");
  off += static_cast<long long>(nn) * 8;
  read_bytes(f, s.v.data(), nn * 8, off, "v field");

  if (header) *header = h;
  return s;
}

void require_snapshot_compatible(const SnapshotHeader& h, const SolverConfig& cfg) {
  if (h.nx != cfg.nx || h.ny != cfg.ny) {
    throw ConfigError("snapshot grid " + std::to_string(h.nx) + "x" + std::to_string(h.ny) +
                      " does not match configured " + std::to_string(cfg.nx) + "x" +
                      std::to_string(cfg.ny));
  }
  if (h.rayleigh != cfg.rayleigh || h.prandtl != cfg.prandtl ||
      h.domain_width != cfg.domain_width) {
    throw ConfigError("snapshot Ra/Pr/Lx do not match the configuration");
  }
}

}  // namespace rbclab::dns
