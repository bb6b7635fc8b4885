// Checkpoint file: magic "RBCCKPT\0", u32 version, the full NetworkSpec,
// the construction seed, a per-layer index (name, flags, shape, count),
// then the flat double-precision payload. Round trips are bit-exact.
#include <cstdint>
#include <cstring>
#include <fstream>

#include "rbclab/errors.hpp"
#include "rbclab/nets/policy.hpp"

namespace rbclab::nets {

namespace {

constexpr char kMagic[8] = {'R', 'B', 'C', 'C', 'K', 'P', 'T', '\0'};
constexpr std::uint32_t kVersion = 1;

void put(std::ofstream& f, const void* p, std::size_t n) {
  f.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

void put_i32(std::ofstream& f, std::int32_t v) { put(f, &v, 4); }
void put_u32(std::ofstream& f, std::uint32_t v) { put(f, &v, 4); }
void put_f64(std::ofstream& f, double v) { put(f, &v, 8); }

struct Reader {
  std::ifstream f;
  long long off = 0;
  void get(void* p, std::size_t n, const char* what) {
    f.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(f.gcount()) != n) {
      throw FormatError(std::string("checkpoint truncated while reading ") + what, off);
    }
    off += static_cast<long long>(n);
  }
  std::int32_t i32(const char* what) {
    std::int32_t v;
    get(&v, 4, what);
    return v;
  }
  std::uint32_t u32(const char* what) {
    std::uint32_t v;
    get(&v, 4, what);
    return v;
  }
  double f64(const char* what) {
    double v;
    get(&v, 8, what);
    return v;
  }
};

}  // namespace

void PolicyNet::save_checkpoint(const std::string& path) const {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw UsageError("cannot open checkpoint file for writing: " + path);
  put(f, kMagic, 8);
  put_u32(f, kVersion);
  put_i32(f, static_cast<std::int32_t>(spec_.trunk));
  put_i32(f, spec_.hidden_width);
  put_i32(f, spec_.hidden_layers);
  put_i32(f, spec_.conv_kernels);
  put_i32(f, spec_.gicnn_hidden);
  put_i32(f, static_cast<std::int32_t>(spec_.flip_mode));
  put_i32(f, static_cast<std::int32_t>(spec_.activation));
  put_i32(f, spec_.ginn_half_scale ? 1 : 0);
  put_f64(f, spec_.init_log_std);
  put_i32(f, spec_.obs_channels);
  put_i32(f, spec_.obs_rows);
  put_i32(f, spec_.obs_cols);
  const std::uint64_t seed = seed_;
  put(f, &seed, 8);

  auto params = all_params();
  put_u32(f, static_cast<std::uint32_t>(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& name = layout_[i].name;
    put_u32(f, static_cast<std::uint32_t>(name.size()));
    put(f, name.data(), name.size());
    const auto& shape = params[i].shape();
    put_u32(f, static_cast<std::uint32_t>(shape.size()));
    for (int d : shape) put_i32(f, d);
  }
  for (const auto& p : params) {
    put(f, p.values().data(), p.values().size() * 8);
  }
  if (!f) throw UsageError("write failure on checkpoint file: " + path);
}

PolicyNet PolicyNet::load_checkpoint(const std::string& path) {
  Reader r;
  r.f.open(path, std::ios::binary);
  if (!r.f) throw UsageError("cannot open checkpoint file: " + path);

  char magic[8];
  r.get(magic, 8, "magic");
  if (std::memcmp(magic, kMagic, 8) != 0) throw FormatError("not a checkpoint (bad magic)", 0);
  const auto version = r.u32("version");
  if (version != kVersion) {
    throw VersionError("checkpoint format version " + std::to_string(version) +
                       " not supported (expected " + std::to_string(kVersion) + ")");
  }

  NetworkSpec spec;
  spec.trunk = static_cast<TrunkKind>(r.i32("trunk"));
  spec.hidden_width = r.i32("hidden_width");
  spec.hidden_layers = r.i32("hidden_layers");
  spec.conv_kernels = r.i32("conv_kernels");
  spec.gicnn_hidden = r.i32("gicnn_hidden");
  spec.flip_mode = static_cast<FlipMode>(r.i32("flip_mode"));
  spec.activation = static_cast<Activation>(r.i32("activation"));
  spec.ginn_half_scale = r.i32("ginn_half_scale") != 0;
  spec.init_log_std = r.f64("init_log_std");
  spec.obs_channels = r.i32("obs_channels");
  spec.obs_rows = r.i32("obs_rows");
  spec.obs_cols = r.i32("obs_cols");
  std::uint64_t seed = 0;
  r.get(&seed, 8, "seed");

  PolicyNet net(spec, seed);
  auto params = net.all_params();
  const auto n = r.u32("layer count");
  if (n != params.size()) {
    throw FormatError("checkpoint lists " + std::to_string(n) + " layers, architecture has " +
                          std::to_string(params.size()),
                      r.off - 4);
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto name_len = r.u32("layer name length");
    if (name_len > 4096) throw FormatError("implausible layer name length", r.off - 4);
    std::string name(name_len, '\0');
    r.get(name.data(), name_len, "layer name");
    if (name != net.layout_[i].name) {
      throw FormatError("layer name mismatch: file has '" + name + "', architecture has '" +
                            net.layout_[i].name + "'",
                        r.off);
    }
    const auto rank = r.u32("layer rank");
    autodiff::Shape shape(rank);
    for (auto& d : shape) d = r.i32("layer extent");
    if (shape != params[i].shape()) {
      throw FormatError("layer shape mismatch for " + name, r.off);
    }
  }
  for (auto& p : params) {
    r.get(p.values().data(), p.values().size() * 8, "parameter payload");
  }
  return net;
}

}  // namespace rbclab::nets
