#include "rbclab/nets/policy.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "rbclab/autodiff/gaussian.hpp"
#include "rbclab/errors.hpp"
#include "rbclab/kernels/kernels.hpp"

namespace rbclab::nets {

namespace ad = rbclab::autodiff;

namespace {

const kernels::Ops& ops() { return kernels::active(); }

constexpr double kLogStdLo = -5.0;
constexpr double kLogStdHi = 2.0;

double act_scalar(double x, Activation a) {
  if (a == Activation::Tanh) return std::tanh(x);
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

ad::Tensor act_graph(const ad::Tensor& t, Activation a) {
  return a == Activation::Tanh ? ad::tanh_(t) : ad::softplus(t);
}

std::vector<int64_t> flip_permutation(const NetworkSpec& s) {
  std::vector<int64_t> perm(s.obs_features());
  for (int c = 0; c < s.obs_channels; ++c) {
    for (int r = 0; r < s.obs_rows; ++r) {
      for (int x = 0; x < s.obs_cols; ++x) {
        const int64_t dst = (static_cast<int64_t>(c) * s.obs_rows + r) * s.obs_cols + x;
        const int64_t src =
            (static_cast<int64_t>(c) * s.obs_rows + r) * s.obs_cols + (s.obs_cols - 1 - x);
        perm[dst] = src;
      }
    }
  }
  return perm;
}

// Semi-orthogonal matrix (rows x cols) from seeded Gaussian entries and
// modified Gram-Schmidt, scaled by gain.
std::vector<double> orthogonal_init(int rows, int cols, double gain, RandomStream& rng) {
  const int r = std::max(rows, cols);
  const int c = std::min(rows, cols);
  std::vector<double> g(static_cast<std::size_t>(r) * c);
  for (auto& x : g) x = rng.gaussian();
  // orthonormalize columns
  for (int j = 0; j < c; ++j) {
    for (int k = 0; k < j; ++k) {
      double dot = 0.0;
      for (int i = 0; i < r; ++i) dot += g[static_cast<std::size_t>(i) * c + k] *
                                         g[static_cast<std::size_t>(i) * c + j];
      for (int i = 0; i < r; ++i) g[static_cast<std::size_t>(i) * c + j] -=
          dot * g[static_cast<std::size_t>(i) * c + k];
    }
    double norm = 0.0;
    for (int i = 0; i < r; ++i) norm += g[static_cast<std::size_t>(i) * c + j] *
                                        g[static_cast<std::size_t>(i) * c + j];
    norm = std::sqrt(norm);
    if (norm == 0.0) norm = 1.0;
    for (int i = 0; i < r; ++i) g[static_cast<std::size_t>(i) * c + j] /= norm;
  }
  std::vector<double> out(static_cast<std::size_t>(rows) * cols);
  if (rows >= cols) {
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j) out[static_cast<std::size_t>(i) * cols + j] =
          gain * g[static_cast<std::size_t>(i) * cols + j];
  } else {
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j) out[static_cast<std::size_t>(i) * cols + j] =
          gain * g[static_cast<std::size_t>(j) * rows + i];
  }
  return out;
}

}  // namespace

void NetworkSpec::validate() const {
  if (hidden_width < 1 || hidden_layers < 1) throw ConfigError("hidden trunk sizes must be >= 1");
  if (conv_kernels < 1 || gicnn_hidden < 1) throw ConfigError("conv trunk sizes must be >= 1");
  if (obs_channels < 1 || obs_rows < 1 || obs_cols < 2) throw ConfigError("bad observation shape");
  if (init_log_std < kLogStdLo || init_log_std > kLogStdHi) {
    throw ConfigError("init_log_std outside the bound [-5, 2]");
  }
}

std::vector<double> flip_sign_mask(int channels, FlipMode mode) {
  std::vector<double> m(channels, 1.0);
  if (mode == FlipMode::Physical && channels > 1) m[1] = -1.0;
  return m;
}

dns::ProbeImage flip_observation(const dns::ProbeImage& obs, FlipMode mode) {
  dns::ProbeImage out = obs;
  const auto mask = flip_sign_mask(3, mode);
  for (int ch = 0; ch < 3; ++ch) {
    for (int q = 0; q < obs.rows; ++q) {
      for (int p = 0; p < obs.cols; ++p) {
        out.at(ch, q, p) = mask[ch] * obs.at(ch, q, obs.cols - 1 - p);
      }
    }
  }
  return out;
}

int64_t ParameterReport::total() const {
  int64_t t = 0;
  for (const auto& r : rows) t += r.count;
  return t;
}

int64_t ParameterReport::trunk_weight_count() const {
  int64_t t = 0;
  for (const auto& r : rows) {
    if (!r.is_bias && !r.is_head && !r.is_critic) t += r.count;
  }
  return t;
}

std::string ParameterReport::to_string() const {
  std::ostringstream os;
  os << "parameter breakdown:\n";
  for (const auto& r : rows) {
    os << "  " << r.name << "  " << r.count;
    if (r.is_bias) os << "  [bias]";
    if (r.is_head) os << "  [head]";
    os << "\n";
  }
  os << "  total trainable: " << total() << "\n";
  os << "  actor trunk weights (biases/heads excluded): " << trunk_weight_count() << "\n";
  return os.str();
}

// ---- construction ---------------------------------------------------------------

PolicyNet::PolicyNet(NetworkSpec spec, std::uint64_t seed) : spec_(spec), seed_(seed) {
  spec_.validate();
  build(RandomStream(seed));
}

void PolicyNet::build(RandomStream rng) {
  policy_params_.clear();
  value_params_.clear();
  layout_.clear();

  const double hidden_gain = std::sqrt(2.0);
  auto push = [&](std::vector<autodiff::Tensor>& group, const std::string& name,
                  ad::Shape shape, std::vector<double> values, bool is_bias, bool is_head,
                  bool is_critic) {
    group.push_back(ad::Tensor::from(shape, std::move(values), true));
    layout_.push_back({name, ad::shape_size(shape), is_bias, is_head, is_critic});
  };

  auto build_trunk = [&](std::vector<autodiff::Tensor>& group, const std::string& prefix,
                         bool critic) {
    const int f = static_cast<int>(spec_.obs_features());
    const int hw = spec_.hidden_width;
    if (spec_.trunk == TrunkKind::GI_CNN) {
      const int k = spec_.conv_kernels;
      const int c = spec_.obs_channels;
      const int gh = spec_.gicnn_hidden;
      push(group, prefix + ".conv.kernels", {k, c, 3, 3},
           orthogonal_init(k, c * 9, hidden_gain, rng), false, false, critic);
      push(group, prefix + ".fc.weight", {k, gh}, orthogonal_init(k, gh, hidden_gain, rng),
           false, false, critic);
      push(group, prefix + ".fc.bias", {gh}, std::vector<double>(gh, 0.0), true, false,
           critic);
    } else {
      int in = f;
      for (int l = 0; l < spec_.hidden_layers; ++l) {
        const std::string nm = prefix + ".h" + std::to_string(l + 1);
        push(group, nm + ".weight", {in, hw}, orthogonal_init(in, hw, hidden_gain, rng),
             false, false, critic);
        push(group, nm + ".bias", {hw}, std::vector<double>(hw, 0.0), true, false, critic);
        in = hw;
      }
    }
  };

  const int head_in =
      spec_.trunk == TrunkKind::GI_CNN ? spec_.gicnn_hidden : spec_.hidden_width;

  build_trunk(policy_params_, "actor", false);
  push(policy_params_, "actor.mean.weight", {head_in, 1},
       orthogonal_init(head_in, 1, 0.01, rng), false, true, false);
  push(policy_params_, "actor.mean.bias", {1}, {0.0}, true, true, false);
  push(policy_params_, "log_std", {1}, {spec_.init_log_std}, false, true, false);

  build_trunk(value_params_, "critic", true);
  push(value_params_, "critic.value.weight", {head_in, 1},
       orthogonal_init(head_in, 1, 1.0, rng), false, true, true);
  push(value_params_, "critic.value.bias", {1}, {0.0}, true, true, true);
}

std::vector<autodiff::Tensor> PolicyNet::all_params() const {
  std::vector<autodiff::Tensor> all = policy_params_;
  all.insert(all.end(), value_params_.begin(), value_params_.end());
  return all;
}

void PolicyNet::zero_grad() {
  for (auto& p : policy_params_) p.zero_grad();
  for (auto& p : value_params_) p.zero_grad();
}

double PolicyNet::current_log_std() const {
  const double ls = policy_params_.back().values()[0];
  return std::min(std::max(ls, kLogStdLo), kLogStdHi);
}

ParameterReport PolicyNet::parameter_report() const {
  ParameterReport rep;
  rep.rows = layout_;
  return rep;
}

void PolicyNet::randomize(RandomStream& rng, double scale) {
  // Uniform draws: one raw word per parameter keeps refreshing a full-size
  // network cheap enough for thousand-draw property sweeps.
  auto fill = [&](std::vector<autodiff::Tensor>& group) {
    for (std::size_t i = 0; i < group.size(); ++i) {
      auto v = group[i].values();
      const auto& shape = group[i].shape();
      double fan_in = 1.0;
      if (shape.size() >= 2) {
        fan_in = 1.0;
        for (std::size_t d = 0; d + 1 < shape.size(); ++d) fan_in *= shape[d];
        if (shape.size() == 4) fan_in = shape[1] * shape[2] * shape[3];  // conv kernels
      }
      const double s = scale * std::sqrt(3.0) / std::sqrt(std::max(fan_in, 1.0));
      for (auto& x : v) x = rng.uniform(-s, s);
    }
  };
  fill(policy_params_);
  fill(value_params_);
  // keep the log-std at its configured value
  policy_params_.back().values()[0] = spec_.init_log_std;
}

// ---- acting path (no graph) -------------------------------------------------------

PolicyOutput PolicyNet::forward(const dns::ProbeImage& obs) const {
  if (obs.rows != spec_.obs_rows || obs.cols != spec_.obs_cols) {
    throw DimensionError("forward: observation " + std::to_string(obs.rows) + "x" +
                         std::to_string(obs.cols) + " does not match the network spec");
  }
  return forward_flat(obs.data);
}

PolicyOutput PolicyNet::forward_flat(const std::vector<double>& features) const {
  const int64_t f = spec_.obs_features();
  if (static_cast<int64_t>(features.size()) != f) {
    throw DimensionError("forward: got " + std::to_string(features.size()) +
                         " features, expected " + std::to_string(f));
  }

  const auto mask = flip_sign_mask(spec_.obs_channels, spec_.flip_mode);
  const auto perm = flip_permutation(spec_);

  auto run_dense_trunk = [&](const std::vector<autodiff::Tensor>& group,
                             const std::vector<double>& x) {
    std::size_t idx = 0;
    std::vector<double> h = x, tmp;
    for (int l = 0; l < spec_.hidden_layers; ++l) {
      const auto& w = group[idx++];
      const auto& b = group[idx++];
      const int in = w.shape()[0], out = w.shape()[1];
      tmp.assign(out, 0.0);
      ops().matmul_nn(h.data(), w.values().data(), tmp.data(), 1, in, out);
      ops().add(tmp.data(), b.values().data(), tmp.data(), out);
      for (auto& z : tmp) z = act_scalar(z, spec_.activation);
      h = tmp;
    }
    return h;
  };

  auto flip_flat = [&](const std::vector<double>& x) {
    std::vector<double> out(x.size());
    const int64_t chw = static_cast<int64_t>(spec_.obs_rows) * spec_.obs_cols;
    for (int64_t i = 0; i < f; ++i) out[i] = mask[i / chw] * x[perm[i]];
    return out;
  };

  auto run_conv_trunk = [&](const std::vector<autodiff::Tensor>& group,
                            const std::vector<double>& x) {
    std::size_t idx = 0;
    const auto& kern = group[idx++];
    const auto& fcw = group[idx++];
    const auto& fcb = group[idx++];
    const int K = kern.shape()[0];
    const int C = spec_.obs_channels, H = spec_.obs_rows, W = spec_.obs_cols;
    const std::size_t khw = static_cast<std::size_t>(K) * H * W;

    const auto xf = flip_flat(x);
    std::vector<double> ze(khw), zf(khw);
    ops().conv3x3(x.data(), kern.values().data(), ze.data(), C, K, H, W);
    ops().conv3x3(xf.data(), kern.values().data(), zf.data(), C, K, H, W);
    for (auto& z : ze) z = act_scalar(z, spec_.activation);
    for (auto& z : zf) z = act_scalar(z, spec_.activation);
    std::vector<double> s(khw);
    ops().add(ze.data(), zf.data(), s.data(), khw);
    std::vector<double> pooled(K);
    const int64_t hw = static_cast<int64_t>(H) * W;
    for (int k = 0; k < K; ++k) {
      pooled[k] = ops().sum(s.data() + static_cast<std::size_t>(k) * hw, hw) /
                  static_cast<double>(hw);
    }
    const int gh = fcw.shape()[1];
    std::vector<double> h(gh, 0.0);
    ops().matmul_nn(pooled.data(), fcw.values().data(), h.data(), 1, K, gh);
    ops().add(h.data(), fcb.values().data(), h.data(), gh);
    for (auto& z : h) z = act_scalar(z, spec_.activation);
    return h;
  };

  auto run_trunk = [&](const std::vector<autodiff::Tensor>& group,
                       std::size_t* head_at) -> std::vector<double> {
    if (spec_.trunk == TrunkKind::GI_CNN) {
      *head_at = 3;
      return run_conv_trunk(group, features);
    }
    *head_at = static_cast<std::size_t>(2) * spec_.hidden_layers;
    if (spec_.trunk == TrunkKind::FC) return run_dense_trunk(group, features);
    // GI_NN: shared weights over the flip orbit, branch sum after the
    // nonlinearity
    auto he = run_dense_trunk(group, features);
    auto hf = run_dense_trunk(group, flip_flat(features));
    std::vector<double> sum(he.size());
    ops().add(he.data(), hf.data(), sum.data(), he.size());
    if (spec_.ginn_half_scale) ops().scale(sum.data(), 0.5, sum.data(), sum.size());
    return sum;
  };

  std::size_t head_at = 0;
  const auto ha = run_trunk(policy_params_, &head_at);
  const auto& wm = policy_params_[head_at];
  const auto& bm = policy_params_[head_at + 1];
  double mean_pre = 0.0;
  ops().matmul_nn(ha.data(), wm.values().data(), &mean_pre, 1, ha.size(), 1);
  mean_pre += bm.values()[0];
  const double mean = std::tanh(mean_pre);

  const auto hv = run_trunk(value_params_, &head_at);
  const auto& wv = value_params_[head_at];
  const auto& bv = value_params_[head_at + 1];
  double value = 0.0;
  ops().matmul_nn(hv.data(), wv.values().data(), &value, 1, hv.size(), 1);
  value += bv.values()[0];

  PolicyOutput out;
  out.action_mean = mean;
  out.action_log_std = current_log_std();
  out.action_std = std::exp(out.action_log_std);
  out.value = value;
  return out;
}

// ---- training path -----------------------------------------------------------------

PolicyNet::GraphOutput PolicyNet::forward_graph(const autodiff::Tensor& batch) {
  namespace g = rbclab::autodiff;
  if (batch.shape().size() != 2 || batch.shape()[1] != spec_.obs_features()) {
    throw DimensionError("forward_graph: batch must be B x " +
                         std::to_string(spec_.obs_features()));
  }
  const int B = batch.shape()[0];
  const int C = spec_.obs_channels, H = spec_.obs_rows, W = spec_.obs_cols;
  const auto mask = flip_sign_mask(C, spec_.flip_mode);

  auto flip_batch = [&](const g::Tensor& x) {
    auto x4 = g::reshape(x, {B, C, H, W});
    auto xf = g::reverse_width(x4, mask);
    return g::reshape(xf, {B, static_cast<int>(spec_.obs_features())});
  };

  auto dense_trunk = [&](std::vector<g::Tensor>& group, const g::Tensor& x) {
    std::size_t idx = 0;
    g::Tensor h = x;
    for (int l = 0; l < spec_.hidden_layers; ++l) {
      auto& w = group[idx++];
      auto& b = group[idx++];
      h = act_graph(g::add_rowvec(g::matmul(h, w), b), spec_.activation);
    }
    return h;
  };

  auto conv_trunk = [&](std::vector<g::Tensor>& group, const g::Tensor& x) {
    auto& kern = group[0];
    auto& fcw = group[1];
    auto& fcb = group[2];
    auto x4 = g::reshape(x, {B, C, H, W});
    auto xf = g::reverse_width(x4, mask);
    auto ze = act_graph(g::conv2d_zero_pad(x4, kern), spec_.activation);
    auto zf = act_graph(g::conv2d_zero_pad(xf, kern), spec_.activation);
    auto pooled = g::mean_spatial(g::add(ze, zf));  // [B x K]
    return act_graph(g::add_rowvec(g::matmul(pooled, fcw), fcb), spec_.activation);
  };

  auto trunk = [&](std::vector<g::Tensor>& group, std::size_t* head_at) {
    if (spec_.trunk == TrunkKind::GI_CNN) {
      *head_at = 3;
      return conv_trunk(group, batch);
    }
    *head_at = static_cast<std::size_t>(2) * spec_.hidden_layers;
    if (spec_.trunk == TrunkKind::FC) return dense_trunk(group, batch);
    auto he = dense_trunk(group, batch);
    auto hf = dense_trunk(group, flip_batch(batch));
    auto sum = g::add(he, hf);
    return spec_.ginn_half_scale ? g::scale(sum, 0.5) : sum;
  };

  std::size_t head_at = 0;
  auto ha = trunk(policy_params_, &head_at);
  auto mean = g::tanh_(g::add_rowvec(g::matmul(ha, policy_params_[head_at]),
                                     policy_params_[head_at + 1]));

  std::size_t vhead_at = 0;
  auto hv = trunk(value_params_, &vhead_at);
  auto value = g::add_rowvec(g::matmul(hv, value_params_[vhead_at]),
                             value_params_[vhead_at + 1]);

  GraphOutput out;
  out.mean = mean;
  out.value = value;
  out.log_std = g::clip_by_value(policy_params_.back(), kLogStdLo, kLogStdHi);
  return out;
}

std::vector<std::vector<double>> PolicyNet::orbit_feature_maps(
    const dns::ProbeImage& obs) const {
  if (spec_.trunk != TrunkKind::GI_CNN) {
    throw UsageError("orbit_feature_maps is only meaningful for the GI_CNN trunk");
  }
  const auto& kern = policy_params_[0];
  const int K = kern.shape()[0];
  const int C = spec_.obs_channels, H = spec_.obs_rows, W = spec_.obs_cols;
  const auto flipped = flip_observation(obs, spec_.flip_mode);
  std::vector<std::vector<double>> maps(2);
  maps[0].assign(static_cast<std::size_t>(K) * H * W, 0.0);
  maps[1].assign(static_cast<std::size_t>(K) * H * W, 0.0);
  ops().conv3x3(obs.data.data(), kern.values().data(), maps[0].data(), C, K, H, W);
  ops().conv3x3(flipped.data.data(), kern.values().data(), maps[1].data(), C, K, H, W);
  return maps;
}

// ---- action sampling -----------------------------------------------------------------

ActionSample act(const PolicyOutput& out, ActMode mode, RandomStream& rng) {
  ActionSample s;
  if (mode == ActMode::Deterministic) {
    s.action = out.action_mean;
    return s;
  }
  const double draw = out.action_mean + out.action_std * rng.gaussian();
  s.action = std::min(std::max(draw, -1.0), 1.0);
  s.log_prob = autodiff::gaussian_logpdf_scalar(s.action, out.action_mean, out.action_log_std);
  return s;
}

PositionalWrapper::PositionalWrapper(PolicyNet& inner, double amplitude, bool literal_form,
                                     double domain_width)
    : inner_(inner) {
  const int cols = inner.spec().obs_cols;
  field_.assign(cols, 0.0);
  for (int p = 0; p < cols; ++p) {
    const double xp = domain_width * p / cols;
    const double arg = literal_form ? xp / (2.0 * M_PI) : 2.0 * M_PI * p / cols;
    field_[p] = amplitude * std::sin(arg);
  }
}

PolicyOutput PositionalWrapper::forward(const dns::ProbeImage& obs) const {
  dns::ProbeImage augmented = obs;
  bool all_zero = true;
  for (double v : field_) all_zero = all_zero && v == 0.0;
  if (!all_zero) {
    for (int q = 0; q < obs.rows; ++q) {
      for (int p = 0; p < obs.cols; ++p) augmented.at(0, q, p) += field_[p];
    }
  }
  return inner_.forward(augmented);
}

std::string trunk_name(TrunkKind k) {
  switch (k) {
    case TrunkKind::FC: return "FC";
    case TrunkKind::GI_NN: return "GI-NN";
    case TrunkKind::GI_CNN: return "GI-CNN";
  }
  return "?";
}

std::string variant_name(const NetworkSpec& spec, bool pe_enabled) {
  return (pe_enabled ? std::string("PE-") : std::string()) + trunk_name(spec.trunk);
}

}  // namespace rbclab::nets
