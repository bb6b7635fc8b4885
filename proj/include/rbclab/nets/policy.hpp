#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rbclab/autodiff/tensor.hpp"
#include "rbclab/dns/solver.hpp"
#include "rbclab/rng.hpp"

namespace rbclab::nets {

enum class TrunkKind { FC, GI_NN, GI_CNN };
enum class FlipMode { Physical, Naive };  // physical negates the u channel
enum class Activation { Tanh, Softplus };

struct NetworkSpec {
  TrunkKind trunk = TrunkKind::FC;
  int hidden_width = 512;
  int hidden_layers = 2;
  int conv_kernels = 1024;  // 3x3 window
  int gicnn_hidden = 384;
  FlipMode flip_mode = FlipMode::Physical;
  Activation activation = Activation::Tanh;
  bool ginn_half_scale = false;  // 0.5 branch-sum scale for FC output parity
  double init_log_std = -0.5;
  int obs_channels = 3;
  int obs_rows = 8;
  int obs_cols = 32;

  int64_t obs_features() const {
    return static_cast<int64_t>(obs_channels) * obs_rows * obs_cols;
  }
  void validate() const;
  bool operator==(const NetworkSpec&) const = default;
};

/// Columns reversed on all channels; in physical mode the u channel is
/// additionally negated (the reflection symmetry of the governing
/// equations). An involution.
dns::ProbeImage flip_observation(const dns::ProbeImage& obs, FlipMode mode);

std::vector<double> flip_sign_mask(int channels, FlipMode mode);

struct PolicyOutput {
  double action_mean = 0.0;     // tanh-squashed, in [-1, 1]
  double action_std = 0.0;      // exp of the bounded log-std
  double action_log_std = 0.0;  // the bounded log-std itself
  double value = 0.0;
};

struct ParameterReport {
  struct Row {
    std::string name;
    int64_t count = 0;
    bool is_bias = false;
    bool is_head = false;
    bool is_critic = false;
  };
  std::vector<Row> rows;
  int64_t total() const;
  /// Actor trunk weights only, biases and heads excluded; the count the
  /// architecture comparison quotes.
  int64_t trunk_weight_count() const;
  std::string to_string() const;
};

/// One actor/critic pair: identically shaped, separately parameterized
/// trunks; tanh-squashed mean head, linear value head, one learnable
/// state-independent log-std bounded to [-5, 2].
///
/// The GI variants process the two-element flip orbit with shared weights:
/// GI_NN runs the observation and its flip through the same fully connected
/// trunk and sums the branch outputs after the nonlinearity; GI_CNN lifts
/// the input to the orbit, applies one shared zero-padded 3x3 kernel bank
/// to both elements (kernels shifted, never flipped), sums over the orbit,
/// mean-pools per kernel, and finishes with a hidden dense layer. Both are
/// flip-invariant by construction, for any parameter values.
class PolicyNet {
 public:
  PolicyNet(NetworkSpec spec, std::uint64_t seed);

  const NetworkSpec& spec() const { return spec_; }
  std::uint64_t seed() const { return seed_; }

  /// Acting path: no graph, same kernels and operation order as the
  /// training path, so values agree bitwise.
  PolicyOutput forward(const dns::ProbeImage& obs) const;
  PolicyOutput forward_flat(const std::vector<double>& features) const;

  /// Training path over a batch of flattened observations [B x features].
  struct GraphOutput {
    autodiff::Tensor mean;     // [B x 1], tanh-squashed
    autodiff::Tensor value;    // [B x 1]
    autodiff::Tensor log_std;  // [1], clipped to the bound
  };
  GraphOutput forward_graph(const autodiff::Tensor& batch);

  std::vector<autodiff::Tensor>& policy_params() { return policy_params_; }
  std::vector<autodiff::Tensor>& value_params() { return value_params_; }
  std::vector<autodiff::Tensor> all_params() const;
  void zero_grad();

  double current_log_std() const;

  ParameterReport parameter_report() const;

  /// Scaled-Gaussian reinitialization for architectural property tests.
  void randomize(RandomStream& rng, double scale = 1.0);

  /// GI_CNN only: the two pre-reduction orbit feature maps (post-conv,
  /// pre-activation), for equivariance-vs-invariance inspection.
  std::vector<std::vector<double>> orbit_feature_maps(const dns::ProbeImage& obs) const;

  void save_checkpoint(const std::string& path) const;
  static PolicyNet load_checkpoint(const std::string& path);

 private:
  NetworkSpec spec_;
  std::uint64_t seed_ = 0;
  std::vector<autodiff::Tensor> policy_params_;
  std::vector<autodiff::Tensor> value_params_;
  std::vector<ParameterReport::Row> layout_;

  void build(RandomStream rng);
  friend class NetForward;
};

enum class ActMode { Stochastic, Deterministic };

struct ActionSample {
  double action = 0.0;  // in [-1, 1]
  std::optional<double> log_prob;
};

/// Stochastic: Gaussian draw at (mean, std) clamped to [-1, 1], with the
/// Gaussian log density recorded at the returned action (no clipping
/// correction). Deterministic: the mean, log_prob omitted, rng untouched.
ActionSample act(const PolicyOutput& out, ActMode mode, RandomStream& rng);

/// Network-level positional-encoding wrapper: forwards inject the encoding
/// into the raw observation's temperature channel first. The training
/// pipeline injects in the environment before recentering; this wrapper
/// exists for network-level analysis of the symmetry relaxation.
class PositionalWrapper {
 public:
  PositionalWrapper(PolicyNet& inner, double amplitude, bool literal_form,
                    double domain_width);
  PolicyOutput forward(const dns::ProbeImage& obs) const;
  const std::vector<double>& field() const { return field_; }

 private:
  PolicyNet& inner_;
  std::vector<double> field_;
};

std::string trunk_name(TrunkKind k);
std::string variant_name(const NetworkSpec& spec, bool pe_enabled);

}  // namespace rbclab::nets
