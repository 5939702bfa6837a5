#ifndef STAGENET_NETWORK_HPP
#define STAGENET_NETWORK_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "stagenet/common.hpp"
#include "stagenet/ops.hpp"
#include "stagenet/optim.hpp"

namespace stagenet::net {

using ad::Phase;
using ad::Tape;
using ad::Tensor;

// Architecture hyperparameters. Defaults correspond to the full-size model:
// four input channels at 128 Hz, seven residual blocks with a base filter
// count of four, a 1024-unit bidirectional recurrent stage, five output
// stages, and 5-minute (ten epoch) input sequences.
struct ModelConfig {
  int channels = 4;
  int sample_rate = 128;
  int n_stages = 5;
  int n_blocks = 7;
  int base_filters = 4;
  int hidden_units = 1024;  // 0 disables the recurrent stage entirely
  int seq_epochs = 10;
  int loss_window_s = 30;

  long seq_samples() const {
    return static_cast<long>(seq_epochs) * kEpochSeconds * sample_rate;
  }
  long pool_factor() const { return 1L << n_blocks; }
  long time_steps() const { return seq_samples() / pool_factor(); }
  // probability columns per 30 s epoch after temporal pooling
  long cols_per_epoch() const {
    return static_cast<long>(kEpochSeconds) * sample_rate / pool_factor();
  }
  long cols_per_window() const { return cols_per_epoch() * loss_window_s / kEpochSeconds; }
  long windows_per_epoch() const { return kEpochSeconds / loss_window_s; }
  // feature maps leaving the residual stack
  long feature_dim() const {
    return static_cast<long>(base_filters) << (n_blocks + 1);
  }

  void validate() const;
};

// One bottleneck residual unit: 1x1 reduce, 1x3 same-padded, 1x1 expand,
// each followed by batch normalization (ReLU on the first two), a projected
// 1x1 shortcut added before the final activation, then (1,2) max pooling
// halving the temporal axis.
template <typename S>
struct ResidualBlock {
  long in_channels = 0, width = 0, out_channels = 0;

  Tensor<S> reduce_w, reduce_b, reduce_gamma, reduce_beta;
  Tensor<S> spatial_w, spatial_b, spatial_gamma, spatial_beta;
  Tensor<S> expand_w, expand_b, expand_gamma, expand_beta;
  Tensor<S> shortcut_w, shortcut_b;
  ad::BatchNormState<S> reduce_bn, spatial_bn, expand_bn;

  static ResidualBlock make(long in_channels, long width, Rng& rng);

  Tensor<S> forward(Tape<S>& tape, const Tensor<S>& x, Phase phase, S bn_momentum,
                    S bn_eps);
};

// The full classifier: channel mixing, residual feature extraction,
// bidirectional recurrent stage, and per-step softmax classification.
template <typename S>
class Network {
 public:
  struct ParamRef {
    std::string name;
    Tensor<S> tensor;
    bool is_weight;  // participates in L2 weight decay
  };
  struct BufferRef {
    std::string name;
    ad::ArrayX<S>* values;
  };

  Network(const ModelConfig& config, std::uint64_t seed);
  Network(const Network&) = delete;
  Network& operator=(const Network&) = delete;

  const ModelConfig& config() const { return config_; }
  std::vector<ParamRef>& parameters() { return params_; }
  std::vector<BufferRef>& buffers() { return buffers_; }

  void zero_grad();

  // x is one sequence, [channels, seq_samples]; returns stage probability
  // columns [n_stages, time_steps], every column on the simplex.
  Tensor<S> forward(Tape<S>& tape, const Tensor<S>& x, Phase phase);

  // Sub-stages, exposed for direct testing. Shapes:
  //   mix:  [1,1,C,T]  -> [1,C,1,T]
  //   feat: [1,C,1,T]  -> [1,F,1,T']
  //   temp: [F,T']     -> [2H,T']   (identity pass-through when H == 0)
  //   clf:  [Fin,T']   -> [K,T']
  Tensor<S> mixing(Tape<S>& tape, const Tensor<S>& x, Phase phase);
  Tensor<S> features(Tape<S>& tape, const Tensor<S>& x, Phase phase);
  Tensor<S> temporal(Tape<S>& tape, const Tensor<S>& x);
  Tensor<S> classify(Tape<S>& tape, const Tensor<S>& x);

  // Closed-form size of the parameter vector as a function of the
  // configuration; the constructor asserts the registry agrees.
  static long parameter_count(const ModelConfig& config);

  // Value snapshot of parameters followed by buffers, for checkpointing.
  std::vector<ad::ArrayX<S>> snapshot() const;
  void restore(const std::vector<ad::ArrayX<S>>& snap);

  static constexpr S kBnMomentum = static_cast<S>(0.1);
  static constexpr S kBnEps = static_cast<S>(1e-5);

 private:
  ModelConfig config_;
  Tensor<S> mix_w_, mix_b_, mix_gamma_, mix_beta_;
  ad::BatchNormState<S> mix_bn_;
  std::vector<ResidualBlock<S>> blocks_;
  ad::GruParams<S> gru_fwd_, gru_bwd_;
  Tensor<S> clf_w_, clf_b_;
  std::vector<ParamRef> params_;
  std::vector<BufferRef> buffers_;

  void register_all();
};

using NetworkF = Network<float>;
using NetworkD = Network<double>;

}  // namespace stagenet::net

#include "stagenet/network_impl.hpp"

#endif  // STAGENET_NETWORK_HPP
