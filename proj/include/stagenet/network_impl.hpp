#ifndef STAGENET_NETWORK_IMPL_HPP
#define STAGENET_NETWORK_IMPL_HPP

#include "stagenet/network.hpp"

namespace stagenet::net {

inline void ModelConfig::validate() const {
  if (channels < 1 || n_stages < 2 || n_blocks < 1 || base_filters < 1 ||
      seq_epochs < 1 || sample_rate < 1 || hidden_units < 0) {
    throw UsageError("model config: non-positive dimension");
  }
  if (seq_samples() % pool_factor() != 0) {
    throw UsageError("model config: sequence length " + std::to_string(seq_samples()) +
                     " not divisible by 2^" + std::to_string(n_blocks));
  }
  if (loss_window_s < 1 || kEpochSeconds % loss_window_s != 0) {
    throw UsageError("model config: loss window must divide 30 s");
  }
  if ((static_cast<long>(kEpochSeconds) * sample_rate) % pool_factor() != 0 ||
      (static_cast<long>(loss_window_s) * sample_rate) % pool_factor() != 0) {
    throw UsageError("model config: pooled columns do not align with the loss window");
  }
}

namespace detail {

// Stack `rows` independent Glorot draws of [h, w] on top of each other, so
// each gate block of a recurrent matrix gets its own fan-derived bound.
template <typename S>
Tensor<S> glorot_stacked(long rows, long h, long w, Rng& rng) {
  Tensor<S> out = Tensor<S>::zeros({rows * h, w});
  for (long r = 0; r < rows; ++r) {
    Tensor<S> block = ad::glorot_uniform<S>({h, w}, rng);
    out.values().segment(r * h * w, h * w) = block.values();
  }
  return out;
}

}  // namespace detail

template <typename S>
ResidualBlock<S> ResidualBlock<S>::make(long in_channels, long width, Rng& rng) {
  ResidualBlock b;
  b.in_channels = in_channels;
  b.width = width;
  b.out_channels = 4 * width;
  b.reduce_w = ad::glorot_uniform<S>({width, in_channels, 1, 1}, rng);
  b.reduce_b = Tensor<S>::zeros({width});
  b.reduce_gamma = Tensor<S>::from_values({width}, ad::ArrayX<S>::Ones(width));
  b.reduce_beta = Tensor<S>::zeros({width});
  b.spatial_w = ad::glorot_uniform<S>({width, width, 1, 3}, rng);
  b.spatial_b = Tensor<S>::zeros({width});
  b.spatial_gamma = Tensor<S>::from_values({width}, ad::ArrayX<S>::Ones(width));
  b.spatial_beta = Tensor<S>::zeros({width});
  b.expand_w = ad::glorot_uniform<S>({b.out_channels, width, 1, 1}, rng);
  b.expand_b = Tensor<S>::zeros({b.out_channels});
  b.expand_gamma =
      Tensor<S>::from_values({b.out_channels}, ad::ArrayX<S>::Ones(b.out_channels));
  b.expand_beta = Tensor<S>::zeros({b.out_channels});
  b.shortcut_w = ad::glorot_uniform<S>({b.out_channels, in_channels, 1, 1}, rng);
  b.shortcut_b = Tensor<S>::zeros({b.out_channels});
  b.reduce_bn = ad::BatchNormState<S>::make(width);
  b.spatial_bn = ad::BatchNormState<S>::make(width);
  b.expand_bn = ad::BatchNormState<S>::make(b.out_channels);
  return b;
}

template <typename S>
Tensor<S> ResidualBlock<S>::forward(Tape<S>& tape, const Tensor<S>& x, Phase phase,
                                    S bn_momentum, S bn_eps) {
  if (x.rank() != 4 || x.dim(1) != in_channels) {
    throw UsageError("residual block: expected [B," + std::to_string(in_channels) +
                     ",1,L] input, got " + ad::shape_string(x.shape()));
  }
  Tensor<S> h = ad::conv2d(tape, x, reduce_w, 1, 1, 0, 0);
  h = ad::bias_add(tape, h, reduce_b);
  h = ad::batchnorm2d(tape, h, reduce_gamma, reduce_beta, reduce_bn, bn_momentum,
                      bn_eps, phase);
  h = ad::relu(tape, h);
  h = ad::conv2d(tape, h, spatial_w, 1, 1, 0, 1);  // same padding on time
  h = ad::bias_add(tape, h, spatial_b);
  h = ad::batchnorm2d(tape, h, spatial_gamma, spatial_beta, spatial_bn, bn_momentum,
                      bn_eps, phase);
  h = ad::relu(tape, h);
  h = ad::conv2d(tape, h, expand_w, 1, 1, 0, 0);
  h = ad::bias_add(tape, h, expand_b);
  h = ad::batchnorm2d(tape, h, expand_gamma, expand_beta, expand_bn, bn_momentum,
                      bn_eps, phase);

  Tensor<S> sc = ad::conv2d(tape, x, shortcut_w, 1, 1, 0, 0);
  sc = ad::bias_add(tape, sc, shortcut_b);

  h = ad::add(tape, h, sc);  // shortcut joins before the activation
  h = ad::relu(tape, h);
  return ad::maxpool_time2(tape, h);
}

template <typename S>
Network<S>::Network(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  Rng rng(Rng::derive(seed, "model-init"));
  const long C = config_.channels;

  mix_w_ = ad::glorot_uniform<S>({C, 1, C, 1}, rng);
  mix_b_ = Tensor<S>::zeros({C});
  mix_gamma_ = Tensor<S>::from_values({C}, ad::ArrayX<S>::Ones(C));
  mix_beta_ = Tensor<S>::zeros({C});
  mix_bn_ = ad::BatchNormState<S>::make(C);

  long in = C;
  for (int r = 1; r <= config_.n_blocks; ++r) {
    const long width = static_cast<long>(config_.base_filters) << (r - 1);
    blocks_.push_back(ResidualBlock<S>::make(in, width, rng));
    in = 4 * width;
  }

  const long F = config_.feature_dim();
  const long H = config_.hidden_units;
  if (H > 0) {
    for (ad::GruParams<S>* p : {&gru_fwd_, &gru_bwd_}) {
      p->w_input = detail::glorot_stacked<S>(3, H, F, rng);
      p->w_recur = detail::glorot_stacked<S>(3, H, H, rng);
      p->bias = Tensor<S>::zeros({3 * H});
    }
  }

  const long clf_in = H > 0 ? 2 * H : F;
  clf_w_ = ad::glorot_uniform<S>({config_.n_stages, clf_in, 1, 1}, rng);
  clf_b_ = Tensor<S>::zeros({config_.n_stages});

  register_all();

  long total = 0;
  for (const auto& p : params_) total += p.tensor.size();
  if (total != parameter_count(config_)) {
    throw NumericError("network: parameter audit failed (" + std::to_string(total) +
                       " built vs " + std::to_string(parameter_count(config_)) +
                       " expected)");
  }
}

template <typename S>
void Network<S>::register_all() {
  auto param = [&](const std::string& name, Tensor<S>& t, bool weight) {
    t.set_requires_grad(true);
    params_.push_back({name, t, weight});
  };
  auto buffer = [&](const std::string& name, ad::ArrayX<S>& a) {
    buffers_.push_back({name, &a});
  };

  param("mix.w", mix_w_, true);
  param("mix.b", mix_b_, false);
  param("mix.bn.gamma", mix_gamma_, false);
  param("mix.bn.beta", mix_beta_, false);
  buffer("mix.bn.mean", mix_bn_.running_mean);
  buffer("mix.bn.var", mix_bn_.running_var);

  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    auto& b = blocks_[i];
    const std::string base = "feat." + std::to_string(i + 1) + ".";
    param(base + "reduce.w", b.reduce_w, true);
    param(base + "reduce.b", b.reduce_b, false);
    param(base + "reduce.bn.gamma", b.reduce_gamma, false);
    param(base + "reduce.bn.beta", b.reduce_beta, false);
    param(base + "spatial.w", b.spatial_w, true);
    param(base + "spatial.b", b.spatial_b, false);
    param(base + "spatial.bn.gamma", b.spatial_gamma, false);
    param(base + "spatial.bn.beta", b.spatial_beta, false);
    param(base + "expand.w", b.expand_w, true);
    param(base + "expand.b", b.expand_b, false);
    param(base + "expand.bn.gamma", b.expand_gamma, false);
    param(base + "expand.bn.beta", b.expand_beta, false);
    param(base + "shortcut.w", b.shortcut_w, true);
    param(base + "shortcut.b", b.shortcut_b, false);
    buffer(base + "reduce.bn.mean", b.reduce_bn.running_mean);
    buffer(base + "reduce.bn.var", b.reduce_bn.running_var);
    buffer(base + "spatial.bn.mean", b.spatial_bn.running_mean);
    buffer(base + "spatial.bn.var", b.spatial_bn.running_var);
    buffer(base + "expand.bn.mean", b.expand_bn.running_mean);
    buffer(base + "expand.bn.var", b.expand_bn.running_var);
  }

  if (config_.hidden_units > 0) {
    param("temp.fwd.w_in", gru_fwd_.w_input, true);
    param("temp.fwd.w_rec", gru_fwd_.w_recur, true);
    param("temp.fwd.b", gru_fwd_.bias, false);
    param("temp.bwd.w_in", gru_bwd_.w_input, true);
    param("temp.bwd.w_rec", gru_bwd_.w_recur, true);
    param("temp.bwd.b", gru_bwd_.bias, false);
  }
  param("clf.w", clf_w_, true);
  param("clf.b", clf_b_, false);
}

template <typename S>
void Network<S>::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

template <typename S>
Tensor<S> Network<S>::mixing(Tape<S>& tape, const Tensor<S>& x, Phase phase) {
  if (x.rank() != 4 || x.dim(1) != 1 || x.dim(2) != config_.channels) {
    throw UsageError("mixing: expected [B,1," + std::to_string(config_.channels) +
                     ",T] input, got " + ad::shape_string(x.shape()));
  }
  // height-C kernel with temporal extent 1 collapses the channel axis
  Tensor<S> h = ad::conv2d(tape, x, mix_w_, 1, 1, 0, 0);
  h = ad::bias_add(tape, h, mix_b_);
  h = ad::batchnorm2d(tape, h, mix_gamma_, mix_beta_, mix_bn_, kBnMomentum, kBnEps, phase);
  return ad::relu(tape, h);
}

template <typename S>
Tensor<S> Network<S>::features(Tape<S>& tape, const Tensor<S>& x, Phase phase) {
  if (x.dim(3) % config_.pool_factor() != 0) {
    throw UsageError("features: temporal length not divisible by 2^" +
                     std::to_string(config_.n_blocks));
  }
  Tensor<S> h = x;
  for (auto& block : blocks_) {
    h = block.forward(tape, h, phase, kBnMomentum, kBnEps);
  }
  return h;
}

template <typename S>
Tensor<S> Network<S>::temporal(Tape<S>& tape, const Tensor<S>& x) {
  if (config_.hidden_units == 0) return x;  // recurrent stage disabled
  Tensor<S> h = ad::transpose2d(tape, x);  // [T,F]
  h = ad::gru_bidirectional(tape, h, gru_fwd_, gru_bwd_, config_.hidden_units);
  return ad::transpose2d(tape, h);  // [2H,T]
}

template <typename S>
Tensor<S> Network<S>::classify(Tape<S>& tape, const Tensor<S>& x) {
  const long Fin = x.dim(0), T = x.dim(1);
  if (Fin != clf_w_.dim(1)) {
    throw UsageError("classify: feature dimension mismatch");
  }
  Tensor<S> h = ad::reshape(tape, x, {1, Fin, 1, T});
  h = ad::conv2d(tape, h, clf_w_, 1, 1, 0, 0);  // dense over features per step
  h = ad::bias_add(tape, h, clf_b_);
  h = ad::reshape(tape, h, {static_cast<long>(config_.n_stages), T});
  return ad::softmax_columns(tape, h);
}

template <typename S>
Tensor<S> Network<S>::forward(Tape<S>& tape, const Tensor<S>& x, Phase phase) {
  if (x.rank() != 2 || x.dim(0) != config_.channels || x.dim(1) != config_.seq_samples()) {
    throw UsageError("forward: expected [" + std::to_string(config_.channels) + "," +
                     std::to_string(config_.seq_samples()) + "] input, got " +
                     ad::shape_string(x.shape()));
  }
  Tensor<S> h = ad::reshape(tape, x, {1, 1, static_cast<long>(config_.channels),
                                      config_.seq_samples()});
  h = mixing(tape, h, phase);
  h = features(tape, h, phase);
  h = ad::reshape(tape, h, {config_.feature_dim(), config_.time_steps()});
  h = temporal(tape, h);
  return classify(tape, h);
}

// mix:    C*C kernel + C bias + 2C affine
// block r (w = f0 2^{r-1}, o = 4w, i = previous o or C):
//         i*w + w + 2w  (reduce)  + 3w^2 + w + 2w  (spatial)
//       + w*o + o + 2o  (expand)  + i*o + o        (shortcut)
// gru:    2 * (3*H*F + 3*H*H + 3*H)
// clf:    K*(2H or F) + K
template <typename S>
long Network<S>::parameter_count(const ModelConfig& config) {
  const long C = config.channels;
  long total = C * C + 3 * C;
  long in = C;
  for (int r = 1; r <= config.n_blocks; ++r) {
    const long w = static_cast<long>(config.base_filters) << (r - 1);
    const long o = 4 * w;
    total += in * w + 3 * w;           // reduce conv + bias + affine
    total += 3 * w * w + 3 * w;        // spatial conv + bias + affine
    total += w * o + 3 * o;            // expand conv + bias + affine
    total += in * o + o;               // shortcut conv + bias
    in = o;
  }
  const long F = config.feature_dim();
  const long H = config.hidden_units;
  if (H > 0) total += 2 * (3 * H * F + 3 * H * H + 3 * H);
  const long clf_in = H > 0 ? 2 * H : F;
  total += static_cast<long>(config.n_stages) * clf_in + config.n_stages;
  return total;
}

template <typename S>
std::vector<ad::ArrayX<S>> Network<S>::snapshot() const {
  std::vector<ad::ArrayX<S>> snap;
  snap.reserve(params_.size() + buffers_.size());
  for (const auto& p : params_) snap.push_back(p.tensor.values());
  for (const auto& b : buffers_) snap.push_back(*b.values);
  return snap;
}

template <typename S>
void Network<S>::restore(const std::vector<ad::ArrayX<S>>& snap) {
  if (snap.size() != params_.size() + buffers_.size()) {
    throw UsageError("network: snapshot arity mismatch");
  }
  std::size_t i = 0;
  for (auto& p : params_) p.tensor.values() = snap[i++];
  for (auto& b : buffers_) *b.values = snap[i++];
}

}  // namespace stagenet::net

#endif  // STAGENET_NETWORK_IMPL_HPP
