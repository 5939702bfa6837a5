#ifndef STAGENET_OPTIM_HPP
#define STAGENET_OPTIM_HPP

#include <cmath>

#include "stagenet/rng.hpp"
#include "stagenet/tensor.hpp"

namespace stagenet::ad {

// Fan counts for Glorot initialization. Convolution kernels [Cout,Cin,kh,kw]
// include the receptive field in both fans; 2D weights are [out,in].
inline std::pair<long, long> fan_in_out(const Shape& shape) {
  if (shape.size() == 2) return {shape[1], shape[0]};
  if (shape.size() == 4) {
    const long receptive = shape[2] * shape[3];
    return {shape[1] * receptive, shape[0] * receptive};
  }
  throw UsageError("glorot: no fan rule for " + shape_string(shape));
}

// I.i.d. uniform on [-b, b] with b = sqrt(6 / (fan_in + fan_out)).
template <typename S>
Tensor<S> glorot_uniform(Shape shape, Rng& rng) {
  const auto [fan_in, fan_out] = fan_in_out(shape);
  if (fan_in <= 0 || fan_out <= 0) throw UsageError("glorot: zero fan");
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  ArrayX<S> values(shape_size(shape));
  for (long i = 0; i < values.size(); ++i) {
    values[i] = static_cast<S>(rng.uniform(-bound, bound));
  }
  return Tensor<S>::from_values(std::move(shape), std::move(values));
}

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Per-parameter Adam state. The step count advances by one on every update.
template <typename S>
struct AdamState {
  ArrayX<S> m;
  ArrayX<S> v;
  long step = 0;

  static AdamState make(long size) {
    AdamState s;
    s.m = ArrayX<S>::Zero(size);
    s.v = ArrayX<S>::Zero(size);
    return s;
  }
};

// Bias-corrected Adam update. When weight_decay > 0 the coupled L2 term
// decay * theta joins the gradient before the moment updates; callers apply
// it to weight matrices only, never to biases or normalization parameters.
template <typename S>
void adam_step(ArrayX<S>& params, const ArrayX<S>& grad, AdamState<S>& state,
               const AdamConfig& config, double weight_decay = 0.0) {
  if (params.size() != grad.size() || params.size() != state.m.size()) {
    throw UsageError("adam: size mismatch");
  }
  state.step += 1;
  const S b1 = static_cast<S>(config.beta1);
  const S b2 = static_cast<S>(config.beta2);
  ArrayX<S> g = grad;
  if (weight_decay > 0.0) g += static_cast<S>(weight_decay) * params;
  state.m = b1 * state.m + (S(1) - b1) * g;
  state.v = b2 * state.v + (S(1) - b2) * g.square();
  const S c1 = S(1) - static_cast<S>(std::pow(config.beta1, state.step));
  const S c2 = S(1) - static_cast<S>(std::pow(config.beta2, state.step));
  params -= static_cast<S>(config.lr) * (state.m / c1) /
            ((state.v / c2).sqrt() + static_cast<S>(config.eps));
}

}  // namespace stagenet::ad

#endif  // STAGENET_OPTIM_HPP
