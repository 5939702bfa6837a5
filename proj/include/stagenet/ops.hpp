#ifndef STAGENET_OPS_HPP
#define STAGENET_OPS_HPP

#include <cmath>
#include <limits>
#include <memory>
#include <vector>

#include "stagenet/tensor.hpp"

namespace stagenet::ad {

enum class Phase { Train, Eval };

namespace detail {

template <typename S>
bool want_grad(const Tape<S>& tape, std::initializer_list<const Tensor<S>*> inputs) {
  if (!tape.recording()) return false;
  for (const Tensor<S>* t : inputs) {
    if (t->requires_grad()) return true;
  }
  return false;
}

}  // namespace detail

// -------------------------------------------------------------------------
// 2D convolution (cross-correlation), x [B,Cin,H,W] * kernels [Cout,Cin,kh,kw]
// -> [B,Cout,Ho,Wo]. Implemented as a patch-matrix product per batch element.
// -------------------------------------------------------------------------
template <typename S>
Tensor<S> conv2d(Tape<S>& tape, const Tensor<S>& x, const Tensor<S>& kernels,
                 int stride_h, int stride_w, int pad_h, int pad_w) {
  if (x.rank() != 4 || kernels.rank() != 4) {
    throw UsageError("conv2d: expected 4D input and kernels");
  }
  const long B = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
  const long Cout = kernels.dim(0), kh = kernels.dim(2), kw = kernels.dim(3);
  if (kernels.dim(1) != Cin) {
    throw UsageError("conv2d: channel mismatch " + shape_string(x.shape()) + " vs " +
                     shape_string(kernels.shape()));
  }
  if (stride_h < 1 || stride_w < 1 || pad_h < 0 || pad_w < 0) {
    throw UsageError("conv2d: bad stride/padding");
  }
  if (kh > H + 2 * pad_h || kw > W + 2 * pad_w) {
    throw UsageError("conv2d: kernel larger than padded input");
  }
  const long Ho = (H + 2 * pad_h - kh) / stride_h + 1;
  const long Wo = (W + 2 * pad_w - kw) / stride_w + 1;
  const long K = Cin * kh * kw;
  const long N = Ho * Wo;

  auto cols = std::make_shared<std::vector<MatrixR<S>>>();
  cols->reserve(B);

  Tensor<S> out = Tensor<S>::zeros({B, Cout, Ho, Wo});
  const auto wmat = kernels.matrix(Cout, K);
  for (long b = 0; b < B; ++b) {
    MatrixR<S> col = MatrixR<S>::Zero(K, N);
    const S* xb = x.data() + b * Cin * H * W;
    for (long ci = 0; ci < Cin; ++ci) {
      for (long ki = 0; ki < kh; ++ki) {
        for (long kj = 0; kj < kw; ++kj) {
          const long row = (ci * kh + ki) * kw + kj;
          S* dst = col.data() + row * N;
          for (long oh = 0; oh < Ho; ++oh) {
            const long ih = oh * stride_h - pad_h + ki;
            if (ih < 0 || ih >= H) continue;
            const S* src = xb + (ci * H + ih) * W;
            for (long ow = 0; ow < Wo; ++ow) {
              const long iw = ow * stride_w - pad_w + kj;
              if (iw >= 0 && iw < W) dst[oh * Wo + ow] = src[iw];
            }
          }
        }
      }
    }
    Eigen::Map<MatrixR<S>>(out.data() + b * Cout * N, Cout, N).noalias() = wmat * col;
    cols->push_back(std::move(col));
  }

  if (detail::want_grad(tape, {&x, &kernels})) {
    out.set_requires_grad(true);
    Tensor<S> xc = x;
    Tensor<S> wc = kernels;
    Tensor<S> oc = out;
    tape.record([=]() mutable {
      if (!oc.has_grad()) return;
      const auto w = wc.matrix(Cout, K);
      for (long b = 0; b < B; ++b) {
        Eigen::Map<const MatrixR<S>> go(oc.grad().data() + b * Cout * N, Cout, N);
        if (wc.requires_grad()) {
          wc.grad_matrix(Cout, K).noalias() += go * (*cols)[b].transpose();
        }
        if (xc.requires_grad()) {
          MatrixR<S> dcol = w.transpose() * go;
          S* gx = xc.grad().data() + b * Cin * H * W;
          for (long ci = 0; ci < Cin; ++ci) {
            for (long ki = 0; ki < kh; ++ki) {
              for (long kj = 0; kj < kw; ++kj) {
                const long row = (ci * kh + ki) * kw + kj;
                const S* src = dcol.data() + row * N;
                for (long oh = 0; oh < Ho; ++oh) {
                  const long ih = oh * stride_h - pad_h + ki;
                  if (ih < 0 || ih >= H) continue;
                  S* dst = gx + (ci * H + ih) * W;
                  for (long ow = 0; ow < Wo; ++ow) {
                    const long iw = ow * stride_w - pad_w + kj;
                    if (iw >= 0 && iw < W) dst[iw] += src[oh * Wo + ow];
                  }
                }
              }
            }
          }
        }
      }
    });
  }
  return out;
}

// Per-channel bias on [B,C,H,W].
template <typename S>
Tensor<S> bias_add(Tape<S>& tape, const Tensor<S>& x, const Tensor<S>& bias) {
  if (x.rank() != 4 || bias.rank() != 1 || bias.dim(0) != x.dim(1)) {
    throw UsageError("bias_add: bias must match channel count");
  }
  const long B = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
  Tensor<S> out = Tensor<S>::zeros(x.shape());
  for (long b = 0; b < B; ++b) {
    for (long c = 0; c < C; ++c) {
      const long off = (b * C + c) * HW;
      Eigen::Map<ArrayX<S>>(out.data() + off, HW) =
          Eigen::Map<const ArrayX<S>>(x.data() + off, HW) + bias.values()[c];
    }
  }
  if (detail::want_grad(tape, {&x, &bias})) {
    out.set_requires_grad(true);
    Tensor<S> xc = x, bc = bias, oc = out;
    tape.record([=]() mutable {
      if (!oc.has_grad()) return;
      if (xc.requires_grad()) xc.grad() += oc.grad();
      if (bc.requires_grad()) {
        for (long b = 0; b < B; ++b) {
          for (long c = 0; c < C; ++c) {
            bc.grad()[c] +=
                Eigen::Map<const ArrayX<S>>(oc.grad().data() + (b * C + c) * HW, HW).sum();
          }
        }
      }
    });
  }
  return out;
}

// -------------------------------------------------------------------------
// Batch normalization over [B,C,H,W] with per-channel statistics. Train mode
// normalizes by batch statistics and folds them into the running buffers
// with the given momentum; eval mode normalizes by the running buffers.
// -------------------------------------------------------------------------
template <typename S>
struct BatchNormState {
  ArrayX<S> running_mean;
  ArrayX<S> running_var;

  static BatchNormState make(long channels) {
    BatchNormState s;
    s.running_mean = ArrayX<S>::Zero(channels);
    s.running_var = ArrayX<S>::Ones(channels);
    return s;
  }
};

template <typename S>
Tensor<S> batchnorm2d(Tape<S>& tape, const Tensor<S>& x, const Tensor<S>& gamma,
                      const Tensor<S>& beta, BatchNormState<S>& state, S momentum,
                      S eps, Phase phase) {
  if (x.rank() != 4) throw UsageError("batchnorm: expected 4D input");
  const long B = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
  if (gamma.dim(0) != C || beta.dim(0) != C || state.running_mean.size() != C) {
    throw UsageError("batchnorm: parameter size mismatch");
  }
  const long m = B * HW;  // samples per channel
  if (phase == Phase::Train && m < 2) {
    throw UsageError("batchnorm: need at least 2 samples per feature in train mode");
  }

  ArrayX<S> mean(C), invstd(C);
  if (phase == Phase::Train) {
    for (long c = 0; c < C; ++c) {
      S acc = 0;
      for (long b = 0; b < B; ++b) {
        acc += Eigen::Map<const ArrayX<S>>(x.data() + (b * C + c) * HW, HW).sum();
      }
      mean[c] = acc / static_cast<S>(m);
      S sq = 0;
      for (long b = 0; b < B; ++b) {
        sq += (Eigen::Map<const ArrayX<S>>(x.data() + (b * C + c) * HW, HW) - mean[c])
                  .square()
                  .sum();
      }
      const S var = sq / static_cast<S>(m);
      invstd[c] = S(1) / std::sqrt(var + eps);
      state.running_mean[c] = (S(1) - momentum) * state.running_mean[c] + momentum * mean[c];
      state.running_var[c] = (S(1) - momentum) * state.running_var[c] + momentum * var;
    }
  } else {
    mean = state.running_mean;
    invstd = (state.running_var + eps).sqrt().inverse();
  }

  Tensor<S> out = Tensor<S>::zeros(x.shape());
  auto xhat = std::make_shared<ArrayX<S>>(x.size());
  for (long b = 0; b < B; ++b) {
    for (long c = 0; c < C; ++c) {
      const long off = (b * C + c) * HW;
      Eigen::Map<ArrayX<S>> h(xhat->data() + off, HW);
      h = (Eigen::Map<const ArrayX<S>>(x.data() + off, HW) - mean[c]) * invstd[c];
      Eigen::Map<ArrayX<S>>(out.data() + off, HW) = h * gamma.values()[c] + beta.values()[c];
    }
  }

  if (detail::want_grad(tape, {&x, &gamma, &beta})) {
    out.set_requires_grad(true);
    Tensor<S> xc = x, gc = gamma, bc = beta, oc = out;
    const bool train = phase == Phase::Train;
    ArrayX<S> invstd_c = invstd;
    tape.record([=]() mutable {
      if (!oc.has_grad()) return;
      for (long c = 0; c < C; ++c) {
        S sum_dy = 0, sum_dy_xhat = 0;
        for (long b = 0; b < B; ++b) {
          const long off = (b * C + c) * HW;
          Eigen::Map<const ArrayX<S>> dy(oc.grad().data() + off, HW);
          Eigen::Map<const ArrayX<S>> h(xhat->data() + off, HW);
          sum_dy += dy.sum();
          sum_dy_xhat += (dy * h).sum();
        }
        if (bc.requires_grad()) bc.grad()[c] += sum_dy;
        if (gc.requires_grad()) gc.grad()[c] += sum_dy_xhat;
        if (xc.requires_grad()) {
          const S g = gc.values()[c];
          for (long b = 0; b < B; ++b) {
            const long off = (b * C + c) * HW;
            Eigen::Map<const ArrayX<S>> dy(oc.grad().data() + off, HW);
            Eigen::Map<const ArrayX<S>> h(xhat->data() + off, HW);
            Eigen::Map<ArrayX<S>> dx(xc.grad().data() + off, HW);
            if (train) {
              dx += g * invstd_c[c] *
                    (dy - sum_dy / static_cast<S>(m) - h * (sum_dy_xhat / static_cast<S>(m)));
            } else {
              dx += g * invstd_c[c] * dy;
            }
          }
        }
      }
    });
  }
  return out;
}

// Elementwise max(0, x).
template <typename S>
Tensor<S> relu(Tape<S>& tape, const Tensor<S>& x) {
  Tensor<S> out = Tensor<S>::from_values(x.shape(), x.values().max(S(0)));
  if (detail::want_grad(tape, {&x})) {
    out.set_requires_grad(true);
    Tensor<S> xc = x, oc = out;
    tape.record([=]() mutable {
      if (!oc.has_grad()) return;
      xc.grad() += oc.grad() * (xc.values() > S(0)).template cast<S>();
    });
  }
  return out;
}

// Max pooling with window (1,2) and stride (1,2) on the last axis, halving
// the temporal dimension. An odd tail is padded on the right with -inf, so
// the last window reduces to its single real element. Ties route the
// gradient to the first (leftmost) element.
template <typename S>
Tensor<S> maxpool_time2(Tape<S>& tape, const Tensor<S>& x) {
  if (x.rank() != 4) throw UsageError("maxpool: expected 4D input");
  const long B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const long Wo = (W + 1) / 2;
  Tensor<S> out = Tensor<S>::zeros({B, C, H, Wo});
  auto argmax = std::make_shared<std::vector<long>>(B * C * H * Wo);
  const long rows = B * C * H;
  for (long r = 0; r < rows; ++r) {
    const S* src = x.data() + r * W;
    S* dst = out.data() + r * Wo;
    long* arg = argmax->data() + r * Wo;
    for (long o = 0; o < Wo; ++o) {
      const long i = 2 * o;
      if (i + 1 < W && src[i + 1] > src[i]) {
        dst[o] = src[i + 1];
        arg[o] = r * W + i + 1;
      } else {
        dst[o] = src[i];
        arg[o] = r * W + i;
      }
    }
  }
  if (detail::want_grad(tape, {&x})) {
    out.set_requires_grad(true);
    Tensor<S> xc = x, oc = out;
    tape.record([=]() mutable {
      if (!oc.has_grad()) return;
      const ArrayX<S>& go = oc.grad();
      ArrayX<S>& gx = xc.grad();
      for (long i = 0; i < go.size(); ++i) gx[(*argmax)[i]] += go[i];
    });
  }
  return out;
}

// Elementwise sum of two same-shape tensors.
template <typename S>
Tensor<S> add(Tape<S>& tape, const Tensor<S>& a, const Tensor<S>& b) {
  if (a.shape() != b.shape()) {
    throw UsageError("add: shape mismatch " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  }
  Tensor<S> out = Tensor<S>::from_values(a.shape(), a.values() + b.values());
  if (detail::want_grad(tape, {&a, &b})) {
    out.set_requires_grad(true);
    Tensor<S> ac = a, bc = b, oc = out;
    tape.record([=]() mutable {
      if (!oc.has_grad()) return;
      if (ac.requires_grad()) ac.grad() += oc.grad();
      if (bc.requires_grad()) bc.grad() += oc.grad();
    });
  }
  return out;
}

template <typename S>
Tensor<S> scale(Tape<S>& tape, const Tensor<S>& x, S factor) {
  Tensor<S> out = Tensor<S>::from_values(x.shape(), x.values() * factor);
  if (detail::want_grad(tape, {&x})) {
    out.set_requires_grad(true);
    Tensor<S> xc = x, oc = out;
    tape.record([=]() mutable {
      if (!oc.has_grad()) return;
      xc.grad() += oc.grad() * factor;
    });
  }
  return out;
}

template <typename S>
Tensor<S> reshape(Tape<S>& tape, const Tensor<S>& x, Shape shape) {
  if (shape_size(shape) != x.size()) {
    throw UsageError("reshape: size mismatch " + shape_string(x.shape()) + " -> " +
                     shape_string(shape));
  }
  Tensor<S> out = Tensor<S>::from_values(std::move(shape), x.values());
  if (detail::want_grad(tape, {&x})) {
    out.set_requires_grad(true);
    Tensor<S> xc = x, oc = out;
    tape.record([=]() mutable {
      if (!oc.has_grad()) return;
      xc.grad() += oc.grad();
    });
  }
  return out;
}

template <typename S>
Tensor<S> transpose2d(Tape<S>& tape, const Tensor<S>& x) {
  if (x.rank() != 2) throw UsageError("transpose2d: expected 2D input");
  const long R = x.dim(0), C = x.dim(1);
  Tensor<S> out = Tensor<S>::zeros({C, R});
  out.matrix(C, R) = x.matrix(R, C).transpose();
  if (detail::want_grad(tape, {&x})) {
    out.set_requires_grad(true);
    Tensor<S> xc = x, oc = out;
    tape.record([=]() mutable {
      if (!oc.has_grad()) return;
      xc.grad_matrix(R, C) += oc.grad_matrix(C, R).transpose();
    });
  }
  return out;
}

// Column-wise softmax on [K,N], computed with max subtraction.
template <typename S>
Tensor<S> softmax_columns(Tape<S>& tape, const Tensor<S>& x) {
  if (x.rank() != 2) throw UsageError("softmax: expected 2D input");
  const long K = x.dim(0), N = x.dim(1);
  Tensor<S> out = Tensor<S>::zeros({K, N});
  auto xm = x.matrix(K, N);
  auto om = out.matrix(K, N);
  for (long j = 0; j < N; ++j) {
    const S mx = xm.col(j).maxCoeff();
    om.col(j) = (xm.col(j).array() - mx).exp();
    om.col(j) /= om.col(j).sum();
  }
  if (detail::want_grad(tape, {&x})) {
    out.set_requires_grad(true);
    Tensor<S> xc = x, oc = out;
    tape.record([=]() mutable {
      if (!oc.has_grad()) return;
      auto y = oc.matrix(K, N);
      auto dy = oc.grad_matrix(K, N);
      auto dx = xc.grad_matrix(K, N);
      for (long j = 0; j < N; ++j) {
        const S dot = (dy.col(j).array() * y.col(j).array()).sum();
        dx.col(j).array() += y.col(j).array() * (dy.col(j).array() - dot);
      }
    });
  }
  return out;
}

// Mean over fixed non-overlapping column windows: [K,N] -> [K,N/window].
template <typename S>
Tensor<S> average_columns(Tape<S>& tape, const Tensor<S>& x, long window) {
  if (x.rank() != 2) throw UsageError("average_columns: expected 2D input");
  const long K = x.dim(0), N = x.dim(1);
  if (window < 1 || N % window != 0) {
    throw UsageError("average_columns: window " + std::to_string(window) +
                     " does not divide " + std::to_string(N) + " columns");
  }
  const long M = N / window;
  Tensor<S> out = Tensor<S>::zeros({K, M});
  auto xm = x.matrix(K, N);
  auto om = out.matrix(K, M);
  for (long j = 0; j < M; ++j) {
    om.col(j) = xm.middleCols(j * window, window).rowwise().mean();
  }
  if (detail::want_grad(tape, {&x})) {
    out.set_requires_grad(true);
    Tensor<S> xc = x, oc = out;
    tape.record([=]() mutable {
      if (!oc.has_grad()) return;
      auto dy = oc.grad_matrix(K, M);
      auto dx = xc.grad_matrix(K, N);
      const S inv = S(1) / static_cast<S>(window);
      for (long j = 0; j < M; ++j) {
        dx.middleCols(j * window, window).colwise() += (dy.col(j) * inv).eval();
      }
    });
  }
  return out;
}

// Summed cross-entropy -sum_n sum_k t log(max(y, floor)) between probability
// columns and one-hot targets. Masked windows carry all-zero target columns
// and therefore contribute nothing.
template <typename S>
Tensor<S> cross_entropy_sum(Tape<S>& tape, const Tensor<S>& probs,
                            const MatrixR<S>& targets, S floor = S(1e-12)) {
  if (probs.rank() != 2 || probs.dim(0) != targets.rows() || probs.dim(1) != targets.cols()) {
    throw UsageError("cross_entropy: prediction/target shape mismatch");
  }
  if (!(targets.sum() > S(0))) {
    throw UsageError("cross_entropy: every window is masked");
  }
  const long K = probs.dim(0), N = probs.dim(1);
  auto pm = probs.matrix(K, N);
  S loss = 0;
  for (long j = 0; j < N; ++j) {
    for (long k = 0; k < K; ++k) {
      const S t = targets(k, j);
      if (t != S(0)) loss -= t * std::log(std::max(pm(k, j), floor));
    }
  }
  Tensor<S> out = Tensor<S>::scalar_value(loss);
  if (detail::want_grad(tape, {&probs})) {
    out.set_requires_grad(true);
    Tensor<S> pc = probs, oc = out;
    auto tgt = std::make_shared<MatrixR<S>>(targets);
    tape.record([=]() mutable {
      if (!oc.has_grad()) return;
      const S go = oc.grad()[0];
      auto p = pc.matrix(K, N);
      auto dp = pc.grad_matrix(K, N);
      for (long j = 0; j < N; ++j) {
        for (long k = 0; k < K; ++k) {
          const S t = (*tgt)(k, j);
          if (t != S(0) && p(k, j) > floor) dp(k, j) -= go * t / p(k, j);
        }
      }
    });
  }
  return out;
}

// -------------------------------------------------------------------------
// Bidirectional GRU over [T,F] -> [T,2H], forward-direction features first.
// Gate layout in the stacked parameters: rows [0,H) update, [H,2H) reset,
// [2H,3H) candidate. The reset gate multiplies the previous hidden state
// before the candidate's recurrent transform.
// -------------------------------------------------------------------------
template <typename S>
struct GruParams {
  Tensor<S> w_input;  // [3H, F]
  Tensor<S> w_recur;  // [3H, H]
  Tensor<S> bias;     // [3H]

  bool requires_grad() const {
    return w_input.requires_grad() || w_recur.requires_grad() || bias.requires_grad();
  }
};

namespace detail {

template <typename S>
struct GruTrace {
  MatrixR<S> z, r, c, rh, h;  // all [T,H]
};

template <typename S>
void gru_run_direction(Eigen::Map<const MatrixR<S>> x, const GruParams<S>& p, long H,
                       bool reverse, GruTrace<S>& trace) {
  const long T = x.rows();
  const auto w_in = p.w_input.matrix(3 * H, x.cols());
  const auto w_rec = p.w_recur.matrix(3 * H, H);

  MatrixR<S> pre_all = x * w_in.transpose();  // [T,3H]
  pre_all.rowwise() +=
      Eigen::Map<const Eigen::Matrix<S, 1, Eigen::Dynamic>>(p.bias.data(), 3 * H);

  trace.z.resize(T, H);
  trace.r.resize(T, H);
  trace.c.resize(T, H);
  trace.rh.resize(T, H);
  trace.h.resize(T, H);

  using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;
  Vec h_prev = Vec::Zero(H);
  Vec pre(3 * H), z(H), r(H), rh(H), c(H), h(H);
  for (long s = 0; s < T; ++s) {
    const long t = reverse ? T - 1 - s : s;
    pre = pre_all.row(t).transpose();
    pre.head(2 * H).noalias() += w_rec.topRows(2 * H) * h_prev;
    for (long i = 0; i < H; ++i) {
      z[i] = S(1) / (S(1) + std::exp(-pre[i]));
      r[i] = S(1) / (S(1) + std::exp(-pre[H + i]));
    }
    rh = r.cwiseProduct(h_prev);
    pre.tail(H).noalias() += w_rec.bottomRows(H) * rh;
    for (long i = 0; i < H; ++i) c[i] = std::tanh(pre[2 * H + i]);
    h = z.cwiseProduct(h_prev) + (Vec::Ones(H) - z).cwiseProduct(c);
    trace.z.row(t) = z.transpose();
    trace.r.row(t) = r.transpose();
    trace.rh.row(t) = rh.transpose();
    trace.c.row(t) = c.transpose();
    trace.h.row(t) = h.transpose();
    h_prev = h;
  }
}

template <typename S>
void gru_backward_direction(Eigen::Map<const MatrixR<S>> x, GruParams<S>& p, long H,
                            bool reverse, const GruTrace<S>& trace,
                            const MatrixR<S>& dh_out, MatrixR<S>* dx) {
  const long T = x.rows();
  const long F = x.cols();
  const auto w_rec = p.w_recur.matrix(3 * H, H);

  using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;
  MatrixR<S> dpre(T, 3 * H);
  MatrixR<S> h_prev_all = MatrixR<S>::Zero(T, H);
  for (long s = 1; s < T; ++s) {
    const long t = reverse ? T - 1 - s : s;
    const long tp = reverse ? t + 1 : t - 1;
    h_prev_all.row(t) = trace.h.row(tp);
  }

  Vec dh_next = Vec::Zero(H);
  for (long s = T - 1; s >= 0; --s) {
    const long t = reverse ? T - 1 - s : s;
    const Vec z = trace.z.row(t).transpose();
    const Vec r = trace.r.row(t).transpose();
    const Vec c = trace.c.row(t).transpose();
    const Vec hp = h_prev_all.row(t).transpose();
    const Vec dh = dh_out.row(t).transpose() + dh_next;

    const Vec dz_pre =
        dh.cwiseProduct(hp - c).cwiseProduct(z).cwiseProduct(Vec::Ones(H) - z);
    const Vec dc_pre = dh.cwiseProduct(Vec::Ones(H) - z)
                           .cwiseProduct(Vec::Ones(H) - c.cwiseProduct(c));
    const Vec d_rh = w_rec.bottomRows(H).transpose() * dc_pre;
    const Vec dr_pre =
        d_rh.cwiseProduct(hp).cwiseProduct(r).cwiseProduct(Vec::Ones(H) - r);

    dpre.row(t).segment(0, H) = dz_pre.transpose();
    dpre.row(t).segment(H, H) = dr_pre.transpose();
    dpre.row(t).segment(2 * H, H) = dc_pre.transpose();

    Vec dzr(2 * H);
    dzr << dz_pre, dr_pre;
    dh_next = dh.cwiseProduct(z) + w_rec.topRows(2 * H).transpose() * dzr +
              d_rh.cwiseProduct(r);
  }

  if (p.w_input.requires_grad()) {
    p.w_input.grad_matrix(3 * H, F).noalias() += dpre.transpose() * x;
  }
  if (p.w_recur.requires_grad()) {
    auto gw = p.w_recur.grad_matrix(3 * H, H);
    gw.topRows(2 * H).noalias() += dpre.leftCols(2 * H).transpose() * h_prev_all;
    gw.bottomRows(H).noalias() += dpre.rightCols(H).transpose() * trace.rh;
  }
  if (p.bias.requires_grad()) {
    p.bias.grad() += dpre.colwise().sum().transpose().array();
  }
  if (dx != nullptr) {
    dx->noalias() += dpre * p.w_input.matrix(3 * H, F);
  }
}

}  // namespace detail

template <typename S>
Tensor<S> gru_bidirectional(Tape<S>& tape, const Tensor<S>& x, GruParams<S>& fwd,
                            GruParams<S>& bwd, long hidden) {
  if (x.rank() != 2) throw UsageError("gru: expected [T,F] input");
  const long T = x.dim(0), F = x.dim(1);
  if (T < 1) throw UsageError("gru: empty sequence");
  for (const GruParams<S>* p : {&fwd, &bwd}) {
    if (p->w_input.dim(0) != 3 * hidden || p->w_input.dim(1) != F ||
        p->w_recur.dim(0) != 3 * hidden || p->w_recur.dim(1) != hidden ||
        p->bias.dim(0) != 3 * hidden) {
      throw UsageError("gru: parameter shape mismatch");
    }
  }

  auto xm = x.matrix(T, F);
  auto traces = std::make_shared<std::pair<detail::GruTrace<S>, detail::GruTrace<S>>>();
  detail::gru_run_direction<S>(xm, fwd, hidden, /*reverse=*/false, traces->first);
  detail::gru_run_direction<S>(xm, bwd, hidden, /*reverse=*/true, traces->second);

  Tensor<S> out = Tensor<S>::zeros({T, 2 * hidden});
  auto om = out.matrix(T, 2 * hidden);
  om.leftCols(hidden) = traces->first.h;
  om.rightCols(hidden) = traces->second.h;

  const bool needs = tape.recording() &&
                     (x.requires_grad() || fwd.requires_grad() || bwd.requires_grad());
  if (needs) {
    out.set_requires_grad(true);
    Tensor<S> xc = x, oc = out;
    GruParams<S> fc = fwd, bc = bwd;
    tape.record([=]() mutable {
      if (!oc.has_grad()) return;
      auto go = oc.grad_matrix(T, 2 * hidden);
      Eigen::Map<const MatrixR<S>> xm2(xc.data(), T, F);
      MatrixR<S> dx = MatrixR<S>::Zero(T, F);
      MatrixR<S>* dxp = xc.requires_grad() ? &dx : nullptr;
      MatrixR<S> dh_f = go.leftCols(hidden);
      MatrixR<S> dh_b = go.rightCols(hidden);
      detail::gru_backward_direction<S>(xm2, fc, hidden, false, traces->first, dh_f, dxp);
      detail::gru_backward_direction<S>(xm2, bc, hidden, true, traces->second, dh_b, dxp);
      if (xc.requires_grad()) xc.grad_matrix(T, F) += dx;
    });
  }
  return out;
}

}  // namespace stagenet::ad

#endif  // STAGENET_OPS_HPP
