#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "oracles.hpp"
#include "stagenet/optim.hpp"

using namespace stagenet;
using oracles::max_rel_grad_error;
using oracles::random_tensor;
using oracles::weighted_sum;

namespace {

ad::ArrayX<double> random_weights(long n, Rng& rng) {
  ad::ArrayX<double> w(n);
  for (long i = 0; i < n; ++i) w[i] = rng.uniform(-1.0, 1.0);
  return w;
}

}  // namespace

TEST_CASE("conv2d: 1x1 identity kernels reproduce the input") {
  Rng rng(1);
  auto x = random_tensor<double>({2, 3, 2, 5}, rng);
  auto k = ad::Tensor<double>::zeros({3, 3, 1, 1});
  for (long c = 0; c < 3; ++c) k.values()[c * 3 + c] = 1.0;
  ad::Tape<double> tape(false);
  auto y = ad::conv2d(tape, x, k, 1, 1, 0, 0);
  CHECK(y.shape() == x.shape());
  CHECK((y.values() - x.values()).abs().maxCoeff() == doctest::Approx(0.0));
}

TEST_CASE("conv2d: zero kernels give zero output and window-sum kernel gradient") {
  Rng rng(2);
  auto x = random_tensor<double>({1, 2, 3, 6}, rng);
  auto k = ad::Tensor<double>::zeros({2, 2, 2, 3});
  k.set_requires_grad(true);
  ad::Tape<double> tape;
  auto y = ad::conv2d(tape, x, k, 1, 1, 0, 0);
  CHECK(y.values().abs().maxCoeff() == 0.0);
  // seed an all-ones upstream gradient via a weighted sum with unit weights
  const ad::ArrayX<double> ones = ad::ArrayX<double>::Ones(y.size());
  auto loss = weighted_sum(tape, y, ones);
  tape.backward(loss);
  // expected: each kernel tap accumulates the sum of the inputs it touches
  const long Ho = 2, Wo = 4;
  for (long co = 0; co < 2; ++co) {
    for (long ci = 0; ci < 2; ++ci) {
      for (long i = 0; i < 2; ++i) {
        for (long j = 0; j < 3; ++j) {
          double expected = 0;
          for (long oh = 0; oh < Ho; ++oh) {
            for (long ow = 0; ow < Wo; ++ow) {
              expected += x.values()[(ci * 3 + oh + i) * 6 + ow + j];
            }
          }
          const double got = k.grad()[((co * 2 + ci) * 2 + i) * 3 + j];
          CHECK(got == doctest::Approx(expected).epsilon(1e-12));
        }
      }
    }
  }
}

TEST_CASE("conv2d: forward matches the naive reference on strides and padding") {
  Rng rng(3);
  for (auto [sh, sw, ph, pw] : {std::array<int, 4>{1, 1, 0, 1}, std::array<int, 4>{1, 2, 0, 0},
                                std::array<int, 4>{2, 2, 1, 1}}) {
    auto x = random_tensor<double>({2, 3, 4, 9}, rng);
    auto k = random_tensor<double>({4, 3, 2, 3}, rng);
    ad::Tape<double> tape(false);
    auto y = ad::conv2d(tape, x, k, sh, sw, ph, pw);
    const auto ref = oracles::conv2d_reference(
        std::vector<double>(x.data(), x.data() + x.size()), 2, 3, 4, 9,
        std::vector<double>(k.data(), k.data() + k.size()), 4, 2, 3, sh, sw, ph, pw);
    REQUIRE(y.size() == static_cast<long>(ref.size()));
    for (long i = 0; i < y.size(); ++i) {
      CHECK(y.values()[i] == doctest::Approx(ref[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("conv2d: gradients match finite differences") {
  Rng rng(4);
  auto x = random_tensor<double>({1, 2, 4, 8}, rng);
  auto k = random_tensor<double>({3, 2, 1, 3}, rng);
  const auto w = random_weights(3 * 4 * 8, rng);
  const double err = max_rel_grad_error(
      [&](ad::Tape<double>& tape) {
        auto y = ad::conv2d(tape, x, k, 1, 1, 0, 1);
        return weighted_sum(tape, y, w);
      },
      {x, k});
  CHECK(err < 1e-4);
}

TEST_CASE("bias_add: gradients match finite differences") {
  Rng rng(5);
  auto x = random_tensor<double>({2, 3, 1, 4}, rng);
  auto b = random_tensor<double>({3}, rng);
  const auto w = random_weights(x.size(), rng);
  const double err = max_rel_grad_error(
      [&](ad::Tape<double>& tape) {
        return weighted_sum(tape, ad::bias_add(tape, x, b), w);
      },
      {x, b});
  CHECK(err < 1e-4);
}

TEST_CASE("batchnorm: normalized batch with unit affine is a fixed point") {
  Rng rng(6);
  auto x = random_tensor<double>({4, 2, 1, 8}, rng);
  for (long c = 0; c < 2; ++c) {
    double sum = 0, count = 0;
    for (long b = 0; b < 4; ++b)
      for (long i = 0; i < 8; ++i) {
        sum += x.values()[(b * 2 + c) * 8 + i];
        count += 1;
      }
    const double mean = sum / count;
    double sq = 0;
    for (long b = 0; b < 4; ++b)
      for (long i = 0; i < 8; ++i) {
        const double d = x.values()[(b * 2 + c) * 8 + i] - mean;
        sq += d * d;
      }
    const double std = std::sqrt(sq / count);
    for (long b = 0; b < 4; ++b)
      for (long i = 0; i < 8; ++i) {
        auto& v = x.values()[(b * 2 + c) * 8 + i];
        v = (v - mean) / std;
      }
  }
  auto gamma = ad::Tensor<double>::from_values({2}, ad::ArrayX<double>::Ones(2));
  auto beta = ad::Tensor<double>::zeros({2});
  auto state = ad::BatchNormState<double>::make(2);
  ad::Tape<double> tape(false);
  auto y = ad::batchnorm2d(tape, x, gamma, beta, state, 0.1, 1e-9, ad::Phase::Train);
  CHECK((y.values() - x.values()).abs().maxCoeff() < 1e-6);
}

TEST_CASE("batchnorm: beta shifts the per-feature mean in train mode") {
  Rng rng(7);
  auto x = random_tensor<double>({3, 2, 1, 5}, rng, -4.0, 4.0);
  auto gamma = ad::Tensor<double>::from_values({2}, ad::ArrayX<double>::Ones(2));
  auto beta = ad::Tensor<double>::from_values({2}, ad::ArrayX<double>::Constant(2, 5.0));
  auto state = ad::BatchNormState<double>::make(2);
  ad::Tape<double> tape(false);
  auto y = ad::batchnorm2d(tape, x, gamma, beta, state, 0.1, 1e-5, ad::Phase::Train);
  for (long c = 0; c < 2; ++c) {
    double mean = 0;
    for (long b = 0; b < 3; ++b)
      for (long i = 0; i < 5; ++i) mean += y.values()[(b * 2 + c) * 5 + i];
    mean /= 15.0;
    CHECK(mean == doctest::Approx(5.0).epsilon(1e-9));
  }
}

TEST_CASE("batchnorm: running statistics blend batch statistics by momentum") {
  Rng rng(30);
  auto x = random_tensor<double>({2, 1, 1, 50}, rng, 1.0, 3.0);
  auto gamma = ad::Tensor<double>::from_values({1}, ad::ArrayX<double>::Ones(1));
  auto beta = ad::Tensor<double>::zeros({1});
  auto state = ad::BatchNormState<double>::make(1);
  ad::Tape<double> tape(false);
  ad::batchnorm2d(tape, x, gamma, beta, state, 0.1, 1e-5, ad::Phase::Train);
  const double batch_mean = x.values().mean();
  const double batch_var = (x.values() - batch_mean).square().mean();
  CHECK(state.running_mean[0] == doctest::Approx(0.1 * batch_mean).epsilon(1e-12));
  CHECK(state.running_var[0] ==
        doctest::Approx(0.9 * 1.0 + 0.1 * batch_var).epsilon(1e-12));
}

TEST_CASE("batchnorm: train and eval gradients match finite differences") {
  Rng rng(8);
  for (const auto phase : {ad::Phase::Train, ad::Phase::Eval}) {
    auto x = random_tensor<double>({2, 3, 1, 4}, rng);
    auto gamma = random_tensor<double>({3}, rng, 0.5, 1.5);
    auto beta = random_tensor<double>({3}, rng);
    const auto w = random_weights(x.size(), rng);
    const double err = max_rel_grad_error(
        [&](ad::Tape<double>& tape) {
          auto state = ad::BatchNormState<double>::make(3);  // fresh per call
          state.running_mean.setConstant(0.2);
          state.running_var.setConstant(1.3);
          auto y = ad::batchnorm2d(tape, x, gamma, beta, state, 0.1, 1e-5, phase);
          return weighted_sum(tape, y, w);
        },
        {x, gamma, beta});
    CHECK(err < 1e-4);
  }
}

TEST_CASE("relu: values and gradient routing") {
  ad::ArrayX<double> v(4);
  v << -1.0, 2.0, 0.0, -0.5;
  auto x = ad::Tensor<double>::from_values({4}, std::move(v));
  ad::Tape<double> tape(false);
  auto y = ad::relu(tape, x);
  CHECK(y.values()[0] == 0.0);
  CHECK(y.values()[1] == 2.0);
  CHECK(y.values()[2] == 0.0);
  CHECK(y.values()[3] == 0.0);

  Rng rng(9);
  auto xr = random_tensor<double>({2, 2, 1, 3}, rng);
  const auto w = random_weights(xr.size(), rng);
  const double err = max_rel_grad_error(
      [&](ad::Tape<double>& t) { return weighted_sum(t, ad::relu(t, xr), w); }, {xr});
  CHECK(err < 1e-4);
}

TEST_CASE("maxpool: halving, -inf padding, and first-index tie break") {
  ad::ArrayX<double> v(4);
  v << 1.0, 3.0, 2.0, 2.0;
  auto x = ad::Tensor<double>::from_values({1, 1, 1, 4}, std::move(v));
  x.set_requires_grad(true);
  ad::Tape<double> tape;
  auto y = ad::maxpool_time2(tape, x);
  REQUIRE(y.shape() == ad::Shape{1, 1, 1, 2});
  CHECK(y.values()[0] == 3.0);
  CHECK(y.values()[1] == 2.0);
  const ad::ArrayX<double> ones = ad::ArrayX<double>::Ones(2);
  auto loss = weighted_sum(tape, y, ones);
  tape.backward(loss);
  CHECK(x.grad()[0] == 0.0);
  CHECK(x.grad()[1] == 1.0);
  CHECK(x.grad()[2] == 1.0);  // tie resolved to the first element
  CHECK(x.grad()[3] == 0.0);

  // odd length: last window is the single trailing element
  ad::ArrayX<double> ov(3);
  ov << -5.0, -7.0, -6.0;
  auto odd = ad::Tensor<double>::from_values({1, 1, 1, 3}, std::move(ov));
  ad::Tape<double> t2(false);
  auto y2 = ad::maxpool_time2(t2, odd);
  REQUIRE(y2.shape() == ad::Shape{1, 1, 1, 2});
  CHECK(y2.values()[0] == -5.0);
  CHECK(y2.values()[1] == -6.0);
}

TEST_CASE("maxpool: gradients match finite differences") {
  Rng rng(10);
  auto x = random_tensor<double>({2, 2, 1, 6}, rng);
  const auto w = random_weights(2 * 2 * 1 * 3, rng);
  const double err = max_rel_grad_error(
      [&](ad::Tape<double>& t) { return weighted_sum(t, ad::maxpool_time2(t, x), w); },
      {x});
  CHECK(err < 1e-4);
}

TEST_CASE("gru: zero input with zero bias stays at zero") {
  Rng rng(11);
  ad::GruParams<double> fwd{random_tensor<double>({12, 3}, rng),
                            random_tensor<double>({12, 4}, rng),
                            ad::Tensor<double>::zeros({12})};
  ad::GruParams<double> bwd{random_tensor<double>({12, 3}, rng),
                            random_tensor<double>({12, 4}, rng),
                            ad::Tensor<double>::zeros({12})};
  auto x = ad::Tensor<double>::zeros({5, 3});
  ad::Tape<double> tape(false);
  auto y = ad::gru_bidirectional(tape, x, fwd, bwd, 4);
  REQUIRE(y.shape() == ad::Shape{5, 8});
  CHECK(y.values().abs().maxCoeff() == 0.0);
}

TEST_CASE("gru: forward matches a plain reference implementation") {
  Rng rng(12);
  const long T = 7, F = 3, H = 4;
  ad::GruParams<double> fwd{random_tensor<double>({3 * H, F}, rng),
                            random_tensor<double>({3 * H, H}, rng),
                            random_tensor<double>({3 * H}, rng)};
  ad::GruParams<double> bwd{random_tensor<double>({3 * H, F}, rng),
                            random_tensor<double>({3 * H, H}, rng),
                            random_tensor<double>({3 * H}, rng)};
  auto x = random_tensor<double>({T, F}, rng);

  ad::Tape<double> tape(false);
  auto y = ad::gru_bidirectional(tape, x, fwd, bwd, H);

  auto to_ref = [&](const ad::GruParams<double>& p) {
    oracles::GruReference ref;
    ref.w_in = p.w_input.matrix(3 * H, F);
    ref.w_rec = p.w_recur.matrix(3 * H, H);
    ref.bias = Eigen::Map<const Eigen::VectorXd>(p.bias.data(), 3 * H);
    return ref;
  };
  Eigen::MatrixXd xm = x.matrix(T, F);
  const Eigen::MatrixXd hf = to_ref(fwd).run(xm, false);
  const Eigen::MatrixXd hb = to_ref(bwd).run(xm, true);
  Eigen::MatrixXd ym = y.matrix(T, 2 * H);
  CHECK((ym.leftCols(H) - hf).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((ym.rightCols(H) - hb).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("gru: time reversal swaps the direction halves") {
  Rng rng(21);
  const long T = 6, F = 3, H = 2;
  ad::GruParams<double> fwd{random_tensor<double>({3 * H, F}, rng),
                            random_tensor<double>({3 * H, H}, rng),
                            random_tensor<double>({3 * H}, rng)};
  ad::GruParams<double> bwd{random_tensor<double>({3 * H, F}, rng),
                            random_tensor<double>({3 * H, H}, rng),
                            random_tensor<double>({3 * H}, rng)};
  auto x = random_tensor<double>({T, F}, rng);
  auto xr = ad::Tensor<double>::zeros({T, F});
  for (long t = 0; t < T; ++t) {
    xr.matrix(T, F).row(t) = x.matrix(T, F).row(T - 1 - t);
  }
  // reversing the input must produce the row-reversed output with the
  // forward and backward halves exchanged, when the directions swap roles
  ad::Tape<double> tape(false);
  auto y = ad::gru_bidirectional(tape, x, fwd, bwd, H);
  ad::GruParams<double> fwd2 = bwd, bwd2 = fwd;
  auto yr = ad::gru_bidirectional(tape, xr, fwd2, bwd2, H);
  Eigen::MatrixXd ym = y.matrix(T, 2 * H);
  Eigen::MatrixXd yrm = yr.matrix(T, 2 * H);
  for (long t = 0; t < T; ++t) {
    CHECK((ym.row(t).head(H) - yrm.row(T - 1 - t).tail(H)).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((ym.row(t).tail(H) - yrm.row(T - 1 - t).head(H)).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("gru: single-step sequences make both directions coincide") {
  Rng rng(13);
  const long F = 3, H = 2;
  ad::GruParams<double> fwd{random_tensor<double>({3 * H, F}, rng),
                            random_tensor<double>({3 * H, H}, rng),
                            random_tensor<double>({3 * H}, rng)};
  ad::GruParams<double> bwd = fwd;  // shared parameters
  auto x = random_tensor<double>({1, F}, rng);
  ad::Tape<double> tape(false);
  auto y = ad::gru_bidirectional(tape, x, fwd, bwd, H);
  Eigen::MatrixXd ym = y.matrix(1, 2 * H);
  CHECK((ym.leftCols(H) - ym.rightCols(H)).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("gru: full gradient check over inputs and all parameters") {
  Rng rng(14);
  const long T = 5, F = 3, H = 4;
  ad::GruParams<double> fwd{random_tensor<double>({3 * H, F}, rng),
                            random_tensor<double>({3 * H, H}, rng),
                            random_tensor<double>({3 * H}, rng)};
  ad::GruParams<double> bwd{random_tensor<double>({3 * H, F}, rng),
                            random_tensor<double>({3 * H, H}, rng),
                            random_tensor<double>({3 * H}, rng)};
  auto x = random_tensor<double>({T, F}, rng);
  const auto w = random_weights(T * 2 * H, rng);
  const double err = max_rel_grad_error(
      [&](ad::Tape<double>& tape) {
        auto y = ad::gru_bidirectional(tape, x, fwd, bwd, H);
        return weighted_sum(tape, y, w);
      },
      {x, fwd.w_input, fwd.w_recur, fwd.bias, bwd.w_input, bwd.w_recur, bwd.bias});
  CHECK(err < 1e-4);
}

TEST_CASE("softmax: uniform logits, shift invariance, simplex outputs") {
  auto x = ad::Tensor<double>::zeros({5, 1});
  ad::Tape<double> tape(false);
  auto y = ad::softmax_columns(tape, x);
  for (long i = 0; i < 5; ++i) CHECK(y.values()[i] == doctest::Approx(0.2).epsilon(1e-12));

  Rng rng(15);
  auto a = random_tensor<double>({4, 3}, rng, -3.0, 3.0);
  auto b = ad::Tensor<double>::from_values({4, 3}, a.values() + 7.5);
  ad::Tape<double> t2(false);
  auto ya = ad::softmax_columns(t2, a);
  auto yb = ad::softmax_columns(t2, b);
  CHECK((ya.values() - yb.values()).abs().maxCoeff() < 1e-12);

  for (long j = 0; j < 3; ++j) {
    double sum = 0;
    for (long k = 0; k < 4; ++k) {
      const double v = ya.matrix(4, 3)(k, j);
      CHECK(v >= 0.0);
      sum += v;
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("softmax: Jacobian matches finite differences") {
  Rng rng(16);
  auto x = random_tensor<double>({5, 2}, rng, -2.0, 2.0);
  const auto w = random_weights(10, rng);
  const double err = max_rel_grad_error(
      [&](ad::Tape<double>& t) { return weighted_sum(t, ad::softmax_columns(t, x), w); },
      {x});
  CHECK(err < 1e-4);
}

TEST_CASE("transpose/reshape/add/scale/average gradients compose") {
  Rng rng(17);
  auto x = random_tensor<double>({3, 4}, rng);
  auto y = random_tensor<double>({3, 4}, rng);
  const auto w = random_weights(6, rng);
  const double err = max_rel_grad_error(
      [&](ad::Tape<double>& t) {
        auto a = ad::transpose2d(t, x);         // [4,3]
        auto b = ad::reshape(t, a, {3, 4});
        auto c = ad::add(t, b, y);
        auto d = ad::scale(t, c, 1.7);
        auto e = ad::average_columns(t, d, 2);  // [3,2]
        auto f = ad::reshape(t, e, {6});
        return weighted_sum(t, f, w);
      },
      {x, y});
  CHECK(err < 1e-4);
}

TEST_CASE("tape: diamond reuse of one tensor accumulates both paths") {
  Rng rng(18);
  auto x = random_tensor<double>({2, 3}, rng);
  const auto w = random_weights(6, rng);
  const double err = max_rel_grad_error(
      [&](ad::Tape<double>& t) {
        auto a = ad::relu(t, x);
        auto b = ad::add(t, a, x);  // x used twice
        return weighted_sum(t, b, w);
      },
      {x});
  CHECK(err < 1e-4);
}

TEST_CASE("glorot: bound, support, and variance") {
  // fan_in = fan_out = 3 gives bound sqrt(6/6) = 1 exactly
  const auto [fin, fout] = ad::fan_in_out({3, 3});
  CHECK(fin == 3);
  CHECK(fout == 3);

  const long n = 100000;
  Rng rng(20);
  ad::ArrayX<double> samples(n);
  long filled = 0;
  while (filled < n) {
    auto draw = ad::glorot_uniform<double>({3, 3}, rng);
    for (long i = 0; i < draw.size() && filled < n; ++i) {
      samples[filled++] = draw.values()[i];
    }
  }
  CHECK(samples.maxCoeff() <= 1.0);
  CHECK(samples.minCoeff() >= -1.0);
  const double var = (samples - samples.mean()).square().sum() / n;
  CHECK(var == doctest::Approx(1.0 / 3.0).epsilon(0.05));
}

TEST_CASE("glorot: conv fans include the receptive field") {
  const auto [fin, fout] = ad::fan_in_out({8, 4, 1, 3});
  CHECK(fin == 12);
  CHECK(fout == 24);
}

TEST_CASE("adam: closed-form first step") {
  ad::ArrayX<double> params(3);
  params << 1.0, -2.0, 0.5;
  ad::ArrayX<double> grad(3);
  grad << 0.3, -0.7, 0.001;
  auto state = ad::AdamState<double>::make(3);
  ad::AdamConfig cfg;
  cfg.lr = 1e-4;
  const ad::ArrayX<double> before = params;
  ad::adam_step(params, grad, state, cfg);
  for (long i = 0; i < 3; ++i) {
    // first iteration of the moment recurrences: m-hat = g, v-hat = g^2
    const double expected = before[i] - cfg.lr * grad[i] / (std::abs(grad[i]) + cfg.eps);
    CHECK(params[i] == doctest::Approx(expected).epsilon(1e-12));
  }
  CHECK(state.step == 1);
}

TEST_CASE("adam: zero gradient without decay leaves parameters unchanged") {
  ad::ArrayX<double> params(2);
  params << 0.4, -0.9;
  auto state = ad::AdamState<double>::make(2);
  ad::AdamConfig cfg;
  for (int i = 0; i < 5; ++i) {
    const ad::ArrayX<double> zero = ad::ArrayX<double>::Zero(2);
    ad::adam_step(params, zero, state, cfg, 0.0);
  }
  CHECK(params[0] == 0.4);
  CHECK(params[1] == -0.9);
}

TEST_CASE("adam: descends a convex quadratic") {
  ad::ArrayX<double> theta(1);
  theta << 1.0;
  auto state = ad::AdamState<double>::make(1);
  ad::AdamConfig cfg;
  cfg.lr = 0.01;
  const double start = std::abs(theta[0]);
  for (int i = 0; i < 100; ++i) {
    ad::ArrayX<double> g(1);
    g << 2.0 * theta[0];
    ad::adam_step(theta, g, state, cfg);
  }
  CHECK(std::abs(theta[0]) < start);
  CHECK(std::abs(theta[0]) < 0.5);
}

TEST_CASE("adam: coupled decay acts as a pull toward zero on weights") {
  ad::ArrayX<double> theta(1);
  theta << 2.0;
  auto state = ad::AdamState<double>::make(1);
  ad::AdamConfig cfg;
  cfg.lr = 1e-2;
  const ad::ArrayX<double> zero = ad::ArrayX<double>::Zero(1);
  ad::adam_step(theta, zero, state, cfg, 1e-4);
  CHECK(theta[0] < 2.0);
}
