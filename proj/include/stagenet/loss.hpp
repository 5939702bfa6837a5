#ifndef STAGENET_LOSS_HPP
#define STAGENET_LOSS_HPP

#include <vector>

#include "stagenet/ops.hpp"
#include "stagenet/stages.hpp"

namespace stagenet {

// Per-sequence training targets: one-hot columns broadcast from each 30 s
// epoch label to 30/window_s averaging windows. Unscored epochs yield
// all-zero (masked) columns, which drop out of the loss and are skipped by
// metrics.
template <typename S>
struct BroadcastLabels {
  ad::MatrixR<S> targets;   // [K, n_windows]
  std::vector<bool> valid;  // per window
  long n_valid = 0;
};

template <typename S>
BroadcastLabels<S> broadcast_labels(const std::vector<SleepStage>& epochs, int window_s,
                                    int n_stages = kNumStages) {
  if (window_s < 1 || kEpochSeconds % window_s != 0) {
    throw UsageError("labels: window must divide 30 s");
  }
  const long per_epoch = kEpochSeconds / window_s;
  const long n = static_cast<long>(epochs.size()) * per_epoch;
  BroadcastLabels<S> out;
  out.targets = ad::MatrixR<S>::Zero(n_stages, n);
  out.valid.assign(n, false);
  for (std::size_t e = 0; e < epochs.size(); ++e) {
    if (epochs[e] == SleepStage::Unknown) continue;
    const int k = static_cast<int>(epochs[e]);
    for (long w = 0; w < per_epoch; ++w) {
      const long col = e * per_epoch + w;
      out.targets(k, col) = S(1);
      out.valid[col] = true;
      ++out.n_valid;
    }
  }
  return out;
}

// Cross-entropy between window-averaged probability columns and broadcast
// one-hot targets, summed over unmasked windows. `cols_per_window` is the
// number of per-step probability columns pooled into one window.
template <typename S>
ad::Tensor<S> sequence_loss(ad::Tape<S>& tape, const ad::Tensor<S>& probs,
                            const BroadcastLabels<S>& labels, long cols_per_window) {
  ad::Tensor<S> averaged = ad::average_columns(tape, probs, cols_per_window);
  if (averaged.dim(1) != labels.targets.cols()) {
    throw UsageError("loss: averaged columns do not match target windows");
  }
  return ad::cross_entropy_sum(tape, averaged, labels.targets, S(1e-12));
}

}  // namespace stagenet

#endif  // STAGENET_LOSS_HPP
