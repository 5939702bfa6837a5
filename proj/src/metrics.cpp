#include "stagenet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <sstream>

#include "stagenet/common.hpp"

namespace stagenet::metrics {

double accuracy(const ConfusionMatrix& cm) {
  const double total = static_cast<double>(cm.total());
  if (total <= 0) throw UsageError("accuracy: empty confusion matrix");
  return static_cast<double>(cm.counts().trace()) / total;
}

double cohen_kappa(const ConfusionMatrix& cm, bool* degenerate) {
  const double total = static_cast<double>(cm.total());
  if (total <= 0) throw UsageError("kappa: empty confusion matrix");
  if (degenerate) *degenerate = false;
  const double p_o = static_cast<double>(cm.counts().trace()) / total;
  double p_e = 0;
  for (int k = 0; k < cm.n_classes(); ++k) {
    const double row = static_cast<double>(cm.counts().row(k).sum());
    const double col = static_cast<double>(cm.counts().col(k).sum());
    p_e += row * col / (total * total);
  }
  if (1.0 - p_e <= 1e-15) {
    if (degenerate) *degenerate = true;
    std::cerr << "warning: kappa undefined (chance agreement 1); reporting 0\n";
    return 0.0;
  }
  return (p_o - p_e) / (1.0 - p_e);
}

MetricSummary aggregate_subject_metrics(std::vector<double> values) {
  const long n = static_cast<long>(values.size());
  if (n < 2) throw UsageError("aggregate: need at least 2 subjects");
  MetricSummary s;
  s.n = n;
  double sum = 0;
  for (double v : values) sum += v;
  s.mean = sum / n;
  double sq = 0;
  for (double v : values) sq += (v - s.mean) * (v - s.mean);
  s.sd = std::sqrt(sq / (n - 1));
  std::sort(values.begin(), values.end());
  s.median = n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
  const double half = 1.96 * s.sd / std::sqrt(static_cast<double>(n));
  s.ci_lo = s.mean - half;
  s.ci_hi = s.mean + half;
  return s;
}

PositionAccuracyProfile sequence_position_accuracy(
    const std::vector<Eigen::MatrixXd>& sequence_probs,
    const std::vector<std::vector<SleepStage>>& sequence_refs, int cols_per_epoch) {
  if (sequence_probs.empty() || sequence_probs.size() != sequence_refs.size()) {
    throw UsageError("position accuracy: no complete sequences");
  }
  const int cps = cols_per_epoch / kEpochSeconds;  // columns per second
  if (cps < 1 || cols_per_epoch % kEpochSeconds != 0) {
    throw UsageError("position accuracy: need at least one column per second");
  }
  const long n_epochs = static_cast<long>(sequence_refs[0].size());
  const long len_s = n_epochs * kEpochSeconds;

  PositionAccuracyProfile out;
  out.per_second = Eigen::VectorXd::Zero(len_s);
  out.per_epoch = Eigen::VectorXd::Zero(len_s);
  out.counts = Eigen::VectorXd::Zero(len_s);

  for (std::size_t q = 0; q < sequence_probs.size(); ++q) {
    const Eigen::MatrixXd& probs = sequence_probs[q];
    const auto& refs = sequence_refs[q];
    if (static_cast<long>(refs.size()) != n_epochs ||
        probs.cols() != n_epochs * cols_per_epoch) {
      throw UsageError("position accuracy: inconsistent sequence geometry");
    }
    for (long e = 0; e < n_epochs; ++e) {
      if (refs[e] == SleepStage::Unknown) continue;
      const int ref = static_cast<int>(refs[e]);
      // epoch-averaged prediction, shared by the epoch's 30 positions
      Eigen::VectorXd mean =
          probs.middleCols(e * cols_per_epoch, cols_per_epoch).rowwise().mean();
      int epoch_pred = 0;
      mean.maxCoeff(&epoch_pred);
      for (long s = 0; s < kEpochSeconds; ++s) {
        const long pos = e * kEpochSeconds + s;
        Eigen::VectorXd sec =
            probs.middleCols(e * cols_per_epoch + s * cps, cps).rowwise().mean();
        int sec_pred = 0;
        sec.maxCoeff(&sec_pred);
        out.per_second[pos] += sec_pred == ref ? 1.0 : 0.0;
        out.per_epoch[pos] += epoch_pred == ref ? 1.0 : 0.0;
        out.counts[pos] += 1.0;
      }
    }
  }
  for (long pos = 0; pos < len_s; ++pos) {
    if (out.counts[pos] > 0) {
      out.per_second[pos] /= out.counts[pos];
      out.per_epoch[pos] /= out.counts[pos];
    }
  }
  return out;
}

std::string position_profile_csv(const PositionAccuracyProfile& profile) {
  std::ostringstream os;
  os << "position_s,accuracy_1s,accuracy_30s,n_sequences\n";
  for (long i = 0; i < profile.per_second.size(); ++i) {
    os << (i + 1) << "," << profile.per_second[i] << "," << profile.per_epoch[i] << ","
       << profile.counts[i] << "\n";
  }
  return os.str();
}

}  // namespace stagenet::metrics
