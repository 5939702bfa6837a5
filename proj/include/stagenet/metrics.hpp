#ifndef STAGENET_METRICS_HPP
#define STAGENET_METRICS_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "stagenet/stages.hpp"

namespace stagenet::metrics {

// K x K counts; rows are the reference stage, columns the predicted stage.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int n_classes = kNumStages)
      : counts_(Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic>::Zero(
            n_classes, n_classes)) {}

  void add(int reference, int predicted, std::int64_t n = 1) {
    counts_(reference, predicted) += n;
  }
  void merge(const ConfusionMatrix& other) { counts_ += other.counts_; }

  std::int64_t operator()(int i, int j) const { return counts_(i, j); }
  std::int64_t total() const { return counts_.sum(); }
  int n_classes() const { return static_cast<int>(counts_.rows()); }
  const Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic>& counts() const {
    return counts_;
  }

 private:
  Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic> counts_;
};

// Trace over total count.
double accuracy(const ConfusionMatrix& cm);

// (p_o - p_e) / (1 - p_e) with p_e from the row/column marginal products.
// The single-class degenerate case p_e == 1 is defined as 0; `degenerate`
// reports it when supplied.
double cohen_kappa(const ConfusionMatrix& cm, bool* degenerate = nullptr);

struct MetricSummary {
  double mean = 0;
  double sd = 0;      // sample standard deviation, 1/(n-1)
  double median = 0;
  double ci_lo = 0;   // mean -/+ 1.96 * sd / sqrt(n)
  double ci_hi = 0;
  long n = 0;
};

MetricSummary aggregate_subject_metrics(std::vector<double> values);

struct SubjectMetrics {
  std::string subject_id;
  std::string cohort;
  double accuracy_epoch = 0;  // 30 s units
  double kappa_epoch = 0;
  double accuracy_1s = 0;     // per-second units
  long n_epochs = 0;
};

// Mean correctness at each within-sequence position (seconds 1..len), for
// per-second argmax predictions and for predictions averaged per 30 s epoch.
struct PositionAccuracyProfile {
  Eigen::VectorXd per_second;    // tau_eval = 1
  Eigen::VectorXd per_epoch;     // tau_eval = 30, broadcast back per second
  Eigen::VectorXd counts;        // scored sequences contributing per position
};

// `sequence_probs` holds one K x (len_epochs*cols_per_epoch) probability
// matrix per sequence; `sequence_refs` the matching per-epoch references.
PositionAccuracyProfile sequence_position_accuracy(
    const std::vector<Eigen::MatrixXd>& sequence_probs,
    const std::vector<std::vector<SleepStage>>& sequence_refs, int cols_per_epoch);

std::string position_profile_csv(const PositionAccuracyProfile& profile);

}  // namespace stagenet::metrics

#endif  // STAGENET_METRICS_HPP
