#ifndef STAGENET_TRAINER_HPP
#define STAGENET_TRAINER_HPP

#include <cmath>
#include <cstdint>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "stagenet/dataset.hpp"
#include "stagenet/loss.hpp"
#include "stagenet/metrics.hpp"
#include "stagenet/network.hpp"

namespace stagenet::train {

struct RunConfig {
  net::ModelConfig model;
  int batch_size = 32;
  int max_passes = 50;
  std::uint64_t seed = 1;
  ad::AdamConfig adam;        // lr 1e-4, betas 0.9/0.999, eps 1e-8
  double weight_decay = 0.0;  // coupled L2 on weight matrices only
  // Optional early exit once validation kappa reaches this level; the run
  // still reports the best checkpoint seen. NaN disables it.
  double stop_at_val_kappa = std::numeric_limits<double>::quiet_NaN();
  std::string dump_dir;  // where a state dump lands if the loss diverges
};

RunConfig load_run_config(const std::string& path);
void save_run_config(const std::string& path, const RunConfig& config);

struct PassRecord {
  int pass = 0;  // 1-based
  double train_loss = 0;
  double val_accuracy = 0;
  double val_kappa = 0;
  bool best = false;
};

struct TrainResult {
  std::vector<ad::ArrayX<float>> best_state;       // parameters + buffers
  std::vector<ad::AdamState<float>> best_opt;
  int best_pass = 0;
  double best_val_kappa = 0;
  std::vector<PassRecord> log;
};

// Index of the pass holding the highest validation kappa (first on ties).
int select_best_pass(const std::vector<PassRecord>& log);

// Fixed-pass training with per-pass validation and argmax-kappa checkpoint
// selection. Emits one NDJSON event per pass to `log_stream` when given.
TrainResult train(const RunConfig& config, const std::vector<LoadedRecording>& train_recs,
                  const std::vector<LoadedRecording>& val_recs,
                  std::ostream* log_stream = nullptr);

struct EvaluationResult {
  std::vector<metrics::SubjectMetrics> per_subject;
  metrics::ConfusionMatrix pooled{kNumStages};
  // Aggregates over subjects (valid when at least two subjects were scored).
  metrics::MetricSummary accuracy_summary;
  metrics::MetricSummary kappa_summary;
  bool has_summary = false;

  double mean_subject_accuracy() const { return accuracy_summary.mean; }
};

// Subject-level and pooled metrics at the given evaluation window.
EvaluationResult evaluate(net::Network<float>& model,
                          const std::vector<LoadedRecording>& recs, int tau_eval_s);

// Pooled confusion only (used for per-pass validation).
metrics::ConfusionMatrix pooled_confusion(net::Network<float>& model,
                                          const std::vector<LoadedRecording>& recs,
                                          int tau_eval_s);

// Per-sequence probability matrices plus epoch references, for the
// within-sequence position-accuracy profile.
struct SequenceProbs {
  std::vector<Eigen::MatrixXd> probs;
  std::vector<std::vector<SleepStage>> refs;
};
SequenceProbs collect_sequence_probs(net::Network<float>& model,
                                     const std::vector<LoadedRecording>& recs);

// Probability columns covering every whole epoch of one recording; the tail
// shorter than one sequence is covered by an end-aligned window.
Eigen::MatrixXd predict_recording(net::Network<float>& model, const LoadedRecording& rec);

}  // namespace stagenet::train

#endif  // STAGENET_TRAINER_HPP
