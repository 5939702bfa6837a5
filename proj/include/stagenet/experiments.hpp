#ifndef STAGENET_EXPERIMENTS_HPP
#define STAGENET_EXPERIMENTS_HPP

#include <string>
#include <vector>

#include "stagenet/trainer.hpp"

namespace stagenet::experiments {

// Split `total` across k cohorts as evenly as possible: floor everywhere,
// remainder distributed one each to cohorts in name order.
std::vector<long> even_allocation(long total, int k);

// All k-element cohort subsets in lexicographic order over sorted names.
std::vector<std::vector<std::string>> enumerate_combinations(
    std::vector<std::string> names, int k);

// Nested subject subsets: one seed-shuffled order, prefix of ceil(f * n).
std::vector<std::string> fraction_subjects(std::vector<std::string> subjects,
                                           double fraction, std::uint64_t seed);

struct Grid {
  std::vector<std::string> row_labels;  // training configurations
  std::vector<std::string> col_labels;  // test cohorts
  Eigen::MatrixXd accuracy;             // mean per-subject accuracy
  Eigen::MatrixXd kappa;
};

std::string grid_csv(const Grid& grid, const Eigen::MatrixXd& cells);

// Train on each single cohort, test on every cohort's test subset. Weight
// decay (and everything else) comes from the base config.
Grid run_loci(const CohortManifest& manifest, const train::RunConfig& base);

// Train on all-but-one cohort; row i holds the model trained without
// cohort i, evaluated on every cohort's test subset.
Grid run_loco(const CohortManifest& manifest, const train::RunConfig& base);

struct ComboRow {
  std::vector<std::string> cohorts;
  std::vector<long> drawn_per_cohort;
  double mean_accuracy = 0;
  double mean_kappa = 0;
};

// Every 2-, 3-, and 4-cohort combination, each trained on `total_psgs`
// recordings drawn evenly across its cohorts and evaluated on the full test
// partition.
std::vector<ComboRow> run_combinations(const CohortManifest& manifest,
                                       const train::RunConfig& base, long total_psgs);

struct FractionRow {
  double fraction = 0;
  long n_subjects = 0;
  double mean_accuracy = 0;
  double mean_kappa = 0;
};

inline std::vector<double> paper_fractions() {
  return {0.0025, 0.005, 0.01, 0.05, 0.10, 0.25, 0.50, 0.75, 1.0};
}

// Nested subject-level subsamples of the mixed training partition, each
// trained and evaluated on the fixed test partition.
std::vector<FractionRow> run_fractions(const CohortManifest& manifest,
                                       const train::RunConfig& base,
                                       const std::vector<double>& fractions);

struct SweepRow {
  std::string section;  // "hidden_units" | "sequence_minutes" | "window_s"
  double value = 0;
  metrics::MetricSummary accuracy;
  metrics::MetricSummary kappa;
};

inline std::vector<int> sweep_hidden_units() { return {0, 64, 128, 256, 512, 1024, 2048}; }
inline std::vector<int> sweep_seq_epochs() { return {4, 6, 8, 10, 20}; }  // 2..10 minutes
inline std::vector<int> sweep_windows_s() { return {1, 3, 5, 10, 15, 30}; }

// Hidden-unit and sequence-length training sweeps plus evaluation-window
// re-scoring of the base model, all scored on the validation partition.
std::vector<SweepRow> run_hidden_unit_sweep(const CohortManifest& manifest,
                                            const train::RunConfig& base);

std::string combos_csv(const std::vector<ComboRow>& rows);
std::string fractions_csv(const std::vector<FractionRow>& rows);
std::string sweep_json(const std::vector<SweepRow>& rows);

// Subject-mean metrics report (per-subject rows, aggregate block, pooled
// confusion grid) as a JSON document.
std::string metrics_report_json(const train::EvaluationResult& result);

}  // namespace stagenet::experiments

#endif  // STAGENET_EXPERIMENTS_HPP
