#include "stagenet/experiments.hpp"

#include <algorithm>
#include <sstream>

#include <json.hpp>

#include "stagenet/rng.hpp"

namespace stagenet::experiments {

using nlohmann::json;

std::vector<long> even_allocation(long total, int k) {
  if (k < 1 || total < k) throw UsageError("allocation: need at least one PSG per cohort");
  std::vector<long> out(k, total / k);
  const long remainder = total % k;
  for (long i = 0; i < remainder; ++i) out[i] += 1;  // name order gets the extras
  return out;
}

std::vector<std::vector<std::string>> enumerate_combinations(
    std::vector<std::string> names, int k) {
  std::sort(names.begin(), names.end());
  const int n = static_cast<int>(names.size());
  if (k < 1 || k > n) return {};
  std::vector<std::vector<std::string>> out;
  std::vector<int> idx(k);
  for (int i = 0; i < k; ++i) idx[i] = i;
  while (true) {
    std::vector<std::string> combo;
    for (int i : idx) combo.push_back(names[i]);
    out.push_back(std::move(combo));
    int pos = k - 1;
    while (pos >= 0 && idx[pos] == n - k + pos) --pos;
    if (pos < 0) break;
    ++idx[pos];
    for (int i = pos + 1; i < k; ++i) idx[i] = idx[i - 1] + 1;
  }
  return out;
}

std::vector<std::string> fraction_subjects(std::vector<std::string> subjects,
                                           double fraction, std::uint64_t seed) {
  if (fraction <= 0.0 || fraction > 1.0) {
    throw UsageError("fractions: fraction must lie in (0, 1]");
  }
  std::sort(subjects.begin(), subjects.end());
  Rng rng(Rng::derive(seed, "fraction-order"));
  rng.shuffle(subjects);
  const auto n = static_cast<std::size_t>(
      std::min<double>(static_cast<double>(subjects.size()),
                       std::ceil(fraction * static_cast<double>(subjects.size()))));
  subjects.resize(std::max<std::size_t>(1, n));
  return subjects;
}

namespace {

std::string join(const std::vector<std::string>& parts, const std::string& sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

std::vector<std::string> train_partition_subjects(const CohortManifest& manifest) {
  std::vector<std::string> subjects;
  for (const auto& [subject, split] : manifest.split) {
    if (split == Split::Train) subjects.push_back(subject);
  }
  std::sort(subjects.begin(), subjects.end());
  return subjects;
}

// Train on the given recordings and return the restored best model.
std::unique_ptr<net::Network<float>> train_model(const train::RunConfig& config,
                                                 const std::vector<LoadedRecording>& tr,
                                                 const std::vector<LoadedRecording>& va) {
  const train::TrainResult result = train::train(config, tr, va);
  auto model = std::make_unique<net::Network<float>>(config.model, config.seed);
  model->restore(result.best_state);
  return model;
}

}  // namespace

std::string grid_csv(const Grid& grid, const Eigen::MatrixXd& cells) {
  std::ostringstream os;
  os << "train_config";
  for (const auto& c : grid.col_labels) os << "," << c;
  os << "\n";
  for (std::size_t r = 0; r < grid.row_labels.size(); ++r) {
    os << grid.row_labels[r];
    for (long c = 0; c < cells.cols(); ++c) os << "," << cells(r, c);
    os << "\n";
  }
  return os.str();
}

namespace {

Grid run_cohort_grid(const CohortManifest& manifest, const train::RunConfig& base,
                     bool leave_in) {
  const std::vector<std::string> cohorts = manifest.cohort_names();
  if (cohorts.size() < 2) {
    throw DataError("cohort grid: need at least two cohorts");
  }
  Grid grid;
  grid.col_labels = cohorts;
  grid.accuracy.resize(cohorts.size(), cohorts.size());
  grid.kappa.resize(cohorts.size(), cohorts.size());

  // test subsets are shared across rows; loaded once, after no training run
  // can touch them
  std::vector<std::vector<LoadedRecording>> test_sets;
  for (const auto& cohort : cohorts) {
    test_sets.push_back(load_recordings(manifest, manifest.entries_in(Split::Test, {cohort})));
  }

  for (std::size_t r = 0; r < cohorts.size(); ++r) {
    std::vector<std::string> train_cohorts;
    if (leave_in) {
      train_cohorts = {cohorts[r]};
    } else {
      for (const auto& c : cohorts) {
        if (c != cohorts[r]) train_cohorts.push_back(c);
      }
    }
    const std::string label = (leave_in ? "loci:" : "loco:") + cohorts[r];
    grid.row_labels.push_back(label);

    train::RunConfig config = base;
    config.seed = Rng::derive(base.seed, label);
    const auto tr = load_recordings(manifest, manifest.entries_in(Split::Train, train_cohorts));
    const auto va = load_recordings(manifest, manifest.entries_in(Split::Val, train_cohorts));
    const auto model = train_model(config, tr, va);
    for (std::size_t c = 0; c < cohorts.size(); ++c) {
      const train::EvaluationResult ev = train::evaluate(*model, test_sets[c], kEpochSeconds);
      grid.accuracy(r, c) = ev.mean_subject_accuracy();
      grid.kappa(r, c) = ev.kappa_summary.mean;
    }
  }
  return grid;
}

}  // namespace

Grid run_loci(const CohortManifest& manifest, const train::RunConfig& base) {
  return run_cohort_grid(manifest, base, true);
}

Grid run_loco(const CohortManifest& manifest, const train::RunConfig& base) {
  return run_cohort_grid(manifest, base, false);
}

std::vector<ComboRow> run_combinations(const CohortManifest& manifest,
                                       const train::RunConfig& base, long total_psgs) {
  const std::vector<std::string> cohorts = manifest.cohort_names();
  std::vector<ComboRow> rows;

  const auto test_recs = load_recordings(manifest, manifest.entries_in(Split::Test));

  for (int k = 2; k <= 4; ++k) {
    if (k > static_cast<int>(cohorts.size())) continue;
    for (const auto& combo : enumerate_combinations(cohorts, k)) {
      const std::string label = "combo:" + join(combo, "+");
      const std::vector<long> allocation = even_allocation(total_psgs, k);

      std::vector<ManifestEntry> picked;
      Rng rng(Rng::derive(base.seed, label));
      for (std::size_t i = 0; i < combo.size(); ++i) {
        auto pool = manifest.entries_in(Split::Train, {combo[i]});
        if (static_cast<long>(pool.size()) < allocation[i]) {
          throw DataError("combinations: cohort '" + combo[i] + "' has " +
                          std::to_string(pool.size()) + " training PSGs, needs " +
                          std::to_string(allocation[i]));
        }
        rng.shuffle(pool);
        picked.insert(picked.end(), pool.begin(), pool.begin() + allocation[i]);
      }
      std::sort(picked.begin(), picked.end(), [](const auto& a, const auto& b) {
        return a.recording_path < b.recording_path;
      });

      train::RunConfig config = base;
      config.seed = Rng::derive(base.seed, label);
      const auto tr = load_recordings(manifest, picked);
      const auto va = load_recordings(manifest, manifest.entries_in(Split::Val, combo));
      const auto model = train_model(config, tr, va);
      const train::EvaluationResult ev = train::evaluate(*model, test_recs, kEpochSeconds);

      ComboRow row;
      row.cohorts = combo;
      row.drawn_per_cohort = allocation;
      row.mean_accuracy = ev.mean_subject_accuracy();
      row.mean_kappa = ev.kappa_summary.mean;
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

std::vector<FractionRow> run_fractions(const CohortManifest& manifest,
                                       const train::RunConfig& base,
                                       const std::vector<double>& fractions) {
  const std::vector<std::string> all_subjects = train_partition_subjects(manifest);
  if (all_subjects.empty()) throw DataError("fractions: empty training partition");

  const auto test_recs = load_recordings(manifest, manifest.entries_in(Split::Test));
  const auto val_recs = load_recordings(manifest, manifest.entries_in(Split::Val));

  std::vector<FractionRow> rows;
  for (double f : fractions) {
    const auto subjects = fraction_subjects(all_subjects, f, base.seed);
    std::vector<ManifestEntry> picked;
    for (const auto& e : manifest.entries_in(Split::Train)) {
      if (std::find(subjects.begin(), subjects.end(), e.subject_id) != subjects.end()) {
        picked.push_back(e);
      }
    }
    if (picked.empty()) throw DataError("fractions: empty subsample");

    train::RunConfig config = base;
    config.seed = Rng::derive(base.seed, "fraction:" + std::to_string(f));
    const auto tr = load_recordings(manifest, picked);
    const auto model = train_model(config, tr, val_recs);
    const train::EvaluationResult ev = train::evaluate(*model, test_recs, kEpochSeconds);

    FractionRow row;
    row.fraction = f;
    row.n_subjects = static_cast<long>(subjects.size());
    row.mean_accuracy = ev.mean_subject_accuracy();
    row.mean_kappa = ev.kappa_summary.mean;
    rows.push_back(row);
  }
  return rows;
}

std::vector<SweepRow> run_hidden_unit_sweep(const CohortManifest& manifest,
                                            const train::RunConfig& base) {
  const auto train_recs = load_recordings(manifest, manifest.entries_in(Split::Train));
  const auto val_recs = load_recordings(manifest, manifest.entries_in(Split::Val));

  std::vector<SweepRow> rows;
  auto scored_row = [&](const std::string& section, double value,
                        const train::EvaluationResult& ev) {
    SweepRow row;
    row.section = section;
    row.value = value;
    row.accuracy = ev.accuracy_summary;
    row.kappa = ev.kappa_summary;
    rows.push_back(row);
  };

  for (int units : sweep_hidden_units()) {
    train::RunConfig config = base;
    config.model.hidden_units = units;
    config.seed = Rng::derive(base.seed, "sweep-units:" + std::to_string(units));
    const auto model = train_model(config, train_recs, val_recs);
    scored_row("hidden_units", units, train::evaluate(*model, val_recs, kEpochSeconds));
  }
  for (int epochs : sweep_seq_epochs()) {
    train::RunConfig config = base;
    config.model.seq_epochs = epochs;
    config.seed = Rng::derive(base.seed, "sweep-seq:" + std::to_string(epochs));
    const auto model = train_model(config, train_recs, val_recs);
    scored_row("sequence_minutes", epochs * kEpochSeconds / 60.0,
               train::evaluate(*model, val_recs, kEpochSeconds));
  }
  {
    train::RunConfig config = base;
    config.seed = Rng::derive(base.seed, "sweep-window");
    const auto model = train_model(config, train_recs, val_recs);
    for (int w : sweep_windows_s()) {
      scored_row("window_s", w, train::evaluate(*model, val_recs, w));
    }
  }
  return rows;
}

namespace {

json summary_json(const metrics::MetricSummary& s) {
  return json{{"mean", s.mean}, {"sd", s.sd},       {"median", s.median},
              {"ci_lo", s.ci_lo}, {"ci_hi", s.ci_hi}, {"n", s.n}};
}

}  // namespace

std::string combos_csv(const std::vector<ComboRow>& rows) {
  std::ostringstream os;
  os << "cohorts,n_cohorts,mean_accuracy,mean_kappa\n";
  for (const auto& r : rows) {
    os << join(r.cohorts, "+") << "," << r.cohorts.size() << "," << r.mean_accuracy << ","
       << r.mean_kappa << "\n";
  }
  return os.str();
}

std::string fractions_csv(const std::vector<FractionRow>& rows) {
  std::ostringstream os;
  os << "fraction,n_subjects,mean_accuracy,mean_kappa\n";
  for (const auto& r : rows) {
    os << r.fraction << "," << r.n_subjects << "," << r.mean_accuracy << ","
       << r.mean_kappa << "\n";
  }
  return os.str();
}

std::string sweep_json(const std::vector<SweepRow>& rows) {
  json j = json::array();
  for (const auto& r : rows) {
    j.push_back(json{{"section", r.section},
                     {"value", r.value},
                     {"accuracy", summary_json(r.accuracy)},
                     {"kappa", summary_json(r.kappa)}});
  }
  return j.dump(2) + "\n";
}

std::string metrics_report_json(const train::EvaluationResult& result) {
  json j;
  j["per_subject"] = json::array();
  for (const auto& m : result.per_subject) {
    j["per_subject"].push_back(json{{"subject_id", m.subject_id},
                                    {"cohort", m.cohort},
                                    {"accuracy", m.accuracy_epoch},
                                    {"kappa", m.kappa_epoch},
                                    {"accuracy_1s", m.accuracy_1s},
                                    {"n_epochs", m.n_epochs}});
  }
  if (result.has_summary) {
    j["aggregate"] = {{"accuracy", summary_json(result.accuracy_summary)},
                      {"kappa", summary_json(result.kappa_summary)}};
  }
  std::vector<std::vector<std::int64_t>> cm(result.pooled.n_classes());
  for (int i = 0; i < result.pooled.n_classes(); ++i) {
    for (int k = 0; k < result.pooled.n_classes(); ++k) cm[i].push_back(result.pooled(i, k));
  }
  j["confusion"] = cm;
  return j.dump(2) + "\n";
}

}  // namespace stagenet::experiments
