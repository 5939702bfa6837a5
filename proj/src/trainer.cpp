#include "stagenet/trainer.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <map>

#include <json.hpp>

#include "stagenet/checkpoint.hpp"
#include "stagenet/io_util.hpp"
#include "stagenet/rng.hpp"

namespace stagenet::train {

using nlohmann::json;

RunConfig load_run_config(const std::string& path) {
  json j;
  try {
    j = json::parse(io::read_text_file(path));
  } catch (const json::exception& e) {
    throw DataError("run config: invalid JSON in " + path + ": " + e.what());
  }
  RunConfig c;
  try {
    if (j.contains("model")) {
      const json& m = j.at("model");
      c.model.channels = m.value("channels", c.model.channels);
      c.model.sample_rate = m.value("sample_rate", c.model.sample_rate);
      c.model.n_stages = m.value("n_stages", c.model.n_stages);
      c.model.n_blocks = m.value("n_blocks", c.model.n_blocks);
      c.model.base_filters = m.value("base_filters", c.model.base_filters);
      c.model.hidden_units = m.value("hidden_units", c.model.hidden_units);
      c.model.seq_epochs = m.value("seq_epochs", c.model.seq_epochs);
      c.model.loss_window_s = m.value("loss_window_s", c.model.loss_window_s);
    }
    c.batch_size = j.value("batch_size", c.batch_size);
    c.max_passes = j.value("max_passes", c.max_passes);
    c.seed = j.value("seed", c.seed);
    if (j.contains("optimizer")) {
      const json& o = j.at("optimizer");
      c.adam.lr = o.value("lr", c.adam.lr);
      c.adam.beta1 = o.value("beta1", c.adam.beta1);
      c.adam.beta2 = o.value("beta2", c.adam.beta2);
      c.adam.eps = o.value("eps", c.adam.eps);
      c.weight_decay = o.value("weight_decay", c.weight_decay);
    }
    if (j.contains("stop_at_val_kappa") && !j.at("stop_at_val_kappa").is_null()) {
      c.stop_at_val_kappa = j.at("stop_at_val_kappa").get<double>();
    }
  } catch (const json::exception& e) {
    throw DataError("run config: malformed field in " + path + ": " + e.what());
  }
  c.model.validate();
  if (c.batch_size < 1 || c.max_passes < 1) {
    throw DataError("run config: batch_size and max_passes must be positive");
  }
  return c;
}

void save_run_config(const std::string& path, const RunConfig& c) {
  json j;
  j["model"] = {{"channels", c.model.channels},
                {"sample_rate", c.model.sample_rate},
                {"n_stages", c.model.n_stages},
                {"n_blocks", c.model.n_blocks},
                {"base_filters", c.model.base_filters},
                {"hidden_units", c.model.hidden_units},
                {"seq_epochs", c.model.seq_epochs},
                {"loss_window_s", c.model.loss_window_s}};
  j["batch_size"] = c.batch_size;
  j["max_passes"] = c.max_passes;
  j["seed"] = c.seed;
  j["optimizer"] = {{"lr", c.adam.lr},
                    {"beta1", c.adam.beta1},
                    {"beta2", c.adam.beta2},
                    {"eps", c.adam.eps},
                    {"weight_decay", c.weight_decay}};
  if (!std::isnan(c.stop_at_val_kappa)) j["stop_at_val_kappa"] = c.stop_at_val_kappa;
  io::write_text_file(path, j.dump(2) + "\n");
}

int select_best_pass(const std::vector<PassRecord>& log) {
  if (log.empty()) throw UsageError("selection: empty training log");
  int best = 0;
  for (int i = 1; i < static_cast<int>(log.size()); ++i) {
    if (log[i].val_kappa > log[best].val_kappa) best = i;
  }
  return best;
}

namespace {

// Eval-mode probabilities for one sequence as a double matrix.
Eigen::MatrixXd forward_eval(net::Network<float>& model, const SequenceRef& seq) {
  ad::Tape<float> tape(false);
  ad::Tensor<float> x = sequence_input<float>(seq, model.config());
  ad::Tensor<float> y = model.forward(tape, x, net::Phase::Eval);
  const long K = y.dim(0), T = y.dim(1);
  Eigen::MatrixXd out(K, T);
  auto ym = y.matrix(K, T);
  for (long i = 0; i < K; ++i) {
    for (long j = 0; j < T; ++j) out(i, j) = static_cast<double>(ym(i, j));
  }
  return out;
}

// Epoch-windowed argmax predictions vs references into a confusion matrix.
void accumulate_confusion(const Eigen::MatrixXd& probs,
                          const std::vector<SleepStage>& epochs, long cols_per_epoch,
                          int tau_eval_s, metrics::ConfusionMatrix& cm) {
  const long windows_per_epoch = kEpochSeconds / tau_eval_s;
  if ((cols_per_epoch * tau_eval_s) % kEpochSeconds != 0) {
    throw UsageError("evaluation: window does not align with pooled columns");
  }
  const long cols_per_window = cols_per_epoch * tau_eval_s / kEpochSeconds;
  for (std::size_t e = 0; e < epochs.size(); ++e) {
    if (epochs[e] == SleepStage::Unknown) continue;
    const int ref = static_cast<int>(epochs[e]);
    for (long w = 0; w < windows_per_epoch; ++w) {
      Eigen::VectorXd mean =
          probs.middleCols(e * cols_per_epoch + w * cols_per_window, cols_per_window)
              .rowwise()
              .mean();
      int pred = 0;
      mean.maxCoeff(&pred);
      cm.add(ref, pred);
    }
  }
}

struct SubjectAccumulator {
  std::string cohort;
  metrics::ConfusionMatrix epoch_cm{kNumStages};
  metrics::ConfusionMatrix second_cm{kNumStages};
  long n_epochs = 0;
};

}  // namespace

TrainResult train(const RunConfig& config, const std::vector<LoadedRecording>& train_recs,
                  const std::vector<LoadedRecording>& val_recs, std::ostream* log_stream) {
  if (train_recs.empty() || val_recs.empty()) {
    throw DataError("train: empty training or validation partition");
  }
  config.model.validate();
  if (kEpochSeconds % config.model.loss_window_s != 0) {
    throw UsageError("train: loss window must divide 30 s");
  }

  net::Network<float> model(config.model, config.seed);
  auto& params = model.parameters();
  std::vector<ad::AdamState<float>> opt;
  opt.reserve(params.size());
  for (auto& p : params) opt.push_back(ad::AdamState<float>::make(p.tensor.size()));

  std::vector<SequenceRef> sequences = all_sequences(train_recs, config.model.seq_epochs);
  if (sequences.empty()) throw DataError("train: no training sequences");

  Rng shuffle_rng(Rng::derive(config.seed, "train-shuffle"));
  const long cols_per_window = config.model.cols_per_window();

  TrainResult result;
  auto emit = [&](const std::string& line) {
    if (log_stream != nullptr) (*log_stream) << line << "\n";
  };

  for (int pass = 1; pass <= config.max_passes; ++pass) {
    shuffle_rng.shuffle(sequences);
    double loss_sum = 0;
    long window_sum = 0;

    for (std::size_t start = 0; start < sequences.size();
         start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end =
          std::min(start + static_cast<std::size_t>(config.batch_size), sequences.size());
      model.zero_grad();
      double batch_loss = 0;
      long batch_windows = 0;
      for (std::size_t i = start; i < end; ++i) {
        const auto labels = broadcast_labels<float>(
            sequence_epoch_labels(sequences[i], config.model.seq_epochs),
            config.model.loss_window_s);
        if (labels.n_valid == 0) continue;  // fully unscored window
        ad::Tape<float> tape;
        ad::Tensor<float> x = sequence_input<float>(sequences[i], config.model);
        ad::Tensor<float> y = model.forward(tape, x, net::Phase::Train);
        ad::Tensor<float> loss = sequence_loss(tape, y, labels, cols_per_window);
        batch_loss += static_cast<double>(loss.scalar());
        batch_windows += labels.n_valid;
        tape.backward(loss);
      }
      if (batch_windows == 0) continue;
      if (!std::isfinite(batch_loss)) {
        if (!config.dump_dir.empty()) {
          std::filesystem::create_directories(config.dump_dir);
          ckpt::write_table(config.dump_dir + "/diverged_state.bin",
                            ckpt::collect_state(model, &opt));
        }
        throw NumericError("train: non-finite loss at pass " + std::to_string(pass));
      }
      const float inv = 1.0f / static_cast<float>(batch_windows);
      for (std::size_t p = 0; p < params.size(); ++p) {
        auto& t = params[p].tensor;
        if (!t.has_grad()) continue;
        ad::ArrayX<float> g = t.grad() * inv;
        ad::adam_step(t.values(), g, opt[p], config.adam,
                      params[p].is_weight ? config.weight_decay : 0.0);
      }
      loss_sum += batch_loss;
      window_sum += batch_windows;
    }

    const metrics::ConfusionMatrix val_cm =
        pooled_confusion(model, val_recs, kEpochSeconds);
    PassRecord rec;
    rec.pass = pass;
    rec.train_loss = window_sum > 0 ? loss_sum / window_sum : 0.0;
    rec.val_accuracy = metrics::accuracy(val_cm);
    rec.val_kappa = metrics::cohen_kappa(val_cm);
    rec.best = result.log.empty() || rec.val_kappa > result.best_val_kappa;
    if (rec.best) {
      result.best_pass = pass;
      result.best_val_kappa = rec.val_kappa;
      result.best_state = model.snapshot();
      result.best_opt = opt;
    }
    result.log.push_back(rec);

    char line[256];
    std::snprintf(line, sizeof(line),
                  "{\"event\":\"pass\",\"pass\":%d,\"train_loss\":%.17g,"
                  "\"val_accuracy\":%.17g,\"val_kappa\":%.17g,\"best\":%s}",
                  rec.pass, rec.train_loss, rec.val_accuracy, rec.val_kappa,
                  rec.best ? "true" : "false");
    emit(line);

    if (!std::isnan(config.stop_at_val_kappa) &&
        rec.val_kappa >= config.stop_at_val_kappa) {
      break;
    }
  }

  char line[128];
  std::snprintf(line, sizeof(line),
                "{\"event\":\"selected\",\"pass\":%d,\"val_kappa\":%.17g}",
                result.best_pass, result.best_val_kappa);
  emit(line);
  return result;
}

metrics::ConfusionMatrix pooled_confusion(net::Network<float>& model,
                                          const std::vector<LoadedRecording>& recs,
                                          int tau_eval_s) {
  metrics::ConfusionMatrix cm(kNumStages);
  const net::ModelConfig& mc = model.config();
  for (const LoadedRecording& rec : recs) {
    for (const SequenceRef& seq : sample_sequences(rec, mc.seq_epochs)) {
      const Eigen::MatrixXd probs = forward_eval(model, seq);
      accumulate_confusion(probs, sequence_epoch_labels(seq, mc.seq_epochs),
                           mc.cols_per_epoch(), tau_eval_s, cm);
    }
  }
  if (cm.total() == 0) throw DataError("evaluation: no scored epochs");
  return cm;
}

EvaluationResult evaluate(net::Network<float>& model,
                          const std::vector<LoadedRecording>& recs, int tau_eval_s) {
  if (tau_eval_s < 1 || kEpochSeconds % tau_eval_s != 0) {
    throw UsageError("evaluate: window must divide 30 s");
  }
  const net::ModelConfig& mc = model.config();
  if ((mc.cols_per_epoch() * tau_eval_s) % kEpochSeconds != 0) {
    throw UsageError("evaluate: window does not align with pooled columns");
  }
  // per-second accuracy needs at least one probability column per second
  const bool per_second_ok = mc.cols_per_epoch() % kEpochSeconds == 0;
  std::map<std::string, SubjectAccumulator> subjects;
  EvaluationResult out;
  for (const LoadedRecording& rec : recs) {
    SubjectAccumulator& acc = subjects[rec.subject_id];
    acc.cohort = rec.cohort;
    for (const SequenceRef& seq : sample_sequences(rec, mc.seq_epochs)) {
      const Eigen::MatrixXd probs = forward_eval(model, seq);
      const auto labels = sequence_epoch_labels(seq, mc.seq_epochs);
      accumulate_confusion(probs, labels, mc.cols_per_epoch(), tau_eval_s, acc.epoch_cm);
      if (per_second_ok) {
        accumulate_confusion(probs, labels, mc.cols_per_epoch(), 1, acc.second_cm);
      }
      for (SleepStage s : labels) {
        if (s != SleepStage::Unknown) ++acc.n_epochs;
      }
    }
  }

  std::vector<double> accs, kappas;
  for (auto& [subject, acc] : subjects) {
    if (acc.epoch_cm.total() == 0) continue;
    metrics::SubjectMetrics m;
    m.subject_id = subject;
    m.cohort = acc.cohort;
    m.accuracy_epoch = metrics::accuracy(acc.epoch_cm);
    m.kappa_epoch = metrics::cohen_kappa(acc.epoch_cm);
    m.accuracy_1s = per_second_ok ? metrics::accuracy(acc.second_cm) : m.accuracy_epoch;
    m.n_epochs = acc.n_epochs;
    out.per_subject.push_back(m);
    out.pooled.merge(acc.epoch_cm);
    accs.push_back(m.accuracy_epoch);
    kappas.push_back(m.kappa_epoch);
  }
  if (out.per_subject.empty()) throw DataError("evaluation: no scored subjects");
  if (accs.size() >= 2) {
    out.accuracy_summary = metrics::aggregate_subject_metrics(accs);
    out.kappa_summary = metrics::aggregate_subject_metrics(kappas);
    out.has_summary = true;
  } else {
    out.accuracy_summary.mean = accs[0];
    out.kappa_summary.mean = kappas[0];
    out.accuracy_summary.n = out.kappa_summary.n = 1;
  }
  return out;
}

SequenceProbs collect_sequence_probs(net::Network<float>& model,
                                     const std::vector<LoadedRecording>& recs) {
  SequenceProbs out;
  const net::ModelConfig& mc = model.config();
  for (const LoadedRecording& rec : recs) {
    for (const SequenceRef& seq : sample_sequences(rec, mc.seq_epochs)) {
      out.probs.push_back(forward_eval(model, seq));
      out.refs.push_back(sequence_epoch_labels(seq, mc.seq_epochs));
    }
  }
  return out;
}

Eigen::MatrixXd predict_recording(net::Network<float>& model, const LoadedRecording& rec) {
  const net::ModelConfig& mc = model.config();
  const long n_epochs = static_cast<long>(rec.epochs.size());
  if (n_epochs < mc.seq_epochs) {
    throw DataError("predict: recording shorter than one " +
                    std::to_string(mc.seq_epochs) + "-epoch sequence");
  }
  const long cpe = mc.cols_per_epoch();
  Eigen::MatrixXd out(mc.n_stages, n_epochs * cpe);
  long covered = 0;
  for (long start = 0; start + mc.seq_epochs <= n_epochs; start += mc.seq_epochs) {
    out.middleCols(start * cpe, mc.seq_epochs * cpe) =
        forward_eval(model, {&rec, start});
    covered = start + mc.seq_epochs;
  }
  if (covered < n_epochs) {
    // end-aligned window covers the tail; keep only its uncovered columns
    const long start = n_epochs - mc.seq_epochs;
    const Eigen::MatrixXd probs = forward_eval(model, {&rec, start});
    const long skip = (covered - start) * cpe;
    out.middleCols(covered * cpe, (n_epochs - covered) * cpe) =
        probs.rightCols(probs.cols() - skip);
  }
  return out;
}

}  // namespace stagenet::train
