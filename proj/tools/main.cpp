#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <json.hpp>

#include "stagenet/checkpoint.hpp"
#include "stagenet/dataset.hpp"
#include "stagenet/experiments.hpp"
#include "stagenet/io_util.hpp"
#include "stagenet/svg.hpp"
#include "stagenet/synth.hpp"
#include "stagenet/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace stagenet;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

struct CommonOverrides {
  std::uint64_t seed = 0;
  bool seed_set = false;
  int alpha = 0;
  int hidden_units = -1;
  int tau = 0;
  int batch_size = 0;
  double weight_decay = -1.0;
};

void add_overrides(CLI::App* cmd, CommonOverrides& ov) {
  auto* s = cmd->add_option("--seed", ov.seed, "override the run seed");
  s->each([&ov](const std::string&) { ov.seed_set = true; });
  cmd->add_option("--alpha", ov.alpha, "sequence length in 30 s epochs");
  cmd->add_option("--hidden-units", ov.hidden_units, "recurrent units per direction");
  cmd->add_option("--tau", ov.tau, "loss averaging window in seconds");
  cmd->add_option("--batch-size", ov.batch_size, "sequences per optimizer step");
  cmd->add_option("--weight-decay", ov.weight_decay, "coupled L2 strength on weights");
}

void apply_overrides(train::RunConfig& config, const CommonOverrides& ov) {
  if (ov.seed_set) config.seed = ov.seed;
  if (ov.alpha > 0) config.model.seq_epochs = ov.alpha;
  if (ov.hidden_units >= 0) config.model.hidden_units = ov.hidden_units;
  if (ov.tau > 0) config.model.loss_window_s = ov.tau;
  if (ov.batch_size > 0) config.batch_size = ov.batch_size;
  if (ov.weight_decay >= 0.0) config.weight_decay = ov.weight_decay;
  config.model.validate();
}

// Experiment-specific knobs live in an optional "experiment" block of the
// run-config JSON.
struct ExperimentOptions {
  long total_psgs = 500;
  std::vector<double> fractions = experiments::paper_fractions();
};

ExperimentOptions load_experiment_options(const std::string& config_path) {
  ExperimentOptions opt;
  json j = json::parse(io::read_text_file(config_path));
  if (j.contains("experiment")) {
    const json& e = j.at("experiment");
    opt.total_psgs = e.value("total_psgs", opt.total_psgs);
    if (e.contains("fractions")) {
      opt.fractions = e.at("fractions").get<std::vector<double>>();
    }
  }
  return opt;
}

void write_checkpoint_bundle(const std::string& out_dir, const train::RunConfig& config,
                             const train::TrainResult& result) {
  net::Network<float> model(config.model, config.seed);
  model.restore(result.best_state);
  ckpt::write_table(out_dir + "/checkpoint.bin",
                    ckpt::collect_state(model, &result.best_opt));
  ckpt::CheckpointMeta meta;
  meta.config = config.model;
  meta.seed = config.seed;
  meta.selected_pass = result.best_pass;
  meta.val_kappa = result.best_val_kappa;
  ckpt::write_meta(out_dir + "/checkpoint.json", meta);
}

std::unique_ptr<net::Network<float>> load_checkpoint_model(const std::string& run_dir) {
  const ckpt::CheckpointMeta meta = ckpt::read_meta(run_dir + "/checkpoint.json");
  auto model = std::make_unique<net::Network<float>>(meta.config, meta.seed);
  ckpt::apply_state<float>(*model, nullptr, ckpt::read_table(run_dir + "/checkpoint.bin"));
  return model;
}

LoadedRecording load_for_prediction(const std::string& edf_path, const Montage& montage,
                                    const StageMap& stage_map,
                                    const std::string& reference_path) {
  const edf::EdfFile file = edf::parse_edf_file(edf_path);
  const PsgRecording rec = assemble_recording(file, montage, "recording", "adhoc");
  LoadedRecording out;
  out.subject_id = "recording";
  out.cohort = "adhoc";
  out.signal = dsp::preprocess(rec);
  if (!reference_path.empty()) {
    const Hypnogram hyp = load_hypnogram(reference_path, stage_map);
    const long n = std::min<long>(out.signal.n_epochs(), hyp.n_epochs());
    out.epochs.assign(hyp.stages.begin(), hyp.stages.begin() + n);
  } else {
    out.epochs.assign(out.signal.n_epochs(), SleepStage::Unknown);
  }
  return out;
}

std::string hypnodensity_csv(const Eigen::MatrixXd& probs, long cols_per_second) {
  std::ostringstream os;
  os << "time_s,p_W,p_N1,p_N2,p_N3,p_REM\n";
  const long n_seconds = probs.cols() / cols_per_second;
  for (long s = 0; s < n_seconds; ++s) {
    Eigen::VectorXd mean =
        probs.middleCols(s * cols_per_second, cols_per_second).rowwise().mean();
    os << s;
    for (long k = 0; k < probs.rows(); ++k) os << "," << mean[k];
    os << "\n";
  }
  return os.str();
}

std::vector<SleepStage> argmax_hypnogram(const Eigen::MatrixXd& probs, long cols_per_window) {
  std::vector<SleepStage> out;
  for (long w = 0; w < probs.cols() / cols_per_window; ++w) {
    Eigen::VectorXd mean =
        probs.middleCols(w * cols_per_window, cols_per_window).rowwise().mean();
    int arg = 0;
    mean.maxCoeff(&arg);
    out.push_back(static_cast<SleepStage>(arg));
  }
  return out;
}

int run(int argc, char** argv) {
  CLI::App app{"sleep stage classification toolkit"};
  app.require_subcommand(1);

  // ---- synth ----------------------------------------------------------
  auto* synth_cmd = app.add_subcommand("synth", "generate synthetic cohorts");
  std::string synth_spec, synth_out;
  std::uint64_t synth_seed = 1;
  synth_cmd->add_option("spec", synth_spec, "cohort spec JSON")->required();
  synth_cmd->add_option("out_dir", synth_out, "output directory")->required();
  synth_cmd->add_option("--seed", synth_seed, "generator seed");
  synth_cmd->callback([&] {
    const auto specs = synth::load_cohort_specs(synth_spec);
    fs::create_directories(synth_out);
    CohortManifest manifest = synth::generate_cohorts(specs, synth_seed, synth_out);
    split_cohort(manifest, synth_seed);
    save_manifest(synth_out + "/manifest.json", manifest);
    std::cout << "wrote " << manifest.entries.size() << " recordings and " << synth_out
              << "/manifest.json\n";
  });

  // ---- cohort-template -------------------------------------------------
  auto* tmpl_cmd = app.add_subcommand("cohort-template", "write the default cohort spec");
  std::string tmpl_out;
  int tmpl_subjects = 20, tmpl_epochs = 40;
  tmpl_cmd->add_option("out", tmpl_out, "output JSON path")->required();
  tmpl_cmd->add_option("--subjects", tmpl_subjects, "subjects per cohort");
  tmpl_cmd->add_option("--epochs", tmpl_epochs, "30 s epochs per subject");
  tmpl_cmd->callback([&] {
    synth::save_cohort_specs(tmpl_out, synth::default_battery(tmpl_subjects, tmpl_epochs));
    std::cout << "wrote " << tmpl_out << "\n";
  });

  // ---- preprocess ------------------------------------------------------
  auto* prep_cmd = app.add_subcommand("preprocess", "cache conditioned recordings");
  std::string prep_manifest, prep_out;
  prep_cmd->add_option("manifest", prep_manifest, "manifest JSON")->required();
  prep_cmd->add_option("out_dir", prep_out, "cache directory")->required();
  prep_cmd->callback([&] {
    const CohortManifest manifest = load_manifest(prep_manifest);
    fs::create_directories(prep_out);
    for (const auto& entry : manifest.entries) {
      const LoadedRecording rec =
          load_recording(entry, manifest.montage, manifest.stage_map);
      const std::string path = prep_out + "/" + entry.subject_id + ".snp";
      dsp::save_preprocessed(path, rec.signal);
    }
    std::cout << "cached " << manifest.entries.size() << " recordings under " << prep_out
              << "\n";
  });

  // ---- train -----------------------------------------------------------
  auto* train_cmd = app.add_subcommand("train", "train a model");
  std::string train_config, train_manifest, train_out;
  CommonOverrides train_ov;
  train_cmd->add_option("config", train_config, "run config JSON")->required();
  train_cmd->add_option("manifest", train_manifest, "manifest JSON")->required();
  train_cmd->add_option("out_dir", train_out, "output directory")->required();
  add_overrides(train_cmd, train_ov);
  train_cmd->callback([&] {
    train::RunConfig config = train::load_run_config(train_config);
    apply_overrides(config, train_ov);
    const CohortManifest manifest = load_manifest(train_manifest);
    fs::create_directories(train_out);
    config.dump_dir = train_out;

    const auto tr = load_recordings(manifest, manifest.entries_in(Split::Train));
    const auto va = load_recordings(manifest, manifest.entries_in(Split::Val));
    std::ofstream log(train_out + "/training_log.ndjson");
    const train::TrainResult result = train::train(config, tr, va, &log);
    write_checkpoint_bundle(train_out, config, result);
    train::save_run_config(train_out + "/run_config.json", config);
    std::cout << "selected pass " << result.best_pass << " (validation kappa "
              << result.best_val_kappa << ")\n";
  });

  // ---- predict ---------------------------------------------------------
  auto* pred_cmd = app.add_subcommand("predict", "stage one recording");
  std::string pred_run, pred_edf, pred_out, pred_reference, pred_manifest;
  int pred_tau = 30;
  pred_cmd->add_option("run_dir", pred_run, "training output directory")->required();
  pred_cmd->add_option("recording", pred_edf, "EDF recording")->required();
  pred_cmd->add_option("out_prefix", pred_out, "output path prefix")->required();
  pred_cmd->add_option("--tau", pred_tau, "hypnogram window in seconds");
  pred_cmd->add_option("--reference", pred_reference, "manual hypnogram for comparison");
  pred_cmd->add_option("--manifest", pred_manifest,
                       "manifest supplying montage and stage map");
  pred_cmd->callback([&] {
    auto model = load_checkpoint_model(pred_run);
    Montage montage = synth::synthetic_montage();
    StageMap stage_map = synth::synthetic_stage_map();
    if (!pred_manifest.empty()) {
      const CohortManifest m = load_manifest(pred_manifest);
      montage = m.montage;
      stage_map = m.stage_map;
    }
    const LoadedRecording rec =
        load_for_prediction(pred_edf, montage, stage_map, pred_reference);
    const Eigen::MatrixXd probs = train::predict_recording(*model, rec);

    const net::ModelConfig& mc = model->config();
    if (mc.cols_per_epoch() % kEpochSeconds != 0) {
      throw UsageError("predict: model emits fewer than one column per second");
    }
    const long cps = mc.cols_per_epoch() / kEpochSeconds;
    io::write_text_file(pred_out + ".csv", hypnodensity_csv(probs, cps));

    if (pred_tau < 1 || kEpochSeconds % pred_tau != 0) {
      throw UsageError("predict: --tau must divide 30");
    }
    const auto stages = argmax_hypnogram(probs, cps * pred_tau);
    Hypnogram hyp;
    hyp.stages = stages;
    io::write_text_file(pred_out + ".hyp", format_hypnogram(hyp));

    std::vector<SleepStage> manual;
    if (!pred_reference.empty()) {
      const Hypnogram ref = load_hypnogram(pred_reference, stage_map);
      const long per = kEpochSeconds / pred_tau;
      for (SleepStage s : ref.stages) {
        for (long i = 0; i < per; ++i) manual.push_back(s);
      }
      manual.resize(std::min(manual.size(), stages.size()),
                    SleepStage::Unknown);
    }
    io::write_text_file(
        pred_out + ".svg",
        svg::render_hypnogram(stages, manual.empty() ? nullptr : &manual, pred_tau));
    std::cout << "wrote " << pred_out << ".csv/.hyp/.svg\n";
  });

  // ---- evaluate --------------------------------------------------------
  auto* eval_cmd = app.add_subcommand("evaluate", "score a model on a subset");
  std::string eval_run, eval_manifest, eval_out, eval_subset = "test", eval_profile;
  std::vector<std::string> eval_cohorts;
  int eval_tau = 30;
  eval_cmd->add_option("run_dir", eval_run, "training output directory")->required();
  eval_cmd->add_option("manifest", eval_manifest, "manifest JSON")->required();
  eval_cmd->add_option("out", eval_out, "metrics report JSON path")->required();
  eval_cmd->add_option("--subset", eval_subset, "train, val, or test");
  eval_cmd->add_option("--tau", eval_tau, "evaluation window in seconds");
  eval_cmd->add_option("--profile", eval_profile, "position-accuracy CSV path");
  eval_cmd->add_option("--cohorts", eval_cohorts, "restrict to these cohorts");
  eval_cmd->callback([&] {
    auto model = load_checkpoint_model(eval_run);
    const CohortManifest manifest = load_manifest(eval_manifest);
    Split split = Split::Test;
    if (eval_subset == "train") split = Split::Train;
    else if (eval_subset == "val") split = Split::Val;
    else if (eval_subset != "test") throw UsageError("evaluate: unknown subset");
    const auto entries = eval_cohorts.empty()
                             ? manifest.entries_in(split)
                             : manifest.entries_in(split, eval_cohorts);
    const auto recs = load_recordings(manifest, entries);
    const train::EvaluationResult result = train::evaluate(*model, recs, eval_tau);
    io::write_text_file(eval_out, experiments::metrics_report_json(result));
    if (!eval_profile.empty()) {
      const train::SequenceProbs sp = train::collect_sequence_probs(*model, recs);
      const auto profile = metrics::sequence_position_accuracy(
          sp.probs, sp.refs, model->config().cols_per_epoch());
      io::write_text_file(eval_profile, metrics::position_profile_csv(profile));
    }
    std::cout << "wrote " << eval_out << "\n";
  });

  // ---- experiment ------------------------------------------------------
  auto* exp_cmd = app.add_subcommand("experiment", "run an experiment family");
  std::string exp_family, exp_config, exp_manifest, exp_out;
  CommonOverrides exp_ov;
  exp_cmd->add_option("family", exp_family, "sweep | loci | loco | fractions | combos")
      ->required();
  exp_cmd->add_option("config", exp_config, "run config JSON")->required();
  exp_cmd->add_option("manifest", exp_manifest, "manifest JSON")->required();
  exp_cmd->add_option("out_dir", exp_out, "output directory")->required();
  add_overrides(exp_cmd, exp_ov);
  exp_cmd->callback([&] {
    train::RunConfig config = train::load_run_config(exp_config);
    apply_overrides(config, exp_ov);
    const ExperimentOptions options = load_experiment_options(exp_config);
    const CohortManifest manifest = load_manifest(exp_manifest);
    fs::create_directories(exp_out);

    if (exp_family == "loci" || exp_family == "loco") {
      const experiments::Grid grid = exp_family == "loci"
                                         ? experiments::run_loci(manifest, config)
                                         : experiments::run_loco(manifest, config);
      io::write_text_file(exp_out + "/accuracy_grid.csv",
                          experiments::grid_csv(grid, grid.accuracy));
      io::write_text_file(exp_out + "/kappa_grid.csv",
                          experiments::grid_csv(grid, grid.kappa));
    } else if (exp_family == "combos") {
      const auto rows = experiments::run_combinations(manifest, config, options.total_psgs);
      io::write_text_file(exp_out + "/results.csv", experiments::combos_csv(rows));
    } else if (exp_family == "fractions") {
      const auto rows = experiments::run_fractions(manifest, config, options.fractions);
      io::write_text_file(exp_out + "/results.csv", experiments::fractions_csv(rows));
    } else if (exp_family == "sweep") {
      const auto rows = experiments::run_hidden_unit_sweep(manifest, config);
      io::write_text_file(exp_out + "/sweep.json", experiments::sweep_json(rows));
    } else {
      throw UsageError("experiment: unknown family '" + exp_family + "'");
    }
    std::cout << "experiment results under " << exp_out << "\n";
  });

  CLI11_PARSE(app, argc, argv);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
}
