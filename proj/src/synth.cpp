#include "stagenet/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>

#include <json.hpp>

#include "stagenet/common.hpp"
#include "stagenet/io_util.hpp"
#include "stagenet/rng.hpp"

namespace stagenet::synth {

using nlohmann::json;

namespace {

constexpr double kTwoPi = 6.283185307179586;
constexpr double kPhysicalRange = 1000.0;  // uV, symmetric
constexpr int kDigitalRange = 32767;

// Sum of `m` random-phase sinusoids with frequencies uniform in [f1,f2],
// scaled so the expected RMS equals `rms`. Added into `out` via the
// two-term oscillator recurrence (no trig in the inner loop).
void add_band_noise(Rng& rng, double* out, long n, double rate, double f1, double f2,
                    double rms, int m = 6) {
  if (rms <= 0.0) return;
  const double f_hi = std::min(f2, 0.45 * rate);
  const double amp = rms * std::sqrt(2.0 / m);
  for (int c = 0; c < m; ++c) {
    const double f = rng.uniform(f1, std::max(f1, f_hi));
    const double w = kTwoPi * f / rate;
    const double phase = rng.uniform(0.0, kTwoPi);
    double y1 = std::sin(phase - w);  // sample at t = -1
    double y0 = std::sin(phase);      // sample at t = 0
    const double k = 2.0 * std::cos(w);
    out[0] += amp * y0;
    for (long t = 1; t < n; ++t) {
      const double y = k * y0 - y1;
      y1 = y0;
      y0 = y;
      out[t] += amp * y;
    }
  }
}

void add_white_noise(Rng& rng, double* out, long n, double sd) {
  if (sd <= 0.0) return;
  for (long t = 0; t < n; ++t) out[t] += sd * rng.normal();
}

void add_line_noise(Rng& rng, double* out, long n, double rate, double level) {
  if (level <= 0.0) return;
  add_band_noise(rng, out, n, rate, 50.0, 50.0, level, 1);
}

int sample_row(Rng& rng, const Eigen::Matrix<double, kNumStages, kNumStages>& m, int row) {
  const double u = rng.uniform();
  double acc = 0.0;
  for (int j = 0; j < kNumStages; ++j) {
    acc += m(row, j);
    if (u < acc) return j;
  }
  return kNumStages - 1;
}

}  // namespace

std::array<StageSignature, kNumStages> default_signatures() {
  return {{
      //       delta theta alpha spindle  emg   eog
      /* W  */ {6.0, 6.0, 40.0, 2.0, 30.0, 20.0},
      /* N1 */ {12.0, 25.0, 10.0, 3.0, 12.0, 15.0},
      /* N2 */ {25.0, 15.0, 6.0, 20.0, 8.0, 4.0},
      /* N3 */ {60.0, 12.0, 4.0, 6.0, 5.0, 2.0},
      /* REM*/ {10.0, 22.0, 6.0, 2.0, 2.0, 25.0},
  }};
}

TransitionMatrix default_transitions() {
  TransitionMatrix t;
  // rows: from W, N1, N2, N3, REM
  t << 0.88, 0.10, 0.01, 0.00, 0.01,  //
      0.06, 0.60, 0.30, 0.01, 0.03,   //
      0.02, 0.05, 0.80, 0.08, 0.05,   //
      0.01, 0.01, 0.12, 0.85, 0.01,   //
      0.03, 0.05, 0.07, 0.00, 0.85;
  return t;
}

BiasMatrix make_scorer_bias(double epsilon) {
  BiasMatrix b = BiasMatrix::Zero();
  const int W = 0, N1 = 1, N2 = 2, N3 = 3, REM = 4;
  b(W, W) = 1 - epsilon;
  b(W, N1) = epsilon;
  b(N1, N1) = 1 - epsilon;
  b(N1, W) = epsilon / 2;
  b(N1, N2) = epsilon / 2;
  b(N2, N2) = 1 - epsilon;
  b(N2, N1) = epsilon / 2;
  b(N2, N3) = epsilon / 4;
  b(N2, REM) = epsilon / 4;
  b(N3, N3) = 1 - epsilon;
  b(N3, N2) = epsilon;
  b(REM, REM) = 1 - epsilon;
  b(REM, N1) = epsilon / 2;
  b(REM, N2) = epsilon / 2;
  return b;
}

Hypnogram generate_hypnogram(int n_epochs, std::uint64_t seed) {
  return generate_hypnogram(n_epochs, default_transitions(), seed);
}

Hypnogram generate_hypnogram(int n_epochs, const TransitionMatrix& transitions,
                             std::uint64_t seed) {
  if (n_epochs < 1) throw UsageError("hypnogram generator: need at least one epoch");
  Rng rng(seed);
  Hypnogram hyp;
  hyp.stages.reserve(n_epochs);
  int state = 0;  // nights start awake
  hyp.stages.push_back(static_cast<SleepStage>(state));
  for (int e = 1; e < n_epochs; ++e) {
    state = sample_row(rng, transitions, state);
    hyp.stages.push_back(static_cast<SleepStage>(state));
  }
  return hyp;
}

GeneratedRecording generate_recording(const Hypnogram& hyp,
                                      const std::array<StageSignature, kNumStages>& sig,
                                      const SiteProfile& site, std::uint64_t seed) {
  const int rate = site.sample_rate;
  if (rate < 32) throw UsageError("recording generator: sample rate too low");
  const long n_epochs = static_cast<long>(hyp.n_epochs());
  const long epoch_n = static_cast<long>(kEpochSeconds) * rate;
  const long total_n = n_epochs * epoch_n;

  Rng rng(Rng::derive(seed, "recording"));
  const bool popping_on_c4 = rng.uniform() < 0.5;

  // C3, C4, A1, A2, EOG-L, EOG-R, EMG
  constexpr int kSignals = 7;
  const char* labels[kSignals] = {"EEG C3",  "EEG C4",  "EEG A1", "EEG A2",
                                  "EOG L",   "EOG R",   "EMG Chin"};
  std::vector<Eigen::VectorXd> raw(kSignals, Eigen::VectorXd::Zero(total_n));

  for (long e = 0; e < n_epochs; ++e) {
    const SleepStage stage = hyp.stages[e];
    const StageSignature& s =
        sig[stage == SleepStage::Unknown ? 0 : static_cast<int>(stage)];
    const long off = e * epoch_n;
    auto synth_eeg = [&](int idx, double gain) {
      double* p = raw[idx].data() + off;
      add_band_noise(rng, p, epoch_n, rate, 0.5, 2.0, s.delta * gain);
      add_band_noise(rng, p, epoch_n, rate, 4.0, 7.0, s.theta * gain);
      add_band_noise(rng, p, epoch_n, rate, 8.0, 12.0, s.alpha * gain);
      add_band_noise(rng, p, epoch_n, rate, 12.0, 14.0, s.spindle * gain);
      add_white_noise(rng, p, epoch_n, site.noise_sd);
      add_line_noise(rng, p, epoch_n, rate, site.line_level);
    };
    synth_eeg(0, site.amplitude_scale[0]);
    synth_eeg(1, site.amplitude_scale[0]);
    // mastoid references carry only low-level noise
    add_white_noise(rng, raw[2].data() + off, epoch_n, 1.0);
    add_white_noise(rng, raw[3].data() + off, epoch_n, 1.0);
    for (int eog = 0; eog < 2; ++eog) {
      double* p = raw[4 + eog].data() + off;
      add_band_noise(rng, p, epoch_n, rate, 0.3, 2.0,
                     s.eog_level * site.amplitude_scale[1 + eog]);
      add_white_noise(rng, p, epoch_n, site.noise_sd);
      add_line_noise(rng, p, epoch_n, rate, site.line_level);
    }
    {
      double* p = raw[6].data() + off;
      add_band_noise(rng, p, epoch_n, rate, 15.0, 45.0,
                     s.emg_tone * site.amplitude_scale[3]);
      add_white_noise(rng, p, epoch_n, site.noise_sd);
      add_line_noise(rng, p, epoch_n, rate, site.line_level);
    }
    // electrode popping bursts on one central derivation, so the
    // energy-based channel choice has something to avoid
    if (rng.uniform() < 0.35) {
      const long burst_len = static_cast<long>(rng.uniform(0.5, 2.5) * rate);
      const long start = off + static_cast<long>(rng.below(epoch_n - burst_len));
      double* p = raw[popping_on_c4 ? 1 : 0].data() + start;
      add_white_noise(rng, p, burst_len, 220.0);
    }
  }

  GeneratedRecording out;
  out.clean = hyp;
  out.written.stages.reserve(n_epochs);
  for (long e = 0; e < n_epochs; ++e) {
    const SleepStage stage = hyp.stages[e];
    if (stage == SleepStage::Unknown) {
      out.written.stages.push_back(stage);
      continue;
    }
    const int biased = sample_row(rng, site.scorer_bias, static_cast<int>(stage));
    out.written.stages.push_back(static_cast<SleepStage>(biased));
  }

  // annotation tokens, optionally in R&K style with the N3/S4 coin flip
  std::string text;
  for (SleepStage stage : out.written.stages) {
    if (site.annotation_style == "rk") {
      switch (stage) {
        case SleepStage::Wake: text += "W"; break;
        case SleepStage::N1: text += "S1"; break;
        case SleepStage::N2: text += "S2"; break;
        case SleepStage::N3: text += rng.uniform() < 0.5 ? "S3" : "S4"; break;
        case SleepStage::Rem: text += "R"; break;
        default: text += "?"; break;
      }
    } else {
      text += stage_token(stage);
    }
    text += '\n';
  }
  out.annotation_text = std::move(text);

  edf::EdfFile& file = out.edf;
  file.header.version_tag = "0";
  file.header.recording_id = "synthetic cohort recording";
  file.header.start = {2002, 1, 1, 23, 0, 0};
  file.header.n_data_records = n_epochs * kEpochSeconds;
  file.header.record_duration = 1.0;
  file.header.n_signals = kSignals;
  file.header.header_bytes = 256L * (kSignals + 1);

  file.signals.resize(kSignals);
  file.samples.resize(kSignals);
  const double quantum = kPhysicalRange / kDigitalRange;
  for (int i = 0; i < kSignals; ++i) {
    edf::SignalSpec& spec = file.signals[i];
    spec.label = labels[i];
    spec.transducer = "AgAgCl electrode";
    spec.physical_dimension = "uV";
    spec.physical_min = -kPhysicalRange;
    spec.physical_max = kPhysicalRange;
    spec.digital_min = -kDigitalRange;
    spec.digital_max = kDigitalRange;
    spec.samples_per_record = rate;
    file.samples[i].resize(total_n);
    for (long t = 0; t < total_n; ++t) {
      const double q = std::round(raw[i][t] / quantum);
      file.samples[i][t] = static_cast<std::int16_t>(
          std::clamp(q, -static_cast<double>(kDigitalRange),
                     static_cast<double>(kDigitalRange)));
    }
  }
  return out;
}

std::vector<CohortSpec> default_battery(int n_subjects, int epochs_per_subject) {
  auto spec = [&](const std::string& name, int rate, double noise, double line,
                  double scale, double bias, const std::string& style) {
    CohortSpec c;
    c.name = name;
    c.n_subjects = n_subjects;
    c.epochs_per_subject = epochs_per_subject;
    c.profile.sample_rate = rate;
    c.profile.noise_sd = noise;
    c.profile.line_level = line;
    c.profile.amplitude_scale = {scale, scale, scale, scale};
    c.profile.scorer_bias = make_scorer_bias(bias);
    c.profile.annotation_style = style;
    return c;
  };
  return {
      spec("siteA", 128, 2.0, 1.0, 1.0, 0.03, "aasm"),
      spec("siteB", 256, 5.0, 3.0, 1.5, 0.05, "rk"),
      spec("siteC", 100, 8.0, 5.0, 0.8, 0.06, "rk"),
      spec("siteD", 512, 3.5, 2.0, 1.2, 0.04, "aasm"),
      spec("siteE", 200, 6.0, 4.0, 0.9, 0.05, "rk"),
  };
}

namespace {

json profile_to_json(const SiteProfile& p) {
  json j;
  j["amplitude_scale"] = p.amplitude_scale;
  j["noise_sd"] = p.noise_sd;
  j["line_level"] = p.line_level;
  j["sample_rate"] = p.sample_rate;
  j["annotation_style"] = p.annotation_style;
  std::vector<std::vector<double>> bias(kNumStages, std::vector<double>(kNumStages));
  for (int i = 0; i < kNumStages; ++i) {
    for (int k = 0; k < kNumStages; ++k) bias[i][k] = p.scorer_bias(i, k);
  }
  j["scorer_bias"] = bias;
  return j;
}

SiteProfile profile_from_json(const json& j) {
  SiteProfile p;
  if (j.contains("amplitude_scale")) {
    const auto v = j.at("amplitude_scale").get<std::vector<double>>();
    if (v.size() != kNumChannels) throw DataError("cohort spec: amplitude_scale needs 4 entries");
    std::copy(v.begin(), v.end(), p.amplitude_scale.begin());
  }
  p.noise_sd = j.value("noise_sd", p.noise_sd);
  p.line_level = j.value("line_level", p.line_level);
  p.sample_rate = j.value("sample_rate", p.sample_rate);
  p.annotation_style = j.value("annotation_style", p.annotation_style);
  if (j.contains("scorer_bias")) {
    const auto rows = j.at("scorer_bias").get<std::vector<std::vector<double>>>();
    if (rows.size() != kNumStages) throw DataError("cohort spec: scorer_bias needs 5 rows");
    for (int i = 0; i < kNumStages; ++i) {
      if (rows[i].size() != kNumStages) throw DataError("cohort spec: scorer_bias rows need 5 entries");
      double sum = 0;
      for (int k = 0; k < kNumStages; ++k) {
        p.scorer_bias(i, k) = rows[i][k];
        sum += rows[i][k];
      }
      if (std::abs(sum - 1.0) > 1e-9) {
        throw DataError("cohort spec: scorer_bias row " + std::to_string(i) +
                        " does not sum to 1");
      }
    }
  } else if (j.contains("scorer_bias_epsilon")) {
    p.scorer_bias = make_scorer_bias(j.at("scorer_bias_epsilon").get<double>());
  }
  return p;
}

}  // namespace

std::vector<CohortSpec> load_cohort_specs(const std::string& json_path) {
  json j;
  try {
    j = json::parse(io::read_text_file(json_path));
  } catch (const json::exception& e) {
    throw DataError("cohort spec: invalid JSON in " + json_path + ": " + e.what());
  }
  std::vector<CohortSpec> specs;
  try {
    for (const auto& cj : j.at("cohorts")) {
      CohortSpec c;
      c.name = cj.at("name").get<std::string>();
      c.n_subjects = cj.at("n_subjects").get<int>();
      c.epochs_per_subject = cj.value("epochs_per_subject", c.epochs_per_subject);
      c.profile = profile_from_json(cj);
      specs.push_back(std::move(c));
    }
  } catch (const json::exception& e) {
    throw DataError("cohort spec: missing field in " + json_path + ": " + e.what());
  }
  if (specs.empty()) throw DataError("cohort spec: no cohorts in " + json_path);
  return specs;
}

void save_cohort_specs(const std::string& json_path, const std::vector<CohortSpec>& specs) {
  json j;
  j["cohorts"] = json::array();
  for (const CohortSpec& c : specs) {
    json cj = profile_to_json(c.profile);
    cj["name"] = c.name;
    cj["n_subjects"] = c.n_subjects;
    cj["epochs_per_subject"] = c.epochs_per_subject;
    j["cohorts"].push_back(cj);
  }
  io::write_text_file(json_path, j.dump(2) + "\n");
}

Montage synthetic_montage() {
  Montage m;
  m.eeg_candidates = {{"EEG C3", "EEG A2"}, {"EEG C4", "EEG A1"}};
  m.eog_left = {"EOG L", "EEG A2"};
  m.eog_right = {"EOG R", "EEG A1"};
  m.emg = {"EMG Chin", ""};
  return m;
}

StageMap synthetic_stage_map() {
  StageMap map = aasm_stage_map();
  for (const auto& [token, stage] : rk_stage_map()) map[token] = stage;
  return map;
}

CohortManifest generate_cohorts(const std::vector<CohortSpec>& specs, std::uint64_t seed,
                                const std::string& out_dir) {
  if (specs.empty()) throw UsageError("cohort generator: no cohorts requested");
  namespace fs = std::filesystem;
  CohortManifest manifest;
  manifest.stage_map = synthetic_stage_map();
  manifest.montage = synthetic_montage();

  const auto signatures = default_signatures();
  for (const CohortSpec& spec : specs) {
    const fs::path dir = fs::path(out_dir) / spec.name;
    fs::create_directories(dir);
    for (int i = 0; i < spec.n_subjects; ++i) {
      char suffix[16];
      std::snprintf(suffix, sizeof(suffix), "s%03d", i + 1);
      const std::string subject = spec.name + "-" + suffix;
      const std::uint64_t subject_seed = Rng::derive(seed, spec.name + "/" + subject);

      Hypnogram hyp = generate_hypnogram(spec.epochs_per_subject,
                                         Rng::derive(subject_seed, "hypnogram"));
      GeneratedRecording rec =
          generate_recording(hyp, signatures, spec.profile, subject_seed);
      rec.edf.header.patient_id = subject;

      const fs::path edf_path = dir / (subject + ".edf");
      const fs::path hyp_path = dir / (subject + ".hyp");
      edf::write_edf_file(edf_path.string(), rec.edf);
      io::write_text_file(hyp_path.string(), rec.annotation_text);

      ManifestEntry entry;
      entry.subject_id = subject;
      entry.cohort = spec.name;
      entry.recording_path = edf_path.string();
      entry.annotation_path = hyp_path.string();
      manifest.entries.push_back(std::move(entry));
    }
  }
  std::sort(manifest.entries.begin(), manifest.entries.end(),
            [](const ManifestEntry& a, const ManifestEntry& b) {
              return a.recording_path < b.recording_path;
            });
  return manifest;
}

}  // namespace stagenet::synth
