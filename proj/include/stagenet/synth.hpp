#ifndef STAGENET_SYNTH_HPP
#define STAGENET_SYNTH_HPP

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "stagenet/edf.hpp"
#include "stagenet/hypnogram.hpp"
#include "stagenet/ingest.hpp"
#include "stagenet/manifest.hpp"

namespace stagenet::synth {

using BiasMatrix = Eigen::Matrix<double, kNumStages, kNumStages>;
using TransitionMatrix = Eigen::Matrix<double, kNumStages, kNumStages>;

// Recording-site characteristics: per-channel gain, broadband and mains
// noise, acquisition rate, and the scorer's stage-confusion distribution
// applied to written annotations.
struct SiteProfile {
  std::array<double, kNumChannels> amplitude_scale{1.0, 1.0, 1.0, 1.0};
  double noise_sd = 2.0;    // uV, broadband
  double line_level = 1.0;  // uV at 50 Hz
  int sample_rate = 128;    // one of 100, 128, 200, 256, 512
  BiasMatrix scorer_bias = BiasMatrix::Identity();
  std::string annotation_style = "aasm";  // "aasm" or "rk"
};

// Stage-conditional spectral content, RMS amplitudes in uV.
struct StageSignature {
  double delta;    // 0.5-2 Hz
  double theta;    // 4-7 Hz
  double alpha;    // 8-12 Hz
  double spindle;  // 12-14 Hz
  double emg_tone; // 15-45 Hz on the chin channel
  double eog_level;// 0.3-2 Hz on the ocular channels
};

// The stage signature table. One row per stage in class order:
//
//   stage  delta theta alpha spindle  emg  eog
//   W        6     6    40      2      30   20
//   N1      12    25    10      3      12   15
//   N2      25    15     6     20       8    4
//   N3      60    12     4      6       5    2
//   REM     10    22     6      2       2   25
//
// Deep sleep is delta-dominated, wake carries alpha plus high muscle tone,
// REM has the lowest muscle tone with heavy eye movement.
std::array<StageSignature, kNumStages> default_signatures();

TransitionMatrix default_transitions();
// Identity plus epsilon mass on the clinically common confusions.
BiasMatrix make_scorer_bias(double epsilon);

Hypnogram generate_hypnogram(int n_epochs, std::uint64_t seed);
Hypnogram generate_hypnogram(int n_epochs, const TransitionMatrix& transitions,
                             std::uint64_t seed);

struct GeneratedRecording {
  edf::EdfFile edf;
  Hypnogram clean;    // pre-bias stages, kept for oracle tests
  Hypnogram written;  // scorer-biased stages matching the annotation text
  std::string annotation_text;
};

GeneratedRecording generate_recording(const Hypnogram& hyp,
                                      const std::array<StageSignature, kNumStages>& sig,
                                      const SiteProfile& site, std::uint64_t seed);

struct CohortSpec {
  std::string name;
  int n_subjects = 20;
  int epochs_per_subject = 40;
  SiteProfile profile;
};

// Five cohorts with heterogeneous rates, gains, noise floors, and scorer
// biases (three of them annotated with R&K tokens).
std::vector<CohortSpec> default_battery(int n_subjects = 20, int epochs_per_subject = 40);

std::vector<CohortSpec> load_cohort_specs(const std::string& json_path);
void save_cohort_specs(const std::string& json_path, const std::vector<CohortSpec>& specs);

// Channel labels written into generated EDFs and the montage describing them.
Montage synthetic_montage();
StageMap synthetic_stage_map();  // AASM plus R&K tokens

// Write EDF + annotation files for every subject of every cohort under
// out_dir/<cohort>/ and return the ready-to-split manifest. Byte-identical
// across reruns with the same arguments.
CohortManifest generate_cohorts(const std::vector<CohortSpec>& specs, std::uint64_t seed,
                                const std::string& out_dir);

}  // namespace stagenet::synth

#endif  // STAGENET_SYNTH_HPP
