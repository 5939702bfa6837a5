#ifndef STAGENET_INGEST_HPP
#define STAGENET_INGEST_HPP

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "stagenet/edf.hpp"
#include "stagenet/manifest.hpp"

namespace stagenet {

enum class ChannelRole : int { Eeg = 0, EogLeft = 1, EogRight = 2, Emg = 3 };

inline constexpr int kNumChannels = 4;

struct PsgChannel {
  ChannelRole role;
  double sample_rate = 0;   // Hz
  Eigen::VectorXd samples;  // physical units
};

// The assembled four-channel recording, channels in the fixed role order
// EEG, EOG-L, EOG-R, EMG.
struct PsgRecording {
  std::string subject_id;
  std::string cohort;
  std::vector<PsgChannel> channels;
};

// Lowest-total-energy choice among candidate central EEG derivations.
// Returns the index of the candidate minimizing the sum of squared samples;
// ties go to the first-listed candidate.
int select_central_eeg(const std::vector<Eigen::VectorXd>& candidates);

// Elementwise primary - reference. Lengths must match.
Eigen::VectorXd apply_reference(const Eigen::VectorXd& primary,
                                const Eigen::VectorXd& reference);

// Build the four model input channels from a parsed EDF through the montage:
// resolve each derivation (subtracting the reference unless pre_referenced),
// pick the central EEG by lowest energy, and order channels by role.
PsgRecording assemble_recording(const edf::EdfFile& file, const Montage& montage,
                                const std::string& subject_id,
                                const std::string& cohort);

}  // namespace stagenet

#endif  // STAGENET_INGEST_HPP
