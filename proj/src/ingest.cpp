#include "stagenet/ingest.hpp"

#include <cmath>

#include "stagenet/common.hpp"

namespace stagenet {

int select_central_eeg(const std::vector<Eigen::VectorXd>& candidates) {
  if (candidates.empty()) throw DataError("channel selection: no EEG candidates");
  int best = 0;
  double best_energy = candidates[0].squaredNorm();
  for (int i = 1; i < static_cast<int>(candidates.size()); ++i) {
    const double energy = candidates[i].squaredNorm();
    if (energy < best_energy) {  // strict: ties keep the first-listed channel
      best = i;
      best_energy = energy;
    }
  }
  return best;
}

Eigen::VectorXd apply_reference(const Eigen::VectorXd& primary,
                                const Eigen::VectorXd& reference) {
  if (primary.size() != reference.size()) {
    throw DataError("referencing: length mismatch (" + std::to_string(primary.size()) +
                    " vs " + std::to_string(reference.size()) + ")");
  }
  return primary - reference;
}

namespace {

struct ResolvedChannel {
  Eigen::VectorXd samples;
  double sample_rate;
};

ResolvedChannel resolve(const edf::EdfFile& file, const Derivation& d,
                        bool pre_referenced) {
  const int primary = file.find_signal(d.primary);
  if (primary < 0) {
    throw DataError("montage: signal '" + d.primary + "' not present in recording");
  }
  ResolvedChannel out;
  out.sample_rate = file.signals[primary].sample_rate(file.header.record_duration);
  if (pre_referenced || d.reference.empty()) {
    out.samples = file.physical(primary);
    return out;
  }
  const int reference = file.find_signal(d.reference);
  if (reference < 0) {
    throw DataError("montage: reference signal '" + d.reference + "' not present");
  }
  const double ref_rate = file.signals[reference].sample_rate(file.header.record_duration);
  if (ref_rate != out.sample_rate) {
    throw DataError("montage: sample rate mismatch between '" + d.primary + "' and '" +
                    d.reference + "'");
  }
  out.samples = apply_reference(file.physical(primary), file.physical(reference));
  return out;
}

}  // namespace

PsgRecording assemble_recording(const edf::EdfFile& file, const Montage& montage,
                                const std::string& subject_id,
                                const std::string& cohort) {
  if (montage.eeg_candidates.empty()) {
    throw DataError("montage: no central EEG derivation configured");
  }

  std::vector<ResolvedChannel> eeg;
  std::vector<Eigen::VectorXd> eeg_signals;
  for (const auto& d : montage.eeg_candidates) {
    eeg.push_back(resolve(file, d, montage.pre_referenced));
    eeg_signals.push_back(eeg.back().samples);
  }
  for (std::size_t i = 1; i < eeg.size(); ++i) {
    if (eeg_signals[i].size() != eeg_signals[0].size()) {
      throw DataError("montage: EEG candidates differ in length");
    }
  }
  const int chosen = select_central_eeg(eeg_signals);

  PsgRecording rec;
  rec.subject_id = subject_id;
  rec.cohort = cohort;
  rec.channels.resize(kNumChannels);
  auto assign = [&](ChannelRole role, ResolvedChannel&& ch) {
    PsgChannel& slot = rec.channels[static_cast<int>(role)];
    slot.role = role;
    slot.sample_rate = ch.sample_rate;
    slot.samples = std::move(ch.samples);
  };
  assign(ChannelRole::Eeg, std::move(eeg[chosen]));
  assign(ChannelRole::EogLeft, resolve(file, montage.eog_left, montage.pre_referenced));
  assign(ChannelRole::EogRight, resolve(file, montage.eog_right, montage.pre_referenced));
  assign(ChannelRole::Emg, resolve(file, montage.emg, montage.pre_referenced));

  // all channels must span the same duration to within one record quantum
  const double duration = file.duration_seconds();
  for (const PsgChannel& ch : rec.channels) {
    const double span = ch.samples.size() / ch.sample_rate;
    if (std::abs(span - duration) > file.header.record_duration) {
      throw DataError("montage: channel durations disagree");
    }
  }
  return rec;
}

}  // namespace stagenet
