#ifndef STAGENET_DATASET_HPP
#define STAGENET_DATASET_HPP

#include <string>
#include <vector>

#include "stagenet/dsp.hpp"
#include "stagenet/hypnogram.hpp"
#include "stagenet/manifest.hpp"
#include "stagenet/network.hpp"

namespace stagenet {

// A preprocessed recording together with its aligned epoch labels. When the
// signal and annotation disagree on epoch count, both are truncated to the
// shorter (with a warning).
struct LoadedRecording {
  std::string subject_id;
  std::string cohort;
  dsp::PreprocessedRecording signal;
  std::vector<SleepStage> epochs;
};

LoadedRecording load_recording(const ManifestEntry& entry, const Montage& montage,
                               const StageMap& stage_map);

std::vector<LoadedRecording> load_recordings(const CohortManifest& manifest,
                                             const std::vector<ManifestEntry>& entries);

// One model input window: `seq_epochs` consecutive epochs of a recording.
struct SequenceRef {
  const LoadedRecording* recording = nullptr;
  long start_epoch = 0;
};

// Non-overlapping windows; a trailing partial window is dropped. Fails when
// the recording holds fewer than seq_epochs epochs.
std::vector<SequenceRef> sample_sequences(const LoadedRecording& rec, int seq_epochs);
std::vector<SequenceRef> all_sequences(const std::vector<LoadedRecording>& recs,
                                       int seq_epochs);

std::vector<SleepStage> sequence_epoch_labels(const SequenceRef& seq, int seq_epochs);

// Materialize the [channels, seq_epochs*30*128] input tensor.
template <typename S>
ad::Tensor<S> sequence_input(const SequenceRef& seq, const net::ModelConfig& config) {
  const long epoch_samples =
      static_cast<long>(kEpochSeconds) * dsp::PreprocessedRecording::kSampleRate;
  const long start = seq.start_epoch * epoch_samples;
  const long len = static_cast<long>(config.seq_epochs) * epoch_samples;
  const auto& channels = seq.recording->signal.channels;
  if (start + len > channels.cols()) {
    throw UsageError("sequence: window exceeds recording");
  }
  ad::Tensor<S> x = ad::Tensor<S>::zeros({channels.rows(), len});
  auto xm = x.matrix(channels.rows(), len);
  xm = channels.middleCols(start, len).template cast<S>();
  return x;
}

}  // namespace stagenet

#endif  // STAGENET_DATASET_HPP
