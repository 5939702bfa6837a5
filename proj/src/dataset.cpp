#include "stagenet/dataset.hpp"

#include <iostream>

#include "stagenet/common.hpp"
#include "stagenet/ingest.hpp"

namespace stagenet {

LoadedRecording load_recording(const ManifestEntry& entry, const Montage& montage,
                               const StageMap& stage_map) {
  const edf::EdfFile file = edf::parse_edf_file(entry.recording_path);
  const PsgRecording rec =
      assemble_recording(file, montage, entry.subject_id, entry.cohort);

  LoadedRecording out;
  out.subject_id = entry.subject_id;
  out.cohort = entry.cohort;
  out.signal = dsp::preprocess(rec);

  const Hypnogram hyp = load_hypnogram(entry.annotation_path, stage_map);
  const long signal_epochs = out.signal.n_epochs();
  const long annot_epochs = static_cast<long>(hyp.n_epochs());
  if (signal_epochs != annot_epochs) {
    std::cerr << "warning: " << entry.recording_path << " has " << signal_epochs
              << " signal epochs but " << annot_epochs
              << " annotation lines; truncating to the shorter\n";
  }
  const long n = std::min(signal_epochs, annot_epochs);
  if (n < 1) throw DataError("recording " + entry.recording_path + " has no scored epochs");
  out.epochs.assign(hyp.stages.begin(), hyp.stages.begin() + n);
  if (n < signal_epochs) {
    const long keep = n * kEpochSeconds * dsp::PreprocessedRecording::kSampleRate;
    out.signal.channels = out.signal.channels.leftCols(keep).eval();
  }
  return out;
}

std::vector<LoadedRecording> load_recordings(const CohortManifest& manifest,
                                             const std::vector<ManifestEntry>& entries) {
  std::vector<LoadedRecording> out;
  out.reserve(entries.size());
  for (const ManifestEntry& e : entries) {
    out.push_back(load_recording(e, manifest.montage, manifest.stage_map));
  }
  return out;
}

std::vector<SequenceRef> sample_sequences(const LoadedRecording& rec, int seq_epochs) {
  if (seq_epochs < 1) throw UsageError("sequences: seq_epochs must be positive");
  const long n_epochs = static_cast<long>(rec.epochs.size());
  if (n_epochs < seq_epochs) {
    throw DataError("recording " + rec.subject_id + " has " + std::to_string(n_epochs) +
                    " epochs, shorter than one " + std::to_string(seq_epochs) +
                    "-epoch sequence");
  }
  std::vector<SequenceRef> out;
  for (long start = 0; start + seq_epochs <= n_epochs; start += seq_epochs) {
    out.push_back({&rec, start});
  }
  return out;
}

std::vector<SequenceRef> all_sequences(const std::vector<LoadedRecording>& recs,
                                       int seq_epochs) {
  std::vector<SequenceRef> out;
  for (const auto& r : recs) {
    const auto s = sample_sequences(r, seq_epochs);
    out.insert(out.end(), s.begin(), s.end());
  }
  return out;
}

std::vector<SleepStage> sequence_epoch_labels(const SequenceRef& seq, int seq_epochs) {
  const auto& epochs = seq.recording->epochs;
  return std::vector<SleepStage>(epochs.begin() + seq.start_epoch,
                                 epochs.begin() + seq.start_epoch + seq_epochs);
}

}  // namespace stagenet
