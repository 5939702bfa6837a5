#ifndef STAGENET_MANIFEST_HPP
#define STAGENET_MANIFEST_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "stagenet/stages.hpp"

namespace stagenet {

enum class Split { Train, Val, Test };

const std::string& split_name(Split s);

// One reference-derivation pair: the primary electrode label and the label
// it is referenced against. An empty reference means the stored channel is
// used verbatim (already referenced at the recorder).
struct Derivation {
  std::string primary;
  std::string reference;
};

// Which EDF labels feed the four model inputs. `eeg_candidates` lists the
// central EEG derivations to choose between by lowest total energy.
struct Montage {
  std::vector<Derivation> eeg_candidates;
  Derivation eog_left;
  Derivation eog_right;
  Derivation emg;
  bool pre_referenced = false;  // true: 'C3-A2'-style channels, no subtraction
};

struct ManifestEntry {
  std::string subject_id;
  std::string cohort;
  std::string recording_path;
  std::string annotation_path;
};

// The cohort manifest: recording inventory, the annotation token table,
// montage, and (after splitting) the subject -> subset assignment.
struct CohortManifest {
  std::vector<ManifestEntry> entries;
  StageMap stage_map;
  Montage montage;
  std::map<std::string, Split> split;  // by subject_id; empty until assigned

  std::vector<std::string> cohort_names() const;        // sorted, unique
  std::vector<std::string> subjects_of(const std::string& cohort) const;
  std::vector<ManifestEntry> entries_in(Split s) const;
  std::vector<ManifestEntry> entries_in(Split s, const std::vector<std::string>& cohorts) const;
};

CohortManifest load_manifest(const std::string& path);
void save_manifest(const std::string& path, const CohortManifest& manifest);

struct SplitFractions {
  double val = 0.025;
  double test = 0.10;
};

// Assign every subject of every cohort to exactly one subset, per cohort:
// floor(val_frac * n) validation and floor(test_frac * n) test subjects
// (each raised to one when the floor is zero, so no subset is empty), the
// remainder to train. Sampling is without replacement and deterministic in
// the seed; all recordings of a subject land in the same subset.
void split_cohort(CohortManifest& manifest, std::uint64_t seed,
                  SplitFractions fractions = {});

}  // namespace stagenet

#endif  // STAGENET_MANIFEST_HPP
