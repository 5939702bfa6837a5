#include "stagenet/manifest.hpp"

#include <algorithm>
#include <set>

#include <json.hpp>

#include "stagenet/common.hpp"
#include "stagenet/io_util.hpp"
#include "stagenet/rng.hpp"

namespace stagenet {

using nlohmann::json;

const std::string& split_name(Split s) {
  static const std::string names[3] = {"train", "val", "test"};
  return names[static_cast<int>(s)];
}

namespace {

Split split_from_name(const std::string& name) {
  for (int i = 0; i < 3; ++i) {
    if (split_name(static_cast<Split>(i)) == name) return static_cast<Split>(i);
  }
  throw DataError("manifest: unknown split name '" + name + "'");
}

json derivation_to_json(const Derivation& d) {
  json j;
  j["primary"] = d.primary;
  if (!d.reference.empty()) j["reference"] = d.reference;
  return j;
}

Derivation derivation_from_json(const json& j) {
  Derivation d;
  d.primary = j.at("primary").get<std::string>();
  if (j.contains("reference")) d.reference = j.at("reference").get<std::string>();
  return d;
}

}  // namespace

std::vector<std::string> CohortManifest::cohort_names() const {
  std::set<std::string> names;
  for (const auto& e : entries) names.insert(e.cohort);
  return {names.begin(), names.end()};
}

std::vector<std::string> CohortManifest::subjects_of(const std::string& cohort) const {
  std::set<std::string> subjects;
  for (const auto& e : entries) {
    if (e.cohort == cohort) subjects.insert(e.subject_id);
  }
  return {subjects.begin(), subjects.end()};
}

std::vector<ManifestEntry> CohortManifest::entries_in(Split s) const {
  return entries_in(s, cohort_names());
}

std::vector<ManifestEntry> CohortManifest::entries_in(
    Split s, const std::vector<std::string>& cohorts) const {
  std::vector<ManifestEntry> out;
  for (const auto& e : entries) {
    if (std::find(cohorts.begin(), cohorts.end(), e.cohort) == cohorts.end()) continue;
    const auto it = split.find(e.subject_id);
    if (it == split.end()) throw DataError("manifest: subject '" + e.subject_id + "' has no split assignment");
    if (it->second == s) out.push_back(e);
  }
  // deterministic path-sorted order regardless of manifest entry order
  std::sort(out.begin(), out.end(), [](const ManifestEntry& a, const ManifestEntry& b) {
    return a.recording_path < b.recording_path;
  });
  return out;
}

CohortManifest load_manifest(const std::string& path) {
  json j;
  try {
    j = json::parse(io::read_text_file(path));
  } catch (const json::exception& e) {
    throw DataError("manifest: invalid JSON in " + path + ": " + e.what());
  }
  CohortManifest m;
  try {
    for (const auto& [token, name] : j.at("stage_map").items()) {
      const auto stage = stage_from_name(name.get<std::string>());
      if (!stage) throw DataError("manifest: unknown stage name '" + name.get<std::string>() + "'");
      m.stage_map[token] = *stage;
    }
    const json& mj = j.at("montage");
    for (const auto& c : mj.at("eeg_candidates")) {
      m.montage.eeg_candidates.push_back(derivation_from_json(c));
    }
    m.montage.eog_left = derivation_from_json(mj.at("eog_left"));
    m.montage.eog_right = derivation_from_json(mj.at("eog_right"));
    m.montage.emg = derivation_from_json(mj.at("emg"));
    m.montage.pre_referenced = mj.value("pre_referenced", false);
    for (const auto& e : j.at("entries")) {
      ManifestEntry entry;
      entry.subject_id = e.at("subject_id").get<std::string>();
      entry.cohort = e.at("cohort").get<std::string>();
      entry.recording_path = e.at("recording").get<std::string>();
      entry.annotation_path = e.at("annotation").get<std::string>();
      m.entries.push_back(entry);
    }
    if (j.contains("split")) {
      for (const auto& [subject, name] : j.at("split").items()) {
        m.split[subject] = split_from_name(name.get<std::string>());
      }
    }
  } catch (const json::exception& e) {
    throw DataError("manifest: missing or malformed field in " + path + ": " + e.what());
  }
  if (m.entries.empty()) throw DataError("manifest: no entries in " + path);
  return m;
}

void save_manifest(const std::string& path, const CohortManifest& manifest) {
  json j;
  json sm = json::object();
  for (const auto& [token, stage] : manifest.stage_map) sm[token] = stage_name(stage);
  j["stage_map"] = sm;
  json mj;
  mj["eeg_candidates"] = json::array();
  for (const auto& c : manifest.montage.eeg_candidates) {
    mj["eeg_candidates"].push_back(derivation_to_json(c));
  }
  mj["eog_left"] = derivation_to_json(manifest.montage.eog_left);
  mj["eog_right"] = derivation_to_json(manifest.montage.eog_right);
  mj["emg"] = derivation_to_json(manifest.montage.emg);
  mj["pre_referenced"] = manifest.montage.pre_referenced;
  j["montage"] = mj;
  j["entries"] = json::array();
  // path-sorted for a canonical on-disk order
  auto sorted = manifest.entries;
  std::sort(sorted.begin(), sorted.end(), [](const ManifestEntry& a, const ManifestEntry& b) {
    return a.recording_path < b.recording_path;
  });
  for (const auto& e : sorted) {
    json ej;
    ej["subject_id"] = e.subject_id;
    ej["cohort"] = e.cohort;
    ej["recording"] = e.recording_path;
    ej["annotation"] = e.annotation_path;
    j["entries"].push_back(ej);
  }
  if (!manifest.split.empty()) {
    json sj = json::object();
    for (const auto& [subject, s] : manifest.split) sj[subject] = split_name(s);
    j["split"] = sj;
  }
  io::write_text_file(path, j.dump(2) + "\n");
}

void split_cohort(CohortManifest& manifest, std::uint64_t seed, SplitFractions fractions) {
  manifest.split.clear();
  for (const std::string& cohort : manifest.cohort_names()) {
    std::vector<std::string> subjects = manifest.subjects_of(cohort);
    const std::size_t n = subjects.size();
    if (n < 3) {
      throw DataError("split: cohort '" + cohort + "' has " + std::to_string(n) +
                      " subjects; need at least 3 for train/val/test");
    }
    Rng rng(Rng::derive(seed, "split/" + cohort));
    rng.shuffle(subjects);
    std::size_t n_val = static_cast<std::size_t>(fractions.val * n);
    std::size_t n_test = static_cast<std::size_t>(fractions.test * n);
    // floor rounding can empty a subset on small cohorts; every subset must
    // hold at least one subject for training to be possible at all
    if (n_val == 0) n_val = 1;
    if (n_test == 0) n_test = 1;
    if (n_val + n_test >= n) {
      throw DataError("split: cohort '" + cohort + "' too small for requested fractions");
    }
    for (std::size_t i = 0; i < n; ++i) {
      Split s = Split::Train;
      if (i < n_val) {
        s = Split::Val;
      } else if (i < n_val + n_test) {
        s = Split::Test;
      }
      manifest.split[subjects[i]] = s;
    }
  }
}

}  // namespace stagenet
