#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>

#include "oracles.hpp"
#include "stagenet/edf.hpp"
#include "stagenet/hypnogram.hpp"
#include "stagenet/ingest.hpp"
#include "stagenet/manifest.hpp"
#include "stagenet/synth.hpp"

using namespace stagenet;

namespace {

// Minimal single-signal EDF byte image for header-arithmetic checks.
std::vector<std::uint8_t> tiny_edf(long header_bytes_field) {
  edf::EdfFile f;
  f.header.version_tag = "0";
  f.header.patient_id = "p1";
  f.header.recording_id = "r1";
  f.header.n_data_records = 2;
  f.header.record_duration = 1.0;
  f.header.n_signals = 1;
  edf::SignalSpec s;
  s.label = "sig";
  s.physical_dimension = "uV";
  s.physical_min = -100;
  s.physical_max = 100;
  s.digital_min = -2048;
  s.digital_max = 2047;
  s.samples_per_record = 4;
  f.signals.push_back(s);
  f.samples.push_back({0, 1, 2, 3, -4, -3, -2, -1});
  auto bytes = edf::write_edf(f);
  if (header_bytes_field != 512) {
    // overwrite the header-bytes field (offset 184, width 8)
    const std::string v = std::to_string(header_bytes_field);
    for (int i = 0; i < 8; ++i) {
      bytes[184 + i] = i < static_cast<int>(v.size()) ? v[i] : ' ';
    }
  }
  return bytes;
}

}  // namespace

TEST_CASE("parse_edf: header byte count must equal 256*(n_signals+1)") {
  CHECK_NOTHROW(edf::parse_edf(tiny_edf(512)));
  CHECK_THROWS_AS(edf::parse_edf(tiny_edf(513)), DataError);
}

TEST_CASE("parse_edf: digital extremes map to the physical extremes exactly") {
  edf::EdfFile f;
  f.header.n_data_records = 1;
  f.header.record_duration = 1.0;
  f.header.n_signals = 1;
  edf::SignalSpec s;
  s.label = "cal";
  s.physical_min = -250.0;
  s.physical_max = 750.0;
  s.digital_min = -32768;
  s.digital_max = 32767;
  s.samples_per_record = 2;
  f.signals.push_back(s);
  f.samples.push_back({-32768, 32767});
  const edf::EdfFile parsed = edf::parse_edf(edf::write_edf(f));
  const Eigen::VectorXd phys = parsed.physical(0);
  CHECK(phys[0] == -250.0);
  CHECK(phys[1] == 750.0);
}

TEST_CASE("parse_edf: truncated payload and degenerate calibration are rejected") {
  auto bytes = tiny_edf(512);
  auto truncated = bytes;
  truncated.pop_back();
  CHECK_THROWS_AS(edf::parse_edf(truncated), DataError);

  edf::EdfFile f = edf::parse_edf(bytes);
  f.signals[0].digital_min = f.signals[0].digital_max;
  CHECK_THROWS_AS(edf::parse_edf(edf::write_edf(f)), DataError);
}

TEST_CASE("edf round trip: generator files reparse bit-exactly") {
  const auto sig = synth::default_signatures();
  synth::SiteProfile site;
  site.sample_rate = 128;
  const Hypnogram hyp = synth::generate_hypnogram(4, 123);
  const auto rec = synth::generate_recording(hyp, sig, site, 99);

  const auto bytes = edf::write_edf(rec.edf);
  const edf::EdfFile parsed = edf::parse_edf(bytes);

  CHECK(parsed.header.n_data_records == rec.edf.header.n_data_records);
  CHECK(parsed.header.record_duration == rec.edf.header.record_duration);
  CHECK(parsed.header.n_signals == rec.edf.header.n_signals);
  CHECK(parsed.header.patient_id == rec.edf.header.patient_id);
  CHECK(parsed.header.start.year == rec.edf.header.start.year);
  REQUIRE(parsed.samples.size() == rec.edf.samples.size());
  for (std::size_t i = 0; i < parsed.samples.size(); ++i) {
    CHECK(parsed.signals[i].label == rec.edf.signals[i].label);
    CHECK(parsed.signals[i].physical_min == rec.edf.signals[i].physical_min);
    CHECK(parsed.signals[i].samples_per_record == rec.edf.signals[i].samples_per_record);
    REQUIRE(parsed.samples[i].size() == rec.edf.samples[i].size());
    CHECK(std::equal(parsed.samples[i].begin(), parsed.samples[i].end(),
                     rec.edf.samples[i].begin()));
  }
  // and the re-serialization is byte-identical
  CHECK(edf::write_edf(parsed) == bytes);
}

TEST_CASE("select_central_eeg: argmin of total energy, first wins ties") {
  Eigen::VectorXd a(3), b(3);
  a << 1, 2, 1;   // energy 6
  b << 2, 2, 2;   // energy 12
  CHECK(select_central_eeg({a, b}) == 0);
  CHECK(select_central_eeg({b, a}) == 1);
  CHECK(select_central_eeg({a, a}) == 0);  // tie: first listed
  CHECK_THROWS_AS(select_central_eeg({}), DataError);
}

TEST_CASE("select_central_eeg: matches a brute-force energy oracle") {
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<Eigen::VectorXd> candidates;
    for (int c = 0; c < 3; ++c) {
      Eigen::VectorXd v(1000);
      for (long i = 0; i < v.size(); ++i) v[i] = rng.uniform(-2.0, 2.0);
      candidates.push_back(v);
    }
    int expected = 0;
    double best = 1e300;
    for (int c = 0; c < 3; ++c) {
      double energy = 0;
      for (long i = 0; i < 1000; ++i) energy += candidates[c][i] * candidates[c][i];
      if (energy < best) {
        best = energy;
        expected = c;
      }
    }
    CHECK(select_central_eeg(candidates) == expected);
  }
}

TEST_CASE("select_central_eeg: scaling a loser up never makes it win") {
  Rng rng(6);
  Eigen::VectorXd a(100), b(100);
  for (long i = 0; i < 100; ++i) {
    a[i] = rng.uniform(-1.0, 1.0);
    b[i] = rng.uniform(-1.0, 1.0);
  }
  const int winner = select_central_eeg({a, b});
  const int loser = 1 - winner;
  for (double scale : {1.5, 2.0, 10.0}) {
    std::vector<Eigen::VectorXd> cands = {a, b};
    cands[loser] *= scale;
    CHECK(select_central_eeg(cands) == winner);
  }
}

TEST_CASE("apply_reference: identity, cancellation, oracle, and length check") {
  Eigen::VectorXd p(3), zero(3), mismatch(2);
  p << 5, -3, 2;
  zero.setZero();
  CHECK((apply_reference(p, zero) - p).cwiseAbs().maxCoeff() == 0.0);
  CHECK(apply_reference(p, p).cwiseAbs().maxCoeff() == 0.0);
  CHECK_THROWS_AS(apply_reference(p, mismatch), DataError);

  Rng rng(7);
  Eigen::VectorXd x(50), r(50);
  for (long i = 0; i < 50; ++i) {
    x[i] = rng.uniform(-1.0, 1.0);
    r[i] = rng.uniform(-1.0, 1.0);
  }
  const Eigen::VectorXd d = apply_reference(x, r);
  for (long i = 0; i < 50; ++i) CHECK(d[i] == x[i] - r[i]);
}

TEST_CASE("hypnogram: R&K tokens harmonize S3 and S4 into N3") {
  const Hypnogram hyp = parse_hypnogram("W\nS1\nS2\nS3\nS4\nR\n", rk_stage_map());
  REQUIRE(hyp.n_epochs() == 6);
  CHECK(hyp.stages[0] == SleepStage::Wake);
  CHECK(hyp.stages[1] == SleepStage::N1);
  CHECK(hyp.stages[2] == SleepStage::N2);
  CHECK(hyp.stages[3] == SleepStage::N3);
  CHECK(hyp.stages[4] == SleepStage::N3);
  CHECK(hyp.stages[5] == SleepStage::Rem);
}

TEST_CASE("hypnogram: AASM tokens map onto themselves") {
  const Hypnogram hyp = parse_hypnogram("W\nN1\nN2\nN3\nR\n", aasm_stage_map());
  REQUIRE(hyp.n_epochs() == 5);
  for (int i = 0; i < 5; ++i) CHECK(static_cast<int>(hyp.stages[i]) == i);
}

TEST_CASE("hypnogram: unrecognized tokens become Unknown, never a scored stage") {
  const Hypnogram hyp = parse_hypnogram("W\nMOVEMENT\nN2\n", aasm_stage_map());
  REQUIRE(hyp.n_epochs() == 3);
  CHECK(hyp.stages[1] == SleepStage::Unknown);
  CHECK_FALSE(hyp.scored(1));
}

TEST_CASE("hypnogram: empty annotation is an error") {
  CHECK_THROWS_AS(parse_hypnogram("", aasm_stage_map()), DataError);
  CHECK_THROWS_AS(parse_hypnogram("  \n\n", aasm_stage_map()), DataError);
}

TEST_CASE("hypnogram: every possible token maps to exactly one stage") {
  Rng rng(8);
  const StageMap map = synth::synthetic_stage_map();
  const char alphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789?";
  for (int trial = 0; trial < 200; ++trial) {
    std::string token;
    const int len = 1 + static_cast<int>(rng.below(4));
    for (int i = 0; i < len; ++i) token += alphabet[rng.below(sizeof(alphabet) - 1)];
    const Hypnogram hyp = parse_hypnogram(token + "\n", map);
    REQUIRE(hyp.n_epochs() == 1);
    const int v = static_cast<int>(hyp.stages[0]);
    CHECK(v >= 0);
    CHECK(v <= 5);
  }
}

TEST_CASE("split_cohort: 1000 subjects split 875/25/100") {
  CohortManifest manifest;
  manifest.stage_map = aasm_stage_map();
  for (int i = 0; i < 1000; ++i) {
    ManifestEntry e;
    e.subject_id = "s" + std::to_string(i);
    e.cohort = "one";
    e.recording_path = "r" + std::to_string(i) + ".edf";
    e.annotation_path = "r" + std::to_string(i) + ".hyp";
    manifest.entries.push_back(e);
  }
  split_cohort(manifest, 42);
  int train = 0, val = 0, test = 0;
  for (const auto& [subject, split] : manifest.split) {
    if (split == Split::Train) ++train;
    if (split == Split::Val) ++val;
    if (split == Split::Test) ++test;
  }
  CHECK(train == 875);
  CHECK(val == 25);
  CHECK(test == 100);
}

TEST_CASE("split_cohort: all recordings of a subject share one split") {
  CohortManifest manifest;
  for (int i = 0; i < 12; ++i) {
    for (int r = 0; r < 2; ++r) {  // two recordings per subject
      ManifestEntry e;
      e.subject_id = "subj" + std::to_string(i);
      e.cohort = "one";
      e.recording_path = "s" + std::to_string(i) + "v" + std::to_string(r) + ".edf";
      e.annotation_path = e.recording_path + ".hyp";
      manifest.entries.push_back(e);
    }
  }
  split_cohort(manifest, 3);
  // the split map is keyed by subject, so both recordings resolve identically
  for (int i = 0; i < 12; ++i) {
    CHECK(manifest.split.count("subj" + std::to_string(i)) == 1);
  }
  CHECK(manifest.entries_in(Split::Train).size() % 2 == 0);
  CHECK(manifest.entries_in(Split::Val).size() % 2 == 0);
  CHECK(manifest.entries_in(Split::Test).size() % 2 == 0);
}

TEST_CASE("split_cohort: deterministic per seed, different across seeds") {
  auto build = [] {
    CohortManifest m;
    for (int i = 0; i < 1000; ++i) {
      ManifestEntry e;
      e.subject_id = "s" + std::to_string(i);
      e.cohort = "one";
      e.recording_path = "r" + std::to_string(i);
      e.annotation_path = "a" + std::to_string(i);
      m.entries.push_back(e);
    }
    return m;
  };
  CohortManifest a = build(), b = build(), c = build();
  split_cohort(a, 5);
  split_cohort(b, 5);
  split_cohort(c, 6);
  CHECK(a.split == b.split);
  CHECK(a.split != c.split);
}

TEST_CASE("split_cohort: partition covers all subjects, pairwise disjoint, any seed") {
  for (std::uint64_t seed : {1ull, 2ull, 77ull, 12345ull}) {
    CohortManifest m;
    for (int c = 0; c < 3; ++c) {
      for (int i = 0; i < 7 + c; ++i) {
        ManifestEntry e;
        e.subject_id = "c" + std::to_string(c) + "s" + std::to_string(i);
        e.cohort = "cohort" + std::to_string(c);
        e.recording_path = e.subject_id + ".edf";
        e.annotation_path = e.subject_id + ".hyp";
        m.entries.push_back(e);
      }
    }
    split_cohort(m, seed);
    std::set<std::string> all;
    for (const auto& e : m.entries) all.insert(e.subject_id);
    CHECK(m.split.size() == all.size());  // total coverage, one split each
    for (const auto& cohort : m.cohort_names()) {
      int val = 0, test = 0;
      for (const auto& subject : m.subjects_of(cohort)) {
        REQUIRE(m.split.count(subject) == 1);
        if (m.split.at(subject) == Split::Val) ++val;
        if (m.split.at(subject) == Split::Test) ++test;
      }
      CHECK(val >= 1);
      CHECK(test >= 1);
    }
  }
}

TEST_CASE("split_cohort: fewer than three subjects is an error") {
  CohortManifest m;
  for (int i = 0; i < 2; ++i) {
    ManifestEntry e;
    e.subject_id = "s" + std::to_string(i);
    e.cohort = "tiny";
    e.recording_path = "r" + std::to_string(i);
    e.annotation_path = "a" + std::to_string(i);
    m.entries.push_back(e);
  }
  CHECK_THROWS_AS(split_cohort(m, 1), DataError);
}

TEST_CASE("assemble_recording: montage resolves references and role order") {
  const auto sig = synth::default_signatures();
  synth::SiteProfile site;
  site.sample_rate = 128;
  const Hypnogram hyp = synth::generate_hypnogram(3, 11);
  auto rec = synth::generate_recording(hyp, sig, site, 17);

  const PsgRecording psg =
      assemble_recording(rec.edf, synth::synthetic_montage(), "subj", "coh");
  REQUIRE(psg.channels.size() == 4);
  CHECK(psg.channels[0].role == ChannelRole::Eeg);
  CHECK(psg.channels[1].role == ChannelRole::EogLeft);
  CHECK(psg.channels[2].role == ChannelRole::EogRight);
  CHECK(psg.channels[3].role == ChannelRole::Emg);
  for (const auto& ch : psg.channels) {
    CHECK(ch.sample_rate == 128.0);
    CHECK(ch.samples.size() == 3 * 30 * 128);
  }
  // chosen EEG must be one of the two derivations, by minimum energy
  const Eigen::VectorXd c3 = apply_reference(rec.edf.physical(0), rec.edf.physical(3));
  const Eigen::VectorXd c4 = apply_reference(rec.edf.physical(1), rec.edf.physical(2));
  const Eigen::VectorXd& expected = c3.squaredNorm() <= c4.squaredNorm() ? c3 : c4;
  CHECK((psg.channels[0].samples - expected).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("assemble_recording: pre-referenced montage uses channels verbatim") {
  const auto sig = synth::default_signatures();
  synth::SiteProfile site;
  site.sample_rate = 128;
  const Hypnogram hyp = synth::generate_hypnogram(3, 21);
  auto rec = synth::generate_recording(hyp, sig, site, 23);

  Montage montage = synth::synthetic_montage();
  montage.pre_referenced = true;  // treat 'EEG C3' etc. as already referenced
  const PsgRecording psg = assemble_recording(rec.edf, montage, "subj", "coh");
  CHECK((psg.channels[3].samples - rec.edf.physical(6)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("assemble_recording: recording without the montage channels is rejected") {
  edf::EdfFile f;
  f.header.n_data_records = 1;
  f.header.record_duration = 1.0;
  f.header.n_signals = 1;
  edf::SignalSpec s;
  s.label = "ECG";
  s.physical_min = -1;
  s.physical_max = 1;
  s.digital_min = -100;
  s.digital_max = 100;
  s.samples_per_record = 10;
  f.signals.push_back(s);
  f.samples.push_back(std::vector<std::int16_t>(10, 0));
  CHECK_THROWS_AS(assemble_recording(f, synth::synthetic_montage(), "s", "c"), DataError);
}

TEST_CASE("manifest: JSON round trip preserves entries, montage, and split") {
  CohortManifest m;
  m.stage_map = synth::synthetic_stage_map();
  m.montage = synth::synthetic_montage();
  for (int i = 0; i < 5; ++i) {
    ManifestEntry e;
    e.subject_id = "s" + std::to_string(i);
    e.cohort = i < 3 ? "a" : "b";
    e.recording_path = "rec" + std::to_string(i) + ".edf";
    e.annotation_path = "rec" + std::to_string(i) + ".hyp";
    m.entries.push_back(e);
  }
  m.split["s0"] = Split::Train;
  m.split["s1"] = Split::Val;
  m.split["s2"] = Split::Test;
  m.split["s3"] = Split::Train;
  m.split["s4"] = Split::Train;

  const std::string path = "manifest_roundtrip_test.json";
  save_manifest(path, m);
  const CohortManifest loaded = load_manifest(path);
  CHECK(loaded.entries.size() == m.entries.size());
  CHECK(loaded.stage_map == m.stage_map);
  CHECK(loaded.split == m.split);
  CHECK(loaded.montage.eeg_candidates.size() == 2);
  CHECK(loaded.montage.eog_left.primary == "EOG L");
  CHECK(loaded.montage.emg.reference.empty());
  std::remove(path.c_str());
}
