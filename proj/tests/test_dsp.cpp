#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "stagenet/dsp.hpp"
#include "stagenet/synth.hpp"

using namespace stagenet;
using dsp::FilterKind;

namespace {

Eigen::VectorXd sine(double hz, double fs, long n, double amp = 1.0, double phase = 0.0) {
  Eigen::VectorXd x(n);
  for (long t = 0; t < n; ++t) x[t] = amp * std::sin(2.0 * M_PI * hz * t / fs + phase);
  return x;
}

Eigen::VectorXd random_signal(long n, Rng& rng, double amp = 1.0) {
  Eigen::VectorXd x(n);
  for (long t = 0; t < n; ++t) x[t] = amp * rng.uniform(-1.0, 1.0);
  return x;
}

double db(double magnitude) { return 20.0 * std::log10(magnitude); }

}  // namespace

TEST_CASE("butterworth: 10 Hz highpass at fs=128 is -3 dB at the corner") {
  const auto f = dsp::design_butterworth(4, FilterKind::Highpass, {10.0}, 128.0);
  CHECK(f.order() == 4);
  const double mag = std::abs(dsp::frequency_response(f, 10.0));
  CHECK(mag == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(0.01));
}

TEST_CASE("butterworth: EEG bandpass has a DC zero and flat midband") {
  const auto f = dsp::design_butterworth(4, FilterKind::Bandpass, {0.5, 35.0}, 128.0);
  CHECK(f.order() == 8);  // band transform doubles the pole count
  CHECK(std::abs(dsp::frequency_response(f, 0.0)) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(std::abs(dsp::frequency_response(f, 17.0)) >= 0.99);
}

TEST_CASE("butterworth: corners sit at -3 dB within 0.2 dB") {
  const auto band = dsp::design_butterworth(4, FilterKind::Bandpass, {0.5, 35.0}, 128.0);
  for (double corner : {0.5, 35.0}) {
    const double gain_db = db(std::abs(dsp::frequency_response(band, corner)));
    CHECK(gain_db == doctest::Approx(-3.0103).epsilon(0.07));  // within 0.2 dB
  }
}

TEST_CASE("butterworth: all sections stable, bad corners rejected") {
  for (const auto& f :
       {dsp::design_butterworth(4, FilterKind::Bandpass, {0.5, 35.0}, 128.0),
        dsp::design_butterworth(4, FilterKind::Highpass, {10.0}, 128.0),
        dsp::design_butterworth(4, FilterKind::Bandpass, {0.5, 35.0}, 100.0),
        dsp::design_butterworth(4, FilterKind::Highpass, {10.0}, 512.0)}) {
    for (const auto& s : f.sections) CHECK(s.is_stable());
  }
  CHECK_THROWS_AS(dsp::design_butterworth(4, FilterKind::Highpass, {64.0}, 128.0),
                  UsageError);
  CHECK_THROWS_AS(dsp::design_butterworth(4, FilterKind::Highpass, {70.0}, 128.0),
                  UsageError);
  CHECK_THROWS_AS(dsp::design_butterworth(4, FilterKind::Bandpass, {35.0, 0.5}, 128.0),
                  UsageError);
}

TEST_CASE("zero_phase_filter: zero in, zero out; short signals rejected") {
  const auto f = dsp::design_butterworth(4, FilterKind::Bandpass, {0.5, 35.0}, 128.0);
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(512);
  CHECK(dsp::zero_phase_filter(f, zero).cwiseAbs().maxCoeff() == 0.0);
  CHECK_THROWS_AS(dsp::zero_phase_filter(f, Eigen::VectorXd::Zero(20)), DataError);
}

TEST_CASE("zero_phase_filter: midband sine passes with zero lag and unit amplitude") {
  const auto f = dsp::design_butterworth(4, FilterKind::Bandpass, {0.5, 35.0}, 128.0);
  const long n = 4096;
  const Eigen::VectorXd x = sine(10.0, 128.0, n);
  const Eigen::VectorXd y = dsp::zero_phase_filter(f, x);

  // lag by peak cross-correlation over the central region
  const Eigen::VectorXd xc = x.segment(512, n - 1024);
  const Eigen::VectorXd yc = y.segment(512, n - 1024);
  CHECK(oracles::xcorr_peak_lag(xc, yc, 32) == 0);

  // |H|^2 at 10 Hz stays within 2% of unity
  const double amp = oracles::tone_amplitude(yc, 10.0, 128.0);
  CHECK(amp == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("zero_phase_filter: single-pass causal filter does lag (sanity contrast)") {
  const auto f = dsp::design_butterworth(4, FilterKind::Bandpass, {0.5, 35.0}, 128.0);
  const long n = 4096;
  const Eigen::VectorXd x = sine(3.0, 128.0, n);
  const Eigen::VectorXd y = dsp::sosfilt(f, x);
  const Eigen::VectorXd xc = x.segment(512, n - 1024);
  const Eigen::VectorXd yc = y.segment(512, n - 1024);
  CHECK(oracles::xcorr_peak_lag(xc, yc, 64) != 0);
}

TEST_CASE("zero_phase_filter: linearity") {
  const auto f = dsp::design_butterworth(4, FilterKind::Highpass, {10.0}, 128.0);
  Rng rng(4);
  const Eigen::VectorXd x = random_signal(700, rng);
  const Eigen::VectorXd y = random_signal(700, rng);
  const double a = 1.7, b = -0.6;
  const Eigen::VectorXd lhs = dsp::zero_phase_filter(f, a * x + b * y);
  const Eigen::VectorXd rhs =
      a * dsp::zero_phase_filter(f, x) + b * dsp::zero_phase_filter(f, y);
  CHECK((lhs - rhs).cwiseAbs().maxCoeff() / rhs.cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("resample: identity at equal rates, exact length arithmetic") {
  Rng rng(5);
  const Eigen::VectorXd x = random_signal(1000, rng);
  const Eigen::VectorXd y = dsp::resample_polyphase(x, 128, 128);
  CHECK((y - x).cwiseAbs().maxCoeff() == 0.0);

  const Eigen::VectorXd z = dsp::resample_polyphase(random_signal(2560, rng), 256, 128);
  CHECK(z.size() == 1280);

  CHECK_THROWS_AS(dsp::resample_polyphase(x, 0, 128), UsageError);
  CHECK_THROWS_AS(dsp::resample_polyphase(x, 128, -4), UsageError);
}

TEST_CASE("resample: 5 Hz sine from 100 Hz lands on the analytic 128 Hz samples") {
  const long n_in = 1000;  // 10 s
  const Eigen::VectorXd x = sine(5.0, 100.0, n_in);
  const Eigen::VectorXd y = dsp::resample_polyphase(x, 100, 128);
  REQUIRE(y.size() == 1280);
  // compare against the closed-form sine on the central 80%
  const long lo = y.size() / 10, hi = y.size() - y.size() / 10;
  double err2 = 0, ref2 = 0;
  for (long m = lo; m < hi; ++m) {
    const double expected = std::sin(2.0 * M_PI * 5.0 * m / 128.0);
    err2 += (y[m] - expected) * (y[m] - expected);
    ref2 += expected * expected;
  }
  CHECK(std::sqrt(err2 / ref2) < 0.01);
}

TEST_CASE("resample: in-band tones survive within 2% across site rates") {
  Rng rng(6);
  for (int fs_in : {100, 200, 256, 512}) {
    for (int trial = 0; trial < 3; ++trial) {
      const double limit = 0.4 * std::min(fs_in, 128);
      const double hz = rng.uniform(1.0, limit);
      const long n_in = fs_in * 8;
      const Eigen::VectorXd x = sine(hz, fs_in, n_in);
      const Eigen::VectorXd y = dsp::resample_polyphase(x, fs_in, 128);
      const long lo = y.size() / 5;
      const Eigen::VectorXd yc = y.segment(lo, y.size() - 2 * lo);
      const double amp = oracles::tone_amplitude(yc, hz, 128.0);
      CHECK_MESSAGE(amp == doctest::Approx(1.0).epsilon(0.02),
                    "tone ", hz, " Hz from ", fs_in, " Hz");
    }
  }
}

TEST_CASE("zscore: fixed point, degenerate guard, and oracle stats") {
  Rng rng(7);
  Eigen::VectorXd x = random_signal(500, rng, 3.0);
  const Eigen::VectorXd z = dsp::zscore_normalize(x);
  // two-pass oracle
  double mean = 0;
  for (long i = 0; i < z.size(); ++i) mean += z[i];
  mean /= z.size();
  double var = 0;
  for (long i = 0; i < z.size(); ++i) var += (z[i] - mean) * (z[i] - mean);
  var /= z.size();
  CHECK(std::abs(mean) < 1e-9);
  CHECK(std::abs(std::sqrt(var) - 1.0) < 1e-9);

  // already normalized input is unchanged
  CHECK((dsp::zscore_normalize(z) - z).cwiseAbs().maxCoeff() < 1e-9);

  // constant signal maps to zeros through the epsilon guard
  const Eigen::VectorXd c = Eigen::VectorXd::Constant(100, 4.2);
  CHECK(dsp::zscore_normalize(c).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("zscore: idempotent on non-degenerate signals") {
  Rng rng(8);
  const Eigen::VectorXd x = random_signal(256, rng, 11.0);
  const Eigen::VectorXd once = dsp::zscore_normalize(x);
  const Eigen::VectorXd twice = dsp::zscore_normalize(once);
  CHECK((twice - once).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("preprocess: 10 minutes at 256 Hz becomes 4 x 76800 with unit stats") {
  const auto sig = synth::default_signatures();
  synth::SiteProfile site;
  site.sample_rate = 256;
  const Hypnogram hyp = synth::generate_hypnogram(20, 31);  // 600 s
  const auto gen = synth::generate_recording(hyp, sig, site, 37);
  const PsgRecording psg =
      assemble_recording(gen.edf, synth::synthetic_montage(), "s", "c");
  const dsp::PreprocessedRecording pre = dsp::preprocess(psg);
  CHECK(pre.channels.rows() == 4);
  CHECK(pre.channels.cols() == 76800);
  CHECK(pre.n_epochs() == 20);
  for (int c = 0; c < 4; ++c) {
    const Eigen::VectorXd ch = pre.channels.row(c).cast<double>();
    const double mean = ch.mean();
    const double sd = std::sqrt((ch.array() - mean).square().sum() / ch.size());
    CHECK(std::abs(mean) < 1e-6);
    CHECK(std::abs(sd - 1.0) < 1e-6);
  }
}

TEST_CASE("preprocess: 2 Hz tone on the EMG channel is nearly erased") {
  // feed a synthetic recording whose EMG carries a strong 2 Hz component;
  // the 10 Hz high pass must attenuate it below 5% of its input share
  synth::SiteProfile site;
  site.sample_rate = 128;
  site.noise_sd = 0.0;
  site.line_level = 0.0;
  const long n = 120 * 128;  // 2 min
  edf::EdfFile f;
  f.header.n_data_records = 120;
  f.header.record_duration = 1.0;
  f.header.n_signals = 7;
  const char* labels[7] = {"EEG C3", "EEG C4", "EEG A1", "EEG A2",
                           "EOG L",  "EOG R",  "EMG Chin"};
  Rng rng(9);
  for (int i = 0; i < 7; ++i) {
    edf::SignalSpec s;
    s.label = labels[i];
    s.physical_min = -1000;
    s.physical_max = 1000;
    s.digital_min = -32767;
    s.digital_max = 32767;
    s.samples_per_record = 128;
    f.signals.push_back(s);
    Eigen::VectorXd x = random_signal(n, rng, 5.0);
    if (i == 6) x += sine(2.0, 128.0, n, 100.0);  // dominant low-frequency tone
    std::vector<std::int16_t> digital(n);
    for (long t = 0; t < n; ++t) {
      digital[t] = static_cast<std::int16_t>(
          std::round(std::clamp(x[t], -1000.0, 1000.0) / 1000.0 * 32767.0));
    }
    f.samples.push_back(std::move(digital));
  }
  const PsgRecording psg = assemble_recording(f, synth::synthetic_montage(), "s", "c");
  const double in_rms_total = std::sqrt(psg.channels[3].samples.squaredNorm() /
                                        psg.channels[3].samples.size());
  const double in_amp_2hz = oracles::tone_amplitude(psg.channels[3].samples, 2.0, 128.0);
  CHECK(in_amp_2hz > 90.0);  // the tone dominates the input

  const dsp::PreprocessedRecording pre = dsp::preprocess(psg);
  // undo the z-scaling to compare physical amplitudes
  const Eigen::VectorXd emg =
      pre.channels.row(3).cast<double>() * pre.norm_std[3] +
      Eigen::VectorXd::Constant(pre.channels.cols(), pre.norm_mean[3]);
  const double out_amp_2hz = oracles::tone_amplitude(emg, 2.0, 128.0);
  CHECK(out_amp_2hz / in_amp_2hz < 0.05);
  (void)in_rms_total;

  // attenuation agrees with the designed response |H(2 Hz)|^2
  const auto emg_high = dsp::design_butterworth(4, dsp::FilterKind::Highpass, {10.0}, 128.0);
  const double h2 = std::norm(dsp::frequency_response(emg_high, 2.0));
  CHECK(out_amp_2hz / in_amp_2hz == doctest::Approx(h2).epsilon(0.25));
}

TEST_CASE("preprocessed cache: round trip through the binary container") {
  const auto sig = synth::default_signatures();
  synth::SiteProfile site;
  site.sample_rate = 100;
  const Hypnogram hyp = synth::generate_hypnogram(2, 41);
  const auto gen = synth::generate_recording(hyp, sig, site, 43);
  const PsgRecording psg =
      assemble_recording(gen.edf, synth::synthetic_montage(), "s", "c");
  const dsp::PreprocessedRecording pre = dsp::preprocess(psg);

  const std::string path = "cache_roundtrip_test.snp";
  dsp::save_preprocessed(path, pre);
  const dsp::PreprocessedRecording loaded = dsp::load_preprocessed(path);
  REQUIRE(loaded.channels.rows() == pre.channels.rows());
  REQUIRE(loaded.channels.cols() == pre.channels.cols());
  CHECK((loaded.channels - pre.channels).cwiseAbs().maxCoeff() == 0.0f);
  std::remove(path.c_str());
}
