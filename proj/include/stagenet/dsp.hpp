#ifndef STAGENET_DSP_HPP
#define STAGENET_DSP_HPP

#include <Eigen/Dense>
#include <array>
#include <complex>
#include <string>
#include <vector>

#include "stagenet/common.hpp"
#include "stagenet/ingest.hpp"

namespace stagenet::dsp {

enum class FilterKind { Bandpass, Highpass };

// One second-order section, denominator normalized to a0 = 1.
struct Biquad {
  double b0 = 0, b1 = 0, b2 = 0;
  double a1 = 0, a2 = 0;

  bool is_stable() const;
};

struct FilterSpec {
  FilterKind kind;
  std::vector<double> corners_hz;
  double sample_rate = 0;
  std::vector<Biquad> sections;

  // Realized order (pole count): two per section for these designs.
  int order() const { return 2 * static_cast<int>(sections.size()); }
};

// Butterworth IIR design: analog prototype of the given order, band
// transform with frequency pre-warping, bilinear transform, factored into
// second-order sections. A bandpass design doubles the pole count, so the
// single-pass magnitude is -3 dB at each corner for either kind.
FilterSpec design_butterworth(int order, FilterKind kind,
                              const std::vector<double>& corners_hz,
                              double sample_rate);

// Single-pass complex response at f hertz.
std::complex<double> frequency_response(const FilterSpec& f, double hz);

// Causal single-pass filtering with steady-state initial conditions scaled
// to the first sample.
Eigen::VectorXd sosfilt(const FilterSpec& f, const Eigen::VectorXd& x);

// Forward-backward filtering: zero phase, squared magnitude. The signal is
// extended at both ends by odd reflection of length 3*(order+1) and trimmed
// back afterwards, so output length equals input length.
Eigen::VectorXd zero_phase_filter(const FilterSpec& f, const Eigen::VectorXd& x);

// Rational-rate resampling by L/M in polyphase form: conceptual upsample by
// L, Kaiser-windowed-sinc anti-alias lowpass, downsample by M, evaluating
// only the filter phases that contribute. Output length is ceil(n*L/M).
Eigen::VectorXd resample_polyphase(const Eigen::VectorXd& x, int fs_in, int fs_out);

// (x - mean) / max(std, eps) with the population (1/N) std convention.
Eigen::VectorXd zscore_normalize(const Eigen::VectorXd& x, double eps = 1e-8);

// The four conditioned model inputs at 128 Hz, trimmed to whole 30 s epochs.
struct PreprocessedRecording {
  Eigen::MatrixXf channels;  // kNumChannels x N, N a multiple of 30*128
  std::array<double, kNumChannels> norm_mean{};
  std::array<double, kNumChannels> norm_std{};

  static constexpr int kSampleRate = 128;
  long n_samples() const { return channels.cols(); }
  long n_epochs() const { return n_samples() / (kEpochSeconds * kSampleRate); }
};

// Per channel: resample to 128 Hz, zero-phase filter (EEG/EOG band pass
// 0.5-35 Hz, EMG high pass 10 Hz), then z-normalize, in that order.
PreprocessedRecording preprocess(const PsgRecording& rec);

// Binary cache: 16-byte header (magic, sample count N, rate) followed by the
// row-major channels-by-N float32 payload, all little-endian.
void save_preprocessed(const std::string& path, const PreprocessedRecording& rec);
PreprocessedRecording load_preprocessed(const std::string& path);

}  // namespace stagenet::dsp

#endif  // STAGENET_DSP_HPP
