#include "stagenet/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

#include "stagenet/common.hpp"
#include "stagenet/io_util.hpp"

namespace stagenet::dsp {

namespace {

using cplx = std::complex<double>;
constexpr double kPi = 3.14159265358979323846;

// Anti-alias prototype parameters for the polyphase resampler. The tap
// budget is sized so that tones up to 0.4x the lower Nyquist pass with
// well under 2% amplitude error while images/aliases stay below -50 dB.
constexpr double kKaiserBeta = 5.0;
constexpr int kTapsPerPhase = 50;
constexpr double kCutoffRolloff = 0.9;

struct Zpk {
  std::vector<cplx> zeros;
  std::vector<cplx> poles;
  double gain = 1.0;
};

Zpk butterworth_prototype(int order) {
  Zpk zpk;
  for (int k = 1; k <= order; ++k) {
    const double theta = kPi * (2.0 * k + order - 1.0) / (2.0 * order);
    zpk.poles.push_back(std::polar(1.0, theta));
  }
  zpk.gain = 1.0;
  return zpk;
}

cplx product(const std::vector<cplx>& v, cplx shift) {
  cplx acc(1.0, 0.0);
  for (const cplx& x : v) acc *= (shift - x);
  return acc;
}

Zpk lp2hp(const Zpk& lp, double wc) {
  Zpk out;
  for (const cplx& p : lp.poles) out.poles.push_back(wc / p);
  for (const cplx& z : lp.zeros) out.zeros.push_back(wc / z);
  const int degree = static_cast<int>(lp.poles.size() - lp.zeros.size());
  for (int i = 0; i < degree; ++i) out.zeros.push_back(cplx(0.0, 0.0));
  // H_hp(s) = H_lp(wc/s): the limit s->inf gives gain * prod(-z)/prod(-p)
  out.gain = lp.gain * (product(lp.zeros, cplx(0, 0)) / product(lp.poles, cplx(0, 0))).real();
  return out;
}

Zpk lp2bp(const Zpk& lp, double w0, double bw) {
  Zpk out;
  auto transform = [&](const cplx& s) {
    const cplx a = s * (bw / 2.0);
    const cplx d = std::sqrt(a * a - w0 * w0);
    return std::pair<cplx, cplx>(a + d, a - d);
  };
  for (const cplx& p : lp.poles) {
    auto [hi, lo] = transform(p);
    out.poles.push_back(hi);
    out.poles.push_back(lo);
  }
  for (const cplx& z : lp.zeros) {
    auto [hi, lo] = transform(z);
    out.zeros.push_back(hi);
    out.zeros.push_back(lo);
  }
  const int degree = static_cast<int>(lp.poles.size() - lp.zeros.size());
  for (int i = 0; i < degree; ++i) out.zeros.push_back(cplx(0.0, 0.0));
  out.gain = lp.gain * std::pow(bw, degree);
  return out;
}

Zpk bilinear(const Zpk& analog, double fs) {
  const double fs2 = 2.0 * fs;
  Zpk out;
  for (const cplx& p : analog.poles) out.poles.push_back((fs2 + p) / (fs2 - p));
  for (const cplx& z : analog.zeros) out.zeros.push_back((fs2 + z) / (fs2 - z));
  const int degree = static_cast<int>(analog.poles.size() - analog.zeros.size());
  for (int i = 0; i < degree; ++i) out.zeros.push_back(cplx(-1.0, 0.0));
  out.gain = analog.gain *
             (product(analog.zeros, cplx(fs2, 0)) / product(analog.poles, cplx(fs2, 0))).real();
  return out;
}

// Group conjugate pole pairs (and, for odd orders, real leftovers) into
// biquads; zeros of these designs are real (+1 and/or -1 clusters).
std::vector<Biquad> zpk_to_sos(const Zpk& zpk) {
  std::vector<cplx> upper, real_poles;
  for (const cplx& p : zpk.poles) {
    if (std::abs(p.imag()) < 1e-12) {
      real_poles.push_back(p);
    } else if (p.imag() > 0) {
      upper.push_back(p);
    }
  }
  // poles closest to the unit circle first
  std::sort(upper.begin(), upper.end(),
            [](const cplx& a, const cplx& b) { return std::abs(a) > std::abs(b); });
  std::sort(real_poles.begin(), real_poles.end(),
            [](const cplx& a, const cplx& b) { return std::abs(a) > std::abs(b); });

  std::vector<double> plus, minus;  // real zeros by sign
  for (const cplx& z : zpk.zeros) {
    if (z.real() >= 0) {
      plus.push_back(z.real());
    } else {
      minus.push_back(z.real());
    }
  }

  auto take_zero_pair = [&]() {
    // prefer one zero from each cluster (the bandpass layout); otherwise
    // drain whichever cluster remains
    std::array<double, 2> zs{0.0, 0.0};
    int got = 0;
    if (!plus.empty()) {
      zs[got++] = plus.back();
      plus.pop_back();
    }
    if (!minus.empty() && got < 2) {
      zs[got++] = minus.back();
      minus.pop_back();
    }
    while (got < 2 && !plus.empty()) {
      zs[got++] = plus.back();
      plus.pop_back();
    }
    return zs;
  };

  std::vector<Biquad> sos;
  for (const cplx& p : upper) {
    const auto zs = take_zero_pair();
    Biquad s;
    s.b0 = 1.0;
    s.b1 = -(zs[0] + zs[1]);
    s.b2 = zs[0] * zs[1];
    s.a1 = -2.0 * p.real();
    s.a2 = std::norm(p);
    sos.push_back(s);
  }
  for (std::size_t i = 0; i + 1 < real_poles.size(); i += 2) {
    const auto zs = take_zero_pair();
    Biquad s;
    s.b0 = 1.0;
    s.b1 = -(zs[0] + zs[1]);
    s.b2 = zs[0] * zs[1];
    s.a1 = -(real_poles[i].real() + real_poles[i + 1].real());
    s.a2 = real_poles[i].real() * real_poles[i + 1].real();
    sos.push_back(s);
  }
  if (real_poles.size() % 2 == 1) {
    Biquad s;
    s.b0 = 1.0;
    s.b1 = plus.empty() ? (minus.empty() ? 0.0 : -minus.back()) : -plus.back();
    if (!plus.empty()) {
      plus.pop_back();
    } else if (!minus.empty()) {
      minus.pop_back();
    }
    s.a1 = -real_poles.back().real();
    sos.push_back(s);
  }
  // overall gain folded into the first section
  if (!sos.empty()) {
    sos.front().b0 *= zpk.gain;
    sos.front().b1 *= zpk.gain;
    sos.front().b2 *= zpk.gain;
  }
  return sos;
}

double bessel_i0(double x) {
  double term = 1.0, sum = 1.0;
  const double q = x * x / 4.0;
  for (int k = 1; k < 64; ++k) {
    term *= q / (k * static_cast<double>(k));
    sum += term;
    if (term < sum * 1e-16) break;
  }
  return sum;
}

double sinc(double x) {
  if (x == 0.0) return 1.0;
  return std::sin(kPi * x) / (kPi * x);
}

}  // namespace

bool Biquad::is_stable() const {
  // roots of z^2 + a1 z + a2 inside the unit circle
  const double disc = a1 * a1 - 4.0 * a2;
  if (disc >= 0) {
    const double r = std::sqrt(disc);
    return std::abs((-a1 + r) / 2.0) < 1.0 && std::abs((-a1 - r) / 2.0) < 1.0;
  }
  return std::sqrt(a2) < 1.0;  // |root|^2 == a2 for conjugate roots
}

FilterSpec design_butterworth(int order, FilterKind kind,
                              const std::vector<double>& corners_hz,
                              double sample_rate) {
  if (order < 1) throw UsageError("filter design: order must be >= 1");
  if (!(sample_rate > 0)) throw UsageError("filter design: bad sample rate");
  const double nyquist = sample_rate / 2.0;
  for (double c : corners_hz) {
    if (!(c > 0) || c >= nyquist) {
      throw UsageError("filter design: corner " + std::to_string(c) +
                       " Hz outside (0, Nyquist)");
    }
  }

  auto prewarp = [&](double hz) {
    return 2.0 * sample_rate * std::tan(kPi * hz / sample_rate);
  };

  const Zpk lp = butterworth_prototype(order);
  Zpk analog;
  if (kind == FilterKind::Highpass) {
    if (corners_hz.size() != 1) throw UsageError("highpass needs one corner");
    analog = lp2hp(lp, prewarp(corners_hz[0]));
  } else {
    if (corners_hz.size() != 2 || corners_hz[0] >= corners_hz[1]) {
      throw UsageError("bandpass needs two increasing corners");
    }
    const double lo = prewarp(corners_hz[0]);
    const double hi = prewarp(corners_hz[1]);
    analog = lp2bp(lp, std::sqrt(lo * hi), hi - lo);
  }

  FilterSpec spec;
  spec.kind = kind;
  spec.corners_hz = corners_hz;
  spec.sample_rate = sample_rate;
  spec.sections = zpk_to_sos(bilinear(analog, sample_rate));
  for (const Biquad& s : spec.sections) {
    if (!s.is_stable()) throw NumericError("filter design: unstable section");
  }
  return spec;
}

std::complex<double> frequency_response(const FilterSpec& f, double hz) {
  const cplx zinv = std::polar(1.0, -2.0 * kPi * hz / f.sample_rate);
  cplx h(1.0, 0.0);
  for (const Biquad& s : f.sections) {
    h *= (s.b0 + s.b1 * zinv + s.b2 * zinv * zinv) /
         (1.0 + s.a1 * zinv + s.a2 * zinv * zinv);
  }
  return h;
}

namespace {

// Steady-state (step-scaled) initial DF2T state for one section.
struct SectionState {
  double s1 = 0, s2 = 0;
};

void run_section(const Biquad& c, const double* in, double* out, long n,
                 SectionState state) {
  double s1 = state.s1, s2 = state.s2;
  for (long i = 0; i < n; ++i) {
    const double x = in[i];
    const double y = c.b0 * x + s1;
    s1 = c.b1 * x - c.a1 * y + s2;
    s2 = c.b2 * x - c.a2 * y;
    out[i] = y;
  }
}

Eigen::VectorXd sosfilt_with_zi(const FilterSpec& f, const Eigen::VectorXd& x) {
  Eigen::VectorXd y = x;
  double level = x.size() > 0 ? x[0] : 0.0;
  for (const Biquad& s : f.sections) {
    const double dc = (s.b0 + s.b1 + s.b2) / (1.0 + s.a1 + s.a2);
    SectionState zi;
    zi.s1 = (dc - s.b0) * level;
    zi.s2 = (s.b2 - s.a2 * dc) * level;
    run_section(s, y.data(), y.data(), y.size(), zi);
    level *= dc;
  }
  return y;
}

}  // namespace

Eigen::VectorXd sosfilt(const FilterSpec& f, const Eigen::VectorXd& x) {
  return sosfilt_with_zi(f, x);
}

Eigen::VectorXd zero_phase_filter(const FilterSpec& f, const Eigen::VectorXd& x) {
  const long pad = 3L * (f.order() + 1);
  const long n = x.size();
  if (n <= pad) {
    throw DataError("zero-phase filter: signal length " + std::to_string(n) +
                    " <= required padding " + std::to_string(pad));
  }
  Eigen::VectorXd ext(n + 2 * pad);
  for (long i = 0; i < pad; ++i) ext[i] = 2.0 * x[0] - x[pad - i];
  ext.segment(pad, n) = x;
  for (long i = 0; i < pad; ++i) ext[pad + n + i] = 2.0 * x[n - 1] - x[n - 2 - i];

  Eigen::VectorXd fwd = sosfilt_with_zi(f, ext);
  fwd.reverseInPlace();
  Eigen::VectorXd bwd = sosfilt_with_zi(f, fwd);
  bwd.reverseInPlace();
  return bwd.segment(pad, n);
}

Eigen::VectorXd resample_polyphase(const Eigen::VectorXd& x, int fs_in, int fs_out) {
  if (fs_in <= 0 || fs_out <= 0) {
    throw UsageError("resample: sample rates must be positive");
  }
  const int g = std::gcd(fs_in, fs_out);
  const long up = fs_out / g;
  const long down = fs_in / g;
  if (up == 1 && down == 1) return x;

  const long n = x.size();
  const long taps = kTapsPerPhase * std::max(up, down) + 1;
  const long delay = (taps - 1) / 2;
  const double cutoff_hz = kCutoffRolloff * std::min(fs_in, fs_out) / 2.0;
  const double nu = cutoff_hz / (static_cast<double>(fs_in) * up);  // cycles/sample

  Eigen::VectorXd h(taps);
  const double i0_beta = bessel_i0(kKaiserBeta);
  for (long i = 0; i < taps; ++i) {
    const double t = static_cast<double>(i - delay);
    const double w = bessel_i0(kKaiserBeta * std::sqrt(std::max(
                         0.0, 1.0 - (t / delay) * (t / delay)))) /
                     i0_beta;
    h[i] = up * 2.0 * nu * sinc(2.0 * nu * t) * w;
  }

  const long out_len = (n * up + down - 1) / down;  // ceil(n*up/down)
  Eigen::VectorXd y(out_len);
  for (long m = 0; m < out_len; ++m) {
    const long t = m * down + delay;  // position in the upsampled stream
    const long a = t - taps + 1;
    // ceil(a/up); truncation toward zero already rounds up for a <= 0
    long j_lo = a <= 0 ? a / up : (a + up - 1) / up;
    j_lo = std::max(j_lo, 0L);
    const long j_hi = std::min(t / up, n - 1);
    double acc = 0.0;
    for (long j = j_lo; j <= j_hi; ++j) {
      acc += x[j] * h[t - j * up];
    }
    y[m] = acc;
  }
  return y;
}

Eigen::VectorXd zscore_normalize(const Eigen::VectorXd& x, double eps) {
  if (x.size() == 0) return x;
  const double mean = x.mean();
  const double var = (x.array() - mean).square().sum() / x.size();
  const double std = std::sqrt(var);
  // a flat channel normalizes to exactly zero rather than rounding noise / eps
  if (std <= eps) return Eigen::VectorXd::Zero(x.size());
  return (x.array() - mean) / std;
}

PreprocessedRecording preprocess(const PsgRecording& rec) {
  if (rec.channels.size() != kNumChannels) {
    throw DataError("preprocess: expected " + std::to_string(kNumChannels) + " channels");
  }
  const int fs = PreprocessedRecording::kSampleRate;
  const FilterSpec eeg_band = design_butterworth(4, FilterKind::Bandpass, {0.5, 35.0}, fs);
  const FilterSpec emg_high = design_butterworth(4, FilterKind::Highpass, {10.0}, fs);

  std::array<Eigen::VectorXd, kNumChannels> conditioned;
  std::array<double, kNumChannels> means{}, stds{};
  long common = -1;
  for (int c = 0; c < kNumChannels; ++c) {
    const PsgChannel& ch = rec.channels[c];
    const double rate = ch.sample_rate;
    if (rate <= 0 || rate != std::floor(rate)) {
      throw DataError("preprocess: non-integral sample rate");
    }
    Eigen::VectorXd x = resample_polyphase(ch.samples, static_cast<int>(rate), fs);
    const bool is_emg = ch.role == ChannelRole::Emg;
    x = zero_phase_filter(is_emg ? emg_high : eeg_band, x);
    const double mean = x.mean();
    const double var = (x.array() - mean).square().sum() / x.size();
    const double std = std::max(std::sqrt(var), 1e-8);
    conditioned[c] = (x.array() - mean) / std;
    means[c] = mean;
    stds[c] = std;
    common = common < 0 ? x.size() : std::min(common, x.size());
  }

  const long epoch_samples = static_cast<long>(kEpochSeconds) * fs;
  const long n = (common / epoch_samples) * epoch_samples;
  if (n == 0) throw DataError("preprocess: recording shorter than one 30 s epoch");

  PreprocessedRecording out;
  out.channels.resize(kNumChannels, n);
  for (int c = 0; c < kNumChannels; ++c) {
    out.channels.row(c) = conditioned[c].head(n).cast<float>();
  }
  out.norm_mean = means;
  out.norm_std = stds;
  return out;
}

namespace {
constexpr char kCacheMagic[4] = {'S', 'N', 'P', 'P'};
}

void save_preprocessed(const std::string& path, const PreprocessedRecording& rec) {
  const std::uint64_t n = static_cast<std::uint64_t>(rec.n_samples());
  const std::uint32_t fs = PreprocessedRecording::kSampleRate;
  std::vector<std::uint8_t> bytes;
  bytes.reserve(16 + 4u * kNumChannels * n);
  bytes.insert(bytes.end(), kCacheMagic, kCacheMagic + 4);
  for (int i = 0; i < 8; ++i) bytes.push_back(static_cast<std::uint8_t>((n >> (8 * i)) & 0xff));
  for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<std::uint8_t>((fs >> (8 * i)) & 0xff));
  for (int c = 0; c < kNumChannels; ++c) {
    for (std::uint64_t i = 0; i < n; ++i) {
      const float v = rec.channels(c, static_cast<long>(i));
      std::uint32_t u;
      std::memcpy(&u, &v, 4);
      for (int k = 0; k < 4; ++k) bytes.push_back(static_cast<std::uint8_t>((u >> (8 * k)) & 0xff));
    }
  }
  io::write_binary_file(path, bytes);
}

PreprocessedRecording load_preprocessed(const std::string& path) {
  const auto bytes = io::read_binary_file(path);
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kCacheMagic, 4) != 0) {
    throw DataError("preprocessed cache: bad header in " + path);
  }
  std::uint64_t n = 0;
  for (int i = 0; i < 8; ++i) n |= static_cast<std::uint64_t>(bytes[4 + i]) << (8 * i);
  std::uint32_t fs = 0;
  for (int i = 0; i < 4; ++i) fs |= static_cast<std::uint32_t>(bytes[12 + i]) << (8 * i);
  if (fs != PreprocessedRecording::kSampleRate) {
    throw DataError("preprocessed cache: unexpected sample rate");
  }
  if (bytes.size() != 16 + 4u * kNumChannels * n) {
    throw DataError("preprocessed cache: truncated payload in " + path);
  }
  PreprocessedRecording rec;
  rec.channels.resize(kNumChannels, static_cast<long>(n));
  std::size_t pos = 16;
  for (int c = 0; c < kNumChannels; ++c) {
    for (std::uint64_t i = 0; i < n; ++i) {
      std::uint32_t u = 0;
      for (int k = 0; k < 4; ++k) u |= static_cast<std::uint32_t>(bytes[pos + k]) << (8 * k);
      pos += 4;
      float v;
      std::memcpy(&v, &u, 4);
      rec.channels(c, static_cast<long>(i)) = v;
    }
  }
  return rec;
}

}  // namespace stagenet::dsp
