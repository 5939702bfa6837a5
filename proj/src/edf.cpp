#include "stagenet/edf.hpp"

#include <charconv>
#include <cstdio>
#include <cstring>

#include "stagenet/common.hpp"
#include "stagenet/io_util.hpp"

namespace stagenet::edf {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(' ');
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(' ');
  return s.substr(a, b - a + 1);
}

class FieldReader {
 public:
  FieldReader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  std::string take(std::size_t n) {
    if (pos_ + n > bytes_.size()) throw DataError("EDF: truncated header");
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  std::size_t pos() const { return pos_; }

 private:
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

long parse_long(const std::string& raw, const char* what) {
  const std::string s = trim(raw);
  long value = 0;
  const auto* begin = s.data();
  const auto* end = s.data() + s.size();
  if (!s.empty() && s[0] == '+') ++begin;
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc{} || ptr != end || s.empty()) {
    throw DataError(std::string("EDF: bad integer field ") + what + ": '" +
                    s + "'");
  }
  return value;
}

double parse_double(const std::string& raw, const char* what) {
  const std::string s = trim(raw);
  if (s.empty()) throw DataError(std::string("EDF: empty numeric field ") + what);
  char* end = nullptr;
  const double value = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size()) {
    throw DataError(std::string("EDF: bad numeric field ") + what + ": '" +
                    s + "'");
  }
  return value;
}

int two_digit(const std::string& s, std::size_t off, const char* what) {
  if (s.size() < off + 2 || s[off] < '0' || s[off] > '9' || s[off + 1] < '0' ||
      s[off + 1] > '9') {
    throw DataError(std::string("EDF: bad date/time field ") + what);
  }
  return (s[off] - '0') * 10 + (s[off + 1] - '0');
}

// Fixed-width left-justified ASCII field, space padded.
void put_field(std::string& out, const std::string& value, std::size_t width,
               const char* what) {
  if (value.size() > width) {
    throw DataError(std::string("EDF: field too long for ") + what + ": '" +
                    value + "'");
  }
  out += value;
  out.append(width - value.size(), ' ');
}

// Shortest decimal representation that survives a parse round-trip and fits
// the 8-character numeric fields.
std::string format_number(double v, const char* what) {
  char buf[64];
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  std::string s(buf);
  if (s.size() > 8) {
    throw DataError(std::string("EDF: numeric value does not fit field ") +
                    what + ": " + s);
  }
  return s;
}

}  // namespace

Eigen::VectorXd EdfFile::physical(int signal_index) const {
  const SignalSpec& spec = signals.at(signal_index);
  const auto& digital = samples.at(signal_index);
  const double scale = (spec.physical_max - spec.physical_min) /
                       static_cast<double>(spec.digital_max - spec.digital_min);
  Eigen::VectorXd out(static_cast<Eigen::Index>(digital.size()));
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    out[i] = (digital[i] - spec.digital_min) * scale + spec.physical_min;
  }
  return out;
}

int EdfFile::find_signal(const std::string& label) const {
  for (std::size_t i = 0; i < signals.size(); ++i) {
    if (signals[i].label == label) return static_cast<int>(i);
  }
  return -1;
}

EdfFile parse_edf(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 256) throw DataError("EDF: stream shorter than 256-byte header");
  FieldReader r(bytes);

  EdfFile file;
  EdfHeader& h = file.header;
  h.version_tag = trim(r.take(8));
  h.patient_id = trim(r.take(80));
  h.recording_id = trim(r.take(80));

  const std::string date = r.take(8);
  const std::string time = r.take(8);
  h.start.day = two_digit(date, 0, "start day");
  h.start.month = two_digit(date, 3, "start month");
  const int yy = two_digit(date, 6, "start year");
  h.start.year = yy >= 85 ? 1900 + yy : 2000 + yy;
  h.start.hour = two_digit(time, 0, "start hour");
  h.start.minute = two_digit(time, 3, "start minute");
  h.start.second = two_digit(time, 6, "start second");

  h.header_bytes = parse_long(r.take(8), "header bytes");
  r.take(44);  // reserved
  h.n_data_records = parse_long(r.take(8), "data record count");
  h.record_duration = parse_double(r.take(8), "record duration");
  h.n_signals = static_cast<int>(parse_long(r.take(4), "signal count"));

  if (h.n_signals < 1) throw DataError("EDF: no signals");
  if (h.header_bytes != 256L * (h.n_signals + 1)) {
    throw DataError("EDF: header byte count inconsistent with signal count");
  }
  if (h.n_data_records < 0) {
    throw DataError("EDF: unknown record count (-1) is not supported");
  }
  if (!(h.record_duration > 0)) {
    throw DataError("EDF: record duration must be positive");
  }
  if (bytes.size() < static_cast<std::size_t>(h.header_bytes)) {
    throw DataError("EDF: truncated signal headers");
  }

  const int ns = h.n_signals;
  file.signals.resize(ns);
  std::vector<std::string> raw(ns);
  auto read_column = [&](auto assign) {
    for (int i = 0; i < ns; ++i) assign(file.signals[i], i);
  };
  for (int i = 0; i < ns; ++i) file.signals[i].label = trim(r.take(16));
  read_column([&](SignalSpec& s, int) { s.transducer = trim(r.take(80)); });
  read_column([&](SignalSpec& s, int) { s.physical_dimension = trim(r.take(8)); });
  read_column([&](SignalSpec& s, int) {
    s.physical_min = parse_double(r.take(8), "physical min");
  });
  read_column([&](SignalSpec& s, int) {
    s.physical_max = parse_double(r.take(8), "physical max");
  });
  read_column([&](SignalSpec& s, int) {
    s.digital_min = parse_long(r.take(8), "digital min");
  });
  read_column([&](SignalSpec& s, int) {
    s.digital_max = parse_long(r.take(8), "digital max");
  });
  read_column([&](SignalSpec& s, int) { s.prefiltering = trim(r.take(80)); });
  read_column([&](SignalSpec& s, int) {
    s.samples_per_record = parse_long(r.take(8), "samples per record");
  });
  read_column([&](SignalSpec&, int) { r.take(32); });

  long record_samples = 0;
  for (const SignalSpec& s : file.signals) {
    if (s.samples_per_record < 1) {
      throw DataError("EDF: samples per record must be >= 1 for '" + s.label + "'");
    }
    if (s.digital_min >= s.digital_max) {
      throw DataError("EDF: degenerate digital calibration for '" + s.label + "'");
    }
    if (s.physical_min == s.physical_max) {
      throw DataError("EDF: degenerate physical calibration for '" + s.label + "'");
    }
    record_samples += s.samples_per_record;
  }

  const std::size_t expected =
      static_cast<std::size_t>(h.header_bytes) +
      static_cast<std::size_t>(h.n_data_records) * record_samples * 2;
  if (bytes.size() != expected) {
    throw DataError("EDF: payload size inconsistent with header (expected " +
                    std::to_string(expected) + " bytes, have " +
                    std::to_string(bytes.size()) + ")");
  }

  file.samples.resize(ns);
  for (int i = 0; i < ns; ++i) {
    file.samples[i].resize(static_cast<std::size_t>(h.n_data_records) *
                           file.signals[i].samples_per_record);
  }
  std::size_t pos = static_cast<std::size_t>(h.header_bytes);
  for (long rec = 0; rec < h.n_data_records; ++rec) {
    for (int i = 0; i < ns; ++i) {
      const long n = file.signals[i].samples_per_record;
      std::int16_t* dst = file.samples[i].data() + rec * n;
      for (long k = 0; k < n; ++k) {
        // 16-bit little-endian two's complement
        const std::uint16_t lo = bytes[pos];
        const std::uint16_t hi = bytes[pos + 1];
        dst[k] = static_cast<std::int16_t>(static_cast<std::uint16_t>(lo | (hi << 8)));
        pos += 2;
      }
    }
  }
  return file;
}

std::vector<std::uint8_t> write_edf(const EdfFile& file) {
  const EdfHeader& h = file.header;
  const int ns = static_cast<int>(file.signals.size());
  if (ns < 1) throw DataError("EDF: no signals to write");
  if (h.n_data_records < 0 || !(h.record_duration > 0)) {
    throw DataError("EDF: invalid record geometry");
  }

  std::string head;
  head.reserve(256 * (ns + 1));
  put_field(head, h.version_tag.empty() ? "0" : h.version_tag, 8, "version");
  put_field(head, h.patient_id, 80, "patient id");
  put_field(head, h.recording_id, 80, "recording id");
  char date[16], time[16];
  std::snprintf(date, sizeof(date), "%02d.%02d.%02d", h.start.day, h.start.month,
                h.start.year % 100);
  std::snprintf(time, sizeof(time), "%02d.%02d.%02d", h.start.hour,
                h.start.minute, h.start.second);
  put_field(head, date, 8, "start date");
  put_field(head, time, 8, "start time");
  put_field(head, std::to_string(256L * (ns + 1)), 8, "header bytes");
  put_field(head, "", 44, "reserved");
  put_field(head, std::to_string(h.n_data_records), 8, "record count");
  put_field(head, format_number(h.record_duration, "record duration"), 8,
            "record duration");
  put_field(head, std::to_string(ns), 4, "signal count");

  for (const auto& s : file.signals) put_field(head, s.label, 16, "label");
  for (const auto& s : file.signals) put_field(head, s.transducer, 80, "transducer");
  for (const auto& s : file.signals)
    put_field(head, s.physical_dimension, 8, "physical dimension");
  for (const auto& s : file.signals)
    put_field(head, format_number(s.physical_min, "physical min"), 8, "physical min");
  for (const auto& s : file.signals)
    put_field(head, format_number(s.physical_max, "physical max"), 8, "physical max");
  for (const auto& s : file.signals)
    put_field(head, std::to_string(s.digital_min), 8, "digital min");
  for (const auto& s : file.signals)
    put_field(head, std::to_string(s.digital_max), 8, "digital max");
  for (const auto& s : file.signals)
    put_field(head, s.prefiltering, 80, "prefiltering");
  for (const auto& s : file.signals)
    put_field(head, std::to_string(s.samples_per_record), 8, "samples per record");
  for (const auto& s : file.signals) {
    (void)s;
    put_field(head, "", 32, "reserved");
  }

  std::vector<std::uint8_t> bytes(head.begin(), head.end());
  for (int i = 0; i < ns; ++i) {
    const std::size_t want = static_cast<std::size_t>(h.n_data_records) *
                             file.signals[i].samples_per_record;
    if (file.samples[i].size() != want) {
      throw DataError("EDF: sample payload inconsistent with record geometry for '" +
                      file.signals[i].label + "'");
    }
  }
  bytes.reserve(bytes.size() + 2u * static_cast<std::size_t>(h.n_data_records));
  for (long rec = 0; rec < h.n_data_records; ++rec) {
    for (int i = 0; i < ns; ++i) {
      const long n = file.signals[i].samples_per_record;
      const std::int16_t* src = file.samples[i].data() + rec * n;
      for (long k = 0; k < n; ++k) {
        const auto u = static_cast<std::uint16_t>(src[k]);
        bytes.push_back(static_cast<std::uint8_t>(u & 0xff));
        bytes.push_back(static_cast<std::uint8_t>(u >> 8));
      }
    }
  }
  return bytes;
}

EdfFile parse_edf_file(const std::string& path) {
  return parse_edf(io::read_binary_file(path));
}

void write_edf_file(const std::string& path, const EdfFile& file) {
  io::write_binary_file(path, write_edf(file));
}

}  // namespace stagenet::edf
