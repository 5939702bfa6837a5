#ifndef STAGENET_EDF_HPP
#define STAGENET_EDF_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

namespace stagenet::edf {

struct StartDateTime {
  int year = 1985;  // full year; two-digit EDF years pivot at 85
  int month = 1;
  int day = 1;
  int hour = 0;
  int minute = 0;
  int second = 0;
};

struct EdfHeader {
  std::string version_tag;  // 8 ASCII chars, canonically "0"
  std::string patient_id;
  std::string recording_id;
  StartDateTime start;
  long header_bytes = 0;      // must equal 256 * (n_signals + 1)
  long n_data_records = 0;    // the EDF "-1 = unknown" convention is rejected
  double record_duration = 0; // seconds per data record, > 0
  int n_signals = 0;
};

struct SignalSpec {
  std::string label;
  std::string transducer;
  std::string physical_dimension;
  double physical_min = 0;
  double physical_max = 0;
  long digital_min = 0;
  long digital_max = 0;
  std::string prefiltering;
  long samples_per_record = 0;

  double sample_rate(double record_duration) const {
    return static_cast<double>(samples_per_record) / record_duration;
  }
};

// A parsed recording: the header, one spec per signal, and the raw 16-bit
// digital payload (per signal, concatenated across data records).
struct EdfFile {
  EdfHeader header;
  std::vector<SignalSpec> signals;
  std::vector<std::vector<std::int16_t>> samples;

  double duration_seconds() const {
    return header.n_data_records * header.record_duration;
  }

  // Digital -> physical through the linear map fixed by the calibration
  // fields: digital_min maps to physical_min and digital_max to physical_max.
  Eigen::VectorXd physical(int signal_index) const;

  int find_signal(const std::string& label) const;  // -1 when absent
};

EdfFile parse_edf(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> write_edf(const EdfFile& file);

EdfFile parse_edf_file(const std::string& path);
void write_edf_file(const std::string& path, const EdfFile& file);

}  // namespace stagenet::edf

#endif  // STAGENET_EDF_HPP
