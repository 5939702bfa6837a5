#ifndef STAGENET_COMMON_HPP
#define STAGENET_COMMON_HPP

#include <stdexcept>
#include <string>

namespace stagenet {

// Seconds per scored hypnogram epoch. Fixed by the scoring standard.
inline constexpr int kEpochSeconds = 30;

// Malformed or inconsistent input data (files, headers, manifests).
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad arguments or configuration supplied by the caller.
class UsageError : public std::runtime_error {
 public:
  explicit UsageError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite values or other numeric breakdown during computation.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace stagenet

#endif  // STAGENET_COMMON_HPP
