#ifndef STAGENET_IO_UTIL_HPP
#define STAGENET_IO_UTIL_HPP

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace stagenet::io {

// Observer invoked with every path opened for reading through this module.
// Installed by tests to audit which files a pipeline stage touches.
using AccessObserver = std::function<void(const std::string& path)>;

void set_access_observer(AccessObserver observer);
void clear_access_observer();

std::vector<std::uint8_t> read_binary_file(const std::string& path);
std::string read_text_file(const std::string& path);

void write_binary_file(const std::string& path,
                       const std::vector<std::uint8_t>& bytes);
void write_text_file(const std::string& path, const std::string& text);

}  // namespace stagenet::io

#endif  // STAGENET_IO_UTIL_HPP
