#include "stagenet/io_util.hpp"

#include <fstream>
#include <mutex>

#include "stagenet/common.hpp"

namespace stagenet::io {

namespace {
std::mutex g_observer_mutex;
AccessObserver g_observer;

void notify(const std::string& path) {
  std::lock_guard<std::mutex> lock(g_observer_mutex);
  if (g_observer) g_observer(path);
}
}  // namespace

void set_access_observer(AccessObserver observer) {
  std::lock_guard<std::mutex> lock(g_observer_mutex);
  g_observer = std::move(observer);
}

void clear_access_observer() {
  std::lock_guard<std::mutex> lock(g_observer_mutex);
  g_observer = nullptr;
}

std::vector<std::uint8_t> read_binary_file(const std::string& path) {
  notify(path);
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open file: " + path);
  in.seekg(0, std::ios::end);
  const std::streamoff size = in.tellg();
  in.seekg(0, std::ios::beg);
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(size));
  if (size > 0) in.read(reinterpret_cast<char*>(bytes.data()), size);
  if (!in) throw DataError("read failed: " + path);
  return bytes;
}

std::string read_text_file(const std::string& path) {
  const auto bytes = read_binary_file(path);
  return std::string(bytes.begin(), bytes.end());
}

void write_binary_file(const std::string& path,
                       const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open file for writing: " + path);
  if (!bytes.empty()) {
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
  }
  if (!out) throw DataError("write failed: " + path);
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open file for writing: " + path);
  out << text;
  if (!out) throw DataError("write failed: " + path);
}

}  // namespace stagenet::io
