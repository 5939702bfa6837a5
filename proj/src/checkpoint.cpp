#include "stagenet/checkpoint.hpp"

#include <cstring>

#include <json.hpp>

#include "stagenet/io_util.hpp"

namespace stagenet::ckpt {

using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'S', 'N', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}
void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

class Cursor {
 public:
  Cursor(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return v;
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  void floats(float* dst, std::size_t n) {
    need(4 * n);
    for (std::size_t i = 0; i < n; ++i) {
      std::uint32_t u = 0;
      for (int k = 0; k < 4; ++k) {
        u |= static_cast<std::uint32_t>(bytes_[pos_ + 4 * i + k]) << (8 * k);
      }
      std::memcpy(dst + i, &u, 4);
    }
    pos_ += 4 * n;
  }

 private:
  void need(std::size_t n) {
    if (pos_ + n > bytes_.size()) throw DataError("checkpoint: truncated file");
  }
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

void write_table(const std::string& path, const std::vector<NamedArray>& entries) {
  std::vector<std::uint8_t> bytes;
  bytes.insert(bytes.end(), kMagic, kMagic + 4);
  put_u32(bytes, kVersion);
  put_u32(bytes, static_cast<std::uint32_t>(entries.size()));
  for (const NamedArray& e : entries) {
    put_u32(bytes, static_cast<std::uint32_t>(e.name.size()));
    bytes.insert(bytes.end(), e.name.begin(), e.name.end());
    put_u32(bytes, static_cast<std::uint32_t>(e.dims.size()));
    std::size_t n = 1;
    for (long d : e.dims) {
      put_u64(bytes, static_cast<std::uint64_t>(d));
      n *= static_cast<std::size_t>(d);
    }
    if (n != e.values.size()) {
      throw UsageError("checkpoint: dims inconsistent with payload for '" + e.name + "'");
    }
    for (float v : e.values) {
      std::uint32_t u;
      std::memcpy(&u, &v, 4);
      put_u32(bytes, u);
    }
  }
  io::write_binary_file(path, bytes);
}

std::vector<NamedArray> read_table(const std::string& path) {
  const auto bytes = io::read_binary_file(path);
  if (bytes.size() < 12 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw DataError("checkpoint: bad magic in " + path);
  }
  Cursor c(bytes);
  c.str(4);  // magic
  const std::uint32_t version = c.u32();
  if (version != kVersion) {
    throw DataError("checkpoint: unsupported version " + std::to_string(version));
  }
  const std::uint32_t n_entries = c.u32();
  std::vector<NamedArray> out;
  out.reserve(n_entries);
  for (std::uint32_t i = 0; i < n_entries; ++i) {
    NamedArray e;
    e.name = c.str(c.u32());
    const std::uint32_t ndim = c.u32();
    std::size_t n = 1;
    for (std::uint32_t d = 0; d < ndim; ++d) {
      e.dims.push_back(static_cast<long>(c.u64()));
      n *= static_cast<std::size_t>(e.dims.back());
    }
    e.values.resize(n);
    c.floats(e.values.data(), n);
    out.push_back(std::move(e));
  }
  return out;
}

void write_meta(const std::string& path, const CheckpointMeta& meta) {
  json j;
  json m;
  m["channels"] = meta.config.channels;
  m["sample_rate"] = meta.config.sample_rate;
  m["n_stages"] = meta.config.n_stages;
  m["n_blocks"] = meta.config.n_blocks;
  m["base_filters"] = meta.config.base_filters;
  m["hidden_units"] = meta.config.hidden_units;
  m["seq_epochs"] = meta.config.seq_epochs;
  m["loss_window_s"] = meta.config.loss_window_s;
  j["model"] = m;
  j["seed"] = meta.seed;
  j["selected_pass"] = meta.selected_pass;
  j["val_kappa"] = meta.val_kappa;
  io::write_text_file(path, j.dump(2) + "\n");
}

CheckpointMeta read_meta(const std::string& path) {
  json j;
  try {
    j = json::parse(io::read_text_file(path));
  } catch (const json::exception& e) {
    throw DataError("checkpoint meta: invalid JSON in " + path + ": " + e.what());
  }
  CheckpointMeta meta;
  try {
    const json& m = j.at("model");
    meta.config.channels = m.at("channels").get<int>();
    meta.config.sample_rate = m.at("sample_rate").get<int>();
    meta.config.n_stages = m.at("n_stages").get<int>();
    meta.config.n_blocks = m.at("n_blocks").get<int>();
    meta.config.base_filters = m.at("base_filters").get<int>();
    meta.config.hidden_units = m.at("hidden_units").get<int>();
    meta.config.seq_epochs = m.at("seq_epochs").get<int>();
    meta.config.loss_window_s = m.at("loss_window_s").get<int>();
    meta.seed = j.at("seed").get<std::uint64_t>();
    meta.selected_pass = j.at("selected_pass").get<int>();
    meta.val_kappa = j.at("val_kappa").get<double>();
  } catch (const json::exception& e) {
    throw DataError("checkpoint meta: missing field in " + path + ": " + e.what());
  }
  return meta;
}

}  // namespace stagenet::ckpt
