#include "stagenet/hypnogram.hpp"

#include <sstream>

#include "stagenet/common.hpp"
#include "stagenet/io_util.hpp"

namespace stagenet {

Hypnogram parse_hypnogram(const std::string& text, const StageMap& map) {
  Hypnogram hyp;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    // trim surrounding whitespace
    const auto a = line.find_first_not_of(" \t");
    if (a == std::string::npos) continue;  // blank lines carry no epoch
    const auto b = line.find_last_not_of(" \t");
    const std::string token = line.substr(a, b - a + 1);
    const auto it = map.find(token);
    hyp.stages.push_back(it == map.end() ? SleepStage::Unknown : it->second);
  }
  if (hyp.stages.empty()) throw DataError("hypnogram: no stage tokens");
  return hyp;
}

Hypnogram load_hypnogram(const std::string& path, const StageMap& map) {
  return parse_hypnogram(io::read_text_file(path), map);
}

std::string stage_token(SleepStage s) {
  switch (s) {
    case SleepStage::Rem:
      return "R";
    case SleepStage::Unknown:
      return "?";
    default:
      return stage_name(s);
  }
}

std::string format_hypnogram(const Hypnogram& hyp) {
  std::string out;
  for (SleepStage s : hyp.stages) {
    out += stage_token(s);
    out += '\n';
  }
  return out;
}

}  // namespace stagenet
