#include "stagenet/stages.hpp"

namespace stagenet {

const std::string& stage_name(SleepStage s) {
  static const std::array<std::string, 6> names = {"W",  "N1", "N2",
                                                   "N3", "REM", "UNKNOWN"};
  return names[static_cast<int>(s)];
}

std::optional<SleepStage> stage_from_name(const std::string& name) {
  for (int i = 0; i < 6; ++i) {
    const auto s = static_cast<SleepStage>(i);
    if (stage_name(s) == name) return s;
  }
  return std::nullopt;
}

StageMap aasm_stage_map() {
  return {{"W", SleepStage::Wake}, {"N1", SleepStage::N1},
          {"N2", SleepStage::N2},  {"N3", SleepStage::N3},
          {"R", SleepStage::Rem}};
}

StageMap rk_stage_map() {
  return {{"W", SleepStage::Wake}, {"S1", SleepStage::N1},
          {"S2", SleepStage::N2},  {"S3", SleepStage::N3},
          {"S4", SleepStage::N3},  {"R", SleepStage::Rem}};
}

}  // namespace stagenet
