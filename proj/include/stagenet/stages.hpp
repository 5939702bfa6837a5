#ifndef STAGENET_STAGES_HPP
#define STAGENET_STAGES_HPP

#include <array>
#include <map>
#include <optional>
#include <string>

namespace stagenet {

// The five scored stages, in the fixed class order used throughout the
// model and metrics, plus Unknown for unscored or unrecognized epochs.
enum class SleepStage : int {
  Wake = 0,
  N1 = 1,
  N2 = 2,
  N3 = 3,
  Rem = 4,
  Unknown = 5,
};

inline constexpr int kNumStages = 5;

// Token -> stage table applied while reading annotation files. Tokens absent
// from the map resolve to Unknown, so the mapping is total over all inputs.
using StageMap = std::map<std::string, SleepStage>;

const std::string& stage_name(SleepStage s);
std::optional<SleepStage> stage_from_name(const std::string& name);

// AASM tokens (W, N1, N2, N3, R) mapping onto themselves.
StageMap aasm_stage_map();

// Rechtschaffen & Kales tokens; S3 and S4 both harmonize to N3 and MT
// (movement time) is left unscored.
StageMap rk_stage_map();

}  // namespace stagenet

#endif  // STAGENET_STAGES_HPP
