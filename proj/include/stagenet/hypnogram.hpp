#ifndef STAGENET_HYPNOGRAM_HPP
#define STAGENET_HYPNOGRAM_HPP

#include <string>
#include <vector>

#include "stagenet/stages.hpp"

namespace stagenet {

// Per-epoch stage labels over a recording, one entry per 30 s.
struct Hypnogram {
  std::vector<SleepStage> stages;

  std::size_t n_epochs() const { return stages.size(); }
  bool scored(std::size_t epoch) const {
    return stages[epoch] != SleepStage::Unknown;
  }
};

// Parse one stage token per line through the supplied map. Unrecognized
// tokens become Unknown; they are kept in place so the epoch grid stays
// contiguous, and callers mask them out of loss and metrics.
Hypnogram parse_hypnogram(const std::string& text, const StageMap& map);
Hypnogram load_hypnogram(const std::string& path, const StageMap& map);

// AASM-style token for file output (R for REM, ? for unscored epochs).
std::string stage_token(SleepStage s);

std::string format_hypnogram(const Hypnogram& hyp);

}  // namespace stagenet

#endif  // STAGENET_HYPNOGRAM_HPP
