#ifndef STAGENET_SVG_HPP
#define STAGENET_SVG_HPP

#include <string>
#include <vector>

#include "stagenet/stages.hpp"

namespace stagenet::svg {

// Step-plot rendering of an automatic hypnogram, with an optional manual
// reference trace stacked underneath. `window_s` is the duration of one
// entry. Unknown entries leave gaps.
std::string render_hypnogram(const std::vector<SleepStage>& automatic,
                             const std::vector<SleepStage>* manual, int window_s);

}  // namespace stagenet::svg

#endif  // STAGENET_SVG_HPP
