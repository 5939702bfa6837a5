#include "stagenet/svg.hpp"

#include <sstream>

namespace stagenet::svg {

namespace {

// vertical display order, top to bottom
const int kLevel[5] = {0 /*W*/, 2 /*N1*/, 3 /*N2*/, 4 /*N3*/, 1 /*REM*/};
const char* kLevelName[5] = {"W", "REM", "N1", "N2", "N3"};

void draw_trace(std::ostringstream& os, const std::vector<SleepStage>& stages,
                double x0, double y0, double width, double row_h, const char* tag) {
  const double dx = width / static_cast<double>(stages.size());
  os << "<text x=\"" << x0 - 34 << "\" y=\"" << y0 + 2.5 * row_h
     << "\" font-size=\"13\" font-family=\"sans-serif\">" << tag << "</text>\n";
  for (int lvl = 0; lvl < 5; ++lvl) {
    const double y = y0 + lvl * row_h;
    os << "<text x=\"" << x0 - 6 << "\" y=\"" << y + 4
       << "\" font-size=\"9\" text-anchor=\"end\" font-family=\"sans-serif\">"
       << kLevelName[lvl] << "</text>\n";
    os << "<line x1=\"" << x0 << "\" y1=\"" << y << "\" x2=\"" << x0 + width << "\" y2=\""
       << y << "\" stroke=\"#dddddd\" stroke-width=\"0.5\"/>\n";
  }
  os << "<path d=\"";
  bool pen_down = false;
  for (std::size_t i = 0; i < stages.size(); ++i) {
    if (stages[i] == SleepStage::Unknown) {
      pen_down = false;
      continue;
    }
    const double y = y0 + kLevel[static_cast<int>(stages[i])] * row_h;
    const double xl = x0 + i * dx;
    const double xr = x0 + (i + 1) * dx;
    if (!pen_down) {
      os << "M" << xl << " " << y << " ";
      pen_down = true;
    } else {
      os << "L" << xl << " " << y << " ";
    }
    os << "L" << xr << " " << y << " ";
  }
  os << "\" fill=\"none\" stroke=\"#1f4f8f\" stroke-width=\"1.2\"/>\n";
}

}  // namespace

std::string render_hypnogram(const std::vector<SleepStage>& automatic,
                             const std::vector<SleepStage>* manual, int window_s) {
  const double width = 860, row_h = 18, trace_h = 5 * row_h, gap = 40;
  const int n_traces = manual != nullptr ? 2 : 1;
  const double height = 40 + n_traces * (trace_h + gap);

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"960\" height=\"" << height
     << "\" viewBox=\"0 0 960 " << height << "\">\n";
  os << "<text x=\"60\" y=\"20\" font-size=\"12\" font-family=\"sans-serif\">"
     << "hypnogram (" << window_s << " s per step, "
     << automatic.size() * static_cast<std::size_t>(window_s) / 60 << " min)</text>\n";
  draw_trace(os, automatic, 60, 40, width, row_h, "A");
  if (manual != nullptr) {
    draw_trace(os, *manual, 60, 40 + trace_h + gap, width, row_h, "M");
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace stagenet::svg
