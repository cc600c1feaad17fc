#pragma once

#include <string>
#include <vector>

#include "ude/motion/types.hpp"

namespace ude::cli {

struct Series {
    std::string name;
    std::vector<double> values;
};

// Static SVG line chart; `comment` lands in an XML comment at the top.
std::string line_plot_svg(const std::string& title, const std::vector<Series>& series, const std::string& comment);

// Root trajectory seen from above plus one height strip per joint.
std::string motion_plot_svg(const motion::MotionSequence& m, const std::string& comment);

}  // namespace ude::cli
