#pragma once

#include <string>
#include <vector>

namespace mmcof {

enum class Colormap { Gray, Turbo };

// Min-max maps `values` to the colormap and writes an 8-bit PNG. A constant
// map renders uniform mid-gray (or the colormap's midpoint).
void write_heatmap(const std::vector<float>& values, int width, int height,
                   const std::string& path, Colormap colormap = Colormap::Gray);

}  // namespace mmcof
