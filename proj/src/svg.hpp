#pragma once

// Self-contained deterministic SVG plots: matrix heatmaps with labels and a
// legend, and 2D scatter plots colored by cluster.

#include <string>
#include <vector>

#include "tensor.hpp"

namespace exbehrt {

// Cells get opacity proportional to value / max; an all-zero matrix renders
// every cell at the minimum opacity. Labels may be empty.
std::string heatmap_svg(const Mat& values, const std::vector<std::string>& row_labels,
                        const std::vector<std::string>& col_labels, const std::string& title);

// One point per row of xy (n x 2); cluster -1 renders gray (noise).
std::string scatter_svg(const Mat& xy, const std::vector<int>& clusters, const std::string& title);

void write_text_file(const std::string& path, const std::string& content);

} // namespace exbehrt
