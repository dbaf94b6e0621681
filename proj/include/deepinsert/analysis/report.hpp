#pragma once

#include <string>
#include <vector>

#include "deepinsert/numerics/matrix.hpp"

namespace deepinsert::analysis {

// Header: corner label then col_labels; each line: row label then values.
std::string matrix_csv(const numerics::MatrixD& m, const std::string& corner,
                       const std::vector<std::string>& row_labels, const std::vector<std::string>& col_labels);

// Grayscale heatmap, darker = larger; values are scaled to [min, max].
std::string heatmap_svg(const numerics::MatrixD& m, const std::string& title, const std::string& row_axis,
                        const std::string& col_axis);

struct Series {
    std::string name;
    std::vector<double> y;
};

// Shared x axis; each series is scaled to its own range so curves with
// different units can be overlaid.
std::string line_chart_svg(const std::string& title, const std::string& x_label, const std::vector<double>& x,
                           const std::vector<Series>& series);

}  // namespace deepinsert::analysis
