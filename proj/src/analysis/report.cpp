#include "deepinsert/analysis/report.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

#include "deepinsert/common/io.hpp"

namespace deepinsert::analysis {

using common::format_number;

namespace {

std::string escape_xml(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '<':
                out += "&lt;";
                break;
            case '>':
                out += "&gt;";
                break;
            case '&':
                out += "&amp;";
                break;
            case '"':
                out += "&quot;";
                break;
            default:
                out += c;
        }
    }
    return out;
}

}  // namespace

std::string matrix_csv(const numerics::MatrixD& m, const std::string& corner,
                       const std::vector<std::string>& row_labels, const std::vector<std::string>& col_labels) {
    if (row_labels.size() != m.rows() || col_labels.size() != m.cols()) {
        throw std::invalid_argument("matrix_csv: label counts do not match " + m.shape_string());
    }
    std::ostringstream out;
    out << corner;
    for (const auto& c : col_labels) out << ',' << c;
    out << '\n';
    for (std::size_t r = 0; r < m.rows(); ++r) {
        out << row_labels[r];
        for (std::size_t c = 0; c < m.cols(); ++c) out << ',' << format_number(m(r, c));
        out << '\n';
    }
    return out.str();
}

std::string heatmap_svg(const numerics::MatrixD& m, const std::string& title, const std::string& row_axis,
                        const std::string& col_axis) {
    constexpr int cell = 24, margin = 60;
    const int width = margin * 2 + cell * static_cast<int>(m.cols());
    const int height = margin * 2 + cell * static_cast<int>(m.rows());
    double lo = 0.0, hi = 0.0;
    if (!m.values().empty()) {
        const auto [mn, mx] = std::minmax_element(m.values().begin(), m.values().end());
        lo = *mn;
        hi = *mx;
    }
    std::ostringstream out;
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
        << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
    out << "<text x=\"" << margin << "\" y=\"20\" font-size=\"14\">" << escape_xml(title) << "</text>\n";
    out << "<text x=\"" << margin << "\" y=\"" << height - 15 << "\">" << escape_xml(col_axis) << "</text>\n";
    out << "<text x=\"15\" y=\"" << margin - 10 << "\">" << escape_xml(row_axis) << "</text>\n";
    for (std::size_t r = 0; r < m.rows(); ++r) {
        out << "<text x=\"" << margin - 20 << "\" y=\"" << margin + cell * static_cast<int>(r) + 16 << "\">" << r
            << "</text>\n";
        for (std::size_t c = 0; c < m.cols(); ++c) {
            const double t = hi > lo ? (m(r, c) - lo) / (hi - lo) : 0.0;
            const int shade = 255 - static_cast<int>(t * 230.0);
            out << "<rect x=\"" << margin + cell * static_cast<int>(c) << "\" y=\""
                << margin + cell * static_cast<int>(r) << "\" width=\"" << cell << "\" height=\"" << cell
                << "\" fill=\"rgb(" << shade << ',' << shade << ',' << shade << ")\"><title>" << format_number(m(r, c))
                << "</title></rect>\n";
        }
    }
    for (std::size_t c = 0; c < m.cols(); ++c) {
        out << "<text x=\"" << margin + cell * static_cast<int>(c) + 6 << "\" y=\"" << margin - 5 << "\">" << c
            << "</text>\n";
    }
    out << "<text x=\"" << width - margin + 5 << "\" y=\"" << margin + 10 << "\">max " << format_number(hi)
        << "</text>\n";
    out << "<text x=\"" << width - margin + 5 << "\" y=\"" << margin + 25 << "\">min " << format_number(lo)
        << "</text>\n";
    out << "</svg>\n";
    return out.str();
}

std::string line_chart_svg(const std::string& title, const std::string& x_label, const std::vector<double>& x,
                           const std::vector<Series>& series) {
    constexpr int width = 640, height = 400, margin = 60;
    static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};
    if (x.empty()) throw std::invalid_argument("line_chart_svg: no points");
    const auto [x_lo_it, x_hi_it] = std::minmax_element(x.begin(), x.end());
    const double x_lo = *x_lo_it, x_span = std::max(*x_hi_it - x_lo, 1e-12);
    auto px = [&](double v) { return margin + (v - x_lo) / x_span * (width - 2 * margin); };

    std::ostringstream out;
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
        << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
    out << "<text x=\"" << margin << "\" y=\"20\" font-size=\"14\">" << escape_xml(title) << "</text>\n";
    out << "<line x1=\"" << margin << "\" y1=\"" << height - margin << "\" x2=\"" << width - margin << "\" y2=\""
        << height - margin << "\" stroke=\"black\"/>\n";
    out << "<text x=\"" << width / 2 << "\" y=\"" << height - 20 << "\">" << escape_xml(x_label) << "</text>\n";
    for (double v : x) {
        out << "<text x=\"" << px(v) - 4 << "\" y=\"" << height - margin + 15 << "\">" << format_number(v)
            << "</text>\n";
    }
    for (std::size_t s = 0; s < series.size(); ++s) {
        const auto& ser = series[s];
        if (ser.y.size() != x.size()) throw std::invalid_argument("line_chart_svg: series '" + ser.name + "' length");
        const auto [lo_it, hi_it] = std::minmax_element(ser.y.begin(), ser.y.end());
        const double lo = *lo_it, span = std::max(*hi_it - lo, 1e-12);
        const char* color = colors[s % std::size(colors)];
        out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double py = height - margin - (ser.y[i] - lo) / span * (height - 2 * margin);
            out << px(x[i]) << ',' << py << ' ';
        }
        out << "\"/>\n";
        out << "<text x=\"" << width - margin - 150 << "\" y=\"" << 40 + 15 * static_cast<int>(s) << "\" fill=\""
            << color << "\">" << escape_xml(ser.name) << " [" << format_number(lo) << ", " << format_number(*hi_it)
            << "]</text>\n";
    }
    out << "</svg>\n";
    return out.str();
}

}  // namespace deepinsert::analysis
