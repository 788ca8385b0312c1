#include "svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "error.hpp"

namespace exbehrt {

namespace {

constexpr double kMinOpacity = 0.06;

std::string escape(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

// Fixed palette; cluster ids index it modulo size, noise is gray.
const char* kPalette[] = {"#4878cf", "#d65f5f", "#6acc65", "#b47cc7",
                          "#c4ad66", "#77bedb", "#ee854a", "#8c613c"};

} // namespace

std::string heatmap_svg(const Mat& values, const std::vector<std::string>& row_labels,
                        const std::vector<std::string>& col_labels, const std::string& title) {
    for (double v : values.a)
        if (!std::isfinite(v)) throw usage_error("heatmap input must be finite");

    const int cell = 14;
    const int left = row_labels.empty() ? 10 : 110;
    const int top = 46;
    const int legend_h = 34;
    const int width = left + values.cols * cell + 20;
    const int height = top + values.rows * cell + (col_labels.empty() ? 10 : 60) + legend_h;

    double vmax = 0.0;
    for (double v : values.a) vmax = std::max(vmax, std::fabs(v));

    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
       << "\" font-family=\"monospace\" font-size=\"10\">\n";
    os << "<rect width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n";
    os << "<text x=\"10\" y=\"18\" font-size=\"13\">" << escape(title) << "</text>\n";

    for (int r = 0; r < values.rows; ++r) {
        for (int c = 0; c < values.cols; ++c) {
            const double v = std::fabs(values.at(r, c));
            const double opacity = vmax > 0.0 ? kMinOpacity + (1.0 - kMinOpacity) * (v / vmax)
                                              : kMinOpacity;
            os << "<rect x=\"" << left + c * cell << "\" y=\"" << top + r * cell << "\" width=\""
               << cell - 1 << "\" height=\"" << cell - 1 << "\" fill=\"#31688e\" fill-opacity=\""
               << num(opacity) << "\"><title>" << num(values.at(r, c)) << "</title></rect>\n";
        }
    }

    for (size_t r = 0; r < row_labels.size() && static_cast<int>(r) < values.rows; ++r)
        os << "<text x=\"" << left - 6 << "\" y=\"" << top + static_cast<int>(r) * cell + 10
           << "\" text-anchor=\"end\">" << escape(row_labels[r]) << "</text>\n";
    for (size_t c = 0; c < col_labels.size() && static_cast<int>(c) < values.cols; ++c)
        os << "<text x=\"" << left + static_cast<int>(c) * cell + 4 << "\" y=\""
           << top + values.rows * cell + 8 << "\" transform=\"rotate(55 "
           << left + static_cast<int>(c) * cell + 4 << ' ' << top + values.rows * cell + 8
           << ")\">" << escape(col_labels[c]) << "</text>\n";

    const int ly = height - legend_h + 8;
    os << "<text x=\"10\" y=\"" << ly + 10 << "\">0</text>\n";
    for (int i = 0; i < 10; ++i)
        os << "<rect x=\"" << 24 + i * 14 << "\" y=\"" << ly << "\" width=\"13\" height=\"13\" "
           << "fill=\"#31688e\" fill-opacity=\"" << num(kMinOpacity + (1.0 - kMinOpacity) * (i / 9.0))
           << "\"/>\n";
    os << "<text x=\"" << 24 + 10 * 14 + 4 << "\" y=\"" << ly + 10 << "\">" << num(vmax)
       << "</text>\n";
    os << "</svg>\n";
    return os.str();
}

std::string scatter_svg(const Mat& xy, const std::vector<int>& clusters, const std::string& title) {
    if (xy.cols != 2) throw usage_error("scatter input must have two columns");
    if (clusters.size() != static_cast<size_t>(xy.rows))
        throw usage_error("scatter cluster labels must match point count");
    for (double v : xy.a)
        if (!std::isfinite(v)) throw usage_error("scatter input must be finite");

    const int width = 520, height = 520, pad = 40;
    double xmin = 0, xmax = 1, ymin = 0, ymax = 1;
    if (xy.rows > 0) {
        xmin = xmax = xy.at(0, 0);
        ymin = ymax = xy.at(0, 1);
        for (int r = 0; r < xy.rows; ++r) {
            xmin = std::min(xmin, xy.at(r, 0));
            xmax = std::max(xmax, xy.at(r, 0));
            ymin = std::min(ymin, xy.at(r, 1));
            ymax = std::max(ymax, xy.at(r, 1));
        }
    }
    const double xspan = xmax > xmin ? xmax - xmin : 1.0;
    const double yspan = ymax > ymin ? ymax - ymin : 1.0;

    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
       << "\" font-family=\"monospace\" font-size=\"11\">\n";
    os << "<rect width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n";
    os << "<text x=\"10\" y=\"20\" font-size=\"13\">" << escape(title) << "</text>\n";
    for (int r = 0; r < xy.rows; ++r) {
        const double px = pad + (xy.at(r, 0) - xmin) / xspan * (width - 2 * pad);
        const double py = height - pad - (xy.at(r, 1) - ymin) / yspan * (height - 2 * pad);
        const int c = clusters[r];
        const char* fill = c < 0 ? "#9a9a9a" : kPalette[c % 8];
        os << "<circle cx=\"" << num(px) << "\" cy=\"" << num(py) << "\" r=\"3\" fill=\"" << fill
           << "\" fill-opacity=\"0.8\"><title>cluster " << c << "</title></circle>\n";
    }
    os << "</svg>\n";
    return os.str();
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw data_error("cannot open for writing: " + path);
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw data_error("write failed: " + path);
}

} // namespace exbehrt
