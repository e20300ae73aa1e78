#include "owdet/svgplot.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace owdet {

void write_svg_chart(const std::filesystem::path& path, const std::string& title,
                     const std::string& x_label, const std::string& y_label,
                     const std::vector<PlotSeries>& series) {
    const int W = 640, H = 420;
    const int ml = 70, mr = 30, mt = 40, mb = 55;
    const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

    double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    for (const auto& s : series)
        for (size_t i = 0; i < s.x.size(); ++i) {
            xmin = std::min(xmin, s.x[i]);
            xmax = std::max(xmax, s.x[i]);
            ymin = std::min(ymin, s.y[i]);
            ymax = std::max(ymax, s.y[i]);
        }
    if (xmin > xmax) { xmin = 0; xmax = 1; }
    if (ymin > ymax) { ymin = 0; ymax = 1; }
    if (xmax == xmin) xmax = xmin + 1;
    if (ymax == ymin) ymax = ymin + 1;
    ymin = std::min(ymin, 0.0);
    const double ypad = 0.05 * (ymax - ymin);
    ymax += ypad;

    auto px = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * (W - ml - mr); };
    auto py = [&](double y) { return H - mb - (y - ymin) / (ymax - ymin) * (H - mt - mb); };

    std::ofstream os(path);
    if (!os) throw std::runtime_error("svg: cannot open " + path.string());
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
       << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<text x=\"" << W / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"15\">" << title
       << "</text>\n";
    // axes
    os << "<line x1=\"" << ml << "\" y1=\"" << H - mb << "\" x2=\"" << W - mr << "\" y2=\""
       << H - mb << "\" stroke=\"black\"/>\n";
    os << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << H - mb
       << "\" stroke=\"black\"/>\n";
    for (int i = 0; i <= 5; ++i) {
        const double xv = xmin + (xmax - xmin) * i / 5.0;
        const double yv = ymin + (ymax - ymin) * i / 5.0;
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.3g", xv);
        os << "<text x=\"" << px(xv) << "\" y=\"" << H - mb + 18
           << "\" text-anchor=\"middle\">" << buf << "</text>\n";
        std::snprintf(buf, sizeof buf, "%.3g", yv);
        os << "<text x=\"" << ml - 8 << "\" y=\"" << py(yv) + 4 << "\" text-anchor=\"end\">" << buf
           << "</text>\n";
        os << "<line x1=\"" << ml << "\" y1=\"" << py(yv) << "\" x2=\"" << W - mr << "\" y2=\""
           << py(yv) << "\" stroke=\"#dddddd\"/>\n";
    }
    os << "<text x=\"" << (ml + W - mr) / 2 << "\" y=\"" << H - 12
       << "\" text-anchor=\"middle\">" << x_label << "</text>\n";
    os << "<text x=\"16\" y=\"" << (mt + H - mb) / 2
       << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " << (mt + H - mb) / 2 << ")\">"
       << y_label << "</text>\n";

    for (size_t s = 0; s < series.size(); ++s) {
        const char* color = colors[s % 6];
        os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
        for (size_t i = 0; i < series[s].x.size(); ++i)
            os << px(series[s].x[i]) << ',' << py(series[s].y[i]) << ' ';
        os << "\"/>\n";
        for (size_t i = 0; i < series[s].x.size(); ++i)
            os << "<circle cx=\"" << px(series[s].x[i]) << "\" cy=\"" << py(series[s].y[i])
               << "\" r=\"3\" fill=\"" << color << "\"/>\n";
        os << "<text x=\"" << W - mr - 6 << "\" y=\"" << mt + 16 * (s + 1)
           << "\" text-anchor=\"end\" fill=\"" << color << "\">" << series[s].name << "</text>\n";
    }
    os << "</svg>\n";
}

} // namespace owdet
