#include "hbac/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace hbac::plot {

namespace {

std::string num(double v, int digits = 2) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string tick(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
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

const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                          "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

}  // namespace

std::string line_chart_svg(const std::vector<Series>& series, const std::string& title, const std::string& x_label,
                           const std::string& y_label) {
  constexpr double W = 720, H = 420, L = 70, R = 200, T = 40, B = 50;
  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin, ymin = xmin, ymax = -xmin;
  for (const auto& s : series)
    for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
      if (!std::isfinite(s.y[i])) continue;
      xmin = std::min(xmin, s.x[i]);
      xmax = std::max(xmax, s.x[i]);
      ymin = std::min(ymin, s.y[i]);
      ymax = std::max(ymax, s.y[i]);
    }
  if (!std::isfinite(xmin)) xmin = 0, xmax = 1, ymin = 0, ymax = 1;
  if (xmax == xmin) xmax = xmin + 1;
  if (ymax == ymin) ymax = ymin + 1;
  const double pw = W - L - R, ph = H - T - B;
  auto sx = [&](double x) { return L + (x - xmin) / (xmax - xmin) * pw; };
  auto sy = [&](double y) { return T + ph - (y - ymin) / (ymax - ymin) * ph; };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W
     << ' ' << H << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\">"
     << escape(title) << "</text>\n";
  os << "<rect class=\"frame\" x=\"" << L << "\" y=\"" << T << "\" width=\"" << pw << "\" height=\"" << ph
     << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double fx = xmin + (xmax - xmin) * i / 4.0, fy = ymin + (ymax - ymin) * i / 4.0;
    os << "<text x=\"" << num(sx(fx)) << "\" y=\"" << num(T + ph + 18)
       << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" << tick(fx) << "</text>\n";
    os << "<text x=\"" << num(L - 6) << "\" y=\"" << num(sy(fy) + 4)
       << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" << tick(fy) << "</text>\n";
  }
  os << "<text x=\"" << num(L + pw / 2) << "\" y=\"" << num(H - 10)
     << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" << escape(x_label) << "</text>\n";
  os << "<text x=\"16\" y=\"" << num(T + ph / 2) << "\" transform=\"rotate(-90 16 " << num(T + ph / 2)
     << ")\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" << escape(y_label) << "</text>\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const char* color = kPalette[k % std::size(kPalette)];
    os << "<polyline class=\"series\" fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
      if (!std::isfinite(s.y[i])) continue;
      os << num(sx(s.x[i])) << ',' << num(sy(s.y[i])) << ' ';
    }
    os << "\"/>\n";
    const double ly = T + 14.0 * static_cast<double>(k) + 8;
    os << "<line x1=\"" << num(W - R + 10) << "\" y1=\"" << num(ly) << "\" x2=\"" << num(W - R + 30) << "\" y2=\""
       << num(ly) << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << num(W - R + 35) << "\" y=\"" << num(ly + 4)
       << "\" font-family=\"sans-serif\" font-size=\"11\">" << escape(s.label) << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

std::string heatmap_svg(const std::vector<std::vector<double>>& values, const std::vector<std::string>& labels,
                        const std::string& title) {
  const std::size_t n = values.size();
  constexpr double cell = 60, L = 90, T = 60;
  const double W = L + cell * static_cast<double>(n) + 20, H = T + cell * static_cast<double>(n) + 60;
  double vmax = 0.0;
  for (const auto& row : values)
    for (double v : row) vmax = std::max(vmax, v);

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W
     << ' ' << H << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\">"
     << escape(title) << "</text>\n";
  for (std::size_t i = 0; i < n; ++i) {
    const std::string label = i < labels.size() ? escape(labels[i]) : std::to_string(i);
    os << "<text x=\"" << num(L - 6) << "\" y=\"" << num(T + cell * (i + 0.5) + 4)
       << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"12\">" << label << "</text>\n";
    os << "<text x=\"" << num(L + cell * (i + 0.5)) << "\" y=\"" << num(T + cell * n + 18)
       << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" << label << "</text>\n";
    for (std::size_t j = 0; j < values[i].size(); ++j) {
      const double v = values[i][j];
      const double t = vmax > 0 ? v / vmax : 0.0;
      const int shade = static_cast<int>(std::lround(255 - 200 * t));
      os << "<rect class=\"cell\" data-row=\"" << i << "\" data-col=\"" << j << "\" x=\"" << num(L + cell * j)
         << "\" y=\"" << num(T + cell * i) << "\" width=\"" << cell << "\" height=\"" << cell << "\" fill=\"rgb("
         << shade << ',' << shade << ",255)\" stroke=\"white\"/>\n";
      os << "<text x=\"" << num(L + cell * (j + 0.5)) << "\" y=\"" << num(T + cell * (i + 0.5) + 4)
         << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">"
         << (v == std::floor(v) && std::abs(v) < 1e15 ? std::to_string(static_cast<long long>(v)) : tick(v))
         << "</text>\n";
    }
  }
  os << "<text x=\"" << num(L + cell * n / 2) << "\" y=\"" << num(H - 14)
     << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">predicted</text>\n";
  os << "<text x=\"16\" y=\"" << num(T + cell * n / 2) << "\" transform=\"rotate(-90 16 " << num(T + cell * n / 2)
     << ")\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">true</text>\n";
  os << "</svg>\n";
  return os.str();
}

}  // namespace hbac::plot
