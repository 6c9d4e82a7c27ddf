#include "unmask/svg.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "unmask/common.hpp"

namespace unmask {

namespace {

constexpr const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

const char* colour(std::size_t i) { return kPalette[i % (sizeof(kPalette) / sizeof(kPalette[0]))]; }

void open_svg(std::ostringstream& out, double w, double h) {
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(w) << "\" height=\"" << num(h)
      << "\" viewBox=\"0 0 " << num(w) << ' ' << num(h) << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
}

void text(std::ostringstream& out, double x, double y, const std::string& s, const char* anchor = "middle",
          double rotate = 0) {
  out << "<text x=\"" << num(x) << "\" y=\"" << num(y) << "\" text-anchor=\"" << anchor << '"';
  if (rotate != 0) out << " transform=\"rotate(" << num(rotate) << ' ' << num(x) << ' ' << num(y) << ")\"";
  out << '>' << xml_escape(s) << "</text>\n";
}

void axes(std::ostringstream& out, double left, double top, double pw, double ph) {
  for (int k = 0; k <= 4; ++k) {
    const double y = top + ph - ph * k / 4.0;
    out << "<line x1=\"" << num(left) << "\" y1=\"" << num(y) << "\" x2=\"" << num(left + pw) << "\" y2=\"" << num(y)
        << "\" stroke=\"#dddddd\"/>\n";
    text(out, left - 6, y + 4, num(k / 4.0), "end");
  }
  out << "<line x1=\"" << num(left) << "\" y1=\"" << num(top) << "\" x2=\"" << num(left) << "\" y2=\""
      << num(top + ph) << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << num(left) << "\" y1=\"" << num(top + ph) << "\" x2=\"" << num(left + pw) << "\" y2=\""
      << num(top + ph) << "\" stroke=\"black\"/>\n";
}

void legend(std::ostringstream& out, const std::vector<std::string>& names, double x, double y) {
  for (std::size_t i = 0; i < names.size(); ++i) {
    const double yy = y + 16.0 * static_cast<double>(i);
    out << "<rect x=\"" << num(x) << "\" y=\"" << num(yy - 9) << "\" width=\"10\" height=\"10\" fill=\"" << colour(i)
        << "\"/>\n";
    text(out, x + 14, yy, names[i], "start");
  }
}

}  // namespace

std::string xml_escape(const std::string& s) {
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

std::string render_bar_chart(const BarChart& chart) {
  const double left = 60, top = 40, ph = 260;
  const double bar_w = 10;
  const std::size_t ns = std::max<std::size_t>(1, chart.series.size());
  const double group_w = bar_w * static_cast<double>(ns) + 16;
  const double pw = std::max(200.0, group_w * static_cast<double>(chart.groups.size()));
  const double width = left + pw + 160, height = top + ph + 90;
  std::ostringstream out;
  open_svg(out, width, height);
  text(out, left + pw / 2, 20, chart.title);
  text(out, 16, top + ph / 2, chart.y_label, "middle", -90);
  axes(out, left, top, pw, ph);
  for (std::size_t g = 0; g < chart.groups.size(); ++g) {
    const double gx = left + 8 + group_w * static_cast<double>(g);
    const auto& vals = chart.groups[g].values;
    for (std::size_t s = 0; s < vals.size(); ++s) {
      const double v = std::clamp(vals[s], 0.0, 1.0);
      const double h = ph * v;
      out << "<rect x=\"" << num(gx + bar_w * static_cast<double>(s)) << "\" y=\"" << num(top + ph - h)
          << "\" width=\"" << num(bar_w - 1) << "\" height=\"" << num(h) << "\" fill=\"" << colour(s)
          << "\"><title>" << xml_escape(chart.groups[g].label) << ' '
          << xml_escape(s < chart.series.size() ? chart.series[s] : std::string()) << ": " << num(vals[s])
          << "</title></rect>\n";
    }
    const double cx = gx + bar_w * static_cast<double>(ns) / 2;
    text(out, cx, top + ph + 14, chart.groups[g].label, "end", -35);
  }
  legend(out, chart.series, left + pw + 20, top + 10);
  out << "</svg>\n";
  return out.str();
}

std::string render_line_chart(const LineChart& chart) {
  const double left = 60, top = 40, pw = 300, ph = 300;
  const double width = left + pw + 200, height = top + ph + 60;
  std::ostringstream out;
  open_svg(out, width, height);
  text(out, left + pw / 2, 20, chart.title);
  text(out, left + pw / 2, top + ph + 36, chart.x_label);
  text(out, 16, top + ph / 2, chart.y_label, "middle", -90);
  axes(out, left, top, pw, ph);
  for (int k = 0; k <= 4; ++k) text(out, left + pw * k / 4.0, top + ph + 16, num(k / 4.0));
  if (chart.diagonal) {
    out << "<line x1=\"" << num(left) << "\" y1=\"" << num(top + ph) << "\" x2=\"" << num(left + pw) << "\" y2=\""
        << num(top) << "\" stroke=\"#999999\" stroke-dasharray=\"4 4\"/>\n";
  }
  std::vector<std::string> names;
  for (std::size_t i = 0; i < chart.series.size(); ++i) {
    names.push_back(chart.series[i].label);
    out << "<polyline fill=\"none\" stroke=\"" << colour(i) << "\" stroke-width=\"1.5\" points=\"";
    bool first = true;
    for (const auto& [x, y] : chart.series[i].points) {
      if (!first) out << ' ';
      first = false;
      out << num(left + pw * std::clamp(x, 0.0, 1.0)) << ',' << num(top + ph - ph * std::clamp(y, 0.0, 1.0));
    }
    out << "\"/>\n";
  }
  legend(out, names, left + pw + 20, top + 10);
  out << "</svg>\n";
  return out.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(path.string() + ": cannot open for writing");
  out << body;
  if (!out) throw IoError(path.string() + ": write failed");
}

}  // namespace unmask
