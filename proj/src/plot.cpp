#include "ewel/plot.hpp"

#include "ewel/errors.hpp"
#include "ewel/format.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <sstream>

namespace ewel {

namespace {

std::string fixed(double v, int digits)
{
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

std::string xml_escape(const std::string& s)
{
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

std::vector<std::string> split_csv_line(const std::string& line)
{
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

} // namespace

RateFit plot_fit(const std::vector<RatePoint>& points)
{
  std::vector<RatePoint> usable;
  for (const RatePoint& p : points)
    if (p.h > 0.0 && p.error > 0.0)
      usable.push_back(p);
  if (usable.size() >= 4)
    return fit_rate(points);
  if (usable.size() < 2)
    throw NumericalFault("plot: need at least two points with positive h and error");
  RateFit fit;
  fit.points = usable;
  double mx = 0.0;
  double my = 0.0;
  for (const RatePoint& p : usable) {
    mx += std::log(p.h);
    my += std::log(p.error);
  }
  const double n = static_cast<double>(usable.size());
  mx /= n;
  my /= n;
  double sxx = 0.0;
  double sxy = 0.0;
  for (const RatePoint& p : usable) {
    sxx += (std::log(p.h) - mx) * (std::log(p.h) - mx);
    sxy += (std::log(p.h) - mx) * (std::log(p.error) - my);
  }
  if (!(sxx > 0.0))
    throw NumericalFault("plot: degenerate h range");
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  fit.r_squared = 1.0;
  return fit;
}

std::string emit_plot(const std::vector<RatePoint>& points, const PlotOptions& options)
{
  const RateFit fit = plot_fit(points);
  const std::vector<RatePoint>& pts = fit.points;

  double hx0 = INFINITY, hx1 = -INFINITY, ey0 = INFINITY, ey1 = -INFINITY;
  for (const RatePoint& p : pts) {
    hx0 = std::min(hx0, std::log10(p.h));
    hx1 = std::max(hx1, std::log10(p.h));
    ey0 = std::min(ey0, std::log10(p.error));
    ey1 = std::max(ey1, std::log10(p.error));
  }
  if (!(hx1 > hx0) || !(ey1 > ey0))
    throw NumericalFault("plot: degenerate axis range");
  const double px = 0.08 * (hx1 - hx0);
  const double py = 0.12 * (ey1 - ey0);
  hx0 -= px;
  hx1 += px;
  ey0 -= py;
  ey1 += py;

  const double w = options.width;
  const double h = options.height;
  const double left = 80, right = w - 24, top = 40, bottom = h - 56;
  const auto sx = [&](double lx) { return left + (lx - hx0) / (hx1 - hx0) * (right - left); };
  const auto sy = [&](double ly) { return bottom - (ly - ey0) / (ey1 - ey0) * (bottom - top); };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fixed(w, 0) << "\" height=\"" << fixed(h, 0)
     << "\" viewBox=\"0 0 " << fixed(w, 0) << ' ' << fixed(h, 0) << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  if (options.timestamp) {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
    os << "<!-- rendered " << buf << " -->\n";
  }
  os << "<rect x=\"0\" y=\"0\" width=\"" << fixed(w, 0) << "\" height=\"" << fixed(h, 0) << "\" fill=\"white\"/>\n";
  if (!options.title.empty())
    os << "<text x=\"" << fixed(w / 2, 1) << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">"
       << xml_escape(options.title) << "</text>\n";

  // decade grid and tick labels
  os << "<g stroke=\"#dddddd\" stroke-width=\"1\">\n";
  for (int k = static_cast<int>(std::ceil(hx0)); k <= static_cast<int>(std::floor(hx1)); ++k)
    os << "<line x1=\"" << fixed(sx(k), 2) << "\" y1=\"" << fixed(top, 2) << "\" x2=\"" << fixed(sx(k), 2)
       << "\" y2=\"" << fixed(bottom, 2) << "\"/>\n";
  for (int k = static_cast<int>(std::ceil(ey0)); k <= static_cast<int>(std::floor(ey1)); ++k)
    os << "<line x1=\"" << fixed(left, 2) << "\" y1=\"" << fixed(sy(k), 2) << "\" x2=\"" << fixed(right, 2)
       << "\" y2=\"" << fixed(sy(k), 2) << "\"/>\n";
  os << "</g>\n<g fill=\"#333333\">\n";
  for (int k = static_cast<int>(std::ceil(hx0)); k <= static_cast<int>(std::floor(hx1)); ++k)
    os << "<text x=\"" << fixed(sx(k), 2) << "\" y=\"" << fixed(bottom + 18, 2) << "\" text-anchor=\"middle\">1e"
       << k << "</text>\n";
  for (int k = static_cast<int>(std::ceil(ey0)); k <= static_cast<int>(std::floor(ey1)); ++k)
    os << "<text x=\"" << fixed(left - 8, 2) << "\" y=\"" << fixed(sy(k) + 4, 2) << "\" text-anchor=\"end\">1e"
       << k << "</text>\n";
  os << "<text x=\"" << fixed((left + right) / 2, 1) << "\" y=\"" << fixed(h - 14, 1)
     << "\" text-anchor=\"middle\">h</text>\n";
  os << "<text x=\"18\" y=\"" << fixed((top + bottom) / 2, 1) << "\" text-anchor=\"middle\" transform=\"rotate(-90 18 "
     << fixed((top + bottom) / 2, 1) << ")\">error</text>\n</g>\n";
  os << "<rect x=\"" << fixed(left, 2) << "\" y=\"" << fixed(top, 2) << "\" width=\"" << fixed(right - left, 2)
     << "\" height=\"" << fixed(bottom - top, 2) << "\" fill=\"none\" stroke=\"black\"/>\n";

  // clip lines to the frame
  os << "<clipPath id=\"frame\"><rect x=\"" << fixed(left, 2) << "\" y=\"" << fixed(top, 2) << "\" width=\""
     << fixed(right - left, 2) << "\" height=\"" << fixed(bottom - top, 2) << "\"/></clipPath>\n";
  os << "<g clip-path=\"url(#frame)\" fill=\"none\" stroke-width=\"1.5\">\n";
  const double a0 = std::log10(pts.front().h);
  const double a1 = std::log10(pts.back().h);
  const double lo = std::min(a0, a1);
  const double hi = std::max(a0, a1);
  const auto line = [&](double slope, double offset, const char* color, const char* dash, const char* cls) {
    // log10 e = slope log10 h + offset
    os << "<line class=\"" << cls << "\" x1=\"" << fixed(sx(lo), 2) << "\" y1=\"" << fixed(sy(slope * lo + offset), 2)
       << "\" x2=\"" << fixed(sx(hi), 2) << "\" y2=\"" << fixed(sy(slope * hi + offset), 2) << "\" stroke=\"" << color
       << '"' << (dash[0] ? std::string(" stroke-dasharray=\"") + dash + "\"" : std::string()) << "/>\n";
  };
  const double fit_offset = fit.intercept / std::log(10.0);
  line(fit.slope, fit_offset, "#c0392b", "", "fit");
  // guides pass through the fitted value at the largest h
  const double anchor = fit.slope * hi + fit_offset;
  line(0.5 * options.gamma, anchor - 0.5 * options.gamma * hi, "#2471a3", "6 4", "guide-half-gamma");
  line(1.0, anchor - hi, "#7d3c98", "2 3", "guide-one");
  os << "</g>\n<g fill=\"#c0392b\">\n";
  for (const RatePoint& p : pts)
    os << "<circle class=\"point\" cx=\"" << fixed(sx(std::log10(p.h)), 2) << "\" cy=\""
       << fixed(sy(std::log10(p.error)), 2) << "\" r=\"4\"/>\n";
  os << "</g>\n";
  const double lx = left + 12;
  os << "<g font-size=\"12\">\n"
     << "<text class=\"slope\" x=\"" << fixed(lx, 1) << "\" y=\"" << fixed(top + 18, 1) << "\" fill=\"#c0392b\">fitted slope "
     << fixed(fit.slope, 3) << "</text>\n"
     << "<text x=\"" << fixed(lx, 1) << "\" y=\"" << fixed(top + 34, 1) << "\" fill=\"#2471a3\">slope gamma/2 = "
     << fixed(0.5 * options.gamma, 3) << "</text>\n"
     << "<text x=\"" << fixed(lx, 1) << "\" y=\"" << fixed(top + 50, 1) << "\" fill=\"#7d3c98\">slope 1</text>\n"
     << "</g>\n</svg>\n";
  return os.str();
}

std::vector<RatePoint> read_sweep_series(const std::string& csv_text, std::string& series)
{
  std::istringstream is(csv_text);
  std::string line;
  if (!std::getline(is, line))
    throw ConfigError("sweep csv: empty file");
  const std::vector<std::string> header = split_csv_line(line);
  const auto column = [&](const std::string& name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end())
      throw ConfigError("sweep csv: missing column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t ch = column("h");
  const std::size_t cf = column("test_function");
  const std::size_t ce = column("error");
  const std::size_t cs = column("stderr");
  std::vector<RatePoint> out;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty())
      continue;
    const std::vector<std::string> cells = split_csv_line(line);
    if (cells.size() != header.size())
      throw ConfigError("sweep csv line " + std::to_string(line_no) + ": wrong number of cells");
    if (series.empty())
      series = cells[cf];
    if (cells[cf] != series)
      continue;
    try {
      out.push_back({ std::stod(cells[ch]), std::stod(cells[ce]), std::stod(cells[cs]) });
    } catch (const std::exception&) {
      throw ConfigError("sweep csv line " + std::to_string(line_no) + ": bad number");
    }
  }
  return out;
}

} // namespace ewel
