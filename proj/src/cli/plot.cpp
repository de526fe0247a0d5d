#include "gmpslab/cli/plot.hpp"

#include "gmpslab/error.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>

namespace gmpslab::cli {

std::vector<Curve> learning_curves(const std::vector<MetricsRecord>& records) {
  // run id -> iteration -> (steps, post return) over seeds
  std::map<std::string, std::map<int, std::vector<std::pair<double, double>>>> pooled;
  for (const auto& r : records) {
    if (!r.post_return) continue;
    pooled[r.run_id][r.iteration].emplace_back(static_cast<double>(r.env_steps), *r.post_return);
  }
  std::vector<Curve> out;
  for (const auto& [name, by_iter] : pooled) {
    Curve c{name, {}};
    for (const auto& [it, vals] : by_iter) {
      CurvePoint p;
      p.n = static_cast<int>(vals.size());
      for (const auto& [x, y] : vals) {
        p.x += x / p.n;
        p.mean += y / p.n;
      }
      if (p.n > 1) {
        double ss = 0.0;
        for (const auto& v : vals) ss += (v.second - p.mean) * (v.second - p.mean);
        p.se = std::sqrt(ss / (p.n - 1)) / std::sqrt(static_cast<double>(p.n));
      }
      c.points.push_back(p);
    }
    out.push_back(std::move(c));
  }
  return out;
}

namespace {

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf"};

std::string escape(const std::string& s) {
  std::string out;
  for (char ch : s) {
    switch (ch) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += ch;
    }
  }
  return out;
}

// Inside an XML comment "--" is not allowed.
std::string comment_safe(std::string s) {
  for (std::size_t p; (p = s.find("--")) != std::string::npos;) s.replace(p, 2, "- ");
  return s;
}

}  // namespace

std::string render_svg(const std::vector<Curve>& curves, const std::string& title) {
  const double W = 720, H = 440, left = 70, right = 180, top = 40, bottom = 50;
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& c : curves) {
    for (const auto& p : c.points) {
      x0 = std::min(x0, p.x);
      x1 = std::max(x1, p.x);
      y0 = std::min(y0, p.mean - p.se);
      y1 = std::max(y1, p.mean + p.se);
    }
  }
  if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 == x0) x0 -= 0.5, x1 += 0.5;
  if (y1 == y0) y0 -= 0.5, y1 += 0.5;
  const double pw = W - left - right, ph = H - top - bottom;
  auto sx = [&](double x) { return left + (x - x0) / (x1 - x0) * pw; };
  auto sy = [&](double y) { return top + (y1 - y) / (y1 - y0) * ph; };

  std::string svg = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" viewBox=\"0 0 {} {}\" "
      "font-family=\"sans-serif\" font-size=\"12\">\n",
      W, H, W, H);
  svg += "<!-- data\nseries\tx_env_steps\tmean_post_return\tstd_error\tseeds\n";
  for (const auto& c : curves) {
    for (const auto& p : c.points) svg += fmt::format("{}\t{}\t{}\t{}\t{}\n", comment_safe(c.name), p.x, p.mean, p.se, p.n);
  }
  svg += "-->\n";
  svg += fmt::format("<rect x=\"0\" y=\"0\" width=\"{}\" height=\"{}\" fill=\"white\"/>\n", W, H);
  svg += fmt::format("<text x=\"{}\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n", left + pw / 2,
                     escape(title));
  svg += fmt::format("<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#444\"/>\n", left, top,
                     pw, ph);
  for (int k = 0; k <= 4; ++k) {
    const double xv = x0 + (x1 - x0) * k / 4.0, yv = y0 + (y1 - y0) * k / 4.0;
    svg += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"middle\">{:.3g}</text>\n", sx(xv), top + ph + 16, xv);
    svg += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"end\">{:.3g}</text>\n", left - 6, sy(yv) + 4, yv);
  }
  svg += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">environment steps</text>\n", left + pw / 2, H - 10);
  svg += fmt::format(
      "<text x=\"16\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {})\">post-update return</text>\n",
      top + ph / 2, top + ph / 2);

  for (std::size_t i = 0; i < curves.size(); ++i) {
    const auto& c = curves[i];
    const char* color = kPalette[i % std::size(kPalette)];
    std::string upper, lower, line;
    for (const auto& p : c.points) {
      upper += fmt::format("{:.2f},{:.2f} ", sx(p.x), sy(p.mean + p.se));
      line += fmt::format("{:.2f},{:.2f} ", sx(p.x), sy(p.mean));
    }
    for (auto it = c.points.rbegin(); it != c.points.rend(); ++it) {
      lower += fmt::format("{:.2f},{:.2f} ", sx(it->x), sy(it->mean - it->se));
    }
    svg += fmt::format("<g class=\"series\" data-name=\"{}\">\n", escape(c.name));
    svg += fmt::format("<polygon points=\"{}{}\" fill=\"{}\" fill-opacity=\"0.2\" stroke=\"none\"/>\n", upper, lower, color);
    svg += fmt::format("<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"2\"/>\n", line, color);
    for (const auto& p : c.points) {
      svg += fmt::format("<circle cx=\"{:.2f}\" cy=\"{:.2f}\" r=\"2.5\" fill=\"{}\"/>\n", sx(p.x), sy(p.mean), color);
    }
    svg += "</g>\n";
    const double ly = top + 10 + 20.0 * static_cast<double>(i);
    svg += fmt::format("<g class=\"legend\"><rect x=\"{}\" y=\"{}\" width=\"14\" height=\"4\" fill=\"{}\"/>"
                       "<text x=\"{}\" y=\"{}\">{}</text></g>\n",
                       left + pw + 12, ly, color, left + pw + 32, ly + 6, escape(c.name));
  }
  svg += "</svg>\n";
  return svg;
}

void emit_plot(const std::vector<std::filesystem::path>& inputs, const std::filesystem::path& output) {
  if (inputs.empty()) throw Error(ErrorKind::kMissingData, "no metrics files to plot");
  std::vector<MetricsRecord> all;
  for (const auto& p : inputs) {
    auto f = read_metrics(p);
    all.insert(all.end(), f.records.begin(), f.records.end());
  }
  const auto curves = learning_curves(all);
  if (curves.empty()) throw Error(ErrorKind::kMissingData, "metrics hold no evaluated iterations");
  std::ofstream out(output);
  if (!out) throw Error(ErrorKind::kIo, "cannot write plot " + output.string());
  out << render_svg(curves, "post-update return vs environment steps");
  if (!out) throw Error(ErrorKind::kIo, "write failed on " + output.string());
}

}  // namespace gmpslab::cli
