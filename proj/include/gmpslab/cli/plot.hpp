#pragma once

#include "gmpslab/cli/metrics.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace gmpslab::cli {

struct CurvePoint {
  /// Mean cumulative environment steps across seeds.
  double x = 0.0;
  double mean = 0.0;
  /// Sample standard deviation over sqrt(n); zero for a single seed.
  double se = 0.0;
  int n = 0;
};

struct Curve {
  std::string name;
  std::vector<CurvePoint> points;
};

/// One curve per run id; records of the same iteration are pooled across
/// seeds. Only evaluated records (with a post-update return) contribute.
std::vector<Curve> learning_curves(const std::vector<MetricsRecord>& records);

/// Self-contained SVG line chart with shaded mean +- SE bands; the plotted
/// numbers are repeated in a comment block.
std::string render_svg(const std::vector<Curve>& curves, const std::string& title);

/// Reads the metrics files and writes the chart. Throws kMissingData when
/// they hold no evaluated records.
void emit_plot(const std::vector<std::filesystem::path>& inputs, const std::filesystem::path& output);

}  // namespace gmpslab::cli
