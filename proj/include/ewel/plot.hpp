#pragma once

#include "ewel/weak_error.hpp"

#include <string>
#include <vector>

namespace ewel {

struct PlotOptions
{
  std::string title;
  double gamma = 0.5; // guide slope gamma / 2
  double width = 640;
  double height = 480;
  bool timestamp = false; // comment line with the render time
};

//! Line drawn through a plot: fit_rate for four or more points, ordinary
//! least squares on the logs below that.
RateFit plot_fit(const std::vector<RatePoint>& points);

//! Log-log error against h with the fitted line, guide slopes gamma/2 and 1
//! and a slope annotation. Needs two points with distinct, positive h and
//! error; a degenerate axis range throws NumericalFault.
std::string emit_plot(const std::vector<RatePoint>& points, const PlotOptions& options = {});

//! Reads a sweep CSV (model, h, epsilon, test_function, error, stderr, ...)
//! and returns the rows whose test_function matches `series` (first series
//! when empty).
std::vector<RatePoint> read_sweep_series(const std::string& csv_text, std::string& series);

} // namespace ewel
