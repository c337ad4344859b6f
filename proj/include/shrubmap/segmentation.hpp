#pragma once

#include <optional>
#include <span>
#include <vector>

namespace shrubmap {

/// Annual observations; missing years are simply absent.
struct AnnualSeries {
  std::vector<int> years;
  std::vector<double> values;

  AnnualSeries() = default;
  AnnualSeries(std::vector<int> years, std::vector<double> values);
  std::size_t size() const { return years.size(); }
};

/// Continuous piecewise-linear fit through vertex (year, value) pairs.
struct SegmentedFit {
  std::vector<int> vertex_years;
  std::vector<double> vertex_values;
  int first_year = 0;
  std::vector<double> fitted;  // one value per calendar year in [first, last]
  double sse = 0.0;            // over observed years

  int last_year() const { return first_year + static_cast<int>(fitted.size()) - 1; }
  std::size_t segment_count() const { return vertex_years.empty() ? 0 : vertex_years.size() - 1; }
  /// Fitted value for a year inside the fitted range.
  double at(int year) const;
};

/// Ties on SSE are resolved inside this tolerance (fewer vertices first,
/// then lexicographically earliest vertex years).
double segmentation_tie_tolerance(const AnnualSeries& s);

/// Globally optimal vertex selection: minimizes the least-squares SSE of a
/// continuous piecewise-linear fit over all vertex subsets that include both
/// endpoints and use at most max_segments segments.
SegmentedFit segment_series(const AnnualSeries& s, int max_segments);

/// Least-squares vertex values for fixed vertex years. Vertex years must be
/// observed years, strictly increasing, and include both endpoints.
SegmentedFit fit_to_vertices(const AnnualSeries& s, std::span<const int> vertex_years);

struct Disturbance {
  std::optional<int> yod;
  double mag = 0.0;
};

inline constexpr double kDefaultDisturbanceThreshold = 0.05;

/// Most recent segment whose value drop exceeds the threshold. With
/// as_of_year set, segments ending after that year are ignored.
Disturbance disturbance_from_fit(const SegmentedFit& fit, double threshold = kDefaultDisturbanceThreshold,
                                 std::optional<int> as_of_year = std::nullopt);

/// delta[t] = fitted[t] - fitted[t-1]; the first entry is empty.
std::vector<std::optional<double>> delta_lag1(std::span<const double> fitted);

}  // namespace shrubmap
