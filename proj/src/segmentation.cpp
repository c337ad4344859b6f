#include "shrubmap/segmentation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>

#include "shrubmap/error.hpp"

namespace shrubmap {

AnnualSeries::AnnualSeries(std::vector<int> y, std::vector<double> v) : years(std::move(y)), values(std::move(v)) {
  if (years.size() != values.size()) throw ParameterError("series years and values differ in length");
  if (years.size() < 2) throw ParameterError("series needs at least two observations");
  for (std::size_t i = 1; i < years.size(); ++i)
    if (years[i] <= years[i - 1]) throw ParameterError("series years must be strictly increasing");
  for (double x : values)
    if (!std::isfinite(x)) throw ParameterError("series values must be finite");
}

double SegmentedFit::at(int year) const {
  if (year < first_year || year > last_year()) throw ParameterError("year " + std::to_string(year) + " outside fit");
  return fitted[static_cast<std::size_t>(year - first_year)];
}

double segmentation_tie_tolerance(const AnnualSeries& s) {
  double sum_sq = 0.0;
  for (double v : s.values) sum_sq += v * v;
  return 1e-10 * (1.0 + sum_sq);
}

namespace {

/// Interior (strictly between two vertices) sums for the segment cost
///   A u^2 + B v^2 + 2C uv - 2D u - 2E v + G
/// where u, v are the fitted values at the two vertices.
struct SegmentCost {
  double a = 0, b = 0, c = 0, d = 0, e = 0, g = 0;
};

SegmentCost segment_cost(const AnnualSeries& s, std::size_t lo, std::size_t hi) {
  SegmentCost k;
  const double t0 = s.years[lo];
  const double len = s.years[hi] - t0;
  for (std::size_t m = lo + 1; m < hi; ++m) {
    const double w = (s.years[m] - t0) / len;
    const double y = s.values[m];
    k.a += (1 - w) * (1 - w);
    k.b += w * w;
    k.c += w * (1 - w);
    k.d += y * (1 - w);
    k.e += y * w;
    k.g += y * y;
  }
  return k;
}

/// Cost of the best path so far as a function of the current vertex value.
struct Parabola {
  double a, b, c;
  std::int32_t parent;  // arena index, -1 at the first vertex
  std::int32_t vertex;  // observation index of this vertex

  double eval(double v) const { return (a * v + b) * v + c; }
  double minimum() const { return c - b * b / (4 * a); }
};

constexpr double kInf = std::numeric_limits<double>::infinity();

/// Residual sum of squares of the free least-squares line through
/// observations lo..hi (inclusive); zero for one or two points.
double line_sse(const AnnualSeries& s, std::size_t lo, std::size_t hi) {
  if (hi < lo + 2) return 0.0;
  const double n = static_cast<double>(hi - lo + 1);
  double mt = 0.0, my = 0.0;
  for (std::size_t m = lo; m <= hi; ++m) {
    mt += s.years[m];
    my += s.values[m];
  }
  mt /= n;
  my /= n;
  double stt = 0.0, sty = 0.0, syy = 0.0;
  for (std::size_t m = lo; m <= hi; ++m) {
    const double dt = s.years[m] - mt, dy = s.values[m] - my;
    stt += dt * dt;
    sty += dt * dy;
    syy += dy * dy;
  }
  return std::max(0.0, syy - sty * sty / stt);
}

/// suffix[j * (r_max + 1) + r]: least possible residual of observations
/// j+1..n-1 when covered by at most r straight lines with no continuity
/// requirement. Any continuation of a path at vertex j costs at least this.
std::vector<double> suffix_bounds(const AnnualSeries& s, std::size_t r_max) {
  const std::size_t n = s.size();
  std::vector<double> line(n * n, 0.0);
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = a; b < n; ++b) line[a * n + b] = line_sse(s, a, b);
  std::vector<double> lb(n * (r_max + 1), kInf);
  for (std::size_t j = n; j-- > 0;) {
    for (std::size_t r = 0; r <= r_max; ++r) {
      double& out = lb[j * (r_max + 1) + r];
      if (j + 1 == n) {
        out = 0.0;
        continue;
      }
      if (r == 0) continue;
      // first group covers j+1..e
      for (std::size_t e = j + 1; e < n; ++e) {
        const double rest = e + 1 == n ? 0.0 : lb[e * (r_max + 1) + (r - 1)];
        out = std::min(out, line[(j + 1) * n + e] + rest);
      }
    }
  }
  return lb;
}

/// True when r undercuts q by more than tol at every vertex value.
bool dominates(const Parabola& r, const Parabola& q, double tol) {
  const double da = q.a - r.a, db = q.b - r.b, dc = q.c - r.c - tol;
  if (da < 0.0) return false;
  if (da == 0.0) return db == 0.0 && dc > 0.0;
  return db * db - 4 * da * dc < 0.0;
}

std::vector<int> vertex_path(const std::vector<Parabola>& arena, std::int32_t idx, const AnnualSeries& s) {
  std::vector<int> years;
  for (std::int32_t i = idx; i >= 0; i = arena[i].parent) years.push_back(s.years[arena[i].vertex]);
  std::reverse(years.begin(), years.end());
  return years;
}

}  // namespace

SegmentedFit segment_series(const AnnualSeries& s, int max_segments) {
  if (max_segments < 1) throw ParameterError("max_segments must be at least 1");
  if (s.size() < 2) throw ParameterError("series needs at least two observations");
  const std::size_t n = s.size();
  const std::size_t kmax = std::min<std::size_t>(static_cast<std::size_t>(max_segments), n - 1);
  const double tol = segmentation_tie_tolerance(s);

  std::vector<SegmentCost> costs(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) costs[i * n + j] = segment_cost(s, i, j);

  const std::vector<double> lb = suffix_bounds(s, kmax);
  const auto lower_bound = [&](const Parabola& q, std::size_t j, std::size_t k) {
    return q.minimum() + lb[j * (kmax + 1) + (kmax - k)];
  };

  std::vector<Parabola> arena;
  // states[j] holds candidates whose path ends at vertex j with the current segment count
  std::vector<std::vector<std::int32_t>> prev(n), cur(n);
  const double y0 = s.values[0];
  arena.push_back({1.0, -2.0 * y0, y0 * y0, -1, 0});
  prev[0] = {0};

  std::vector<std::int32_t> kept;
  std::vector<std::vector<std::int32_t>> finals(kmax + 1);
  std::vector<double> best(kmax + 1, kInf);
  // Paths whose lower bound exceeds the best complete cost by more than the
  // slack cannot finish within tol of the optimum; the slack also absorbs
  // rounding in the bounds.
  double incumbent = kInf;
  const double slack = 4 * tol;

  for (std::size_t k = 1; k <= kmax; ++k) {
    for (auto& c : cur) c.clear();
    // the k-th vertex sits at index >= k; the last vertex is n-1
    for (std::size_t j = k; j < n; ++j) {
      if (j < n - 1 && k == kmax) continue;  // only full paths needed at the last level
      auto& cands = cur[j];
      const double yj = s.values[j];
      for (std::size_t i = k - 1; i < j; ++i) {
        const SegmentCost& sc = costs[i * n + j];
        for (const auto pidx : prev[i]) {
          const Parabola p = arena[pidx];
          const double den = p.a + sc.a;
          const double lin = p.b - 2 * sc.d;
          Parabola q;
          q.a = sc.b - sc.c * sc.c / den + 1.0;
          q.b = -2 * sc.e - lin * sc.c / den - 2 * yj;
          q.c = p.c + sc.g - lin * lin / (4 * den) + yj * yj;
          q.parent = pidx;
          q.vertex = static_cast<std::int32_t>(j);
          if (lower_bound(q, j, k) > incumbent + slack) continue;
          cands.push_back(static_cast<std::int32_t>(arena.size()));
          arena.push_back(q);
        }
      }
      if (cands.size() > 1) {
        // drop candidates undercut everywhere by the state's cheapest path
        std::int32_t lead = cands.front();
        for (const auto c : cands)
          if (arena[c].minimum() < arena[lead].minimum()) lead = c;
        kept.clear();
        for (const auto c : cands)
          if (c == lead || !dominates(arena[lead], arena[c], tol)) kept.push_back(c);
        cands.swap(kept);
      }
    }
    for (const auto idx : cur[n - 1]) best[k] = std::min(best[k], arena[idx].minimum());
    finals[k] = cur[n - 1];
    incumbent = std::min(incumbent, best[k]);
    std::swap(prev, cur);
    if (best[k] <= tol) break;  // exact fit; more segments cannot win the tie rule
  }

  const double opt = *std::min_element(best.begin() + 1, best.end());
  std::vector<int> chosen;
  for (std::size_t k = 1; k <= kmax && chosen.empty(); ++k) {
    if (!(best[k] <= opt + tol)) continue;
    for (const auto idx : finals[k]) {
      if (!(arena[idx].minimum() <= opt + tol)) continue;
      auto path = vertex_path(arena, idx, s);
      if (chosen.empty() || path < chosen) chosen = std::move(path);
    }
  }
  return fit_to_vertices(s, chosen);
}

SegmentedFit fit_to_vertices(const AnnualSeries& s, std::span<const int> vertex_years) {
  if (s.size() < 2) throw ParameterError("series needs at least two observations");
  if (vertex_years.size() < 2) throw ParameterError("at least two vertices are required");
  if (vertex_years.front() != s.years.front() || vertex_years.back() != s.years.back())
    throw ParameterError("vertices must include the first and last series years");
  // map each vertex to its observation index
  std::vector<std::size_t> vidx(vertex_years.size());
  {
    std::size_t obs = 0;
    for (std::size_t k = 0; k < vertex_years.size(); ++k) {
      if (k > 0 && vertex_years[k] <= vertex_years[k - 1])
        throw ParameterError("vertex years must be strictly increasing");
      while (obs < s.size() && s.years[obs] < vertex_years[k]) ++obs;
      if (obs == s.size() || s.years[obs] != vertex_years[k])
        throw ParameterError("vertex year " + std::to_string(vertex_years[k]) + " is not an observed year");
      vidx[k] = obs;
    }
  }
  const std::size_t m = vidx.size();
  // tridiagonal normal equations
  std::vector<double> diag(m, 0.0), off(m, 0.0), rhs(m, 0.0);
  for (std::size_t k = 0; k < m; ++k) {
    diag[k] += 1.0;
    rhs[k] += s.values[vidx[k]];
    if (k + 1 == m) break;
    const double t0 = s.years[vidx[k]];
    const double len = s.years[vidx[k + 1]] - t0;
    for (std::size_t o = vidx[k] + 1; o < vidx[k + 1]; ++o) {
      const double w = (s.years[o] - t0) / len;
      diag[k] += (1 - w) * (1 - w);
      diag[k + 1] += w * w;
      off[k] += w * (1 - w);
      rhs[k] += (1 - w) * s.values[o];
      rhs[k + 1] += w * s.values[o];
    }
  }
  // Thomas algorithm (matrix is symmetric positive definite)
  std::vector<double> cp(m, 0.0), dp(m, 0.0);
  cp[0] = off[0] / diag[0];
  dp[0] = rhs[0] / diag[0];
  for (std::size_t k = 1; k < m; ++k) {
    const double den = diag[k] - off[k - 1] * cp[k - 1];
    cp[k] = off[k] / den;
    dp[k] = (rhs[k] - off[k - 1] * dp[k - 1]) / den;
  }
  std::vector<double> values(m);
  values[m - 1] = dp[m - 1];
  for (std::size_t k = m - 1; k-- > 0;) values[k] = dp[k] - cp[k] * values[k + 1];

  SegmentedFit fit;
  fit.vertex_years.assign(vertex_years.begin(), vertex_years.end());
  fit.vertex_values = values;
  fit.first_year = s.years.front();
  fit.fitted.resize(static_cast<std::size_t>(s.years.back() - s.years.front() + 1));
  for (std::size_t k = 0; k + 1 < m; ++k) {
    const int ya = vertex_years[k], yb = vertex_years[k + 1];
    for (int y = ya; y <= yb; ++y) {
      const double w = static_cast<double>(y - ya) / (yb - ya);
      fit.fitted[static_cast<std::size_t>(y - fit.first_year)] = y == yb ? values[k + 1] : (1 - w) * values[k] + w * values[k + 1];
    }
  }
  for (std::size_t o = 0; o < s.size(); ++o) {
    const double r = s.values[o] - fit.fitted[static_cast<std::size_t>(s.years[o] - fit.first_year)];
    fit.sse += r * r;
  }
  return fit;
}

Disturbance disturbance_from_fit(const SegmentedFit& fit, double threshold, std::optional<int> as_of_year) {
  Disturbance d;
  for (std::size_t k = 0; k + 1 < fit.vertex_years.size(); ++k) {
    if (as_of_year && fit.vertex_years[k + 1] > *as_of_year) break;
    const double drop = fit.vertex_values[k] - fit.vertex_values[k + 1];
    if (drop > threshold) {
      d.yod = fit.vertex_years[k + 1];
      d.mag = drop;
    }
  }
  return d;
}

std::vector<std::optional<double>> delta_lag1(std::span<const double> fitted) {
  if (fitted.size() < 2) throw ParameterError("delta_lag1 needs at least two years");
  std::vector<std::optional<double>> out(fitted.size());
  for (std::size_t t = 1; t < fitted.size(); ++t) out[t] = fitted[t] - fitted[t - 1];
  return out;
}

}  // namespace shrubmap
