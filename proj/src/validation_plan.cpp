#include "shrubmap/validation_plan.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <sstream>

#include "shrubmap/error.hpp"
#include "shrubmap/metrics.hpp"
#include "shrubmap/random.hpp"

namespace shrubmap {

double hex_area(double apothem_km) {
  if (!(apothem_km > 0.0)) throw ParameterError("hexagon apothem must be positive");
  return 2.0 * std::numbers::sqrt3 * apothem_km * apothem_km;
}

std::pair<int, int> HexGrid::cell_of(double x, double y) const {
  const double size = 2.0 * apothem_m / std::numbers::sqrt3;  // circumradius
  const double px = x - anchor_x, py = y - anchor_y;
  const double qf = (2.0 / 3.0) * px / size;
  const double rf = (-1.0 / 3.0 * px + std::numbers::sqrt3 / 3.0 * py) / size;
  // cube rounding
  const double sf = -qf - rf;
  double q = std::round(qf), r = std::round(rf), s = std::round(sf);
  const double dq = std::abs(q - qf), dr = std::abs(r - rf), ds = std::abs(s - sf);
  if (dq > dr && dq > ds) q = -r - s;
  else if (dr > ds) r = -q - s;
  return {static_cast<int>(q), static_cast<int>(r)};
}

std::pair<double, double> HexGrid::centre(int q, int r) const {
  const double size = 2.0 * apothem_m / std::numbers::sqrt3;
  return {anchor_x + size * 1.5 * q, anchor_y + size * std::numbers::sqrt3 * (r + q / 2.0)};
}

const std::array<double, kPlanBins + 1>& probability_bin_edges() {
  static const std::array<double, kPlanBins + 1> edges{0.0, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5,
                                                       0.6, 0.7, 0.8, 0.9, 0.95, 1.0};
  return edges;
}

std::size_t probability_bin(double p) {
  if (!(p >= 0.0 && p <= 1.0)) throw ParameterError("probability " + format_number(p) + " outside [0,1]");
  const auto& e = probability_bin_edges();
  for (std::size_t b = 0; b < kPlanBins; ++b)
    if (p <= e[b + 1]) return b;
  return kPlanBins - 1;
}

const char* stratum_name(Stratum s) {
  switch (s) {
    case Stratum::Regular: return "regular";
    case Stratum::ExtremeLow: return "extreme_low";
    case Stratum::ExtremeHigh: return "extreme_high";
  }
  return "unknown";
}

std::size_t HexValidationPlan::pixel_count() const {
  std::size_t n = 0;
  for (const auto& h : hexagons)
    for (const auto& b : h.bins) n += b.size();
  return n;
}

std::string HexValidationPlan::to_tsv() const {
  std::ostringstream out;
  out << "hex_q\thex_r\tbin\tbin_low\tbin_high\tstratum\tcol\trow\tx\ty\tprob\n";
  const auto& e = probability_bin_edges();
  for (const auto& h : hexagons)
    for (std::size_t b = 0; b < kPlanBins; ++b)
      for (const auto& p : h.bins[b])
        out << h.q << '\t' << h.r << '\t' << b << '\t' << format_number(e[b]) << '\t' << format_number(e[b + 1])
            << '\t' << stratum_name(p.stratum) << '\t' << p.col << '\t' << p.row << '\t' << format_number(p.x)
            << '\t' << format_number(p.y) << '\t' << format_number(p.prob) << '\n';
  return out.str();
}

std::string HexValidationPlan::shortfall_tsv() const {
  std::ostringstream out;
  out << "hex_q\thex_r\tmapped_fraction\tbin\tstratum\ttarget\tavailable\tshortfall\n";
  for (const auto& h : hexagons)
    for (const auto& s : h.shortfalls)
      out << h.q << '\t' << h.r << '\t' << format_number(h.mapped_fraction) << '\t' << s.bin << '\t'
          << stratum_name(s.stratum) << '\t' << s.target << '\t' << s.available << '\t' << (s.target - s.available)
          << '\n';
  return out.str();
}

HexValidationPlan build_validation_plan(const Raster& prob, double apothem_km, std::size_t per_bin,
                                        std::uint64_t seed) {
  const double area_km2 = hex_area(apothem_km);
  HexValidationPlan plan;
  plan.apothem_km = apothem_km;
  plan.per_bin = per_bin;
  plan.seed = seed;

  const auto& g = prob.transform();
  HexGrid grid{g.origin_x, g.origin_y - g.resolution * g.height, apothem_km * 1000.0};
  const double pixel_km2 = g.resolution * g.resolution / 1e6;

  // mapped pixel indices per hexagon, in raster order
  std::map<std::pair<int, int>, std::vector<std::size_t>> members;
  for (std::uint32_t row = 0; row < g.height; ++row)
    for (std::uint32_t col = 0; col < g.width; ++col) {
      const std::size_t i = g.index(col, row);
      if (prob.is_nodata_at(i)) continue;
      const auto [x, y] = g.pixel_center(col, row);
      members[grid.cell_of(x, y)].push_back(i);
    }

  std::uint64_t hex_no = 0;
  for (const auto& [cell, pixels] : members) {
    HexSample h;
    h.q = cell.first;
    h.r = cell.second;
    std::tie(h.centre_x, h.centre_y) = grid.centre(h.q, h.r);
    h.mapped_pixels = pixels.size();
    h.mapped_fraction = std::min(1.0, static_cast<double>(pixels.size()) * pixel_km2 / area_km2);
    h.per_bin_target = static_cast<std::size_t>(std::lround(static_cast<double>(per_bin) * h.mapped_fraction));

    std::array<std::vector<std::size_t>, kPlanBins> pop;
    for (auto i : pixels) pop[probability_bin(prob[i])].push_back(i);
    std::vector<std::uint8_t> taken_low, taken_high;

    const auto to_pixel = [&](std::size_t i, Stratum s) {
      PlanPixel p;
      p.col = static_cast<std::uint32_t>(i % g.width);
      p.row = static_cast<std::uint32_t>(i / g.width);
      std::tie(p.x, p.y) = g.pixel_center(p.col, p.row);
      p.prob = prob[i];
      p.stratum = s;
      return p;
    };
    const auto draw = [&](const std::vector<std::size_t>& from, std::size_t bin, Stratum s, std::uint64_t stream) {
      std::vector<std::size_t> out;
      if (from.size() <= h.per_bin_target) {
        out = from;
        if (from.size() < h.per_bin_target) h.shortfalls.push_back({bin, s, h.per_bin_target, from.size()});
      } else {
        Rng rng(derive_seed(derive_seed(seed, hex_no), stream));
        for (auto k : rng.sample_without_replacement(from.size(), h.per_bin_target)) out.push_back(from[k]);
      }
      for (auto i : out) h.bins[bin].push_back(to_pixel(i, s));
      return out;
    };

    for (std::size_t b = 0; b < kPlanBins; ++b) draw(pop[b], b, Stratum::Regular, b);

    // extreme sub-bins, excluding pixels the regular draw already took
    const auto already = [&](std::size_t bin, std::size_t i) {
      for (const auto& p : h.bins[bin])
        if (g.index(p.col, p.row) == i) return true;
      return false;
    };
    std::vector<std::size_t> low, high;
    for (auto i : pop.front())
      if (prob[i] <= 0.01 && !already(0, i)) low.push_back(i);
    for (auto i : pop.back())
      if (prob[i] > 0.99 && !already(kPlanBins - 1, i)) high.push_back(i);
    draw(low, 0, Stratum::ExtremeLow, 100);
    draw(high, kPlanBins - 1, Stratum::ExtremeHigh, 101);

    plan.hexagons.push_back(std::move(h));
    ++hex_no;
  }
  return plan;
}

}  // namespace shrubmap
