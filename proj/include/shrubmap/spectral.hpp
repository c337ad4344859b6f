#pragma once

#include <array>
#include <optional>

namespace shrubmap {

/// Reflectance bands in order: blue, green, red, NIR, SWIR1, SWIR2.
using Reflectance = std::array<double, 6>;

enum Band : std::size_t { kBlue = 0, kGreen, kRed, kNir, kSwir1, kSwir2 };

/// (NIR - SWIR2) / (NIR + SWIR2); nullopt when the denominator is zero.
std::optional<double> nbr(double nir, double swir2);

struct TasseledCapCoefficients {
  Reflectance brightness{};
  Reflectance greenness{};
  Reflectance wetness{};

  /// Crist (1985) reflectance-factor coefficients for six-band TM-like data.
  static TasseledCapCoefficients crist1985();
};

struct TasseledCap {
  double brightness = 0.0;
  double greenness = 0.0;
  double wetness = 0.0;
};

TasseledCap tasseled_cap(const Reflectance& bands,
                         const TasseledCapCoefficients& coeffs = TasseledCapCoefficients::crist1985());

}  // namespace shrubmap
