#include "shrubmap/spectral.hpp"

namespace shrubmap {

std::optional<double> nbr(double nir, double swir2) {
  const double den = nir + swir2;
  if (den == 0.0) return std::nullopt;
  return (nir - swir2) / den;
}

TasseledCapCoefficients TasseledCapCoefficients::crist1985() {
  return {
      {0.2043, 0.4158, 0.5524, 0.5741, 0.3124, 0.2303},
      {-0.1603, -0.2819, -0.4934, 0.7940, -0.0002, -0.1446},
      {0.0315, 0.2021, 0.3102, 0.1594, -0.6806, -0.6109},
  };
}

TasseledCap tasseled_cap(const Reflectance& bands, const TasseledCapCoefficients& coeffs) {
  TasseledCap tc;
  for (std::size_t k = 0; k < bands.size(); ++k) {
    tc.brightness += coeffs.brightness[k] * bands[k];
    tc.greenness += coeffs.greenness[k] * bands[k];
    tc.wetness += coeffs.wetness[k] * bands[k];
  }
  return tc;
}

}  // namespace shrubmap
