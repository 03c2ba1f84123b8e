#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <string_view>

namespace bnpipe {

/// Elementwise map that turns raw parameters into non-negative effective values.
enum class NonnegMap { Softplus, Relu };

inline double phi(NonnegMap map, double x) {
  if (map == NonnegMap::Relu) return x > 0.0 ? x : 0.0;
  // log(1 + e^x) without overflow for large |x|
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

inline double phi_derivative(NonnegMap map, double x) {
  if (map == NonnegMap::Relu) return x > 0.0 ? 1.0 : 0.0;
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/// Raw value whose softplus is `y` (y > 0). Relu is the identity on y >= 0.
inline double phi_inverse(NonnegMap map, double y) {
  if (map == NonnegMap::Relu) return y;
  if (y > 30.0) return y + std::log1p(-std::exp(-y));
  return std::log(std::expm1(y));
}

inline std::string_view to_string(NonnegMap map) {
  return map == NonnegMap::Relu ? "relu" : "softplus";
}

inline std::optional<NonnegMap> parse_nonneg(std::string_view text) {
  if (text == "softplus") return NonnegMap::Softplus;
  if (text == "relu") return NonnegMap::Relu;
  return std::nullopt;
}

}  // namespace bnpipe
