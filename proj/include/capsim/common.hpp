#pragma once

#include <charconv>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace capsim {

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;
inline constexpr double kMmPerM = 1000.0;
inline constexpr double kMPerMm = 1e-3;

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An input violated a documented invariant or precondition.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// A file could not be read, written or parsed.
class IoError : public Error {
 public:
  using Error::Error;
};

/// A parameter fit did not converge or was rejected.
class FitError : public Error {
 public:
  using Error::Error;
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw ValidationError(message);
}

/// Wraps an angle into [0, 2π).
inline double wrap_angle(double theta) {
  double w = std::fmod(theta, kTwoPi);
  if (w < 0.0) w += kTwoPi;
  // fmod of a value just below a multiple of 2π can round up to 2π itself.
  if (w >= kTwoPi) w = 0.0;
  return w;
}

/// Shortest round-trip decimal form; "nan", "inf" and "-inf" for non-finite values.
inline std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0.0 ? "inf" : "-inf";
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline int sign_of(double v) { return (v > 0.0) - (v < 0.0); }

inline bool all_finite(double v) { return std::isfinite(v); }

template <typename... Ts>
bool all_finite(double v, Ts... rest) {
  return std::isfinite(v) && all_finite(rest...);
}

}  // namespace capsim
