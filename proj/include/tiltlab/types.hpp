#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>

namespace tiltlab {

using Scalar = double;
using Index = Eigen::Index;
using CellId = int;

static constexpr int Dynamic = Eigen::Dynamic;

// Row-major 2-D field over the Y x Z pixel area.
template <typename T = Scalar>
using GridT = Eigen::Array<T, Dynamic, Dynamic, Eigen::RowMajor>;
using Grid = GridT<Scalar>;
using CellGrid = GridT<CellId>;

template <typename T = Scalar>
using VectorT = Eigen::Matrix<T, Dynamic, 1>;
using Vector = VectorT<Scalar>;

template <typename T = Scalar>
using MatrixT = Eigen::Matrix<T, Dynamic, Dynamic>;
using Matrix = MatrixT<Scalar>;

/// Thermal noise per 15 kHz resource element with a 7 dB noise figure at 290 K.
inline constexpr Scalar kNoiseFloorDbm = -125.0;

template <typename T>
inline T db_to_linear(T db) {
  return std::pow(T(10), db / T(10));
}

template <typename T>
inline T linear_to_db(T lin) {
  return T(10) * std::log10(lin);
}

// Expression-friendly overloads for Eigen arrays.
template <typename Derived>
inline auto db_to_linear(const Eigen::ArrayBase<Derived>& db) {
  using T = typename Derived::Scalar;
  return (db * T(std::log(10.0) / 10.0)).exp();
}

template <typename Derived>
inline auto linear_to_db(const Eigen::ArrayBase<Derived>& lin) {
  using T = typename Derived::Scalar;
  return T(10) * lin.log10();
}

/// Invalid configuration or contract violation detected at an API boundary.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Numerical failure (non-finite loss, NaN parameters).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace tiltlab
