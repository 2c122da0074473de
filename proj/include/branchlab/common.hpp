#pragma once

#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>
#include <string>

namespace branchlab {

using cplx = std::complex<double>;

enum class ErrorKind {
  invalid_argument,
  zero_wavefunction,
  boson_cutoff,
  overlap,
  non_hermitian,
  partial_trace,
  number_violation,
  lattice_mismatch,
  router_failure,
  grid_collision,
  no_bracket,
  numerical,
  non_orthogonal,
  inconsistent_history,
  out_of_order,
  inapplicable,
  dimension_blowup,
  geodesic_exits,
  config,
};

struct Error : std::runtime_error {
  ErrorKind kind;
  Error(ErrorKind k, const std::string& what) : std::runtime_error(what), kind(k) {}
};

namespace constants {
inline constexpr double pi = std::numbers::pi;
inline const double sqrt2 = std::sqrt(2.0);
// lower bound prefactor c0 = 1/(pi sqrt 192)
inline const double c0 = 1.0 / (pi * std::sqrt(192.0));
// upper bound: c2 = (3+sqrt2)(2+sqrt2) pi / 2, c3 = sqrt2 pi, c4 = pi/sqrt2
inline const double c2 = (3.0 + std::sqrt(2.0)) * (2.0 + std::sqrt(2.0)) * pi / 2.0;
inline const double c3 = std::sqrt(2.0) * pi;
inline const double c4 = pi / std::sqrt(2.0);
// the grouped-branch bound reuses the fan-out constant
inline const double c1p = c2;
}  // namespace constants

}  // namespace branchlab
