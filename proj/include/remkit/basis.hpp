#pragma once

// Spline bases and wiggliness penalties.
//
// B-splines use the stable triangular form of the Cox-de Boor recursion
// with repeated boundary knots; values at an evaluation point have exactly
// degree+1 nonzero entries and sum to one. The thin-plate radial basis is
// b(r) = r^2 log r with b(0) = 0, evaluated against a set of control
// points. Penalties are positive semidefinite by construction: a
// second-order difference Gram matrix for B-spline coefficients, and a
// quadrature Gram of second derivatives for radial terms.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <vector>

#include "remkit/error.hpp"

namespace remkit {

// Padded knot vector for `k` basis functions of degree `o` over data:
// k - o - 1 interior knots at data quantiles, boundary knots repeated
// o + 1 times. Data must have at least two distinct values.
inline std::vector<double> quantile_knots(std::vector<double> data, int k, int degree) {
  if (k < 3) fail(errc::config, "spline basis needs k >= 3");
  if (data.empty()) fail(errc::config, "cannot place knots on empty data");
  std::sort(data.begin(), data.end());
  const double lo = data.front(), hi = data.back();
  if (!(hi > lo)) fail(errc::config, "cannot place knots: covariate is constant");
  const int interior = k - degree - 1;
  if (interior < 0) fail(errc::config, "k too small for the requested degree");
  std::vector<double> knots;
  knots.reserve(static_cast<std::size_t>(k + degree + 1));
  for (int i = 0; i <= degree; ++i) knots.push_back(lo);
  for (int i = 1; i <= interior; ++i) {
    const double q = static_cast<double>(i) / (interior + 1);
    const double pos = q * static_cast<double>(data.size() - 1);
    const auto base = static_cast<std::size_t>(pos);
    const double frac = pos - static_cast<double>(base);
    const double value =
        base + 1 < data.size() ? data[base] * (1.0 - frac) + data[base + 1] * frac : data[base];
    knots.push_back(value);
  }
  for (int i = 0; i <= degree; ++i) knots.push_back(hi);
  return knots;
}

inline std::vector<double> uniform_knots(double lo, double hi, int k, int degree) {
  if (k < 3) fail(errc::config, "spline basis needs k >= 3");
  if (!(hi > lo)) fail(errc::config, "degenerate knot range");
  const int interior = k - degree - 1;
  std::vector<double> knots;
  for (int i = 0; i <= degree; ++i) knots.push_back(lo);
  for (int i = 1; i <= interior; ++i)
    knots.push_back(lo + (hi - lo) * static_cast<double>(i) / (interior + 1));
  for (int i = 0; i <= degree; ++i) knots.push_back(hi);
  return knots;
}

// All k basis values at x, where k = knots.size() - degree - 1. Evaluations
// outside the supported range are clamped to the boundary and counted in
// *clamped when provided.
inline std::vector<double> bspline_basis(double x, const std::vector<double>& knots, int degree,
                                         std::size_t* clamped = nullptr) {
  const int k = static_cast<int>(knots.size()) - degree - 1;
  if (k < 1) fail(errc::config, "knot vector too short for the requested degree");
  const double lo = knots[degree];
  const double hi = knots[k];
  if (x < lo || x > hi) {
    if (clamped) ++*clamped;
    x = std::clamp(x, lo, hi);
  }
  // Locate the knot span [knots[span], knots[span+1]) containing x; the
  // right boundary belongs to the last span so unity holds on [lo, hi].
  int span = degree;
  while (span < k - 1 && x >= knots[span + 1]) ++span;

  std::vector<double> nonzero(static_cast<std::size_t>(degree) + 1, 0.0);
  std::vector<double> left(static_cast<std::size_t>(degree) + 1),
      right(static_cast<std::size_t>(degree) + 1);
  nonzero[0] = 1.0;
  for (int r = 1; r <= degree; ++r) {
    left[r] = x - knots[span + 1 - r];
    right[r] = knots[span + r] - x;
    double saved = 0.0;
    for (int j = 0; j < r; ++j) {
      const double denom = right[j + 1] + left[r - j];
      const double temp = denom != 0.0 ? nonzero[j] / denom : 0.0;
      nonzero[j] = saved + right[j + 1] * temp;
      saved = left[r - j] * temp;
    }
    nonzero[r] = saved;
  }
  std::vector<double> values(static_cast<std::size_t>(k), 0.0);
  for (int j = 0; j <= degree; ++j) {
    const int col = span - degree + j;
    if (col >= 0 && col < k) values[static_cast<std::size_t>(col)] = nonzero[j];
  }
  return values;
}

// Thin-plate radial values b(|t - delta_j|) with b(r) = r^2 log r, b(0)=0.
inline std::vector<double> thinplate_basis(double t, const std::vector<double>& deltas) {
  std::vector<double> values(deltas.size(), 0.0);
  for (std::size_t j = 0; j < deltas.size(); ++j) {
    const double r = std::abs(t - deltas[j]);
    values[j] = r > 0.0 ? r * r * std::log(r) : 0.0;
  }
  return values;
}

// Second-order difference penalty for B-spline coefficients: S = D2' D2
// with D2 rows (1, -2, 1). Null space: constant and linear coefficient
// sequences (dimension 2).
inline Eigen::MatrixXd difference_penalty(int k) {
  if (k < 3) fail(errc::config, "difference penalty needs k >= 3");
  Eigen::MatrixXd d2 = Eigen::MatrixXd::Zero(k - 2, k);
  for (int i = 0; i < k - 2; ++i) {
    d2(i, i) = 1.0;
    d2(i, i + 1) = -2.0;
    d2(i, i + 2) = 1.0;
  }
  return d2.transpose() * d2;
}

// Wiggliness of a radial expansion f(x) = sum_j theta_j b(|x - delta_j|):
// S_jk = int f_j'' f_k'' dx over [lo, hi] by composite Simpson quadrature.
// d^2/dx^2 b(|x - d|) = 2 log r + 3 (independent of the sign of x - d).
// Computed as a weighted Gram matrix, hence positive semidefinite exactly.
inline Eigen::MatrixXd thinplate_penalty(const std::vector<double>& deltas, double lo, double hi,
                                         int quad_points = 801) {
  if (quad_points % 2 == 0) ++quad_points;
  const auto q = static_cast<std::size_t>(quad_points);
  const auto p = static_cast<Eigen::Index>(deltas.size());
  const double h = (hi - lo) / static_cast<double>(q - 1);
  Eigen::MatrixXd second(static_cast<Eigen::Index>(q), p);
  Eigen::VectorXd weights(static_cast<Eigen::Index>(q));
  for (std::size_t i = 0; i < q; ++i) {
    const double x = lo + h * static_cast<double>(i);
    for (Eigen::Index j = 0; j < p; ++j) {
      // log singularity at r = 0 is integrable; nudge the node off it.
      const double r = std::max(std::abs(x - deltas[static_cast<std::size_t>(j)]), 1e-12);
      second(static_cast<Eigen::Index>(i), j) = 2.0 * std::log(r) + 3.0;
    }
    weights(static_cast<Eigen::Index>(i)) =
        (i == 0 || i + 1 == q) ? h / 3.0 : (i % 2 == 1 ? 4.0 * h / 3.0 : 2.0 * h / 3.0);
  }
  return second.transpose() * weights.asDiagonal() * second;
}

// Orthonormal basis of the complement of the constant coefficient direction
// 1_k; used to drop the direction a partition-of-unity basis cannot
// identify under softmax or differencing.
inline Eigen::MatrixXd drop_constant_direction(int k) {
  Eigen::VectorXd ones = Eigen::VectorXd::Ones(k);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(ones);
  Eigen::MatrixXd q = qr.householderQ();
  return q.rightCols(k - 1);
}

}  // namespace remkit
