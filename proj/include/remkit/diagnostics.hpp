#pragma once

// Goodness of fit via cumulative residual processes, plus the corrected
// conditional AIC.
//
// For each event the residual increment is the observed covariate row minus
// the softmax-weighted mean over the comparison set the fitted likelihood
// actually used (full risk set, sampled set, or the case-control pair).
// Penalized blocks have the penalty gradient, divided by the number of
// increments, removed from every increment so the cumulated process is
// centered at the penalized optimum. Unpenalized single columns are
// rescaled by observed information and compared against the Kolmogorov
// distribution; penalized blocks are whitened by the empirical increment
// covariance and compared against simulated Brownian-bridge sup statistics.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "remkit/error.hpp"
#include "remkit/fit.hpp"
#include "remkit/rng.hpp"

namespace remkit {

// Survival function of the Kolmogorov distribution,
// Q(t) = 2 sum_{k>=1} (-1)^{k-1} exp(-2 k^2 t^2),
// truncated when terms drop below 1e-12. The alternating series converges
// slowly for small t, where the theta-transformed form
// 1 - (sqrt(2 pi)/t) sum_{k>=1} exp(-(2k-1)^2 pi^2 / (8 t^2))
// takes over.
inline double kolmogorov_survival(double t) {
  if (t <= 0.0) return 1.0;
  if (t < 0.3) {
    double cdf = 0.0;
    for (int k = 1; k <= 20; ++k) {
      const double e = std::exp(-static_cast<double>(2 * k - 1) * (2 * k - 1) * M_PI * M_PI /
                                (8.0 * t * t));
      cdf += e;
      if (e < 1e-16 * std::max(cdf, 1e-300)) break;
    }
    cdf *= std::sqrt(2.0 * M_PI) / t;
    return std::clamp(1.0 - cdf, 0.0, 1.0);
  }
  double q = 0.0;
  double sign = 1.0;
  for (int k = 1; k <= 1000; ++k) {
    const double term = std::exp(-2.0 * static_cast<double>(k) * k * t * t);
    q += sign * term;
    sign = -sign;
    if (term < 1e-12) break;
  }
  return std::clamp(2.0 * q, 0.0, 1.0);
}

struct GofProcess {
  Eigen::MatrixXd increments;  // n x P in fit coordinates
  Eigen::MatrixXd path;        // cumulative sums, row i = G((i+1)/n)
  std::vector<double> grid;    // (i+1)/n
};

struct GofResult {
  std::string term;
  std::vector<double> grid;
  Eigen::MatrixXd w_path;  // rescaled process on the grid
  double statistic = 0.0;
  double p_value = 1.0;
  std::string method;
  std::size_t bridge_reps = 0;
  Eigen::MatrixXd j_hat;
  Eigen::Index j_rank = -1;  // rank actually inverted (smooth test)
};

inline double aic(const FitResult& fit) {
  if (!fit.converged) fail(errc::config, "AIC requires a converged fit");
  return -2.0 * fit.loglik + 2.0 * fit.edf_total;
}

namespace detail {

// Shared tail: subtract per-increment penalty centering, cumulate.
inline GofProcess finish_process(Eigen::MatrixXd increments, const FitResult& fit) {
  const auto n = increments.rows();
  if (n == 0) fail(errc::data, "no residual increments");
  Eigen::VectorXd grad_pen = Eigen::VectorXd::Zero(fit.theta.size());
  for (const auto& pen : fit.penalties) {
    const auto& block = fit.blocks[pen.block];
    const auto begin = static_cast<Eigen::Index>(block.begin);
    const auto size = static_cast<Eigen::Index>(block.size);
    grad_pen.segment(begin, size) += pen.nu * pen.matrix * fit.theta.segment(begin, size);
  }
  increments.rowwise() -= (grad_pen / static_cast<double>(n)).transpose();

  GofProcess out;
  out.increments = std::move(increments);
  out.path.resizeLike(out.increments);
  Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(out.increments.cols());
  out.grid.resize(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    acc += out.increments.row(i);
    out.path.row(i) = acc;
    out.grid[static_cast<std::size_t>(i)] =
        static_cast<double>(i + 1) / static_cast<double>(n);
  }
  return out;
}

}  // namespace detail

// Full-design residual process; serves both the event-count and the full
// softmax regimes (baseline and offsets cancel inside the softmax mean).
inline GofProcess gof_process(const FitResult& fit, const FullDesign& d) {
  if (fit.regime != "cox" && fit.regime != "poisson")
    fail(errc::config, "fit regime '" + fit.regime + "' does not match a full design");
  const auto p = static_cast<Eigen::Index>(d.meta.ncol);
  const Eigen::Index shift = fit.theta.size() - p;  // event-count intercepts
  const Eigen::VectorXd beta = fit.theta.tail(p);
  Eigen::MatrixXd inc = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(d.risk_rows.size()),
                                              fit.theta.size());
  for (std::size_t i = 0; i < d.risk_rows.size(); ++i) {
    const Eigen::MatrixXd& x = d.risk_rows[i];
    const Eigen::VectorXd eta = x * beta;
    const double m = eta.maxCoeff();
    const Eigen::VectorXd w = (eta.array() - m).exp();
    const Eigen::VectorXd prob = w / w.sum();
    inc.row(static_cast<Eigen::Index>(i)).tail(p) =
        x.row(d.case_pos[i]) - prob.transpose() * x;
  }
  (void)shift;
  return detail::finish_process(std::move(inc), fit);
}

inline GofProcess gof_process(const FitResult& fit, const SampledDesign& d) {
  if (fit.regime != "clogit")
    fail(errc::config, "fit regime '" + fit.regime + "' does not match a sampled design");
  Eigen::MatrixXd inc(static_cast<Eigen::Index>(d.alt.size()), fit.theta.size());
  for (std::size_t i = 0; i < d.alt.size(); ++i) {
    const Eigen::MatrixXd& x = d.alt[i];
    const Eigen::VectorXd eta = x * fit.theta;
    const double m = eta.maxCoeff();
    const Eigen::VectorXd w = (eta.array() - m).exp();
    const Eigen::VectorXd prob = w / w.sum();
    inc.row(static_cast<Eigen::Index>(i)) = x.row(0) - prob.transpose() * x;
  }
  return detail::finish_process(std::move(inc), fit);
}

inline GofProcess gof_process(const FitResult& fit, const CCDesign& d) {
  if (fit.regime != "ccgam")
    fail(errc::config, "fit regime '" + fit.regime + "' does not match a case-control design");
  Eigen::MatrixXd inc(d.deltas.rows(), fit.theta.size());
  for (Eigen::Index i = 0; i < d.deltas.rows(); ++i) {
    const double z = d.deltas.row(i).dot(fit.theta);
    inc.row(i) = d.deltas.row(i) / (1.0 + std::exp(z));
  }
  return detail::finish_process(std::move(inc), fit);
}

// Standard q-dimensional Brownian bridge on {i/n}: cumulative N(0, 1/n)
// increments minus u times the endpoint.
struct BridgePath {
  Eigen::MatrixXd path;  // n x q, endpoint row is exactly zero
  double sup_abs = 0.0;
  double sup_norm2 = 0.0;
};

inline BridgePath simulate_bridge(std::size_t q, std::size_t n, Rng& rng) {
  if (q == 0 || n == 0) fail(errc::config, "bridge needs q >= 1 and n >= 1");
  BridgePath out;
  out.path.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(q));
  const double sd = 1.0 / std::sqrt(static_cast<double>(n));
  Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(static_cast<Eigen::Index>(q));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < q; ++j)
      out.path(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = sd * rng.normal();
    acc += out.path.row(static_cast<Eigen::Index>(i));
    out.path.row(static_cast<Eigen::Index>(i)) = acc;
  }
  const Eigen::RowVectorXd total = acc;
  for (std::size_t i = 0; i < n; ++i) {
    const double u = static_cast<double>(i + 1) / static_cast<double>(n);
    out.path.row(static_cast<Eigen::Index>(i)) -= u * total;
    const double norm2 = out.path.row(static_cast<Eigen::Index>(i)).squaredNorm();
    out.sup_norm2 = std::max(out.sup_norm2, norm2);
    out.sup_abs = std::max(out.sup_abs,
                           out.path.row(static_cast<Eigen::Index>(i)).cwiseAbs().maxCoeff());
  }
  return out;
}

namespace detail {

// Allocation-light bridge sup-||.||^2 for the replication loop.
inline double bridge_sup_norm2(std::size_t q, std::size_t n, Rng& rng) {
  Eigen::MatrixXd incs(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(q));
  const double sd = 1.0 / std::sqrt(static_cast<double>(n));
  Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(static_cast<Eigen::Index>(q));
  for (Eigen::Index i = 0; i < incs.rows(); ++i) {
    for (Eigen::Index j = 0; j < incs.cols(); ++j) incs(i, j) = sd * rng.normal();
    acc += incs.row(i);
    incs.row(i) = acc;
  }
  double sup = 0.0;
  for (Eigen::Index i = 0; i < incs.rows(); ++i) {
    const double u = static_cast<double>(i + 1) / static_cast<double>(n);
    sup = std::max(sup, (incs.row(i) - u * acc).squaredNorm());
  }
  return sup;
}

inline const ColumnBlock& find_block(const FitResult& fit, const std::string& term) {
  for (const auto& block : fit.blocks)
    if (block.name == term) return block;
  fail(errc::config, "no term named '" + term + "' in the fit");
}

}  // namespace detail

// Kolmogorov test for an unpenalized single-column term.
inline GofResult gof_test_linear(const FitResult& fit, const GofProcess& process,
                                 const std::string& term) {
  const ColumnBlock& block = detail::find_block(fit, term);
  if (block.penalty >= 0 || block.size != 1)
    fail(errc::config, "term '" + term + "' is not an unpenalized single column");
  const auto j = static_cast<Eigen::Index>(block.begin);
  const double info = fit.hessian(j, j);
  if (!(info > 0.0))
    fail(errc::numeric, "term '" + term + "' carries no information at the optimum");
  GofResult out;
  out.term = term;
  out.grid = process.grid;
  out.w_path = process.path.col(j) / std::sqrt(info);
  out.statistic = out.w_path.cwiseAbs().maxCoeff();
  out.p_value = kolmogorov_survival(out.statistic);
  out.method = "kolmogorov-exact";
  return out;
}

// Bridge-simulation test for a penalized block.
inline GofResult gof_test_smooth(const FitResult& fit, const GofProcess& process,
                                 const std::string& term, std::size_t bridge_reps, Rng& rng) {
  if (bridge_reps == 0) fail(errc::config, "bridge replication count required");
  if (bridge_reps < 1000)
    fail(errc::config, "need at least 1000 bridge replications for a stable p-value");
  const ColumnBlock& block = detail::find_block(fit, term);
  if (block.penalty < 0) fail(errc::config, "term '" + term + "' is not a penalized block");
  const auto begin = static_cast<Eigen::Index>(block.begin);
  const auto q = static_cast<Eigen::Index>(block.size);
  const auto n = process.increments.rows();

  const Eigen::MatrixXd e = process.increments.middleCols(begin, q);
  const Eigen::RowVectorXd mean = e.colwise().mean();
  const Eigen::MatrixXd centered = e.rowwise() - mean;
  GofResult out;
  out.term = term;
  out.grid = process.grid;
  out.j_hat = centered.transpose() * centered / static_cast<double>(n);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(out.j_hat);
  if (es.info() != Eigen::Success) fail(errc::numeric, "increment covariance decomposition failed");
  const Eigen::VectorXd ev = es.eigenvalues();
  const double cutoff = 1e-12 * std::max(ev.cwiseAbs().maxCoeff(), 1e-300);
  Eigen::VectorXd inv_sqrt = Eigen::VectorXd::Zero(q);
  Eigen::Index rank = 0;
  for (Eigen::Index j = 0; j < q; ++j)
    if (ev(j) > cutoff) {
      inv_sqrt(j) = 1.0 / std::sqrt(ev(j));
      ++rank;
    }
  out.j_rank = rank;
  if (rank == 0) fail(errc::numeric, "term '" + term + "' has a zero increment covariance");
  const Eigen::MatrixXd whiten =
      es.eigenvectors() * inv_sqrt.asDiagonal() * es.eigenvectors().transpose();

  out.w_path = process.path.middleCols(begin, q) * whiten.transpose() /
               std::sqrt(static_cast<double>(n));
  out.statistic = out.w_path.rowwise().squaredNorm().maxCoeff();

  std::size_t exceed = 0;
  for (std::size_t b = 0; b < bridge_reps; ++b) {
    Rng rep(rng.derive(b));
    if (detail::bridge_sup_norm2(static_cast<std::size_t>(rank),
                                 static_cast<std::size_t>(n), rep) >= out.statistic)
      ++exceed;
  }
  out.p_value = static_cast<double>(exceed) / static_cast<double>(bridge_reps);
  out.method = "bridge-simulation(" + std::to_string(bridge_reps) + ")";
  out.bridge_reps = bridge_reps;
  return out;
}

}  // namespace remkit
