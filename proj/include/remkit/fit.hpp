#pragma once

// Penalized maximum likelihood.
//
// Newton-Raphson with step halving is the default; every accepted step
// increases the penalized log-likelihood, and indefinite curvature is
// handled by Levenberg damping before giving up. A full-batch ADAM path
// exists as an optimizer cross-check. Smoothing parameters are chosen by
// K-fold cross-validated held-out log-likelihood over event indices,
// grid-searched per penalty on a log scale and refined by golden section
// (coordinate descent when several penalties are present).

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "remkit/error.hpp"
#include "remkit/likelihood.hpp"
#include "remkit/rng.hpp"

namespace remkit {

struct OptimizerConfig {
  enum class Method { newton, adam } method = Method::newton;
  double tol = 1e-8;       // penalized-score infinity norm
  int max_iter = 100;
  double separation_bound = 15.0;
  // ADAM (full batch unless adam_batch > 0)
  double adam_alpha = 1e-3;
  double adam_xi1 = 0.9;
  double adam_xi2 = 0.999;
  double adam_eps = 1e-8;
  int adam_max_iter = 50000;
  std::size_t adam_batch = 0;
  // smoothing-parameter selection; non-empty fix_nu skips cross-validation
  // and uses these values, one per penalized term in block order
  int cv_folds = 5;
  std::uint64_t cv_seed = 20260817;
  std::vector<double> fix_nu;
};

struct FitResult {
  Eigen::VectorXd theta;
  double loglik = 0.0;            // unpenalized log-likelihood at theta
  double penalized_loglik = 0.0;
  double score_norm = 0.0;        // penalized score, infinity norm
  Eigen::MatrixXd hessian;        // observed information H (positive side)
  Eigen::MatrixXd curvature;      // H + P
  Eigen::MatrixXd covariance;     // sandwich for penalized fits, H^{-1} otherwise
  Eigen::VectorXd se;
  std::vector<double> edf_block;  // per block, unpenalized = column count
  double edf_total = 0.0;
  double aic = 0.0;
  std::vector<double> nu;
  std::string regime;
  int iterations = 0;
  bool converged = false;
  bool separation = false;
  std::vector<double> ascent;     // penalized log-likelihood after each accepted step
  std::vector<ColumnBlock> blocks;
  std::vector<PenaltyBlock> penalties;
  std::vector<std::string> colnames;
};

namespace detail {

inline Eigen::MatrixXd penalty_matrix(Eigen::Index dim, const std::vector<ColumnBlock>& blocks,
                                      const std::vector<PenaltyBlock>& penalties) {
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(dim, dim);
  for (const auto& pen : penalties) {
    const auto& block = blocks[pen.block];
    p.block(static_cast<Eigen::Index>(block.begin), static_cast<Eigen::Index>(block.begin),
            static_cast<Eigen::Index>(block.size), static_cast<Eigen::Index>(block.size)) +=
        pen.nu * pen.matrix;
  }
  return p;
}

struct SolveOutcome {
  Eigen::VectorXd theta;
  double penalized_loglik = -std::numeric_limits<double>::infinity();
  double score_norm = std::numeric_limits<double>::infinity();
  int iterations = 0;
  bool converged = false;
  bool separation = false;
  std::vector<double> ascent;  // penalized log-likelihood after each accepted step
};

inline SolveOutcome newton_solve(const Likelihood& lik, const Eigen::MatrixXd& P,
                                 const OptimizerConfig& cfg, const EventMask* mask) {
  const Eigen::Index dim = lik.dim();
  SolveOutcome out;
  out.theta = Eigen::VectorXd::Zero(dim);
  ObjectiveParts parts = lik.eval(out.theta, 2, mask);
  out.penalized_loglik = parts.value;  // penalty is zero at theta = 0
  out.ascent.push_back(out.penalized_loglik);

  for (int iter = 1; iter <= cfg.max_iter; ++iter) {
    out.iterations = iter;
    const Eigen::VectorXd score = parts.gradient - P * out.theta;
    out.score_norm = score.lpNorm<Eigen::Infinity>();
    if (out.score_norm < cfg.tol) {
      out.converged = true;
      return out;
    }

    Eigen::MatrixXd curvature = -parts.hessian + P;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(curvature);
    double damping = 1e-8 * std::max(1.0, curvature.trace() / static_cast<double>(dim));
    int damp_tries = 0;
    while (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
      if (++damp_tries > 24) fail(errc::numeric, "indefinite curvature persists under damping");
      curvature.diagonal().array() += damping;
      damping *= 10.0;
      ldlt.compute(curvature);
    }
    const Eigen::VectorXd direction = ldlt.solve(score);

    // Step halving keeps ascent monotone up to summation rounding.  Near the
    // optimum the objective changes by less than its own floating-point noise
    // (score 1e-8 moves the value by ~1e-18), so a candidate may evaluate a
    // few ulps below the incumbent even when it is the better point.  The
    // slack admits the full Newton step in that regime; convergence is still
    // governed entirely by the score norm.
    const double slack = 1e-10 * (1.0 + std::abs(out.penalized_loglik));
    double step = 1.0;
    bool accepted = false;
    for (int half = 0; half < 40; ++half) {
      const Eigen::VectorXd candidate = out.theta + step * direction;
      const double value = lik.eval(candidate, 0, mask).value;
      const double pll = value - 0.5 * candidate.dot(P * candidate);
      if (std::isfinite(pll) && pll >= out.penalized_loglik - slack) {
        out.theta = candidate;
        out.penalized_loglik = pll;
        out.ascent.push_back(pll);
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) return out;  // no ascent direction left; report as-is

    parts = lik.eval(out.theta, 2, mask);
    if (out.theta.lpNorm<Eigen::Infinity>() > cfg.separation_bound) {
      // still improving but the coefficient is running away: monotone
      // likelihood (complete separation in the choice sets)
      out.separation = true;
      out.score_norm = (parts.gradient - P * out.theta).lpNorm<Eigen::Infinity>();
      return out;
    }
  }
  out.score_norm =
      (lik.eval(out.theta, 1, mask).gradient - P * out.theta).lpNorm<Eigen::Infinity>();
  out.converged = out.score_norm < cfg.tol;
  return out;
}

inline SolveOutcome adam_solve(const Likelihood& lik, const Eigen::MatrixXd& P,
                               const OptimizerConfig& cfg, const EventMask* mask) {
  const Eigen::Index dim = lik.dim();
  SolveOutcome out;
  out.theta = Eigen::VectorXd::Zero(dim);
  Eigen::VectorXd m = Eigen::VectorXd::Zero(dim), v = Eigen::VectorXd::Zero(dim);
  double alpha = cfg.adam_alpha;

  // Optional mini-batching: a seeded shuffle fixes the deck once, batches
  // walk it cyclically.
  const std::size_t n = lik.event_count();
  std::vector<std::uint32_t> deck;
  EventMask batch_mask;
  std::size_t cursor = 0;
  if (cfg.adam_batch > 0 && cfg.adam_batch < n) {
    for (std::size_t i = 0; i < n; ++i)
      if (!mask || (*mask)[i]) deck.push_back(static_cast<std::uint32_t>(i));
    Rng rng(cfg.cv_seed ^ 0xada3u);
    for (std::size_t i = deck.size(); i > 1; --i)
      std::swap(deck[i - 1], deck[rng.below(i)]);
    batch_mask.assign(n, 0);
  }

  double best = -std::numeric_limits<double>::infinity();
  const int check_every = 50;
  for (int iota = 1; iota <= cfg.adam_max_iter; ++iota) {
    out.iterations = iota;
    const EventMask* use_mask = mask;
    if (!deck.empty()) {
      std::fill(batch_mask.begin(), batch_mask.end(), 0);
      for (std::size_t b = 0; b < cfg.adam_batch; ++b) {
        batch_mask[deck[cursor]] = 1;
        cursor = (cursor + 1) % deck.size();
      }
      use_mask = &batch_mask;
    }
    ObjectiveParts parts = lik.eval(out.theta, 1, use_mask);
    const Eigen::VectorXd score = parts.gradient - P * out.theta;
    if (deck.empty()) {
      out.score_norm = score.lpNorm<Eigen::Infinity>();
      if (out.score_norm < cfg.tol) {
        out.converged = true;
        break;
      }
    }
    m = cfg.adam_xi1 * m + (1.0 - cfg.adam_xi1) * score;
    v = cfg.adam_xi2 * v.array().matrix() +
        (1.0 - cfg.adam_xi2) * score.cwiseProduct(score);
    const double c1 = 1.0 - std::pow(cfg.adam_xi1, iota);
    const double c2 = 1.0 - std::pow(cfg.adam_xi2, iota);
    const Eigen::VectorXd mhat = m / c1;
    const Eigen::VectorXd vhat = v / c2;
    out.theta += alpha * (mhat.array() / (vhat.array().sqrt() + cfg.adam_eps)).matrix();

    if (iota % check_every == 0) {
      const double value = lik.eval(out.theta, 0, mask).value;
      const double pll = value - 0.5 * out.theta.dot(P * out.theta);
      if (pll <= best + 1e-10 * (1.0 + std::abs(best))) {
        alpha *= 0.5;  // plateau: tighten the step
        if (alpha < 1e-8) break;
      }
      best = std::max(best, pll);
    }
  }
  const ObjectiveParts fin = lik.eval(out.theta, 1, mask);
  out.penalized_loglik = fin.value - 0.5 * out.theta.dot(P * out.theta);
  out.score_norm = (fin.gradient - P * out.theta).lpNorm<Eigen::Infinity>();
  out.converged = out.converged || out.score_norm < cfg.tol;
  return out;
}

// Sum of held-out log-likelihoods over K folds for one nu configuration.
inline double cv_score(const Likelihood& lik, const std::vector<ColumnBlock>& blocks,
                       std::vector<PenaltyBlock> penalties, const std::vector<double>& nu,
                       const OptimizerConfig& cfg, const std::vector<int>& fold) {
  for (std::size_t l = 0; l < penalties.size(); ++l) penalties[l].nu = nu[l];
  const Eigen::MatrixXd P = penalty_matrix(lik.dim(), blocks, penalties);
  OptimizerConfig inner = cfg;
  inner.method = OptimizerConfig::Method::newton;
  double total = 0.0;
  for (int k = 0; k < cfg.cv_folds; ++k) {
    EventMask train(fold.size()), test(fold.size());
    for (std::size_t i = 0; i < fold.size(); ++i) {
      train[i] = fold[i] != k;
      test[i] = fold[i] == k;
    }
    try {
      const SolveOutcome sol = newton_solve(lik, P, inner, &train);
      const double held = lik.eval(sol.theta, 0, &test).value;
      if (!std::isfinite(held)) return -std::numeric_limits<double>::infinity();
      total += held;
    } catch (const Error&) {
      return -std::numeric_limits<double>::infinity();
    }
  }
  return total;
}

inline std::vector<double> select_nu(const Likelihood& lik,
                                     const std::vector<ColumnBlock>& blocks,
                                     const std::vector<PenaltyBlock>& penalties,
                                     const OptimizerConfig& cfg) {
  const std::size_t n = lik.event_count();
  if (cfg.cv_folds < 2) fail(errc::config, "cross-validation needs at least 2 folds");
  std::vector<std::uint32_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0u);
  Rng rng(cfg.cv_seed);
  for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
  std::vector<int> fold(n);
  for (std::size_t i = 0; i < n; ++i) fold[perm[i]] = static_cast<int>(i % cfg.cv_folds);

  std::vector<double> nu(penalties.size(), 1.0);
  auto objective = [&](std::size_t l, double log10_nu) {
    std::vector<double> trial = nu;
    trial[l] = std::pow(10.0, log10_nu);
    return cv_score(lik, blocks, penalties, trial, cfg, fold);
  };

  const int sweeps = penalties.size() > 1 ? 2 : 1;
  for (int sweep = 0; sweep < sweeps; ++sweep) {
    for (std::size_t l = 0; l < penalties.size(); ++l) {
      double best_x = 0.0, best_score = -std::numeric_limits<double>::infinity();
      for (int g = -4; g <= 4; ++g) {
        const double s = objective(l, g);
        if (s > best_score) {
          best_score = s;
          best_x = g;
        }
      }
      // Golden-section refinement one decade around the grid winner.
      const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
      double a = best_x - 1.0, b = best_x + 1.0;
      double x1 = b - gr * (b - a), x2 = a + gr * (b - a);
      double f1 = objective(l, x1), f2 = objective(l, x2);
      for (int it = 0; it < 10; ++it) {
        if (f1 < f2) {
          a = x1;
          x1 = x2;
          f1 = f2;
          x2 = a + gr * (b - a);
          f2 = objective(l, x2);
        } else {
          b = x2;
          x2 = x1;
          f2 = f1;
          x1 = b - gr * (b - a);
          f1 = objective(l, x1);
        }
      }
      const double xs = f1 > f2 ? x1 : x2;
      const double fs = std::max(f1, f2);
      nu[l] = std::pow(10.0, fs > best_score ? xs : best_x);
    }
  }
  return nu;
}

// Derived quantities at a final theta: observed information, effective
// degrees of freedom, AIC, and the coefficient covariance. Clears the
// converged flag when the penalized curvature is not positive definite.
inline void finish_fit(const Likelihood& lik, const Eigen::MatrixXd& P, FitResult& res) {
  const ObjectiveParts parts = lik.eval(res.theta, 2);
  res.loglik = parts.value;
  res.hessian = -parts.hessian;
  res.curvature = res.hessian + P;

  Eigen::LDLT<Eigen::MatrixXd> ldlt(res.curvature);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
    res.converged = false;
    res.se = Eigen::VectorXd::Constant(lik.dim(), std::numeric_limits<double>::quiet_NaN());
    res.edf_block.assign(res.blocks.size(), 0.0);
    return;
  }

  // Effective degrees of freedom: trace of the block of (H+P)^{-1} H for
  // penalized blocks; an unpenalized block spends one df per column.
  const Eigen::MatrixXd influence = ldlt.solve(res.hessian);
  res.edf_block.clear();
  res.edf_total = 0.0;
  for (const auto& block : res.blocks) {
    double edf = static_cast<double>(block.size);
    if (block.penalty >= 0) {
      edf = 0.0;
      for (std::size_t j = 0; j < block.size; ++j) {
        const auto col = static_cast<Eigen::Index>(block.begin + j);
        edf += influence(col, col);
      }
    }
    res.edf_block.push_back(edf);
    res.edf_total += edf;
  }
  res.aic = -2.0 * res.loglik + 2.0 * res.edf_total;

  if (res.penalties.empty()) {
    Eigen::LDLT<Eigen::MatrixXd> hld(res.hessian);
    if (hld.info() != Eigen::Success || !hld.isPositive())
      fail(errc::numeric, "singular curvature: standard errors are not defined");
    res.covariance = hld.solve(Eigen::MatrixXd::Identity(lik.dim(), lik.dim()));
  } else {
    // sandwich (H+P)^{-1} H (H+P)^{-1}
    const Eigen::MatrixXd inv = ldlt.solve(Eigen::MatrixXd::Identity(lik.dim(), lik.dim()));
    res.covariance = inv * res.hessian * inv;
  }
  res.se = res.covariance.diagonal().cwiseSqrt();
}

}  // namespace detail

inline FitResult fit(const Likelihood& lik, OptimizerConfig cfg = {}) {
  if (cfg.adam_xi1 < 0.0 || cfg.adam_xi1 >= 1.0 || cfg.adam_xi2 < 0.0 || cfg.adam_xi2 >= 1.0)
    fail(errc::config, "ADAM decay rates must lie in [0, 1)");
  if (!(cfg.adam_eps > 0.0)) fail(errc::config, "ADAM epsilon must be positive");
  if (!(cfg.tol > 0.0)) fail(errc::config, "tolerance must be positive");

  FitResult res;
  res.blocks = lik.blocks();
  res.penalties = lik.penalties();
  res.colnames = lik.colnames();
  res.regime = lik.regime();

  if (!res.penalties.empty()) {
    if (!cfg.fix_nu.empty()) {
      if (cfg.fix_nu.size() != res.penalties.size())
        fail(errc::config, "expected " + std::to_string(res.penalties.size()) +
                               " smoothing parameters, got " + std::to_string(cfg.fix_nu.size()));
      for (std::size_t l = 0; l < cfg.fix_nu.size(); ++l) {
        if (!(cfg.fix_nu[l] > 0.0)) fail(errc::config, "smoothing parameters must be positive");
        res.penalties[l].nu = cfg.fix_nu[l];
      }
    } else {
      const std::vector<double> nu = detail::select_nu(lik, res.blocks, res.penalties, cfg);
      for (std::size_t l = 0; l < nu.size(); ++l) res.penalties[l].nu = nu[l];
    }
  }
  for (const auto& pen : res.penalties) res.nu.push_back(pen.nu);

  const Eigen::MatrixXd P = detail::penalty_matrix(lik.dim(), res.blocks, res.penalties);
  const detail::SolveOutcome sol = cfg.method == OptimizerConfig::Method::newton
                                       ? detail::newton_solve(lik, P, cfg, nullptr)
                                       : detail::adam_solve(lik, P, cfg, nullptr);
  res.theta = sol.theta;
  res.penalized_loglik = sol.penalized_loglik;
  res.score_norm = sol.score_norm;
  res.iterations = sol.iterations;
  res.converged = sol.converged;
  res.separation = sol.separation;
  res.ascent = sol.ascent;

  detail::finish_fit(lik, P, res);
  return res;
}

// Rebuild the derived quantities (information, edf, covariance, AIC) for a
// coefficient vector obtained elsewhere, e.g. loaded from a saved fit.
// Smoothing parameters are taken as given; no optimization happens.
inline FitResult reconstruct_fit(const Likelihood& lik, const Eigen::VectorXd& theta,
                                 const std::vector<double>& nu) {
  FitResult res;
  res.blocks = lik.blocks();
  res.penalties = lik.penalties();
  res.colnames = lik.colnames();
  res.regime = lik.regime();
  if (theta.size() != lik.dim())
    fail(errc::config, "coefficient vector length " + std::to_string(theta.size()) +
                           " does not match the design (" + std::to_string(lik.dim()) +
                           " columns)");
  if (nu.size() != res.penalties.size())
    fail(errc::config, "expected " + std::to_string(res.penalties.size()) +
                           " smoothing parameters, got " + std::to_string(nu.size()));
  for (std::size_t l = 0; l < nu.size(); ++l) {
    if (!(nu[l] > 0.0)) fail(errc::config, "smoothing parameters must be positive");
    res.penalties[l].nu = nu[l];
    res.nu.push_back(nu[l]);
  }
  res.theta = theta;
  res.converged = true;
  const Eigen::MatrixXd P = detail::penalty_matrix(lik.dim(), res.blocks, res.penalties);
  const ObjectiveParts parts = lik.eval(theta, 1);
  res.penalized_loglik = parts.value - 0.5 * theta.dot(P * theta);
  res.score_norm = (parts.gradient - P * theta).lpNorm<Eigen::Infinity>();
  detail::finish_fit(lik, P, res);
  return res;
}

}  // namespace remkit
