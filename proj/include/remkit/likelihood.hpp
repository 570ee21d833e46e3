#pragma once

// The four likelihoods, each exposing value / gradient / Hessian behind a
// common interface so the optimizer and the cross-validation loop do not
// care which regime they are maximizing.
//
//   poisson  counting-process regression over (event, at-risk dyad) rows
//            with log interarrival offsets and explicit baseline
//            intercepts (one per stratum)
//   partial  softmax over the full risk set at each event
//   sampled  softmax over the observed dyad plus m sampled non-events
//   cc       paired case-control rows, -log(1 + exp(-theta' dh))
//
// Every evaluation accepts an optional event mask (by sequence event
// index) so folds can be held out without rebuilding designs.

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

#include "remkit/design.hpp"
#include "remkit/error.hpp"

namespace remkit {

struct ObjectiveParts {
  double value = 0.0;
  Eigen::VectorXd gradient;
  Eigen::MatrixXd hessian;  // second derivative of the log-likelihood (negative definite side)
};

using EventMask = std::vector<unsigned char>;

class Likelihood {
 public:
  virtual ~Likelihood() = default;
  virtual Eigen::Index dim() const = 0;
  virtual std::size_t event_count() const = 0;  // mask length
  virtual std::string regime() const = 0;
  // order: 0 value, 1 +gradient, 2 +hessian. mask: include event i iff mask[i].
  virtual ObjectiveParts eval(const Eigen::VectorXd& theta, int order,
                              const EventMask* mask = nullptr) const = 0;
  // Blocks and penalties in theta coordinates.
  virtual const std::vector<ColumnBlock>& blocks() const = 0;
  virtual const std::vector<PenaltyBlock>& penalties() const = 0;
  virtual const std::vector<std::string>& colnames() const = 0;
};

namespace detail {

// Softmax contribution of one choice set: rows of `x` are the alternatives,
// `chosen` the realized one. Accumulates into parts.
inline void softmax_term(const Eigen::MatrixXd& x, Eigen::Index chosen,
                         const Eigen::VectorXd& theta, int order, ObjectiveParts& parts) {
  const Eigen::VectorXd eta = x * theta;
  const double m = eta.maxCoeff();
  const Eigen::VectorXd w = (eta.array() - m).exp();
  const double denom = w.sum();
  parts.value += eta(chosen) - (m + std::log(denom));
  if (order < 1) return;
  const Eigen::VectorXd p = w / denom;
  const Eigen::RowVectorXd mean = p.transpose() * x;
  parts.gradient += x.row(chosen) - mean;
  if (order < 2) return;
  parts.hessian.noalias() -= x.transpose() * p.asDiagonal() * x;
  parts.hessian.noalias() += mean.transpose() * mean;
}

}  // namespace detail

// Counting-process regression. theta = [intercepts | beta]; one intercept
// per stratum (types under strata(type), otherwise a single baseline).
class PoissonLikelihood final : public Likelihood {
 public:
  explicit PoissonLikelihood(const FullDesign& design) : d_(design) {
    strata_ = d_.meta.strata == "type" ? std::max<std::size_t>(d_.n_types, 1) : 1;
    for (std::size_t i = 0; i < d_.interarrival.size(); ++i)
      if (!(d_.interarrival[i] > 0.0))
        fail(errc::data, "zero interarrival time at event " + std::to_string(i) +
                             "; jitter tied timestamps before fitting");
    const auto p = static_cast<Eigen::Index>(d_.meta.ncol);
    blocks_.reserve(d_.meta.blocks.size() + 1);
    ColumnBlock base;
    base.name = "(baseline)";
    base.begin = 0;
    base.size = strata_;
    blocks_.push_back(base);
    for (std::size_t s = 0; s < strata_; ++s)
      colnames_.push_back(strata_ == 1 ? "(baseline)" : "(baseline):" + std::to_string(s));
    for (const auto& b : d_.meta.blocks) {
      ColumnBlock shifted = b;
      shifted.begin += strata_;
      if (shifted.penalty >= 0) {
        PenaltyBlock pen = d_.meta.penalties[static_cast<std::size_t>(shifted.penalty)];
        pen.block = blocks_.size();
        shifted.penalty = static_cast<int>(penalties_.size());
        penalties_.push_back(std::move(pen));
      }
      blocks_.push_back(std::move(shifted));
    }
    for (const auto& name : d_.meta.colnames) colnames_.push_back(name);
    dim_ = static_cast<Eigen::Index>(strata_) + p;
  }

  Eigen::Index dim() const override { return dim_; }
  std::size_t event_count() const override { return d_.risk_rows.size(); }
  std::string regime() const override { return "poisson"; }
  const std::vector<ColumnBlock>& blocks() const override { return blocks_; }
  const std::vector<PenaltyBlock>& penalties() const override { return penalties_; }
  const std::vector<std::string>& colnames() const override { return colnames_; }
  std::size_t strata() const { return strata_; }

  ObjectiveParts eval(const Eigen::VectorXd& theta, int order,
                      const EventMask* mask = nullptr) const override {
    if (theta.size() != dim_) fail(errc::config, "theta dimension mismatch");
    const auto p = static_cast<Eigen::Index>(d_.meta.ncol);
    const Eigen::VectorXd beta = theta.tail(p);
    ObjectiveParts parts;
    if (order >= 1) parts.gradient = Eigen::VectorXd::Zero(dim_);
    if (order >= 2) parts.hessian = Eigen::MatrixXd::Zero(dim_, dim_);
    for (std::size_t i = 0; i < d_.risk_rows.size(); ++i) {
      if (mask && !(*mask)[i]) continue;
      const Eigen::Index stratum =
          strata_ == 1 ? 0 : static_cast<Eigen::Index>(d_.event_type[i]);
      const double offset = std::log(d_.interarrival[i]);
      const Eigen::MatrixXd& x = d_.risk_rows[i];
      const Eigen::VectorXd eta =
          (x * beta).array() + theta(stratum) + offset;
      const Eigen::VectorXd mu = eta.array().exp();
      parts.value += eta(d_.case_pos[i]) - mu.sum();
      if (order < 1) continue;
      parts.gradient(stratum) += 1.0 - mu.sum();
      Eigen::VectorXd resid = -mu;
      resid(d_.case_pos[i]) += 1.0;
      parts.gradient.tail(p).noalias() += x.transpose() * resid;
      if (order < 2) continue;
      parts.hessian(stratum, stratum) -= mu.sum();
      const Eigen::RowVectorXd xmu = mu.transpose() * x;
      parts.hessian.block(stratum, strata_, 1, p) -= xmu;
      parts.hessian.block(strata_, stratum, p, 1) -= xmu.transpose();
      parts.hessian.bottomRightCorner(p, p).noalias() -= x.transpose() * mu.asDiagonal() * x;
    }
    return parts;
  }

 private:
  const FullDesign& d_;
  std::size_t strata_ = 1;
  Eigen::Index dim_ = 0;
  std::vector<ColumnBlock> blocks_;
  std::vector<PenaltyBlock> penalties_;
  std::vector<std::string> colnames_;
};

class PartialLikelihood final : public Likelihood {
 public:
  explicit PartialLikelihood(const FullDesign& design) : d_(design) {}

  Eigen::Index dim() const override { return static_cast<Eigen::Index>(d_.meta.ncol); }
  std::size_t event_count() const override { return d_.risk_rows.size(); }
  std::string regime() const override { return "cox"; }
  const std::vector<ColumnBlock>& blocks() const override { return d_.meta.blocks; }
  const std::vector<PenaltyBlock>& penalties() const override { return d_.meta.penalties; }
  const std::vector<std::string>& colnames() const override { return d_.meta.colnames; }

  ObjectiveParts eval(const Eigen::VectorXd& theta, int order,
                      const EventMask* mask = nullptr) const override {
    if (theta.size() != dim()) fail(errc::config, "theta dimension mismatch");
    ObjectiveParts parts;
    if (order >= 1) parts.gradient = Eigen::VectorXd::Zero(dim());
    if (order >= 2) parts.hessian = Eigen::MatrixXd::Zero(dim(), dim());
    for (std::size_t i = 0; i < d_.risk_rows.size(); ++i) {
      if (mask && !(*mask)[i]) continue;
      detail::softmax_term(d_.risk_rows[i], d_.case_pos[i], theta, order, parts);
    }
    return parts;
  }

 private:
  const FullDesign& d_;
};

class SampledLikelihood final : public Likelihood {
 public:
  SampledLikelihood(const SampledDesign& design, std::size_t sequence_events)
      : d_(design), n_seq_(sequence_events) {}

  Eigen::Index dim() const override { return static_cast<Eigen::Index>(d_.meta.ncol); }
  std::size_t event_count() const override { return n_seq_; }
  std::string regime() const override { return "clogit"; }
  const std::vector<ColumnBlock>& blocks() const override { return d_.meta.blocks; }
  const std::vector<PenaltyBlock>& penalties() const override { return d_.meta.penalties; }
  const std::vector<std::string>& colnames() const override { return d_.meta.colnames; }

  ObjectiveParts eval(const Eigen::VectorXd& theta, int order,
                      const EventMask* mask = nullptr) const override {
    if (theta.size() != dim()) fail(errc::config, "theta dimension mismatch");
    ObjectiveParts parts;
    if (order >= 1) parts.gradient = Eigen::VectorXd::Zero(dim());
    if (order >= 2) parts.hessian = Eigen::MatrixXd::Zero(dim(), dim());
    for (std::size_t i = 0; i < d_.alt.size(); ++i) {
      if (mask && !(*mask)[d_.event_index[i]]) continue;
      detail::softmax_term(d_.alt[i], 0, theta, order, parts);
    }
    return parts;
  }

 private:
  const SampledDesign& d_;
  std::size_t n_seq_;
};

class CaseControlLikelihood final : public Likelihood {
 public:
  CaseControlLikelihood(const CCDesign& design, std::size_t sequence_events)
      : d_(design), n_seq_(sequence_events) {}

  Eigen::Index dim() const override { return static_cast<Eigen::Index>(d_.meta.ncol); }
  std::size_t event_count() const override { return n_seq_; }
  std::string regime() const override { return "ccgam"; }
  const std::vector<ColumnBlock>& blocks() const override { return d_.meta.blocks; }
  const std::vector<PenaltyBlock>& penalties() const override { return d_.meta.penalties; }
  const std::vector<std::string>& colnames() const override { return d_.meta.colnames; }

  ObjectiveParts eval(const Eigen::VectorXd& theta, int order,
                      const EventMask* mask = nullptr) const override {
    if (theta.size() != dim()) fail(errc::config, "theta dimension mismatch");
    ObjectiveParts parts;
    if (order >= 1) parts.gradient = Eigen::VectorXd::Zero(dim());
    if (order >= 2) parts.hessian = Eigen::MatrixXd::Zero(dim(), dim());
    for (Eigen::Index i = 0; i < d_.deltas.rows(); ++i) {
      if (mask && !(*mask)[d_.event_index[static_cast<std::size_t>(i)]]) continue;
      const double z = d_.deltas.row(i).dot(theta);
      // -log(1 + exp(-z)), stably on both sides
      parts.value += z > 0.0 ? -std::log1p(std::exp(-z)) : z - std::log1p(std::exp(z));
      if (order < 1) continue;
      const double sig = 1.0 / (1.0 + std::exp(z));  // sigma(-z)
      parts.gradient.noalias() += sig * d_.deltas.row(i).transpose();
      if (order < 2) continue;
      parts.hessian.noalias() -=
          sig * (1.0 - sig) * d_.deltas.row(i).transpose() * d_.deltas.row(i);
    }
    return parts;
  }

 private:
  const CCDesign& d_;
  std::size_t n_seq_;
};

}  // namespace remkit
