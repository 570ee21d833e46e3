#pragma once

// Model designs: turning a formula plus computed statistics into numeric
// matrices for the likelihoods.
//
// Column layout is block-per-term. Linear terms keep the raw statistic.
// s(x, k, basis=bs) expands into a cubic B-spline basis with the constant
// coefficient direction removed (a partition-of-unity basis is only
// identified up to a vertical shift under softmax or differenced
// likelihoods), penalized by the reparameterized second-difference matrix.
// s(x, k, basis=tp) and tv(x, k) use thin-plate radial expansions with a
// quadrature curvature penalty; tv multiplies the basis by the statistic.
// re(factor) expands into one indicator column per level with a ridge
// penalty.
//
// Smooth and time-varying blocks are centered with offsets taken from the
// observed-event rows. Offsets cancel inside softmax-style likelihoods and
// in case-control differences; they keep reported term curves anchored and
// let the event-count intercept absorb block means.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "remkit/basis.hpp"
#include "remkit/error.hpp"
#include "remkit/events.hpp"
#include "remkit/exogenous.hpp"
#include "remkit/formula.hpp"
#include "remkit/risk.hpp"
#include "remkit/sampling.hpp"
#include "remkit/stats.hpp"

namespace remkit {

struct ColumnBlock {
  std::string name;
  TermKind kind = TermKind::linear;
  std::size_t begin = 0;
  std::size_t size = 0;
  int penalty = -1;  // index into DesignMeta::penalties, -1 when unpenalized
  int spec = -1;     // index into the declared statistics, -1 for re()
  SmoothBasis basis = SmoothBasis::bspline;
  std::vector<double> knots;       // bs: padded knots; tp/tv: radial centers
  Eigen::MatrixXd transform;       // raw-basis -> column map (bs only)
  Eigen::VectorXd centers;         // per-column offsets (smooth/tv blocks)
  std::string factor;              // re(): sender | receiver | type
};

struct PenaltyBlock {
  std::size_t block = 0;  // index into DesignMeta::blocks
  Eigen::MatrixXd matrix;
  double nu = 1.0;
};

struct DesignMeta {
  std::vector<ColumnBlock> blocks;
  std::vector<PenaltyBlock> penalties;
  std::vector<std::string> colnames;
  std::size_t ncol = 0;
  std::string strata;
  std::vector<std::string> warnings;
};

// Full-likelihood design: covariate row of the observed dyad plus rows for
// every dyad at risk, per event.
struct FullDesign {
  Eigen::MatrixXd case_rows;
  std::vector<Eigen::MatrixXd> risk_rows;
  std::vector<Eigen::Index> case_pos;  // row of the observed dyad within risk_rows[i]
  std::vector<double> interarrival;
  std::vector<type_id> event_type;
  std::size_t n_types = 0;
  DesignMeta meta;
};

// Sampled design: observed row first, then the sampled non-events.
struct SampledDesign {
  std::vector<Eigen::MatrixXd> alt;
  std::vector<std::size_t> event_index;
  DesignMeta meta;
};

// Case-control design: one differenced row per (event, control) pair.
struct CCDesign {
  Eigen::MatrixXd deltas;
  std::vector<std::size_t> event_index;
  DesignMeta meta;
};

namespace detail {

inline int spec_index(const std::vector<StatisticSpec>& specs, const std::string& name) {
  for (std::size_t i = 0; i < specs.size(); ++i)
    if (specs[i].name == name) return static_cast<int>(i);
  return -1;
}

// Declared statistics referenced by the formula, in first-use order.
inline std::vector<int> referenced_specs(const std::vector<StatisticSpec>& specs,
                                         const Formula& formula) {
  std::vector<int> used;
  for (const auto& term : formula.terms) {
    if (term.kind == TermKind::random_effect) continue;
    const int idx = spec_index(specs, term.target);
    if (idx < 0) fail(errc::config, "formula references undeclared statistic '" + term.target + "'");
    if (std::find(used.begin(), used.end(), idx) == used.end()) used.push_back(idx);
  }
  return used;
}

inline bool is_triadic(Mechanism m) {
  return m == Mechanism::transitive_closure || m == Mechanism::cyclic_closure;
}

inline bool is_dyadic(Mechanism m) {
  return m == Mechanism::reciprocity || m == Mechanism::repetition;
}

}  // namespace detail

// Encodes one observation (statistic values, evaluation time, dyad, type)
// into a design row. Built once per fit; basis placement comes from the
// observed-event rows so every likelihood regime of the same data shares
// identical columns.
class TermEncoder {
 public:
  TermEncoder(const History& history, const std::vector<StatisticSpec>& specs,
              const Formula& formula, const std::vector<int>& used,
              const std::vector<std::vector<double>>& case_columns, double t_end) {
    const EventSequence& seq = history.sequence();
    meta_.strata = formula.strata;
    if (!formula.strata.empty() && formula.strata != "type")
      fail(errc::config, "only strata(type) is supported");
    if (formula.strata == "type" && seq.types.size() == 0)
      fail(errc::config, "strata(type) requires an event type column");

    std::size_t begin = 0;
    for (const auto& term : formula.terms) {
      ColumnBlock block;
      block.kind = term.kind;
      block.begin = begin;
      Plan plan;
      plan.kind = term.kind;

      if (term.kind == TermKind::random_effect) {
        block.name = "re(" + term.target + ")";
        block.factor = term.target;
        const Registry* reg = nullptr;
        if (term.target == "sender") {
          plan.factor = Plan::use_sender;
          reg = &seq.senders;
        } else if (term.target == "receiver") {
          plan.factor = Plan::use_receiver;
          reg = &seq.receiver_registry();
        } else if (term.target == "type") {
          plan.factor = Plan::use_type;
          if (seq.types.size() == 0) fail(errc::config, "re(type): no event types declared");
          reg = &seq.types;
        } else {
          fail(errc::config, "re(" + term.target + "): unknown grouping factor");
        }
        block.size = reg->size();
        for (std::size_t l = 0; l < reg->size(); ++l)
          meta_.colnames.push_back(block.name + ":" + reg->label(static_cast<node_id>(l)));
        PenaltyBlock pen;
        pen.block = meta_.blocks.size();
        pen.matrix = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(block.size),
                                               static_cast<Eigen::Index>(block.size));
        block.penalty = static_cast<int>(meta_.penalties.size());
        meta_.penalties.push_back(std::move(pen));
      } else {
        const int spec_idx = detail::spec_index(specs, term.target);
        block.spec = spec_idx;
        plan.value_pos = static_cast<int>(
            std::find(used.begin(), used.end(), spec_idx) - used.begin());
        const std::vector<double>& values = case_columns[static_cast<std::size_t>(plan.value_pos)];

        if (term.kind == TermKind::linear) {
          block.name = term.target;
          block.size = 1;
          meta_.colnames.push_back(block.name);
        } else if (term.kind == TermKind::smooth && term.basis == SmoothBasis::bspline) {
          block.name = "s(" + term.target + ")";
          block.basis = SmoothBasis::bspline;
          plan.knots = quantile_knots(values, term.k, 3);
          plan.z = drop_constant_direction(term.k);
          block.size = static_cast<std::size_t>(term.k - 1);
          block.knots = plan.knots;
          block.transform = plan.z;
          PenaltyBlock pen;
          pen.block = meta_.blocks.size();
          pen.matrix = plan.z.transpose() * difference_penalty(term.k) * plan.z;
          block.penalty = static_cast<int>(meta_.penalties.size());
          meta_.penalties.push_back(std::move(pen));
          for (std::size_t j = 1; j <= block.size; ++j)
            meta_.colnames.push_back(block.name + "." + std::to_string(j));
        } else {
          // Radial expansions: s(..., basis=tp) over covariate quantiles,
          // tv(...) over equally spaced time points on [0, t_end].
          const bool tv = term.kind == TermKind::time_varying;
          block.name = (tv ? "tv(" : "s(") + term.target + ")";
          block.basis = SmoothBasis::thinplate;
          double lo = 0.0, hi = t_end;
          if (tv) {
            if (!(t_end > 0.0)) fail(errc::config, "tv() needs a positive observation horizon");
            for (int j = 0; j < term.k; ++j)
              plan.knots.push_back(t_end * static_cast<double>(j) / (term.k - 1));
          } else {
            std::vector<double> uniq(values);
            std::sort(uniq.begin(), uniq.end());
            uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
            if (uniq.size() < static_cast<std::size_t>(term.k))
              fail(errc::config, block.name + ": fewer than k distinct covariate values");
            for (int j = 0; j < term.k; ++j) {
              const double pos = static_cast<double>(j) / (term.k - 1) *
                                 static_cast<double>(uniq.size() - 1);
              plan.knots.push_back(uniq[static_cast<std::size_t>(pos + 0.5)]);
            }
            lo = uniq.front();
            hi = uniq.back();
          }
          block.size = static_cast<std::size_t>(term.k);
          block.knots = plan.knots;
          PenaltyBlock pen;
          pen.block = meta_.blocks.size();
          pen.matrix = thinplate_penalty(plan.knots, lo, hi);
          block.penalty = static_cast<int>(meta_.penalties.size());
          meta_.penalties.push_back(std::move(pen));
          for (std::size_t j = 1; j <= block.size; ++j)
            meta_.colnames.push_back(block.name + "." + std::to_string(j));
        }
      }

      plan.begin = block.begin;
      plan.size = block.size;
      begin += block.size;
      plans_.push_back(std::move(plan));
      meta_.blocks.push_back(std::move(block));
    }
    meta_.ncol = begin;
    offsets_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(begin));

    // A closure term without a dyadic companion usually signals a
    // misspecified hierarchy; flag it but do not refuse.
    bool any_triadic = false, any_dyadic = false;
    for (const auto& block : meta_.blocks) {
      if (block.spec < 0) continue;
      const Mechanism m = specs[static_cast<std::size_t>(block.spec)].mechanism;
      any_triadic = any_triadic || detail::is_triadic(m);
      any_dyadic = any_dyadic || detail::is_dyadic(m);
    }
    if (any_triadic && !any_dyadic)
      meta_.warnings.push_back(
          "closure terms are present without reciprocity or repetition; "
          "triadic effects may absorb unmodeled dyadic structure");
  }

  std::size_t ncol() const { return meta_.ncol; }
  const DesignMeta& meta() const { return meta_; }
  DesignMeta& meta() { return meta_; }
  std::size_t clamped() const { return clamped_; }

  // values: referenced-statistic values in `used` order; t: evaluation time.
  using RowRef = Eigen::Ref<Eigen::RowVectorXd, 0, Eigen::InnerStride<>>;
  void encode(const std::vector<double>& values, double t, node_id s, node_id r, type_id type,
              RowRef out) const {
    for (std::size_t i = 0; i < plans_.size(); ++i) {
      const Plan& plan = plans_[i];
      const auto begin = static_cast<Eigen::Index>(plan.begin);
      const auto size = static_cast<Eigen::Index>(plan.size);
      switch (plan.kind) {
        case TermKind::linear:
          out(begin) = values[static_cast<std::size_t>(plan.value_pos)];
          break;
        case TermKind::smooth:
          if (!plan.z.size()) {
            const auto b = thinplate_basis(values[static_cast<std::size_t>(plan.value_pos)],
                                           plan.knots);
            for (Eigen::Index j = 0; j < size; ++j) out(begin + j) = b[static_cast<std::size_t>(j)];
          } else {
            const auto b = bspline_basis(values[static_cast<std::size_t>(plan.value_pos)],
                                         plan.knots, 3, &clamped_);
            Eigen::Map<const Eigen::RowVectorXd> raw(b.data(),
                                                     static_cast<Eigen::Index>(b.size()));
            out.segment(begin, size) = raw * plan.z;
          }
          break;
        case TermKind::time_varying: {
          const double x = values[static_cast<std::size_t>(plan.value_pos)];
          const auto b = thinplate_basis(t, plan.knots);
          for (Eigen::Index j = 0; j < size; ++j)
            out(begin + j) = x * b[static_cast<std::size_t>(j)];
          break;
        }
        case TermKind::random_effect: {
          out.segment(begin, size).setZero();
          const node_id level = plan.factor == Plan::use_sender
                                    ? s
                                    : (plan.factor == Plan::use_receiver ? r : type);
          out(begin + static_cast<Eigen::Index>(level)) = 1.0;
          break;
        }
      }
    }
    out -= offsets_.transpose();
  }

  // Center smooth and time-varying blocks on the observed-event rows.
  // Call once, before encoding anything but the case rows.
  void set_offsets(const Eigen::MatrixXd& case_rows) {
    for (auto& block : meta_.blocks) {
      if (block.kind != TermKind::smooth && block.kind != TermKind::time_varying) continue;
      const auto begin = static_cast<Eigen::Index>(block.begin);
      const auto size = static_cast<Eigen::Index>(block.size);
      block.centers = case_rows.middleCols(begin, size).colwise().mean();
      offsets_.segment(begin, size) = block.centers;
    }
  }

  const Eigen::VectorXd& offsets() const { return offsets_; }

 private:
  struct Plan {
    TermKind kind = TermKind::linear;
    int value_pos = -1;
    std::size_t begin = 0, size = 0;
    std::vector<double> knots;
    Eigen::MatrixXd z;
    enum Factor { use_sender, use_receiver, use_type } factor = use_sender;
  };
  std::vector<Plan> plans_;
  DesignMeta meta_;
  Eigen::VectorXd offsets_;
  mutable std::size_t clamped_ = 0;
};

namespace detail {

inline std::vector<StatisticSpec> subset_specs(const std::vector<StatisticSpec>& specs,
                                               const std::vector<int>& used) {
  std::vector<StatisticSpec> out;
  out.reserve(used.size());
  for (int idx : used) out.push_back(specs[static_cast<std::size_t>(idx)]);
  return out;
}

// Per-event within-risk-set variation, the information the softmax
// likelihoods actually see. A block with no variation anywhere cannot be
// estimated; report it rather than letting the fit wander.
inline void check_blocks(const Eigen::MatrixXd& variation, const DesignMeta& meta,
                         const std::vector<StatisticSpec>& specs, bool differenced) {
  std::vector<Eigen::Index> free_cols;
  for (const auto& block : meta.blocks) {
    const auto begin = static_cast<Eigen::Index>(block.begin);
    const auto size = static_cast<Eigen::Index>(block.size);
    const double scale = variation.middleCols(begin, size).cwiseAbs().maxCoeff();
    if (scale <= 1e-12) {
      std::string msg = "term '" + block.name + "' has no variation ";
      msg += differenced ? "across case-control pairs" : "within any risk set";
      if (block.spec >= 0) {
        const auto& spec = specs[static_cast<std::size_t>(block.spec)];
        if (spec.mechanism == Mechanism::exogenous_global)
          msg += "; a global covariate needs the shifted case-control regime to be identified";
      }
      fail(errc::config, msg);
    }
    if (block.penalty < 0)
      for (Eigen::Index j = 0; j < size; ++j) free_cols.push_back(begin + j);
  }
  if (!free_cols.empty()) {
    Eigen::MatrixXd sub(variation.rows(), static_cast<Eigen::Index>(free_cols.size()));
    for (std::size_t j = 0; j < free_cols.size(); ++j) sub.col(static_cast<Eigen::Index>(j)) =
        variation.col(free_cols[j]);
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(sub);
    if (qr.rank() < sub.cols())
      fail(errc::config, "design is rank deficient across unpenalized columns");
  }
}

}  // namespace detail

inline FullDesign build_full_design(const History& history, const RiskSetTimeline& rst,
                                    const std::vector<StatisticSpec>& specs,
                                    const Formula& formula) {
  const EventSequence& seq = history.sequence();
  const std::size_t n = seq.n();
  if (n == 0) fail(errc::data, "no events");
  const std::vector<int> used = detail::referenced_specs(specs, formula);
  const std::vector<StatisticSpec> used_specs = detail::subset_specs(specs, used);

  std::vector<StatRow> case_points;
  case_points.reserve(n);
  for (const auto& ev : seq.events) case_points.push_back({ev.sender, ev.receiver, ev.time});
  const auto case_columns = compute_columns(history, used_specs, case_points);

  TermEncoder enc(history, specs, formula, used, case_columns, seq.t_end);
  const auto p = static_cast<Eigen::Index>(enc.ncol());

  FullDesign out;
  out.case_rows.resize(static_cast<Eigen::Index>(n), p);
  std::vector<double> vals(used.size());
  for (std::size_t i = 0; i < n; ++i) {
    const auto& ev = seq.events[i];
    for (std::size_t j = 0; j < used.size(); ++j) vals[j] = case_columns[j][i];
    enc.encode(vals, ev.time, ev.sender, ev.receiver, ev.type, out.case_rows.row(static_cast<Eigen::Index>(i)));
  }
  enc.set_offsets(out.case_rows);
  out.case_rows.rowwise() -= enc.offsets().transpose();

  // Risk rows for all events in one statistics sweep.
  std::vector<std::vector<Dyad>> risk_dyads(n);
  std::vector<StatRow> points;
  for (std::size_t i = 0; i < n; ++i) {
    risk_dyads[i] = rst.materialize(seq.events[i].time, seq.events[i].type);
    if (risk_dyads[i].empty())
      fail(errc::data, "empty risk set at event " + std::to_string(i));
    for (const Dyad& d : risk_dyads[i]) points.push_back({d.s, d.r, seq.events[i].time});
  }
  const auto risk_columns = compute_columns(history, used_specs, points);

  out.risk_rows.resize(n);
  out.case_pos.assign(n, -1);
  out.interarrival.resize(n);
  out.event_type.resize(n);
  out.n_types = seq.types.size();
  std::size_t flat = 0;
  double prev_t = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& ev = seq.events[i];
    const auto rows = static_cast<Eigen::Index>(risk_dyads[i].size());
    out.risk_rows[i].resize(rows, p);
    for (Eigen::Index k = 0; k < rows; ++k, ++flat) {
      const Dyad d = risk_dyads[i][static_cast<std::size_t>(k)];
      for (std::size_t j = 0; j < used.size(); ++j) vals[j] = risk_columns[j][flat];
      enc.encode(vals, ev.time, d.s, d.r, ev.type, out.risk_rows[i].row(k));
      if (d.s == ev.sender && d.r == ev.receiver) out.case_pos[i] = k;
    }
    if (out.case_pos[i] < 0)
      fail(errc::data, "observed event " + std::to_string(i) + " is not in its own risk set");
    out.interarrival[i] = ev.time - prev_t;
    prev_t = ev.time;
    out.event_type[i] = ev.type;
  }

  Eigen::MatrixXd variation(static_cast<Eigen::Index>(points.size()), p);
  Eigen::Index row = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::RowVectorXd mean = out.risk_rows[i].colwise().mean();
    variation.middleRows(row, out.risk_rows[i].rows()) = out.risk_rows[i].rowwise() - mean;
    row += out.risk_rows[i].rows();
  }
  detail::check_blocks(variation, enc.meta(), specs, false);

  out.meta = enc.meta();
  return out;
}

inline SampledDesign build_sampled_design(const History& history,
                                          const std::vector<StatisticSpec>& specs,
                                          const Formula& formula,
                                          const std::vector<SampledRiskSet>& sets) {
  const EventSequence& seq = history.sequence();
  if (sets.empty()) fail(errc::data, "no sampled risk sets");
  const std::vector<int> used = detail::referenced_specs(specs, formula);
  const std::vector<StatisticSpec> used_specs = detail::subset_specs(specs, used);

  std::vector<StatRow> case_points;
  case_points.reserve(sets.size());
  for (const auto& srs : sets) {
    const auto& ev = seq.events[srs.event_index];
    case_points.push_back({ev.sender, ev.receiver, ev.time});
  }
  const auto case_columns = compute_columns(history, used_specs, case_points);

  TermEncoder enc(history, specs, formula, used, case_columns, seq.t_end);
  const auto p = static_cast<Eigen::Index>(enc.ncol());

  Eigen::MatrixXd case_rows(static_cast<Eigen::Index>(sets.size()), p);
  std::vector<double> vals(used.size());
  for (std::size_t i = 0; i < sets.size(); ++i) {
    const auto& ev = seq.events[sets[i].event_index];
    for (std::size_t j = 0; j < used.size(); ++j) vals[j] = case_columns[j][i];
    enc.encode(vals, ev.time, ev.sender, ev.receiver, ev.type,
               case_rows.row(static_cast<Eigen::Index>(i)));
  }
  enc.set_offsets(case_rows);
  case_rows.rowwise() -= enc.offsets().transpose();

  std::vector<StatRow> points;
  for (const auto& srs : sets) {
    const auto& ev = seq.events[srs.event_index];
    for (const Dyad& d : srs.controls) points.push_back({d.s, d.r, ev.time});
  }
  const auto ctrl_columns = compute_columns(history, used_specs, points);

  SampledDesign out;
  out.alt.resize(sets.size());
  out.event_index.reserve(sets.size());
  for (const auto& srs : sets) out.event_index.push_back(srs.event_index);
  std::size_t flat = 0;
  Eigen::Index vrow = 0;
  Eigen::MatrixXd variation(static_cast<Eigen::Index>(points.size() + sets.size()), p);
  for (std::size_t i = 0; i < sets.size(); ++i) {
    const auto& srs = sets[i];
    const auto& ev = seq.events[srs.event_index];
    const auto rows = static_cast<Eigen::Index>(srs.controls.size()) + 1;
    out.alt[i].resize(rows, p);
    out.alt[i].row(0) = case_rows.row(static_cast<Eigen::Index>(i));
    for (Eigen::Index k = 1; k < rows; ++k, ++flat) {
      const Dyad d = srs.controls[static_cast<std::size_t>(k - 1)];
      for (std::size_t j = 0; j < used.size(); ++j) vals[j] = ctrl_columns[j][flat];
      enc.encode(vals, ev.time, d.s, d.r, ev.type, out.alt[i].row(k));
    }
    const Eigen::RowVectorXd mean = out.alt[i].colwise().mean();
    variation.middleRows(vrow, rows) = out.alt[i].rowwise() - mean;
    vrow += rows;
  }
  detail::check_blocks(variation, enc.meta(), specs, false);

  out.meta = enc.meta();
  return out;
}

inline CCDesign build_cc_design(const History& history, const std::vector<StatisticSpec>& specs,
                                const Formula& formula, const std::vector<CaseControlRow>& rows) {
  const EventSequence& seq = history.sequence();
  if (rows.empty()) fail(errc::data, "no case-control rows");
  const std::vector<int> used = detail::referenced_specs(specs, formula);

  // One representative row per event anchors knot placement and offsets.
  std::vector<std::vector<double>> case_columns(used.size());
  std::vector<std::size_t> rep;
  std::size_t last_event = static_cast<std::size_t>(-1);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].event_index == last_event) continue;
    last_event = rows[i].event_index;
    rep.push_back(i);
    for (std::size_t j = 0; j < used.size(); ++j)
      case_columns[j].push_back(rows[i].case_values[static_cast<std::size_t>(used[j])]);
  }

  TermEncoder enc(history, specs, formula, used, case_columns, seq.t_end);
  const auto p = static_cast<Eigen::Index>(enc.ncol());

  Eigen::MatrixXd case_rep(static_cast<Eigen::Index>(rep.size()), p);
  std::vector<double> vals(used.size());
  for (std::size_t k = 0; k < rep.size(); ++k) {
    const auto& row = rows[rep[k]];
    const auto& ev = seq.events[row.event_index];
    for (std::size_t j = 0; j < used.size(); ++j)
      vals[j] = row.case_values[static_cast<std::size_t>(used[j])];
    enc.encode(vals, row.case_time, row.case_dyad.s, row.case_dyad.r, ev.type,
               case_rep.row(static_cast<Eigen::Index>(k)));
  }
  enc.set_offsets(case_rep);

  CCDesign out;
  out.deltas.resize(static_cast<Eigen::Index>(rows.size()), p);
  out.event_index.reserve(rows.size());
  Eigen::RowVectorXd case_row(p), ctrl_row(p);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& row = rows[i];
    const auto& ev = seq.events[row.event_index];
    for (std::size_t j = 0; j < used.size(); ++j)
      vals[j] = row.case_values[static_cast<std::size_t>(used[j])];
    enc.encode(vals, row.case_time, row.case_dyad.s, row.case_dyad.r, ev.type, case_row);
    for (std::size_t j = 0; j < used.size(); ++j)
      vals[j] = row.control_values[static_cast<std::size_t>(used[j])];
    enc.encode(vals, row.control_time, row.control_dyad.s, row.control_dyad.r, ev.type, ctrl_row);
    out.deltas.row(static_cast<Eigen::Index>(i)) = case_row - ctrl_row;
    out.event_index.push_back(row.event_index);
  }

  detail::check_blocks(out.deltas, enc.meta(), specs, true);
  out.meta = enc.meta();
  return out;
}

}  // namespace remkit
