#pragma once

// Nested case-control sampling of non-events, and the shifted counting
// process construction that makes global covariates estimable in a partial
// likelihood. Sampling is deterministic: each event index gets its own
// derived RNG stream, so results do not depend on evaluation order and the
// same seed reproduces every set field for field.

#include <cstdint>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "remkit/error.hpp"
#include "remkit/events.hpp"
#include "remkit/exogenous.hpp"
#include "remkit/risk.hpp"
#include "remkit/rng.hpp"
#include "remkit/stats.hpp"

namespace remkit {

struct SampledRiskSet {
  std::size_t event_index = 0;
  Dyad case_dyad;
  std::vector<Dyad> controls;  // pairwise distinct, never the case
  std::uint64_t seed = 0;
};

struct SamplingWarnings {
  std::size_t clamped_events = 0;  // risk set smaller than requested m
  std::size_t dropped_rows = 0;    // shifted control resampling exhausted
};

// Uniform sample of m distinct non-case dyads from the risk set at the
// event's time (and stratum). Rejection sampling against the membership
// test keeps every draw unbiased; candidates come from the static dyad
// universe of the timeline.
inline std::vector<SampledRiskSet> sample_controls(const RiskSetTimeline& rst, std::size_t m,
                                                   const Rng& rng,
                                                   SamplingWarnings* warnings = nullptr) {
  if (m < 1) fail(errc::config, "control count m must be at least 1");
  const EventSequence& seq = rst.sequence();
  std::vector<SampledRiskSet> out;
  out.reserve(seq.n());
  for (std::size_t i = 0; i < seq.n(); ++i) {
    const auto& ev = seq.events[i];
    const Dyad case_dyad{ev.sender, ev.receiver};
    const std::size_t available = rst.size(ev.time, ev.type);
    if (available <= 1)
      fail(errc::data, "event #" + std::to_string(i + 1) +
                           ": risk set holds only the observed dyad; "
                           "use a full-likelihood regime instead of sampling");
    std::size_t want = m;
    if (want > available - 1) {
      want = available - 1;
      if (warnings) ++warnings->clamped_events;
    }
    SampledRiskSet srs;
    srs.event_index = i;
    srs.case_dyad = case_dyad;
    srs.seed = rng.seed();
    Rng stream = rng.derive(i);
    if (want == available - 1) {
      // Exhaustive: the entire risk set minus the case, deterministic order.
      rst.for_each(ev.time, ev.type, [&](Dyad d) {
        if (!(d == case_dyad)) srs.controls.push_back(d);
      });
    } else {
      std::vector<bool> taken(rst.universe(), false);
      taken[rst.dyad_index(case_dyad)] = true;
      while (srs.controls.size() < want) {
        const std::size_t idx = static_cast<std::size_t>(stream.below(rst.universe()));
        if (taken[idx]) continue;
        const Dyad d = rst.dyad_at(idx);
        if (!rst.at_risk(d, ev.time, ev.type)) continue;
        taken[idx] = true;
        srs.controls.push_back(d);
      }
    }
    out.push_back(std::move(srs));
  }
  return out;
}

// Per-dyad positive time shifts, drawn before seeing any events. tau is
// indexed by the timeline's dyad index.
struct ShiftTable {
  std::vector<double> tau;
  double horizon = 0.0;  // T + max tau
  std::uint64_t seed = 0;

  bool all_zero() const {
    for (double v : tau)
      if (v != 0.0) return false;
    return true;
  }
};

struct ShiftConfig {
  bool zero = false;   // degenerate mode: reproduces the unshifted process
  double scale = 0.0;  // uniform(0, scale); default applied by caller: T/10
};

inline ShiftTable draw_shifts(const RiskSetTimeline& rst, const ShiftConfig& cfg, const Rng& rng) {
  ShiftTable table;
  table.seed = rng.seed();
  table.tau.assign(rst.universe(), 0.0);
  double max_tau = 0.0;
  if (!cfg.zero) {
    if (!(cfg.scale > 0.0)) fail(errc::config, "shift scale must be positive");
    Rng stream = rng.derive(0x5u);
    for (auto& tau : table.tau) {
      tau = stream.uniform(0.0, cfg.scale);
      max_tau = std::max(max_tau, tau);
    }
  }
  table.horizon = rst.sequence().t_end + max_tau;
  return table;
}

// One sampled non-event for one observed event, with covariate values for
// both. In unshifted mode the control is evaluated at the case time; in
// shifted mode at t* = t_i + tau_case - tau_control, on the original time
// scale and against the original history prefix before t*.
struct CaseControlRow {
  std::size_t event_index = 0;
  Dyad case_dyad;
  double case_time = 0.0;
  Dyad control_dyad;
  double control_time = 0.0;
  std::vector<double> case_values, control_values, delta;
};

inline std::vector<CaseControlRow> build_case_control(const History& history,
                                                      const RiskSetTimeline& rst,
                                                      const std::vector<StatisticSpec>& specs,
                                                      std::size_t m, const Rng& rng,
                                                      const std::optional<ShiftTable>& shifts = {},
                                                      SamplingWarnings* warnings = nullptr) {
  if (m < 1) fail(errc::config, "control count m must be at least 1");
  const EventSequence& seq = rst.sequence();
  if (shifts && !shifts->all_zero() && seq.order_only)
    fail(errc::config, "shifted sampling refused on order-only data (no real time scale)");
  // A missing table is the all-zero table: one code path for both modes.
  ShiftTable zero;
  if (!shifts) zero.tau.assign(rst.universe(), 0.0);
  const ShiftTable& tau = shifts ? *shifts : zero;
  if (tau.tau.size() != rst.universe())
    fail(errc::config, "shift table does not match the dyad universe");
  const double t_end = seq.t_end;

  std::vector<CaseControlRow> rows;
  rows.reserve(seq.n() * m);
  for (std::size_t i = 0; i < seq.n(); ++i) {
    const auto& ev = seq.events[i];
    const Dyad case_dyad{ev.sender, ev.receiver};
    const std::size_t case_idx = rst.dyad_index(case_dyad);
    if (rst.size(ev.time, ev.type) <= 1)
      fail(errc::data, "event #" + std::to_string(i + 1) +
                           ": risk set holds only the observed dyad; "
                           "use a full-likelihood regime instead of sampling");
    const double shifted_time = ev.time + tau.tau[case_idx];
    Rng stream = rng.derive(i);
    std::vector<bool> taken(rst.universe(), false);
    taken[case_idx] = true;
    std::size_t want = m;
    if (want > rst.size(ev.time, ev.type) - 1) {
      want = rst.size(ev.time, ev.type) - 1;
      if (warnings) ++warnings->clamped_events;
    }
    // Shifted risk membership: a candidate cannot occur before its own
    // shift, its original-scale time t* must stay inside the window, and it
    // must be at risk at t*. Returns t* through the out-parameter.
    auto member = [&](std::size_t idx, double& t_star, bool& out_of_window) {
      out_of_window = false;
      if (tau.tau[idx] > shifted_time) return false;
      t_star = shifted_time - tau.tau[idx];
      if (t_star < 0.0 || t_star > t_end) {
        out_of_window = true;
        return false;
      }
      return rst.at_risk(rst.dyad_at(idx), t_star, ev.type);
    };
    auto emit = [&](std::size_t idx, double t_star) {
      taken[idx] = true;
      CaseControlRow row;
      row.event_index = i;
      row.case_dyad = case_dyad;
      row.case_time = ev.time;
      row.control_dyad = rst.dyad_at(idx);
      row.control_time = t_star;
      rows.push_back(std::move(row));
    };
    for (std::size_t j = 0; j < want; ++j) {
      bool placed = false;
      // Up to 100 out-of-window rejections per control; structural
      // rejections (already taken, not at risk) are free until the spin cap
      // forces a fall back to explicit enumeration of feasible candidates.
      int window_rejects = 0;
      std::size_t spins = 0;
      const std::size_t spin_cap = 64 * rst.universe() + 256;
      while (window_rejects < 100 && spins < spin_cap) {
        ++spins;
        const std::size_t idx = static_cast<std::size_t>(stream.below(rst.universe()));
        if (taken[idx]) continue;
        double t_star;
        bool oow;
        if (!member(idx, t_star, oow)) {
          if (oow) ++window_rejects;
          continue;
        }
        emit(idx, t_star);
        placed = true;
        break;
      }
      if (!placed && spins >= spin_cap) {
        std::vector<std::pair<std::size_t, double>> feasible;
        for (std::size_t idx = 0; idx < rst.universe(); ++idx) {
          if (taken[idx]) continue;
          double t_star;
          bool oow;
          if (member(idx, t_star, oow)) feasible.emplace_back(idx, t_star);
        }
        if (!feasible.empty()) {
          const auto& [idx, t_star] = feasible[stream.below(feasible.size())];
          emit(idx, t_star);
          placed = true;
        }
      }
      if (!placed && warnings) ++warnings->dropped_rows;
    }
  }

  // Batch-evaluate covariates: one engine sweep over all case and control
  // evaluation points (the driver sorts by time internally).
  std::vector<StatRow> points;
  points.reserve(rows.size() * 2);
  for (const auto& row : rows) {
    points.push_back({row.case_dyad.s, row.case_dyad.r, row.case_time});
    points.push_back({row.control_dyad.s, row.control_dyad.r, row.control_time});
  }
  const auto columns = compute_columns(history, specs, points);
  for (std::size_t k = 0; k < rows.size(); ++k) {
    auto& row = rows[k];
    row.case_values.resize(specs.size());
    row.control_values.resize(specs.size());
    row.delta.resize(specs.size());
    for (std::size_t j = 0; j < specs.size(); ++j) {
      row.case_values[j] = columns[j][2 * k];
      row.control_values[j] = columns[j][2 * k + 1];
      row.delta[j] = row.case_values[j] - row.control_values[j];
    }
  }
  return rows;
}

// CSV export in the conventional case-control layout: identifying columns,
// then per-statistic case/control/difference triplets, then the constant
// outcome column.
inline void write_case_control_csv(std::ostream& out, const std::vector<CaseControlRow>& rows,
                                   const std::vector<StatisticSpec>& specs,
                                   const EventSequence& seq) {
  out << "time,sender_ev,receiver_ev,sender_nv,receiver_nv";
  for (const auto& spec : specs)
    out << ',' << spec.name << "_ev," << spec.name << "_nv," << spec.name << "_delta";
  out << ",y\n";
  const Registry& rreg = seq.receiver_registry();
  for (const auto& row : rows) {
    out << row.case_time << ',' << seq.senders.label(row.case_dyad.s) << ','
        << rreg.label(row.case_dyad.r) << ',' << seq.senders.label(row.control_dyad.s) << ','
        << rreg.label(row.control_dyad.r);
    for (std::size_t j = 0; j < row.delta.size(); ++j)
      out << ',' << row.case_values[j] << ',' << row.control_values[j] << ',' << row.delta[j];
    out << ",1\n";
  }
}

}  // namespace remkit
