#pragma once

// Synthetic sequence generation from a specified hazard model, plus the
// replication harness for recovery experiments.
//
// Between events every endogenous statistic is a step function of the
// history, so when the model has no explicit time dependence the total
// hazard is piecewise constant and generation is exact: interarrival ~
// Exponential(sum of dyad hazards), dyad ~ Categorical(hazard shares).
// With a time-varying baseline, temporal statistics, or actor windows the
// hazard can move between events and the generator switches to thinning
// under a dominating constant rate; a violated bound is recomputed with
// headroom and the proposal is redrawn.

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "remkit/error.hpp"
#include "remkit/events.hpp"
#include "remkit/exogenous.hpp"
#include "remkit/fit.hpp"
#include "remkit/risk.hpp"
#include "remkit/rng.hpp"
#include "remkit/stats.hpp"

namespace remkit {

// One additive effect on the log hazard: beta * x when fn is absent,
// fn(x) otherwise.
struct TrueTerm {
  std::string stat;
  double beta = 0.0;
  std::function<double(double)> fn;
};

struct GeneratorSpec {
  std::vector<std::string> senders;
  std::vector<std::string> receivers;  // empty: one-mode over senders
  std::vector<StatisticSpec> stats;
  std::vector<TrueTerm> terms;
  double baseline = 1.0;  // per-dyad events per time unit
  std::function<double(double)> log_time_effect;  // g0(t), triggers thinning
  double horizon = 0.0;
  RiskPolicy policy;
  bool allow_self_loops = false;
  std::uint64_t seed = 1;
  std::vector<const ExogenousTable*> tables;  // attached before generation
  // Unbounded statistics with positive coefficients can make the hazard
  // explode in finite time; refuse to spin forever.
  std::size_t max_events = 1000000;
};

namespace detail {

inline bool needs_thinning(const GeneratorSpec& spec) {
  if (spec.log_time_effect) return true;
  if (!spec.policy.node_windows.empty()) return true;
  for (const auto& s : spec.stats) {
    if (s.block == Block::temporal || s.block == Block::exp_decay) return true;
    if (s.mechanism == Mechanism::exogenous_global || s.mechanism == Mechanism::exogenous_node ||
        s.mechanism == Mechanism::exogenous_dyad)
      return true;  // tables may step between events
  }
  return false;
}

}  // namespace detail

inline EventSequence generate(const GeneratorSpec& spec) {
  if (!(spec.baseline > 0.0)) fail(errc::config, "baseline rate must be positive");
  if (!(spec.horizon > 0.0)) fail(errc::config, "horizon must be positive");
  for (const auto& term : spec.terms)
    if (!term.fn && !std::isfinite(term.beta)) fail(errc::config, "non-finite effect");

  EventSequence seq;
  seq.mode = spec.receivers.empty() ? Mode::one_mode : Mode::bipartite;
  for (const auto& label : spec.senders) seq.senders.add(label);
  if (seq.mode == Mode::bipartite)
    for (const auto& label : spec.receivers) seq.receivers.add(label);
  seq.types.add("");
  seq.t_end = spec.horizon;

  RiskPolicy policy = spec.policy;
  policy.allow_self_loops = spec.allow_self_loops;
  const bool non_recurrent = policy.kind == RiskKind::non_recurrent;
  // The timeline is built on the (still empty) sequence: it supplies dyad
  // indexing, windows and exclusions; first-occurrence exits are tracked
  // here as events appear.
  RiskPolicy static_policy = policy;
  static_policy.kind = seq.mode == Mode::bipartite ? RiskKind::bipartite : RiskKind::full;
  RiskSetTimeline rst(seq, static_policy);
  std::vector<unsigned char> spent(rst.universe(), 0);

  History history(seq);
  for (const auto* table : spec.tables) history.attach(*table);
  StatEngine engine(history, spec.stats);

  std::vector<int> term_stat(spec.terms.size(), -1);
  for (std::size_t j = 0; j < spec.terms.size(); ++j) {
    for (std::size_t k = 0; k < spec.stats.size(); ++k)
      if (spec.stats[k].name == spec.terms[j].stat) term_stat[j] = static_cast<int>(k);
    if (term_stat[j] < 0)
      fail(errc::config, "term references undeclared statistic '" + spec.terms[j].stat + "'");
  }

  Rng rng(spec.seed);
  const bool thinning = detail::needs_thinning(spec);

  // Hazard of one dyad at time t given the absorbed history.
  auto hazard = [&](Dyad d, double t) {
    double log_rate = std::log(spec.baseline);
    if (spec.log_time_effect) log_rate += spec.log_time_effect(t);
    for (std::size_t j = 0; j < spec.terms.size(); ++j) {
      const double x = engine.eval(static_cast<std::size_t>(term_stat[j]), d.s, d.r, t);
      log_rate += spec.terms[j].fn ? spec.terms[j].fn(x) : spec.terms[j].beta * x;
    }
    return std::exp(log_rate);
  };

  std::vector<double> rates(rst.universe(), 0.0);
  auto total_rate = [&](double t) {
    double total = 0.0;
    for (std::size_t idx = 0; idx < rst.universe(); ++idx) {
      rates[idx] = 0.0;
      if (non_recurrent && spent[idx]) continue;
      const Dyad d = rst.dyad_at(idx);
      if (!rst.at_risk(d, t, 0)) continue;
      rates[idx] = hazard(d, t);
      total += rates[idx];
    }
    return total;
  };

  double t = 0.0;
  while (true) {
    engine.advance_to(std::nextafter(t, spec.horizon + 1.0));
    double proposal;
    if (!thinning) {
      const double total = total_rate(t);
      if (total <= 0.0) break;  // everything spent or excluded; horizon reached eventless
      proposal = t + rng.exponential(total);
      if (proposal > spec.horizon) break;
    } else {
      double bound = 2.0 * std::max(total_rate(t), 1e-300);
      double clock = t;
      bool accepted = false;
      while (!accepted) {
        clock += rng.exponential(bound);
        if (clock > spec.horizon) break;
        const double total = total_rate(clock);
        if (total > bound) {
          // dominating rate violated: recompute with headroom, restart
          bound = 2.0 * total;
          clock = t;
          continue;
        }
        if (rng.uniform() * bound <= total) accepted = true;
      }
      if (!accepted) break;
      proposal = clock;
      total_rate(proposal);  // refresh per-dyad rates at the accepted time
    }

    // Categorical draw over dyads in index order (label equivariance:
    // relabeling actors permutes indices and nothing else).
    double total = 0.0;
    for (double r : rates) total += r;
    if (total <= 0.0) break;
    double u = rng.uniform() * total;
    std::size_t chosen = rst.universe() - 1;
    for (std::size_t idx = 0; idx < rst.universe(); ++idx) {
      if (rates[idx] <= 0.0) continue;
      if (u < rates[idx]) {
        chosen = idx;
        break;
      }
      u -= rates[idx];
    }
    const Dyad d = rst.dyad_at(chosen);
    seq.events.push_back({proposal, d.s, d.r, 0, 1.0});
    if (non_recurrent) spent[chosen] = 1;
    t = proposal;
    if (seq.events.size() >= spec.max_events)
      fail(errc::numeric, "generated " + std::to_string(seq.events.size()) +
                              " events before the horizon; the hazard appears to explode");
  }
  return seq;
}

struct RecoveryReport {
  std::vector<std::string> names;
  std::vector<double> truth;
  std::vector<double> mean_estimate;
  std::vector<double> empirical_sd;
  std::vector<double> coverage;  // nominal 95% Wald
  int replications = 0;
  int failures = 0;
  std::vector<std::vector<double>> estimates;  // per coefficient, across reps
};

// Simulate R sequences from `spec`, fit `formula` by full partial
// likelihood each time, and summarize recovery of `truth` (one value per
// design column, matched by position).
inline RecoveryReport recovery_experiment(const GeneratorSpec& spec, const Formula& formula,
                                          const std::vector<double>& truth, int replications,
                                          const OptimizerConfig& cfg = {}) {
  if (replications < 1) fail(errc::config, "need at least one replication");
  RecoveryReport report;
  report.truth = truth;
  report.replications = replications;
  std::vector<std::vector<double>> ests, ses;

  for (int r = 0; r < replications; ++r) {
    GeneratorSpec rep = spec;
    rep.seed = Rng(spec.seed).derive(static_cast<std::uint64_t>(r) + 1).next_u64();
    try {
      const EventSequence seq = generate(rep);
      if (seq.events.size() < 10) {
        ++report.failures;
        continue;
      }
      History history(seq);
      for (const auto* table : rep.tables) history.attach(*table);
      RiskPolicy policy = rep.policy;
      policy.allow_self_loops = rep.allow_self_loops;
      RiskSetTimeline rst(seq, policy);
      const FullDesign design = build_full_design(history, rst, rep.stats, formula);
      PartialLikelihood lik(design);
      const FitResult fit_res = fit(lik, cfg);
      if (!fit_res.converged) {
        ++report.failures;
        continue;
      }
      if (report.names.empty()) report.names = fit_res.colnames;
      if (ests.empty()) {
        ests.resize(static_cast<std::size_t>(fit_res.theta.size()));
        ses.resize(static_cast<std::size_t>(fit_res.theta.size()));
      }
      for (Eigen::Index j = 0; j < fit_res.theta.size(); ++j) {
        ests[static_cast<std::size_t>(j)].push_back(fit_res.theta(j));
        ses[static_cast<std::size_t>(j)].push_back(fit_res.se(j));
      }
    } catch (const Error&) {
      ++report.failures;
    }
  }

  const std::size_t p = ests.size();
  report.mean_estimate.resize(p, 0.0);
  report.empirical_sd.resize(p, 0.0);
  report.coverage.resize(p, 0.0);
  report.estimates = ests;
  for (std::size_t j = 0; j < p; ++j) {
    const auto& e = ests[j];
    if (e.empty()) continue;
    double mean = 0.0;
    for (double v : e) mean += v;
    mean /= static_cast<double>(e.size());
    double var = 0.0;
    for (double v : e) var += (v - mean) * (v - mean);
    if (e.size() > 1) var /= static_cast<double>(e.size() - 1);
    report.mean_estimate[j] = mean;
    report.empirical_sd[j] = std::sqrt(var);
    const double target = j < truth.size() ? truth[j] : 0.0;
    std::size_t hit = 0;
    for (std::size_t r = 0; r < e.size(); ++r)
      if (std::abs(e[r] - target) <= 1.96 * ses[j][r]) ++hit;
    report.coverage[j] = static_cast<double>(hit) / static_cast<double>(e.size());
  }
  return report;
}

}  // namespace remkit
