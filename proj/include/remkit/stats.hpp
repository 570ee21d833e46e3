#pragma once

// Endogenous and exogenous covariate processes. Every statistic is built
// from four primitives over the matching prior events of a dyad:
//
//   indicator   1{any prior matching event}
//   volume      weighted count of prior matching events
//   exp_decay   sum of (ln2/T_half) * exp(-(t - t_i) * ln2/T_half)
//   temporal    1 - exp(-(t - t_last)), exactly 1 when never happened
//
// "Prior" is strict everywhere (event times < t), which the ingestion
// jitter makes unambiguous for same-stamp inputs. The engine is
// incremental: it sweeps the event list exactly once per column batch and
// never rescans history per evaluation row. Per-key event lists are kept in
// append (chronological) order so floating-point summation order matches a
// naive rescan bit for bit.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "remkit/error.hpp"
#include "remkit/events.hpp"
#include "remkit/exogenous.hpp"
#include "remkit/risk.hpp"

namespace remkit {

inline constexpr double kLn2 = 0.6931471805599453094172321214581766;

enum class Mechanism {
  reciprocity,
  repetition,
  sender_activity,
  receiver_popularity,
  transitive_closure,
  cyclic_closure,
  distance_to_last,
  exogenous_node,
  exogenous_dyad,
  exogenous_global,
  custom_pattern,
};

enum class Block { indicator, volume, exp_decay, temporal };

// Derived transforms of t for global covariates, anchored at a declared
// calendar origin (t is measured in units_per_day days; origin_weekday is
// the weekday index 0-6 of t = 0).
enum class GlobalTransform { table, time_of_day, day_of_week, weekend, linear_time };

struct StatisticSpec {
  std::string name;
  Mechanism mechanism = Mechanism::repetition;
  Block block = Block::volume;
  double half_life = 0.0;  // exp_decay only; must be > 0
  double cap = std::numeric_limits<double>::infinity();  // closure factor cap
  std::string table;                                     // exogenous / distance table
  bool receiver_side = false;                            // exogenous_node side
  GlobalTransform transform = GlobalTransform::table;
  int origin_weekday = 0;
  double units_per_day = 1.0;
  std::function<bool(const RelationalEvent&, Dyad)> pattern;  // custom_pattern
};

namespace detail {

inline const char* mechanism_name(Mechanism m) {
  switch (m) {
    case Mechanism::reciprocity: return "reciprocity";
    case Mechanism::repetition: return "repetition";
    case Mechanism::sender_activity: return "sender_activity";
    case Mechanism::receiver_popularity: return "receiver_popularity";
    case Mechanism::transitive_closure: return "transitive_closure";
    case Mechanism::cyclic_closure: return "cyclic_closure";
    case Mechanism::distance_to_last: return "distance_to_last";
    case Mechanism::exogenous_node: return "exogenous_node";
    case Mechanism::exogenous_dyad: return "exogenous_dyad";
    case Mechanism::exogenous_global: return "exogenous_global";
    case Mechanism::custom_pattern: return "custom_pattern";
  }
  return "?";
}

}  // namespace detail

// Stand-alone building-block evaluations against a raw history prefix.
// These are the reference semantics; the engine below reproduces them
// incrementally.

inline double indicator_stat(const EventSequence& seq, node_id s, node_id r, double t) {
  for (const auto& ev : seq.events) {
    if (ev.time >= t) break;
    if (ev.sender == s && ev.receiver == r) return 1.0;
  }
  return 0.0;
}

inline double volume_stat(const EventSequence& seq, node_id s, node_id r, double t) {
  double total = 0.0;
  for (const auto& ev : seq.events) {
    if (ev.time >= t) break;
    if (ev.sender == s && ev.receiver == r) total += ev.weight;
  }
  return total;
}

inline double exp_decay_stat(const EventSequence& seq, node_id s, node_id r, double t,
                             double half_life) {
  if (!(half_life > 0.0)) fail(errc::config, "exp_decay requires a positive half-life");
  if (seq.order_only) fail(errc::config, "exp_decay refused on an order-only sequence");
  const double rate = kLn2 / half_life;
  double total = 0.0;
  for (const auto& ev : seq.events) {
    if (ev.time >= t) break;
    if (ev.sender == s && ev.receiver == r) total += ev.weight * rate * std::exp(-(t - ev.time) * rate);
  }
  return total;
}

// t_last < 0 is the "never happened" sentinel used throughout the engine.
inline double temporal_stat(double t, double t_last) {
  if (t_last < 0.0) return 1.0;
  if (t < t_last) fail(errc::config, "temporal statistic queried before its anchor event");
  return 1.0 - std::exp(-(t - t_last));
}

// Validates a spec against the sequence it will be computed on.
inline void validate_spec(const StatisticSpec& spec, const EventSequence& seq) {
  const bool endo = spec.mechanism == Mechanism::reciprocity ||
                    spec.mechanism == Mechanism::repetition ||
                    spec.mechanism == Mechanism::sender_activity ||
                    spec.mechanism == Mechanism::receiver_popularity ||
                    spec.mechanism == Mechanism::transitive_closure ||
                    spec.mechanism == Mechanism::cyclic_closure;
  const bool closure = spec.mechanism == Mechanism::transitive_closure ||
                       spec.mechanism == Mechanism::cyclic_closure;
  if (seq.mode == Mode::bipartite &&
      (spec.mechanism == Mechanism::reciprocity || spec.mechanism == Mechanism::cyclic_closure ||
       spec.mechanism == Mechanism::transitive_closure))
    fail(errc::config, std::string(detail::mechanism_name(spec.mechanism)) +
                           " cannot be evaluated on a bipartite sequence");
  if (endo && spec.block == Block::exp_decay) {
    if (closure)
      fail(errc::config, "exp_decay block is not defined for closure statistics");
    if (!(spec.half_life > 0.0))
      fail(errc::config, "statistic '" + spec.name + "': exp_decay requires half_life > 0");
  }
  if (seq.order_only) {
    if (endo && (spec.block == Block::exp_decay || spec.block == Block::temporal))
      fail(errc::config, "statistic '" + spec.name +
                             "': time-dependent building block refused on order-only data");
    if (spec.mechanism == Mechanism::exogenous_global)
      fail(errc::config, "statistic '" + spec.name +
                             "': global time covariates refused on order-only data");
  }
  if ((spec.mechanism == Mechanism::exogenous_node || spec.mechanism == Mechanism::exogenous_dyad ||
       spec.mechanism == Mechanism::distance_to_last ||
       (spec.mechanism == Mechanism::exogenous_global && spec.transform == GlobalTransform::table)) &&
      spec.table.empty())
    fail(errc::config, "statistic '" + spec.name + "' needs an exogenous table name");
  if (spec.mechanism == Mechanism::custom_pattern && !spec.pattern)
    fail(errc::config, "statistic '" + spec.name + "' needs a pattern predicate");
}

// Incremental state over one sequence. advance_to(t) folds in every event
// with time < t; eval() then returns any statistic at t. Evaluation times
// must be non-decreasing across calls (the column driver sorts for this).
class StatEngine {
public:
  StatEngine(const History& history, std::vector<StatisticSpec> specs)
      : history_(&history), specs_(std::move(specs)) {
    const EventSequence& seq = history.sequence();
    for (const auto& spec : specs_) validate_spec(spec, seq);
    vs_ = static_cast<std::uint32_t>(seq.n_senders());
    vr_ = static_cast<std::uint32_t>(seq.n_receivers());
    one_mode_ = seq.mode == Mode::one_mode;
    const std::size_t cells = static_cast<std::size_t>(vs_) * vr_;
    dyad_vol_.assign(cells, 0.0);
    dyad_cnt_.assign(cells, 0);
    dyad_last_.assign(cells, -1.0);
    out_vol_.assign(vs_, 0.0);
    out_distinct_.assign(vs_, 0);
    out_last_.assign(vs_, -1.0);
    in_vol_.assign(vr_, 0.0);
    in_distinct_.assign(vr_, 0);
    in_last_.assign(vr_, -1.0);
    for (const auto& spec : specs_) {
      if (spec.block == Block::exp_decay) {
        need_dyad_times_ |= spec.mechanism == Mechanism::repetition ||
                            spec.mechanism == Mechanism::reciprocity;
        need_out_times_ |= spec.mechanism == Mechanism::sender_activity;
        need_in_times_ |= spec.mechanism == Mechanism::receiver_popularity;
      }
      if (spec.block == Block::temporal && (spec.mechanism == Mechanism::transitive_closure ||
                                            spec.mechanism == Mechanism::cyclic_closure))
        need_closure_anchor_ = true;
    }
    if (need_dyad_times_) dyad_times_.assign(cells, {});
    if (need_out_times_) out_times_.assign(vs_, {});
    if (need_in_times_) in_times_.assign(vr_, {});
    if (need_closure_anchor_ && one_mode_) {
      trs_anchor_.assign(cells, -1.0);
      cyc_anchor_.assign(cells, -1.0);
    }
  }

  const std::vector<StatisticSpec>& specs() const { return specs_; }
  std::size_t n_specs() const { return specs_.size(); }

  // Incorporate all events with time strictly below t.
  void advance_to(double t) {
    const auto& events = history_->sequence().events;
    while (pos_ < events.size() && events[pos_].time < t) absorb(events[pos_++]);
  }

  // Position fence as an event index: incorporate events [0, k).
  void advance_to_index(std::size_t k) {
    const auto& events = history_->sequence().events;
    while (pos_ < k && pos_ < events.size()) absorb(events[pos_++]);
  }

  double eval(std::size_t spec_idx, node_id s, node_id r, double t) const {
    const StatisticSpec& spec = specs_[spec_idx];
    switch (spec.mechanism) {
      case Mechanism::repetition:
        return dyadic(spec, cell(s, r), t);
      case Mechanism::reciprocity:
        return dyadic(spec, cell(r, s), t);
      case Mechanism::sender_activity:
        switch (spec.block) {
          case Block::indicator: return out_distinct_[s] > 0 ? 1.0 : 0.0;
          case Block::volume: return out_vol_[s];
          case Block::exp_decay: return decay_sum(out_times_[s], t, spec.half_life);
          case Block::temporal: return temporal_stat(t, out_last_[s]);
        }
        break;
      case Mechanism::receiver_popularity:
        switch (spec.block) {
          case Block::indicator: return in_distinct_[r] > 0 ? 1.0 : 0.0;
          case Block::volume: return in_vol_[r];
          case Block::exp_decay: return decay_sum(in_times_[r], t, spec.half_life);
          case Block::temporal: return temporal_stat(t, in_last_[r]);
        }
        break;
      case Mechanism::transitive_closure:
        return closure(spec, s, r, /*cyclic=*/false, t);
      case Mechanism::cyclic_closure:
        return closure(spec, s, r, /*cyclic=*/true, t);
      case Mechanism::distance_to_last:
        return distance_to_last(spec, r, t);
      case Mechanism::exogenous_node:
        return history_->node_value(spec.table, spec.receiver_side ? r : s, t, spec.receiver_side);
      case Mechanism::exogenous_dyad:
        return history_->dyad_value(spec.table, s, r, t);
      case Mechanism::exogenous_global:
        return global_value(spec, t);
      case Mechanism::custom_pattern:
        return pattern_value(spec, s, r);
    }
    fail(errc::config, "unknown mechanism");
  }

private:
  std::size_t cell(node_id a, node_id b) const { return static_cast<std::size_t>(a) * vr_ + b; }

  void absorb(const RelationalEvent& ev) {
    const std::size_t c = cell(ev.sender, ev.receiver);
    if (need_closure_anchor_ && one_mode_) update_closure_anchors(ev);
    dyad_vol_[c] += ev.weight;
    if (dyad_cnt_[c]++ == 0) {
      ++out_distinct_[ev.sender];
      ++in_distinct_[ev.receiver];
    }
    dyad_last_[c] = ev.time;
    out_vol_[ev.sender] += ev.weight;
    out_last_[ev.sender] = ev.time;
    in_vol_[ev.receiver] += ev.weight;
    in_last_[ev.receiver] = ev.time;
    if (need_dyad_times_) dyad_times_[c].emplace_back(ev.time, ev.weight);
    if (need_out_times_) out_times_[ev.sender].emplace_back(ev.time, ev.weight);
    if (need_in_times_) in_times_[ev.receiver].emplace_back(ev.time, ev.weight);
    last_receiver_ = ev.receiver;
    has_last_ = true;
  }

  // Called before the event's own counts are folded in, so an event never
  // pairs with itself. An event (a,b) completes a transitive two-path
  // s->k->r either as its first leg (s=a, k=b, any r with prior b->r) or as
  // its second leg (k=a, r=b, any s with prior s->a); cyclic paths r->k->s
  // decompose the same way. O(V) per event.
  void update_closure_anchors(const RelationalEvent& ev) {
    const node_id a = ev.sender, b = ev.receiver;
    for (node_id k = 0; k < vs_; ++k) {
      if (dyad_cnt_[cell(b, k)] > 0) trs_anchor_[cell(a, k)] = ev.time;
      if (dyad_cnt_[cell(k, a)] > 0) trs_anchor_[cell(k, b)] = ev.time;
      if (dyad_cnt_[cell(b, k)] > 0) cyc_anchor_[cell(k, a)] = ev.time;
      if (dyad_cnt_[cell(k, a)] > 0) cyc_anchor_[cell(b, k)] = ev.time;
    }
  }

  double dyadic(const StatisticSpec& spec, std::size_t c, double t) const {
    switch (spec.block) {
      case Block::indicator: return dyad_cnt_[c] > 0 ? 1.0 : 0.0;
      case Block::volume: return dyad_vol_[c];
      case Block::exp_decay: return decay_sum(dyad_times_[c], t, spec.half_life);
      case Block::temporal: return temporal_stat(t, dyad_last_[c]);
    }
    fail(errc::config, "unknown block");
  }

  static double decay_sum(const std::vector<std::pair<double, double>>& times, double t,
                          double half_life) {
    const double rate = kLn2 / half_life;
    double total = 0.0;
    for (const auto& [ti, w] : times) total += w * rate * std::exp(-(t - ti) * rate);
    return total;
  }

  double closure(const StatisticSpec& spec, node_id s, node_id r, bool cyclic, double t) const {
    if (spec.block == Block::temporal)
      return temporal_stat(t, (cyclic ? cyc_anchor_ : trs_anchor_)[cell(s, r)]);
    double total = 0.0;
    // Iterate intermediaries in ascending id order; a naive oracle looping
    // k = 0..V-1 accumulates in the same order, so sums agree exactly.
    for (node_id k = 0; k < vr_; ++k) {
      const double w1 = cyclic ? dyad_vol_[cell(r, k)] : dyad_vol_[cell(s, k)];
      const double w2 = cyclic ? dyad_vol_[cell(k, s)] : dyad_vol_[cell(k, r)];
      if (w1 == 0.0 || w2 == 0.0) continue;
      if (spec.block == Block::indicator) {
        total += 1.0;
      } else {
        total += std::min(w1, spec.cap) * std::min(w2, spec.cap);
      }
    }
    return total;
  }

  double distance_to_last(const StatisticSpec& spec, node_id r, double t) const {
    if (!has_last_) return 0.0;  // no visited state yet
    const Registry& reg = history_->sequence().receiver_registry();
    const ExogenousTable& table = history_->table(spec.table);
    const std::string& a = reg.label(r);
    const std::string& b = reg.label(last_receiver_);
    // Distance tables may list either orientation of the (symmetric) pair.
    double d;
    if (table.has(ExogenousTable::dyad_key(a, b)))
      d = table.value(ExogenousTable::dyad_key(a, b), t);
    else
      d = table.value(ExogenousTable::dyad_key(b, a), t);
    return std::log(d + 1.0);
  }

  double global_value(const StatisticSpec& spec, double t) const {
    const double days = t / spec.units_per_day;
    switch (spec.transform) {
      case GlobalTransform::table: return history_->global_value(spec.table, t);
      case GlobalTransform::time_of_day: return (days - std::floor(days)) * 24.0;
      case GlobalTransform::day_of_week: {
        const long d = static_cast<long>(std::floor(days));
        return static_cast<double>(((spec.origin_weekday + d) % 7 + 7) % 7);
      }
      case GlobalTransform::weekend: {
        const long d = static_cast<long>(std::floor(days));
        const long dow = ((spec.origin_weekday + d) % 7 + 7) % 7;
        return (dow == 5 || dow == 6) ? 1.0 : 0.0;
      }
      case GlobalTransform::linear_time: return t;
    }
    fail(errc::config, "unknown global transform");
  }

  double pattern_value(const StatisticSpec& spec, node_id s, node_id r) const {
    // Custom patterns scan the absorbed prefix directly (excluded from the
    // incremental path by design).
    const auto& events = history_->sequence().events;
    double total = 0.0;
    for (std::size_t i = 0; i < pos_; ++i) {
      if (!spec.pattern(events[i], Dyad{s, r})) continue;
      if (spec.block == Block::indicator) return 1.0;
      total += events[i].weight;
    }
    return total;
  }

  const History* history_;
  std::vector<StatisticSpec> specs_;
  std::uint32_t vs_ = 0, vr_ = 0;
  bool one_mode_ = true;
  std::size_t pos_ = 0;

  std::vector<double> dyad_vol_, dyad_last_;
  std::vector<std::int64_t> dyad_cnt_;
  std::vector<double> out_vol_, in_vol_, out_last_, in_last_;
  std::vector<std::int64_t> out_distinct_, in_distinct_;
  std::vector<std::vector<std::pair<double, double>>> dyad_times_, out_times_, in_times_;
  std::vector<double> trs_anchor_, cyc_anchor_;
  bool need_dyad_times_ = false, need_out_times_ = false, need_in_times_ = false;
  bool need_closure_anchor_ = false;
  node_id last_receiver_ = 0;
  bool has_last_ = false;
};

// Evaluation rows for a column computation.
struct StatRow {
  node_id s = 0;
  node_id r = 0;
  double t = 0.0;
};

// One value per row per spec; rows may arrive in any order (they are
// processed in time order internally and written back by index).
inline std::vector<std::vector<double>> compute_columns(const History& history,
                                                        const std::vector<StatisticSpec>& specs,
                                                        const std::vector<StatRow>& rows) {
  StatEngine engine(history, specs);
  std::vector<std::size_t> order(rows.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return rows[a].t < rows[b].t; });
  std::vector<std::vector<double>> out(specs.size(), std::vector<double>(rows.size(), 0.0));
  for (const std::size_t idx : order) {
    const StatRow& row = rows[idx];
    engine.advance_to(row.t);
    for (std::size_t j = 0; j < specs.size(); ++j) out[j][idx] = engine.eval(j, row.s, row.r, row.t);
  }
  return out;
}

inline std::vector<double> compute_column(const History& history, const StatisticSpec& spec,
                                          const std::vector<StatRow>& rows) {
  return compute_columns(history, {spec}, rows).front();
}

// ---- Hyperevent subset repetition ----------------------------------------

namespace detail {

// Visit all size-k subsets of the sorted id set `from` in lexicographic
// order; k = 0 visits the empty subset once.
template <typename Fn>
void for_each_subset(const std::vector<node_id>& from, std::size_t k, Fn&& fn) {
  if (k > from.size()) return;
  std::vector<std::size_t> pick(k);
  std::iota(pick.begin(), pick.end(), 0);
  std::vector<node_id> subset(k);
  for (;;) {
    for (std::size_t i = 0; i < k; ++i) subset[i] = from[pick[i]];
    fn(subset);
    if (k == 0) return;
    std::size_t i = k;
    while (i-- > 0) {
      if (pick[i] != i + from.size() - k) {
        ++pick[i];
        for (std::size_t j = i + 1; j < k; ++j) pick[j] = pick[j - 1] + 1;
        break;
      }
      if (i == 0) return;
    }
  }
}

inline double binomial(std::size_t n, std::size_t k) {
  if (k > n) return 0.0;
  double v = 1.0;
  for (std::size_t i = 0; i < k; ++i) v = v * static_cast<double>(n - i) / static_cast<double>(i + 1);
  return v;
}

}  // namespace detail

// Number of prior hyperevents whose sender set contains S' and receiver set
// contains R'.
inline double hyper_volume(const HyperEventSequence& seq, const std::vector<node_id>& sub_s,
                           const std::vector<node_id>& sub_r, double t) {
  double count = 0.0;
  for (const auto& ev : seq.events) {
    if (ev.time >= t) break;
    if (std::includes(ev.senders.begin(), ev.senders.end(), sub_s.begin(), sub_s.end()) &&
        std::includes(ev.receivers.begin(), ev.receivers.end(), sub_r.begin(), sub_r.end()))
      count += 1.0;
  }
  return count;
}

// Average prior-event volume over all rho-subsets of S crossed with
// omega-subsets of R. With rho=|S| and omega=|R| this is exactly the
// hyperevent volume of (S,R).
inline double subrepetition(const HyperEventSequence& seq, std::vector<node_id> S,
                            std::vector<node_id> R, std::size_t rho, std::size_t omega, double t) {
  std::sort(S.begin(), S.end());
  std::sort(R.begin(), R.end());
  if (rho > S.size()) fail(errc::config, "subrepetition: rho exceeds |S|");
  if (omega > R.size()) fail(errc::config, "subrepetition: omega exceeds |R|");
  double total = 0.0;
  detail::for_each_subset(S, rho, [&](const std::vector<node_id>& sub_s) {
    detail::for_each_subset(R, omega, [&](const std::vector<node_id>& sub_r) {
      total += hyper_volume(seq, sub_s, sub_r, t);
    });
  });
  return total / (detail::binomial(S.size(), rho) * detail::binomial(R.size(), omega));
}

}  // namespace remkit
