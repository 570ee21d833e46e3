#pragma once

// Rule-driven, time-varying risk sets: which dyads can produce an event at
// a given time. The timeline is immutable after construction; enumeration
// is lazy (callers iterate, nothing is materialized unless asked for).

#include <cstdint>
#include <limits>
#include <string>
#include <unordered_map>
#include <vector>

#include "remkit/error.hpp"
#include "remkit/events.hpp"

namespace remkit {

struct Dyad {
  node_id s = 0;
  node_id r = 0;
  bool operator==(const Dyad&) const = default;
};

enum class RiskKind {
  full,           // cross product of registries, loops per policy flag
  bipartite,      // sender registry x receiver registry
  non_recurrent,  // full, and a dyad leaves the risk set after its event
};

struct NodeWindow {
  std::string node;
  double enter = 0.0;
  double exit = std::numeric_limits<double>::infinity();
};

struct RiskPolicy {
  RiskKind kind = RiskKind::full;
  bool allow_self_loops = false;
  std::vector<std::pair<std::string, std::string>> exclusions;  // static dyad removals
  // Extra removals that apply only to events of a given type (stratified risk sets).
  std::unordered_map<std::string, std::vector<std::pair<std::string, std::string>>> by_type;
  std::vector<NodeWindow> node_windows;  // node active only inside [enter, exit)
};

class RiskSetTimeline {
public:
  RiskSetTimeline(const EventSequence& seq, const RiskPolicy& policy)
      : seq_(&seq), policy_(policy) {
    vs_ = static_cast<std::uint32_t>(seq.n_senders());
    vr_ = static_cast<std::uint32_t>(seq.n_receivers());
    one_mode_ = seq.mode == Mode::one_mode;
    if (policy.kind == RiskKind::bipartite && one_mode_)
      fail(errc::config, "bipartite risk policy on a one-mode sequence");
    if (policy.kind != RiskKind::bipartite && !one_mode_)
      fail(errc::config, "one-mode risk policy on a bipartite sequence");
    loops_ = policy.allow_self_loops && one_mode_;
    if (one_mode_ && !loops_) {
      universe_ = static_cast<std::size_t>(vs_) * (vs_ - 1);
    } else {
      universe_ = static_cast<std::size_t>(vs_) * vr_;
    }
    if (universe_ == 0) fail(errc::config, "empty dyad universe");

    auto resolve = [&](const std::vector<std::pair<std::string, std::string>>& labels,
                       std::vector<bool>& mask) {
      mask.assign(universe_, false);
      for (const auto& [a, b] : labels) {
        const node_id s = seq.senders.at(a);
        const node_id r = seq.receiver_registry().at(b);
        mask[dyad_index({s, r})] = true;
      }
    };
    if (!policy.exclusions.empty()) resolve(policy.exclusions, excluded_);
    for (const auto& [type_label, list] : policy.by_type) {
      if (!seq.types.contains(type_label))
        fail(errc::config, "risk policy names unknown event type '" + type_label + "'");
      resolve(list, excluded_by_type_[seq.types.at(type_label)]);
    }
    if (!policy.node_windows.empty()) {
      const std::pair<double, double> always{0.0, std::numeric_limits<double>::infinity()};
      windows_s_.assign(vs_, always);
      windows_r_.assign(vr_, always);
      for (const auto& w : policy.node_windows) {
        bool known = false;
        if (seq.senders.contains(w.node)) {
          windows_s_[seq.senders.at(w.node)] = {w.enter, w.exit};
          known = true;
        }
        if (seq.receiver_registry().contains(w.node)) {
          windows_r_[seq.receiver_registry().at(w.node)] = {w.enter, w.exit};
          known = true;
        }
        if (!known) fail(errc::config, "node window names unknown node '" + w.node + "'");
      }
    }
    if (policy.kind == RiskKind::non_recurrent) {
      first_time_.assign(universe_, std::numeric_limits<double>::infinity());
      for (const auto& ev : seq.events) {
        auto& t = first_time_[dyad_index({ev.sender, ev.receiver})];
        if (ev.time < t) t = ev.time;
      }
    }
  }

  std::size_t universe() const { return universe_; }

  std::size_t dyad_index(Dyad d) const {
    if (one_mode_ && !loops_)
      return static_cast<std::size_t>(d.s) * (vs_ - 1) + (d.r < d.s ? d.r : d.r - 1);
    return static_cast<std::size_t>(d.s) * vr_ + d.r;
  }

  Dyad dyad_at(std::size_t index) const {
    if (one_mode_ && !loops_) {
      const auto s = static_cast<node_id>(index / (vs_ - 1));
      const auto j = static_cast<node_id>(index % (vs_ - 1));
      return {s, j < s ? j : j + 1};
    }
    return {static_cast<node_id>(index / vr_), static_cast<node_id>(index % vr_)};
  }

  bool at_risk(Dyad d, double t, type_id type = 0) const {
    if (d.s >= vs_ || d.r >= vr_) return false;
    if (one_mode_ && !loops_ && d.s == d.r) return false;
    const std::size_t idx = dyad_index(d);
    if (!excluded_.empty() && excluded_[idx]) return false;
    if (!excluded_by_type_.empty()) {
      auto it = excluded_by_type_.find(type);
      if (it != excluded_by_type_.end() && it->second[idx]) return false;
    }
    if (!windows_s_.empty()) {
      const auto& ws = windows_s_[d.s];
      const auto& wr = windows_r_[d.r];
      if (t < ws.first || t >= ws.second || t < wr.first || t >= wr.second) return false;
    }
    if (!first_time_.empty() && t > first_time_[idx]) return false;
    return true;
  }

  template <typename Fn>
  void for_each(double t, type_id type, Fn&& fn) const {
    for (std::size_t idx = 0; idx < universe_; ++idx) {
      const Dyad d = dyad_at(idx);
      if (at_risk(d, t, type)) fn(d);
    }
  }

  std::size_t size(double t, type_id type = 0) const {
    if (excluded_.empty() && excluded_by_type_.empty() && windows_s_.empty() && first_time_.empty())
      return universe_;
    std::size_t count = 0;
    for_each(t, type, [&](Dyad) { ++count; });
    return count;
  }

  std::vector<Dyad> materialize(double t, type_id type = 0) const {
    std::vector<Dyad> out;
    out.reserve(universe_);
    for_each(t, type, [&](Dyad d) { out.push_back(d); });
    return out;
  }

  // True when membership does not depend on t or type, so the risk set can
  // be enumerated once and reused at every event time.
  bool static_membership() const {
    return excluded_by_type_.empty() && windows_s_.empty() && first_time_.empty();
  }

  // Every observed event must be producible by its own risk set.
  void validate() const {
    for (std::size_t i = 0; i < seq_->n(); ++i) {
      const auto& ev = seq_->events[i];
      if (!at_risk({ev.sender, ev.receiver}, ev.time, ev.type))
        fail(errc::data, "event #" + std::to_string(i + 1) + " (" +
                             seq_->senders.label(ev.sender) + " -> " +
                             seq_->receiver_registry().label(ev.receiver) +
                             ") is not in its own risk set");
    }
  }

  const EventSequence& sequence() const { return *seq_; }
  const RiskPolicy& policy() const { return policy_; }

private:
  const EventSequence* seq_;
  RiskPolicy policy_;
  std::uint32_t vs_ = 0, vr_ = 0;
  bool one_mode_ = true, loops_ = false;
  std::size_t universe_ = 0;
  std::vector<bool> excluded_;
  std::unordered_map<type_id, std::vector<bool>> excluded_by_type_;
  std::vector<std::pair<double, double>> windows_s_, windows_r_;
  std::vector<double> first_time_;
};

}  // namespace remkit
