#pragma once

// Domain types for relational event sequences and stream ingestion.
//
// An event is an instantaneous directed interaction (sender, receiver, time)
// with an optional categorical type and weight. Sequences keep strictly
// increasing timestamps: simultaneous input rows are separated by an
// infinitesimal jitter in stable input order, and the applied jitter is
// recorded so downstream consumers can see it. Order-only data (only the
// ranking of events is meaningful) get synthetic unit-spaced timestamps and
// a flag that makes time-dependent statistics refuse to run.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <numeric>
#include <string>
#include <unordered_map>
#include <vector>

#include "remkit/csv.hpp"
#include "remkit/error.hpp"

namespace remkit {

using node_id = std::uint32_t;
using type_id = std::uint16_t;

// Label <-> dense id mapping. Ids are assigned in registration order, which
// is first appearance in final (time-sorted) event order; every structure
// downstream is positional in these ids, so renaming labels while keeping
// their registration slots leaves all computations unchanged.
class Registry {
public:
  std::uint32_t add(const std::string& label) {
    auto it = index_.find(label);
    if (it != index_.end()) return it->second;
    const auto id = static_cast<std::uint32_t>(labels_.size());
    labels_.push_back(label);
    index_.emplace(label, id);
    return id;
  }
  std::uint32_t at(const std::string& label) const {
    auto it = index_.find(label);
    if (it == index_.end()) fail(errc::data, "unknown label '" + label + "'");
    return it->second;
  }
  bool contains(const std::string& label) const { return index_.count(label) != 0; }
  const std::string& label(std::uint32_t id) const { return labels_.at(id); }
  std::size_t size() const { return labels_.size(); }
  const std::vector<std::string>& labels() const { return labels_; }

private:
  std::vector<std::string> labels_;
  std::unordered_map<std::string, std::uint32_t> index_;
};

struct RelationalEvent {
  double time = 0.0;
  node_id sender = 0;
  node_id receiver = 0;
  type_id type = 0;
  double weight = 1.0;
};

enum class Mode { one_mode, bipartite };

struct JitterRecord {
  std::size_t event_index;
  double amount;
};

class EventSequence {
public:
  std::vector<RelationalEvent> events;
  Registry senders;    // one-mode: aliases `receivers`
  Registry receivers;  // identical object content in one-mode
  Registry types;      // always at least one type; "" when untyped
  Mode mode = Mode::one_mode;
  bool order_only = false;
  double t_end = 0.0;  // observation window is [0, t_end]
  std::vector<JitterRecord> jitter;

  std::size_t n() const { return events.size(); }
  std::size_t n_senders() const { return senders.size(); }
  std::size_t n_receivers() const { return mode == Mode::one_mode ? senders.size() : receivers.size(); }
  // One-mode actor registry (sender and receiver labels share it).
  const Registry& actors() const { return senders; }
  const Registry& receiver_registry() const { return mode == Mode::one_mode ? senders : receivers; }

  // Number of events with time strictly below t.
  std::size_t count_before(double t) const {
    auto it = std::lower_bound(events.begin(), events.end(), t,
                               [](const RelationalEvent& e, double v) { return e.time < v; });
    return static_cast<std::size_t>(it - events.begin());
  }
};

// Hyperevents: directed interactions between a nonempty sender set and a
// receiver set. Only the statistics layer consumes these.
struct HyperEvent {
  double time = 0.0;
  std::vector<node_id> senders;    // sorted, distinct
  std::vector<node_id> receivers;  // sorted, distinct; may be empty
};

class HyperEventSequence {
public:
  std::vector<HyperEvent> events;
  Registry nodes;

  std::size_t n() const { return events.size(); }
};

struct IngestOptions {
  char delimiter = ',';
  Mode mode = Mode::one_mode;
  bool order_only = false;       // replace timestamps by event rank 1..n
  bool allow_self_loops = false;
  double horizon = -1.0;         // observation window end; default: last event time
  std::string time_column = "time";
  std::string sender_column = "sender";
  std::string receiver_column = "receiver";
  std::string type_column = "type";      // optional in the data
  std::string weight_column = "weight";  // optional in the data
};

namespace detail {

// Days since 1970-01-01 for a civil date (proleptic Gregorian).
inline std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const auto yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

// Parse "YYYY-MM-DD" with optional "THH:MM[:SS]" (or space separator) into
// fractional days since the Unix epoch. Returns false if the shape is wrong.
inline bool parse_iso_date(const std::string& s, double& out) {
  if (s.size() < 10 || s[4] != '-' || s[7] != '-') return false;
  auto digits = [&](std::size_t pos, std::size_t len, long& value) {
    value = 0;
    for (std::size_t i = pos; i < pos + len; ++i) {
      if (s[i] < '0' || s[i] > '9') return false;
      value = value * 10 + (s[i] - '0');
    }
    return true;
  };
  long y, mo, d;
  if (!digits(0, 4, y) || !digits(5, 2, mo) || !digits(8, 2, d)) return false;
  if (mo < 1 || mo > 12 || d < 1 || d > 31) return false;
  double frac = 0.0;
  if (s.size() > 10) {
    if (s[10] != 'T' && s[10] != ' ') return false;
    if (s.size() < 16 || s[13] != ':') return false;
    long hh, mi, ss = 0;
    if (!digits(11, 2, hh) || !digits(14, 2, mi)) return false;
    if (s.size() >= 19) {
      if (s[16] != ':' || !digits(17, 2, ss)) return false;
    } else if (s.size() != 16) {
      return false;
    }
    if (hh > 23 || mi > 59 || ss > 60) return false;
    frac = (static_cast<double>(hh) + mi / 60.0 + ss / 3600.0) / 24.0;
  }
  out = static_cast<double>(days_from_civil(y, static_cast<unsigned>(mo), static_cast<unsigned>(d))) + frac;
  return true;
}

struct RawRecord {
  double time;
  std::string sender, receiver, type;
  double weight;
  std::size_t line;
};

}  // namespace detail

// Apply the tie-breaking jitter policy in place: rows that share a timestamp
// keep their stable order and the k-th row of a tie group is moved by k*eps,
// with eps = 1e-9 * median positive gap, capped so the largest applied
// jitter stays below half the smallest positive gap.
inline void apply_tie_jitter(std::vector<RelationalEvent>& events,
                             std::vector<JitterRecord>& jitter_log) {
  if (events.size() < 2) return;
  std::vector<double> gaps;
  std::size_t max_group = 1, group = 1;
  for (std::size_t i = 1; i < events.size(); ++i) {
    const double gap = events[i].time - events[i - 1].time;
    if (gap > 0.0) {
      gaps.push_back(gap);
      group = 1;
    } else {
      ++group;
      max_group = std::max(max_group, group);
    }
  }
  if (max_group == 1) return;
  double eps;
  if (gaps.empty()) {
    // All timestamps equal; any positive spacing keeps strict order.
    eps = 1e-9 * std::max(1.0, std::abs(events.front().time));
  } else {
    std::nth_element(gaps.begin(), gaps.begin() + gaps.size() / 2, gaps.end());
    const double median_gap = gaps[gaps.size() / 2];
    const double min_gap = *std::min_element(gaps.begin(), gaps.end());
    eps = std::min(1e-9 * median_gap, min_gap / (2.0 * static_cast<double>(max_group)));
  }
  std::size_t k = 0;
  for (std::size_t i = 1; i < events.size(); ++i) {
    if (events[i].time <= events[i - 1].time) {
      ++k;
      const double amount = static_cast<double>(k) * eps;
      events[i].time = events[i - k].time + amount;
      jitter_log.push_back({i, amount});
    } else {
      k = 0;
    }
  }
}

inline EventSequence parse_event_stream(std::istream& in, const IngestOptions& opt = {}) {
  const csv::Table table = csv::read(in, opt.delimiter);
  const std::size_t c_time = table.require_column(opt.time_column);
  const std::size_t c_sender = table.require_column(opt.sender_column);
  const std::size_t c_receiver = table.require_column(opt.receiver_column);
  const std::size_t c_type = table.column(opt.type_column);
  const std::size_t c_weight = table.column(opt.weight_column);

  if (table.rows.empty()) fail(errc::data, "empty sequence: input has a header but no events");

  std::vector<detail::RawRecord> raw;
  raw.reserve(table.rows.size());
  bool any_dates = false, any_reals = false;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& row = table.rows[i];
    detail::RawRecord rec;
    rec.line = table.line_numbers[i];
    const std::string& cell = row[c_time];
    if (double day; detail::parse_iso_date(cell, day)) {
      rec.time = day;
      any_dates = true;
    } else {
      rec.time = csv::parse_real(cell, rec.line, "timestamp");
      any_reals = true;
    }
    if (!std::isfinite(rec.time))
      fail(errc::parse, "line " + std::to_string(rec.line) + ": non-finite timestamp");
    rec.sender = row[c_sender];
    rec.receiver = row[c_receiver];
    if (rec.sender.empty() || rec.receiver.empty())
      fail(errc::parse, "line " + std::to_string(rec.line) + ": empty sender or receiver");
    rec.type = c_type == csv::Table::npos ? std::string() : row[c_type];
    rec.weight = c_weight == csv::Table::npos ? 1.0 : csv::parse_real(row[c_weight], rec.line, "weight");
    raw.push_back(std::move(rec));
  }
  if (any_dates && any_reals) fail(errc::parse, "mixed timestamp formats (ISO dates and plain reals)");
  if (any_dates) {
    // Calendar input: re-expressed as days since the first event's instant.
    const double t0 = std::min_element(raw.begin(), raw.end(), [](auto& a, auto& b) {
                        return a.time < b.time;
                      })->time;
    for (auto& rec : raw) rec.time -= t0;
  }

  std::vector<std::size_t> order(raw.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return raw[a].time < raw[b].time; });

  EventSequence seq;
  seq.mode = opt.mode;
  seq.order_only = opt.order_only;
  if (c_type == csv::Table::npos) seq.types.add("");
  seq.events.reserve(raw.size());
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    const auto& rec = raw[order[rank]];
    RelationalEvent ev;
    ev.time = opt.order_only ? static_cast<double>(rank + 1) : rec.time;
    ev.sender = seq.senders.add(rec.sender);
    ev.receiver = opt.mode == Mode::one_mode ? seq.senders.add(rec.receiver)
                                             : seq.receivers.add(rec.receiver);
    if (!opt.allow_self_loops && opt.mode == Mode::one_mode && ev.sender == ev.receiver)
      fail(errc::data, "line " + std::to_string(rec.line) + ": self-loop '" + rec.sender +
                           "' (enable allow_self_loops to accept)");
    ev.type = static_cast<type_id>(seq.types.add(rec.type));
    ev.weight = rec.weight;
    seq.events.push_back(ev);
  }
  if (!opt.order_only) apply_tie_jitter(seq.events, seq.jitter);

  if (seq.events.front().time < 0.0)
    fail(errc::data, "negative timestamps: the observation window starts at 0");
  const double last = seq.events.back().time;
  if (opt.horizon >= 0.0) {
    if (opt.horizon < last) fail(errc::config, "horizon precedes the last event time");
    seq.t_end = opt.horizon;
  } else {
    seq.t_end = opt.order_only ? static_cast<double>(seq.n()) : last;
  }
  return seq;
}

inline EventSequence parse_event_file(const std::string& path, const IngestOptions& opt = {}) {
  std::ifstream in(path);
  if (!in) fail(errc::config, "cannot open events file: " + path);
  return parse_event_stream(in, opt);
}

// Hyperevent ingestion: same layout, but the sender/receiver cells hold
// ';'-separated label sets. The receiver set may be empty.
inline HyperEventSequence parse_hyperevent_stream(std::istream& in, const IngestOptions& opt = {}) {
  const csv::Table table = csv::read(in, opt.delimiter);
  const std::size_t c_time = table.require_column(opt.time_column);
  const std::size_t c_sender = table.require_column(opt.sender_column);
  const std::size_t c_receiver = table.require_column(opt.receiver_column);
  if (table.rows.empty()) fail(errc::data, "empty sequence: input has a header but no events");

  HyperEventSequence seq;
  std::vector<std::pair<double, std::size_t>> order;
  std::vector<HyperEvent> parsed;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& row = table.rows[i];
    HyperEvent ev;
    ev.time = csv::parse_real(row[c_time], table.line_numbers[i], "timestamp");
    auto parse_set = [&](const std::string& cell, std::vector<node_id>& out) {
      for (const auto& label : csv::split(cell, ';'))
        if (!label.empty()) out.push_back(seq.nodes.add(label));
      std::sort(out.begin(), out.end());
      out.erase(std::unique(out.begin(), out.end()), out.end());
    };
    parse_set(row[c_sender], ev.senders);
    parse_set(row[c_receiver], ev.receivers);
    if (ev.senders.empty())
      fail(errc::data, "line " + std::to_string(table.line_numbers[i]) + ": empty sender set");
    order.emplace_back(ev.time, i);
    parsed.push_back(std::move(ev));
  }
  std::stable_sort(order.begin(), order.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  for (const auto& [t, idx] : order) seq.events.push_back(std::move(parsed[idx]));
  return seq;
}

}  // namespace remkit
