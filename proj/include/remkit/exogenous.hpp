#pragma once

// Exogenous covariate tables (node-, dyad-, and global-level time series
// with step-function semantics: a value holds from its timestamp until the
// next one) and the History view handed to the statistics layer. A History
// at time t never exposes an event with timestamp >= t: every statistic is
// predictable with respect to the filtration.

#include <algorithm>
#include <string>
#include <unordered_map>
#include <vector>

#include "remkit/csv.hpp"
#include "remkit/error.hpp"
#include "remkit/events.hpp"

namespace remkit {

enum class ExogKind { node, dyad, global };

class ExogenousTable {
public:
  ExogKind kind = ExogKind::global;
  std::string name;

  // Keys are label strings until bound to a sequence's registries; lookups
  // resolve through the bound key ids.
  void add(const std::string& key, double time, double value) {
    series_[key].emplace_back(time, value);
    sorted_ = false;
  }

  // Step lookup: the value at the greatest timestamp <= t. Requests before
  // the first timestamp of a key are errors (the series has no value yet).
  double value(const std::string& key, double t) const {
    auto it = series_.find(key);
    if (it == series_.end())
      fail(errc::data, "exogenous table '" + name + "' has no key '" + key + "'");
    const auto& points = it->second;
    auto pos = std::upper_bound(points.begin(), points.end(), t,
                                [](double v, const auto& p) { return v < p.first; });
    if (pos == points.begin())
      fail(errc::data, "exogenous table '" + name + "' has no value for '" + key +
                           "' at t=" + std::to_string(t));
    return (pos - 1)->second;
  }

  bool has(const std::string& key) const { return series_.count(key) != 0; }

  void finalize() {
    if (sorted_) return;
    for (auto& [key, points] : series_)
      std::stable_sort(points.begin(), points.end(),
                       [](const auto& a, const auto& b) { return a.first < b.first; });
    sorted_ = true;
  }

  static std::string dyad_key(const std::string& a, const std::string& b) { return a + "\x1f" + b; }

private:
  std::unordered_map<std::string, std::vector<std::pair<double, double>>> series_;
  bool sorted_ = false;
};

// CSV layouts: node tables have columns node,time,value; dyad tables have
// sender,receiver,time,value; global tables have time,value.
inline ExogenousTable load_exogenous_csv(const std::string& path, ExogKind kind,
                                         const std::string& name, char delim = ',') {
  const csv::Table t = csv::read_file(path, delim);
  ExogenousTable table;
  table.kind = kind;
  table.name = name;
  const std::size_t c_time = t.require_column("time");
  const std::size_t c_value = t.require_column("value");
  std::size_t c_node = 0, c_sender = 0, c_receiver = 0;
  if (kind == ExogKind::node) c_node = t.require_column("node");
  if (kind == ExogKind::dyad) {
    c_sender = t.require_column("sender");
    c_receiver = t.require_column("receiver");
  }
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& row = t.rows[i];
    const double time = csv::parse_real(row[c_time], t.line_numbers[i], "time");
    const double value = csv::parse_real(row[c_value], t.line_numbers[i], "value");
    std::string key;
    if (kind == ExogKind::node) key = row[c_node];
    else if (kind == ExogKind::dyad) key = ExogenousTable::dyad_key(row[c_sender], row[c_receiver]);
    table.add(key, time, value);
  }
  table.finalize();
  return table;
}

// Read-only view over a sequence plus exogenous lookups; the prefix fence t
// is supplied per query by the statistics layer.
class History {
public:
  explicit History(const EventSequence& seq) : seq_(&seq) {}

  const EventSequence& sequence() const { return *seq_; }

  void attach(ExogenousTable table) {
    table.finalize();
    tables_.emplace(table.name, std::move(table));
  }

  const ExogenousTable& table(const std::string& name) const {
    auto it = tables_.find(name);
    if (it == tables_.end()) fail(errc::config, "no exogenous table named '" + name + "'");
    return it->second;
  }
  bool has_table(const std::string& name) const { return tables_.count(name) != 0; }

  // Node-level lookup through the registry label of the id.
  double node_value(const std::string& table_name, node_id node, double t, bool receiver_side) const {
    const Registry& reg = receiver_side ? seq_->receiver_registry() : seq_->senders;
    return table(table_name).value(reg.label(node), t);
  }

  double dyad_value(const std::string& table_name, node_id s, node_id r, double t) const {
    const std::string key = ExogenousTable::dyad_key(seq_->senders.label(s),
                                                     seq_->receiver_registry().label(r));
    return table(table_name).value(key, t);
  }

  double global_value(const std::string& table_name, double t) const {
    return table(table_name).value("", t);
  }

private:
  const EventSequence* seq_;
  std::unordered_map<std::string, ExogenousTable> tables_;
};

}  // namespace remkit
