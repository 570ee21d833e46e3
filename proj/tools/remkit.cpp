// remkit: relational event modeling from the command line.
//
//   remkit ingest    parse events, report sequence and risk-set shape
//   remkit stats     evaluate the configured statistics at each event
//   remkit sample    draw case-control rows and export them
//   remkit simulate  generate a sequence from a specified hazard model
//   remkit fit       fit a model; writes fit.json, terms/*.csv, gof.json
//   remkit gof       residual-process tests against a saved fit
//   remkit report    turn a saved fit into plot-ready CSV files
//
// Every command reads one JSON config; flags override config values. The
// only environment variable honored is REMKIT_SEED, which overrides the
// config seed and is itself overridden by --seed. Relative paths inside a
// config resolve against the config file's directory. Exit codes: 0 on
// success, 1 on input or usage errors, 2 when a fit does not converge.

#include <CLI11.hpp>
#include <Eigen/Core>
#include <cctype>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <json.hpp>
#include <map>
#include <optional>
#include <remkit/remkit.hpp>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const char* errc_name(remkit::errc code) {
  switch (code) {
    case remkit::errc::schema: return "schema";
    case remkit::errc::parse: return "parse";
    case remkit::errc::data: return "data";
    case remkit::errc::config: return "config";
    case remkit::errc::numeric: return "numeric";
  }
  return "?";
}

json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) remkit::fail(remkit::errc::config, "cannot open '" + path + "'");
  try {
    json j;
    in >> j;
    return j;
  } catch (const json::exception& e) {
    remkit::fail(remkit::errc::parse, "bad JSON in '" + path + "': " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Config handling

struct Overrides {
  std::string events, formula, regime, output, fit_path, out_file;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::size_t controls = 0;
  std::size_t bridge_reps = 0;
  bool bridge_set = false;
  std::vector<double> nu;
  double horizon = 0.0;
  bool horizon_set = false;
  bool shifted = false;
  int threads = 0;
};

struct RunConfig {
  json doc;
  fs::path base;  // directory the config file lives in
  Overrides flags;

  std::string resolve(const std::string& p) const {
    fs::path path(p);
    return path.is_absolute() ? path.string() : (base / path).string();
  }

  // Seed precedence: flag > REMKIT_SEED > config > default.
  std::uint64_t seed(std::uint64_t fallback = 1) const {
    if (flags.seed_set) return flags.seed;
    if (const char* env = std::getenv("REMKIT_SEED")) {
      try {
        return std::stoull(env);
      } catch (const std::exception&) {
        remkit::fail(remkit::errc::config, "REMKIT_SEED is not an integer");
      }
    }
    return doc.value("seed", fallback);
  }

  std::string output_dir() const {
    if (!flags.output.empty()) return flags.output;
    return resolve(doc.value("output", std::string("out")));
  }
};

RunConfig load_config(const std::string& path, const Overrides& flags) {
  RunConfig cfg;
  cfg.doc = load_json(path);
  if (!cfg.doc.is_object()) remkit::fail(remkit::errc::schema, "config root must be an object");
  cfg.base = fs::path(path).parent_path();
  cfg.flags = flags;
  return cfg;
}

// ---------------------------------------------------------------------------
// Enum parsing

remkit::Mechanism mechanism_from(const std::string& s) {
  using M = remkit::Mechanism;
  if (s == "reciprocity") return M::reciprocity;
  if (s == "repetition") return M::repetition;
  if (s == "sender_activity") return M::sender_activity;
  if (s == "receiver_popularity") return M::receiver_popularity;
  if (s == "transitive_closure") return M::transitive_closure;
  if (s == "cyclic_closure") return M::cyclic_closure;
  if (s == "distance_to_last") return M::distance_to_last;
  if (s == "exogenous_node") return M::exogenous_node;
  if (s == "exogenous_dyad") return M::exogenous_dyad;
  if (s == "exogenous_global") return M::exogenous_global;
  remkit::fail(remkit::errc::config, "unknown mechanism '" + s + "'");
}

remkit::Block block_from(const std::string& s) {
  using B = remkit::Block;
  if (s == "indicator") return B::indicator;
  if (s == "volume") return B::volume;
  if (s == "exp_decay") return B::exp_decay;
  if (s == "temporal") return B::temporal;
  remkit::fail(remkit::errc::config, "unknown building block '" + s + "'");
}

remkit::GlobalTransform transform_from(const std::string& s) {
  using T = remkit::GlobalTransform;
  if (s == "table") return T::table;
  if (s == "time_of_day") return T::time_of_day;
  if (s == "day_of_week") return T::day_of_week;
  if (s == "weekend") return T::weekend;
  if (s == "linear_time") return T::linear_time;
  remkit::fail(remkit::errc::config, "unknown global transform '" + s + "'");
}

remkit::ExogKind exog_kind_from(const std::string& s) {
  if (s == "node") return remkit::ExogKind::node;
  if (s == "dyad") return remkit::ExogKind::dyad;
  if (s == "global") return remkit::ExogKind::global;
  remkit::fail(remkit::errc::config, "unknown exogenous table kind '" + s + "'");
}

// ---------------------------------------------------------------------------
// Config to domain objects

remkit::IngestOptions ingest_options(const RunConfig& cfg) {
  remkit::IngestOptions opt;
  const json& d = cfg.doc;
  if (d.contains("delimiter")) {
    const std::string delim = d["delimiter"];
    if (delim.size() != 1)
      remkit::fail(remkit::errc::config, "delimiter must be a single character");
    opt.delimiter = delim[0];
  }
  opt.mode = d.value("bipartite", false) ? remkit::Mode::bipartite : remkit::Mode::one_mode;
  opt.order_only = d.value("order_only", false);
  opt.allow_self_loops = d.value("allow_self_loops", false);
  opt.horizon = d.value("horizon", -1.0);
  if (cfg.flags.horizon_set) opt.horizon = cfg.flags.horizon;
  if (d.contains("columns")) {
    const json& c = d["columns"];
    opt.time_column = c.value("time", opt.time_column);
    opt.sender_column = c.value("sender", opt.sender_column);
    opt.receiver_column = c.value("receiver", opt.receiver_column);
    opt.type_column = c.value("type", opt.type_column);
    opt.weight_column = c.value("weight", opt.weight_column);
  }
  return opt;
}

std::string events_path(const RunConfig& cfg) {
  if (!cfg.flags.events.empty()) return cfg.resolve(cfg.flags.events);
  if (!cfg.doc.contains("events"))
    remkit::fail(remkit::errc::config, "config has no 'events' path");
  return cfg.resolve(cfg.doc["events"]);
}

remkit::RiskPolicy risk_policy(const RunConfig& cfg) {
  remkit::RiskPolicy policy;
  policy.allow_self_loops = cfg.doc.value("allow_self_loops", false);
  if (!cfg.doc.contains("risk")) {
    if (cfg.doc.value("bipartite", false)) policy.kind = remkit::RiskKind::bipartite;
    return policy;
  }
  json r = cfg.doc["risk"];
  if (r.is_string()) r = load_json(cfg.resolve(r));
  const std::string kind = r.value("policy", std::string("full"));
  if (kind == "full") policy.kind = remkit::RiskKind::full;
  else if (kind == "bipartite") policy.kind = remkit::RiskKind::bipartite;
  else if (kind == "non-recurrent") policy.kind = remkit::RiskKind::non_recurrent;
  else remkit::fail(remkit::errc::config, "unknown risk policy '" + kind + "'");
  policy.allow_self_loops = r.value("allow_self_loops", policy.allow_self_loops);
  for (const json& e : r.value("exclusions", json::array())) {
    if (!e.is_array() || e.size() != 2)
      remkit::fail(remkit::errc::schema, "risk exclusions must be [sender, receiver] pairs");
    policy.exclusions.emplace_back(e[0].get<std::string>(), e[1].get<std::string>());
  }
  if (r.contains("by_type"))
    for (const auto& [type_label, list] : r["by_type"].items())
      for (const json& e : list)
        policy.by_type[type_label].emplace_back(e[0].get<std::string>(), e[1].get<std::string>());
  for (const json& w : r.value("node_windows", json::array())) {
    remkit::NodeWindow window;
    window.node = w.at("node");
    window.enter = w.value("enter", 0.0);
    window.exit = w.value("exit", std::numeric_limits<double>::infinity());
    policy.node_windows.push_back(std::move(window));
  }
  return policy;
}

std::vector<remkit::StatisticSpec> statistic_specs(const RunConfig& cfg) {
  std::vector<remkit::StatisticSpec> specs;
  for (const json& e : cfg.doc.value("statistics", json::array())) {
    remkit::StatisticSpec s;
    if (!e.contains("name") || !e.contains("mechanism"))
      remkit::fail(remkit::errc::schema, "each statistic needs 'name' and 'mechanism'");
    s.name = e["name"];
    s.mechanism = mechanism_from(e["mechanism"]);
    s.block = block_from(e.value("block", std::string("volume")));
    s.half_life = e.value("half_life", 0.0);
    if (e.contains("cap")) s.cap = e["cap"];
    s.table = e.value("table", std::string{});
    if (s.table.empty() &&
        (s.mechanism == remkit::Mechanism::exogenous_node ||
         s.mechanism == remkit::Mechanism::exogenous_dyad ||
         s.mechanism == remkit::Mechanism::distance_to_last ||
         (s.mechanism == remkit::Mechanism::exogenous_global &&
          e.value("transform", std::string("table")) == "table")))
      s.table = s.name;  // table defaults to the statistic's own name
    s.receiver_side = e.value("side", std::string("sender")) == "receiver";
    s.transform = transform_from(e.value("transform", std::string("table")));
    s.origin_weekday = e.value("origin_weekday", 0);
    s.units_per_day = e.value("units_per_day", 1.0);
    specs.push_back(std::move(s));
  }
  return specs;
}

std::vector<remkit::ExogenousTable> exogenous_tables(const RunConfig& cfg) {
  std::vector<remkit::ExogenousTable> tables;
  for (const json& e : cfg.doc.value("exogenous", json::array())) {
    if (!e.contains("name") || !e.contains("kind") || !e.contains("path"))
      remkit::fail(remkit::errc::schema, "each exogenous table needs 'name', 'kind', 'path'");
    tables.push_back(remkit::load_exogenous_csv(cfg.resolve(e["path"]), exog_kind_from(e["kind"]),
                                                e["name"]));
  }
  return tables;
}

remkit::OptimizerConfig optimizer_config(const RunConfig& cfg) {
  remkit::OptimizerConfig oc;
  const json o = cfg.doc.value("optimizer", json::object());
  const std::string method = o.value("method", std::string("newton"));
  if (method == "newton") oc.method = remkit::OptimizerConfig::Method::newton;
  else if (method == "adam") oc.method = remkit::OptimizerConfig::Method::adam;
  else remkit::fail(remkit::errc::config, "unknown optimizer '" + method + "'");
  oc.tol = o.value("tol", oc.tol);
  oc.max_iter = o.value("max_iter", oc.max_iter);
  oc.separation_bound = o.value("separation_bound", oc.separation_bound);
  oc.adam_alpha = o.value("alpha", oc.adam_alpha);
  oc.adam_max_iter = o.value("adam_max_iter", oc.adam_max_iter);
  oc.adam_batch = o.value("batch", oc.adam_batch);
  oc.cv_folds = o.value("cv_folds", oc.cv_folds);
  oc.cv_seed = o.value("cv_seed", oc.cv_seed);
  if (o.contains("nu")) oc.fix_nu = o["nu"].get<std::vector<double>>();
  if (!cfg.flags.nu.empty()) oc.fix_nu = cfg.flags.nu;
  return oc;
}

remkit::PipelineConfig pipeline_config(const RunConfig& cfg, std::string* regime_text = nullptr) {
  remkit::PipelineConfig pc;
  std::string regime = cfg.doc.value("regime", std::string("cox"));
  if (!cfg.flags.regime.empty()) regime = cfg.flags.regime;
  std::size_t m_in_name = 0;
  pc.regime = remkit::parse_regime(regime, &m_in_name);
  pc.controls = cfg.doc.value("controls", std::size_t{20});
  if (m_in_name > 0) pc.controls = m_in_name;
  if (cfg.flags.controls > 0) pc.controls = cfg.flags.controls;
  pc.seed = cfg.seed();
  if (cfg.doc.contains("shift")) {
    const json& s = cfg.doc["shift"];
    pc.shift.zero = s.value("zero", false);
    pc.shift.scale = s.value("scale", 0.0);
  }
  pc.optimizer = optimizer_config(cfg);
  if (regime_text) *regime_text = regime_name(pc.regime);
  return pc;
}

// Everything the model-fitting commands need, with construction order fixed
// so the internal pointers (history -> sequence, timeline -> sequence) stay
// valid for the workspace's lifetime.
struct Workspace {
  remkit::EventSequence seq;
  std::unique_ptr<remkit::History> history;
  std::unique_ptr<remkit::RiskSetTimeline> rst;
  std::vector<remkit::StatisticSpec> specs;
  remkit::Formula formula;
};

std::unique_ptr<Workspace> load_workspace(const RunConfig& cfg, bool need_formula) {
  auto ws = std::make_unique<Workspace>();
  ws->seq = remkit::parse_event_file(events_path(cfg), ingest_options(cfg));
  ws->history = std::make_unique<remkit::History>(ws->seq);
  for (auto& table : exogenous_tables(cfg)) ws->history->attach(std::move(table));
  ws->rst = std::make_unique<remkit::RiskSetTimeline>(ws->seq, risk_policy(cfg));
  ws->specs = statistic_specs(cfg);
  for (const auto& spec : ws->specs) remkit::validate_spec(spec, ws->seq);
  if (need_formula) {
    std::string formula = cfg.doc.value("formula", std::string{});
    if (!cfg.flags.formula.empty()) formula = cfg.flags.formula;
    if (formula.empty()) remkit::fail(remkit::errc::config, "config has no 'formula'");
    std::vector<std::string> names;
    for (const auto& spec : ws->specs) names.push_back(spec.name);
    // "factors" maps domain names onto grouping registries, so a config can
    // write re(species) for a random effect over senders.
    std::vector<std::string> factors = {"sender", "receiver", "type"};
    std::map<std::string, std::string> alias;
    for (const auto& [name, target] : cfg.doc.value("factors", json::object()).items()) {
      const std::string canon = target.get<std::string>();
      if (canon != "sender" && canon != "receiver" && canon != "type")
        remkit::fail(remkit::errc::config,
                     "factor '" + name + "' must map to sender, receiver, or type");
      factors.push_back(name);
      alias[name] = canon;
    }
    ws->formula = remkit::parse_formula(formula, names, factors);
    for (auto& term : ws->formula.terms) {
      const auto hit = alias.find(term.target);
      if (term.kind == remkit::TermKind::random_effect && hit != alias.end())
        term.target = hit->second;
    }
  }
  return ws;
}

// ---------------------------------------------------------------------------
// Artifact helpers

// terms/<name>.csv uses the statistic's bare name: s(distance) -> distance.
std::string grid_file_name(const std::string& term) {
  std::string inner = term;
  const auto open = term.find('(');
  if (open != std::string::npos && term.back() == ')')
    inner = term.substr(open + 1, term.size() - open - 2);
  for (char& c : inner)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_' && c != '-') c = '_';
  return inner;
}

void write_term_grids(const std::string& dir, const remkit::FitResult& fit) {
  const auto grids = remkit::term_grids(fit);
  if (grids.empty()) return;
  fs::create_directories(dir);
  for (const auto& grid : grids) {
    const std::string path = dir + "/" + grid_file_name(grid.term) + ".csv";
    std::ofstream out(path);
    if (!out) remkit::fail(remkit::errc::data, "cannot write " + path);
    out.precision(12);
    out << "x,fit,se\n";
    for (std::size_t i = 0; i < grid.x.size(); ++i)
      out << grid.x[i] << ',' << grid.value[i] << ',' << grid.se[i] << "\n";
  }
}

void print_fit_summary(std::ostream& out, const remkit::FitResult& fit,
                       const remkit::SamplingWarnings& warnings) {
  out << "regime: " << fit.regime << "\n";
  out << "converged: " << (fit.converged ? "yes" : "no");
  if (fit.separation) out << " (separation: a coefficient is running away)";
  out << "\niterations: " << fit.iterations << "\n";
  out << "log-likelihood: " << fit.loglik << "\n";
  out << "aic: " << fit.aic << " (edf " << fit.edf_total << ")\n";
  for (std::size_t l = 0; l < fit.nu.size(); ++l)
    out << "nu[" << l << "]: " << fit.nu[l] << "\n";
  if (warnings.clamped_events > 0)
    out << "warning: " << warnings.clamped_events << " events had fewer controls than requested\n";
  if (warnings.dropped_rows > 0)
    out << "warning: " << warnings.dropped_rows << " control draws were dropped (shift window)\n";
  out << "\n  " << std::left << std::setw(28) << "term" << std::right << std::setw(12)
      << "estimate" << std::setw(12) << "se" << "\n";
  for (Eigen::Index i = 0; i < fit.theta.size(); ++i) {
    out << "  " << std::left << std::setw(28) << fit.colnames[static_cast<std::size_t>(i)]
        << std::right << std::setw(12) << std::setprecision(4) << std::fixed << fit.theta(i)
        << std::setw(12) << fit.se(i) << "\n";
    out.unsetf(std::ios::fixed);
    out << std::setprecision(6);
  }
}

std::size_t bridge_reps(const RunConfig& cfg, std::size_t fallback) {
  if (cfg.flags.bridge_set) return cfg.flags.bridge_reps;
  return cfg.doc.value("gof", json::object()).value("bridge_reps", fallback);
}

std::uint64_t gof_seed(const RunConfig& cfg) {
  return cfg.doc.value("gof", json::object()).value("seed", cfg.seed() ^ 0x60fULL);
}

// ---------------------------------------------------------------------------
// Commands

int cmd_ingest(const RunConfig& cfg) {
  const auto ws = load_workspace(cfg, false);
  const remkit::EventSequence& seq = ws->seq;
  std::cout << "events: " << seq.n() << "\n";
  if (seq.mode == remkit::Mode::one_mode) {
    std::cout << "actors: " << seq.n_senders() << " (one-mode)\n";
  } else {
    std::cout << "senders: " << seq.n_senders() << ", receivers: " << seq.n_receivers()
              << " (bipartite)\n";
  }
  std::cout << "window: [0, " << seq.t_end << "]"
            << (seq.order_only ? " (order-only, unit-spaced)" : "") << "\n";
  if (!seq.jitter.empty()) std::cout << "tie-jittered rows: " << seq.jitter.size() << "\n";
  std::cout << "dyads at risk at the first event: "
            << ws->rst->size(seq.events.front().time, seq.events.front().type) << "\n";
  for (std::size_t i = 0; i < seq.n(); ++i) {
    const auto& ev = seq.events[i];
    if (!ws->rst->at_risk({ev.sender, ev.receiver}, ev.time, ev.type))
      remkit::fail(remkit::errc::data,
                   "event #" + std::to_string(i + 1) + " is not in its own risk set");
  }
  if (!cfg.flags.out_file.empty()) {
    remkit::write_event_csv(cfg.flags.out_file, seq);
    std::cout << "normalized events written to " << cfg.flags.out_file << "\n";
  }
  return 0;
}

int cmd_stats(const RunConfig& cfg) {
  const auto ws = load_workspace(cfg, false);
  if (ws->specs.empty()) remkit::fail(remkit::errc::config, "config declares no statistics");
  std::vector<remkit::StatRow> points;
  points.reserve(ws->seq.n());
  for (const auto& ev : ws->seq.events) points.push_back({ev.sender, ev.receiver, ev.time});
  const auto columns = remkit::compute_columns(*ws->history, ws->specs, points);

  std::string path = cfg.flags.out_file;
  if (path.empty()) {
    fs::create_directories(cfg.output_dir());
    path = cfg.output_dir() + "/stats.csv";
  }
  std::ofstream out(path);
  if (!out) remkit::fail(remkit::errc::data, "cannot write " + path);
  out.precision(17);
  out << "time,sender,receiver";
  for (const auto& spec : ws->specs) out << ',' << spec.name;
  out << "\n";
  const remkit::Registry& rreg = ws->seq.receiver_registry();
  for (std::size_t i = 0; i < ws->seq.n(); ++i) {
    const auto& ev = ws->seq.events[i];
    out << ev.time << ',' << ws->seq.senders.label(ev.sender) << ',' << rreg.label(ev.receiver);
    for (const auto& col : columns) out << ',' << col[i];
    out << "\n";
  }
  std::cout << "wrote " << ws->seq.n() << " rows x " << ws->specs.size() << " statistics to "
            << path << "\n";
  return 0;
}

int cmd_sample(const RunConfig& cfg) {
  const auto ws = load_workspace(cfg, false);
  std::size_t m = cfg.doc.value("controls", std::size_t{1});
  if (cfg.flags.controls > 0) m = cfg.flags.controls;
  remkit::SamplingWarnings warnings;
  std::optional<remkit::ShiftTable> shifts;
  remkit::Rng root(cfg.seed());
  if (cfg.flags.shifted || cfg.doc.value("regime", std::string{}) == "ccgam-shifted") {
    remkit::ShiftConfig sc;
    if (cfg.doc.contains("shift")) {
      sc.zero = cfg.doc["shift"].value("zero", false);
      sc.scale = cfg.doc["shift"].value("scale", 0.0);
    }
    if (!sc.zero && !(sc.scale > 0.0)) sc.scale = ws->seq.t_end / 10.0;
    shifts = remkit::draw_shifts(*ws->rst, sc, root.derive(1));
  }
  const auto rows = remkit::build_case_control(*ws->history, *ws->rst, ws->specs, m,
                                               shifts ? root.derive(2) : root, shifts, &warnings);

  std::string path = cfg.flags.out_file;
  if (path.empty()) {
    fs::create_directories(cfg.output_dir());
    path = cfg.output_dir() + "/sample.csv";
  }
  std::ofstream out(path);
  if (!out) remkit::fail(remkit::errc::data, "cannot write " + path);
  out.precision(17);
  remkit::write_case_control_csv(out, rows, ws->specs, ws->seq);
  std::cout << "wrote " << rows.size() << " case-control rows (m=" << m << ") to " << path
            << "\n";
  if (warnings.clamped_events > 0)
    std::cout << "warning: " << warnings.clamped_events
              << " events had fewer controls than requested\n";
  if (warnings.dropped_rows > 0)
    std::cout << "warning: " << warnings.dropped_rows << " control draws were dropped\n";
  return 0;
}

// True effect shapes available to config-driven generators. Linear "beta"
// is the common case; "fn" objects cover the non-linear fixtures.
std::function<double(double)> effect_fn(const json& fn) {
  const std::string type = fn.at("type");
  if (type == "sine") {
    const double a = fn.value("amplitude", 1.0);
    const double f = fn.value("frequency", 1.0);
    const double p = fn.value("phase", 0.0);
    return [a, f, p](double x) { return a * std::sin(f * x + p); };
  }
  if (type == "poly2") {
    const double c0 = fn.value("c0", 0.0), c1 = fn.value("c1", 0.0), c2 = fn.value("c2", 0.0);
    return [c0, c1, c2](double x) { return c0 + x * (c1 + x * c2); };
  }
  remkit::fail(remkit::errc::config, "unknown effect fn type '" + type + "'");
}

int cmd_simulate(const RunConfig& cfg) {
  if (!cfg.doc.contains("simulate"))
    remkit::fail(remkit::errc::config, "config has no 'simulate' block");
  const json& sim = cfg.doc["simulate"];
  remkit::GeneratorSpec spec;

  const auto labels = [](const json& v, const std::string& prefix) {
    std::vector<std::string> out;
    if (v.is_number_unsigned() || v.is_number_integer()) {
      const auto n = v.get<std::size_t>();
      for (std::size_t i = 1; i <= n; ++i) out.push_back(prefix + std::to_string(i));
    } else {
      for (const json& e : v) out.push_back(e.get<std::string>());
    }
    return out;
  };
  if (!sim.contains("actors"))
    remkit::fail(remkit::errc::config, "simulate block needs 'actors'");
  spec.senders = labels(sim["actors"], "a");
  if (sim.contains("receivers")) spec.receivers = labels(sim["receivers"], "b");

  spec.stats = statistic_specs(cfg);
  for (const json& t : sim.value("terms", json::array())) {
    remkit::TrueTerm term;
    term.stat = t.at("statistic");
    if (t.contains("fn")) term.fn = effect_fn(t["fn"]);
    else term.beta = t.at("beta");
    spec.terms.push_back(std::move(term));
  }
  spec.baseline = sim.value("baseline", 1.0);
  spec.horizon = sim.value("horizon", 0.0);
  if (cfg.flags.horizon_set) spec.horizon = cfg.flags.horizon;
  if (sim.contains("log_time_slope")) {
    const double slope = sim["log_time_slope"];
    spec.log_time_effect = [slope](double t) { return slope * t; };
  }
  spec.policy = risk_policy(cfg);
  spec.allow_self_loops =
      sim.value("allow_self_loops", cfg.doc.value("allow_self_loops", false));
  spec.seed = cfg.seed();
  spec.max_events = sim.value("max_events", spec.max_events);

  const auto tables = exogenous_tables(cfg);
  for (const auto& table : tables) spec.tables.push_back(&table);

  const remkit::EventSequence seq = remkit::generate(spec);

  std::string path = cfg.flags.out_file;
  if (path.empty()) {
    fs::create_directories(cfg.output_dir());
    path = cfg.output_dir() + "/simulated.csv";
  }
  remkit::write_event_csv(path, seq);
  std::cout << "n=" << seq.n() << " horizon=" << spec.horizon << " seed=" << spec.seed << "\n";
  if (seq.n() == 0)
    std::cout << "warning: no events generated within the horizon\n";
  std::cout << "events written to " << path << "\n";
  return 0;
}

int cmd_fit(const RunConfig& cfg) {
  const auto ws = load_workspace(cfg, true);
  std::string regime_text;
  const remkit::PipelineConfig pc = pipeline_config(cfg, &regime_text);
  const auto model = remkit::fit_model(*ws->history, *ws->rst, ws->specs, ws->formula, pc);

  const std::string outdir = cfg.output_dir();
  fs::create_directories(outdir);

  json fj = remkit::fit_to_json(model.fit);
  fj["config"] = {{"events", events_path(cfg)},
                  {"formula", cfg.flags.formula.empty()
                                  ? cfg.doc.value("formula", std::string{})
                                  : cfg.flags.formula},
                  {"regime", regime_text},
                  {"controls", pc.controls},
                  {"seed", pc.seed}};
  remkit::write_json(outdir + "/fit.json", fj);
  write_term_grids(outdir + "/terms", model.fit);

  const std::size_t reps = bridge_reps(cfg, 10000);
  const auto gof = remkit::run_gof(model, reps, remkit::Rng(gof_seed(cfg)));
  remkit::write_json(outdir + "/gof.json", remkit::gof_to_json(gof));

  print_fit_summary(std::cout, model.fit, model.warnings);
  std::cout << "\nartifacts in " << outdir << ": fit.json, gof.json";
  if (!remkit::term_grids(model.fit).empty()) std::cout << ", terms/*.csv";
  std::cout << "\n";
  if (!model.fit.converged) {
    std::cerr << "remkit: fit did not converge\n";
    return 2;
  }
  return 0;
}

int cmd_gof(const RunConfig& cfg) {
  const std::string outdir = cfg.output_dir();
  const std::string fit_path =
      cfg.flags.fit_path.empty() ? outdir + "/fit.json" : cfg.flags.fit_path;
  const json fj = load_json(fit_path);

  std::string regime_text;
  remkit::PipelineConfig pc = pipeline_config(cfg, &regime_text);
  const json echo = fj.value("config", json::object());
  if (echo.contains("regime") && echo["regime"] != regime_text)
    remkit::fail(remkit::errc::config, "regime mismatch: fit.json was produced with '" +
                                           echo["regime"].get<std::string>() +
                                           "', config asks for '" + regime_text + "'");
  // The saved sampling parameters take precedence: the rebuilt design must
  // be the one the fit saw.
  if (echo.contains("seed")) pc.seed = echo["seed"];
  if (echo.contains("controls")) pc.controls = echo["controls"];

  Eigen::VectorXd theta(fj.at("coefficients").size());
  Eigen::Index i = 0;
  for (const json& c : fj["coefficients"]) theta(i++) = c.at("estimate");
  std::vector<double> nu;
  for (const json& b : fj.at("blocks"))
    if (b.contains("nu")) nu.push_back(b["nu"]);

  const auto ws = load_workspace(cfg, true);
  const auto model =
      remkit::restore_model(*ws->history, *ws->rst, ws->specs, ws->formula, pc, theta, nu);

  std::size_t reps = bridge_reps(cfg, 0);
  if (reps == 0 && remkit::has_penalized_terms(model))
    remkit::fail(remkit::errc::config,
                 "bridge replication count required for smooth-term tests; "
                 "pass --bridge-reps or set gof.bridge_reps");
  const auto gof = remkit::run_gof(model, reps, remkit::Rng(gof_seed(cfg)));

  fs::create_directories(outdir + "/gof");
  remkit::write_json(outdir + "/gof.json", remkit::gof_to_json(gof));
  std::cout << "  " << std::left << std::setw(28) << "term" << std::right << std::setw(12)
            << "statistic" << std::setw(12) << "p" << "  method\n";
  for (const auto& r : gof) {
    remkit::write_gof_path_csv(outdir + "/gof/" + grid_file_name(r.term) + ".csv", r);
    std::cout << "  " << std::left << std::setw(28) << r.term << std::right << std::setw(12)
              << std::setprecision(4) << r.statistic << std::setw(12) << r.p_value << "  "
              << r.method << "\n";
  }
  std::cout << "gof.json and per-term paths written to " << outdir << "\n";
  return 0;
}

int cmd_report(const RunConfig& cfg) {
  const std::string outdir = cfg.output_dir();
  const std::string fit_path =
      cfg.flags.fit_path.empty() ? outdir + "/fit.json" : cfg.flags.fit_path;
  const json fj = load_json(fit_path);
  fs::create_directories(outdir);

  {
    std::ofstream out(outdir + "/coefficients.csv");
    if (!out) remkit::fail(remkit::errc::data, "cannot write coefficients.csv");
    out.precision(12);
    out << "term,estimate,se\n";
    for (const json& c : fj.at("coefficients"))
      out << c.at("name").get<std::string>() << ',' << c.at("estimate").get<double>() << ','
          << c.at("se").get<double>() << "\n";
  }
  {
    std::ofstream out(outdir + "/blocks.csv");
    if (!out) remkit::fail(remkit::errc::data, "cannot write blocks.csv");
    out.precision(12);
    out << "block,columns,edf,nu\n";
    for (const json& b : fj.at("blocks")) {
      out << b.at("name").get<std::string>() << ',' << b.at("columns").get<std::size_t>() << ','
          << b.at("edf").get<double>() << ',';
      if (b.contains("nu")) out << b["nu"].get<double>();
      out << "\n";
    }
  }
  std::size_t grids = 0;
  for (const auto& [term, grid] : fj.value("terms", json::object()).items()) {
    fs::create_directories(outdir + "/terms");
    const std::string path = outdir + "/terms/" + grid_file_name(term) + ".csv";
    std::ofstream out(path);
    if (!out) remkit::fail(remkit::errc::data, "cannot write " + path);
    out.precision(12);
    out << "x,fit,se\n";
    const auto& x = grid.at("x");
    const auto& fit = grid.at("fit");
    const auto& se = grid.at("se");
    for (std::size_t k = 0; k < x.size(); ++k)
      out << x[k].get<double>() << ',' << fit[k].get<double>() << ',' << se[k].get<double>()
          << "\n";
    ++grids;
  }
  std::cout << "coefficients.csv, blocks.csv";
  if (grids > 0) std::cout << ", " << grids << " term grid(s)";
  std::cout << " written to " << outdir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"relational event modeling toolkit"};
  app.require_subcommand(1);

  std::string config_path;
  Overrides flags;

  const auto add_common = [&](CLI::App* sub) {
    sub->add_option("-c,--config", config_path, "JSON config file")->required();
    sub->add_option("-o,--output", flags.output, "output directory (overrides config)");
    sub->add_option("--seed", flags.seed, "RNG seed (overrides config and REMKIT_SEED)")
        ->each([&](const std::string&) { flags.seed_set = true; });
    sub->add_option("--events", flags.events, "events CSV path (overrides config)");
    sub->add_option("--threads", flags.threads, "cap worker threads");
    return sub;
  };

  auto* ingest = add_common(app.add_subcommand("ingest", "parse events and report shape"));
  ingest->add_option("--out", flags.out_file, "write normalized events CSV here");

  auto* stats = add_common(app.add_subcommand("stats", "evaluate statistics at each event"));
  stats->add_option("--out", flags.out_file, "statistics CSV path");

  auto* sample = add_common(app.add_subcommand("sample", "draw and export case-control rows"));
  sample->add_option("--out", flags.out_file, "case-control CSV path");
  sample->add_option("-m,--controls", flags.controls, "controls per event");
  sample->add_flag("--shifted", flags.shifted, "sample on the shifted processes");

  auto* simulate = add_common(app.add_subcommand("simulate", "generate a synthetic sequence"));
  simulate->add_option("--out", flags.out_file, "events CSV path");
  simulate->add_option("--horizon", flags.horizon, "observation window end")
      ->each([&](const std::string&) { flags.horizon_set = true; });

  auto* fit = add_common(app.add_subcommand("fit", "fit a model and write artifacts"));
  fit->add_option("--formula", flags.formula, "model formula (overrides config)");
  fit->add_option("--regime", flags.regime, "poisson|cox|clogit(m)|ccgam|ccgam-shifted");
  fit->add_option("-m,--controls", flags.controls, "controls per event (clogit)");
  fit->add_option("--bridge-reps", flags.bridge_reps, "bridge replications for smooth tests")
      ->each([&](const std::string&) { flags.bridge_set = true; });
  fit->add_option("--nu", flags.nu, "fix smoothing parameters (one per penalized term)");

  auto* gof = add_common(app.add_subcommand("gof", "residual-process tests for a saved fit"));
  gof->add_option("--fit", flags.fit_path, "fit.json path (default <output>/fit.json)");
  gof->add_option("--regime", flags.regime, "expected regime (must match the saved fit)");
  gof->add_option("--bridge-reps", flags.bridge_reps, "bridge replications for smooth tests")
      ->each([&](const std::string&) { flags.bridge_set = true; });

  auto* report = add_common(app.add_subcommand("report", "saved fit to plot-ready CSVs"));
  report->add_option("--fit", flags.fit_path, "fit.json path (default <output>/fit.json)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (flags.threads > 0) Eigen::setNbThreads(flags.threads);
    const RunConfig cfg = load_config(config_path, flags);
    if (ingest->parsed()) return cmd_ingest(cfg);
    if (stats->parsed()) return cmd_stats(cfg);
    if (sample->parsed()) return cmd_sample(cfg);
    if (simulate->parsed()) return cmd_simulate(cfg);
    if (fit->parsed()) return cmd_fit(cfg);
    if (gof->parsed()) return cmd_gof(cfg);
    if (report->parsed()) return cmd_report(cfg);
  } catch (const remkit::Error& e) {
    std::cerr << "remkit [" << errc_name(e.code()) << "]: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "remkit: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
