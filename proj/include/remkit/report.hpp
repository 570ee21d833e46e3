#pragma once

// Serialization of fits, diagnostics, and generated sequences.

#include <fstream>
#include <json.hpp>
#include <string>
#include <vector>

#include "remkit/basis.hpp"
#include "remkit/diagnostics.hpp"
#include "remkit/error.hpp"
#include "remkit/events.hpp"
#include "remkit/fit.hpp"

namespace remkit {

// Evaluation grid of one smooth or time-varying term: fitted curve with a
// pointwise standard-error band. Curves from partition-of-unity bases are
// identified up to a vertical shift; they are reported as fitted.
struct TermGrid {
  std::string term;
  std::vector<double> x;
  std::vector<double> value;
  std::vector<double> se;
};

inline std::vector<TermGrid> term_grids(const FitResult& fit, int points = 200) {
  std::vector<TermGrid> out;
  if (points < 2) fail(errc::config, "grid needs at least 2 points");
  for (const auto& block : fit.blocks) {
    if (block.kind != TermKind::smooth && block.kind != TermKind::time_varying) continue;
    TermGrid grid;
    grid.term = block.name;
    const bool radial = block.basis == SmoothBasis::thinplate;
    double lo, hi;
    if (radial) {
      lo = block.kind == TermKind::time_varying ? 0.0 : block.knots.front();
      hi = block.knots.back();
    } else {
      lo = block.knots[3];
      hi = block.knots[block.knots.size() - 4];
    }
    const auto begin = static_cast<Eigen::Index>(block.begin);
    const auto size = static_cast<Eigen::Index>(block.size);
    const Eigen::VectorXd theta = fit.theta.segment(begin, size);
    const Eigen::MatrixXd cov = fit.covariance.block(begin, begin, size, size);
    for (int g = 0; g < points; ++g) {
      const double x = lo + (hi - lo) * static_cast<double>(g) / (points - 1);
      Eigen::RowVectorXd row(size);
      if (radial) {
        const auto b = thinplate_basis(x, block.knots);
        for (Eigen::Index j = 0; j < size; ++j) row(j) = b[static_cast<std::size_t>(j)];
      } else {
        const auto b = bspline_basis(x, block.knots, 3);
        Eigen::Map<const Eigen::RowVectorXd> raw(b.data(), static_cast<Eigen::Index>(b.size()));
        row = raw * block.transform;
      }
      grid.x.push_back(x);
      grid.value.push_back(row.dot(theta));
      grid.se.push_back(std::sqrt(std::max(0.0, (row * cov * row.transpose())(0, 0))));
    }
    out.push_back(std::move(grid));
  }
  return out;
}

inline nlohmann::json fit_to_json(const FitResult& fit) {
  nlohmann::json j;
  j["schema_version"] = "1";
  j["regime"] = fit.regime;
  j["converged"] = fit.converged;
  j["separation"] = fit.separation;
  j["iterations"] = fit.iterations;
  j["loglik"] = fit.loglik;
  j["penalized_loglik"] = fit.penalized_loglik;
  j["score_norm"] = fit.score_norm;
  j["aic"] = fit.aic;
  j["edf_total"] = fit.edf_total;

  nlohmann::json coef = nlohmann::json::array();
  for (Eigen::Index i = 0; i < fit.theta.size(); ++i) {
    nlohmann::json c;
    c["name"] = fit.colnames[static_cast<std::size_t>(i)];
    c["estimate"] = fit.theta(i);
    c["se"] = fit.se.size() > i ? fit.se(i) : 0.0;
    coef.push_back(std::move(c));
  }
  j["coefficients"] = std::move(coef);

  nlohmann::json blocks = nlohmann::json::array();
  for (std::size_t b = 0; b < fit.blocks.size(); ++b) {
    const auto& block = fit.blocks[b];
    nlohmann::json e;
    e["name"] = block.name;
    e["columns"] = block.size;
    e["edf"] = fit.edf_block.size() > b ? fit.edf_block[b] : 0.0;
    if (block.penalty >= 0)
      e["nu"] = fit.penalties[static_cast<std::size_t>(block.penalty)].nu;
    blocks.push_back(std::move(e));
  }
  j["blocks"] = std::move(blocks);

  nlohmann::json terms = nlohmann::json::object();
  for (const auto& grid : term_grids(fit)) {
    nlohmann::json t;
    t["x"] = grid.x;
    t["fit"] = grid.value;
    t["se"] = grid.se;
    terms[grid.term] = std::move(t);
  }
  j["terms"] = std::move(terms);
  return j;
}

inline nlohmann::json gof_to_json(const std::vector<GofResult>& results) {
  nlohmann::json j;
  j["schema_version"] = "1";
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : results) {
    nlohmann::json e;
    e["term"] = r.term;
    e["statistic"] = r.statistic;
    e["p_value"] = r.p_value;
    e["method"] = r.method;
    if (r.bridge_reps > 0) e["replications"] = r.bridge_reps;
    if (r.j_rank >= 0) e["rank"] = r.j_rank;
    arr.push_back(std::move(e));
  }
  j["terms"] = std::move(arr);
  return j;
}

inline void write_json(const std::string& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) fail(errc::data, "cannot write " + path);
  out << j.dump(2) << "\n";
}

inline void write_gof_path_csv(const std::string& path, const GofResult& r) {
  std::ofstream out(path);
  if (!out) fail(errc::data, "cannot write " + path);
  out << "u";
  for (Eigen::Index j = 0; j < r.w_path.cols(); ++j) out << ",w" << (j + 1);
  out << "\n";
  for (std::size_t i = 0; i < r.grid.size(); ++i) {
    out << r.grid[i];
    for (Eigen::Index j = 0; j < r.w_path.cols(); ++j)
      out << ',' << r.w_path(static_cast<Eigen::Index>(i), j);
    out << "\n";
  }
}

inline void write_event_csv(std::ostream& out, const EventSequence& seq) {
  bool typed = false;
  for (std::size_t i = 0; i < seq.types.size(); ++i)
    if (!seq.types.label(i).empty()) typed = true;
  out << "time,sender,receiver";
  if (typed) out << ",type";
  out << ",weight\n";
  const Registry& rreg = seq.receiver_registry();
  out.precision(17);
  for (const auto& ev : seq.events) {
    out << ev.time << ',' << seq.senders.label(ev.sender) << ',' << rreg.label(ev.receiver);
    if (typed) out << ',' << seq.types.label(ev.type);
    out << ',' << ev.weight << "\n";
  }
}

inline void write_event_csv(const std::string& path, const EventSequence& seq) {
  std::ofstream out(path);
  if (!out) fail(errc::data, "cannot write " + path);
  write_event_csv(out, seq);
}

}  // namespace remkit
