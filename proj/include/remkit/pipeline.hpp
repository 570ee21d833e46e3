#pragma once

// One-call drivers from history + formula to a fitted model and its
// diagnostics, shared by the command-line tool and the tests. The fitted
// regimes:
//
//   poisson        full risk set, piecewise-constant baseline, intercepts
//   cox            full risk set, partial likelihood
//   clogit(m)      m sampled controls per event, conditional logit
//   ccgam          one control per event, differenced logistic form
//   ccgam-shifted  ccgam on the time-shifted counting processes, which
//                  makes global covariates identifiable

#include <cctype>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "remkit/design.hpp"
#include "remkit/diagnostics.hpp"
#include "remkit/error.hpp"
#include "remkit/fit.hpp"
#include "remkit/likelihood.hpp"
#include "remkit/sampling.hpp"

namespace remkit {

enum class Regime { poisson, cox, clogit, ccgam, ccgam_shifted };

inline const char* regime_name(Regime r) {
  switch (r) {
    case Regime::poisson: return "poisson";
    case Regime::cox: return "cox";
    case Regime::clogit: return "clogit";
    case Regime::ccgam: return "ccgam";
    case Regime::ccgam_shifted: return "ccgam-shifted";
  }
  return "?";
}

// Accepts "poisson", "cox", "clogit", "clogit(M)", "ccgam", "ccgam-shifted".
// A control count inside clogit(...) is written to *m_out when present.
inline Regime parse_regime(const std::string& text, std::size_t* m_out = nullptr) {
  if (text == "poisson") return Regime::poisson;
  if (text == "cox") return Regime::cox;
  if (text == "ccgam") return Regime::ccgam;
  if (text == "ccgam-shifted") return Regime::ccgam_shifted;
  if (text == "clogit") return Regime::clogit;
  if (text.rfind("clogit(", 0) == 0 && text.size() > 8 && text.back() == ')') {
    std::size_t m = 0;
    for (std::size_t i = 7; i + 1 < text.size(); ++i) {
      if (!std::isdigit(static_cast<unsigned char>(text[i])))
        fail(errc::config, "bad control count in regime '" + text + "'");
      m = m * 10 + static_cast<std::size_t>(text[i] - '0');
    }
    if (m == 0) fail(errc::config, "control count must be at least 1 in '" + text + "'");
    if (m_out) *m_out = m;
    return Regime::clogit;
  }
  fail(errc::config, "unknown regime '" + text +
                         "' (expected poisson, cox, clogit(m), ccgam, or ccgam-shifted)");
}

struct PipelineConfig {
  Regime regime = Regime::cox;
  std::size_t controls = 20;  // clogit only
  std::uint64_t seed = 1;     // control sampling and shift draws
  ShiftConfig shift;          // ccgam-shifted; scale 0 means T/10
  OptimizerConfig optimizer;
};

// A fit plus the design it was computed on; the design is what the
// goodness-of-fit process walks over.
struct PipelineModel {
  FitResult fit;
  std::optional<FullDesign> full;
  std::optional<SampledDesign> sampled;
  std::optional<CCDesign> cc;
  SamplingWarnings warnings;
};

namespace detail {

inline void build_model_data(const History& history, const RiskSetTimeline& rst,
                             const std::vector<StatisticSpec>& specs, const Formula& formula,
                             const PipelineConfig& cfg, PipelineModel& out) {
  const EventSequence& seq = history.sequence();
  switch (cfg.regime) {
    case Regime::poisson:
    case Regime::cox:
      out.full = build_full_design(history, rst, specs, formula);
      break;
    case Regime::clogit: {
      const auto sets = sample_controls(rst, cfg.controls, Rng(cfg.seed), &out.warnings);
      out.sampled = build_sampled_design(history, specs, formula, sets);
      break;
    }
    case Regime::ccgam: {
      const auto rows =
          build_case_control(history, rst, specs, 1, Rng(cfg.seed), {}, &out.warnings);
      out.cc = build_cc_design(history, specs, formula, rows);
      break;
    }
    case Regime::ccgam_shifted: {
      ShiftConfig shift = cfg.shift;
      if (!shift.zero && !(shift.scale > 0.0)) shift.scale = seq.t_end / 10.0;
      Rng root(cfg.seed);
      const ShiftTable shifts = draw_shifts(rst, shift, root.derive(1));
      const auto rows =
          build_case_control(history, rst, specs, 1, root.derive(2), shifts, &out.warnings);
      out.cc = build_cc_design(history, specs, formula, rows);
      break;
    }
  }
}

inline std::unique_ptr<Likelihood> make_likelihood(const PipelineModel& model, Regime regime,
                                                   std::size_t n_events) {
  switch (regime) {
    case Regime::poisson: return std::make_unique<PoissonLikelihood>(*model.full);
    case Regime::cox: return std::make_unique<PartialLikelihood>(*model.full);
    case Regime::clogit: return std::make_unique<SampledLikelihood>(*model.sampled, n_events);
    case Regime::ccgam:
    case Regime::ccgam_shifted:
      return std::make_unique<CaseControlLikelihood>(*model.cc, n_events);
  }
  fail(errc::config, "unreachable regime");
}

}  // namespace detail

inline PipelineModel fit_model(const History& history, const RiskSetTimeline& rst,
                               const std::vector<StatisticSpec>& specs, const Formula& formula,
                               const PipelineConfig& cfg) {
  PipelineModel out;
  detail::build_model_data(history, rst, specs, formula, cfg, out);
  const auto lik = detail::make_likelihood(out, cfg.regime, history.sequence().n());
  out.fit = fit(*lik, cfg.optimizer);
  return out;
}

// Same model data and penalty structure, but the coefficients come from a
// saved fit rather than from optimization.
inline PipelineModel restore_model(const History& history, const RiskSetTimeline& rst,
                                   const std::vector<StatisticSpec>& specs, const Formula& formula,
                                   const PipelineConfig& cfg, const Eigen::VectorXd& theta,
                                   const std::vector<double>& nu) {
  PipelineModel out;
  detail::build_model_data(history, rst, specs, formula, cfg, out);
  const auto lik = detail::make_likelihood(out, cfg.regime, history.sequence().n());
  out.fit = reconstruct_fit(*lik, theta, nu);
  return out;
}

inline bool has_penalized_terms(const PipelineModel& model) {
  return !model.fit.penalties.empty();
}

// One test per formula term: exact Kolmogorov for unpenalized single
// columns, simulated-bridge supremum test for penalized blocks.
inline std::vector<GofResult> run_gof(const PipelineModel& model, std::size_t bridge_reps,
                                      const Rng& rng) {
  const GofProcess process = model.full    ? gof_process(model.fit, *model.full)
                             : model.sampled ? gof_process(model.fit, *model.sampled)
                                             : gof_process(model.fit, *model.cc);
  std::vector<GofResult> out;
  std::size_t penalized_index = 0;
  for (const auto& block : model.fit.blocks) {
    if (block.name == "(baseline)") continue;  // poisson intercepts
    if (block.penalty < 0) {
      out.push_back(gof_test_linear(model.fit, process, block.name));
    } else {
      Rng stream = rng.derive(penalized_index++);
      out.push_back(gof_test_smooth(model.fit, process, block.name, bridge_reps, stream));
    }
  }
  return out;
}

}  // namespace remkit
