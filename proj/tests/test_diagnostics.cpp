#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "remkit/design.hpp"
#include "remkit/diagnostics.hpp"
#include "remkit/events.hpp"
#include "remkit/exogenous.hpp"
#include "remkit/fit.hpp"
#include "remkit/formula.hpp"
#include "remkit/likelihood.hpp"
#include "remkit/risk.hpp"
#include "remkit/rng.hpp"
#include "remkit/sampling.hpp"
#include "remkit/stats.hpp"

using namespace remkit;

namespace {

EventSequence ingest(const std::string& text, IngestOptions opt = {}) {
  std::istringstream in(text);
  return parse_event_stream(in, opt);
}

EventSequence random_sequence(unsigned V, unsigned n, std::uint64_t seed) {
  Rng rng(seed);
  std::ostringstream csv;
  csv << "time,sender,receiver\n";
  for (unsigned i = 0; i < n; ++i) {
    const auto s = static_cast<unsigned>(rng.below(V));
    auto r = static_cast<unsigned>(rng.below(V - 1));
    if (r >= s) ++r;
    csv << (i + 1) << ",n" << s << ",n" << r << "\n";
  }
  auto seq = ingest(csv.str());
  REQUIRE(seq.n_senders() == V);
  return seq;
}

// Direct alternating series with extended precision, for cross-checking the
// production evaluation away from its small-t branch.
long double kolmogorov_reference(long double t) {
  long double q = 0.0L;
  long double sign = 1.0L;
  for (int k = 1; k <= 200; ++k) {
    const long double term = std::exp(-2.0L * k * k * t * t);
    q += sign * term;
    sign = -sign;
    if (term < 1e-25L) break;
  }
  return 2.0L * q;
}

struct Fitted {
  EventSequence seq;
  History history;
  RiskSetTimeline rst;
  std::vector<StatisticSpec> specs;
  Formula formula;
  FullDesign design;
  FitResult fit;

  Fitted(EventSequence s, std::vector<StatisticSpec> sp, const std::string& f,
         OptimizerConfig cfg = {})
      : seq(std::move(s)),
        history(seq),
        rst(seq, RiskPolicy{}),
        specs(std::move(sp)),
        formula(parse_formula(f, [this] {
          std::vector<std::string> names;
          for (const auto& spec : specs) names.push_back(spec.name);
          return names;
        }())),
        design(build_full_design(history, rst, specs, formula)) {
    const PartialLikelihood lik(design);
    fit = remkit::fit(lik, cfg);
    REQUIRE(fit.converged);
  }
};

Fitted linear_fit() {
  return Fitted(random_sequence(6, 60, 314159),
                {{.name = "rec", .mechanism = Mechanism::reciprocity, .block = Block::volume},
                 {.name = "rep", .mechanism = Mechanism::repetition, .block = Block::volume}},
                "rec + rep");
}

Fitted smooth_fit() {
  OptimizerConfig cfg;
  cfg.fix_nu = {1.0};
  return Fitted(random_sequence(6, 60, 314159),
                {{.name = "rec", .mechanism = Mechanism::reciprocity, .block = Block::volume},
                 {.name = "act", .mechanism = Mechanism::sender_activity,
                  .block = Block::volume}},
                "rec + s(act, k=5)", cfg);
}

}  // namespace

TEST_CASE("kolmogorov survival function") {
  // Frozen value at the classical 5% neighborhood.
  CHECK(kolmogorov_survival(1.36) == Catch::Approx(0.049485876755377876).margin(1e-12));
  CHECK(kolmogorov_survival(1.358) == Catch::Approx(0.05).margin(1.5e-3));

  for (const double t : {0.5, 0.8, 1.0, 1.36, 2.0, 2.5}) {
    const double want = static_cast<double>(kolmogorov_reference(static_cast<long double>(t)));
    CHECK(kolmogorov_survival(t) == Catch::Approx(want).margin(1e-12));
  }

  // The two evaluation branches meet smoothly.
  CHECK(std::abs(kolmogorov_survival(0.3 - 1e-9) - kolmogorov_survival(0.3 + 1e-9)) < 1e-8);

  // Limits and monotonicity.
  CHECK(kolmogorov_survival(0.0) == 1.0);
  CHECK(kolmogorov_survival(-1.0) == 1.0);
  CHECK(kolmogorov_survival(1e-6) == Catch::Approx(1.0).margin(1e-12));
  CHECK(kolmogorov_survival(5.0) < 1e-10);
  double prev = 1.0;
  for (double t = 0.05; t <= 3.0; t += 0.05) {
    const double cur = kolmogorov_survival(t);
    CHECK(cur <= prev + 1e-15);
    prev = cur;
  }
}

TEST_CASE("aic accessor") {
  auto f = linear_fit();
  CHECK(aic(f.fit) == Catch::Approx(f.fit.aic).margin(1e-12));

  const auto seq = ingest(
      "time,sender,receiver\n"
      "1,a,b\n2,a,b\n3,a,b\n4,a,b\n5,a,b\n6,a,b\n7,a,b\n8,a,b\n");
  const History history(seq);
  RiskSetTimeline rst(seq, RiskPolicy{});
  std::vector<StatisticSpec> specs{
      {.name = "rep", .mechanism = Mechanism::repetition, .block = Block::volume}};
  const auto design = build_full_design(history, rst, specs, parse_formula("rep", {"rep"}));
  const PartialLikelihood lik(design);
  const FitResult diverged = fit(lik);
  REQUIRE_FALSE(diverged.converged);
  CHECK_THROWS_WITH(aic(diverged), "AIC requires a converged fit");
}

TEST_CASE("full-design residual process") {
  auto f = linear_fit();
  const auto process = gof_process(f.fit, f.design);
  const auto n = static_cast<Eigen::Index>(f.seq.n());
  REQUIRE(process.increments.rows() == n);
  REQUIRE(process.increments.cols() == 2);

  // Increments recomputed from raw statistics and a plain softmax.
  const auto V = static_cast<node_id>(f.seq.n_senders());
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& ev = f.seq.events[static_cast<std::size_t>(i)];
    std::vector<Eigen::Vector2d> rows;
    Eigen::Index chosen = -1;
    for (node_id s = 0; s < V; ++s)
      for (node_id r = 0; r < V; ++r) {
        if (s == r) continue;
        Eigen::Vector2d x(volume_stat(f.seq, r, s, ev.time), volume_stat(f.seq, s, r, ev.time));
        if (s == ev.sender && r == ev.receiver) chosen = static_cast<Eigen::Index>(rows.size());
        rows.push_back(x);
      }
    double denom = 0.0;
    Eigen::Vector2d mean = Eigen::Vector2d::Zero();
    for (const auto& x : rows) denom += std::exp(f.fit.theta.dot(x));
    for (const auto& x : rows) mean += std::exp(f.fit.theta.dot(x)) / denom * x;
    const Eigen::Vector2d want = rows[static_cast<std::size_t>(chosen)] - mean;
    CHECK((process.increments.row(i).transpose() - want).cwiseAbs().maxCoeff() < 1e-10);
  }

  // Path rows are running sums; the endpoint is the score at the optimum.
  Eigen::RowVector2d acc = Eigen::RowVector2d::Zero();
  for (Eigen::Index i = 0; i < n; ++i) {
    acc += process.increments.row(i);
    CHECK((process.path.row(i) - acc).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(process.grid[static_cast<std::size_t>(i)] ==
          Catch::Approx(static_cast<double>(i + 1) / static_cast<double>(n)).margin(1e-15));
  }
  CHECK(process.path.row(n - 1).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("penalized residual process is centered at the penalized optimum") {
  auto f = smooth_fit();
  const auto process = gof_process(f.fit, f.design);
  const auto n = process.path.rows();
  CHECK(process.path.row(n - 1).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("sampled and case-control residual processes") {
  const auto seq = random_sequence(6, 60, 271828);
  const History history(seq);
  RiskSetTimeline rst(seq, RiskPolicy{});
  std::vector<StatisticSpec> specs{
      {.name = "rec", .mechanism = Mechanism::reciprocity, .block = Block::volume},
      {.name = "rep", .mechanism = Mechanism::repetition, .block = Block::volume}};
  const auto formula = parse_formula("rec + rep", {"rec", "rep"});

  const auto sets = sample_controls(rst, 5, Rng(7));
  const auto sdesign = build_sampled_design(history, specs, formula, sets);
  const SampledLikelihood slik(sdesign, seq.n());
  const FitResult sfit = fit(slik);
  REQUIRE(sfit.converged);
  const auto sprocess = gof_process(sfit, sdesign);
  REQUIRE(sprocess.increments.rows() == static_cast<Eigen::Index>(seq.n()));
  for (Eigen::Index i = 0; i < 5; ++i) {
    const Eigen::MatrixXd& x = sdesign.alt[static_cast<std::size_t>(i)];
    const Eigen::VectorXd eta = x * sfit.theta;
    const Eigen::VectorXd w = eta.array().exp();
    const Eigen::RowVectorXd mean = (w / w.sum()).transpose() * x;
    CHECK((sprocess.increments.row(i) - (x.row(0) - mean)).cwiseAbs().maxCoeff() < 1e-12);
  }
  CHECK(sprocess.path.bottomRows(1).cwiseAbs().maxCoeff() < 1e-6);

  const auto rows = build_case_control(history, rst, specs, 2, Rng(8));
  const auto cdesign = build_cc_design(history, specs, formula, rows);
  const CaseControlLikelihood clik(cdesign, seq.n());
  const FitResult cfit = fit(clik);
  REQUIRE(cfit.converged);
  const auto cprocess = gof_process(cfit, cdesign);
  REQUIRE(cprocess.increments.rows() == cdesign.deltas.rows());
  for (Eigen::Index i = 0; i < 5; ++i) {
    const double z = cdesign.deltas.row(i).dot(cfit.theta);
    const Eigen::RowVectorXd want = cdesign.deltas.row(i) / (1.0 + std::exp(z));
    CHECK((cprocess.increments.row(i) - want).cwiseAbs().maxCoeff() < 1e-12);
  }
  CHECK(cprocess.path.bottomRows(1).cwiseAbs().maxCoeff() < 1e-6);

  // Regime and design must agree.
  auto f = linear_fit();
  CHECK_THROWS_WITH(gof_process(cfit, f.design),
                    "fit regime 'ccgam' does not match a full design");
  CHECK_THROWS_WITH(gof_process(f.fit, sdesign),
                    "fit regime 'cox' does not match a sampled design");
  CHECK_THROWS_WITH(gof_process(sfit, cdesign),
                    "fit regime 'clogit' does not match a case-control design");
}

TEST_CASE("brownian bridge simulation") {
  Rng rng(404);
  const auto bridge = simulate_bridge(2, 50, rng);
  REQUIRE(bridge.path.rows() == 50);
  REQUIRE(bridge.path.cols() == 2);
  CHECK(bridge.path.row(49).cwiseAbs().maxCoeff() == 0.0);  // pinned endpoint
  double sup_abs = 0.0, sup_norm2 = 0.0;
  for (Eigen::Index i = 0; i < 50; ++i) {
    sup_abs = std::max(sup_abs, bridge.path.row(i).cwiseAbs().maxCoeff());
    sup_norm2 = std::max(sup_norm2, bridge.path.row(i).squaredNorm());
  }
  CHECK(bridge.sup_abs == sup_abs);
  CHECK(bridge.sup_norm2 == sup_norm2);

  Rng again(404);
  const auto replay = simulate_bridge(2, 50, again);
  CHECK((replay.path - bridge.path).cwiseAbs().maxCoeff() == 0.0);

  CHECK_THROWS_WITH(simulate_bridge(0, 50, rng), "bridge needs q >= 1 and n >= 1");
  CHECK_THROWS_WITH(simulate_bridge(1, 0, rng), "bridge needs q >= 1 and n >= 1");

  // Midpoint variance of a standard bridge is u(1-u) = 1/4.
  Rng mid(405);
  double sum2 = 0.0;
  const int reps = 40000;
  for (int r = 0; r < reps; ++r) {
    const auto path = simulate_bridge(1, 2, mid);
    sum2 += path.path(0, 0) * path.path(0, 0);
  }
  CHECK(sum2 / reps == Catch::Approx(0.25).margin(0.01));

  // One-dimensional sup exceeds the 5% Kolmogorov critical value about 5% of
  // the time; the discrete grid bites a little from below.
  Rng tail(406);
  int exceed = 0;
  const int draws = 20000;
  for (int r = 0; r < draws; ++r)
    if (simulate_bridge(1, 200, tail).sup_abs > 1.358) ++exceed;
  const double rate = static_cast<double>(exceed) / draws;
  CHECK(rate > 0.030);
  CHECK(rate < 0.065);

  // More components, larger sup norm.
  Rng lo(407), hi(407);
  double mean1 = 0.0, mean3 = 0.0;
  for (int r = 0; r < 2000; ++r) {
    mean1 += simulate_bridge(1, 100, lo).sup_norm2;
    mean3 += simulate_bridge(3, 100, hi).sup_norm2;
  }
  CHECK(mean3 > mean1);
}

TEST_CASE("kolmogorov test for a linear term") {
  auto f = linear_fit();
  const auto process = gof_process(f.fit, f.design);
  const auto res = gof_test_linear(f.fit, process, "rec");
  CHECK(res.term == "rec");
  CHECK(res.method == "kolmogorov-exact");
  CHECK(res.grid == process.grid);

  // Recompute: path column over the observed information.
  const Eigen::Index j = 0;  // rec is the first column
  const double info = f.fit.hessian(j, j);
  const double stat = (process.path.col(j) / std::sqrt(info)).cwiseAbs().maxCoeff();
  CHECK(res.statistic == Catch::Approx(stat).margin(1e-12));
  CHECK(res.p_value == Catch::Approx(kolmogorov_survival(stat)).margin(1e-12));
  CHECK(res.p_value >= 0.0);
  CHECK(res.p_value <= 1.0);

  CHECK_THROWS_WITH(gof_test_linear(f.fit, process, "zzz"), "no term named 'zzz' in the fit");

  auto s = smooth_fit();
  const auto sprocess = gof_process(s.fit, s.design);
  CHECK_THROWS_WITH(gof_test_linear(s.fit, sprocess, "s(act)"),
                    "term 's(act)' is not an unpenalized single column");
}

TEST_CASE("linear gof statistic is scale invariant") {
  // Doubling a covariate halves its coefficient but leaves the rescaled
  // process, and hence the test, untouched.
  const auto seq = random_sequence(5, 50, 161803);
  auto run = [&](double scale) {
    History history(seq);
    ExogenousTable tab;
    tab.kind = ExogKind::node;
    tab.name = "score";
    for (unsigned v = 0; v < 5; ++v)
      tab.add("n" + std::to_string(v), 0.0, scale * static_cast<double>(v * v));
    history.attach(std::move(tab));
    RiskSetTimeline rst(seq, RiskPolicy{});
    std::vector<StatisticSpec> specs{
        {.name = "score", .mechanism = Mechanism::exogenous_node, .table = "score"},
        {.name = "rec", .mechanism = Mechanism::reciprocity, .block = Block::volume}};
    const auto design = build_full_design(history, rst, specs,
                                          parse_formula("score + rec", {"score", "rec"}));
    const PartialLikelihood lik(design);
    const FitResult res = fit(lik);
    REQUIRE(res.converged);
    const auto process = gof_process(res, design);
    return gof_test_linear(res, process, "score").statistic;
  };
  const double base = run(1.0);
  const double scaled = run(10.0);
  CHECK(base == Catch::Approx(scaled).margin(1e-6));
}

TEST_CASE("bridge test for a penalized block") {
  auto f = smooth_fit();
  const auto process = gof_process(f.fit, f.design);

  Rng rng(505);
  CHECK_THROWS_WITH(gof_test_smooth(f.fit, process, "s(act)", 0, rng),
                    "bridge replication count required");
  CHECK_THROWS_WITH(gof_test_smooth(f.fit, process, "s(act)", 500, rng),
                    "need at least 1000 bridge replications for a stable p-value");
  CHECK_THROWS_WITH(gof_test_smooth(f.fit, process, "rec", 1000, rng),
                    "term 'rec' is not a penalized block");

  const auto res = gof_test_smooth(f.fit, process, "s(act)", 2000, rng);
  CHECK(res.term == "s(act)");
  CHECK(res.method == "bridge-simulation(2000)");
  CHECK(res.bridge_reps == 2000);
  CHECK(res.p_value >= 0.0);
  CHECK(res.p_value <= 1.0);
  CHECK(res.j_rank >= 1);
  CHECK(res.j_rank <= 4);
  CHECK(res.j_hat.rows() == 4);
  CHECK(res.w_path.rows() == process.path.rows());
  CHECK(res.statistic ==
        Catch::Approx(res.w_path.rowwise().squaredNorm().maxCoeff()).margin(1e-12));

  // The replication stream is derived from the caller's generator state, so
  // an identical generator replays the same p-value.
  Rng replay(505);
  const auto res2 = gof_test_smooth(f.fit, process, "s(act)", 2000, replay);
  CHECK(res2.p_value == res.p_value);
  CHECK(res2.statistic == res.statistic);
}
