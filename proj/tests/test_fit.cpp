#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "remkit/design.hpp"
#include "remkit/events.hpp"
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

// Random dyads so repetition and reciprocity vary without separating.
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
  REQUIRE(seq.n_senders() == V);  // every actor appeared, universe is V(V-1)
  return seq;
}

void check_monotone_ascent(const std::vector<double>& ascent) {
  REQUIRE(ascent.size() >= 2);
  for (std::size_t i = 1; i < ascent.size(); ++i) {
    // Accepted steps may dip by summation noise near the optimum, never more.
    CHECK(ascent[i] >= ascent[i - 1] - 1e-9 * (1.0 + std::abs(ascent[i - 1])));
  }
}

struct Built {
  EventSequence seq;
  History history;
  RiskSetTimeline rst;
  std::vector<StatisticSpec> specs;

  Built(EventSequence s, std::vector<StatisticSpec> sp)
      : seq(std::move(s)), history(seq), rst(seq, RiskPolicy{}), specs(std::move(sp)) {}
};

Built linear_problem() {
  return Built(random_sequence(6, 60, 314159),
               {{.name = "rec", .mechanism = Mechanism::reciprocity, .block = Block::volume},
                {.name = "rep", .mechanism = Mechanism::repetition, .block = Block::volume}});
}

}  // namespace

TEST_CASE("newton fit converges with monotone ascent") {
  auto b = linear_problem();
  const auto design = build_full_design(b.history, b.rst, b.specs,
                                        parse_formula("rec + rep", {"rec", "rep"}));
  const PartialLikelihood lik(design);
  const FitResult res = fit(lik);
  CHECK(res.converged);
  CHECK_FALSE(res.separation);
  CHECK(res.regime == "cox");
  CHECK(res.score_norm < 1e-8);
  CHECK(res.iterations > 0);
  CHECK(res.theta.allFinite());
  CHECK(res.se.allFinite());
  CHECK((res.se.array() > 0.0).all());
  CHECK(res.colnames == lik.colnames());
  check_monotone_ascent(res.ascent);
  CHECK(res.ascent.back() == Catch::Approx(res.penalized_loglik).margin(1e-12));
  // Unpenalized: every column spends one degree of freedom.
  CHECK(res.edf_total == Catch::Approx(2.0));
  CHECK(res.aic == Catch::Approx(-2.0 * res.loglik + 2.0 * res.edf_total).margin(1e-10));
  // Unpenalized covariance is the inverse observed information.
  const Eigen::MatrixXd hinv =
      res.hessian.ldlt().solve(Eigen::MatrixXd::Identity(lik.dim(), lik.dim()));
  CHECK((res.covariance - hinv).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("exhaustively sampled fit reproduces the full fit") {
  auto b = linear_problem();
  const auto formula = parse_formula("rec + rep", {"rec", "rep"});
  const auto design = build_full_design(b.history, b.rst, b.specs, formula);
  const PartialLikelihood full(design);
  const FitResult want = fit(full);

  const auto sets = sample_controls(b.rst, 29, Rng(4));  // 30-dyad universe
  const auto sdesign = build_sampled_design(b.history, b.specs, formula, sets);
  const SampledLikelihood sampled(sdesign, b.seq.n());
  const FitResult got = fit(sampled);
  CHECK(got.regime == "clogit");
  CHECK(got.converged);
  CHECK(std::abs(got.loglik - want.loglik) < 1e-8);
  CHECK((got.theta - want.theta).cwiseAbs().maxCoeff() < 1e-6);
  CHECK((got.se - want.se).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("adam agrees with newton") {
  auto b = linear_problem();
  const auto design = build_full_design(b.history, b.rst, b.specs,
                                        parse_formula("rec + rep", {"rec", "rep"}));
  const PartialLikelihood lik(design);
  const FitResult newton = fit(lik);
  OptimizerConfig cfg;
  cfg.method = OptimizerConfig::Method::adam;
  cfg.adam_alpha = 0.02;
  const FitResult adam = fit(lik, cfg);
  CHECK((adam.theta - newton.theta).cwiseAbs().maxCoeff() < 1e-3);
  CHECK(adam.loglik == Catch::Approx(newton.loglik).margin(1e-6));
}

TEST_CASE("cross-validated smoothing is deterministic") {
  auto b = Built(random_sequence(6, 60, 314159),
                 {{.name = "rec", .mechanism = Mechanism::reciprocity, .block = Block::volume},
                  {.name = "act", .mechanism = Mechanism::sender_activity,
                   .block = Block::volume}});
  const auto design = build_full_design(b.history, b.rst, b.specs,
                                        parse_formula("rec + s(act, k=5)", {"rec", "act"}));
  const PartialLikelihood lik(design);
  const FitResult one = fit(lik);
  const FitResult two = fit(lik);
  REQUIRE(one.nu.size() == 1);
  CHECK(one.nu[0] > 0.0);
  CHECK(one.nu[0] == two.nu[0]);
  CHECK((one.theta - two.theta).cwiseAbs().maxCoeff() == 0.0);
  CHECK(one.converged);
  // Linear block spends exactly its column; the spline spends less than its
  // size once penalized.
  CHECK(one.edf_block[0] == Catch::Approx(1.0));
  CHECK(one.edf_block[1] > 0.0);
  CHECK(one.edf_block[1] <= 4.0 + 1e-9);
  CHECK(one.aic == Catch::Approx(-2.0 * one.loglik + 2.0 * one.edf_total).margin(1e-10));
  check_monotone_ascent(one.ascent);
}

TEST_CASE("smoothing parameter controls effective degrees of freedom") {
  auto b = Built(random_sequence(6, 60, 314159),
                 {{.name = "rec", .mechanism = Mechanism::reciprocity, .block = Block::volume},
                  {.name = "act", .mechanism = Mechanism::sender_activity,
                   .block = Block::volume}});
  const auto design = build_full_design(b.history, b.rst, b.specs,
                                        parse_formula("rec + s(act, k=5)", {"rec", "act"}));
  const PartialLikelihood lik(design);

  OptimizerConfig heavy;
  heavy.fix_nu = {1e8};
  const FitResult shrunk = fit(lik, heavy);
  // The second-difference penalty leaves one unpenalized direction after
  // centering, so a huge nu pins the spline to a line: about one df.
  CHECK(shrunk.edf_block[1] == Catch::Approx(1.0).margin(0.2));

  OptimizerConfig light;
  light.fix_nu = {1e-10};
  const FitResult loose = fit(lik, light);
  CHECK(loose.edf_block[1] == Catch::Approx(4.0).margin(0.05));
  CHECK(loose.edf_block[1] > shrunk.edf_block[1]);

  // Nearly unpenalized: the sandwich collapses to the plain inverse.
  const Eigen::MatrixXd hinv =
      loose.hessian.ldlt().solve(Eigen::MatrixXd::Identity(lik.dim(), lik.dim()));
  CHECK((loose.covariance - hinv).cwiseAbs().maxCoeff() < 1e-6);

  // A random-effect block carries a full-rank identity penalty, so a huge nu
  // removes it entirely.
  auto c = Built(random_sequence(6, 60, 314159),
                 {{.name = "rec", .mechanism = Mechanism::reciprocity, .block = Block::volume}});
  const auto rdesign = build_full_design(c.history, c.rst, c.specs,
                                         parse_formula("rec + re(sender)", {"rec"}));
  const PartialLikelihood rlik(rdesign);
  OptimizerConfig pin;
  pin.fix_nu = {1e8};
  const FitResult frozen = fit(rlik, pin);
  CHECK(frozen.edf_block[1] < 0.01);
  CHECK(frozen.theta.tail(6).cwiseAbs().maxCoeff() < 1e-4);
}

TEST_CASE("fixed smoothing parameters are validated") {
  auto b = Built(random_sequence(6, 60, 314159),
                 {{.name = "rec", .mechanism = Mechanism::reciprocity, .block = Block::volume},
                  {.name = "act", .mechanism = Mechanism::sender_activity,
                   .block = Block::volume}});
  const auto design = build_full_design(b.history, b.rst, b.specs,
                                        parse_formula("rec + s(act, k=5)", {"rec", "act"}));
  const PartialLikelihood lik(design);
  OptimizerConfig cfg;
  cfg.fix_nu = {1.0, 2.0};
  CHECK_THROWS_WITH(fit(lik, cfg), "expected 1 smoothing parameters, got 2");
  cfg.fix_nu = {-1.0};
  CHECK_THROWS_WITH(fit(lik, cfg), "smoothing parameters must be positive");
  cfg.fix_nu.clear();
  cfg.cv_folds = 1;
  CHECK_THROWS_WITH(fit(lik, cfg), "cross-validation needs at least 2 folds");
}

TEST_CASE("optimizer configuration is validated") {
  auto b = linear_problem();
  const auto design = build_full_design(b.history, b.rst, b.specs,
                                        parse_formula("rec", {"rec", "rep"}));
  const PartialLikelihood lik(design);
  OptimizerConfig cfg;
  cfg.adam_xi1 = 1.0;
  CHECK_THROWS_WITH(fit(lik, cfg), "ADAM decay rates must lie in [0, 1)");
  cfg = {};
  cfg.adam_xi2 = -0.1;
  CHECK_THROWS_WITH(fit(lik, cfg), "ADAM decay rates must lie in [0, 1)");
  cfg = {};
  cfg.adam_eps = 0.0;
  CHECK_THROWS_WITH(fit(lik, cfg), "ADAM epsilon must be positive");
  cfg = {};
  cfg.tol = 0.0;
  CHECK_THROWS_WITH(fit(lik, cfg), "tolerance must be positive");
}

TEST_CASE("monotone likelihood is flagged as separation") {
  // The same dyad fires every time, so its repetition count outruns every
  // alternative and the coefficient diverges.
  const auto seq = ingest(
      "time,sender,receiver\n"
      "1,a,b\n2,a,b\n3,a,b\n4,a,b\n5,a,b\n6,a,b\n7,a,b\n8,a,b\n");
  const History history(seq);
  RiskSetTimeline rst(seq, RiskPolicy{});
  std::vector<StatisticSpec> specs{
      {.name = "rep", .mechanism = Mechanism::repetition, .block = Block::volume}};
  const auto design = build_full_design(history, rst, specs, parse_formula("rep", {"rep"}));
  const PartialLikelihood lik(design);
  const FitResult res = fit(lik);
  CHECK(res.separation);
  CHECK_FALSE(res.converged);
  CHECK(res.theta.cwiseAbs().maxCoeff() > 15.0);
}

TEST_CASE("fit handles the poisson and case-control regimes") {
  auto b = linear_problem();
  const auto formula = parse_formula("rec + rep", {"rec", "rep"});
  const auto design = build_full_design(b.history, b.rst, b.specs, formula);
  const PoissonLikelihood poisson(design);
  const FitResult pres = fit(poisson);
  CHECK(pres.regime == "poisson");
  CHECK(pres.converged);
  CHECK(pres.colnames[0] == "(baseline)");
  CHECK(pres.theta.allFinite());
  CHECK(pres.se.allFinite());
  // Events arrive one per unit of time from a 30-dyad risk set, so the
  // fitted overall rate is close to 1/30 per dyad.
  CHECK(pres.theta(0) == Catch::Approx(std::log(1.0 / 30.0)).margin(0.5));

  const auto rows = build_case_control(b.history, b.rst, b.specs, 3, Rng(11));
  const auto cdesign = build_cc_design(b.history, b.specs, formula, rows);
  const CaseControlLikelihood cc(cdesign, b.seq.n());
  const FitResult cres = fit(cc);
  CHECK(cres.regime == "ccgam");
  CHECK(cres.converged);
  CHECK(cres.se.allFinite());
}

TEST_CASE("reconstructing a fit reproduces its derived quantities") {
  auto b = Built(random_sequence(6, 60, 314159),
                 {{.name = "rec", .mechanism = Mechanism::reciprocity, .block = Block::volume},
                  {.name = "act", .mechanism = Mechanism::sender_activity,
                   .block = Block::volume}});
  const auto design = build_full_design(b.history, b.rst, b.specs,
                                        parse_formula("rec + s(act, k=5)", {"rec", "act"}));
  const PartialLikelihood lik(design);
  OptimizerConfig cfg;
  cfg.fix_nu = {0.37};
  const FitResult res = fit(lik, cfg);
  REQUIRE(res.converged);

  const FitResult back = reconstruct_fit(lik, res.theta, res.nu);
  CHECK(back.converged);
  CHECK(back.theta == res.theta);
  CHECK(back.loglik == Catch::Approx(res.loglik).margin(1e-12));
  CHECK(back.penalized_loglik == Catch::Approx(res.penalized_loglik).margin(1e-12));
  CHECK(back.aic == Catch::Approx(res.aic).margin(1e-10));
  CHECK(back.edf_total == Catch::Approx(res.edf_total).margin(1e-10));
  CHECK((back.se - res.se).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(back.score_norm == Catch::Approx(res.score_norm).margin(1e-10));

  const Eigen::VectorXd wrong = Eigen::VectorXd::Zero(3);
  CHECK_THROWS_WITH(reconstruct_fit(lik, wrong, res.nu),
                    "coefficient vector length 3 does not match the design (5 columns)");
  CHECK_THROWS_WITH(reconstruct_fit(lik, res.theta, {}),
                    "expected 1 smoothing parameters, got 0");
  CHECK_THROWS_WITH(reconstruct_fit(lik, res.theta, {0.0}),
                    "smoothing parameters must be positive");
}

TEST_CASE("curvature bookkeeping is consistent") {
  auto b = Built(random_sequence(6, 60, 314159),
                 {{.name = "rec", .mechanism = Mechanism::reciprocity, .block = Block::volume},
                  {.name = "act", .mechanism = Mechanism::sender_activity,
                   .block = Block::volume}});
  const auto design = build_full_design(b.history, b.rst, b.specs,
                                        parse_formula("rec + s(act, k=5)", {"rec", "act"}));
  const PartialLikelihood lik(design);
  OptimizerConfig cfg;
  cfg.fix_nu = {2.5};
  const FitResult res = fit(lik, cfg);
  REQUIRE(res.converged);
  // curvature = H + nu * S on the penalized block, H elsewhere
  Eigen::MatrixXd want = res.hessian;
  const auto& pen = res.penalties[0];
  const auto& block = res.blocks[pen.block];
  want.block(static_cast<Eigen::Index>(block.begin), static_cast<Eigen::Index>(block.begin),
             static_cast<Eigen::Index>(block.size), static_cast<Eigen::Index>(block.size)) +=
      pen.nu * pen.matrix;
  CHECK((res.curvature - want).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(pen.nu == 2.5);
  // H is the negated model hessian at theta, positive semidefinite here.
  const Eigen::VectorXd eig = res.hessian.selfadjointView<Eigen::Lower>().eigenvalues();
  CHECK(eig.minCoeff() > -1e-8);
}
