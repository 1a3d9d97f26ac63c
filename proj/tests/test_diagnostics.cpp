#include <doctest.h>

#include <cmath>

#include "stocpen/diagnostics.hpp"
#include "stocpen/solver.hpp"
#include "stocpen/test_problems.hpp"

using namespace stocpen;
using Eigen::MatrixXd;
using Eigen::VectorXd;

TEST_CASE("exact stationarity residual at simple configurations") {
  {
    // feasible stationary point: everything vanishes
    const ProblemInstance p = make_linear_problem(MatrixXd::Identity(2, 2), VectorXd::Zero(2),
                                                  VectorXd::Zero(2), 1.0, 0.0, 10.0);
    ScheduleValues v;
    v.k = 1;
    v.rho = 1.0;
    v.eta = 0.1;
    v.alpha = 1.0;
    const StationarityReport r = stationarity_report(p, 1, VectorXd::Zero(2), VectorXd::Zero(2),
                                                     VectorXd::Zero(2), v, 1.0);
    CHECK(r.exact_residual == doctest::Approx(0.0));
    CHECK(r.feasibility == doctest::Approx(0.0));
  }
  {
    // 1-D: grad f = 2, rho grad c c = 3 -> residual 5
    const ProblemInstance p = make_linear_problem(MatrixXd::Identity(1, 1),
                                                  VectorXd::Constant(1, -3.0),
                                                  VectorXd::Constant(1, -2.0), 1.0, 0.0, 10.0);
    // at x = 0: grad f = x - (-2) = 2; c = x + 3 = 3; grad c c = 3
    ScheduleValues v;
    v.k = 1;
    v.rho = 1.0;
    v.eta = 0.1;
    v.alpha = 1.0;
    const StationarityReport r = stationarity_report(p, 1, VectorXd::Zero(1), VectorXd::Zero(1),
                                                     p.mean_gradient(VectorXd::Zero(1)), v, 1.0);
    CHECK(r.exact_residual == doctest::Approx(5.0).epsilon(1e-14));
  }
}

TEST_CASE("surrogate dominates the exact residual along a run") {
  TestProblemDescriptor d;
  d.family = "linear-eq";
  d.n = 6;
  d.m = 2;
  d.condition_number = 3.0;
  d.noise_sigma = 0.5;
  d.seed = 15;
  const ProblemInstance p = make_test_problem(d);
  RunConfig cfg;
  cfg.algorithm = Algorithm::recursive_momentum;
  cfg.schedule = ScheduleFamily::alg1_general(1.0);
  cfg.iterations = 1200;
  cfg.seed = 31;
  const RunRecord rec = run(p, cfg);
  CHECK(rec.rows.size() >= 1000);
  CHECK(rec.tallies.surrogate_violations == 0);
  long long checked = 0;
  for (const TraceRow& row : rec.rows) {
    if (std::isnan(row.resid_exact)) continue;
    CHECK(row.resid_exact * row.resid_exact <= row.resid_surrogate);
    ++checked;
  }
  CHECK(checked >= 1000);
}

TEST_CASE("stationarity_report agrees with the trace rows") {
  const ProblemInstance p = make_linear_problem(MatrixXd::Identity(2, 2), VectorXd::Ones(2),
                                                VectorXd::Zero(2), 1.0, 0.3, 10.0);
  const SolverProblemView view(p);
  SampleContext ctx(21, StreamRole::estimator_samples);
  SolverState state = init_solver(Algorithm::polyak_momentum, view,
                                  p.feasible_set().project(VectorXd::Zero(2)), ctx);
  const ScheduleFamily fam = ScheduleFamily::alg2_general();
  for (long long k = 1; k <= 25; ++k) {
    const ScheduleValues v = schedule_at(fam, k);
    const VectorXd g_before = state.estimator.g;
    const StepReport rep = solver_step(state, view, v, ctx);
    const StationarityReport r = stationarity_report(p, k, rep.x_before, rep.x_after, g_before, v,
                                                     p.constants().smoothness_f);
    CHECK(r.exact_residual * r.exact_residual <= r.surrogate_bound);
    CHECK(r.feasibility == doctest::Approx(std::sqrt(2.0 * rep.h_after)).epsilon(1e-12));
  }
}

TEST_CASE("lemma monitor verdicts") {
  SmoothnessConstants c;
  c.lipschitz_f = 1.0;
  c.lipschitz_c = 1.0;
  c.constraint_bound = 1.0;
  c.smoothness_c = 0.0;
  c.avg_smoothness_f = 1.0;
  c.smoothness_f = 1.0;
  c.noise_sigma = 0.0;
  c.error_bound_gamma = 1.0;
  c.error_bound_theta = 1.0;

  ScheduleValues v;
  v.k = 5;
  v.rho = 2.0;
  v.eta = 0.05;  // rho eta = 0.1 <= 0.618
  v.alpha = 0.5;

  // feasible trajectory: 0 <= L_f^2 eta / (2 rho)
  CHECK(lemma_monitor_descent(0.0, 0.0, v, c) == LemmaVerdict::holds);
  // big increase in h: violated
  CHECK(lemma_monitor_descent(0.0, 1.0, v, c) == LemmaVerdict::violated);
  // gate: rho eta above the threshold
  ScheduleValues wide = v;
  wide.eta = 1.0;
  CHECK(lemma_monitor_descent(0.0, 1.0, wide, c) == LemmaVerdict::not_applicable);
}

TEST_CASE("variance replicate check") {
  TestProblemDescriptor d;
  d.family = "linear-eq";
  d.n = 6;
  d.m = 2;
  d.condition_number = 2.0;
  d.noise_sigma = 0.8;
  d.seed = 33;
  const ProblemInstance p = make_test_problem(d);
  SampleContext member_ctx(1, StreamRole::member_sampling);
  SampleContext ctx(2, StreamRole::replicate_experiments);

  SUBCASE("degenerate noiseless case holds exactly") {
    TestProblemDescriptor nd = d;
    nd.noise_sigma = 0.0;
    const ProblemInstance np = make_test_problem(nd);
    const VectorXd x = np.feasible_set().sample_member(member_ctx, 1.0);
    const VarianceCheckResult r =
        variance_replicate_check(np, EstimatorKind::recursive, x, x, 0.0, 0.5, 2000, ctx);
    CHECK(r.holds);
    CHECK(r.lhs_mean == doctest::Approx(0.0));
    CHECK(r.rhs_bound == doctest::Approx(0.0));
  }

  SUBCASE("alpha = 1 full replacement case") {
    const VectorXd x = p.feasible_set().sample_member(member_ctx, 1.0);
    const VarianceCheckResult r =
        variance_replicate_check(p, EstimatorKind::recursive, x, x, 0.5, 1.0, 4000, ctx);
    CHECK(r.holds);
    CHECK(r.lhs_mean <= 3.0 * d.noise_sigma * d.noise_sigma + 3.0 * r.stderr_diff);
  }

  SUBCASE("documented-parameter configurations hold over 20 repetitions") {
    for (int rep = 0; rep < 20; ++rep) {
      const VectorXd x_from = p.feasible_set().sample_member(member_ctx, 1.5);
      const VectorXd x_to = x_from + 0.02 * member_ctx.normal_vector(6);
      for (EstimatorKind kind : {EstimatorKind::recursive, EstimatorKind::polyak}) {
        const VarianceCheckResult r =
            variance_replicate_check(p, kind, x_from, x_to, 0.3, 0.4, 2000, ctx);
        CHECK(r.holds);
      }
    }
  }

  SUBCASE("replicate floor is enforced") {
    const VectorXd x = p.feasible_set().sample_member(member_ctx, 1.0);
    CHECK_THROWS_AS(variance_replicate_check(p, EstimatorKind::polyak, x, x, 0.1, 0.5, 100, ctx),
                    std::invalid_argument);
  }
}

TEST_CASE("fit_loglog recovers planted exponents") {
  std::vector<double> ks, q1, q2;
  for (int k = 1; k <= 300; ++k) {
    ks.push_back(k);
    q1.push_back(1.0 / k);
    q2.push_back(5.0 * std::pow(static_cast<double>(k), -2.0 / 3.0));
  }
  const RateFit f1 = fit_loglog(ks, q1, 1, 300);
  CHECK(std::abs(f1.slope - (-1.0)) < 1e-9);
  CHECK(f1.r_squared == doctest::Approx(1.0));
  const RateFit f2 = fit_loglog(ks, q2, 1, 300);
  CHECK(std::abs(f2.slope - (-2.0 / 3.0)) < 1e-9);
  CHECK(std::abs(f2.intercept - std::log(5.0)) < 1e-9);
}

TEST_CASE("fit_rate windows, flags and errors") {
  RunRecord rec;
  for (int k = 1; k <= 200; ++k) {
    TraceRow row;
    row.k = k;
    row.c_norm = std::sqrt(3.0 * std::pow(static_cast<double>(k), -0.5));
    row.resid_exact = std::numeric_limits<double>::quiet_NaN();
    row.resid_surrogate = std::numeric_limits<double>::quiet_NaN();
    rec.rows.push_back(row);
  }
  const RateFit fit = fit_rate(rec, TraceQuantity::feasibility_sq, 1, 200);
  CHECK(std::abs(fit.slope - (-0.5)) < 1e-9);

  // nonpositive tail: positive-prefix fit, flagged
  RunRecord zero_tail = rec;
  for (std::size_t i = 100; i < zero_tail.rows.size(); ++i) zero_tail.rows[i].c_norm = 0.0;
  const RateFit f2 = fit_rate(zero_tail, TraceQuantity::feasibility_sq, 1, 200);
  CHECK(f2.truncated_at_nonpositive);
  CHECK(std::abs(f2.slope - (-0.5)) < 1e-9);

  // too few rows in window
  CHECK_THROWS_AS(fit_rate(rec, TraceQuantity::feasibility_sq, 1, 20), std::invalid_argument);
  // residual columns are all-NaN: no usable rows
  CHECK_THROWS_AS(fit_rate(rec, TraceQuantity::exact_residual_sq, 1, 200), std::invalid_argument);
}

TEST_CASE("falsifier on certified and mis-certified instances") {
  {
    TestProblemDescriptor d;
    d.family = "linear-eq";
    d.n = 2;
    d.m = 2;
    d.condition_number = 1.0;  // orthogonal A: ratio identically 1
    d.seed = 3;
    const ProblemInstance p = make_test_problem(d);
    SampleContext ctx(4, StreamRole::member_sampling);
    const FalsifierReport rep = error_bound_falsifier(p, 5000, ctx);
    CHECK_FALSE(rep.flagged);
    CHECK(rep.min_ratio == doctest::Approx(1.0).epsilon(1e-9));
  }
  {
    const ProblemInstance p = make_linear_problem(Eigen::Vector2d(2.0, 1.0).asDiagonal(),
                                                  VectorXd::Zero(2), VectorXd::Zero(2), 1.0, 0.0,
                                                  5.0);
    SampleContext ctx(5, StreamRole::member_sampling);
    const FalsifierReport rep = error_bound_falsifier(p, 20000, ctx);
    CHECK_FALSE(rep.flagged);
    CHECK(rep.min_ratio >= 1.0 - 1e-9);
    CHECK(rep.min_ratio < 1.15);  // the sigma_min direction is approached
  }
  {
    TestProblemDescriptor d;
    d.family = "power";
    d.n = 3;
    d.p = 2;
    d.seed = 6;
    const ProblemInstance p = make_test_problem(d);
    SampleContext ctx(7, StreamRole::member_sampling);
    const FalsifierReport rep = error_bound_falsifier(p, 5000, ctx);
    CHECK_FALSE(rep.flagged);
    // ratio is identically p on the power family
    CHECK(rep.min_ratio == doctest::Approx(2.0).epsilon(1e-9));
  }
}
