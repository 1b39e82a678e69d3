#include "trafficshape/lp_dual.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "test_util.hpp"
#include "trafficshape/matching.hpp"
#include "trafficshape/rng.hpp"

using namespace trafficshape;
using trafficshape::testing::random_real_matrix;

namespace {

SessionInstance random_session(Rng& rng, int64_t id, int m, int T) {
  Matrix c = random_real_matrix(rng, m, 0.0, 1.0);
  std::vector<Matrix> a;
  for (int t = 0; t < T; ++t) a.push_back(random_real_matrix(rng, m, 0.0, 0.5));
  return SessionInstance::make(id, std::move(c), std::move(a));
}

std::vector<SessionInstance> random_stream(uint64_t seed, int n, int m, int T) {
  Rng rng(seed);
  std::vector<SessionInstance> out;
  for (int k = 0; k < n; ++k) out.push_back(random_session(rng, k, m, T));
  return out;
}

ConstraintSpec make_spec(std::vector<double> targets, int horizon) {
  ConstraintSpec spec;
  spec.targets = std::move(targets);
  spec.horizon = horizon;
  for (size_t t = 0; t < spec.targets.size(); ++t)
    spec.names.push_back("constraint_" + std::to_string(t));
  return spec;
}

// Independent T = 1 oracle: per session, precompute <C, P> and <A, P> for
// every permutation, then scan a dense lambda grid for the dual minimum.
// Never touches the matching code paths under test.
struct EnumeratedSession {
  std::vector<double> engagement_by_perm;
  std::vector<double> delivered_by_perm;
};

std::vector<EnumeratedSession> enumerate_sessions(std::span<const SessionInstance> sessions) {
  std::vector<EnumeratedSession> out;
  for (const SessionInstance& s : sessions) {
    EnumeratedSession e;
    std::vector<int> sigma(s.m());
    std::iota(sigma.begin(), sigma.end(), 0);
    do {
      double c = 0.0, a = 0.0;
      for (int d = 0; d < s.m(); ++d) {
        c += s.engagement(d, sigma[d]);
        a += s.contributions[0](d, sigma[d]);
      }
      e.engagement_by_perm.push_back(c);
      e.delivered_by_perm.push_back(a);
    } while (std::next_permutation(sigma.begin(), sigma.end()));
    out.push_back(std::move(e));
  }
  return out;
}

double dual_value_enumerated(std::span<const EnumeratedSession> sessions, double lambda,
                             double target) {
  double value = -lambda * target;
  for (const EnumeratedSession& s : sessions) {
    double best = -1e300;
    for (size_t i = 0; i < s.engagement_by_perm.size(); ++i)
      best = std::max(best, s.engagement_by_perm[i] + lambda * s.delivered_by_perm[i]);
    value += best;
  }
  return value;
}

double grid_search_lambda(std::span<const EnumeratedSession> sessions, double target,
                          double lo, double hi, double step) {
  double best_lambda = lo, best_value = dual_value_enumerated(sessions, lo, target);
  for (double x = lo + step; x <= hi + 1e-12; x += step) {
    const double v = dual_value_enumerated(sessions, x, target);
    if (v < best_value - 1e-15) {
      best_value = v;
      best_lambda = x;
    }
  }
  return best_lambda;
}

}  // namespace

TEST_SUITE_BEGIN("lp_dual");

TEST_CASE("dual objective at zero prices is the unpriced matching total") {
  auto sessions = random_stream(3, 6, 3, 1);
  ConstraintSpec spec = make_spec({4.0}, 6);
  DualPrices zero{{0.0}};
  auto result = dual_objective(zero, sessions, spec, 1.25, 0.5);

  double expected = 0.0;
  for (const auto& s : sessions) expected += hungarian_max_weight(s.engagement).first.value;
  CHECK(result.value == doctest::Approx(expected).epsilon(1e-12));
  // subgradient[0] = nu*eps*b - delivered at the session optima
  CHECK(result.subgradient[0] ==
        doctest::Approx(1.25 * 0.5 * 4.0 - result.delivered[0]).epsilon(1e-12));
}

TEST_CASE("dual objective on the hand-checked 2x2 session") {
  Matrix c = Matrix::from_rows({{1.0, 0.0}, {0.0, 1.0}});
  Matrix a = Matrix::from_rows({{0.0, 1.0}, {1.0, 0.0}});
  std::vector<SessionInstance> sessions;
  sessions.push_back(SessionInstance::make(0, c, {a}));
  ConstraintSpec spec = make_spec({1.0}, 1);

  // lambda = 2: score [[1,2],[2,1]], matching 4, dual value 4 - 2*1 = 2.
  auto result = dual_objective(DualPrices{{2.0}}, sessions, spec, 1.0, 1.0);
  CHECK(result.value == doctest::Approx(2.0));
  CHECK(result.delivered[0] == doctest::Approx(2.0));
}

TEST_CASE("weak duality: the dual dominates every feasible integral tuple") {
  auto sessions = random_stream(11, 3, 3, 1);
  ConstraintSpec spec = make_spec({1.2}, 3);
  auto enumerated = enumerate_sessions(sessions);

  // Exhaustive feasible tuples (6^3) against a few price vectors.
  for (double lambda : {0.0, 0.3, 1.0, 4.0}) {
    const double dual = dual_objective(DualPrices{{lambda}}, sessions, spec, 1.0, 1.0).value;
    const size_t perms = enumerated[0].engagement_by_perm.size();
    for (size_t i = 0; i < perms; ++i)
      for (size_t j = 0; j < perms; ++j)
        for (size_t k = 0; k < perms; ++k) {
          const double delivered = enumerated[0].delivered_by_perm[i] +
                                   enumerated[1].delivered_by_perm[j] +
                                   enumerated[2].delivered_by_perm[k];
          if (delivered < spec.targets[0]) continue;
          const double value = enumerated[0].engagement_by_perm[i] +
                               enumerated[1].engagement_by_perm[j] +
                               enumerated[2].engagement_by_perm[k];
          CHECK(dual >= value - 1e-9);
        }
  }
}

TEST_CASE("negative prices are rejected") {
  auto sessions = random_stream(5, 2, 2, 1);
  ConstraintSpec spec = make_spec({1.0}, 2);
  CHECK_THROWS_AS(dual_objective(DualPrices{{-0.5}}, sessions, spec, 1.0, 1.0),
                  InvalidInputError);
}

TEST_CASE("non-binding constraints settle at zero price") {
  auto sessions = random_stream(17, 8, 3, 2);
  // Targets far below what unpriced ranking already delivers.
  DualPrices zero{{0.0, 0.0}};
  ConstraintSpec probe = make_spec({0.0, 0.0}, 8);
  auto at_zero = dual_objective(zero, sessions, probe, 1.0, 1.0);
  ConstraintSpec spec = make_spec(
      {0.5 * at_zero.delivered[0], 0.5 * at_zero.delivered[1]}, 8);

  SampledLpConfig config;
  auto report = solve_sampled_dual(sessions, spec, config);
  CHECK(report.prices.lambda == std::vector<double>{0.0, 0.0});
  CHECK(report.converged);
  CHECK(report.gap <= 1e-9);
}

TEST_CASE("zero targets give zero prices and the unpriced value") {
  auto sessions = random_stream(23, 5, 3, 2);
  ConstraintSpec spec = make_spec({0.0, 0.0}, 5);
  auto report = solve_sampled_dual(sessions, spec, SampledLpConfig{});
  CHECK(report.prices.lambda == std::vector<double>{0.0, 0.0});
  double expected = 0.0;
  for (const auto& s : sessions) expected += hungarian_max_weight(s.engagement).first.value;
  CHECK(report.dual_value == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("one-dimensional solves agree with the dense grid oracle") {
  int tested = 0;
  for (uint64_t seed = 1; seed <= 12; ++seed) {
    auto sessions = random_stream(seed * 31, 4, 2, 1);
    auto enumerated = enumerate_sessions(sessions);

    // Pick a target between the unpriced delivery and the deliverable
    // maximum so the constraint binds and the minimizer is interior.
    double unpriced = 0.0, peak = 0.0;
    for (const auto& e : enumerated) {
      size_t best = 0;
      for (size_t i = 1; i < e.engagement_by_perm.size(); ++i)
        if (e.engagement_by_perm[i] > e.engagement_by_perm[best]) best = i;
      unpriced += e.delivered_by_perm[best];
      peak += *std::max_element(e.delivered_by_perm.begin(), e.delivered_by_perm.end());
    }
    if (peak - unpriced < 0.1) continue;  // degenerate draw
    const double target = unpriced + 0.6 * (peak - unpriced);

    ConstraintSpec spec = make_spec({target}, 4);
    SampledLpConfig config;
    config.tolerance = 1e-7;
    auto report = solve_sampled_dual(sessions, spec, config);

    const double oracle = grid_search_lambda(enumerated, target, 0.0, 10.0, 1e-3);
    CHECK(std::abs(report.prices.lambda[0] - oracle) <= 1e-2);
    ++tested;
  }
  CHECK(tested >= 8);
}

TEST_CASE("binding flags witness complementary slackness") {
  for (uint64_t seed = 2; seed <= 6; ++seed) {
    auto sessions = random_stream(seed * 101, 6, 3, 1);
    auto probe = dual_objective(DualPrices{{0.0}}, sessions, make_spec({0.0}, 6), 1.0, 1.0);
    ConstraintSpec spec = make_spec({1.4 * probe.delivered[0]}, 6);
    auto report = solve_sampled_dual(sessions, spec, SampledLpConfig{});
    for (int t = 0; t < spec.size(); ++t) {
      const bool priced = report.prices.lambda[t] > 1e-4;
      if (priced) CHECK(report.binding[t]);
    }
  }
}

TEST_CASE("identical inputs produce bit-identical prices") {
  auto sessions = random_stream(77, 10, 3, 2);
  auto probe = dual_objective(DualPrices{{0.0, 0.0}}, sessions, make_spec({0.0, 0.0}, 10), 1.0, 1.0);
  ConstraintSpec spec =
      make_spec({1.2 * probe.delivered[0], 1.1 * probe.delivered[1]}, 10);
  auto first = solve_sampled_dual(sessions, spec, SampledLpConfig{});
  auto second = solve_sampled_dual(sessions, spec, SampledLpConfig{});
  CHECK(first.prices.lambda == second.prices.lambda);
  CHECK(first.dual_value == second.dual_value);
  CHECK(first.iterations == second.iterations);
}

TEST_CASE("hindsight with no constraints is the unpriced total") {
  auto sessions = random_stream(5, 4, 3, 0);
  ConstraintSpec spec = make_spec({}, 4);
  auto report = solve_hindsight(sessions, spec);
  double expected = 0.0;
  for (const auto& s : sessions) expected += hungarian_max_weight(s.engagement).first.value;
  CHECK(report.dual_value == doctest::Approx(expected).epsilon(1e-12));
  CHECK(report.converged);
}

TEST_CASE("hindsight sandwiches the exhaustive integer optimum on tiny instances") {
  for (uint64_t seed = 1; seed <= 6; ++seed) {
    auto sessions = random_stream(seed * 13, 3, 3, 1);
    auto enumerated = enumerate_sessions(sessions);
    auto probe = dual_objective(DualPrices{{0.0}}, sessions, make_spec({0.0}, 3), 1.0, 1.0);
    ConstraintSpec spec = make_spec({1.15 * probe.delivered[0]}, 3);

    // exhaustive best feasible tuple
    double best = -1e300;
    const size_t perms = enumerated[0].engagement_by_perm.size();
    for (size_t i = 0; i < perms; ++i)
      for (size_t j = 0; j < perms; ++j)
        for (size_t k = 0; k < perms; ++k) {
          const double delivered = enumerated[0].delivered_by_perm[i] +
                                   enumerated[1].delivered_by_perm[j] +
                                   enumerated[2].delivered_by_perm[k];
          if (delivered < spec.targets[0] - 1e-12) continue;
          best = std::max(best, enumerated[0].engagement_by_perm[i] +
                                    enumerated[1].engagement_by_perm[j] +
                                    enumerated[2].engagement_by_perm[k]);
        }
    if (best <= -1e300) continue;  // integrally infeasible draw

    auto report = solve_hindsight(sessions, spec);
    CHECK(report.dual_value >= best - 1e-9);
    if (report.best_primal_bound > -1e300)
      CHECK(report.best_primal_bound <= report.dual_value + 1e-9);
  }
}

TEST_CASE("scaling engagement scales the hindsight value") {
  auto sessions = random_stream(41, 6, 3, 1);
  auto probe = dual_objective(DualPrices{{0.0}}, sessions, make_spec({0.0}, 6), 1.0, 1.0);
  ConstraintSpec spec = make_spec({1.2 * probe.delivered[0]}, 6);
  auto base = solve_hindsight(sessions, spec);

  const double c = 3.0;
  std::vector<SessionInstance> scaled;
  for (const auto& s : sessions) {
    Matrix engagement = s.engagement;
    for (int d = 0; d < s.m(); ++d)
      for (int p = 0; p < s.m(); ++p) engagement(d, p) *= c;
    scaled.push_back(SessionInstance::make(s.id, std::move(engagement), s.contributions));
  }
  auto rescaled = solve_hindsight(scaled, spec);
  CHECK(rescaled.dual_value / base.dual_value == doctest::Approx(c).epsilon(5e-2));
}

TEST_CASE("an undeliverable target is flagged as likely infeasible") {
  auto sessions = random_stream(9, 4, 2, 1);
  double peak = 0.0;
  for (const auto& s : sessions) peak += hungarian_max_weight(s.contributions[0]).first.value;
  ConstraintSpec spec = make_spec({2.0 * peak + 1.0}, 4);
  SampledLpConfig config;
  config.max_iters = 400;
  auto report = solve_sampled_dual(sessions, spec, config);
  CHECK(report.likely_infeasible);
  CHECK_FALSE(report.converged);
}

TEST_CASE("epsilon outside the theory regime is flagged, not rejected") {
  auto sessions = random_stream(3, 4, 2, 1);
  ConstraintSpec spec = make_spec({0.1}, 4);
  SampledLpConfig config;
  config.epsilon = 0.5;
  auto report = solve_sampled_dual(sessions, spec, config);
  CHECK(!report.warnings.empty());
}

TEST_SUITE_END();
