#include "trafficshape/traffic_model.hpp"

#include <doctest.h>

#include <cmath>

#include "test_util.hpp"
#include "trafficshape/matching.hpp"

using namespace trafficshape;

namespace {

std::vector<DocumentProfile> two_docs() {
  DocumentProfile first{2.0, 0.5, 0.3, {1, 0}};
  DocumentProfile second{0.0, 0.25, 0.9, {0, 1}};
  return {first, second};
}

ConstraintRecipe basic_recipe() {
  ConstraintRecipe recipe;
  recipe.publishers = {{"pub_a", 0.25, 0.8}, {"pub_b", 0.20, 0.8}};
  recipe.newsiness_enabled = true;
  return recipe;
}

}  // namespace

TEST_SUITE_BEGIN("traffic_model");

TEST_CASE("position-effect formulas") {
  RefCtrCurve curve{{1.0, 0.5}};
  SessionInstance session = build_session(7, two_docs(), curve, basic_recipe());

  SUBCASE("engagement is dwell times curve") {
    CHECK(session.engagement(0, 0) == 2.0);
    CHECK(session.engagement(0, 1) == 1.0);
    CHECK(session.engagement(1, 0) == 0.0);
    CHECK(session.engagement(1, 1) == 0.0);
  }
  SUBCASE("publisher matrices are gated by the curated flag") {
    // doc 0 curated by pub_a only
    CHECK(session.contributions[0](0, 0) == 0.5);
    CHECK(session.contributions[0](0, 1) == 0.25);
    CHECK(session.contributions[0](1, 0) == 0.0);  // uncurated row is all zero
    CHECK(session.contributions[0](1, 1) == 0.0);
    CHECK(session.contributions[1](0, 0) == 0.0);
    CHECK(session.contributions[1](1, 0) == 0.25);
  }
  SUBCASE("newsiness carries the same position effect") {
    CHECK(session.contributions[2](1, 0) == 0.9);
    CHECK(session.contributions[2](1, 1) == doctest::Approx(0.45));
  }
}

TEST_CASE("a flat curve removes the position effect entirely") {
  RefCtrCurve curve{{1.0, 1.0, 1.0}};
  std::vector<DocumentProfile> docs(3);
  for (int d = 0; d < 3; ++d) docs[d] = {1.0 + d, 0.2, 0.4, {}};
  ConstraintRecipe recipe;
  recipe.publishers.clear();
  recipe.newsiness_enabled = true;
  SessionInstance session = build_session(0, docs, curve, recipe);

  // every permutation attains the same reward
  const double base = permutation_weight(session.engagement, std::vector<int>{0, 1, 2});
  CHECK(permutation_weight(session.engagement, std::vector<int>{2, 0, 1}) ==
        doctest::Approx(base));
  CHECK(hungarian_max_weight(session.engagement).first.value == doctest::Approx(base));
}

TEST_CASE("generated sessions are rank-one with the shared curve") {
  GeneratorConfig config;
  config.m = 8;
  config.n = 12;
  config.seed = 5;
  auto stream = generate_stream(config);
  REQUIRE(stream.size() == 12);
  for (const SessionInstance& s : stream) {
    REQUIRE(s.rank_one.has_value());
    const RankOneStructure& r1 = *s.rank_one;
    for (int d = 0; d < s.m(); ++d)
      for (int p = 0; p < s.m(); ++p) {
        CHECK(s.engagement(d, p) ==
              doctest::Approx(r1.doc_engagement[d] * r1.curve[p]).epsilon(1e-12));
        for (int t = 0; t < s.num_constraints(); ++t)
          CHECK(s.contributions[t](d, p) ==
                doctest::Approx(r1.doc_contribution[t][d] * r1.curve[p]).epsilon(1e-12));
      }
  }
}

TEST_CASE("curve normalization and shape") {
  RefCtrCurve curve = default_curve(20);
  CHECK(curve.ref[0] == 1.0);
  curve.validate();
  // deliberate non-monotone bump around positions 5-6
  bool bump = false;
  for (int p = 1; p < 19; ++p)
    if (curve.ref[p + 1] > curve.ref[p]) bump = true;
  CHECK(bump);

  RefCtrCurve bad{{0.9, 0.5}};
  CHECK_THROWS_AS(bad.validate(), InvalidInputError);
}

TEST_CASE("generation is deterministic and order-independent per session") {
  GeneratorConfig config;
  config.m = 6;
  config.n = 10;
  config.seed = 99;
  auto first = generate_stream(config);
  auto second = generate_stream(config);
  REQUIRE(first.size() == second.size());
  for (size_t k = 0; k < first.size(); ++k) {
    CHECK(first[k].engagement == second[k].engagement);
    CHECK(first[k].contributions == second[k].contributions);
  }
  config.seed = 100;
  auto other = generate_stream(config);
  CHECK(first[0].engagement != other[0].engagement);
}

TEST_CASE("entries are nonnegative and per-permutation totals respect the bound") {
  GeneratorConfig config;
  config.m = 10;
  config.n = 25;
  config.seed = 3;
  const double bound = config.per_session_bound();
  auto stream = generate_stream(config);
  for (const SessionInstance& s : stream) {
    for (double x : s.engagement.flat()) CHECK(x >= 0.0);
    for (const Matrix& a : s.contributions)
      for (double x : a.flat()) CHECK(x >= 0.0);
    CHECK(hungarian_max_weight(s.engagement).first.value <= bound + 1e-9);
    for (const Matrix& a : s.contributions)
      CHECK(hungarian_max_weight(a).first.value <= bound + 1e-9);
  }
}

TEST_CASE("empirical identity delivery matches the analytic moments") {
  GeneratorConfig config;
  config.m = 12;
  config.n = 4000;
  config.seed = 2024;
  auto stream = generate_stream(config);

  SessionMoments moments = publisher_identity_moments(config, 0);
  double mean = 0.0;
  std::vector<int> identity(config.m);
  for (int p = 0; p < config.m; ++p) identity[p] = p;
  for (const SessionInstance& s : stream)
    mean += permutation_weight(s.contributions[0], identity);
  mean /= double(config.n);

  const double se = std::sqrt(moments.variance / double(config.n));
  CHECK(std::abs(mean - moments.mean) <= 3.0 * se);
}

TEST_CASE("calibrated targets below one are strictly feasible by construction") {
  GeneratorConfig config;
  config.m = 8;
  config.n = 40;
  config.seed = 17;
  config.recipe.publishers = {{"publisher_a", 0.25, 0.8}, {"publisher_b", 0.20, 0.8}};
  config.recipe.newsiness_target_fraction = 0.8;
  auto stream = generate_stream(config);
  ConstraintSpec spec = calibrate_targets(stream, config);
  REQUIRE(spec.size() == 3);

  // price-free ranking delivers fraction^-1 times the target
  std::vector<double> delivered(spec.size(), 0.0);
  for (const SessionInstance& s : stream) {
    auto sigma = hungarian_max_weight(s.engagement).first.sigma;
    for (int t = 0; t < spec.size(); ++t)
      delivered[t] += permutation_weight(s.contributions[t], sigma);
  }
  for (int t = 0; t < spec.size(); ++t) CHECK(delivered[t] > spec.targets[t]);
}

TEST_CASE("document count must match the curve") {
  RefCtrCurve curve{{1.0, 0.5, 0.25}};
  CHECK_THROWS_AS(build_session(0, two_docs(), curve, basic_recipe()), InvalidInputError);
}

TEST_SUITE_END();
