#include "trafficshape/stream_io.hpp"

#include <doctest.h>

#include <fstream>
#include <sstream>

#include "test_util.hpp"

using namespace trafficshape;
using trafficshape::testing::TempDir;

namespace {

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

std::vector<SessionInstance> small_stream(int n) {
  GeneratorConfig config;
  config.m = 4;
  config.n = n;
  config.seed = 8;
  return generate_stream(config);
}

}  // namespace

TEST_SUITE_BEGIN("stream_io");

TEST_CASE("stream round trip is structurally exact and byte stable") {
  TempDir tmp("stream");
  auto stream = small_stream(6);
  save_stream(tmp.path("a.ndjson"), stream);
  auto loaded = load_stream(tmp.path("a.ndjson"));
  REQUIRE(loaded.size() == stream.size());
  for (size_t k = 0; k < stream.size(); ++k) {
    CHECK(loaded[k].id == stream[k].id);
    CHECK(loaded[k].engagement == stream[k].engagement);
    CHECK(loaded[k].contributions == stream[k].contributions);
    CHECK(loaded[k].rank_one.has_value());
  }
  save_stream(tmp.path("b.ndjson"), loaded);
  CHECK(slurp(tmp.path("a.ndjson")) == slurp(tmp.path("b.ndjson")));
}

TEST_CASE("truncated line reports its line number") {
  TempDir tmp("truncated");
  auto stream = small_stream(3);
  save_stream(tmp.path("s.ndjson"), stream);
  std::string text = slurp(tmp.path("s.ndjson"));
  // chop the last line in half
  text.resize(text.size() - text.size() / 8);
  {
    std::ofstream out(tmp.path("broken.ndjson"), std::ios::binary);
    out << text;
  }
  try {
    load_stream(tmp.path("broken.ndjson"));
    FAIL("expected SchemaError");
  } catch (const SchemaError& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
}

TEST_CASE("dimension mismatch names the constraint index") {
  TempDir tmp("mismatch");
  std::ofstream out(tmp.path("s.ndjson"), std::ios::binary);
  out << R"({"id":0,"m":2,"C":[[1.0,0.0],[0.0,1.0]],"A":[[[1.0,0.0],[0.0,1.0]],[[1.0],[0.0]]]})"
      << "\n";
  out.close();
  try {
    load_stream(tmp.path("s.ndjson"));
    FAIL("expected SchemaError");
  } catch (const SchemaError& e) {
    CHECK(std::string(e.what()).find("constraint 1") != std::string::npos);
  }
}

TEST_CASE("non-finite values are rejected") {
  TempDir tmp("nonfinite");
  std::ofstream out(tmp.path("s.ndjson"), std::ios::binary);
  out << R"({"id":0,"m":1,"C":[[null]],"A":[]})" << "\n";
  out.close();
  CHECK_THROWS_AS(load_stream(tmp.path("s.ndjson")), SchemaError);
}

TEST_CASE("constraint spec round trip with both target conventions") {
  TempDir tmp("spec");
  ConstraintSpec spec;
  spec.horizon = 50;
  spec.names = {"pub_a", "news"};
  spec.targets = {120.0, 400.0};

  save_constraint_spec(tmp.path("total.json"), spec);
  ConstraintSpec total = load_constraint_spec(tmp.path("total.json"));
  CHECK(total.targets == spec.targets);
  CHECK(total.names == spec.names);
  CHECK(total.horizon == 50);

  save_constraint_spec(tmp.path("avg.json"), spec, NewsConvention::per_session_average);
  ConstraintSpec averaged = load_constraint_spec(tmp.path("avg.json"));
  CHECK(averaged.targets[0] == doctest::Approx(120.0));
  CHECK(averaged.targets[1] == doctest::Approx(400.0));
}

TEST_CASE("prices file round trip preserves values and metadata") {
  TempDir tmp("prices");
  ConstraintSpec spec;
  spec.horizon = 10;
  spec.names = {"pub_a", "pub_b"};
  spec.targets = {5.0, 3.0};
  DualPrices prices{{0.75, 0.0}};
  PricesFileMeta meta;
  meta.nu = 1.05;
  meta.epsilon = 0.4;
  meta.gap = 1.5e-5;
  meta.iterations = 37;
  meta.converged = true;

  save_prices(tmp.path("p.json"), prices, spec, meta);
  auto [loaded, loaded_meta] = load_prices(tmp.path("p.json"), spec);
  CHECK(loaded.lambda == prices.lambda);
  CHECK(loaded_meta.nu == meta.nu);
  CHECK(loaded_meta.epsilon == meta.epsilon);
  CHECK(loaded_meta.iterations == 37);
  CHECK(loaded_meta.converged);

  ConstraintSpec renamed = spec;
  renamed.names[1] = "pub_c";
  CHECK_THROWS_AS(load_prices(tmp.path("p.json"), renamed), SchemaError);
}

TEST_CASE("decision log round trip") {
  TempDir tmp("decisions");
  std::vector<ServeDecision> decisions(2);
  decisions[0].session_id = 0;
  decisions[0].phase = Phase::learning;
  decisions[0].assignment = {{0, 1}, 1.5};
  decisions[0].reward = 1.5;
  decisions[0].delivered = {0.25};
  decisions[1].session_id = 1;
  decisions[1].phase = Phase::serving;
  decisions[1].assignment = {{1, 0}, 2.0};
  decisions[1].reward = 2.0;
  decisions[1].delivered = {0.5};

  save_decisions(tmp.path("log.ndjson"), decisions);
  auto loaded = load_decisions(tmp.path("log.ndjson"));
  REQUIRE(loaded.size() == 2);
  CHECK(loaded[0].phase == Phase::learning);
  CHECK(loaded[1].phase == Phase::serving);
  CHECK(loaded[1].assignment.sigma == std::vector<int>{1, 0});
  CHECK(loaded[0].delivered == std::vector<double>{0.25});
}

TEST_CASE("generator config round trip") {
  TempDir tmp("genconfig");
  GeneratorConfig config;
  config.m = 6;
  config.n = 44;
  config.seed = 321;
  config.recipe.publishers[0].target_fraction = 1.15;
  config.recipe.news_convention = NewsConvention::per_session_average;
  save_generator_config(tmp.path("gen.json"), config);
  GeneratorConfig loaded = load_generator_config(tmp.path("gen.json"));
  CHECK(loaded.m == 6);
  CHECK(loaded.n == 44);
  CHECK(loaded.seed == 321);
  CHECK(loaded.recipe.publishers[0].target_fraction == 1.15);
  CHECK(loaded.recipe.news_convention == NewsConvention::per_session_average);

  // generated streams from a round-tripped config are identical
  auto a = generate_stream(config);
  auto b = generate_stream(loaded);
  REQUIRE(a.size() == b.size());
  CHECK(a[7].engagement == b[7].engagement);
}

TEST_CASE("curve csv export") {
  TempDir tmp("curve");
  save_curve_csv(tmp.path("curve.csv"), default_curve(5));
  const std::string text = slurp(tmp.path("curve.csv"));
  CHECK(text.rfind("position,ref\n", 0) == 0);
  CHECK(text.find("1,1.0") != std::string::npos);
}

TEST_SUITE_END();
