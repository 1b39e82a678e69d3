#include "trafficshape/stream_io.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

namespace trafficshape {

namespace {

using nlohmann::json;

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string() + " for reading");
  return in;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);  // binary: identical bytes on every platform
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  return out;
}

double finite_number(const json& j, const std::string& context) {
  if (!j.is_number()) throw SchemaError(context + ": expected a finite number");
  const double x = j.get<double>();
  if (!std::isfinite(x)) throw SchemaError(context + ": value is not finite");
  return x;
}

Matrix parse_matrix(const json& j, int m, const std::string& context) {
  if (!j.is_array() || int(j.size()) != m)
    throw SchemaError(context + ": expected " + std::to_string(m) + " rows");
  Matrix out(m);
  for (int d = 0; d < m; ++d) {
    const json& row = j[d];
    if (!row.is_array() || int(row.size()) != m)
      throw SchemaError(context + ": row " + std::to_string(d) + " must have " +
                        std::to_string(m) + " entries");
    for (int p = 0; p < m; ++p)
      out(d, p) = finite_number(row[p], context + ": row " + std::to_string(d));
  }
  return out;
}

json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (int d = 0; d < m.size(); ++d) {
    auto span = m.row(d);
    rows.push_back(std::vector<double>(span.begin(), span.end()));
  }
  return rows;
}

json parse_line(const std::string& line, size_t line_no, const std::filesystem::path& path) {
  try {
    return json::parse(line);
  } catch (const json::exception& e) {
    throw SchemaError(path.string() + ": line " + std::to_string(line_no) +
                      ": invalid JSON: " + e.what());
  }
}

}  // namespace

std::vector<SessionInstance> load_stream(const std::filesystem::path& path) {
  std::ifstream in = open_in(path);
  std::vector<SessionInstance> sessions;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const json j = parse_line(line, line_no, path);
    const std::string context = path.string() + ": line " + std::to_string(line_no);
    if (!j.is_object()) throw SchemaError(context + ": expected an object");
    for (const char* field : {"id", "m", "C", "A"})
      if (!j.contains(field))
        throw SchemaError(context + ": missing field \"" + std::string(field) + "\"");
    if (!j["id"].is_number_integer()) throw SchemaError(context + ": field \"id\": expected integer");
    if (!j["m"].is_number_integer()) throw SchemaError(context + ": field \"m\": expected integer");
    const int64_t id = j["id"].get<int64_t>();
    const int m = j["m"].get<int>();
    if (m < 1) throw SchemaError(context + ": field \"m\": must be >= 1");

    Matrix engagement = parse_matrix(j["C"], m, context + ": field \"C\"");
    if (!j["A"].is_array()) throw SchemaError(context + ": field \"A\": expected an array");
    std::vector<Matrix> contributions;
    for (size_t t = 0; t < j["A"].size(); ++t)
      contributions.push_back(
          parse_matrix(j["A"][t], m, context + ": field \"A\": constraint " + std::to_string(t)));

    try {
      sessions.push_back(SessionInstance::make(id, std::move(engagement), std::move(contributions)));
    } catch (const InvalidInputError& e) {
      throw SchemaError(context + ": " + e.what());
    }
  }
  return sessions;
}

void save_stream(const std::filesystem::path& path, std::span<const SessionInstance> sessions) {
  std::ofstream out = open_out(path);
  for (const SessionInstance& s : sessions) {
    json j;
    j["id"] = s.id;
    j["m"] = s.m();
    j["C"] = matrix_to_json(s.engagement);
    json a = json::array();
    for (const Matrix& c : s.contributions) a.push_back(matrix_to_json(c));
    j["A"] = std::move(a);
    out << j.dump() << "\n";
  }
  if (!out) throw IoError("failed writing " + path.string());
}

ConstraintSpec load_constraint_spec(const std::filesystem::path& path) {
  std::ifstream in = open_in(path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw SchemaError(path.string() + ": invalid JSON: " + e.what());
  }
  const std::string context = path.string();
  for (const char* field : {"horizon", "names", "targets"})
    if (!j.contains(field))
      throw SchemaError(context + ": missing field \"" + std::string(field) + "\"");

  ConstraintSpec spec;
  if (!j["horizon"].is_number_integer())
    throw SchemaError(context + ": field \"horizon\": expected integer");
  spec.horizon = j["horizon"].get<int>();
  if (!j["names"].is_array() || !j["targets"].is_array() ||
      j["names"].size() != j["targets"].size())
    throw SchemaError(context + ": \"names\" and \"targets\" must be arrays of equal length");
  for (size_t t = 0; t < j["names"].size(); ++t) {
    if (!j["names"][t].is_string())
      throw SchemaError(context + ": field \"names\": entry " + std::to_string(t) +
                        " must be a string");
    spec.names.push_back(j["names"][t].get<std::string>());
    spec.targets.push_back(
        finite_number(j["targets"][t], context + ": field \"targets\": entry " + std::to_string(t)));
  }

  if (j.contains("convention")) {
    const std::string convention = j["convention"].get<std::string>();
    if (convention == "per_session_average") {
      for (double& b : spec.targets) b *= double(spec.horizon);
    } else if (convention != "total") {
      throw SchemaError(context + ": field \"convention\": expected \"total\" or "
                                  "\"per_session_average\"");
    }
  }
  try {
    spec.validate();
  } catch (const InvalidInputError& e) {
    throw SchemaError(context + ": " + e.what());
  }
  return spec;
}

void save_constraint_spec(const std::filesystem::path& path, const ConstraintSpec& spec,
                          NewsConvention convention) {
  spec.validate();
  json j;
  j["horizon"] = spec.horizon;
  j["names"] = spec.names;
  if (convention == NewsConvention::per_session_average) {
    std::vector<double> per_session(spec.targets);
    for (double& b : per_session) b /= double(spec.horizon);
    j["targets"] = per_session;
    j["convention"] = "per_session_average";
  } else {
    j["targets"] = spec.targets;
    j["convention"] = "total";
  }
  std::ofstream out = open_out(path);
  out << j.dump(2) << "\n";
  if (!out) throw IoError("failed writing " + path.string());
}

void save_prices(const std::filesystem::path& path, const DualPrices& prices,
                 const ConstraintSpec& spec, const PricesFileMeta& meta) {
  if (prices.size() != spec.size())
    throw InvalidInputError("save_prices: prices length does not match spec");
  json j;
  for (int t = 0; t < spec.size(); ++t) j[spec.names[t]] = prices.lambda[t];
  j["metadata"] = {{"nu", meta.nu},
                   {"epsilon", meta.epsilon},
                   {"gap", meta.gap},
                   {"iterations", meta.iterations},
                   {"converged", meta.converged},
                   {"likely_infeasible", meta.likely_infeasible},
                   {"dual_value", meta.dual_value}};
  std::ofstream out = open_out(path);
  out << j.dump(2) << "\n";
  if (!out) throw IoError("failed writing " + path.string());
}

std::pair<DualPrices, PricesFileMeta> load_prices(const std::filesystem::path& path,
                                                  const ConstraintSpec& spec) {
  std::ifstream in = open_in(path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw SchemaError(path.string() + ": invalid JSON: " + e.what());
  }
  DualPrices prices;
  for (int t = 0; t < spec.size(); ++t) {
    if (!j.contains(spec.names[t]))
      throw SchemaError(path.string() + ": missing price for constraint \"" + spec.names[t] +
                        "\"");
    prices.lambda.push_back(
        finite_number(j[spec.names[t]], path.string() + ": price \"" + spec.names[t] + "\""));
  }
  prices.validate();

  PricesFileMeta meta;
  if (j.contains("metadata")) {
    const json& md = j["metadata"];
    // Non-finite values (e.g. the gap of a solve that never found a feasible
    // rounding) serialize as null; treat them as infinity.
    auto number_or = [&](const char* key, double fallback) {
      if (!md.contains(key)) return fallback;
      if (md[key].is_null()) return std::numeric_limits<double>::infinity();
      return md[key].get<double>();
    };
    meta.nu = number_or("nu", 0.0);
    meta.epsilon = number_or("epsilon", 0.0);
    meta.gap = number_or("gap", 0.0);
    meta.dual_value = number_or("dual_value", 0.0);
    if (md.contains("iterations") && md["iterations"].is_number_integer())
      meta.iterations = md["iterations"].get<int>();
    if (md.contains("converged") && md["converged"].is_boolean())
      meta.converged = md["converged"].get<bool>();
    if (md.contains("likely_infeasible") && md["likely_infeasible"].is_boolean())
      meta.likely_infeasible = md["likely_infeasible"].get<bool>();
  }
  return {std::move(prices), meta};
}

void save_decisions(const std::filesystem::path& path,
                    std::span<const ServeDecision> decisions) {
  std::ofstream out = open_out(path);
  for (const ServeDecision& d : decisions) {
    json j;
    j["session_id"] = d.session_id;
    j["phase"] = d.phase == Phase::learning ? "learning" : "serving";
    j["sigma"] = d.assignment.sigma;
    j["value"] = d.assignment.value;
    j["reward"] = d.reward;
    j["delivered"] = d.delivered;
    out << j.dump() << "\n";
  }
  if (!out) throw IoError("failed writing " + path.string());
}

std::vector<ServeDecision> load_decisions(const std::filesystem::path& path) {
  std::ifstream in = open_in(path);
  std::vector<ServeDecision> decisions;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const json j = parse_line(line, line_no, path);
    const std::string context = path.string() + ": line " + std::to_string(line_no);
    for (const char* field : {"session_id", "phase", "sigma", "value", "reward", "delivered"})
      if (!j.contains(field))
        throw SchemaError(context + ": missing field \"" + std::string(field) + "\"");

    ServeDecision d;
    d.session_id = j["session_id"].get<int64_t>();
    const std::string phase = j["phase"].get<std::string>();
    if (phase == "learning")
      d.phase = Phase::learning;
    else if (phase == "serving")
      d.phase = Phase::serving;
    else
      throw SchemaError(context + ": field \"phase\": expected \"learning\" or \"serving\"");
    if (!j["sigma"].is_array()) throw SchemaError(context + ": field \"sigma\": expected array");
    for (const json& s : j["sigma"]) d.assignment.sigma.push_back(s.get<int>());
    d.assignment.value = finite_number(j["value"], context + ": field \"value\"");
    d.reward = finite_number(j["reward"], context + ": field \"reward\"");
    for (size_t t = 0; t < j["delivered"].size(); ++t)
      d.delivered.push_back(
          finite_number(j["delivered"][t], context + ": field \"delivered\""));
    decisions.push_back(std::move(d));
  }
  return decisions;
}

void save_curve_csv(const std::filesystem::path& path, const RefCtrCurve& curve) {
  curve.validate();
  std::ofstream out = open_out(path);
  out << "position,ref\n";
  for (int p = 0; p < curve.length(); ++p) {
    json ref = curve.ref[p];  // shortest round-trip formatting
    out << (p + 1) << "," << ref.dump() << "\n";
  }
  if (!out) throw IoError("failed writing " + path.string());
}

GeneratorConfig load_generator_config(const std::filesystem::path& path) {
  std::ifstream in = open_in(path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw SchemaError(path.string() + ": invalid JSON: " + e.what());
  }
  GeneratorConfig config;
  config.m = j.value("m", config.m);
  config.n = j.value("n", config.n);
  config.seed = j.value("seed", config.seed);
  if (j.contains("dwell")) {
    const json& d = j["dwell"];
    config.dist.dwell_log_mean = d.value("log_mean", config.dist.dwell_log_mean);
    config.dist.dwell_log_sigma = d.value("log_sigma", config.dist.dwell_log_sigma);
    config.dist.dwell_cap = d.value("cap", config.dist.dwell_cap);
  }
  if (j.contains("ctr")) {
    config.dist.ctr_alpha = j["ctr"].value("alpha", config.dist.ctr_alpha);
    config.dist.ctr_beta = j["ctr"].value("beta", config.dist.ctr_beta);
  }
  if (j.contains("news")) {
    config.dist.news_alpha = j["news"].value("alpha", config.dist.news_alpha);
    config.dist.news_beta = j["news"].value("beta", config.dist.news_beta);
  }
  if (j.contains("publishers")) {
    config.recipe.publishers.clear();
    for (const json& p : j["publishers"]) {
      PublisherRecipe pub;
      pub.name = p.value("name", std::string("publisher"));
      pub.curate_prob = p.value("prob", pub.curate_prob);
      pub.target_fraction = p.value("target_fraction", pub.target_fraction);
      config.recipe.publishers.push_back(std::move(pub));
    }
  }
  if (j.contains("newsiness")) {
    const json& nw = j["newsiness"];
    config.recipe.newsiness_enabled = nw.value("enabled", true);
    config.recipe.newsiness_name = nw.value("name", config.recipe.newsiness_name);
    config.recipe.newsiness_target_fraction =
        nw.value("target_fraction", config.recipe.newsiness_target_fraction);
    const std::string convention = nw.value("convention", std::string("total"));
    if (convention == "per_session_average")
      config.recipe.news_convention = NewsConvention::per_session_average;
    else if (convention == "total")
      config.recipe.news_convention = NewsConvention::traffic_total;
    else
      throw SchemaError(path.string() + ": newsiness.convention: expected \"total\" or "
                                        "\"per_session_average\"");
  }
  if (j.contains("curve")) {
    config.curve.ref = j["curve"].get<std::vector<double>>();
  }
  config.validate();
  return config;
}

void save_generator_config(const std::filesystem::path& path, const GeneratorConfig& config) {
  config.validate();
  json j;
  j["m"] = config.m;
  j["n"] = config.n;
  j["seed"] = config.seed;
  j["dwell"] = {{"log_mean", config.dist.dwell_log_mean},
                {"log_sigma", config.dist.dwell_log_sigma},
                {"cap", config.dist.dwell_cap}};
  j["ctr"] = {{"alpha", config.dist.ctr_alpha}, {"beta", config.dist.ctr_beta}};
  j["news"] = {{"alpha", config.dist.news_alpha}, {"beta", config.dist.news_beta}};
  json pubs = json::array();
  for (const PublisherRecipe& pub : config.recipe.publishers)
    pubs.push_back({{"name", pub.name},
                    {"prob", pub.curate_prob},
                    {"target_fraction", pub.target_fraction}});
  j["publishers"] = std::move(pubs);
  j["newsiness"] = {
      {"enabled", config.recipe.newsiness_enabled},
      {"name", config.recipe.newsiness_name},
      {"target_fraction", config.recipe.newsiness_target_fraction},
      {"convention", config.recipe.news_convention == NewsConvention::per_session_average
                         ? "per_session_average"
                         : "total"}};
  if (!config.curve.ref.empty()) j["curve"] = config.curve.ref;
  std::ofstream out = open_out(path);
  out << j.dump(2) << "\n";
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace trafficshape
