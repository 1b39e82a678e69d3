#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "trafficshape/engine.hpp"
#include "trafficshape/session.hpp"
#include "trafficshape/traffic_model.hpp"

namespace trafficshape {

// Session stream: newline-delimited JSON, one object per session:
//   {"id": int, "m": int, "C": [[...]], "A": [[[...]], ...]}
// Dense row-major matrices, all values finite doubles. A malformed line
// raises SchemaError naming the line and field.
std::vector<SessionInstance> load_stream(const std::filesystem::path& path);
void save_stream(const std::filesystem::path& path, std::span<const SessionInstance> sessions);

// Constraint spec:
//   {"horizon": n, "names": [...], "targets": [...], "convention": "total"}
// Targets under "per_session_average" convention are multiplied by the
// horizon on load; in memory targets are always traffic-wide totals.
ConstraintSpec load_constraint_spec(const std::filesystem::path& path);
void save_constraint_spec(const std::filesystem::path& path, const ConstraintSpec& spec,
                          NewsConvention convention = NewsConvention::traffic_total);

// Prices file, the learn -> serve contract: one key per constraint name plus
// a "metadata" object {nu, epsilon, gap, iterations, ...}.
struct PricesFileMeta {
  double nu = 0.0;
  double epsilon = 0.0;
  double gap = 0.0;
  int iterations = 0;
  bool converged = false;
  bool likely_infeasible = false;
  double dual_value = 0.0;
};
void save_prices(const std::filesystem::path& path, const DualPrices& prices,
                 const ConstraintSpec& spec, const PricesFileMeta& meta);
std::pair<DualPrices, PricesFileMeta> load_prices(const std::filesystem::path& path,
                                                  const ConstraintSpec& spec);

// Decision log: newline-delimited JSON mirroring ServeDecision.
void save_decisions(const std::filesystem::path& path, std::span<const ServeDecision> decisions);
std::vector<ServeDecision> load_decisions(const std::filesystem::path& path);

// Curve export for plotting: "position,ref" rows.
void save_curve_csv(const std::filesystem::path& path, const RefCtrCurve& curve);

// Generator config as a JSON document; missing fields keep their defaults.
GeneratorConfig load_generator_config(const std::filesystem::path& path);
void save_generator_config(const std::filesystem::path& path, const GeneratorConfig& config);

}  // namespace trafficshape
