// trafficshape: generate / learn / run / evaluate / sweep for price-weighted
// constrained ranking.
//
// The pipeline:
//   trafficshape generate --out stream.ndjson --spec-out spec.json --seed 1
//   trafficshape learn    --stream stream.ndjson --spec spec.json \
//                         --epsilon 0.4 --nu 1.05 --out prices.json
//   trafficshape run      --stream stream.ndjson --spec spec.json \
//                         --epsilon 0.4 --prices prices.json --out log.ndjson
//   trafficshape evaluate --log log.ndjson --stream stream.ndjson \
//                         --spec spec.json --out report.json
//   trafficshape sweep    --kind epsilon --stream stream.ndjson --spec spec.json \
//                         --grid 0.05,0.1,0.2,0.3 --seeds 1,2,3 --out sweep.csv
//
// Exit codes: 0 success, 2 config error, 3 infeasibility under --strict,
// 4 I/O error. Errors are emitted as one JSON object on stderr.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "trafficshape/engine.hpp"
#include "trafficshape/evaluation.hpp"
#include "trafficshape/lp_dual.hpp"
#include "trafficshape/stream_io.hpp"
#include "trafficshape/traffic_model.hpp"

namespace ts = trafficshape;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitInfeasible = 3;
constexpr int kExitIo = 4;

void emit_error(const std::string& type, const std::string& message) {
  json j;
  j["error"] = {{"type", type}, {"message", message}};
  std::cerr << j.dump() << "\n";
}

void emit_warning(const std::string& message) {
  json j;
  j["warning"] = message;
  std::cerr << j.dump() << "\n";
}

std::vector<double> parse_double_list(const std::string& csv, const std::string& flag) {
  std::vector<double> out;
  size_t pos = 0;
  while (pos <= csv.size()) {
    const size_t comma = csv.find(',', pos);
    const std::string token = csv.substr(pos, comma == std::string::npos ? csv.size() - pos
                                                                         : comma - pos);
    if (token.empty()) throw ts::InvalidInputError(flag + ": empty entry in list");
    try {
      size_t used = 0;
      out.push_back(std::stod(token, &used));
      if (used != token.size()) throw std::invalid_argument(token);
    } catch (const std::exception&) {
      throw ts::InvalidInputError(flag + ": cannot parse \"" + token + "\" as a number");
    }
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  if (out.empty()) throw ts::InvalidInputError(flag + ": empty list");
  return out;
}

std::vector<uint64_t> parse_seed_list(const std::string& csv) {
  std::vector<uint64_t> out;
  for (double x : parse_double_list(csv, "--seeds")) {
    if (x < 0.0 || x != std::floor(x))
      throw ts::InvalidInputError("--seeds: entries must be nonnegative integers");
    out.push_back(uint64_t(x));
  }
  return out;
}

// Safety-factor selection: an explicit --nu wins, otherwise the rule decides
// from the effective learning fraction (feasibility: 1 + 4e, objective: 1 - e).
double resolve_nu(const std::string& rule, double nu_flag, double epsilon) {
  if (nu_flag > 0.0) return nu_flag;
  if (rule == "objective") return std::max(1.0 - epsilon, 1e-3);
  if (rule == "feasibility") return 1.0 + 4.0 * epsilon;
  throw ts::InvalidInputError("--nu-rule: expected feasibility or objective");
}

struct GenerateArgs {
  std::string config_path, out_path, spec_out, curve_out, config_out;
  int n = -1, m = -1;
  int64_t seed = -1;
};

int cmd_generate(const GenerateArgs& args) {
  ts::GeneratorConfig config;
  if (!args.config_path.empty()) config = ts::load_generator_config(args.config_path);
  if (args.n > 0) config.n = args.n;
  if (args.m > 0) {
    config.m = args.m;
    if (!config.curve.ref.empty() && config.curve.length() != args.m) config.curve.ref.clear();
  }
  if (args.seed >= 0) config.seed = uint64_t(args.seed);
  config.validate();

  const std::vector<ts::SessionInstance> stream = ts::generate_stream(config);
  ts::save_stream(args.out_path, stream);

  const ts::ConstraintSpec spec = ts::calibrate_targets(stream, config);
  ts::save_constraint_spec(args.spec_out, spec, config.recipe.news_convention);

  if (!args.curve_out.empty()) {
    const ts::RefCtrCurve curve =
        config.curve.ref.empty() ? ts::default_curve(config.m) : config.curve;
    ts::save_curve_csv(args.curve_out, curve);
  }
  if (!args.config_out.empty()) ts::save_generator_config(args.config_out, config);
  return kExitOk;
}

struct LearnArgs {
  std::string stream_path, spec_path, out_path;
  double epsilon = 0.2;
  double nu = 0.0;
  std::string nu_rule = "feasibility";
  int max_iters = 5000;
  double tolerance = 1e-4;
  double lambda_cap = 0.0;
  bool strict = false;
};

int cmd_learn(const LearnArgs& args) {
  const auto stream = ts::load_stream(args.stream_path);
  const ts::ConstraintSpec spec = ts::load_constraint_spec(args.spec_path);
  const int window = ts::learning_window_length(args.epsilon, spec.horizon);
  if (window < 1) throw ts::InvalidInputError("learn: epsilon gives an empty learning window");
  if (int(stream.size()) < window)
    throw ts::InvalidInputError("learn: stream has " + std::to_string(stream.size()) +
                                " sessions, the learning window needs " + std::to_string(window));

  ts::SampledLpConfig lp;
  lp.epsilon = double(window) / double(spec.horizon);
  lp.nu = resolve_nu(args.nu_rule, args.nu, lp.epsilon);
  lp.max_iters = args.max_iters;
  lp.tolerance = args.tolerance;
  lp.lambda_cap = args.lambda_cap;

  const std::span<const ts::SessionInstance> sample(stream.data(), size_t(window));
  const ts::DualSolveReport report = ts::solve_sampled_dual(sample, spec, lp);
  for (const std::string& warning : report.warnings) emit_warning(warning);

  ts::PricesFileMeta meta;
  meta.nu = lp.nu;
  meta.epsilon = lp.epsilon;
  meta.gap = report.gap;
  meta.iterations = report.iterations;
  meta.converged = report.converged;
  meta.likely_infeasible = report.likely_infeasible;
  meta.dual_value = report.dual_value;
  ts::save_prices(args.out_path, report.prices, spec, meta);

  if (args.strict && report.likely_infeasible) {
    emit_error("infeasible", "sampled program is likely infeasible");
    return kExitInfeasible;
  }
  return kExitOk;
}

struct RunArgs {
  std::string stream_path, spec_path, prices_path, out_path, prices_out;
  double epsilon = 0.2;
  double nu = 0.0;
  std::string nu_rule = "feasibility";
  int horizon = 0;
  std::string matcher = "hungarian";
  bool strict = false;
};

int cmd_run(const RunArgs& args) {
  const auto stream = ts::load_stream(args.stream_path);
  const ts::ConstraintSpec spec = ts::load_constraint_spec(args.spec_path);

  ts::EngineConfig config;
  config.horizon = args.horizon > 0 ? args.horizon : spec.horizon;
  config.epsilon = args.epsilon;
  const int window = ts::learning_window_length(config.epsilon, config.horizon);
  config.nu = resolve_nu(args.nu_rule, args.nu, double(window) / double(config.horizon));
  config.matcher =
      args.matcher == "greedy" ? ts::MatcherKind::greedy : ts::MatcherKind::hungarian;

  if (int(stream.size()) < config.horizon)
    throw ts::InvalidInputError("run: stream has " + std::to_string(stream.size()) +
                                " sessions but the horizon is n = " +
                                std::to_string(config.horizon));
  if (int(stream.size()) > config.horizon)
    emit_warning("stream has " + std::to_string(stream.size()) +
                 " sessions; truncating to the horizon n = " + std::to_string(config.horizon));

  std::optional<ts::DualPrices> preset;
  if (!args.prices_path.empty())
    preset = ts::load_prices(args.prices_path, spec).first;

  const ts::RunResult result = ts::run_stream(stream, spec, config, preset);
  ts::save_decisions(args.out_path, result.decisions);

  if (result.solve_report) {
    for (const std::string& warning : result.solve_report->warnings) emit_warning(warning);
    if (!args.prices_out.empty()) {
      ts::PricesFileMeta meta;
      meta.nu = result.final_state.nu;
      meta.epsilon = double(result.final_state.learning_window) / double(config.horizon);
      meta.gap = result.solve_report->gap;
      meta.iterations = result.solve_report->iterations;
      meta.converged = result.solve_report->converged;
      meta.likely_infeasible = result.solve_report->likely_infeasible;
      meta.dual_value = result.solve_report->dual_value;
      ts::save_prices(args.prices_out, result.solve_report->prices, spec, meta);
    }
  }

  if (args.strict && result.final_state.infeasible_flagged) {
    emit_error("infeasible", "sampled program was likely infeasible; served with capped prices");
    return kExitInfeasible;
  }
  return kExitOk;
}

struct EvaluateArgs {
  std::string log_path, stream_path, spec_path, out_path;
  std::string credit = "on";
  bool strict = false;
};

int cmd_evaluate(const EvaluateArgs& args) {
  const auto decisions = ts::load_decisions(args.log_path);
  const auto stream = ts::load_stream(args.stream_path);
  const ts::ConstraintSpec spec = ts::load_constraint_spec(args.spec_path);

  ts::EvaluateOptions options;
  options.credit_learning_phase = args.credit != "off";
  const ts::ExperimentReport report = ts::evaluate_run(decisions, stream, spec, options);
  const std::string text = ts::report_to_json(report);
  if (args.out_path.empty()) {
    std::cout << text;
  } else {
    std::ofstream out(args.out_path, std::ios::binary);
    if (!out) throw ts::IoError("cannot open " + args.out_path + " for writing");
    out << text;
  }

  if (args.strict && !report.feasible) {
    emit_error("infeasible", "run violates at least one traffic-shaping constraint");
    return kExitInfeasible;
  }
  return kExitOk;
}

struct SweepArgs {
  std::string kind, stream_path, spec_path, out_path;
  std::string grid_csv, seeds_csv = "1";
  std::string nu_rule = "fixed";
  double nu = 1.05;
  std::string constraint;
  std::string matcher = "hungarian";
  std::string credit = "on";
  int jobs = 1;
  bool strict = false;
};

int cmd_sweep(const SweepArgs& args) {
  const auto stream = ts::load_stream(args.stream_path);
  const ts::ConstraintSpec spec = ts::load_constraint_spec(args.spec_path);
  const std::vector<uint64_t> seeds = parse_seed_list(args.seeds_csv);

  ts::SweepOptions options;
  options.nu_fixed = args.nu;
  options.jobs = args.jobs;
  options.matcher =
      args.matcher == "greedy" ? ts::MatcherKind::greedy : ts::MatcherKind::hungarian;
  options.credit_learning_phase = args.credit != "off";
  if (args.nu_rule == "feasibility")
    options.nu_rule = ts::NuRule::feasibility;
  else if (args.nu_rule == "objective")
    options.nu_rule = ts::NuRule::objective;
  else if (args.nu_rule == "fixed")
    options.nu_rule = ts::NuRule::fixed;
  else
    throw ts::InvalidInputError("--nu-rule: expected feasibility, objective, or fixed");

  ts::SweepResult sweep;
  if (args.kind == "epsilon") {
    const std::vector<double> grid = parse_double_list(args.grid_csv, "--grid");
    sweep = ts::sweep_epsilon(stream, spec, grid, seeds, options);
  } else if (args.kind == "sample-size") {
    std::vector<int> grid;
    for (double x : parse_double_list(args.grid_csv, "--grid")) {
      if (x < 1.0 || x != std::floor(x))
        throw ts::InvalidInputError("--grid: sample sizes must be positive integers");
      grid.push_back(int(x));
    }
    sweep = ts::sweep_sample_size(stream, spec, grid, seeds, options);
  } else if (args.kind == "tradeoff") {
    int index = 0;
    if (!args.constraint.empty()) {
      index = -1;
      for (int t = 0; t < spec.size(); ++t)
        if (spec.names[t] == args.constraint) index = t;
      if (index < 0)
        throw ts::InvalidInputError("--constraint: no constraint named \"" + args.constraint +
                                    "\"");
    }
    const std::vector<double> grid = parse_double_list(args.grid_csv, "--grid");
    sweep = ts::sweep_tradeoff(stream, spec, index, grid, options);
  } else {
    throw ts::InvalidInputError("--kind: expected epsilon, sample-size, or tradeoff");
  }

  ts::write_sweep_csv(args.out_path, sweep);
  if (args.strict && sweep.any_infeasible()) {
    emit_error("infeasible", "at least one sweep point carries an infeasibility flag");
    return kExitInfeasible;
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Online constrained ranking with learned shadow prices"};
  app.require_subcommand(1);

  GenerateArgs generate_args;
  CLI::App* generate = app.add_subcommand(
      "generate", "Generate a synthetic session stream and a calibrated constraint spec");
  generate->add_option("--config", generate_args.config_path,
                       "Generator config JSON (defaults apply when omitted)");
  generate->add_option("--out", generate_args.out_path, "Output stream (NDJSON)")->required();
  generate->add_option("--spec-out", generate_args.spec_out,
                       "Output constraint spec (JSON)")->required();
  generate->add_option("--curve-out", generate_args.curve_out,
                       "Optional position-curve export (CSV)");
  generate->add_option("--config-out", generate_args.config_out,
                       "Optional echo of the effective generator config");
  generate->add_option("--n", generate_args.n, "Override: number of sessions");
  generate->add_option("--m", generate_args.m, "Override: documents per session");
  generate->add_option("--seed", generate_args.seed, "Override: generator seed");

  LearnArgs learn_args;
  CLI::App* learn = app.add_subcommand(
      "learn", "Solve the sampled dual program on the learning window and save the prices");
  learn->add_option("--stream", learn_args.stream_path, "Session stream (NDJSON)")->required();
  learn->add_option("--spec", learn_args.spec_path, "Constraint spec (JSON)")->required();
  learn->add_option("--epsilon", learn_args.epsilon, "Learning fraction in (0, 1]")->required();
  learn->add_option("--nu", learn_args.nu, "Explicit safety factor (overrides --nu-rule)");
  learn->add_option("--nu-rule", learn_args.nu_rule,
                    "feasibility (1 + 4*eps, default) | objective (1 - eps)")
      ->check(CLI::IsMember({"feasibility", "objective"}));
  learn->add_option("--out", learn_args.out_path, "Output prices (JSON)")->required();
  learn->add_option("--max-iters", learn_args.max_iters, "Solver iteration budget");
  learn->add_option("--tolerance", learn_args.tolerance, "Relative duality-gap tolerance");
  learn->add_option("--lambda-cap", learn_args.lambda_cap,
                    "Price cap (0 selects the data-driven default)");
  learn->add_flag("--strict", learn_args.strict, "Exit 3 when the sampled program is infeasible");

  RunArgs run_args;
  CLI::App* run = app.add_subcommand("run", "Full online loop: learn during the window, then "
                                            "serve price-weighted matchings");
  run->add_option("--stream", run_args.stream_path, "Session stream (NDJSON)")->required();
  run->add_option("--spec", run_args.spec_path, "Constraint spec (JSON)")->required();
  run->add_option("--epsilon", run_args.epsilon, "Learning fraction in [0, 1]");
  run->add_option("--nu", run_args.nu, "Explicit safety factor (overrides --nu-rule)");
  run->add_option("--nu-rule", run_args.nu_rule,
                  "feasibility (1 + 4*eps, default) | objective (1 - eps)")
      ->check(CLI::IsMember({"feasibility", "objective"}));
  run->add_option("--prices", run_args.prices_path,
                  "Serve with these prices instead of solving at the window close");
  run->add_option("--n", run_args.horizon, "Horizon override (default: spec horizon)");
  run->add_option("--out", run_args.out_path, "Output decision log (NDJSON)")->required();
  run->add_option("--prices-out", run_args.prices_out,
                  "Also save the prices solved at the window close");
  run->add_option("--matcher", run_args.matcher, "hungarian | greedy")
      ->check(CLI::IsMember({"hungarian", "greedy"}));
  run->add_flag("--strict", run_args.strict, "Exit 3 when the sampled program was infeasible");

  EvaluateArgs evaluate_args;
  CLI::App* evaluate = app.add_subcommand(
      "evaluate", "Score a decision log: competitive ratio, delivery ratios, hindsight bracket");
  evaluate->add_option("--log", evaluate_args.log_path, "Decision log (NDJSON)")->required();
  evaluate->add_option("--stream", evaluate_args.stream_path, "Session stream (NDJSON)")
      ->required();
  evaluate->add_option("--spec", evaluate_args.spec_path, "Constraint spec (JSON)")->required();
  evaluate->add_option("--out", evaluate_args.out_path,
                       "Output report (JSON); stdout when omitted");
  evaluate->add_option("--credit-learning-phase", evaluate_args.credit,
                       "Count learning-phase deliveries toward targets (on | off)")
      ->check(CLI::IsMember({"on", "off"}));
  evaluate->add_flag("--strict", evaluate_args.strict,
                     "Exit 3 when the run violates a constraint");

  SweepArgs sweep_args;
  CLI::App* sweep = app.add_subcommand("sweep", "Grid experiments: epsilon, sample-size, or "
                                                "trade-off curves as tidy CSV");
  sweep->add_option("--kind", sweep_args.kind, "epsilon | sample-size | tradeoff")->required();
  sweep->add_option("--stream", sweep_args.stream_path, "Session stream (NDJSON)")->required();
  sweep->add_option("--spec", sweep_args.spec_path, "Constraint spec (JSON)")->required();
  sweep->add_option("--grid", sweep_args.grid_csv, "Comma-separated axis values")->required();
  sweep->add_option("--seeds", sweep_args.seeds_csv,
                    "Comma-separated trial seeds (shuffle the arrival order; 0 = as given)");
  sweep->add_option("--nu-rule", sweep_args.nu_rule,
                    "feasibility (1+4e) | objective (1-e) | fixed");
  sweep->add_option("--nu", sweep_args.nu, "Safety factor for --nu-rule fixed");
  sweep->add_option("--constraint", sweep_args.constraint,
                    "Constraint name to scale in a tradeoff sweep");
  sweep->add_option("--matcher", sweep_args.matcher, "hungarian | greedy")
      ->check(CLI::IsMember({"hungarian", "greedy"}));
  sweep->add_option("--credit-learning-phase", sweep_args.credit,
                    "Count learning-phase deliveries toward targets (on | off)")
      ->check(CLI::IsMember({"on", "off"}));
  sweep->add_option("--jobs", sweep_args.jobs, "Parallel sweep points");
  sweep->add_option("--out", sweep_args.out_path, "Output CSV")->required();
  sweep->add_flag("--strict", sweep_args.strict,
                  "Exit 3 when any point carries an infeasibility flag");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    emit_error("usage", e.what());
    return kExitConfig;
  }

  try {
    if (generate->parsed()) return cmd_generate(generate_args);
    if (learn->parsed()) return cmd_learn(learn_args);
    if (run->parsed()) return cmd_run(run_args);
    if (evaluate->parsed()) return cmd_evaluate(evaluate_args);
    if (sweep->parsed()) return cmd_sweep(sweep_args);
    emit_error("usage", "no subcommand given");
    return kExitConfig;
  } catch (const ts::SchemaError& e) {
    emit_error("schema", e.what());
    return kExitIo;
  } catch (const ts::IoError& e) {
    emit_error("io", e.what());
    return kExitIo;
  } catch (const ts::InvalidInputError& e) {
    emit_error("invalid_input", e.what());
    return kExitConfig;
  } catch (const ts::SizeLimitError& e) {
    emit_error("size_limit", e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    emit_error("internal", e.what());
    return 1;
  }
}
