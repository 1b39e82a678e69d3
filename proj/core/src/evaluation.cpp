#include "trafficshape/evaluation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <functional>
#include <thread>

#include <json.hpp>

#include "trafficshape/lp_dual.hpp"
#include "trafficshape/matching.hpp"
#include "trafficshape/rng.hpp"

namespace trafficshape {

namespace {

using nlohmann::json;

// Engagement value of the price-optimal assignment for one session.
double priced_session_value(const SessionInstance& session, const DualPrices& prices) {
  std::vector<int> sigma;
  if (session.rank_one) {
    const RankOneStructure& r1 = *session.rank_one;
    std::vector<double> scores(r1.doc_engagement);
    for (int t = 0; t < prices.size(); ++t)
      if (prices.lambda[t] != 0.0)
        for (int d = 0; d < session.m(); ++d)
          scores[d] += prices.lambda[t] * r1.doc_contribution[t][d];
    sigma = rank_one_sort_assignment(scores, r1.curve).sigma;
  } else {
    sigma = hungarian_max_weight(score_matrix(session, prices)).first.sigma;
  }
  return permutation_weight(session.engagement, sigma);
}

double safe_ratio(double num, double den) {
  if (std::abs(den) < 1e-300) return num == 0.0 ? 1.0 : 0.0;
  return num / den;
}

// Fixed-size worker pool over point indices; results land by index so the
// assembled output does not depend on scheduling.
void parallel_for(int count, int jobs, const std::function<void(int)>& body) {
  jobs = std::max(1, jobs);
  if (jobs == 1 || count <= 1) {
    for (int i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> workers;
  const int worker_count = std::min(jobs, count);
  workers.reserve(worker_count);
  std::vector<std::exception_ptr> errors(worker_count);
  for (int w = 0; w < worker_count; ++w) {
    workers.emplace_back([&, w] {
      try {
        for (int i = next.fetch_add(1); i < count; i = next.fetch_add(1)) body(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (std::thread& t : workers) t.join();
  for (const std::exception_ptr& e : errors)
    if (e) std::rethrow_exception(e);
}

// Arrival order for a trial; seed 0 keeps the stream order as given.
std::vector<int> arrival_order(size_t n, uint64_t seed) {
  if (seed == 0) {
    std::vector<int> order(n);
    for (size_t k = 0; k < n; ++k) order[k] = int(k);
    return order;
  }
  Rng rng(seed);
  return rng.permutation(int(n));
}

std::vector<SessionInstance> permuted(std::span<const SessionInstance> sessions,
                                      std::span<const int> order) {
  std::vector<SessionInstance> out;
  out.reserve(sessions.size());
  for (int k : order) out.push_back(sessions[k]);
  return out;
}

}  // namespace

ExperimentReport evaluate_run(std::span<const ServeDecision> decisions,
                              std::span<const SessionInstance> sessions,
                              const ConstraintSpec& spec, const EvaluateOptions& options) {
  spec.validate();
  if (decisions.size() != sessions.size())
    throw InvalidInputError("evaluate_run: log has " + std::to_string(decisions.size()) +
                            " decisions for " + std::to_string(sessions.size()) + " sessions");
  const int T = spec.size();

  ExperimentReport report;
  report.constraint_names = spec.names;
  report.sessions = int(sessions.size());
  report.credit_learning_phase = options.credit_learning_phase;
  report.delivered.assign(T, 0.0);
  report.delivered_serving_only.assign(T, 0.0);

  for (size_t k = 0; k < decisions.size(); ++k) {
    const ServeDecision& d = decisions[k];
    const SessionInstance& s = sessions[k];
    if (d.session_id != s.id)
      throw InvalidInputError("evaluate_run: decision " + std::to_string(k) + " is for session " +
                              std::to_string(d.session_id) + " but the stream has " +
                              std::to_string(s.id));
    if (int(d.assignment.sigma.size()) != s.m() || int(d.delivered.size()) != T)
      throw InvalidInputError("evaluate_run: decision " + std::to_string(k) +
                              " does not match the session/spec dimensions");
    std::vector<char> seen(s.m(), 0);
    for (int slot : d.assignment.sigma) {
      if (slot < 0 || slot >= s.m() || seen[slot])
        throw InvalidInputError("evaluate_run: decision " + std::to_string(k) +
                                " sigma is not a permutation");
      seen[slot] = 1;
    }

    const double reward = permutation_weight(s.engagement, d.assignment.sigma);
    if (std::abs(reward - d.reward) > 1e-9 * std::max(1.0, std::abs(reward)))
      throw InvalidInputError("evaluate_run: decision " + std::to_string(k) +
                              " reward does not recompute from the session");
    report.total_reward += reward;
    const bool learning = d.phase == Phase::learning;
    if (learning) {
      ++report.learning_sessions;
      report.learning_reward += reward;
    } else {
      report.serving_reward += reward;
    }
    for (int t = 0; t < T; ++t) {
      const double units = permutation_weight(s.contributions[t], d.assignment.sigma);
      if (std::abs(units - d.delivered[t]) > 1e-9 * std::max(1.0, std::abs(units)))
        throw InvalidInputError("evaluate_run: decision " + std::to_string(k) +
                                " delivered[" + std::to_string(t) +
                                "] does not recompute from the session");
      report.delivered[t] += units;
      if (!learning) report.delivered_serving_only[t] += units;
    }
  }

  const DualSolveReport hindsight = solve_hindsight(sessions, spec);
  report.hindsight_value = hindsight.dual_value;
  report.hindsight_lower_bound = hindsight.best_primal_bound;
  report.hindsight_prices = hindsight.prices;
  report.hindsight_converged = hindsight.converged;
  report.competitive_ratio = safe_ratio(report.total_reward, report.hindsight_value);

  double serving_hindsight = 0.0;
  for (size_t k = 0; k < decisions.size(); ++k)
    if (decisions[k].phase == Phase::serving)
      serving_hindsight += priced_session_value(sessions[k], hindsight.prices);
  report.online_performance_ratio =
      report.sessions == report.learning_sessions
          ? 1.0
          : safe_ratio(report.serving_reward, serving_hindsight);

  report.delivery_ratio_with_learning.assign(T, 1.0);
  report.delivery_ratio_serving_only.assign(T, 1.0);
  for (int t = 0; t < T; ++t) {
    if (spec.targets[t] > 0.0) {
      report.delivery_ratio_with_learning[t] = report.delivered[t] / spec.targets[t];
      report.delivery_ratio_serving_only[t] =
          report.delivered_serving_only[t] / spec.targets[t];
    }
  }
  report.delivery_ratio = options.credit_learning_phase ? report.delivery_ratio_with_learning
                                                        : report.delivery_ratio_serving_only;
  report.feasible = true;
  for (int t = 0; t < T; ++t) {
    const double got = options.credit_learning_phase ? report.delivered[t]
                                                     : report.delivered_serving_only[t];
    if (got < spec.targets[t] - 1e-9 * std::max(1.0, spec.targets[t])) report.feasible = false;
  }
  return report;
}

std::string report_to_json(const ExperimentReport& report) {
  json j;
  j["total_reward"] = report.total_reward;
  j["learning_reward"] = report.learning_reward;
  j["serving_reward"] = report.serving_reward;
  j["hindsight_value"] = report.hindsight_value;
  j["hindsight_lower_bound"] = report.hindsight_lower_bound;
  j["hindsight_converged"] = report.hindsight_converged;
  j["competitive_ratio"] = report.competitive_ratio;
  j["online_performance_ratio"] = report.online_performance_ratio;
  j["feasible"] = report.feasible;
  json prices = json::object();
  json ratio = json::object(), ratio_learn = json::object(), ratio_serve = json::object();
  json delivered = json::object(), delivered_serving = json::object();
  for (size_t t = 0; t < report.constraint_names.size(); ++t) {
    const std::string& name = report.constraint_names[t];
    prices[name] = report.hindsight_prices.lambda[t];
    ratio[name] = report.delivery_ratio[t];
    ratio_learn[name] = report.delivery_ratio_with_learning[t];
    ratio_serve[name] = report.delivery_ratio_serving_only[t];
    delivered[name] = report.delivered[t];
    delivered_serving[name] = report.delivered_serving_only[t];
  }
  j["hindsight_prices"] = std::move(prices);
  j["delivery_ratio"] = std::move(ratio);
  j["delivery_ratio_with_learning"] = std::move(ratio_learn);
  j["delivery_ratio_serving_only"] = std::move(ratio_serve);
  j["delivered"] = std::move(delivered);
  j["delivered_serving_only"] = std::move(delivered_serving);
  j["config"] = {{"sessions", report.sessions},
                 {"learning_sessions", report.learning_sessions},
                 {"credit_learning_phase", report.credit_learning_phase}};
  return j.dump(2) + "\n";
}

SweepResult sweep_epsilon(std::span<const SessionInstance> sessions, const ConstraintSpec& spec,
                          std::span<const double> epsilon_grid, std::span<const uint64_t> seeds,
                          const SweepOptions& options) {
  spec.validate();
  const int T = spec.size();
  if (sessions.empty()) throw InvalidInputError("sweep_epsilon: empty stream");

  // Hindsight quantities are invariant under arrival order: solve once.
  const DualSolveReport hindsight = solve_hindsight(sessions, spec);
  std::vector<double> priced_value(sessions.size());
  for (size_t k = 0; k < sessions.size(); ++k)
    priced_value[k] = priced_session_value(sessions[k], hindsight.prices);

  struct Job {
    double epsilon;
    uint64_t seed;
  };
  std::vector<Job> grid;
  for (double epsilon : epsilon_grid)
    for (uint64_t seed : seeds) grid.push_back({epsilon, seed});

  SweepResult sweep;
  sweep.axis_name = "epsilon";
  sweep.points.resize(grid.size());

  parallel_for(int(grid.size()), options.jobs, [&](int i) {
    const Job job = grid[i];
    const std::vector<int> order = arrival_order(sessions.size(), job.seed);
    std::vector<SessionInstance> ordered = permuted(sessions, order);

    EngineConfig config;
    config.horizon = int(ordered.size());
    config.epsilon = job.epsilon;
    config.matcher = options.matcher;
    switch (options.nu_rule) {
      case NuRule::feasibility: config.nu = 1.0 + 4.0 * job.epsilon; break;
      case NuRule::objective: config.nu = 1.0 - job.epsilon; break;
      case NuRule::fixed: config.nu = options.nu_fixed; break;
    }
    if (config.nu <= 0.0) config.nu = 1e-3;
    RunResult run = run_stream(ordered, spec, config);

    double total = 0.0, serving = 0.0, serving_hindsight = 0.0;
    std::vector<double> delivered(T, 0.0), delivered_serving(T, 0.0);
    for (size_t k = 0; k < run.decisions.size(); ++k) {
      const ServeDecision& d = run.decisions[k];
      total += d.reward;
      const bool is_serving = d.phase == Phase::serving;
      if (is_serving) {
        serving += d.reward;
        serving_hindsight += priced_value[order[k]];
      }
      for (int t = 0; t < T; ++t) {
        delivered[t] += d.delivered[t];
        if (is_serving) delivered_serving[t] += d.delivered[t];
      }
    }

    SweepPoint point;
    point.axis = job.epsilon;
    point.seed = job.seed;
    point.infeasible_flag = run.final_state.infeasible_flagged;
    point.metrics["competitive_ratio"] = safe_ratio(total, hindsight.dual_value);
    point.metrics["online_performance_ratio"] =
        serving_hindsight == 0.0 && serving == 0.0 ? 1.0
                                                   : safe_ratio(serving, serving_hindsight);
    bool feasible = true;
    for (int t = 0; t < T; ++t) {
      const double got = options.credit_learning_phase ? delivered[t] : delivered_serving[t];
      const double ratio = spec.targets[t] > 0.0 ? got / spec.targets[t] : 1.0;
      point.metrics["delivery_ratio_" + spec.names[t]] = ratio;
      if (got < spec.targets[t] - 1e-9 * std::max(1.0, spec.targets[t])) feasible = false;
    }
    point.metrics["feasible"] = feasible ? 1.0 : 0.0;
    sweep.points[i] = std::move(point);
  });
  return sweep;
}

SweepResult sweep_sample_size(std::span<const SessionInstance> sessions,
                              const ConstraintSpec& spec, std::span<const int> nhat_grid,
                              std::span<const uint64_t> seeds, const SweepOptions& options) {
  spec.validate();
  if (sessions.empty()) throw InvalidInputError("sweep_sample_size: empty stream");
  const int n = int(sessions.size());
  for (int nhat : nhat_grid)
    if (nhat < 1 || nhat > n)
      throw InvalidInputError("sweep_sample_size: n-hat " + std::to_string(nhat) +
                              " outside [1, " + std::to_string(n) + "]");

  const DualSolveReport hindsight = solve_hindsight(sessions, spec);
  double star_norm = 0.0;
  for (double x : hindsight.prices.lambda) star_norm = std::max(star_norm, std::abs(x));

  struct Job {
    int nhat;
    uint64_t seed;
  };
  std::vector<Job> grid;
  for (int nhat : nhat_grid)
    for (uint64_t seed : seeds) grid.push_back({nhat, seed});

  SweepResult sweep;
  sweep.axis_name = "sample_size";
  sweep.points.resize(grid.size());

  parallel_for(int(grid.size()), options.jobs, [&](int i) {
    const Job job = grid[i];
    const std::vector<int> order = arrival_order(sessions.size(), job.seed);
    std::vector<SessionInstance> ordered = permuted(sessions, order);
    ordered.resize(job.nhat);

    SampledLpConfig lp;
    lp.nu = 1.0;
    lp.epsilon = double(job.nhat) / double(n);
    DualSolveReport report = solve_sampled_dual(ordered, spec, lp);

    SweepPoint point;
    point.axis = double(job.nhat);
    point.seed = job.seed;
    point.infeasible_flag = report.likely_infeasible;
    point.metrics["objective_per_session"] = report.dual_value / double(job.nhat);
    double dist = 0.0;
    for (int t = 0; t < spec.size(); ++t) {
      point.metrics["lambda_" + spec.names[t]] = report.prices.lambda[t];
      dist = std::max(dist, std::abs(report.prices.lambda[t] - hindsight.prices.lambda[t]));
    }
    point.metrics["price_distance"] = dist;
    point.metrics["price_distance_rel"] = star_norm > 0.0 ? dist / star_norm : dist;
    sweep.points[i] = std::move(point);
  });
  return sweep;
}

SweepResult sweep_tradeoff(std::span<const SessionInstance> sessions, const ConstraintSpec& spec,
                           int constraint_index, std::span<const double> theta_grid,
                           const SweepOptions& options) {
  spec.validate();
  if (sessions.empty()) throw InvalidInputError("sweep_tradeoff: empty stream");
  if (constraint_index < 0 || constraint_index >= spec.size())
    throw InvalidInputError("sweep_tradeoff: constraint index out of range");

  SweepResult sweep;
  sweep.axis_name = "theta";
  sweep.points.resize(theta_grid.size());

  parallel_for(int(theta_grid.size()), options.jobs, [&](int i) {
    const double theta = theta_grid[i];
    if (theta < 0.0) throw InvalidInputError("sweep_tradeoff: theta must be >= 0");
    ConstraintSpec scaled = spec;
    scaled.targets[constraint_index] *= theta;
    DualSolveReport report = solve_hindsight(sessions, scaled);

    SweepPoint point;
    point.axis = theta;
    point.seed = 0;
    point.infeasible_flag = report.likely_infeasible;
    point.metrics["objective_per_session"] = report.dual_value / double(sessions.size());
    point.metrics["infeasible"] = report.likely_infeasible ? 1.0 : 0.0;
    for (int t = 0; t < spec.size(); ++t)
      point.metrics["lambda_" + spec.names[t]] = report.prices.lambda[t];
    sweep.points[i] = std::move(point);
  });
  return sweep;
}

void write_sweep_csv(const std::filesystem::path& path, const SweepResult& sweep) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "axis,metric,value,seed\n";
  for (const SweepPoint& point : sweep.points) {
    for (const auto& [metric, value] : point.metrics) {
      out << json(point.axis).dump() << "," << metric << "," << json(value).dump() << ","
          << point.seed << "\n";
    }
  }
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace trafficshape
