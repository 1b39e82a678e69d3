#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "trafficshape/engine.hpp"

namespace trafficshape {

// Metrics for one full run against its stream and constraint spec.
// hindsight_value is the dual (upper) bound of the full-data program;
// hindsight_lower_bound the rounded integral solution below it, so every
// ratio carries a bracket rather than a point against an inexact denominator.
struct ExperimentReport {
  double total_reward = 0.0;
  double learning_reward = 0.0;
  double serving_reward = 0.0;
  double hindsight_value = 0.0;
  double hindsight_lower_bound = 0.0;
  double competitive_ratio = 0.0;
  double online_performance_ratio = 0.0;
  std::vector<double> delivered;                // across all sessions
  std::vector<double> delivered_serving_only;
  std::vector<double> delivery_ratio;           // delivered / b_t (credit choice applied)
  std::vector<double> delivery_ratio_with_learning;
  std::vector<double> delivery_ratio_serving_only;
  bool feasible = false;  // under the chosen credit convention
  DualPrices hindsight_prices;
  std::vector<std::string> constraint_names;
  int sessions = 0;
  int learning_sessions = 0;
  bool credit_learning_phase = true;
  bool hindsight_converged = false;
};

struct EvaluateOptions {
  // Whether learning-phase deliveries count toward the headline delivery
  // ratios and the feasibility verdict. Both tallies are always reported.
  bool credit_learning_phase = true;
};

// Checks the decision log against the stream (coverage and recomputable
// rewards), solves the hindsight program, and assembles the report.
ExperimentReport evaluate_run(std::span<const ServeDecision> decisions,
                              std::span<const SessionInstance> sessions,
                              const ConstraintSpec& spec, const EvaluateOptions& options = {});

std::string report_to_json(const ExperimentReport& report);

// One sweep sample: named metric values at one axis position for one seed.
struct SweepPoint {
  double axis = 0.0;
  uint64_t seed = 0;
  std::map<std::string, double> metrics;
  bool infeasible_flag = false;
};

struct SweepResult {
  std::string axis_name;
  std::vector<SweepPoint> points;
  bool any_infeasible() const {
    for (const SweepPoint& p : points)
      if (p.infeasible_flag) return true;
    return false;
  }
};

enum class NuRule { feasibility, objective, fixed };  // 1+4e | 1-e | explicit value

struct SweepOptions {
  NuRule nu_rule = NuRule::fixed;
  double nu_fixed = 1.05;
  MatcherKind matcher = MatcherKind::hungarian;
  bool credit_learning_phase = true;
  int jobs = 1;
};

// One full engine run per (epsilon, seed); each seed replays the stream in a
// fresh random arrival order (the random-permutation model) so the sweep can
// report medians and bands instead of a single noisy trajectory.
SweepResult sweep_epsilon(std::span<const SessionInstance> sessions, const ConstraintSpec& spec,
                          std::span<const double> epsilon_grid, std::span<const uint64_t> seeds,
                          const SweepOptions& options = {});

// Sampled program on first n-hat sessions (nu = 1, eps = n-hat / n) per grid
// point and seed: per-session objective, prices, and distance to the
// hindsight prices.
SweepResult sweep_sample_size(std::span<const SessionInstance> sessions,
                              const ConstraintSpec& spec, std::span<const int> nhat_grid,
                              std::span<const uint64_t> seeds, const SweepOptions& options = {});

// Hindsight solve per theta with the designated target scaled by theta;
// reports objective per session and flags infeasibility past the deliverable
// maximum.
SweepResult sweep_tradeoff(std::span<const SessionInstance> sessions, const ConstraintSpec& spec,
                           int constraint_index, std::span<const double> theta_grid,
                           const SweepOptions& options = {});

// Tidy CSV, one row per (axis, metric, seed): "axis,metric,value,seed".
void write_sweep_csv(const std::filesystem::path& path, const SweepResult& sweep);

}  // namespace trafficshape
