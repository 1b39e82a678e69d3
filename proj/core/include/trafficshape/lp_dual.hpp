#pragma once

#include <span>
#include <string>
#include <vector>

#include "trafficshape/session.hpp"

namespace trafficshape {

// Knobs for the sampled dual solve. epsilon is the sample fraction (the
// targets are scaled to nu * epsilon * b_t), nu the safety factor.
// lambda_cap <= 0 selects the data-driven default
//   1e4 * max_t ( max_k ||C_k||_inf / max(b_t, 1) );
// a price pinned at the cap signals that the sampled primal has no feasible
// point rather than letting the solve run away.
struct SampledLpConfig {
  double epsilon = 1.0;
  double nu = 1.0;
  int max_iters = 5000;
  double tolerance = 1e-4;  // relative duality gap
  double lambda_cap = 0.0;  // <= 0: auto
};

// Value and subgradient of the Lagrangian dual of the sampled primal at a
// fixed price vector:
//   value        = sum_k max_P <C_k + sum_t lambda_t A_kt, P>  -  sum_t lambda_t * nu*eps*b_t
//   delivered[t] = sum_k <A_kt, P_k(lambda)>
//   subgradient[t] = nu*eps*b_t - delivered[t]
// A positive subgradient component means constraint t is under-delivered at
// these prices and its price should rise.
struct DualObjectiveResult {
  double value = 0.0;
  std::vector<double> subgradient;
  std::vector<double> delivered;
  double matching_total = 0.0;  // sum_k of the per-session matching values
};

DualObjectiveResult dual_objective(const DualPrices& prices,
                                   std::span<const SessionInstance> sessions,
                                   const ConstraintSpec& spec, double nu, double epsilon);

struct DualSolveReport {
  DualPrices prices;              // lambda-hat
  double dual_value = 0.0;        // g(lambda-hat), upper bound on the LP optimum
  double best_primal_bound = 0.0; // best feasible integral rounding found (lower bound)
  double gap = 0.0;               // dual_value - best_primal_bound
  int iterations = 0;             // dual objective evaluations
  std::vector<bool> binding;      // delivered ~= scaled target at lambda-hat
  bool converged = false;
  bool likely_infeasible = false; // some price pinned at lambda_cap
  std::vector<double> delivered;  // delivered units at lambda-hat
  double lambda_cap_used = 0.0;
  std::vector<std::string> warnings;
};

// Minimizes the convex piecewise-linear dual over lambda >= 0 using the
// per-session matching oracle: projected subgradient steps first, then
// cutting-plane refinement on the accumulated subgradients. best_primal_bound
// comes from rounding the per-session matchings (with greedy repair when the
// rounding is infeasible), so dual_value >= best_primal_bound always holds.
DualSolveReport solve_sampled_dual(std::span<const SessionInstance> sessions,
                                   const ConstraintSpec& spec, const SampledLpConfig& config);

// Full-data solve: nu = 1, epsilon = 1, unscaled targets. The resulting
// prices are the hindsight prices lambda-star.
DualSolveReport solve_hindsight(std::span<const SessionInstance> sessions,
                                const ConstraintSpec& spec);

}  // namespace trafficshape
