// Solver for the sampled dual of the traffic-shaping linear program.
//
// The primal assigns one permutation per session to maximize total engagement
// subject to lower-bound delivery constraints
//     sum_k <A_kt, P_k> >= nu * eps * b_t,   t = 1..T.
// Dualizing the delivery constraints gives the convex piecewise-linear
//     g(lambda) = sum_k max_P <C_k + sum_t lambda_t A_kt, P> - sum_t lambda_t nu eps b_t,
// whose inner maximizations decouple per session and are attained at
// permutation matrices, i.e. each one is a max-weight matching. We minimize
// g over lambda >= 0:
//
//   1. projected subgradient phase (Polyak step once a feasible integral
//      rounding provides a target, diminishing step before that);
//   2. cutting-plane phase on the accumulated minorants
//          g(x) >= g(lambda_i) + grad_i' (x - lambda_i),
//      with the master problem solved exactly by vertex enumeration over the
//      box [0, cap]^T (T is small; every vertex of the epigraph LP is the
//      solution of T+1 tight constraints). The master minimum is a certified
//      lower bound on min g when it is attained strictly inside the box, so
//      the phase stops with a proven gap.
//
// Feasible integral candidates for the primal bound are obtained by reusing
// the per-session matchings at the current prices and, when the rounding
// under-delivers, greedily re-matching the sessions with the best
// delivered-gain per unit of engagement given up.

#include "trafficshape/lp_dual.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "trafficshape/matching.hpp"

namespace trafficshape {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Per-evaluation detail the solver needs beyond the public result: the
// chosen permutation per session (flattened) for rounding and repair.
struct InnerEval {
  DualObjectiveResult objective;
  std::vector<int> sigma_flat;
};

std::vector<double> scaled_targets(const ConstraintSpec& spec, double nu, double epsilon) {
  std::vector<double> out(spec.targets.size());
  for (size_t t = 0; t < out.size(); ++t) out[t] = nu * epsilon * spec.targets[t];
  return out;
}

InnerEval evaluate_point(std::span<const double> lambda,
                         std::span<const SessionInstance> sessions,
                         std::span<const double> targets, bool keep_sigmas) {
  const int T = int(targets.size());
  InnerEval eval;
  eval.objective.delivered.assign(T, 0.0);
  eval.objective.subgradient.assign(T, 0.0);

  std::vector<double> doc_scores;
  for (const SessionInstance& session : sessions) {
    const int m = session.m();
    Assignment assignment;
    if (session.rank_one) {
      const RankOneStructure& r1 = *session.rank_one;
      doc_scores.assign(r1.doc_engagement.begin(), r1.doc_engagement.end());
      for (int t = 0; t < T; ++t)
        if (lambda[t] != 0.0)
          for (int d = 0; d < m; ++d) doc_scores[d] += lambda[t] * r1.doc_contribution[t][d];
      assignment = rank_one_sort_assignment(doc_scores, r1.curve);
    } else {
      Matrix score = session.engagement;
      for (int t = 0; t < T; ++t)
        if (lambda[t] != 0.0) score.add_scaled(session.contributions[t], lambda[t]);
      assignment = hungarian_max_weight(score).first;
    }

    // Accounting always uses the original matrices so the factored fast path
    // and the exact path report identical units for the same sigma.
    double session_value = permutation_weight(session.engagement, assignment.sigma);
    for (int t = 0; t < T; ++t) {
      const double units = permutation_weight(session.contributions[t], assignment.sigma);
      eval.objective.delivered[t] += units;
      session_value += lambda[t] * units;
    }
    eval.objective.matching_total += session_value;
    if (keep_sigmas)
      eval.sigma_flat.insert(eval.sigma_flat.end(), assignment.sigma.begin(),
                             assignment.sigma.end());
  }

  eval.objective.value = eval.objective.matching_total;
  for (int t = 0; t < T; ++t) {
    eval.objective.value -= lambda[t] * targets[t];
    eval.objective.subgradient[t] = targets[t] - eval.objective.delivered[t];
  }
  return eval;
}

// ---------------------------------------------------------------------------
// Cutting-plane master: minimize max_i (value_i + grad_i'(x - point_i)) over
// the box [0, hi]^T.

struct Cut {
  double value;
  std::vector<double> point;
  std::vector<double> grad;  // gradient of g's active piece = delivered - target

  double at(std::span<const double> x) const {
    double v = value;
    for (size_t t = 0; t < point.size(); ++t) v += grad[t] * (x[t] - point[t]);
    return v;
  }
};

double model_value(std::span<const Cut> cuts, std::span<const double> x) {
  double v = -kInf;
  for (const Cut& c : cuts) v = std::max(v, c.at(x));
  return v;
}

// The master problem is tiny (dims = T + 1 <= 5); elimination runs on stack
// storage because it sits in the innermost subset-enumeration loop.
constexpr int kMaxMasterDims = 5;

// Gaussian elimination with partial pivoting on an augmented [a | b] system;
// returns false when singular.
bool solve_linear_small(double a[kMaxMasterDims][kMaxMasterDims + 1], int n, double* x) {
  for (int col = 0; col < n; ++col) {
    int pivot = col;
    for (int r = col + 1; r < n; ++r)
      if (std::abs(a[r][col]) > std::abs(a[pivot][col])) pivot = r;
    if (std::abs(a[pivot][col]) < 1e-12) return false;
    if (pivot != col)
      for (int c = 0; c <= n; ++c) std::swap(a[pivot][c], a[col][c]);
    for (int r = col + 1; r < n; ++r) {
      const double f = a[r][col] / a[col][col];
      if (f == 0.0) continue;
      for (int c = col; c <= n; ++c) a[r][c] -= f * a[col][c];
    }
  }
  for (int r = n - 1; r >= 0; --r) {
    double v = a[r][n];
    for (int c = r + 1; c < n; ++c) v -= a[r][c] * x[c];
    x[r] = v / a[r][r];
  }
  return true;
}

struct MasterSolution {
  std::vector<double> point;
  double value = kInf;
  bool found = false;
  // True when no trust wall is active at the argmin, i.e. every active bound
  // is a real domain bound (0 or the cap). The model minimum then lower-bounds
  // min g over the whole domain.
  bool certified = false;
};

// One-dimensional master over [lo, hi]: the lower envelope minimum lies at a
// box endpoint or a pairwise intersection of cut lines.
MasterSolution master_minimize_1d(std::span<const Cut> cuts, double lo, double hi, double cap) {
  std::vector<double> candidates{lo, hi};
  for (size_t i = 0; i < cuts.size(); ++i)
    for (size_t j = i + 1; j < cuts.size(); ++j) {
      const double gi = cuts[i].grad[0], gj = cuts[j].grad[0];
      if (gi == gj) continue;
      const double ci = cuts[i].value - gi * cuts[i].point[0];
      const double cj = cuts[j].value - gj * cuts[j].point[0];
      const double x = (cj - ci) / (gi - gj);
      if (x > lo && x < hi) candidates.push_back(x);
    }
  MasterSolution best;
  for (double x : candidates) {
    const double v = model_value(cuts, std::span<const double>(&x, 1));
    if (!best.found || v < best.value - 1e-15 ||
        (std::abs(v - best.value) <= 1e-15 && x < best.point[0])) {
      best.point = {x};
      best.value = v;
      best.found = true;
    }
  }
  if (best.found) {
    const double x = best.point[0];
    const bool lower_wall = x <= lo + 1e-12 && lo > 0.0;
    const bool upper_wall = x >= hi - 1e-12 && hi < cap;
    best.certified = !lower_wall && !upper_wall;
  }
  return best;
}

// General small-T master: enumerate vertices of the epigraph LP
//   min z  s.t.  z >= cut_i(x),  lo_t <= x_t <= hi_t
// as solutions of T+1 tight constraints.
MasterSolution master_minimize_enum(std::span<const Cut> cuts, std::span<const double> lo,
                                    std::span<const double> hi, double cap) {
  const int T = int(hi.size());
  const int dims = T + 1;  // (x, z)
  const int num_rows = int(cuts.size()) + 2 * T;

  // Row encoding in (x, z): cut i -> grad_i' x - z = grad_i' p_i - value_i;
  // bound rows fix x_t at lo_t or hi_t.
  auto fill_row = [&](int row, double* coeffs, double& rhs) {
    for (int c = 0; c < dims; ++c) coeffs[c] = 0.0;
    if (row < int(cuts.size())) {
      const Cut& c = cuts[row];
      double r = -c.value;
      for (int t = 0; t < T; ++t) {
        coeffs[t] = c.grad[t];
        r += c.grad[t] * c.point[t];
      }
      coeffs[T] = -1.0;
      rhs = r;
    } else {
      const int b = row - int(cuts.size());
      const int t = b / 2;
      coeffs[t] = 1.0;
      rhs = (b % 2 == 0) ? lo[t] : hi[t];
    }
  };

  MasterSolution best;
  if (num_rows < dims || dims > kMaxMasterDims) return best;
  int pick[kMaxMasterDims];
  std::iota(pick, pick + dims, 0);
  double a[kMaxMasterDims][kMaxMasterDims + 1];
  double x[kMaxMasterDims];

  for (;;) {
    for (int i = 0; i < dims; ++i) fill_row(pick[i], a[i], a[i][dims]);
    if (solve_linear_small(a, dims, x)) {
      bool feasible = true;
      for (int t = 0; feasible && t < T; ++t) {
        const double slack = std::max(1e-7, 1e-9 * std::max(std::abs(lo[t]), std::abs(hi[t])));
        if (x[t] < lo[t] - slack || x[t] > hi[t] + slack) feasible = false;
      }
      if (feasible) {
        const double scale = 1.0 + std::abs(x[T]);
        for (const Cut& c : cuts) {
          if (c.at(std::span<const double>(x, size_t(T))) > x[T] + 1e-7 * scale) {
            feasible = false;
            break;
          }
        }
      }
      if (feasible) {
        const bool better =
            !best.found || x[T] < best.value - 1e-12 ||
            (x[T] <= best.value + 1e-12 &&
             std::lexicographical_compare(x, x + T, best.point.begin(), best.point.end()));
        if (better) {
          best.point.assign(x, x + T);
          best.value = x[T];
          best.found = true;
        }
      }
    }
    // next lexicographic combination
    int i = dims - 1;
    while (i >= 0 && pick[i] == num_rows - dims + i) --i;
    if (i < 0) break;
    ++pick[i];
    for (int j = i + 1; j < dims; ++j) pick[j] = pick[j - 1] + 1;
  }

  if (best.found) {
    best.certified = true;
    for (int t = 0; t < T; ++t) {
      best.point[t] = std::clamp(best.point[t], lo[t], hi[t]);
      const double width = hi[t] - lo[t];
      const bool lower_wall = best.point[t] <= lo[t] + 1e-9 * width && lo[t] > 0.0;
      const bool upper_wall = best.point[t] >= hi[t] - 1e-9 * width && hi[t] < cap;
      if (lower_wall || upper_wall) best.certified = false;
    }
  }
  return best;
}

MasterSolution master_minimize(std::span<const Cut> cuts, std::span<const double> lo,
                               std::span<const double> hi, double cap) {
  if (hi.size() == 1) return master_minimize_1d(cuts, lo[0], hi[0], cap);
  return master_minimize_enum(cuts, lo, hi, cap);
}

// Keep the bundle small enough for vertex enumeration: cuts active at the
// incumbent survive, the rest age out oldest-first.
void prune_cuts(std::vector<Cut>& cuts, std::span<const double> incumbent, size_t cap) {
  if (cuts.size() <= cap) return;
  const double at_incumbent = model_value(cuts, incumbent);
  std::vector<char> kept(cuts.size(), 0);
  size_t count = 0;
  for (size_t i = 0; i < cuts.size(); ++i)
    if (cuts[i].at(incumbent) >= at_incumbent - 1e-9 * (1.0 + std::abs(at_incumbent))) {
      kept[i] = 1;
      ++count;
    }
  for (size_t i = cuts.size(); i-- > 0 && count < cap;)
    if (!kept[i]) {
      kept[i] = 1;
      ++count;
    }
  std::vector<Cut> pruned;
  pruned.reserve(count);
  for (size_t i = 0; i < cuts.size(); ++i)
    if (kept[i]) pruned.push_back(std::move(cuts[i]));
  cuts = std::move(pruned);
}

// ---------------------------------------------------------------------------
// Primal rounding: score the per-session matchings as an integral solution;
// when under-delivered, re-match sessions toward the worst constraint in
// order of delivered-gain per unit of engagement lost.

struct PrimalCandidate {
  double value = -kInf;
  bool feasible = false;
};

PrimalCandidate round_primal(const InnerEval& eval, std::span<const SessionInstance> sessions,
                             std::span<const double> targets) {
  const int T = int(targets.size());
  const int n = int(sessions.size());
  PrimalCandidate out;
  if (eval.sigma_flat.empty() && n > 0) return out;

  std::vector<std::vector<int>> sigmas(n);
  std::vector<double> delivered(T, 0.0);
  double reward = 0.0;
  {
    size_t off = 0;
    for (int k = 0; k < n; ++k) {
      const int m = sessions[k].m();
      sigmas[k].assign(eval.sigma_flat.begin() + off, eval.sigma_flat.begin() + off + m);
      off += m;
      reward += permutation_weight(sessions[k].engagement, sigmas[k]);
      for (int t = 0; t < T; ++t)
        delivered[t] += permutation_weight(sessions[k].contributions[t], sigmas[k]);
    }
  }

  const double slack = 1e-9;
  auto worst_constraint = [&]() {
    int worst = -1;
    double worst_short = slack;
    for (int t = 0; t < T; ++t) {
      const double shortfall = targets[t] - delivered[t];
      if (shortfall > worst_short) {
        worst_short = shortfall;
        worst = t;
      }
    }
    return worst;
  };

  for (int pass = 0; pass < 4 * std::max(T, 1); ++pass) {
    const int t_star = worst_constraint();
    if (t_star < 0) break;

    struct Option {
      int session;
      double gain, cost;
      std::vector<int> sigma;
    };
    std::vector<Option> options;
    for (int k = 0; k < n; ++k) {
      Assignment alt;
      if (sessions[k].rank_one)
        alt = rank_one_sort_assignment(sessions[k].rank_one->doc_contribution[t_star],
                                       sessions[k].rank_one->curve);
      else
        alt = hungarian_max_weight(sessions[k].contributions[t_star]).first;
      const double gain = permutation_weight(sessions[k].contributions[t_star], alt.sigma) -
                          permutation_weight(sessions[k].contributions[t_star], sigmas[k]);
      if (gain <= slack) continue;
      const double cost = permutation_weight(sessions[k].engagement, sigmas[k]) -
                          permutation_weight(sessions[k].engagement, alt.sigma);
      options.push_back({k, gain, cost, std::move(alt.sigma)});
    }
    if (options.empty()) return out;  // cannot repair
    std::sort(options.begin(), options.end(), [](const Option& a, const Option& b) {
      const double ra = a.cost <= 0.0 ? kInf : a.gain / a.cost;
      const double rb = b.cost <= 0.0 ? kInf : b.gain / b.cost;
      if (ra != rb) return ra > rb;
      return a.session < b.session;
    });

    double shortfall = targets[t_star] - delivered[t_star];
    for (const Option& opt : options) {
      if (shortfall <= slack) break;
      reward -= permutation_weight(sessions[opt.session].engagement, sigmas[opt.session]);
      for (int t = 0; t < T; ++t)
        delivered[t] -=
            permutation_weight(sessions[opt.session].contributions[t], sigmas[opt.session]);
      sigmas[opt.session] = opt.sigma;
      reward += permutation_weight(sessions[opt.session].engagement, sigmas[opt.session]);
      for (int t = 0; t < T; ++t)
        delivered[t] +=
            permutation_weight(sessions[opt.session].contributions[t], sigmas[opt.session]);
      shortfall = targets[t_star] - delivered[t_star];
    }
    if (shortfall > slack) return out;
  }

  for (int t = 0; t < T; ++t)
    if (delivered[t] < targets[t] - slack) return out;
  out.feasible = true;
  out.value = reward;
  return out;
}

double default_lambda_cap(std::span<const SessionInstance> sessions, const ConstraintSpec& spec) {
  double max_c = 0.0;
  for (const SessionInstance& s : sessions) max_c = std::max(max_c, s.engagement.max_abs());
  double cap = 0.0;
  for (double b : spec.targets) cap = std::max(cap, max_c / std::max(b, 1.0));
  return 1e4 * std::max(cap, 1.0);
}

// Largest single-session contribution per constraint; sets the scale of the
// binding-detection slack (at most ~T sessions sit on a fractional boundary
// at an LP optimum, so an integral evaluation can miss the target by a few
// sessions' worth of units).
std::vector<double> session_contribution_peaks(std::span<const SessionInstance> sessions, int T) {
  std::vector<double> peaks(T, 0.0);
  for (const SessionInstance& s : sessions)
    for (int t = 0; t < T; ++t) {
      double peak;
      if (s.rank_one)
        peak = rank_one_sort_assignment(s.rank_one->doc_contribution[t], s.rank_one->curve).value;
      else
        peak = hungarian_max_weight(s.contributions[t]).first.value;
      peaks[t] = std::max(peaks[t], peak);
    }
  return peaks;
}

}  // namespace

DualObjectiveResult dual_objective(const DualPrices& prices,
                                   std::span<const SessionInstance> sessions,
                                   const ConstraintSpec& spec, double nu, double epsilon) {
  prices.validate();
  if (prices.size() != spec.size())
    throw InvalidInputError("dual_objective: price vector length " +
                            std::to_string(prices.size()) + " does not match spec (" +
                            std::to_string(spec.size()) + ")");
  for (const SessionInstance& s : sessions)
    if (s.num_constraints() != spec.size())
      throw InvalidInputError("dual_objective: session " + std::to_string(s.id) + " has " +
                              std::to_string(s.num_constraints()) +
                              " constraint matrices, spec has " + std::to_string(spec.size()));
  const std::vector<double> targets = scaled_targets(spec, nu, epsilon);
  return evaluate_point(prices.lambda, sessions, targets, /*keep_sigmas=*/false).objective;
}

DualSolveReport solve_sampled_dual(std::span<const SessionInstance> sessions,
                                   const ConstraintSpec& spec, const SampledLpConfig& config) {
  spec.validate();
  if (sessions.empty()) throw InvalidInputError("solve_sampled_dual: no sessions");
  if (!(config.epsilon > 0.0) || config.epsilon > 1.0)
    throw InvalidInputError("solve_sampled_dual: epsilon must be in (0, 1]");
  if (!(config.nu > 0.0)) throw InvalidInputError("solve_sampled_dual: nu must be > 0");
  for (const SessionInstance& s : sessions)
    if (s.num_constraints() != spec.size())
      throw InvalidInputError("solve_sampled_dual: session " + std::to_string(s.id) +
                              " constraint count does not match spec");

  const int T = spec.size();
  DualSolveReport report;
  if (config.epsilon > 1.0 / 3.0 + 1e-12 && config.epsilon < 1.0)
    report.warnings.push_back("epsilon above 1/3 is outside the theory regime");

  const std::vector<double> targets = scaled_targets(spec, config.nu, config.epsilon);

  if (T == 0) {
    InnerEval eval = evaluate_point({}, sessions, targets, /*keep_sigmas=*/false);
    report.dual_value = eval.objective.value;
    report.best_primal_bound = eval.objective.value;  // matchings are trivially feasible
    report.gap = 0.0;
    report.iterations = 1;
    report.converged = true;
    return report;
  }

  const double cap =
      config.lambda_cap > 0.0 ? config.lambda_cap : default_lambda_cap(sessions, spec);
  report.lambda_cap_used = cap;

  std::vector<Cut> cuts;
  InnerEval current;
  double best_value = kInf;
  std::vector<double> best_lambda(T, 0.0);
  InnerEval best_eval;
  double best_primal = -kInf;
  int evals = 0;

  auto evaluate = [&](std::span<const double> point) {
    current = evaluate_point(point, sessions, targets, /*keep_sigmas=*/true);
    ++evals;
    Cut cut;
    cut.value = current.objective.value;
    cut.point.assign(point.begin(), point.end());
    cut.grad.resize(T);
    for (int t = 0; t < T; ++t) cut.grad[t] = -current.objective.subgradient[t];
    cuts.push_back(std::move(cut));
    if (current.objective.value < best_value) {
      best_value = current.objective.value;
      best_lambda.assign(point.begin(), point.end());
      best_eval = current;
    }
  };

  auto try_primal = [&]() {
    PrimalCandidate candidate = round_primal(current, sessions, targets);
    if (candidate.feasible) best_primal = std::max(best_primal, candidate.value);
  };

  auto rel_gap = [&]() {
    return (best_value - best_primal) / std::max(1.0, std::abs(best_value));
  };

  // Delivered units are nondecreasing in each price; a constraint still
  // under-delivered with its price at the cap can never be met.
  bool cap_infeasible = false;
  auto hopeless = [&]() {
    for (int t = 0; t < T; ++t)
      if (cuts.back().point[t] >= cap * (1.0 - 1e-9) &&
          current.objective.subgradient[t] > 1e-9 * std::max(1.0, targets[t]))
        return true;
    return false;
  };

  // lambda = 0 first: if the unpriced matchings already deliver every scaled
  // target, zero prices are optimal (the dual derivative is nonnegative in
  // every coordinate and g is convex).
  std::vector<double> lambda(T, 0.0);
  evaluate(lambda);
  bool zero_optimal = true;
  for (int t = 0; t < T; ++t)
    if (current.objective.subgradient[t] > 1e-12) zero_optimal = false;
  try_primal();

  double certified_lower = -kInf;
  if (zero_optimal) {
    report.converged = true;
    certified_lower = best_value;
  } else {
    // --- phase 1: projected subgradient --------------------------------
    const int subgrad_budget = std::min(std::max(20, 8 * T), config.max_iters / 2);
    for (int it = 0; it < subgrad_budget && evals < config.max_iters; ++it) {
      const Cut& last = cuts.back();
      double grad_sq = 0.0;
      for (int t = 0; t < T; ++t) grad_sq += last.grad[t] * last.grad[t];
      if (grad_sq <= 1e-24) break;  // zero subgradient: optimal

      double step;
      if (best_primal > -kInf) {
        step = 0.7 * (last.value - best_primal + 1e-12) / grad_sq;
      } else {
        const double target_drop = 0.05 * (std::abs(best_value) + 1.0) / (1.0 + it / 4.0);
        step = target_drop / grad_sq;
      }

      std::vector<double> next(T);
      for (int t = 0; t < T; ++t)
        next[t] = std::clamp(last.point[t] - step * last.grad[t], 0.0, cap);
      evaluate(next);
      if (hopeless()) {
        cap_infeasible = true;
        break;
      }
      if (it % 5 == 4) try_primal();
      if (best_primal > -kInf && rel_gap() <= config.tolerance) break;
    }

    // --- phase 2: box-step cutting planes ---------------------------------
    // The master is solved over a trust box around the incumbent: accepted
    // steps that press against the box grow it, null steps shrink it. The
    // radius floor localizes the returned prices in lambda space, which a
    // bare objective-gap stop would not (near-optimal objective values can
    // hide large price wobble along flat directions).
    if (cap_infeasible) {
      // fall through to reporting; the flag forces likely_infeasible below
    } else if (T <= 4) {
      auto norm_inf = [&](std::span<const double> x) {
        double v = 0.0;
        for (double xi : x) v = std::max(v, std::abs(xi));
        return v;
      };
      double radius = std::max(0.5, 0.5 * norm_inf(best_lambda));
      // dynamic: an infeasible program walks the incumbent out to the cap
      auto radius_max = [&]() { return std::max(8.0, 4.0 * norm_inf(best_lambda)); };
      auto radius_floor = [&]() { return 1e-4 * std::max(1.0, norm_inf(best_lambda)); };
      auto radius_stop = [&]() { return 1e-3 * std::max(1.0, norm_inf(best_lambda)); };

      const size_t cut_cap = T == 1 ? 40 : (T == 2 ? 16 : (T == 3 ? 14 : 10));
      std::vector<double> lo(T), hi(T);
      bool objective_converged = false;
      while (evals < config.max_iters) {
        prune_cuts(cuts, best_lambda, cut_cap);
        for (int t = 0; t < T; ++t) {
          lo[t] = std::max(0.0, best_lambda[t] - radius);
          hi[t] = std::min(cap, best_lambda[t] + radius);
        }
        MasterSolution master = master_minimize(cuts, lo, hi, cap);
        if (!master.found) break;
        if (master.certified) {
          certified_lower = std::max(certified_lower, master.value);
          if (best_value - certified_lower <=
              std::min(config.tolerance, 1e-7) * std::max(1.0, std::abs(best_value)))
            objective_converged = true;
        }

        const double before = best_value;
        evaluate(master.point);
        if (hopeless()) {
          cap_infeasible = true;
          break;
        }
        const bool accepted =
            best_value < before - 1e-12 * std::max(1.0, std::abs(before));
        if (accepted) {
          bool on_wall = false;
          for (int t = 0; t < T; ++t)
            if (std::abs(best_lambda[t] - lo[t]) <= 1e-12 * std::max(1.0, radius) ||
                std::abs(best_lambda[t] - hi[t]) <= 1e-12 * std::max(1.0, radius))
              on_wall = true;
          if (on_wall) radius = std::min(2.0 * radius, radius_max());
        } else {
          radius *= 0.5;
        }

        if (evals % 4 == 0) try_primal();
        if (best_primal > -kInf && rel_gap() <= config.tolerance) objective_converged = true;
        if (objective_converged && radius <= radius_stop()) {
          report.converged = true;
          break;
        }
        if (radius <= radius_floor()) {
          // no improving direction within the smallest box: localized optimum
          report.converged = true;
          break;
        }
      }
    } else {
      // High-dimensional fallback: keep taking Polyak steps.
      while (evals < config.max_iters) {
        const Cut& last = cuts.back();
        double grad_sq = 0.0;
        for (int t = 0; t < T; ++t) grad_sq += last.grad[t] * last.grad[t];
        if (grad_sq <= 1e-24) break;
        const double gap_est = best_primal > -kInf ? (best_value - best_primal)
                                                   : 0.02 * (std::abs(best_value) + 1.0);
        const double step = 0.7 * std::max(gap_est, 1e-12) / grad_sq;
        std::vector<double> next(T);
        for (int t = 0; t < T; ++t)
          next[t] = std::clamp(last.point[t] - step * last.grad[t], 0.0, cap);
        evaluate(next);
        if (hopeless()) {
          cap_infeasible = true;
          break;
        }
        if (evals % 10 == 0) try_primal();
        if (best_primal > -kInf && rel_gap() <= config.tolerance) {
          report.converged = true;
          break;
        }
      }
    }
  }

  if (best_primal > -kInf && rel_gap() <= config.tolerance) report.converged = true;
  if (certified_lower > -kInf &&
      best_value - certified_lower <= config.tolerance * std::max(1.0, std::abs(best_value)))
    report.converged = true;

  bool pinned_at_cap = false;
  for (int t = 0; t < T; ++t)
    if (best_lambda[t] >= cap * (1.0 - 1e-6)) pinned_at_cap = true;

  // Center the prices inside the optimal face. A binding optimum often sits
  // on a flat piece of g (the LP dual face); a vertex of that face is a
  // matching tie, where the downstream tie-break can land on either side of
  // the constraint. The midpoint of the flat interval along each coordinate
  // stays inside the face (it is convex), which makes the returned prices
  // reproduce the face's interior assignments. A coordinate whose flat
  // interval reaches zero snaps to zero instead: slack constraints keep the
  // complementary-slackness-minimal price.
  if (report.converged && !pinned_at_cap) {
    const double flat_tol = 1e-11 * std::max(1.0, std::abs(best_value));
    auto raw_value = [&](std::span<const double> point) {
      ++evals;
      return evaluate_point(point, sessions, targets, /*keep_sigmas=*/false).objective.value;
    };
    std::vector<double> centered = best_lambda;
    for (int sweep = 0; sweep < 2; ++sweep) {
      bool moved = false;
      for (int t = 0; t < T; ++t) {
        if (centered[t] == 0.0) continue;  // already the CS-minimal price
        std::vector<double> probe = centered;
        probe[t] = 0.0;
        if (raw_value(probe) <= best_value + flat_tol) {
          centered[t] = 0.0;
          moved = true;
          continue;
        }
        const double scale = std::max(1.0, centered[t]);
        double hi = centered[t], lo = centered[t];
        double step = 1e-6 * scale;
        for (int i = 0; i < 20 && hi < cap; ++i, step *= 2.0) {
          probe[t] = std::min(hi + step, cap);
          if (raw_value(probe) > best_value + flat_tol) break;
          hi = probe[t];
        }
        step = 1e-6 * scale;
        for (int i = 0; i < 20 && lo > 0.0; ++i, step *= 2.0) {
          probe[t] = std::max(lo - step, 0.0);
          if (raw_value(probe) > best_value + flat_tol) break;
          lo = probe[t];
        }
        const double midpoint = 0.5 * (lo + hi);
        if (std::abs(midpoint - centered[t]) > 1e-9 * scale) moved = true;
        centered[t] = midpoint;
      }
      if (!moved) break;
    }
    if (centered != best_lambda) {
      InnerEval at_center = evaluate_point(centered, sessions, targets, /*keep_sigmas=*/true);
      ++evals;
      if (at_center.objective.value <= best_value + flat_tol) {
        best_lambda = centered;
        best_value = std::min(best_value, at_center.objective.value);
        best_eval = std::move(at_center);
      }
    }
  }

  // Final rounding from the incumbent's matchings.
  current = best_eval;
  try_primal();
  if (best_primal > -kInf && rel_gap() <= config.tolerance) report.converged = true;

  report.prices.lambda = best_lambda;
  report.dual_value = best_value;
  report.best_primal_bound = best_primal;
  report.gap = best_value - best_primal;
  report.iterations = evals;
  report.delivered = best_eval.objective.delivered;

  if (cap_infeasible) report.likely_infeasible = true;
  for (int t = 0; t < T; ++t)
    if (best_lambda[t] >= cap * (1.0 - 1e-6)) report.likely_infeasible = true;
  if (report.likely_infeasible) {
    report.converged = false;
    report.warnings.push_back(
        "a price reached lambda_cap; the sampled primal is likely infeasible");
  }

  const std::vector<double> peaks = session_contribution_peaks(sessions, T);
  report.binding.assign(T, false);
  for (int t = 0; t < T; ++t) {
    const double slack = (T + 2) * peaks[t] + 1e-7 * std::max(1.0, targets[t]);
    report.binding[t] = std::abs(report.delivered[t] - targets[t]) <= slack;
  }
  return report;
}

DualSolveReport solve_hindsight(std::span<const SessionInstance> sessions,
                                const ConstraintSpec& spec) {
  SampledLpConfig config;
  config.epsilon = 1.0;
  config.nu = 1.0;
  return solve_sampled_dual(sessions, spec, config);
}

}  // namespace trafficshape
