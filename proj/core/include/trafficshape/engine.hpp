#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "trafficshape/lp_dual.hpp"
#include "trafficshape/matching.hpp"
#include "trafficshape/session.hpp"

namespace trafficshape {

enum class Phase { learning, serving };

// One emitted ranking: the assignment made for a session plus its realized
// engagement reward <C, P> and per-constraint delivered units <A_t, P>.
struct ServeDecision {
  int64_t session_id = 0;
  Phase phase = Phase::learning;
  Assignment assignment;  // value is against the matrix actually matched on
  double reward = 0.0;
  std::vector<double> delivered;
};

enum class MatcherKind { hungarian, greedy };

struct EngineConfig {
  int horizon = 0;        // n, must be known up front
  double epsilon = 0.2;   // learning fraction; the window is ceil(epsilon * n)
  double nu = 0.0;        // <= 0 selects the feasibility default 1 + 4 * epsilon
  MatcherKind matcher = MatcherKind::hungarian;
  SampledLpConfig lp;     // epsilon/nu fields here are overwritten by the engine
};

// Audit record emitted whenever prices are (re)solved.
struct PriceAudit {
  std::vector<double> old_lambda;
  std::vector<double> new_lambda;
  double gap = 0.0;
  bool converged = false;
  bool likely_infeasible = false;
};

// Snapshot of the online state.
struct EngineState {
  std::optional<DualPrices> prices;
  int sessions_seen = 0;
  std::vector<double> cumulative_delivered;
  double cumulative_reward = 0.0;
  std::vector<double> learning_delivered;  // sub-tally of the learning phase
  double learning_reward = 0.0;
  int horizon = 0;
  double epsilon = 0.0;
  double nu = 0.0;
  int learning_window = 0;
  bool infeasible_flagged = false;
};

// Learning-window length: ceil(epsilon * n), with a guard so any epsilon > 0
// yields at least one learning session and fp noise in epsilon * n cannot
// push the ceiling over an exact integer.
int learning_window_length(double epsilon, int horizon);

// S = C + sum_t lambda_t A_t.
Matrix score_matrix(const SessionInstance& session, const DualPrices& prices);

// The online loop: identity assignments while the first ceil(eps*n) sessions
// are logged, one sampled dual solve when the window closes, price-weighted
// max-weight matchings thereafter. Sessions must be fed strictly in stream
// order; the engine is a single logical consumer.
class ShapingEngine {
 public:
  ShapingEngine(ConstraintSpec spec, EngineConfig config);

  // Starts in the serving phase with fixed prices and no learning window.
  static ShapingEngine with_prices(ConstraintSpec spec, EngineConfig config, DualPrices prices);

  ServeDecision serve(const SessionInstance& session);
  ServeDecision serve_with_greedy(const SessionInstance& session);

  // Re-solves prices from the given sessions (window close or an operator
  // refresh, possibly with updated targets); replaces the engine's prices and
  // appends an audit record. Solver flags propagate into the engine state.
  DualPrices resolve_prices(std::span<const SessionInstance> logged, const ConstraintSpec& spec,
                            const SampledLpConfig& config);

  EngineState state() const;
  const ConstraintSpec& spec() const { return spec_; }
  const std::vector<PriceAudit>& audits() const { return audits_; }
  const std::optional<DualSolveReport>& solve_report() const { return solve_report_; }
  int learning_window() const { return learning_window_; }
  bool infeasible_flagged() const { return infeasible_flagged_; }

 private:
  ServeDecision serve_impl(const SessionInstance& session, MatcherKind matcher);
  void solve_from_log();

  ConstraintSpec spec_;
  EngineConfig config_;
  int learning_window_ = 0;
  std::optional<DualPrices> prices_;
  std::vector<SessionInstance> learning_log_;
  std::vector<PriceAudit> audits_;
  std::optional<DualSolveReport> solve_report_;
  bool infeasible_flagged_ = false;

  int sessions_seen_ = 0;
  std::vector<double> cumulative_delivered_;
  double cumulative_reward_ = 0.0;
  std::vector<double> learning_delivered_;
  double learning_reward_ = 0.0;
};

struct RunResult {
  std::vector<ServeDecision> decisions;
  EngineState final_state;
  std::optional<DualSolveReport> solve_report;
};

// Drives a full engine pass over the first `horizon` sessions of the stream.
// A preset price vector skips the learning window entirely. Streams shorter
// than the horizon are an error; extra sessions are ignored (callers warn).
RunResult run_stream(std::span<const SessionInstance> sessions, const ConstraintSpec& spec,
                     const EngineConfig& config, const std::optional<DualPrices>& preset = {});

}  // namespace trafficshape
