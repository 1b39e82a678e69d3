#include "trafficshape/engine.hpp"

#include <cmath>
#include <numeric>

namespace trafficshape {

int learning_window_length(double epsilon, int horizon) {
  if (horizon < 1) throw InvalidInputError("engine: horizon must be >= 1");
  if (epsilon < 0.0 || epsilon > 1.0)
    throw InvalidInputError("engine: epsilon must be in [0, 1]");
  if (epsilon == 0.0) return 0;
  const double q = epsilon * double(horizon);
  const double r = std::round(q);
  int window = std::abs(q - r) <= 1e-9 * std::max(1.0, std::abs(q)) ? int(r)
                                                                    : int(std::ceil(q));
  window = std::max(window, 1);
  return std::min(window, horizon);
}

Matrix score_matrix(const SessionInstance& session, const DualPrices& prices) {
  prices.validate();
  if (prices.size() != session.num_constraints())
    throw InvalidInputError("score_matrix: session " + std::to_string(session.id) + " has " +
                            std::to_string(session.num_constraints()) +
                            " constraints but " + std::to_string(prices.size()) +
                            " prices were supplied");
  Matrix score = session.engagement;
  for (int t = 0; t < prices.size(); ++t)
    if (prices.lambda[t] != 0.0) score.add_scaled(session.contributions[t], prices.lambda[t]);
  return score;
}

ShapingEngine::ShapingEngine(ConstraintSpec spec, EngineConfig config)
    : spec_(std::move(spec)), config_(config) {
  spec_.validate();
  if (config_.horizon < 1) throw InvalidInputError("engine: horizon must be >= 1");
  if (config_.epsilon < 0.0 || config_.epsilon > 1.0)
    throw InvalidInputError("engine: epsilon must be in [0, 1]");
  if (config_.nu <= 0.0) config_.nu = 1.0 + 4.0 * config_.epsilon;
  learning_window_ = learning_window_length(config_.epsilon, config_.horizon);
  cumulative_delivered_.assign(spec_.size(), 0.0);
  learning_delivered_.assign(spec_.size(), 0.0);
}

// Injected prices skip the solve at the window close; the learning window
// itself still follows config.epsilon (zero means priced serving from the
// first session).
ShapingEngine ShapingEngine::with_prices(ConstraintSpec spec, EngineConfig config,
                                         DualPrices prices) {
  prices.validate();
  if (prices.size() != int(spec.targets.size()))
    throw InvalidInputError("engine: supplied prices do not match the constraint spec");
  ShapingEngine engine(std::move(spec), config);
  engine.prices_ = std::move(prices);
  return engine;
}

ServeDecision ShapingEngine::serve(const SessionInstance& session) {
  return serve_impl(session, config_.matcher);
}

ServeDecision ShapingEngine::serve_with_greedy(const SessionInstance& session) {
  return serve_impl(session, MatcherKind::greedy);
}

void ShapingEngine::solve_from_log() {
  if (learning_log_.empty())
    throw InvalidInputError(
        "engine: cannot learn prices from an empty window; epsilon = 0 requires preset prices");
  SampledLpConfig lp = config_.lp;
  // The effective sample fraction is the realized window over the horizon.
  lp.epsilon = double(learning_window_) / double(config_.horizon);
  lp.nu = config_.nu;
  resolve_prices(learning_log_, spec_, lp);
}

DualPrices ShapingEngine::resolve_prices(std::span<const SessionInstance> logged,
                                         const ConstraintSpec& spec,
                                         const SampledLpConfig& config) {
  PriceAudit audit;
  if (prices_) audit.old_lambda = prices_->lambda;

  if (spec.size() == 0) {
    prices_ = DualPrices{};
    audit.converged = true;
    audits_.push_back(std::move(audit));
    spec_ = spec;
    return *prices_;
  }

  DualSolveReport report = solve_sampled_dual(logged, spec, config);
  // An infeasible sampled program must not halt serving: the capped prices
  // still rank, the run just carries the flag.
  prices_ = report.prices;
  infeasible_flagged_ = infeasible_flagged_ || report.likely_infeasible;

  audit.new_lambda = prices_->lambda;
  audit.gap = report.gap;
  audit.converged = report.converged;
  audit.likely_infeasible = report.likely_infeasible;
  audits_.push_back(std::move(audit));
  solve_report_ = std::move(report);
  spec_ = spec;
  return *prices_;
}

ServeDecision ShapingEngine::serve_impl(const SessionInstance& session, MatcherKind matcher) {
  if (sessions_seen_ >= config_.horizon)
    throw InvalidInputError("engine: received more sessions than the horizon n = " +
                            std::to_string(config_.horizon));
  if (session.num_constraints() != spec_.size())
    throw InvalidInputError("engine: session " + std::to_string(session.id) +
                            " constraint count does not match the constraint spec");

  ServeDecision decision;
  decision.session_id = session.id;

  const bool learning = sessions_seen_ < learning_window_;
  if (learning) {
    decision.phase = Phase::learning;
    learning_log_.push_back(session);
    const int m = session.m();
    decision.assignment.sigma.resize(m);
    std::iota(decision.assignment.sigma.begin(), decision.assignment.sigma.end(), 0);
    decision.assignment.value =
        permutation_weight(session.engagement, decision.assignment.sigma);
  } else {
    decision.phase = Phase::serving;
    if (!prices_) {
      if (sessions_seen_ > learning_window_)
        throw Error("engine: serving phase entered without prices");  // broken invariant
      solve_from_log();
    }
    const Matrix score = score_matrix(session, *prices_);
    decision.assignment = matcher == MatcherKind::greedy ? greedy_matching(score)
                                                         : hungarian_max_weight(score).first;
  }

  decision.reward = permutation_weight(session.engagement, decision.assignment.sigma);
  decision.delivered.resize(spec_.size());
  for (int t = 0; t < spec_.size(); ++t)
    decision.delivered[t] =
        permutation_weight(session.contributions[t], decision.assignment.sigma);

  cumulative_reward_ += decision.reward;
  for (int t = 0; t < spec_.size(); ++t) cumulative_delivered_[t] += decision.delivered[t];
  if (learning) {
    learning_reward_ += decision.reward;
    for (int t = 0; t < spec_.size(); ++t) learning_delivered_[t] += decision.delivered[t];
  }
  ++sessions_seen_;
  return decision;
}

RunResult run_stream(std::span<const SessionInstance> sessions, const ConstraintSpec& spec,
                     const EngineConfig& config, const std::optional<DualPrices>& preset) {
  EngineConfig effective = config;
  if (effective.horizon == 0) effective.horizon = int(sessions.size());
  if (int(sessions.size()) < effective.horizon)
    throw InvalidInputError("run_stream: stream has " + std::to_string(sessions.size()) +
                            " sessions but the horizon is n = " +
                            std::to_string(effective.horizon));

  ShapingEngine engine = preset ? ShapingEngine::with_prices(spec, effective, *preset)
                                : ShapingEngine(spec, effective);
  RunResult result;
  result.decisions.reserve(effective.horizon);
  for (int k = 0; k < effective.horizon; ++k)
    result.decisions.push_back(engine.serve(sessions[k]));
  result.final_state = engine.state();
  result.solve_report = engine.solve_report();
  return result;
}

EngineState ShapingEngine::state() const {
  EngineState out;
  out.prices = prices_;
  out.sessions_seen = sessions_seen_;
  out.cumulative_delivered = cumulative_delivered_;
  out.cumulative_reward = cumulative_reward_;
  out.learning_delivered = learning_delivered_;
  out.learning_reward = learning_reward_;
  out.horizon = config_.horizon;
  out.epsilon = config_.epsilon;
  out.nu = config_.nu;
  out.learning_window = learning_window_;
  out.infeasible_flagged = infeasible_flagged_;
  return out;
}

}  // namespace trafficshape
