#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "trafficshape/session.hpp"

namespace trafficshape {

// Per-document attributes, all predicted for position 1. The position effect
// is applied multiplicatively by the curve below.
struct DocumentProfile {
  double dwell = 0.0;                    // predicted dwell-time, >= 0
  double ctr = 0.0;                      // click probability in [0, 1]
  double news = 0.0;                     // newsiness score in [0, 1]
  std::vector<uint8_t> publisher_flags;  // curated-by indicators
};

// Position-effect curve, normalized so position 1 carries weight exactly 1.
// Not required to be monotone: real pages show presentation bumps.
struct RefCtrCurve {
  std::vector<double> ref;

  int length() const { return int(ref.size()); }
  void validate() const;
};

// Decaying curve with an elevated bump around positions 5-6, normalized to
// ref[0] == 1.
RefCtrCurve default_curve(int m);

// How the per-session constraint matrices are assembled and how the default
// targets are calibrated. target_fraction scales the delivery measured under
// price-free ranking; values above 1 make a constraint bind.
struct PublisherRecipe {
  std::string name;
  double curate_prob = 0.25;     // Bernoulli flag probability
  double target_fraction = 0.8;  // of price-free delivery
};

enum class NewsConvention { traffic_total, per_session_average };

// The default corpus asks for more publisher clicks than engagement-only
// ranking delivers (fractions above 1), so the publisher prices come out
// binding while the newsiness target stays slack. A fraction below 1 is
// always strictly feasible but never binds: the unpriced ranking already
// delivers it.
struct ConstraintRecipe {
  std::vector<PublisherRecipe> publishers = {{"publisher_a", 0.35, 1.30},
                                             {"publisher_b", 0.30, 1.22}};
  bool newsiness_enabled = true;
  std::string newsiness_name = "newsiness";
  double newsiness_target_fraction = 0.9;
  NewsConvention news_convention = NewsConvention::traffic_total;
};

// Moderately tight spreads: with very heterogeneous documents the dual sits
// in a shallow valley and the learned prices stay noisy deep into the
// stream; these defaults give binding prices that settle well before the
// full horizon.
struct AttributeDistributions {
  double dwell_log_mean = 0.0;
  double dwell_log_sigma = 0.25;
  double dwell_cap = 4.0;  // draws are clamped here so per-session totals stay bounded
  double ctr_alpha = 6.0;
  double ctr_beta = 18.0;
  double news_alpha = 2.0;
  double news_beta = 2.0;
};

struct GeneratorConfig {
  int m = 20;
  int n = 2000;
  uint64_t seed = 1;
  AttributeDistributions dist;
  RefCtrCurve curve;  // empty -> default_curve(m)
  ConstraintRecipe recipe;

  int num_constraints() const {
    return int(recipe.publishers.size()) + (recipe.newsiness_enabled ? 1 : 0);
  }
  void validate() const;
  // Upper bound on any per-permutation total of any generated matrix.
  double per_session_bound() const;
};

// Assembles one session from document profiles under the position-effect
// model: C[d][p] = dwell(d) * ref[p]; publisher matrices carry
// ctr(d) * ref[p] gated by the curated flag; the newsiness matrix carries
// news(d) * ref[p]. Every matrix is an outer product with the shared curve.
SessionInstance build_session(int64_t id, std::span<const DocumentProfile> docs,
                              const RefCtrCurve& curve, const ConstraintRecipe& recipe);

// Deterministic i.i.d. stream: each session draws from its own substream of
// (seed, session id), so generation is order-independent and reproducible.
std::vector<SessionInstance> generate_stream(const GeneratorConfig& config);

// Targets calibrated against the delivery measured under price-free
// (lambda = 0) ranking of the given stream: b_t = fraction_t * delivered_t.
// Fractions below 1 are strictly feasible by construction; fractions above 1
// produce binding constraints.
ConstraintSpec calibrate_targets(std::span<const SessionInstance> stream,
                                 const GeneratorConfig& config);

std::vector<std::string> constraint_names(const ConstraintRecipe& recipe);

// Analytic first/second moments of <A_t, I> for one generated session, used
// by the distribution checks: mean and variance of sum_p ctr * flag * ref_p.
struct SessionMoments {
  double mean = 0.0;
  double variance = 0.0;
};
SessionMoments publisher_identity_moments(const GeneratorConfig& config, int publisher_index);

}  // namespace trafficshape
