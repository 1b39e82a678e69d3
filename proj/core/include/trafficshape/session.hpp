#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "trafficshape/matrix.hpp"

namespace trafficshape {

// Factored view of a session whose matrices all share one slot curve:
// engagement[d][p] = doc_engagement[d] * curve[p] and
// contribution_t[d][p] = doc_contribution[t][d] * curve[p].
// Position-effect (RefCTR) data has this shape by construction; it lets the
// dual solver replace the m^3 matching with a sort.
struct RankOneStructure {
  std::vector<double> curve;                            // length m
  std::vector<double> doc_engagement;                   // length m
  std::vector<std::vector<double>> doc_contribution;    // T x m
};

// One session: an engagement matrix C and per-constraint contribution
// matrices A_t, all m x m with rows = documents and columns = slots.
struct SessionInstance {
  int64_t id = 0;
  Matrix engagement;                 // C
  std::vector<Matrix> contributions; // A_1 .. A_T
  std::optional<RankOneStructure> rank_one;

  int m() const { return engagement.size(); }
  int num_constraints() const { return int(contributions.size()); }

  // Validates dimensions and finiteness, then probes for shared rank-one
  // structure. Use this instead of brace-initializing the struct.
  static SessionInstance make(int64_t id, Matrix engagement, std::vector<Matrix> contributions);
};

// Relative tolerance for accepting a factored reconstruction of a matrix.
// Exactly-factored data survives a JSON round trip at ~1e-15; anything that
// deviates more than this goes through the exact matcher instead.
inline constexpr double kRankOneDetectTol = 1e-12;

// Probes whether every matrix of the session is an outer product with one
// shared slot curve. Returns the factored view if so.
std::optional<RankOneStructure> detect_rank_one(const Matrix& engagement,
                                                std::span<const Matrix> contributions);

// Traffic-shaping targets over a horizon of n sessions: delivered units for
// constraint t across all sessions must reach targets[t].
struct ConstraintSpec {
  std::vector<double> targets;     // length T, nonnegative, total units over the horizon
  int horizon = 0;                 // n
  std::vector<std::string> names;  // length T

  int size() const { return int(targets.size()); }
  void validate() const;
};

// Nonnegative shadow prices, one per traffic-shaping constraint.
struct DualPrices {
  std::vector<double> lambda;

  int size() const { return int(lambda.size()); }
  void validate() const;
};

}  // namespace trafficshape
