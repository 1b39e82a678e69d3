#pragma once

#include <string>
#include <utility>
#include <vector>

#include "trafficshape/matrix.hpp"

namespace trafficshape {

// Feasibility slack allowed when checking dual constraints, and the tolerance
// used for equality checks (strong duality, tight edges). The certificate
// checks below take these as defaults.
inline constexpr double kFeasibilityTol = 1e-9;
inline constexpr double kEqualityTol = 1e-7;

// A perfect matching between documents and slots: sigma[d] is the slot given
// to document d, value is the matching weight sum(W[d][sigma[d]]).
struct Assignment {
  std::vector<int> sigma;
  double value = 0.0;
};

// Row/column potentials proving optimality of a max-weight matching:
//   feasibility:   alpha[i] + beta[j] >= W[i][j]        for all i, j
//   strong duality: sum(alpha) + sum(beta) == value
//   tightness:     alpha[i] + beta[sigma[i]] == W[i][sigma[i]]  on chosen edges
struct MatchingCertificate {
  std::vector<double> alpha;
  std::vector<double> beta;
};

struct CertificateCheck {
  double feasibility_violation = 0.0;  // max over (i,j) of W - alpha - beta
  double duality_gap = 0.0;            // |sum(alpha) + sum(beta) - value|
  double slack_on_chosen = 0.0;        // max over chosen edges of alpha + beta - W
  bool dual_feasible = false;
  bool strong_duality = false;
  bool complementary_slack = false;
  bool ok() const { return dual_feasible && strong_duality && complementary_slack; }
};

// Exact max-weight perfect matching (Kuhn-Munkres with potentials, O(m^3)).
// Accepts arbitrary finite weights; negative entries are handled by an
// internal shift that leaves sigma unchanged and is removed from the returned
// value and potentials. Ties are broken by lowest index, so identical inputs
// produce identical outputs.
std::pair<Assignment, MatchingCertificate> hungarian_max_weight(const Matrix& w);

// 1/2-approximate matching: edges sorted by decreasing weight, ties broken by
// (lower row, then lower column), added when both endpoints are free.
Assignment greedy_matching(const Matrix& w);

// Exhaustive maximum over all m! permutations, enumerated in lexicographic
// sigma order so equal-value ties resolve to the lexicographically smallest
// sigma. Guarded at m <= 8.
Assignment brute_force_matching(const Matrix& w);

CertificateCheck check_certificate(const Matrix& w, const Assignment& assignment,
                                   const MatchingCertificate& certificate,
                                   double feasibility_tol = kFeasibilityTol,
                                   double equality_tol = kEqualityTol);

// Serialized JSON object with W, sigma, alpha, beta for failure triage.
std::string matching_debug_json(const Matrix& w, const Assignment& assignment,
                                const MatchingCertificate& certificate);

// Optimal assignment for a rank-one weight matrix W[d][p] = doc[d] * slot[p]:
// documents sorted by descending doc score paired with slots sorted by
// descending slot weight (ties by lower index). The returned value is
// recomputed as sum(doc[d] * slot[sigma[d]]).
Assignment rank_one_sort_assignment(std::span<const double> doc_scores,
                                    std::span<const double> slot_weights);

}  // namespace trafficshape
