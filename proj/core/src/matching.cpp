#include "trafficshape/matching.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <json.hpp>

namespace trafficshape {

namespace {

void validate_weights(const Matrix& w) {
  if (w.size() < 1) throw InvalidInputError("matching: empty weight matrix");
  if (!w.all_finite()) throw InvalidInputError("matching: weight matrix has non-finite entries");
}

}  // namespace

std::pair<Assignment, MatchingCertificate> hungarian_max_weight(const Matrix& w) {
  validate_weights(w);
  const int m = w.size();
  constexpr double kInf = std::numeric_limits<double>::infinity();

  // Work on shifted weights so the augmenting search sees a nonnegative
  // range; sigma is invariant under the shift.
  const double lo = w.min_entry();
  const double shift = lo < 0.0 ? -lo : 0.0;

  // Kuhn-Munkres warm start: alpha[i] = max_j W'[i][j], beta = 0.
  std::vector<double> alpha(m, -kInf), beta(m, 0.0);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) alpha[i] = std::max(alpha[i], w(i, j) + shift);

  std::vector<int> slot_of_doc(m, -1), doc_of_slot(m, -1);

  std::vector<double> slack(m);
  std::vector<int> slack_doc(m), parent_doc(m);
  std::vector<char> doc_in_tree(m), slot_visited(m);

  for (int root = 0; root < m; ++root) {
    std::fill(doc_in_tree.begin(), doc_in_tree.end(), char(0));
    std::fill(slot_visited.begin(), slot_visited.end(), char(0));
    std::fill(parent_doc.begin(), parent_doc.end(), -1);
    doc_in_tree[root] = 1;
    for (int j = 0; j < m; ++j) {
      slack[j] = alpha[root] + beta[j] - (w(root, j) + shift);
      slack_doc[j] = root;
    }

    int augment_slot = -1;
    while (augment_slot < 0) {
      // Tightest unvisited slot; strict < keeps the lowest index on ties.
      int next = -1;
      double delta = kInf;
      for (int j = 0; j < m; ++j)
        if (!slot_visited[j] && slack[j] < delta) {
          delta = slack[j];
          next = j;
        }
      delta = std::max(delta, 0.0);  // guard fp drift

      if (delta > 0.0) {
        for (int i = 0; i < m; ++i)
          if (doc_in_tree[i]) alpha[i] -= delta;
        for (int j = 0; j < m; ++j) {
          if (slot_visited[j])
            beta[j] += delta;
          else
            slack[j] -= delta;
        }
      }

      slot_visited[next] = 1;
      parent_doc[next] = slack_doc[next];
      if (doc_of_slot[next] < 0) {
        augment_slot = next;
      } else {
        const int doc = doc_of_slot[next];
        doc_in_tree[doc] = 1;
        for (int j = 0; j < m; ++j) {
          if (slot_visited[j]) continue;
          const double s = alpha[doc] + beta[j] - (w(doc, j) + shift);
          if (s < slack[j]) {
            slack[j] = s;
            slack_doc[j] = doc;
          }
        }
      }
    }

    // Flip matched/unmatched edges along the alternating path.
    int j = augment_slot;
    while (j >= 0) {
      const int i = parent_doc[j];
      const int next_j = slot_of_doc[i];
      doc_of_slot[j] = i;
      slot_of_doc[i] = j;
      j = next_j;
    }
  }

  Assignment assignment;
  assignment.sigma = slot_of_doc;
  assignment.value = permutation_weight(w, assignment.sigma);

  // Potentials were computed against W + shift; alpha - shift certifies the
  // original weights with the same tight edges.
  MatchingCertificate certificate;
  certificate.alpha.resize(m);
  for (int i = 0; i < m; ++i) certificate.alpha[i] = alpha[i] - shift;
  certificate.beta = std::move(beta);
  return {std::move(assignment), std::move(certificate)};
}

Assignment greedy_matching(const Matrix& w) {
  validate_weights(w);
  const int m = w.size();

  struct Edge {
    double weight;
    int doc, slot;
  };
  std::vector<Edge> edges;
  edges.reserve(size_t(m) * m);
  for (int d = 0; d < m; ++d)
    for (int p = 0; p < m; ++p) edges.push_back({w(d, p), d, p});
  std::sort(edges.begin(), edges.end(), [](const Edge& a, const Edge& b) {
    if (a.weight != b.weight) return a.weight > b.weight;
    if (a.doc != b.doc) return a.doc < b.doc;
    return a.slot < b.slot;
  });

  Assignment assignment;
  assignment.sigma.assign(m, -1);
  std::vector<char> slot_used(m, 0);
  int matched = 0;
  for (const Edge& e : edges) {
    if (assignment.sigma[e.doc] >= 0 || slot_used[e.slot]) continue;
    assignment.sigma[e.doc] = e.slot;
    slot_used[e.slot] = 1;
    if (++matched == m) break;
  }
  assignment.value = permutation_weight(w, assignment.sigma);
  return assignment;
}

Assignment brute_force_matching(const Matrix& w) {
  validate_weights(w);
  const int m = w.size();
  if (m > 8)
    throw SizeLimitError("brute_force_matching: m = " + std::to_string(m) +
                         " exceeds the factorial enumeration guard (m <= 8)");

  std::vector<int> sigma(m);
  std::iota(sigma.begin(), sigma.end(), 0);
  Assignment best{sigma, permutation_weight(w, sigma)};
  while (std::next_permutation(sigma.begin(), sigma.end())) {
    const double value = permutation_weight(w, sigma);
    if (value > best.value) {
      best.sigma = sigma;
      best.value = value;
    }
  }
  return best;
}

CertificateCheck check_certificate(const Matrix& w, const Assignment& assignment,
                                   const MatchingCertificate& certificate,
                                   double feasibility_tol, double equality_tol) {
  const int m = w.size();
  CertificateCheck out;

  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j)
      out.feasibility_violation = std::max(
          out.feasibility_violation, w(i, j) - certificate.alpha[i] - certificate.beta[j]);

  double potential_total = 0.0;
  for (int i = 0; i < m; ++i) potential_total += certificate.alpha[i];
  for (int j = 0; j < m; ++j) potential_total += certificate.beta[j];
  out.duality_gap = std::abs(potential_total - assignment.value);

  for (int i = 0; i < m; ++i) {
    const int j = assignment.sigma[i];
    out.slack_on_chosen = std::max(
        out.slack_on_chosen, certificate.alpha[i] + certificate.beta[j] - w(i, j));
  }

  out.dual_feasible = out.feasibility_violation <= feasibility_tol;
  out.strong_duality = out.duality_gap <= equality_tol;
  out.complementary_slack = out.slack_on_chosen <= equality_tol;
  return out;
}

std::string matching_debug_json(const Matrix& w, const Assignment& assignment,
                                const MatchingCertificate& certificate) {
  nlohmann::json j;
  auto& rows = j["W"];
  for (int d = 0; d < w.size(); ++d) {
    auto span = w.row(d);
    rows.push_back(std::vector<double>(span.begin(), span.end()));
  }
  j["sigma"] = assignment.sigma;
  j["value"] = assignment.value;
  j["alpha"] = certificate.alpha;
  j["beta"] = certificate.beta;
  return j.dump();
}

Assignment rank_one_sort_assignment(std::span<const double> doc_scores,
                                    std::span<const double> slot_weights) {
  const int m = int(doc_scores.size());
  if (m < 1 || slot_weights.size() != doc_scores.size())
    throw InvalidInputError("rank_one_sort_assignment: length mismatch");

  std::vector<int> docs(m), slots(m);
  std::iota(docs.begin(), docs.end(), 0);
  std::iota(slots.begin(), slots.end(), 0);
  std::sort(docs.begin(), docs.end(), [&](int a, int b) {
    if (doc_scores[a] != doc_scores[b]) return doc_scores[a] > doc_scores[b];
    return a < b;
  });
  std::sort(slots.begin(), slots.end(), [&](int a, int b) {
    if (slot_weights[a] != slot_weights[b]) return slot_weights[a] > slot_weights[b];
    return a < b;
  });

  Assignment assignment;
  assignment.sigma.assign(m, -1);
  for (int r = 0; r < m; ++r) assignment.sigma[docs[r]] = slots[r];
  for (int d = 0; d < m; ++d)
    assignment.value += doc_scores[d] * slot_weights[assignment.sigma[d]];
  return assignment;
}

}  // namespace trafficshape
