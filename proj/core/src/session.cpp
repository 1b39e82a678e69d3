#include "trafficshape/session.hpp"

#include <cmath>

namespace trafficshape {

namespace {

// Factors one matrix against a fixed curve with curve[pivot] == 1:
// doc[d] = M(d, pivot). Returns false if the reconstruction misses.
bool factor_against_curve(const Matrix& m, std::span<const double> curve, int pivot,
                          std::vector<double>& doc_out) {
  const int n = m.size();
  const double scale = m.max_abs();
  const double tol = kRankOneDetectTol * std::max(scale, 1e-300);
  doc_out.resize(n);
  for (int d = 0; d < n; ++d) doc_out[d] = m(d, pivot);
  for (int d = 0; d < n; ++d)
    for (int p = 0; p < n; ++p)
      if (std::abs(m(d, p) - doc_out[d] * curve[p]) > tol) return false;
  return true;
}

// Extracts a candidate slot curve from the row with the largest entry,
// normalized so the largest position is 1. Returns the pivot column, or -1
// for an all-zero matrix.
int extract_curve(const Matrix& m, std::vector<double>& curve_out) {
  const int n = m.size();
  int best_d = -1, best_p = -1;
  double best = 0.0;
  for (int d = 0; d < n; ++d)
    for (int p = 0; p < n; ++p)
      if (std::abs(m(d, p)) > best) {
        best = std::abs(m(d, p));
        best_d = d;
        best_p = p;
      }
  if (best_d < 0) return -1;
  curve_out.resize(n);
  for (int p = 0; p < n; ++p) curve_out[p] = m(best_d, p) / m(best_d, best_p);
  return best_p;
}

}  // namespace

std::optional<RankOneStructure> detect_rank_one(const Matrix& engagement,
                                                std::span<const Matrix> contributions) {
  const int n = engagement.size();
  std::vector<double> curve;
  int pivot = extract_curve(engagement, curve);
  for (size_t t = 0; pivot < 0 && t < contributions.size(); ++t)
    pivot = extract_curve(contributions[t], curve);
  if (pivot < 0) {
    // Every matrix is zero; any curve works.
    curve.assign(n, 1.0);
    pivot = 0;
  }

  RankOneStructure out;
  if (!factor_against_curve(engagement, curve, pivot, out.doc_engagement)) return std::nullopt;
  out.doc_contribution.resize(contributions.size());
  for (size_t t = 0; t < contributions.size(); ++t)
    if (!factor_against_curve(contributions[t], curve, pivot, out.doc_contribution[t]))
      return std::nullopt;
  out.curve = std::move(curve);
  return out;
}

SessionInstance SessionInstance::make(int64_t id, Matrix engagement,
                                      std::vector<Matrix> contributions) {
  if (!engagement.all_finite())
    throw InvalidInputError("session " + std::to_string(id) + ": non-finite engagement entry");
  for (size_t t = 0; t < contributions.size(); ++t) {
    if (contributions[t].size() != engagement.size())
      throw InvalidInputError("session " + std::to_string(id) + ": constraint matrix " +
                              std::to_string(t) + " has dimension " +
                              std::to_string(contributions[t].size()) + ", expected " +
                              std::to_string(engagement.size()));
    if (!contributions[t].all_finite())
      throw InvalidInputError("session " + std::to_string(id) +
                              ": non-finite entry in constraint matrix " + std::to_string(t));
  }

  SessionInstance session;
  session.id = id;
  session.engagement = std::move(engagement);
  session.contributions = std::move(contributions);
  session.rank_one = detect_rank_one(session.engagement, session.contributions);
  return session;
}

void ConstraintSpec::validate() const {
  if (horizon < 1) throw InvalidInputError("constraint spec: horizon must be >= 1");
  if (names.size() != targets.size())
    throw InvalidInputError("constraint spec: names/targets length mismatch");
  for (size_t t = 0; t < targets.size(); ++t) {
    if (!std::isfinite(targets[t]) || targets[t] < 0.0)
      throw InvalidInputError("constraint spec: target for \"" + names[t] +
                              "\" must be finite and nonnegative");
  }
}

void DualPrices::validate() const {
  for (size_t t = 0; t < lambda.size(); ++t)
    if (!std::isfinite(lambda[t]) || lambda[t] < 0.0)
      throw InvalidInputError("dual prices must be finite and nonnegative (index " +
                              std::to_string(t) + ")");
}

}  // namespace trafficshape
