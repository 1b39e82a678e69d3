#include "trafficshape/traffic_model.hpp"

#include <cmath>

#include "trafficshape/matching.hpp"
#include "trafficshape/rng.hpp"

namespace trafficshape {

void RefCtrCurve::validate() const {
  if (ref.empty()) throw InvalidInputError("curve: must have at least one position");
  if (ref[0] != 1.0) throw InvalidInputError("curve: ref[0] must be exactly 1");
  for (size_t p = 0; p < ref.size(); ++p)
    if (!std::isfinite(ref[p]) || ref[p] < 0.0)
      throw InvalidInputError("curve: ref[" + std::to_string(p) +
                              "] must be finite and nonnegative");
}

RefCtrCurve default_curve(int m) {
  if (m < 1) throw InvalidInputError("curve: m must be >= 1");
  RefCtrCurve curve;
  curve.ref.resize(m);
  for (int p = 0; p < m; ++p) {
    // Geometric decay plus a presentation bump centered between positions
    // 5 and 6 (0-based 4/5).
    const double bump = 0.22 * std::exp(-0.5 * (p - 4.5) * (p - 4.5));
    curve.ref[p] = std::pow(0.87, p) + bump;
  }
  const double head = curve.ref[0];
  for (int p = 0; p < m; ++p) curve.ref[p] /= head;
  curve.ref[0] = 1.0;
  return curve;
}

void GeneratorConfig::validate() const {
  if (m < 1) throw InvalidInputError("generator: m must be >= 1");
  if (n < 1) throw InvalidInputError("generator: n must be >= 1");
  if (!curve.ref.empty() && curve.length() != m)
    throw InvalidInputError("generator: curve length " + std::to_string(curve.length()) +
                            " does not match m = " + std::to_string(m));
  if (!curve.ref.empty()) curve.validate();
  if (dist.dwell_cap <= 0.0) throw InvalidInputError("generator: dwell_cap must be > 0");
  if (dist.ctr_alpha <= 0.0 || dist.ctr_beta <= 0.0 || dist.news_alpha <= 0.0 ||
      dist.news_beta <= 0.0)
    throw InvalidInputError("generator: beta shape parameters must be > 0");
  for (const PublisherRecipe& pub : recipe.publishers) {
    if (pub.curate_prob < 0.0 || pub.curate_prob > 1.0)
      throw InvalidInputError("generator: curate_prob must be in [0, 1]");
    if (pub.target_fraction < 0.0)
      throw InvalidInputError("generator: target_fraction must be >= 0");
    if (pub.name.empty()) throw InvalidInputError("generator: publisher name must be nonempty");
  }
}

double GeneratorConfig::per_session_bound() const {
  const RefCtrCurve c = curve.ref.empty() ? default_curve(m) : curve;
  double ref_total = 0.0;
  for (double r : c.ref) ref_total += r;
  return std::max(dist.dwell_cap, 1.0) * ref_total;
}

std::vector<std::string> constraint_names(const ConstraintRecipe& recipe) {
  std::vector<std::string> names;
  for (const PublisherRecipe& pub : recipe.publishers) names.push_back(pub.name);
  if (recipe.newsiness_enabled) names.push_back(recipe.newsiness_name);
  return names;
}

SessionInstance build_session(int64_t id, std::span<const DocumentProfile> docs,
                              const RefCtrCurve& curve, const ConstraintRecipe& recipe) {
  curve.validate();
  const int m = curve.length();
  if (int(docs.size()) != m)
    throw InvalidInputError("build_session: got " + std::to_string(docs.size()) +
                            " documents for a curve of length " + std::to_string(m));

  std::vector<double> dwell(m), ctr(m), news(m);
  for (int d = 0; d < m; ++d) {
    dwell[d] = docs[d].dwell;
    ctr[d] = docs[d].ctr;
    news[d] = docs[d].news;
  }

  Matrix engagement = Matrix::outer(dwell, curve.ref);

  std::vector<Matrix> contributions;
  for (size_t t = 0; t < recipe.publishers.size(); ++t) {
    std::vector<double> gated(m, 0.0);
    for (int d = 0; d < m; ++d) {
      if (t < docs[d].publisher_flags.size() && docs[d].publisher_flags[t])
        gated[d] = ctr[d];
    }
    contributions.push_back(Matrix::outer(gated, curve.ref));
  }
  if (recipe.newsiness_enabled) contributions.push_back(Matrix::outer(news, curve.ref));

  return SessionInstance::make(id, std::move(engagement), std::move(contributions));
}

std::vector<SessionInstance> generate_stream(const GeneratorConfig& config) {
  config.validate();
  const RefCtrCurve curve = config.curve.ref.empty() ? default_curve(config.m) : config.curve;
  const int num_publishers = int(config.recipe.publishers.size());

  std::vector<SessionInstance> stream;
  stream.reserve(config.n);
  for (int k = 0; k < config.n; ++k) {
    Rng rng = Rng::substream(config.seed, uint64_t(k));
    std::vector<DocumentProfile> docs(config.m);
    for (DocumentProfile& doc : docs) {
      doc.dwell = std::min(rng.lognormal(config.dist.dwell_log_mean, config.dist.dwell_log_sigma),
                           config.dist.dwell_cap);
      doc.ctr = rng.beta(config.dist.ctr_alpha, config.dist.ctr_beta);
      doc.news = rng.beta(config.dist.news_alpha, config.dist.news_beta);
      doc.publisher_flags.resize(num_publishers);
      for (int t = 0; t < num_publishers; ++t)
        doc.publisher_flags[t] = rng.bernoulli(config.recipe.publishers[t].curate_prob) ? 1 : 0;
    }
    stream.push_back(build_session(k, docs, curve, config.recipe));
  }
  return stream;
}

ConstraintSpec calibrate_targets(std::span<const SessionInstance> stream,
                                 const GeneratorConfig& config) {
  if (stream.empty()) throw InvalidInputError("calibrate_targets: empty stream");
  const int T = config.num_constraints();
  for (const SessionInstance& s : stream)
    if (s.num_constraints() != T)
      throw InvalidInputError("calibrate_targets: stream does not match the recipe");

  // Price-free ranking: maximize engagement alone, tally what it delivers.
  std::vector<double> delivered(T, 0.0);
  for (const SessionInstance& s : stream) {
    Assignment assignment;
    if (s.rank_one)
      assignment = rank_one_sort_assignment(s.rank_one->doc_engagement, s.rank_one->curve);
    else
      assignment = hungarian_max_weight(s.engagement).first;
    for (int t = 0; t < T; ++t)
      delivered[t] += permutation_weight(s.contributions[t], assignment.sigma);
  }

  ConstraintSpec spec;
  spec.horizon = int(stream.size());
  spec.names = constraint_names(config.recipe);
  spec.targets.resize(T);
  for (size_t t = 0; t < config.recipe.publishers.size(); ++t)
    spec.targets[t] = config.recipe.publishers[t].target_fraction * delivered[t];
  if (config.recipe.newsiness_enabled)
    spec.targets[T - 1] = config.recipe.newsiness_target_fraction * delivered[T - 1];
  spec.validate();
  return spec;
}

SessionMoments publisher_identity_moments(const GeneratorConfig& config, int publisher_index) {
  if (publisher_index < 0 || publisher_index >= int(config.recipe.publishers.size()))
    throw InvalidInputError("publisher_identity_moments: bad publisher index");
  const RefCtrCurve curve = config.curve.ref.empty() ? default_curve(config.m) : config.curve;
  const double a = config.dist.ctr_alpha, b = config.dist.ctr_beta;
  const double p = config.recipe.publishers[publisher_index].curate_prob;
  const double e_ctr = a / (a + b);
  const double e_ctr2 = a * (a + 1.0) / ((a + b) * (a + b + 1.0));
  // X = ctr * flag per slot; identity pairs slot p with an i.i.d. document.
  const double e_x = e_ctr * p;
  const double var_x = e_ctr2 * p - e_x * e_x;
  SessionMoments out;
  for (double r : curve.ref) {
    out.mean += e_x * r;
    out.variance += var_x * r * r;
  }
  return out;
}

}  // namespace trafficshape
