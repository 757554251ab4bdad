#include "alssl/aus.hpp"

#include <algorithm>
#include <cmath>

#include "alssl/errors.hpp"
#include "alssl/parallel.hpp"
#include "alssl/rng.hpp"

namespace alssl::aus {

void VatConfig::validate() const {
  if (!(tau > 0.0) || !std::isfinite(tau)) throw InvalidInput("tau must be finite and positive");
  if (!(xi > 0.0) || !std::isfinite(xi)) throw InvalidInput("xi must be finite and positive");
  if (power_iterations == 0) throw InvalidInput("power iteration count must be >= 1");
}

double default_xi(std::size_t representation_dim, double scale) {
  return scale * std::sqrt(static_cast<double>(representation_dim));
}

double kl_divergence(const Eigen::Ref<const Vector>& p, const Eigen::Ref<const Vector>& q) {
  if (p.size() != q.size()) throw InvalidInput("kl_divergence: length mismatch");
  double kl = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (p[i] <= 0.0) continue;
    kl += p[i] * (std::log(p[i]) - std::log(std::max(q[i], nn::kLogEpsilon)));
  }
  return std::max(0.0, kl);
}

namespace {

Vector random_unit(std::size_t dim, std::uint64_t seed) {
  KeyedRng rng(seed);
  Vector d(static_cast<Eigen::Index>(dim));
  do {
    for (Eigen::Index i = 0; i < d.size(); ++i) d[i] = rng.normal();
  } while (d.norm() == 0.0);
  return d / d.norm();
}

}  // namespace

Perturbation vat_perturbation(const nn::TaskModel& model, const Eigen::Ref<const Vector>& representation,
                              const Eigen::Ref<const Vector>& base_probs, const VatConfig& cfg,
                              std::uint64_t direction_seed) {
  cfg.validate();
  const auto dim = model.representation_dim();
  if (static_cast<std::size_t>(representation.size()) != dim)
    throw InvalidInput("vat_perturbation: representation length does not match the head input width");
  if (static_cast<std::size_t>(base_probs.size()) != model.num_classes())
    throw InvalidInput("vat_perturbation: base probability length does not match class count");

  const Vector initial = random_unit(dim, direction_seed);
  Vector d = initial;
  for (std::size_t it = 0; it < cfg.power_iterations; ++it) {
    // Gradient wrt d of KL(base || head(r + xi d)) is xi * grad at r + xi d;
    // the constant factor disappears in the normalisation.
    const Vector g = nn::grad_representation(model, representation + cfg.xi * d, base_probs);
    const double norm = g.norm();
    if (!(norm > 0.0) || !std::isfinite(norm)) return {cfg.tau * initial, true};
    d = g / norm;
  }
  const Vector plus = cfg.tau * d;
  const double kl_plus = kl_divergence(base_probs, nn::head_probs(model, representation + plus));
  const double kl_minus = kl_divergence(base_probs, nn::head_probs(model, representation - plus));
  return {kl_minus > kl_plus ? Vector(-plus) : plus, false};
}

UnstabilityScore unstability_score(const Eigen::Ref<const Vector>& base_probs,
                                   const Eigen::Ref<const Vector>& perturbed_probs, std::uint64_t id) {
  UnstabilityScore s;
  s.id = id;
  s.variance = kl_divergence(base_probs, perturbed_probs);
  s.base_class = nn::argmax(base_probs);
  s.perturbed_class = nn::argmax(perturbed_probs);
  return s;
}

std::vector<UnstabilityScore> score_pool(const nn::TaskModel& model, const Matrix& representations,
                                         const std::vector<std::uint64_t>& ids, const VatConfig& cfg,
                                         std::uint64_t seed, std::uint64_t cycle, std::size_t threads) {
  if (static_cast<std::size_t>(representations.rows()) != ids.size())
    throw InvalidInput("score_pool: id count does not match representation rows");
  cfg.validate();
  std::vector<UnstabilityScore> out(ids.size());
  parallel_for(ids.size(), threads, [&](std::size_t i) {
    const Vector r = representations.row(static_cast<Eigen::Index>(i)).transpose();
    const Vector base = nn::head_probs(model, r);
    const auto key = derive_key({static_cast<std::uint64_t>(Stream::vat), seed, ids[i], cycle});
    const auto pert = vat_perturbation(model, r, base, cfg, key);
    out[i] = unstability_score(base, nn::head_probs(model, r + pert.delta), ids[i]);
  });
  return out;
}

std::vector<std::uint64_t> select_unstable_topk(const std::vector<UnstabilityScore>& scores, std::size_t k) {
  for (const auto& s : scores)
    if (!std::isfinite(s.variance)) throw InvalidInput("select_unstable_topk: non-finite score");
  std::vector<std::size_t> order(scores.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  auto better = [&](std::size_t a, std::size_t b) {
    if (scores[a].variance != scores[b].variance) return scores[a].variance > scores[b].variance;
    return scores[a].id < scores[b].id;
  };
  const std::size_t take = std::min(k, order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end(), better);
  std::vector<std::uint64_t> ids;
  ids.reserve(take);
  for (std::size_t i = 0; i < take; ++i) ids.push_back(scores[order[i]].id);
  return ids;
}

}  // namespace alssl::aus
