#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "alssl/nn.hpp"

namespace alssl::aus {

struct VatConfig {
  double tau = 1.0;
  std::size_t power_iterations = 1;
  double xi = 1e-6;
  std::size_t k = 0;

  void validate() const;
};

/// xi = scale * sqrt(dim).
double default_xi(std::size_t representation_dim, double scale = 1e-6);

/// sum p_i ln(p_i / q_i) with q floored at the log epsilon; terms with p_i = 0
/// contribute nothing.
double kl_divergence(const Eigen::Ref<const Vector>& p, const Eigen::Ref<const Vector>& q);

struct Perturbation {
  Vector delta;       // norm tau
  bool flat = false;  // gradient vanished; delta is the scaled initial direction
};

/// Virtual adversarial perturbation of a representation by power iteration on
/// KL(base || head(r + xi * d)). The power iteration fixes the direction up to
/// sign; the sign giving the larger KL at norm tau is returned.
/// `direction_seed` keys the random starting direction.
Perturbation vat_perturbation(const nn::TaskModel& model, const Eigen::Ref<const Vector>& representation,
                              const Eigen::Ref<const Vector>& base_probs, const VatConfig& cfg,
                              std::uint64_t direction_seed);

struct UnstabilityScore {
  std::uint64_t id = 0;
  double variance = 0.0;
  std::size_t base_class = 0;
  std::size_t perturbed_class = 0;
};

UnstabilityScore unstability_score(const Eigen::Ref<const Vector>& base_probs,
                                   const Eigen::Ref<const Vector>& perturbed_probs, std::uint64_t id);

/// Scores every row of `representations` (ids aligned by row) against the
/// model head. Work is split over `threads` workers; the result does not
/// depend on the thread count.
std::vector<UnstabilityScore> score_pool(const nn::TaskModel& model, const Matrix& representations,
                                         const std::vector<std::uint64_t>& ids, const VatConfig& cfg,
                                         std::uint64_t seed, std::uint64_t cycle, std::size_t threads = 1);

/// Largest-variance ids first; ties by lower id; all ids when fewer than k.
std::vector<std::uint64_t> select_unstable_topk(const std::vector<UnstabilityScore>& scores, std::size_t k);

}  // namespace alssl::aus
