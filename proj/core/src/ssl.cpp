#include "alssl/ssl.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "alssl/errors.hpp"

namespace alssl::ssl {

void SslConfig::validate() const {
  if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidInput("alpha must lie in (0, 1)");
  if (!(beta >= 0.0)) throw InvalidInput("beta must be >= 0");
  if (alpha + beta > 1.0) throw InvalidInput("alpha + beta must not exceed 1");
  if (!(mu >= 0.0) || !std::isfinite(mu)) throw InvalidInput("mu must be finite and >= 0");
  if (unlabeled_batch_size == 0) throw InvalidInput("unlabeled batch size must be positive");
}

void ThresholdState::validate() const {
  if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidInput("alpha must lie in (0, 1)");
  if (!(beta >= 0.0) || alpha + beta > 1.0) throw InvalidInput("beta must be >= 0 with alpha + beta <= 1");
  if (t_max == 0) throw InvalidInput("t_max must be positive");
}

std::size_t count_high_confidence(const Matrix& weak_probs, double alpha, double beta) {
  const double cut = alpha + beta;
  std::size_t n = 0;
  for (Eigen::Index i = 0; i < weak_probs.rows(); ++i)
    if (weak_probs.row(i).maxCoeff() > cut) ++n;
  return n;
}

double adaptive_threshold(const ThresholdState& s) {
  s.validate();
  if (s.step >= s.t_max) return s.alpha + s.beta;
  const double ratio = s.count_prev == 0
                           ? 1.0
                           : std::min(1.0, static_cast<double>(s.count_curr) / static_cast<double>(s.count_prev));
  const double quota = s.selector_budget == 0
                           ? 0.0
                           : std::min(1.0, static_cast<double>(s.annotated_last_cycle) /
                                               (2.0 * static_cast<double>(s.selector_budget)));
  return std::max(kMinThreshold, s.alpha * ratio + s.beta * quota);
}

Matrix PseudoBatch::one_hot(std::size_t num_classes) const { return nn::one_hot(labels, num_classes); }

PseudoBatch select_pseudo(const Matrix& weak_probs, const std::vector<std::uint64_t>& ids, double threshold) {
  if (static_cast<std::size_t>(weak_probs.rows()) != ids.size())
    throw InvalidInput("select_pseudo: id count does not match probability rows");
  if (!(threshold > 0.0 && threshold <= 1.0)) throw InvalidInput("select_pseudo: threshold must lie in (0, 1]");
  PseudoBatch batch;
  batch.threshold = threshold;
  for (Eigen::Index i = 0; i < weak_probs.rows(); ++i) {
    const auto cls = nn::argmax(weak_probs.row(i).transpose());
    const double conf = weak_probs(i, static_cast<Eigen::Index>(cls));
    if (conf > threshold) {
      batch.ids.push_back(ids[static_cast<std::size_t>(i)]);
      batch.labels.push_back(cls);
      batch.confidences.push_back(conf);
    }
  }
  return batch;
}

std::vector<std::uint64_t> complement(const std::vector<std::uint64_t>& ids, const PseudoBatch& batch) {
  std::unordered_set<std::uint64_t> taken(batch.ids.begin(), batch.ids.end());
  std::vector<std::uint64_t> out;
  out.reserve(ids.size() - std::min(ids.size(), taken.size()));
  for (auto id : ids)
    if (!taken.contains(id)) out.push_back(id);
  return out;
}

double unsupervised_loss(const PseudoBatch& batch, const std::vector<std::uint64_t>& strong_ids,
                         const Matrix& strong_probs, double mu) {
  if (strong_ids != batch.ids) throw InvalidInput("unsupervised_loss: strong-draw ids do not align with pseudo batch");
  if (static_cast<std::size_t>(strong_probs.rows()) != batch.size())
    throw InvalidInput("unsupervised_loss: strong-draw row count does not match pseudo batch");
  if (batch.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const double p = strong_probs(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(batch.labels[i]));
    total -= std::log(std::max(p, nn::kLogEpsilon));
  }
  return mu * total / static_cast<double>(batch.size());
}

double total_loss(double supervised, double unsupervised) {
  if (!std::isfinite(supervised) || !std::isfinite(unsupervised)) throw InvalidInput("total_loss: non-finite term");
  return supervised + unsupervised;
}

}  // namespace alssl::ssl
