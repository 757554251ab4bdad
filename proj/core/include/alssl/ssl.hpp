#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "alssl/nn.hpp"

namespace alssl::ssl {

/// Propagator hyperparameters.
struct SslConfig {
  double alpha = 0.9;
  double beta = 0.05;
  double mu = 1.0;
  /// Global step after which the threshold is pinned at alpha + beta.
  /// 0 selects half of the planned training steps.
  std::uint64_t t_max = 0;
  /// Unlabeled (pseudo-labeled) minibatch size per step.
  std::size_t unlabeled_batch_size = 64;

  void validate() const;
};

/// Running quantities for the adaptive confidence threshold.
struct ThresholdState {
  double alpha = 0.9;
  double beta = 0.05;
  std::uint64_t t_max = 1;
  std::uint64_t step = 0;
  std::size_t count_prev = 0;
  std::size_t count_curr = 0;
  std::size_t annotated_last_cycle = 0;  // N_A
  std::size_t selector_budget = 1;       // K

  /// Shifts the current count into the previous slot and records a new one.
  void record_count(std::size_t count) noexcept {
    count_prev = count_curr;
    count_curr = count;
  }

  void validate() const;
};

/// Lower bound keeping the threshold strictly positive when the ratio and
/// quota terms both vanish.
inline constexpr double kMinThreshold = 1e-6;

/// Number of rows whose maximum probability is strictly above alpha + beta.
std::size_t count_high_confidence(const Matrix& weak_probs, double alpha, double beta);

/// alpha * min(1, count_t / count_{t-1}) + beta * N_A / (2K) before t_max,
/// alpha + beta afterwards. A zero previous count makes the ratio 1.
double adaptive_threshold(const ThresholdState& state);

struct PseudoBatch {
  std::vector<std::uint64_t> ids;
  std::vector<std::size_t> labels;
  std::vector<double> confidences;
  double threshold = 1.0;

  std::size_t size() const noexcept { return ids.size(); }
  bool empty() const noexcept { return ids.empty(); }
  Matrix one_hot(std::size_t num_classes) const;
};

/// Every row with max probability strictly above `threshold`, labeled by
/// argmax. `ids[i]` names row i.
PseudoBatch select_pseudo(const Matrix& weak_probs, const std::vector<std::uint64_t>& ids, double threshold);

/// ids of rows not selected by `batch` (the unselected set), in input order.
std::vector<std::uint64_t> complement(const std::vector<std::uint64_t>& ids, const PseudoBatch& batch);

/// (mu / N) * sum CE(one_hot(pseudo), strong_probs); zero for an empty batch.
/// `strong_ids[i]` names row i of `strong_probs` and must equal the batch ids.
double unsupervised_loss(const PseudoBatch& batch, const std::vector<std::uint64_t>& strong_ids,
                         const Matrix& strong_probs, double mu);

double total_loss(double supervised, double unsupervised);

}  // namespace alssl::ssl
