#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "alssl/ssl.hpp"

namespace alssl::metrics {

struct Metrics {
  double accuracy = 0.0;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
  double error_rate = 1.0;
};

/// Per-class precision and recall use 0 for 0/0; F1 is 0 when P + R = 0.
/// Macro values are unweighted means over all classes.
Metrics compute_metrics(std::span<const std::size_t> predicted, std::span<const std::size_t> truth,
                        std::size_t num_classes);

struct PseudoLabelQuality {
  std::size_t correct = 0;
  double ratio = 0.0;
};

/// `truth[i]` is the ground-truth class of batch.ids[i].
PseudoLabelQuality count_correct_pseudo(const ssl::PseudoBatch& batch, std::span<const std::size_t> truth);

}  // namespace alssl::metrics
