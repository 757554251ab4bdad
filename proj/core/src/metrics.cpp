#include "alssl/metrics.hpp"

#include "alssl/errors.hpp"

namespace alssl::metrics {

Metrics compute_metrics(std::span<const std::size_t> predicted, std::span<const std::size_t> truth,
                        std::size_t num_classes) {
  if (predicted.empty()) throw InvalidInput("compute_metrics: empty input");
  if (predicted.size() != truth.size()) throw InvalidInput("compute_metrics: length mismatch");
  if (num_classes == 0) throw InvalidInput("compute_metrics: class count must be positive");
  std::vector<std::size_t> tp(num_classes, 0), pred_count(num_classes, 0), true_count(num_classes, 0);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    if (predicted[i] >= num_classes || truth[i] >= num_classes)
      throw InvalidInput("compute_metrics: class index out of range");
    ++pred_count[predicted[i]];
    ++true_count[truth[i]];
    if (predicted[i] == truth[i]) {
      ++tp[truth[i]];
      ++correct;
    }
  }
  Metrics m;
  m.accuracy = static_cast<double>(correct) / static_cast<double>(predicted.size());
  m.error_rate = 1.0 - m.accuracy;
  double sp = 0.0, sr = 0.0, sf = 0.0;
  for (std::size_t c = 0; c < num_classes; ++c) {
    const double p = pred_count[c] ? static_cast<double>(tp[c]) / static_cast<double>(pred_count[c]) : 0.0;
    const double r = true_count[c] ? static_cast<double>(tp[c]) / static_cast<double>(true_count[c]) : 0.0;
    sp += p;
    sr += r;
    sf += (p + r) > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
  }
  const auto n = static_cast<double>(num_classes);
  m.macro_precision = sp / n;
  m.macro_recall = sr / n;
  m.macro_f1 = sf / n;
  return m;
}

PseudoLabelQuality count_correct_pseudo(const ssl::PseudoBatch& batch, std::span<const std::size_t> truth) {
  if (truth.size() != batch.size()) throw InvalidInput("count_correct_pseudo: truth does not align with batch");
  PseudoLabelQuality q;
  for (std::size_t i = 0; i < batch.size(); ++i)
    if (batch.labels[i] == truth[i]) ++q.correct;
  q.ratio = batch.empty() ? 0.0 : static_cast<double>(q.correct) / static_cast<double>(batch.size());
  return q;
}

}  // namespace alssl::metrics
