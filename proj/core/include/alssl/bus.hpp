#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "alssl/nn.hpp"

namespace alssl::bus {

/// -sum p ln p, with 0 ln 0 = 0.
double entropy_score(const Eigen::Ref<const Vector>& probs);

/// u.v / (|u||v|); 0 when either vector is zero.
double cosine_similarity(const Eigen::Ref<const Vector>& u, const Eigen::Ref<const Vector>& v);

/// Exact cosine k-nearest-neighbour lists over a fixed representation matrix.
/// A row is never its own neighbour; ties resolve to the lower row index.
class NeighborIndex {
 public:
  NeighborIndex(const Matrix& representations, std::vector<std::uint64_t> ids, std::size_t m,
                std::size_t threads = 1);

  std::size_t size() const noexcept { return ids_.size(); }
  std::size_t m() const noexcept { return m_; }
  const std::vector<std::uint64_t>& ids() const noexcept { return ids_; }

  /// Row index of `id`; throws InvalidInput when absent.
  std::size_t row_of(std::uint64_t id) const;

  /// Neighbour rows (most similar first) and their similarities for row i.
  const std::vector<std::size_t>& neighbors(std::size_t row) const { return neighbors_[row]; }
  const std::vector<double>& similarities(std::size_t row) const { return similarities_[row]; }

 private:
  std::vector<std::uint64_t> ids_;
  std::size_t m_;
  std::vector<std::vector<std::size_t>> neighbors_;
  std::vector<std::vector<double>> similarities_;
};

/// Mean cosine similarity to the sample's neighbours; 1 when it has none.
double density_weight(std::uint64_t id, const NeighborIndex& index);

struct UncertaintyScore {
  std::uint64_t id = 0;
  double entropy = 0.0;
  double density = 1.0;
  double weighted = 0.0;
  std::size_t predicted_class = 0;
};

/// Scores the rows of `probs` (ids aligned with the index).
std::vector<UncertaintyScore> score_pool(const Matrix& probs, const NeighborIndex& index);

/// Per predicted class, the floor(K / N_c) highest weighted scores; unfilled
/// quota goes to the best remaining samples globally. Result is ordered by
/// weighted score (descending, ties by lower id) and never exceeds K.
std::vector<std::uint64_t> select_balanced(const std::vector<UncertaintyScore>& scores, std::size_t k,
                                           std::size_t num_classes);

}  // namespace alssl::bus
