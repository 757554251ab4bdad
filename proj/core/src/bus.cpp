#include "alssl/bus.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "alssl/errors.hpp"
#include "alssl/parallel.hpp"

namespace alssl::bus {

double entropy_score(const Eigen::Ref<const Vector>& probs) {
  double h = 0.0;
  for (Eigen::Index i = 0; i < probs.size(); ++i)
    if (probs[i] > 0.0) h -= probs[i] * std::log(probs[i]);
  return std::max(0.0, h);
}

double cosine_similarity(const Eigen::Ref<const Vector>& u, const Eigen::Ref<const Vector>& v) {
  if (u.size() != v.size()) throw InvalidInput("cosine_similarity: dimension mismatch");
  const double nu = u.norm();
  const double nv = v.norm();
  if (nu == 0.0 || nv == 0.0) return 0.0;
  return std::clamp(u.dot(v) / (nu * nv), -1.0, 1.0);
}

NeighborIndex::NeighborIndex(const Matrix& representations, std::vector<std::uint64_t> ids, std::size_t m,
                             std::size_t threads)
    : ids_(std::move(ids)), m_(m) {
  if (static_cast<std::size_t>(representations.rows()) != ids_.size())
    throw InvalidInput("NeighborIndex: id count does not match representation rows");
  if (m_ == 0) throw InvalidInput("NeighborIndex: M must be positive");
  const std::size_t n = ids_.size();
  const std::size_t keep = n == 0 ? 0 : std::min(m_, n - 1);
  neighbors_.resize(n);
  similarities_.resize(n);

  Vector norms = representations.rowwise().norm();
  parallel_for(n, threads, [&](std::size_t i) {
    const auto ri = static_cast<Eigen::Index>(i);
    std::vector<double> sim(n, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      const auto rj = static_cast<Eigen::Index>(j);
      if (norms[ri] == 0.0 || norms[rj] == 0.0) continue;
      sim[j] = std::clamp(representations.row(ri).dot(representations.row(rj)) / (norms[ri] * norms[rj]), -1.0, 1.0);
    }
    std::vector<std::size_t> order;
    order.reserve(n - 1);
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) order.push_back(j);
    auto closer = [&](std::size_t a, std::size_t b) { return sim[a] != sim[b] ? sim[a] > sim[b] : a < b; };
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep), order.end(), closer);
    order.resize(keep);
    auto& out_sim = similarities_[i];
    out_sim.reserve(keep);
    for (auto j : order) out_sim.push_back(sim[j]);
    neighbors_[i] = std::move(order);
  });
}

std::size_t NeighborIndex::row_of(std::uint64_t id) const {
  // ids are usually ascending; fall back to a scan otherwise.
  auto it = std::lower_bound(ids_.begin(), ids_.end(), id);
  if (it != ids_.end() && *it == id) return static_cast<std::size_t>(it - ids_.begin());
  auto lin = std::find(ids_.begin(), ids_.end(), id);
  if (lin == ids_.end()) throw InvalidInput("NeighborIndex: unknown id " + std::to_string(id));
  return static_cast<std::size_t>(lin - ids_.begin());
}

namespace {

double density_of_row(const NeighborIndex& index, std::size_t row) {
  const auto& sims = index.similarities(row);
  if (sims.empty()) return 1.0;
  return std::accumulate(sims.begin(), sims.end(), 0.0) / static_cast<double>(sims.size());
}

}  // namespace

double density_weight(std::uint64_t id, const NeighborIndex& index) { return density_of_row(index, index.row_of(id)); }

std::vector<UncertaintyScore> score_pool(const Matrix& probs, const NeighborIndex& index) {
  if (static_cast<std::size_t>(probs.rows()) != index.size())
    throw InvalidInput("bus::score_pool: probability rows do not match the neighbour index");
  std::vector<UncertaintyScore> out(index.size());
  for (std::size_t i = 0; i < index.size(); ++i) {
    const Vector p = probs.row(static_cast<Eigen::Index>(i)).transpose();
    auto& s = out[i];
    s.id = index.ids()[i];
    s.entropy = entropy_score(p);
    s.density = density_of_row(index, i);
    s.weighted = s.entropy * s.density;
    s.predicted_class = nn::argmax(p);
  }
  return out;
}

std::vector<std::uint64_t> select_balanced(const std::vector<UncertaintyScore>& scores, std::size_t k,
                                           std::size_t num_classes) {
  if (num_classes == 0) throw InvalidInput("select_balanced: class count must be positive");
  for (const auto& s : scores)
    if (s.predicted_class >= num_classes) throw InvalidInput("select_balanced: predicted class out of range");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a].weighted != scores[b].weighted) return scores[a].weighted > scores[b].weighted;
    return scores[a].id < scores[b].id;
  });

  const std::size_t quota = k / num_classes;
  std::vector<std::size_t> taken_per_class(num_classes, 0);
  std::vector<bool> chosen(scores.size(), false);
  std::size_t total = 0;
  for (auto i : order) {
    if (total == k) break;
    auto& t = taken_per_class[scores[i].predicted_class];
    if (t < quota) {
      ++t;
      ++total;
      chosen[i] = true;
    }
  }
  for (auto i : order) {
    if (total == k) break;
    if (!chosen[i]) {
      chosen[i] = true;
      ++total;
    }
  }
  std::vector<std::uint64_t> ids;
  ids.reserve(total);
  for (auto i : order)
    if (chosen[i]) ids.push_back(scores[i].id);
  return ids;
}

}  // namespace alssl::bus
