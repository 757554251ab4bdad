#include "alssl/loop.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>

#include <json.hpp>

#include "alssl/augment.hpp"
#include "alssl/checkpoint.hpp"
#include "alssl/errors.hpp"
#include "alssl/parallel.hpp"
#include "alssl/rng.hpp"

namespace alssl::loop {

using json = nlohmann::json;

namespace {

std::size_t floor_fraction(double fraction, std::size_t n) {
  return static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n) + 1e-9));
}

template <typename T>
bool sorted_unique(const std::vector<T>& v) {
  return std::adjacent_find(v.begin(), v.end(), [](const T& a, const T& b) { return !(a < b); }) == v.end();
}

Matrix gather_rows(const data::Dataset& d, const std::unordered_map<std::uint64_t, std::size_t>& rows,
                   const std::vector<std::uint64_t>& ids) {
  Matrix m(static_cast<Eigen::Index>(ids.size()), d.features.cols());
  for (std::size_t i = 0; i < ids.size(); ++i)
    m.row(static_cast<Eigen::Index>(i)) = d.features.row(static_cast<Eigen::Index>(rows.at(ids[i])));
  return m;
}

std::unordered_map<std::uint64_t, std::size_t> index_rows(const data::Dataset& d) {
  std::unordered_map<std::uint64_t, std::size_t> m;
  m.reserve(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) m.emplace(d.ids[i], i);
  return m;
}

metrics::Metrics evaluate_split(const nn::TaskModel& model, const data::Dataset& d) {
  if (d.size() == 0 || !d.fully_labeled()) return {};
  const auto out = nn::evaluate(model, d.features);
  const auto truth = d.label_vector();
  return metrics::compute_metrics(out.predicted, truth, model.num_classes());
}

double accuracy(const nn::TaskModel& model, const data::Dataset& d) {
  if (d.size() == 0 || !d.fully_labeled()) return 0.0;
  return evaluate_split(model, d).accuracy;
}

std::optional<metrics::PseudoLabelQuality> pseudo_quality(
    const ssl::PseudoBatch& batch, const data::Dataset& train,
    const std::unordered_map<std::uint64_t, std::size_t>& rows) {
  std::vector<std::size_t> truth;
  truth.reserve(batch.size());
  for (auto id : batch.ids) {
    const auto& l = train.labels[rows.at(id)];
    if (!l) return std::nullopt;
    truth.push_back(*l);
  }
  return metrics::count_correct_pseudo(batch, truth);
}

json metrics_json(const metrics::Metrics& m) {
  return {{"accuracy", m.accuracy},
          {"macro_precision", m.macro_precision},
          {"macro_recall", m.macro_recall},
          {"macro_f1", m.macro_f1},
          {"error_rate", m.error_rate}};
}

}  // namespace

void PoolState::check(std::size_t total) const {
  if (labels.size() != labeled.size()) throw InvalidInput("labels are not aligned with the labeled pool");
  if (!sorted_unique(labeled) || !sorted_unique(unlabeled)) throw InvalidInput("pools must be sorted and unique");
  std::vector<std::uint64_t> both;
  std::set_intersection(labeled.begin(), labeled.end(), unlabeled.begin(), unlabeled.end(), std::back_inserter(both));
  if (!both.empty()) throw InvalidInput("labeled and unlabeled pools overlap");
  if (labeled.size() + unlabeled.size() != total) throw InvalidInput("pools do not cover the training split");
  std::vector<std::uint64_t> ps(pseudo.ids);
  std::sort(ps.begin(), ps.end());
  std::vector<std::uint64_t> un(unselected);
  std::sort(un.begin(), un.end());
  std::vector<std::uint64_t> merged;
  std::merge(ps.begin(), ps.end(), un.begin(), un.end(), std::back_inserter(merged));
  if (merged != unlabeled) throw InvalidInput("pseudo-labeled and unselected sets must partition the unlabeled pool");
}

PoolState init_pools(const data::Dataset& train, double initial_fraction, std::uint64_t seed) {
  if (!(initial_fraction > 0.0 && initial_fraction <= 1.0)) throw InvalidInput("initial fraction must lie in (0, 1]");
  const std::size_t classes = train.num_classes;
  std::vector<std::vector<std::size_t>> by_class(classes);
  for (std::size_t i = 0; i < train.size(); ++i)
    if (train.labels[i]) by_class.at(*train.labels[i]).push_back(i);
  for (std::size_t c = 0; c < classes; ++c)
    if (by_class[c].empty())
      throw DataError(DataErrorCode::degenerate, "class " + std::to_string(c) + " has no labeled samples");

  const std::size_t want = floor_fraction(initial_fraction, train.size());
  std::vector<std::size_t> take(classes, want / classes);
  for (std::size_t c = 0; c < want % classes; ++c) ++take[c];
  std::size_t deficit = 0;
  for (std::size_t c = 0; c < classes; ++c) {
    if (take[c] > by_class[c].size()) {
      deficit += take[c] - by_class[c].size();
      take[c] = by_class[c].size();
    }
  }
  while (deficit > 0) {
    bool moved = false;
    for (std::size_t c = 0; c < classes && deficit > 0; ++c) {
      if (take[c] < by_class[c].size()) {
        ++take[c];
        --deficit;
        moved = true;
      }
    }
    if (!moved) break;
  }

  std::vector<std::pair<std::uint64_t, std::size_t>> chosen;
  std::vector<char> in_labeled(train.size(), 0);
  for (std::size_t c = 0; c < classes; ++c) {
    auto& members = by_class[c];
    KeyedRng rng(Stream::pools, {seed, c});
    for (std::size_t i = 0; i < take[c]; ++i) {
      const auto j = i + static_cast<std::size_t>(rng.below(members.size() - i));
      std::swap(members[i], members[j]);
      in_labeled[members[i]] = 1;
      chosen.emplace_back(train.ids[members[i]], c);
    }
  }
  std::sort(chosen.begin(), chosen.end());

  PoolState p;
  for (auto& [id, c] : chosen) {
    p.labeled.push_back(id);
    p.labels.push_back(c);
  }
  for (std::size_t i = 0; i < train.size(); ++i)
    if (!in_labeled[i]) p.unlabeled.push_back(train.ids[i]);
  std::sort(p.unlabeled.begin(), p.unlabeled.end());
  p.unselected = p.unlabeled;
  return p;
}

data::Splits prepare_splits(const data::Dataset& dataset, const data::SplitFractions& fractions,
                            std::uint64_t seed) {
  if (dataset.fully_labeled()) return data::split(dataset, fractions, seed);
  std::vector<std::size_t> labeled_rows, unlabeled_rows;
  for (std::size_t i = 0; i < dataset.size(); ++i) (dataset.labels[i] ? labeled_rows : unlabeled_rows).push_back(i);
  auto parts = data::split(dataset.subset(labeled_rows), fractions, seed);
  const auto rows = index_rows(dataset);
  std::vector<std::size_t> train_rows = unlabeled_rows;
  for (auto id : parts.train.ids) train_rows.push_back(rows.at(id));
  std::sort(train_rows.begin(), train_rows.end(), [&](auto a, auto b) { return dataset.ids[a] < dataset.ids[b]; });
  parts.train = dataset.subset(train_rows);
  return parts;
}

data::Splits load_splits(const RunConfig& cfg) {
  return prepare_splits(data::load_dataset(cfg.dataset), cfg.dataset.split, cfg.dataset.seed);
}

SimulatedOracle::SimulatedOracle(const data::Dataset& train) {
  for (std::size_t i = 0; i < train.size(); ++i)
    if (train.labels[i]) truth_.emplace_back(train.ids[i], *train.labels[i]);
  std::sort(truth_.begin(), truth_.end());
}

std::vector<std::size_t> SimulatedOracle::annotate(const AnnotationRequest& request) {
  ++queries_;
  std::vector<std::size_t> out;
  for (const auto& c : *request.candidates) {
    auto it = std::lower_bound(truth_.begin(), truth_.end(), std::pair{c.id, std::size_t{0}});
    if (it == truth_.end() || it->first != c.id)
      throw DataError(DataErrorCode::degenerate, "no ground truth for sample " + std::to_string(c.id));
    out.push_back(it->second);
  }
  return out;
}

std::size_t selector_budget(const LoopConfig& cfg, std::size_t train_size) {
  return floor_fraction(cfg.selector_budget_fraction, train_size);
}

std::size_t annotation_budget(const LoopConfig& cfg, std::size_t train_size) {
  return floor_fraction(cfg.annotation_budget_fraction, train_size);
}

std::size_t planned_phases(const LoopConfig& cfg, std::size_t train_size) {
  const std::size_t budget = annotation_budget(cfg, train_size);
  if (budget == 0 || cfg.max_cycles == 0) return 1;
  const std::size_t k = selector_budget(cfg, train_size);
  const bool single = cfg.variants.disable_aus || cfg.variants.disable_bus;
  const std::size_t per_cycle = single ? k : 2 * k;
  if (per_cycle == 0) return cfg.max_cycles + 1;
  return std::min(cfg.max_cycles, (budget + per_cycle - 1) / per_cycle) + 1;
}

SelectionRecord select_candidates(const nn::TaskModel& model, const data::Dataset& train,
                                  const std::vector<std::uint64_t>& unselected,
                                  const std::vector<std::uint64_t>& unlabeled, const RunConfig& cfg,
                                  std::size_t k, std::size_t remaining, std::size_t cycle) {
  SelectionRecord rec;
  rec.cycle = cycle;
  if (remaining == 0 || k == 0) return rec;
  const auto rows = index_rows(train);
  const auto& v = cfg.loop.variants;
  const std::size_t threads = resolve_threads(cfg.loop.threads);

  // Unified rank: max over lists of (L - pos) / L.
  std::map<std::uint64_t, double> rank;
  auto rank_list = [&](const std::vector<std::uint64_t>& list) {
    const double len = static_cast<double>(list.size());
    for (std::size_t pos = 0; pos < list.size(); ++pos) {
      const double r = (len - static_cast<double>(pos)) / len;
      auto [it, fresh] = rank.emplace(list[pos], r);
      if (!fresh) it->second = std::max(it->second, r);
    }
  };

  std::unordered_map<std::uint64_t, std::size_t> score_row;
  std::optional<bus::NeighborIndex> index;
  if (v.random_sampling) {
    std::vector<std::uint64_t> pool(unlabeled);
    const std::size_t n = std::min(2 * k, pool.size());
    KeyedRng rng(Stream::random_sampling, {cfg.loop.seed, cycle});
    for (std::size_t i = 0; i < n; ++i)
      std::swap(pool[i], pool[i + static_cast<std::size_t>(rng.below(pool.size() - i))]);
    rec.random.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(n));
    rank_list(rec.random);
  } else if (!unselected.empty()) {
    const Matrix feats = gather_rows(train, rows, unselected);
    const auto out = nn::evaluate(model, feats);
    if (!v.disable_aus) {
      aus::VatConfig vat;
      vat.tau = cfg.aus.tau;
      vat.power_iterations = cfg.aus.power_iterations;
      vat.xi = aus::default_xi(model.representation_dim(), cfg.aus.xi_scale);
      vat.k = k;
      rec.aus_scores = aus::score_pool(model, out.representations, unselected, vat, cfg.loop.seed, cycle, threads);
      rec.unstable = aus::select_unstable_topk(rec.aus_scores, k);
      rank_list(rec.unstable);
    }
    if (!v.disable_bus) {
      index.emplace(out.representations, unselected, cfg.bus.neighbors, threads);
      rec.bus_scores = bus::score_pool(out.probs, *index);
      rec.uncertain = bus::select_balanced(rec.bus_scores, k, model.num_classes());
      rank_list(rec.uncertain);
    }
    for (std::size_t i = 0; i < unselected.size(); ++i) score_row.emplace(unselected[i], i);
  }

  std::vector<std::pair<double, std::uint64_t>> order;
  for (auto& [id, r] : rank) order.emplace_back(r, id);
  std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  if (order.size() > remaining) {
    order.resize(remaining);
    rec.truncated = true;
  }

  std::vector<std::uint64_t> ids;
  for (auto& o : order) ids.push_back(o.second);
  const auto out = nn::evaluate(model, gather_rows(train, rows, ids));
  constexpr std::size_t kShownNeighbors = 5;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    Candidate c;
    c.id = ids[i];
    c.probs = out.probs.row(static_cast<Eigen::Index>(i)).transpose();
    c.predicted_class = out.predicted[i];
    c.unified_rank = order[i].first;
    if (auto it = score_row.find(c.id); it != score_row.end()) {
      if (!rec.aus_scores.empty()) c.aus = rec.aus_scores[it->second];
      if (!rec.bus_scores.empty()) c.bus = rec.bus_scores[it->second];
      if (index) {
        const auto& nb = index->neighbors(it->second);
        for (std::size_t j = 0; j < std::min(kShownNeighbors, nb.size()); ++j) c.neighbor_ids.push_back(unselected[nb[j]]);
      }
    }
    rec.candidates.push_back(std::move(c));
  }
  return rec;
}

Engine::Engine(data::Splits splits, RunConfig cfg)
    : splits_(std::move(splits)),
      cfg_(std::move(cfg)),
      model_(nn::TaskModel::create({2, 1, 2}, 0)) {
  cfg_.validate();
  const auto& train = splits_.train;
  if (train.size() == 0) throw DataError(DataErrorCode::degenerate, "training split is empty");
  if (train.num_classes < 2) throw DataError(DataErrorCode::degenerate, "need at least two classes");
  row_of_id_ = index_rows(train);

  const auto& l = cfg_.loop;
  k_ = loop::selector_budget(l, train.size());
  budget_ = loop::annotation_budget(l, train.size());
  planned_ = planned_phases(l, train.size());

  pools_ = init_pools(train, l.initial_fraction, l.seed);
  if (pools_.labeled.empty()) throw DataError(DataErrorCode::degenerate, "initial labeled pool is empty");
  model_ = nn::TaskModel::create(train.dim(), cfg_.model, train.num_classes, l.seed);

  threshold_.alpha = cfg_.ssl.alpha;
  threshold_.beta = cfg_.ssl.beta;
  threshold_.t_max = cfg_.ssl.t_max != 0
                         ? cfg_.ssl.t_max
                         : std::max<std::uint64_t>(1, planned_ * l.steps_per_cycle / 2);
  threshold_.selector_budget = k_;

  weak_ = cfg_.augment.weak;
  weak_.kind = augment::PolicyKind::weak;
  strong_ = cfg_.augment.strong;
  strong_.kind = augment::PolicyKind::strong;
  weak_.seed = strong_.seed = l.seed;
  if (!train.image_shape) weak_.feature_scale = strong_.feature_scale = augment::feature_std(train.features);
  augment::validate_pair(weak_, strong_);
}

std::size_t Engine::row(std::uint64_t id) const { return row_of_id_.at(id); }

double Engine::refresh_pseudo(std::size_t cycle, std::uint64_t local_step, double val_accuracy) {
  const auto& train = splits_.train;
  const auto& u = pools_.unlabeled;
  ThresholdSample sample;
  sample.cycle = cycle;
  sample.step = global_step_;
  sample.val_accuracy = val_accuracy;
  (void)local_step;

  std::size_t count = 0;
  Matrix probs(0, static_cast<Eigen::Index>(train.num_classes));
  if (!u.empty()) {
    Matrix weak(static_cast<Eigen::Index>(u.size()), train.features.cols());
    for (std::size_t i = 0; i < u.size(); ++i) {
      const Vector x = train.features.row(static_cast<Eigen::Index>(row(u[i]))).transpose();
      weak.row(static_cast<Eigen::Index>(i)) =
          augment::augment({x.data(), static_cast<std::size_t>(x.size())}, weak_, {u[i], cycle, global_step_, 0},
                           train.image_shape)
              .transpose();
    }
    probs = nn::evaluate(model_, weak).probs;
    count = ssl::count_high_confidence(probs, threshold_.alpha, threshold_.beta);
  }
  threshold_.record_count(count);
  threshold_.step = global_step_;
  const double eps = cfg_.loop.variants.disable_adaptive_threshold ? threshold_.alpha + threshold_.beta
                                                                   : ssl::adaptive_threshold(threshold_);
  pools_.pseudo = ssl::select_pseudo(probs, u, eps);
  pools_.unselected = ssl::complement(u, pools_.pseudo);

  sample.threshold = eps;
  sample.count = threshold_.count_curr;
  sample.count_prev = threshold_.count_prev;
  sample.pseudo_size = pools_.pseudo.size();
  if (auto q = pseudo_quality(pools_.pseudo, train, row_of_id_)) sample.pseudo_correct = q->correct;
  trace_.push_back(sample);
  return eps;
}

void Engine::training_step(std::size_t cycle, std::uint64_t local_step, double& loss) {
  (void)local_step;
  const auto& train = splits_.train;
  const auto& opt = cfg_.optimizer;
  const auto dim = train.features.cols();
  const std::size_t classes = train.num_classes;

  auto augmented = [&](std::uint64_t id, const augment::AugmentPolicy& p, std::uint64_t draw) {
    const Vector x = train.features.row(static_cast<Eigen::Index>(row(id))).transpose();
    return augment::augment({x.data(), static_cast<std::size_t>(x.size())}, p, {id, cycle, global_step_, draw},
                            train.image_shape);
  };

  nn::LossSpec spec;
  {
    KeyedRng rng(Stream::batch, {cfg_.loop.seed, cycle, global_step_, 0});
    const std::size_t b = opt.batch_size;
    nn::LossTerm term;
    term.inputs.resize(static_cast<Eigen::Index>(b), dim);
    std::vector<std::size_t> labels(b);
    for (std::size_t i = 0; i < b; ++i) {
      const auto j = static_cast<std::size_t>(rng.below(pools_.labeled.size()));
      term.inputs.row(static_cast<Eigen::Index>(i)) = augmented(pools_.labeled[j], weak_, 1).transpose();
      labels[i] = pools_.labels[j];
    }
    term.targets = nn::one_hot(labels, classes);
    spec.supervised = std::move(term);
  }
  if (!pools_.pseudo.empty() && cfg_.ssl.mu > 0.0) {
    KeyedRng rng(Stream::batch, {cfg_.loop.seed, cycle, global_step_, 1});
    const std::size_t b = cfg_.ssl.unlabeled_batch_size;
    nn::LossTerm term;
    term.weight = cfg_.ssl.mu;
    term.inputs.resize(static_cast<Eigen::Index>(b), dim);
    std::vector<std::size_t> labels(b);
    for (std::size_t i = 0; i < b; ++i) {
      const auto j = static_cast<std::size_t>(rng.below(pools_.pseudo.size()));
      term.inputs.row(static_cast<Eigen::Index>(i)) = augmented(pools_.pseudo.ids[j], strong_, 2).transpose();
      labels[i] = pools_.pseudo.labels[j];
    }
    term.targets = nn::one_hot(labels, classes);
    spec.consistency = std::move(term);
  }
  const auto g = nn::grad_params(model_, spec);
  nn::sgd_step(model_, g.gradients, opt);
  loss = g.total_loss;
}

PhaseRecord Engine::train_phase(std::size_t cycle) {
  const auto& l = cfg_.loop;
  if (l.cold_start && cycle > 0)
    model_ = nn::TaskModel::create(splits_.train.dim(), cfg_.model, splits_.train.num_classes, l.seed);
  const bool tracked = splits_.val.size() > 0 && splits_.val.fully_labeled();

  PhaseRecord rec;
  rec.cycle = cycle;
  rec.labeled_size = pools_.labeled.size();
  double best = -1.0;
  std::optional<nn::TaskModel> best_model;
  refresh_pseudo(cycle, 0, accuracy(model_, splits_.val));
  std::size_t stale = 0;
  std::uint64_t s = 0;
  while (s < l.steps_per_cycle) {
    training_step(cycle, s, rec.last_loss);
    ++s;
    ++global_step_;
    if (s % l.eval_interval != 0) continue;
    const double acc = accuracy(model_, splits_.val);
    refresh_pseudo(cycle, s, acc);
    if (!tracked) continue;
    if (acc >= best) best_model = model_;
    if (acc > best + 1e-12) {
      best = acc;
      stale = 0;
    } else if (++stale >= l.patience) {
      rec.early_stopped = true;
      break;
    }
  }
  // The phase keeps its best validation weights.
  if (best_model) model_ = std::move(*best_model);
  refresh_pseudo(cycle, s, accuracy(model_, splits_.val));

  rec.steps = s;
  rec.global_step = global_step_;
  rec.threshold = trace_.back().threshold;
  rec.pseudo_size = pools_.pseudo.size();
  rec.unselected_size = pools_.unselected.size();
  rec.pseudo_quality = pseudo_quality(pools_.pseudo, splits_.train, row_of_id_);
  rec.val = evaluate_split(model_, splits_.val);
  rec.test = evaluate_split(model_, splits_.test);
  return rec;
}

SelectionRecord Engine::select(std::size_t cycle) const {
  return select_candidates(model_, splits_.train, pools_.unselected, pools_.unlabeled, cfg_, k_, remaining_budget(),
                           cycle);
}

void Engine::apply(SelectionRecord& selection, const std::vector<std::size_t>& labels) {
  const auto& cands = selection.candidates;
  if (labels.size() != cands.size()) throw InvalidInput("expected one label per candidate");
  if (cands.size() > remaining_budget()) throw InvalidInput("candidate set exceeds the remaining budget");
  std::set<std::uint64_t> ids;
  for (std::size_t i = 0; i < cands.size(); ++i) {
    if (labels[i] >= splits_.train.num_classes) throw InvalidInput("label out of range");
    if (!std::binary_search(pools_.unlabeled.begin(), pools_.unlabeled.end(), cands[i].id))
      throw InvalidInput("candidate " + std::to_string(cands[i].id) + " is not in the unlabeled pool");
    if (!ids.insert(cands[i].id).second) throw InvalidInput("duplicate candidate");
  }

  selection.labeled_before = pools_.labeled.size();
  std::vector<std::pair<std::uint64_t, std::size_t>> merged;
  for (std::size_t i = 0; i < pools_.labeled.size(); ++i) merged.emplace_back(pools_.labeled[i], pools_.labels[i]);
  for (std::size_t i = 0; i < cands.size(); ++i) merged.emplace_back(cands[i].id, labels[i]);
  std::sort(merged.begin(), merged.end());
  pools_.labeled.clear();
  pools_.labels.clear();
  for (auto& [id, c] : merged) {
    pools_.labeled.push_back(id);
    pools_.labels.push_back(c);
  }
  auto gone = [&](std::uint64_t id) { return ids.contains(id); };
  std::erase_if(pools_.unlabeled, gone);
  std::erase_if(pools_.unselected, gone);
  ssl::PseudoBatch kept;
  kept.threshold = pools_.pseudo.threshold;
  for (std::size_t i = 0; i < pools_.pseudo.size(); ++i) {
    if (gone(pools_.pseudo.ids[i])) continue;
    kept.ids.push_back(pools_.pseudo.ids[i]);
    kept.labels.push_back(pools_.pseudo.labels[i]);
    kept.confidences.push_back(pools_.pseudo.confidences[i]);
  }
  pools_.pseudo = std::move(kept);
  pools_.annotations_used += cands.size();
  threshold_.annotated_last_cycle = cands.size();

  selection.oracle_labels = labels;
  selection.labeled_after = pools_.labeled.size();
  selection.cumulative_annotations = pools_.annotations_used;
}

void Engine::annotate(SelectionRecord& selection, Oracle& oracle) {
  if (selection.candidates.empty()) {
    apply(selection, {});
    return;
  }
  AnnotationRequest req;
  req.cycle = selection.cycle;
  req.num_classes = splits_.train.num_classes;
  req.train = &splits_.train;
  req.candidates = &selection.candidates;
  for (std::size_t attempt = 0;; ++attempt) {
    try {
      auto labels = oracle.annotate(req);
      apply(selection, labels);
      return;
    } catch (const OracleAborted&) {
      if (attempt >= cfg_.loop.oracle_retries) throw;
    }
  }
}

RepresentationSnapshot Engine::snapshot(std::size_t cycle) const {
  const auto& train = splits_.train;
  RepresentationSnapshot snap;
  snap.cycle = cycle;
  snap.ids = train.ids;
  snap.values = nn::evaluate(model_, train.features).representations;
  std::set<std::uint64_t> pseudo(pools_.pseudo.ids.begin(), pools_.pseudo.ids.end());
  for (auto id : train.ids) {
    if (std::binary_search(pools_.labeled.begin(), pools_.labeled.end(), id)) snap.pools.emplace_back("labeled");
    else if (pseudo.contains(id)) snap.pools.emplace_back("pseudo");
    else snap.pools.emplace_back("unselected");
  }
  return snap;
}

RunReport Engine::run(Oracle& oracle) {
  const auto& l = cfg_.loop;
  RunReport report;
  report.variant = l.variants.name();
  report.train_size = splits_.train.size();
  report.selector_budget = k_;
  report.annotation_budget = budget_;
  report.planned_phases = planned_;
  report.t_max = threshold_.t_max;

  auto finish_phase = [&](std::size_t cycle) {
    auto phase = train_phase(cycle);
    oracle.on_phase_end(phase);
    if (l.export_representations) report.representations.push_back(snapshot(cycle));
    return phase;
  };

  std::size_t cycle = 0;
  bool met_target = false;
  for (; cycle < l.max_cycles && remaining_budget() > 0; ++cycle) {
    CycleRecord rec;
    rec.training = finish_phase(cycle);
    if (l.target_accuracy && rec.training.val.accuracy >= *l.target_accuracy) {
      report.cycles.push_back(std::move(rec));
      met_target = true;
      break;
    }
    auto sel = select(cycle);
    annotate(sel, oracle);
    rec.selection = std::move(sel);
    report.cycles.push_back(std::move(rec));
  }
  if (met_target) {
    report.stop_reason = "target_accuracy";
  } else {
    report.stop_reason = remaining_budget() == 0 ? "budget_exhausted" : "max_cycles";
    CycleRecord last;
    last.training = finish_phase(cycle);
    report.cycles.push_back(std::move(last));
  }
  report.threshold_trace = trace_;
  report.total_annotations = pools_.annotations_used;
  report.final_model = model_;
  oracle.on_finished(report);
  return report;
}

RunReport run_loop(const data::Splits& splits, const RunConfig& cfg, Oracle& oracle) {
  Engine engine(splits, cfg);
  return engine.run(oracle);
}

std::string report_json(const RunReport& report, const RunConfig& cfg) {
  json j;
  j["variant"] = report.variant;
  j["config"] = json::parse(serialize_config(cfg));
  j["train_size"] = report.train_size;
  j["selector_budget"] = report.selector_budget;
  j["annotation_budget"] = report.annotation_budget;
  j["planned_phases"] = report.planned_phases;
  j["t_max"] = report.t_max;
  j["total_annotations"] = report.total_annotations;
  j["stop_reason"] = report.stop_reason;
  json cycles = json::array();
  json ledger = json::array();
  for (const auto& c : report.cycles) {
    const auto& t = c.training;
    json item;
    item["cycle"] = t.cycle;
    item["training"] = {{"steps", t.steps},
                        {"global_step", t.global_step},
                        {"early_stopped", t.early_stopped},
                        {"threshold", t.threshold},
                        {"labeled_size", t.labeled_size},
                        {"pseudo_size", t.pseudo_size},
                        {"unselected_size", t.unselected_size},
                        {"pseudo_correct", t.pseudo_quality ? json(t.pseudo_quality->correct) : json(nullptr)},
                        {"pseudo_ratio", t.pseudo_quality ? json(t.pseudo_quality->ratio) : json(nullptr)},
                        {"last_loss", t.last_loss},
                        {"val", metrics_json(t.val)},
                        {"test", metrics_json(t.test)}};
    if (c.selection) {
      const auto& s = *c.selection;
      json cand = json::array();
      for (const auto& x : s.candidates) cand.push_back(x.id);
      item["selection"] = {{"unstable", s.unstable},
                           {"uncertain", s.uncertain},
                           {"random", s.random},
                           {"candidates", cand},
                           {"oracle_labels", s.oracle_labels},
                           {"truncated", s.truncated}};
      ledger.push_back({{"cycle", s.cycle},
                        {"labeled_before", s.labeled_before},
                        {"annotated", s.candidates.size()},
                        {"labeled_after", s.labeled_after},
                        {"cumulative_annotations", s.cumulative_annotations},
                        {"pseudo_correct", t.pseudo_quality ? json(t.pseudo_quality->correct) : json(nullptr)},
                        {"pseudo_ratio", t.pseudo_quality ? json(t.pseudo_quality->ratio) : json(nullptr)}});
    }
    cycles.push_back(std::move(item));
  }
  j["cycles"] = std::move(cycles);
  j["ledger"] = std::move(ledger);
  const auto& f = report.final_phase();
  j["final"] = {{"cycle", f.cycle},
                {"val", metrics_json(f.val)},
                {"test", metrics_json(f.test)},
                {"pseudo_size", f.pseudo_size},
                {"pseudo_correct", f.pseudo_quality ? json(f.pseudo_quality->correct) : json(nullptr)},
                {"pseudo_ratio", f.pseudo_quality ? json(f.pseudo_quality->ratio) : json(nullptr)}};
  return j.dump(2) + "\n";
}

void write_run_outputs(const std::filesystem::path& dir, const RunReport& report, const RunConfig& cfg) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  auto open = [&](const fs::path& name) {
    std::ofstream out(dir / name, std::ios::binary);
    if (!out) throw DataError(DataErrorCode::io, "cannot write " + (dir / name).string());
    return out;
  };
  {
    auto out = open("report.json");
    out << report_json(report, cfg);
  }
  {
    auto out = open("threshold_trace.jsonl");
    for (const auto& t : report.threshold_trace)
      out << json{{"cycle", t.cycle},
                  {"step", t.step},
                  {"threshold", t.threshold},
                  {"count", t.count},
                  {"count_prev", t.count_prev},
                  {"pseudo_size", t.pseudo_size},
                  {"pseudo_correct", t.pseudo_correct ? json(*t.pseudo_correct) : json(nullptr)},
                  {"val_accuracy", t.val_accuracy}}
                 .dump()
          << "\n";
  }
  {
    auto aus_out = open("aus_scores.jsonl");
    auto bus_out = open("bus_scores.jsonl");
    for (const auto& c : report.cycles) {
      if (!c.selection) continue;
      const auto& s = *c.selection;
      const std::set<std::uint64_t> unstable(s.unstable.begin(), s.unstable.end());
      const std::set<std::uint64_t> uncertain(s.uncertain.begin(), s.uncertain.end());
      for (const auto& a : s.aus_scores)
        aus_out << json{{"cycle", s.cycle},
                        {"id", a.id},
                        {"variance", a.variance},
                        {"base_class", a.base_class},
                        {"perturbed_class", a.perturbed_class},
                        {"selected", unstable.contains(a.id)}}
                       .dump()
                << "\n";
      for (const auto& b : s.bus_scores)
        bus_out << json{{"cycle", s.cycle},
                        {"id", b.id},
                        {"entropy", b.entropy},
                        {"density", b.density},
                        {"weighted", b.weighted},
                        {"predicted_class", b.predicted_class},
                        {"selected", uncertain.contains(b.id)}}
                       .dump()
                << "\n";
    }
  }
  for (const auto& snap : report.representations) {
    const std::string stem = "representations_cycle" + std::to_string(snap.cycle);
    {
      auto out = open(stem + ".bin");
      for (Eigen::Index r = 0; r < snap.values.rows(); ++r)
        for (Eigen::Index c = 0; c < snap.values.cols(); ++c) {
          const double v = snap.values(r, c);
          out.write(reinterpret_cast<const char*>(&v), sizeof v);
        }
    }
    auto out = open(stem + ".json");
    out << json{{"cycle", snap.cycle},
                {"rows", snap.values.rows()},
                {"cols", snap.values.cols()},
                {"dtype", "float64-le"},
                {"ids", snap.ids},
                {"pools", snap.pools}}
               .dump()
        << "\n";
  }
  if (report.final_model) save_checkpoint(dir / "model_final.bmis", *report.final_model);
}

}  // namespace alssl::loop
