#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "alssl/aus.hpp"
#include "alssl/bus.hpp"
#include "alssl/config.hpp"
#include "alssl/dataset.hpp"
#include "alssl/metrics.hpp"
#include "alssl/nn.hpp"
#include "alssl/ssl.hpp"

namespace alssl::loop {

/// Partition of the training split. labeled/labels are aligned; unlabeled is
/// the remaining ids in ascending order, itself split into the pseudo-labeled
/// batch and the unselected rest.
struct PoolState {
  std::vector<std::uint64_t> labeled;
  std::vector<std::size_t> labels;
  std::vector<std::uint64_t> unlabeled;
  ssl::PseudoBatch pseudo;
  std::vector<std::uint64_t> unselected;
  std::size_t annotations_used = 0;

  /// Throws InvalidInput when the pools overlap or fail to cover `total` ids.
  void check(std::size_t total) const;
};

/// floor(fraction * N) samples, an equal share per class with the remainder
/// handed out round-robin by class index. A class that runs short passes its
/// shortfall on to the next classes. Only labeled rows are eligible.
PoolState init_pools(const data::Dataset& train, double initial_fraction, std::uint64_t seed);

/// Stratified split of the labeled rows; rows without a label all join the
/// training split, where they can only ever be unlabeled.
data::Splits prepare_splits(const data::Dataset& dataset, const data::SplitFractions& fractions,
                            std::uint64_t seed);

/// Loads or generates cfg.dataset and splits it with the dataset seed.
data::Splits load_splits(const RunConfig& cfg);

struct Candidate {
  std::uint64_t id = 0;
  Vector probs;
  std::size_t predicted_class = 0;
  std::optional<aus::UnstabilityScore> aus;
  std::optional<bus::UncertaintyScore> bus;
  /// In (0, 1]; larger means earlier in some selector's ranking.
  double unified_rank = 0.0;
  std::vector<std::uint64_t> neighbor_ids;
};

struct SelectionRecord {
  std::size_t cycle = 0;
  std::vector<std::uint64_t> unstable;   // AUS top-K
  std::vector<std::uint64_t> uncertain;  // BUS balanced K
  std::vector<std::uint64_t> random;     // random-sampling draw
  std::vector<Candidate> candidates;     // deduplicated, best unified rank first
  std::vector<aus::UnstabilityScore> aus_scores;
  std::vector<bus::UncertaintyScore> bus_scores;
  bool truncated = false;
  std::vector<std::size_t> oracle_labels;
  std::size_t labeled_before = 0;
  std::size_t labeled_after = 0;
  std::size_t cumulative_annotations = 0;
};

struct PhaseRecord {
  std::size_t cycle = 0;
  std::uint64_t steps = 0;
  std::uint64_t global_step = 0;
  bool early_stopped = false;
  double threshold = 1.0;
  std::size_t pseudo_size = 0;
  std::size_t unselected_size = 0;
  std::optional<metrics::PseudoLabelQuality> pseudo_quality;
  double last_loss = 0.0;
  std::size_t labeled_size = 0;
  metrics::Metrics val;
  metrics::Metrics test;
};

struct CycleRecord {
  PhaseRecord training;
  std::optional<SelectionRecord> selection;
};

struct ThresholdSample {
  std::size_t cycle = 0;
  std::uint64_t step = 0;
  double threshold = 1.0;
  std::size_t count = 0;
  std::size_t count_prev = 0;
  std::size_t pseudo_size = 0;
  std::optional<std::size_t> pseudo_correct;
  double val_accuracy = 0.0;
};

/// Representations of every training row after a training phase.
struct RepresentationSnapshot {
  std::size_t cycle = 0;
  std::vector<std::uint64_t> ids;
  Matrix values;
  std::vector<std::string> pools;  // "labeled" | "pseudo" | "unselected"
};

struct RunReport {
  std::string variant;
  std::size_t train_size = 0;
  std::size_t selector_budget = 0;
  std::size_t annotation_budget = 0;
  std::size_t planned_phases = 0;
  std::uint64_t t_max = 0;
  std::vector<CycleRecord> cycles;
  std::vector<ThresholdSample> threshold_trace;
  std::vector<RepresentationSnapshot> representations;
  std::size_t total_annotations = 0;
  std::string stop_reason;
  std::optional<nn::TaskModel> final_model;

  const PhaseRecord& final_phase() const { return cycles.back().training; }
};

struct AnnotationRequest {
  std::size_t cycle = 0;
  std::size_t num_classes = 0;
  const data::Dataset* train = nullptr;
  const std::vector<Candidate>* candidates = nullptr;
};

class Oracle {
 public:
  virtual ~Oracle() = default;
  /// One label per candidate, in order. Throwing OracleAborted leaves the
  /// pools untouched.
  virtual std::vector<std::size_t> annotate(const AnnotationRequest& request) = 0;
  virtual void on_phase_end(const PhaseRecord&) {}
  virtual void on_finished(const RunReport&) {}
};

/// Answers from the ground-truth labels of the training split.
class SimulatedOracle : public Oracle {
 public:
  explicit SimulatedOracle(const data::Dataset& train);
  std::vector<std::size_t> annotate(const AnnotationRequest& request) override;
  std::size_t queries() const noexcept { return queries_; }

 private:
  std::vector<std::pair<std::uint64_t, std::size_t>> truth_;  // sorted by id
  std::size_t queries_ = 0;
};

/// K, the annotation budget in samples, and the planned number of training
/// phases for a training split of `train_size` rows.
std::size_t selector_budget(const LoopConfig& cfg, std::size_t train_size);
std::size_t annotation_budget(const LoopConfig& cfg, std::size_t train_size);
std::size_t planned_phases(const LoopConfig& cfg, std::size_t train_size);

/// Scores `unselected` on a frozen model and builds the candidate set, at
/// most `remaining` samples. `unlabeled` feeds the random-sampling variant.
SelectionRecord select_candidates(const nn::TaskModel& model, const data::Dataset& train,
                                  const std::vector<std::uint64_t>& unselected,
                                  const std::vector<std::uint64_t>& unlabeled, const RunConfig& cfg,
                                  std::size_t k, std::size_t remaining, std::size_t cycle);

class Engine {
 public:
  Engine(data::Splits splits, RunConfig cfg);

  const RunConfig& config() const noexcept { return cfg_; }
  const data::Splits& splits() const noexcept { return splits_; }
  const PoolState& pools() const noexcept { return pools_; }
  const nn::TaskModel& model() const noexcept { return model_; }
  std::size_t selector_budget() const noexcept { return k_; }
  std::size_t annotation_budget() const noexcept { return budget_; }
  std::size_t remaining_budget() const noexcept { return budget_ - pools_.annotations_used; }
  std::uint64_t t_max() const noexcept { return threshold_.t_max; }
  std::uint64_t global_step() const noexcept { return global_step_; }
  const std::vector<ThresholdSample>& threshold_trace() const noexcept { return trace_; }

  /// SSL training for one phase, ending with a refreshed pseudo batch.
  PhaseRecord train_phase(std::size_t cycle);
  /// Selection on the current model; does not mutate the engine.
  SelectionRecord select(std::size_t cycle) const;
  /// Applies oracle labels (aligned with selection.candidates) to the pools.
  void apply(SelectionRecord& selection, const std::vector<std::size_t>& labels);
  /// Queries `oracle` with retries on OracleAborted, then applies.
  void annotate(SelectionRecord& selection, Oracle& oracle);

  RepresentationSnapshot snapshot(std::size_t cycle) const;

  RunReport run(Oracle& oracle);

 private:
  double refresh_pseudo(std::size_t cycle, std::uint64_t local_step, double val_accuracy);
  void training_step(std::size_t cycle, std::uint64_t local_step, double& loss);
  std::size_t row(std::uint64_t id) const;

  data::Splits splits_;
  RunConfig cfg_;
  PoolState pools_;
  nn::TaskModel model_;
  ssl::ThresholdState threshold_;
  augment::AugmentPolicy weak_;
  augment::AugmentPolicy strong_;
  std::unordered_map<std::uint64_t, std::size_t> row_of_id_;
  std::size_t k_ = 0;
  std::size_t budget_ = 0;
  std::size_t planned_ = 0;
  std::uint64_t global_step_ = 0;
  std::vector<ThresholdSample> trace_;
};

RunReport run_loop(const data::Splits& splits, const RunConfig& cfg, Oracle& oracle);

/// Deterministic JSON summary (no timestamps).
std::string report_json(const RunReport& report, const RunConfig& cfg);

/// report.json, threshold_trace.jsonl, aus_scores.jsonl, bus_scores.jsonl,
/// representations_cycle<k>.bin (+ .json sidecar), model_final.bmis.
void write_run_outputs(const std::filesystem::path& dir, const RunReport& report, const RunConfig& cfg);

}  // namespace alssl::loop
