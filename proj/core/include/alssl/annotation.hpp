#pragma once

#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "alssl/augment.hpp"
#include "alssl/loop.hpp"

namespace alssl::annotation {

enum class BoardState { training, awaiting_labels, done };
const char* to_string(BoardState state);

/// One candidate as presented to an annotator.
struct Task {
  std::uint64_t id = 0;
  std::vector<double> probs;
  std::size_t predicted_class = 0;
  std::optional<double> aus_variance;
  std::optional<std::size_t> perturbed_class;
  std::optional<double> bus_score;
  std::optional<double> entropy;
  std::optional<double> density;
  double unified_rank = 0.0;
  std::vector<std::uint64_t> neighbor_ids;
  std::optional<std::size_t> label;
  std::vector<double> features;
};

enum class LabelOutcome { ok, unknown_id, class_out_of_range, wrong_state };

struct CommitOutcome {
  enum class Kind { ok, pending, wrong_state } kind = Kind::ok;
  std::vector<std::uint64_t> pending;
  std::size_t next_cycle = 0;
};

struct BoardStatus {
  BoardState state = BoardState::training;
  std::size_t cycle = 0;
  std::size_t num_classes = 0;
  std::size_t labeled = 0;
  std::size_t total = 0;
  std::string metrics_json = "{}";
};

/// Shared state between the loop thread and HTTP handlers. Every method is
/// thread-safe.
class AnnotationBoard {
 public:
  AnnotationBoard(std::size_t num_classes, std::optional<augment::ImageShape> image_shape);

  // loop side
  void set_metrics(std::string metrics_json);
  void publish(std::size_t cycle, std::vector<Task> tasks);
  /// Blocks until the published cycle is committed; labels follow task
  /// order. Throws OracleAborted on timeout or abort().
  std::vector<std::size_t> wait_for_commit(std::optional<std::chrono::milliseconds> timeout);
  void finish(std::string metrics_json);
  void abort();
  /// Blocks until finish() has been called.
  void wait_done() const;

  // handler side
  BoardStatus status() const;
  /// Current tasks; empty unless awaiting labels.
  std::optional<std::vector<Task>> tasks() const;
  /// PNG rendering of a current candidate, if any.
  std::optional<std::string> image(std::uint64_t id) const;
  /// Upsert of one label.
  LabelOutcome post_label(std::uint64_t id, std::int64_t cls);
  /// All-or-nothing: every label is checked before any is stored.
  LabelOutcome post_labels(const std::vector<std::pair<std::uint64_t, std::int64_t>>& labels);
  CommitOutcome commit();
  bool holds_images() const { return image_shape_.has_value(); }

 private:
  LabelOutcome check_label(std::uint64_t id, std::int64_t cls) const;

  mutable std::mutex mu_;
  mutable std::condition_variable cv_;
  std::size_t num_classes_;
  std::optional<augment::ImageShape> image_shape_;
  double feature_limit_ = 1.0;
  BoardState state_ = BoardState::training;
  std::size_t cycle_ = 0;
  std::vector<Task> tasks_;
  bool committed_ = false;
  bool aborted_ = false;
  std::string metrics_json_ = "{}";
};

/// Oracle backed by a board: publishes the candidates and waits for a
/// human commit.
class HumanOracle : public loop::Oracle {
 public:
  explicit HumanOracle(AnnotationBoard& board, std::optional<std::chrono::milliseconds> timeout = std::nullopt);

  std::vector<std::size_t> annotate(const loop::AnnotationRequest& request) override;
  void on_phase_end(const loop::PhaseRecord& phase) override;
  void on_finished(const loop::RunReport& report) override;

 private:
  AnnotationBoard& board_;
  std::optional<std::chrono::milliseconds> timeout_;
};

/// Builds tasks for a request (shared by HumanOracle and tests).
std::vector<Task> make_tasks(const loop::AnnotationRequest& request);

std::string phase_metrics_json(const loop::PhaseRecord& phase);

struct ServerOptions {
  std::string bind = "127.0.0.1";
  /// 0 picks a free port.
  int port = 8080;
  std::optional<std::filesystem::path> ui_dir;
};

/// HTTP front end of a board:
///   GET  /api/cycle                 state, cycle, class count, metrics
///   GET  /api/candidates            current tasks (409 unless awaiting labels)
///   GET  /api/candidates/{id}/image PNG rendering
///   POST /api/labels                {"id", "class"} or {"labels": [...]}
///   POST /api/commit                hands labels to the loop
///   GET  /                          UI build directory or a placeholder page
class AnnotationServer {
 public:
  AnnotationServer(AnnotationBoard& board, ServerOptions options);
  ~AnnotationServer();
  AnnotationServer(const AnnotationServer&) = delete;
  AnnotationServer& operator=(const AnnotationServer&) = delete;

  /// Binds and serves on a background thread; returns the bound port.
  int start();
  void stop();
  int port() const noexcept;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace alssl::annotation
