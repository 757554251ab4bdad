#include "alssl/annotation.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "alssl/errors.hpp"
#include "alssl/png.hpp"

namespace alssl::annotation {

using json = nlohmann::json;

const char* to_string(BoardState state) {
  switch (state) {
    case BoardState::training: return "training";
    case BoardState::awaiting_labels: return "awaiting_labels";
    case BoardState::done: return "done";
  }
  return "unknown";
}

AnnotationBoard::AnnotationBoard(std::size_t num_classes, std::optional<augment::ImageShape> image_shape)
    : num_classes_(num_classes), image_shape_(image_shape) {
  if (num_classes < 2) throw InvalidInput("need at least two classes");
}

void AnnotationBoard::set_metrics(std::string metrics_json) {
  std::lock_guard lock(mu_);
  metrics_json_ = std::move(metrics_json);
}

void AnnotationBoard::publish(std::size_t cycle, std::vector<Task> tasks) {
  std::lock_guard lock(mu_);
  if (state_ == BoardState::done) throw InvalidInput("board is closed");
  double limit = 0.0;
  for (const auto& t : tasks)
    for (double v : t.features) limit = std::max(limit, std::abs(v));
  feature_limit_ = limit > 0.0 ? limit : 1.0;
  tasks_ = std::move(tasks);
  cycle_ = cycle;
  committed_ = false;
  aborted_ = false;
  state_ = BoardState::awaiting_labels;
  cv_.notify_all();
}

std::vector<std::size_t> AnnotationBoard::wait_for_commit(std::optional<std::chrono::milliseconds> timeout) {
  std::unique_lock lock(mu_);
  auto ready = [&] { return committed_ || aborted_; };
  if (timeout) {
    if (!cv_.wait_for(lock, *timeout, ready)) throw OracleAborted("annotation timed out");
  } else {
    cv_.wait(lock, ready);
  }
  if (aborted_ && !committed_) {
    aborted_ = false;
    throw OracleAborted("annotation aborted");
  }
  std::vector<std::size_t> labels;
  for (const auto& t : tasks_) labels.push_back(*t.label);
  tasks_.clear();
  committed_ = false;
  return labels;
}

void AnnotationBoard::finish(std::string metrics_json) {
  std::lock_guard lock(mu_);
  metrics_json_ = std::move(metrics_json);
  state_ = BoardState::done;
  tasks_.clear();
  cv_.notify_all();
}

void AnnotationBoard::abort() {
  std::lock_guard lock(mu_);
  aborted_ = true;
  cv_.notify_all();
}

void AnnotationBoard::wait_done() const {
  std::unique_lock lock(mu_);
  cv_.wait(lock, [&] { return state_ == BoardState::done; });
}

BoardStatus AnnotationBoard::status() const {
  std::lock_guard lock(mu_);
  BoardStatus s;
  s.state = state_;
  s.cycle = cycle_;
  s.num_classes = num_classes_;
  s.total = tasks_.size();
  s.labeled = static_cast<std::size_t>(std::count_if(tasks_.begin(), tasks_.end(), [](auto& t) { return t.label.has_value(); }));
  s.metrics_json = metrics_json_;
  return s;
}

std::optional<std::vector<Task>> AnnotationBoard::tasks() const {
  std::lock_guard lock(mu_);
  if (state_ != BoardState::awaiting_labels) return std::nullopt;
  return tasks_;
}

std::optional<std::string> AnnotationBoard::image(std::uint64_t id) const {
  std::vector<double> features;
  std::optional<augment::ImageShape> shape;
  double limit = 1.0;
  {
    std::lock_guard lock(mu_);
    auto it = std::find_if(tasks_.begin(), tasks_.end(), [&](const Task& t) { return t.id == id; });
    if (it == tasks_.end()) return std::nullopt;
    features = it->features;
    shape = image_shape_;
    limit = feature_limit_;
  }
  if (shape && shape->pixels() == features.size()) return png::encode_intensity(features, shape->width, shape->height);
  return png::encode_bars(features, limit);
}

LabelOutcome AnnotationBoard::check_label(std::uint64_t id, std::int64_t cls) const {
  if (state_ != BoardState::awaiting_labels) return LabelOutcome::wrong_state;
  if (std::none_of(tasks_.begin(), tasks_.end(), [&](const Task& t) { return t.id == id; }))
    return LabelOutcome::unknown_id;
  if (cls < 0 || static_cast<std::uint64_t>(cls) >= num_classes_) return LabelOutcome::class_out_of_range;
  return LabelOutcome::ok;
}

LabelOutcome AnnotationBoard::post_label(std::uint64_t id, std::int64_t cls) { return post_labels({{id, cls}}); }

LabelOutcome AnnotationBoard::post_labels(const std::vector<std::pair<std::uint64_t, std::int64_t>>& labels) {
  std::lock_guard lock(mu_);
  for (const auto& [id, cls] : labels)
    if (auto r = check_label(id, cls); r != LabelOutcome::ok) return r;
  for (const auto& [id, cls] : labels)
    for (auto& t : tasks_)
      if (t.id == id) t.label = static_cast<std::size_t>(cls);
  return LabelOutcome::ok;
}

CommitOutcome AnnotationBoard::commit() {
  std::lock_guard lock(mu_);
  CommitOutcome out;
  if (state_ != BoardState::awaiting_labels || committed_) {
    out.kind = CommitOutcome::Kind::wrong_state;
    return out;
  }
  for (const auto& t : tasks_)
    if (!t.label) out.pending.push_back(t.id);
  if (!out.pending.empty()) {
    out.kind = CommitOutcome::Kind::pending;
    return out;
  }
  committed_ = true;
  state_ = BoardState::training;
  ++cycle_;
  out.next_cycle = cycle_;
  cv_.notify_all();
  return out;
}

std::vector<Task> make_tasks(const loop::AnnotationRequest& request) {
  std::unordered_map<std::uint64_t, std::size_t> rows;
  const auto& train = *request.train;
  for (std::size_t i = 0; i < train.size(); ++i) rows.emplace(train.ids[i], i);
  std::vector<Task> tasks;
  for (const auto& c : *request.candidates) {
    Task t;
    t.id = c.id;
    t.probs.assign(c.probs.data(), c.probs.data() + c.probs.size());
    t.predicted_class = c.predicted_class;
    if (c.aus) {
      t.aus_variance = c.aus->variance;
      t.perturbed_class = c.aus->perturbed_class;
    }
    if (c.bus) {
      t.bus_score = c.bus->weighted;
      t.entropy = c.bus->entropy;
      t.density = c.bus->density;
    }
    t.unified_rank = c.unified_rank;
    t.neighbor_ids = c.neighbor_ids;
    const Vector row = train.features.row(static_cast<Eigen::Index>(rows.at(c.id))).transpose();
    t.features.assign(row.data(), row.data() + row.size());
    tasks.push_back(std::move(t));
  }
  return tasks;
}

std::string phase_metrics_json(const loop::PhaseRecord& p) {
  json j{{"cycle", p.cycle},
         {"steps", p.steps},
         {"threshold", p.threshold},
         {"labeled_size", p.labeled_size},
         {"pseudo_size", p.pseudo_size},
         {"val_accuracy", p.val.accuracy},
         {"val_macro_f1", p.val.macro_f1},
         {"test_accuracy", p.test.accuracy},
         {"test_macro_f1", p.test.macro_f1}};
  return j.dump();
}

HumanOracle::HumanOracle(AnnotationBoard& board, std::optional<std::chrono::milliseconds> timeout)
    : board_(board), timeout_(timeout) {}

std::vector<std::size_t> HumanOracle::annotate(const loop::AnnotationRequest& request) {
  board_.publish(request.cycle, make_tasks(request));
  return board_.wait_for_commit(timeout_);
}

void HumanOracle::on_phase_end(const loop::PhaseRecord& phase) { board_.set_metrics(phase_metrics_json(phase)); }

void HumanOracle::on_finished(const loop::RunReport& report) {
  board_.finish(phase_metrics_json(report.final_phase()));
}

namespace {

constexpr const char* kPlaceholder = R"(<!doctype html>
<html><head><meta charset="utf-8"><title>alssl annotation</title></head>
<body>
<h1>alssl annotation service</h1>
<p>No UI build configured. Start the server with <code>--ui-dir</code>, or use the API:</p>
<ul>
<li><code>GET /api/cycle</code></li>
<li><code>GET /api/candidates</code></li>
<li><code>GET /api/candidates/{id}/image</code></li>
<li><code>POST /api/labels</code></li>
<li><code>POST /api/commit</code></li>
</ul>
</body></html>
)";

void reply(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void reply_error(httplib::Response& res, int status, const std::string& message) {
  reply(res, status, json{{"error", message}});
}

json task_json(const Task& t, bool image) {
  json j{{"id", t.id},
         {"probs", t.probs},
         {"predicted_class", t.predicted_class},
         {"aus_variance", t.aus_variance ? json(*t.aus_variance) : json(nullptr)},
         {"perturbed_class", t.perturbed_class ? json(*t.perturbed_class) : json(nullptr)},
         {"bus_score", t.bus_score ? json(*t.bus_score) : json(nullptr)},
         {"entropy", t.entropy ? json(*t.entropy) : json(nullptr)},
         {"density", t.density ? json(*t.density) : json(nullptr)},
         {"unified_rank", t.unified_rank},
         {"neighbor_ids", t.neighbor_ids},
         {"label", t.label ? json(*t.label) : json(nullptr)},
         {"image_url", "/api/candidates/" + std::to_string(t.id) + "/image"}};
  // Feature vectors are inlined for charting; images go through image_url.
  if (!image) j["features"] = t.features;
  return j;
}

bool parse_label(const json& item, std::pair<std::uint64_t, std::int64_t>& out) {
  if (!item.is_object() || !item.contains("id") || !item.contains("class")) return false;
  const auto& id = item["id"];
  const auto& cls = item["class"];
  if (!id.is_number_unsigned() || !cls.is_number_integer()) return false;
  out = {id.get<std::uint64_t>(), cls.get<std::int64_t>()};
  return true;
}

}  // namespace

struct AnnotationServer::Impl {
  AnnotationBoard& board;
  ServerOptions options;
  httplib::Server server;
  std::thread thread;
  int port = 0;

  Impl(AnnotationBoard& b, ServerOptions o) : board(b), options(std::move(o)) {}

  void routes() {
    server.Get("/api/cycle", [this](const httplib::Request&, httplib::Response& res) {
      const auto s = board.status();
      json metrics = json::parse(s.metrics_json, nullptr, false);
      if (metrics.is_discarded()) metrics = json::object();
      reply(res, 200,
            json{{"cycle", s.cycle},
                 {"state", to_string(s.state)},
                 {"num_classes", s.num_classes},
                 {"n_candidates", s.total},
                 {"n_labeled", s.labeled},
                 {"pending", s.total - s.labeled},
                 {"metrics_so_far", metrics}});
    });

    server.Get("/api/candidates", [this](const httplib::Request&, httplib::Response& res) {
      auto tasks = board.tasks();
      if (!tasks) return reply_error(res, 409, std::string("no candidates while ") + to_string(board.status().state));
      json list = json::array();
      for (const auto& t : *tasks) list.push_back(task_json(t, board.holds_images()));
      reply(res, 200, json{{"cycle", board.status().cycle}, {"candidates", list}});
    });

    server.Get(R"(/api/candidates/(\d+)/image)", [this](const httplib::Request& req, httplib::Response& res) {
      std::uint64_t id = 0;
      try {
        id = std::stoull(req.matches[1].str());
      } catch (const std::exception&) {
        return reply_error(res, 400, "bad id");
      }
      auto png = board.image(id);
      if (!png) return reply_error(res, 404, "unknown candidate " + std::to_string(id));
      res.set_content(*png, "image/png");
    });

    server.Post("/api/labels", [this](const httplib::Request& req, httplib::Response& res) {
      const json body = json::parse(req.body, nullptr, false);
      if (body.is_discarded()) return reply_error(res, 400, "body is not JSON");
      std::vector<std::pair<std::uint64_t, std::int64_t>> labels;
      if (body.is_object() && body.contains("labels")) {
        if (!body["labels"].is_array()) return reply_error(res, 400, "labels must be an array");
        for (const auto& item : body["labels"]) {
          std::pair<std::uint64_t, std::int64_t> l;
          if (!parse_label(item, l)) return reply_error(res, 400, "each label needs integer id and class");
          labels.push_back(l);
        }
      } else {
        std::pair<std::uint64_t, std::int64_t> l;
        if (!parse_label(body, l)) return reply_error(res, 400, "expected {\"id\": n, \"class\": c}");
        labels.push_back(l);
      }
      switch (board.post_labels(labels)) {
        case LabelOutcome::ok: {
          const auto s = board.status();
          return reply(res, 200, json{{"ok", true}, {"labeled", s.labeled}, {"pending", s.total - s.labeled}});
        }
        case LabelOutcome::unknown_id: return reply_error(res, 404, "unknown candidate id");
        case LabelOutcome::class_out_of_range: return reply_error(res, 422, "class out of range");
        case LabelOutcome::wrong_state: return reply_error(res, 409, "not awaiting labels");
      }
    });

    server.Post("/api/commit", [this](const httplib::Request&, httplib::Response& res) {
      const auto out = board.commit();
      switch (out.kind) {
        case CommitOutcome::Kind::ok: return reply(res, 200, json{{"ok", true}, {"cycle", out.next_cycle}});
        case CommitOutcome::Kind::pending:
          return reply(res, 409, json{{"error", "unlabeled candidates remain"}, {"pending", out.pending}});
        case CommitOutcome::Kind::wrong_state: return reply_error(res, 409, "nothing to commit");
      }
    });

    bool mounted = false;
    if (options.ui_dir) {
      if (!std::filesystem::is_directory(*options.ui_dir))
        throw InvalidInput("UI directory not found: " + options.ui_dir->string());
      mounted = server.set_mount_point("/", options.ui_dir->string());
    }
    if (!mounted) {
      server.Get("/", [](const httplib::Request&, httplib::Response& res) { res.set_content(kPlaceholder, "text/html"); });
    }
  }
};

AnnotationServer::AnnotationServer(AnnotationBoard& board, ServerOptions options)
    : impl_(std::make_unique<Impl>(board, std::move(options))) {
  impl_->routes();
}

AnnotationServer::~AnnotationServer() { stop(); }

int AnnotationServer::start() {
  auto& s = *impl_;
  if (s.thread.joinable()) return s.port;
  if (s.options.port == 0) {
    s.port = s.server.bind_to_any_port(s.options.bind);
    if (s.port <= 0) throw Error("cannot bind " + s.options.bind);
  } else {
    if (!s.server.bind_to_port(s.options.bind, s.options.port))
      throw Error("cannot bind " + s.options.bind + ":" + std::to_string(s.options.port));
    s.port = s.options.port;
  }
  s.thread = std::thread([&s] { s.server.listen_after_bind(); });
  s.server.wait_until_ready();
  return s.port;
}

void AnnotationServer::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

int AnnotationServer::port() const noexcept { return impl_->port; }

}  // namespace alssl::annotation
