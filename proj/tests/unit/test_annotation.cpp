#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <thread>

#include <gtest/gtest.h>
#include <json.hpp>

// Eigen before httplib: <resolv.h> defines a _res macro.
#include "alssl/annotation.hpp"
#include "alssl/errors.hpp"

#include <httplib.h>

using namespace alssl;
using namespace alssl::annotation;
using nlohmann::json;
using namespace std::chrono_literals;

namespace {

Task task(std::uint64_t id, double rank, std::size_t features = 3) {
  Task t;
  t.id = id;
  t.probs = {0.6, 0.4};
  t.unified_rank = rank;
  t.features.assign(features, 0.5);
  return t;
}

RunConfig tiny_config() {
  RunConfig cfg;
  cfg.dataset.num_classes = 2;
  cfg.dataset.class_counts = {120, 80};
  cfg.dataset.noise = 1.8;
  cfg.model.hidden = {12, 8};
  cfg.loop.max_cycles = 2;
  cfg.loop.steps_per_cycle = 40;
  cfg.loop.eval_interval = 20;
  cfg.loop.threads = 1;
  cfg.loop.selector_budget_fraction = 0.02;
  return cfg;
}

struct Served {
  AnnotationBoard board;
  AnnotationServer server;
  httplib::Client client;

  explicit Served(std::size_t classes, std::optional<augment::ImageShape> shape = std::nullopt,
                  std::optional<std::filesystem::path> ui = std::nullopt)
      : board(classes, shape), server(board, ServerOptions{"127.0.0.1", 0, ui}), client("127.0.0.1", server.start()) {
    client.set_read_timeout(10, 0);
  }

  json get(const std::string& path, int expect) {
    auto r = client.Get(path);
    EXPECT_TRUE(r);
    if (!r) return {};
    EXPECT_EQ(r->status, expect) << path << " " << r->body;
    return json::parse(r->body, nullptr, false);
  }

  json post(const std::string& path, const std::string& body, int expect) {
    auto r = client.Post(path, body, "application/json");
    EXPECT_TRUE(r);
    if (!r) return {};
    EXPECT_EQ(r->status, expect) << path << " " << body << " -> " << r->body;
    return json::parse(r->body, nullptr, false);
  }
};

}  // namespace

TEST(Board, LifecycleAndUpsert) {
  AnnotationBoard b(3, std::nullopt);
  EXPECT_EQ(b.status().state, BoardState::training);
  EXPECT_FALSE(b.tasks().has_value());
  EXPECT_EQ(b.post_label(1, 0), LabelOutcome::wrong_state);
  b.publish(0, {task(1, 1.0), task(2, 0.5)});
  EXPECT_EQ(b.status().state, BoardState::awaiting_labels);
  EXPECT_EQ(b.post_label(9, 0), LabelOutcome::unknown_id);
  EXPECT_EQ(b.post_label(1, 3), LabelOutcome::class_out_of_range);
  EXPECT_EQ(b.post_label(1, -1), LabelOutcome::class_out_of_range);
  EXPECT_EQ(b.post_label(1, 0), LabelOutcome::ok);
  EXPECT_EQ(b.post_label(1, 2), LabelOutcome::ok);
  const auto pending = b.commit();
  EXPECT_EQ(pending.kind, CommitOutcome::Kind::pending);
  EXPECT_EQ(pending.pending, (std::vector<std::uint64_t>{2}));
  EXPECT_EQ(b.post_labels({{2, 1}, {7, 0}}), LabelOutcome::unknown_id);
  EXPECT_EQ(b.status().labeled, 1u);
  EXPECT_EQ(b.post_labels({{2, 1}}), LabelOutcome::ok);
  EXPECT_EQ(b.commit().kind, CommitOutcome::Kind::ok);
  EXPECT_EQ(b.commit().kind, CommitOutcome::Kind::wrong_state);
  EXPECT_EQ(b.post_label(1, 0), LabelOutcome::wrong_state);
  EXPECT_EQ(b.wait_for_commit(0ms), (std::vector<std::size_t>{2, 1}));
  EXPECT_EQ(b.status().cycle, 1u);
}

TEST(Board, TimeoutAndAbort) {
  AnnotationBoard b(2, std::nullopt);
  b.publish(0, {task(1, 1.0)});
  EXPECT_THROW(b.wait_for_commit(20ms), OracleAborted);
  std::thread t([&] {
    std::this_thread::sleep_for(20ms);
    b.abort();
  });
  EXPECT_THROW(b.wait_for_commit(std::nullopt), OracleAborted);
  t.join();
  EXPECT_EQ(b.post_label(1, 1), LabelOutcome::ok);
  EXPECT_EQ(b.commit().kind, CommitOutcome::Kind::ok);
  EXPECT_EQ(b.wait_for_commit(1s), (std::vector<std::size_t>{1}));
  b.finish("{}");
  EXPECT_EQ(b.status().state, BoardState::done);
  b.wait_done();
  EXPECT_THROW(b.publish(1, {}), InvalidInput);
}

TEST(Board, ImagesRenderAsPng) {
  AnnotationBoard img(2, augment::ImageShape{2, 2});
  img.publish(0, {task(5, 1.0, 4)});
  const auto png = img.image(5);
  ASSERT_TRUE(png.has_value());
  EXPECT_EQ(png->substr(1, 3), "PNG");
  EXPECT_FALSE(img.image(6).has_value());
  AnnotationBoard feat(2, std::nullopt);
  feat.publish(0, {task(5, 1.0, 3)});
  EXPECT_TRUE(feat.image(5).has_value());
}

TEST(Http, CycleStatusAndCandidates) {
  Served s(2);
  auto st = s.get("/api/cycle", 200);
  EXPECT_EQ(st["state"], "training");
  EXPECT_EQ(st["n_candidates"], 0);
  s.get("/api/candidates", 409);

  Task both = task(11, 1.0);
  both.aus_variance = 0.7;
  both.bus_score = 0.3;
  s.board.publish(0, {both, task(12, 0.75), task(13, 0.5), task(14, 0.25)});
  const auto c = s.get("/api/candidates", 200);
  ASSERT_EQ(c["candidates"].size(), 4u);
  EXPECT_EQ(c["candidates"][0]["id"], 11);
  EXPECT_EQ(c["candidates"][0]["aus_variance"], 0.7);
  EXPECT_EQ(c["candidates"][0]["bus_score"], 0.3);
  EXPECT_TRUE(c["candidates"][1]["aus_variance"].is_null());
  EXPECT_EQ(c["candidates"][2]["features"].size(), 3u);
  EXPECT_EQ(c["candidates"][0]["image_url"], "/api/candidates/11/image");
  for (std::size_t i = 1; i < 4; ++i)
    EXPECT_GE(c["candidates"][i - 1]["unified_rank"].get<double>(), c["candidates"][i]["unified_rank"].get<double>());

  auto img = s.client.Get("/api/candidates/11/image");
  ASSERT_TRUE(img);
  EXPECT_EQ(img->status, 200);
  EXPECT_EQ(img->get_header_value("Content-Type"), "image/png");
  s.get("/api/candidates/99/image", 404);
}

TEST(Http, LabelsAndCommit) {
  Served s(2);
  s.board.publish(3, {task(1, 1.0), task(2, 0.5)});
  s.post("/api/labels", R"({"id": 1, "class": 0})", 200);
  s.post("/api/labels", R"({"id": 1, "class": 1})", 200);
  s.post("/api/labels", R"({"id": 1, "class": 2})", 422);
  s.post("/api/labels", R"({"id": 42, "class": 0})", 404);
  s.post("/api/labels", "not json", 400);
  s.post("/api/labels", R"({"id": "x", "class": 0})", 400);
  s.post("/api/labels", R"({"labels": 5})", 400);
  const auto pending = s.post("/api/commit", "", 409);
  EXPECT_EQ(pending["pending"], json::array({2}));
  s.post("/api/labels", R"({"labels": [{"id": 2, "class": 0}]})", 200);
  auto st = s.get("/api/cycle", 200);
  EXPECT_EQ(st["state"], "awaiting_labels");
  EXPECT_EQ(st["n_labeled"], st["n_candidates"]);
  const auto ok = s.post("/api/commit", "", 200);
  EXPECT_EQ(ok["cycle"], 4);
  s.post("/api/commit", "", 409);
  s.post("/api/labels", R"({"id": 1, "class": 0})", 409);
  EXPECT_EQ(s.board.wait_for_commit(1s), (std::vector<std::size_t>{1, 0}));
  EXPECT_EQ(s.get("/api/cycle", 200)["cycle"], 4);
}

TEST(Http, PlaceholderAndStaticUi) {
  {
    Served s(2);
    auto r = s.client.Get("/");
    ASSERT_TRUE(r);
    EXPECT_EQ(r->status, 200);
    EXPECT_NE(r->body.find("/api/cycle"), std::string::npos);
  }
  const auto dir = std::filesystem::temp_directory_path() / "alssl_ui_test";
  std::filesystem::create_directories(dir);
  std::ofstream(dir / "index.html") << "<html>ui build</html>";
  {
    Served s(2, std::nullopt, dir);
    auto r = s.client.Get("/");
    ASSERT_TRUE(r);
    EXPECT_EQ(r->status, 200);
    EXPECT_NE(r->body.find("ui build"), std::string::npos);
    EXPECT_EQ(s.get("/api/cycle", 200)["state"], "training");
  }
  std::filesystem::remove_all(dir);
  AnnotationBoard b(2, std::nullopt);
  EXPECT_THROW(AnnotationServer(b, ServerOptions{"127.0.0.1", 0, dir}), InvalidInput);
}

// A scripted annotator that answers every cycle with the ground truth over
// HTTP must reproduce the simulated-oracle report exactly.
TEST(Http, HumanOracleMatchesSimulatedOracle) {
  const auto cfg = tiny_config();
  const auto splits = loop::load_splits(cfg);
  loop::SimulatedOracle sim(splits.train);
  const auto expected = loop::report_json(loop::run_loop(splits, cfg, sim), cfg);

  Served s(splits.train.num_classes);
  std::map<std::uint64_t, std::size_t> truth;
  for (std::size_t i = 0; i < splits.train.size(); ++i) truth[splits.train.ids[i]] = splits.train.label(i);

  std::atomic<int> cycles{0};
  std::thread annotator([&] {
    httplib::Client c("127.0.0.1", s.server.port());
    for (;;) {
      auto r = c.Get("/api/cycle");
      if (!r) continue;
      const auto st = json::parse(r->body);
      if (st["state"] == "done") return;
      if (st["state"] != "awaiting_labels") {
        std::this_thread::sleep_for(2ms);
        continue;
      }
      const auto cands = json::parse(c.Get("/api/candidates")->body)["candidates"];
      json labels = json::array();
      for (const auto& t : cands) labels.push_back({{"id", t["id"]}, {"class", truth.at(t["id"].get<std::uint64_t>())}});
      c.Post("/api/labels", json{{"labels", labels}}.dump(), "application/json");
      c.Post("/api/commit", "", "application/json");
      ++cycles;
    }
  });
  HumanOracle human(s.board, 60s);
  const auto report = loop::run_loop(splits, cfg, human);
  annotator.join();
  EXPECT_EQ(loop::report_json(report, cfg), expected);
  EXPECT_EQ(cycles.load(), static_cast<int>(cfg.loop.max_cycles));
  EXPECT_EQ(s.get("/api/cycle", 200)["state"], "done");
}
