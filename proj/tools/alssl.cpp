// alssl command-line front end.

#include <chrono>
#include <cmath>
#include <csignal>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "alssl/annotation.hpp"
#include "alssl/checkpoint.hpp"
#include "alssl/config.hpp"
#include "alssl/dataset.hpp"
#include "alssl/errors.hpp"
#include "alssl/loop.hpp"
#include "alssl/metrics.hpp"

namespace {

using json = nlohmann::json;
using namespace alssl;

enum Exit : int { kOk = 0, kFailure = 1, kConfig = 2, kData = 3 };

struct CommonOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> output_dir;
  std::optional<std::string> data_path;
  std::optional<std::size_t> max_cycles;
  std::optional<std::size_t> steps;
  std::optional<std::size_t> threads;
  std::string variant;
  bool cold_start = false;
  bool quiet = false;
};

void add_common(CLI::App* app, CommonOptions& o) {
  app->add_option("-c,--config", o.config_path, "JSON configuration file");
  app->add_option("--seed", o.seed, "loop seed");
  app->add_option("-o,--output-dir", o.output_dir, "directory for run outputs");
  app->add_option("--data", o.data_path, "CSV dataset (overrides the configured dataset)");
  app->add_option("--max-cycles", o.max_cycles, "maximum active-learning cycles");
  app->add_option("--steps", o.steps, "training steps per phase");
  app->add_option("--threads", o.threads, "worker threads for scoring (0 = all cores)");
  app->add_option("--variant", o.variant, "full, -AS, -AUS, -BUS or SSL+RS");
  app->add_flag("--cold-start", o.cold_start, "reinitialise the model before every phase");
  app->add_flag("-q,--quiet", o.quiet, "suppress progress output");
}

Variants parse_variant(const std::string& name) {
  Variants v;
  if (name.empty() || name == "full") return v;
  if (name == "-AS") v.disable_adaptive_threshold = true;
  else if (name == "-AUS") v.disable_aus = true;
  else if (name == "-BUS") v.disable_bus = true;
  else if (name == "SSL+RS") v.random_sampling = true;
  else throw ConfigError("loop.variants", "unknown variant '" + name + "'");
  return v;
}

RunConfig resolve_config(const CommonOptions& o) {
  RunConfig cfg = o.config_path.empty() ? parse_config("") : load_config(o.config_path);
  if (o.seed) cfg.loop.seed = *o.seed;
  if (o.output_dir) cfg.output_dir = *o.output_dir;
  if (o.data_path) {
    cfg.dataset.kind = data::DatasetKind::csv_features;
    cfg.dataset.path = *o.data_path;
  }
  if (o.max_cycles) cfg.loop.max_cycles = *o.max_cycles;
  if (o.steps) cfg.loop.steps_per_cycle = *o.steps;
  if (o.threads) cfg.loop.threads = *o.threads;
  if (!o.variant.empty()) cfg.loop.variants = parse_variant(o.variant);
  if (o.cold_start) cfg.loop.cold_start = true;
  cfg.validate();
  return cfg;
}

/// Prints each phase as it ends.
class ProgressOracle : public loop::Oracle {
 public:
  ProgressOracle(loop::Oracle& inner, bool quiet) : inner_(inner), quiet_(quiet) {}
  std::vector<std::size_t> annotate(const loop::AnnotationRequest& r) override { return inner_.annotate(r); }
  void on_phase_end(const loop::PhaseRecord& p) override {
    if (!quiet_)
      std::cerr << "cycle " << p.cycle << ": steps=" << p.steps << " labeled=" << p.labeled_size
                << " pseudo=" << p.pseudo_size << " threshold=" << p.threshold << " val_acc=" << p.val.accuracy
                << " test_acc=" << p.test.accuracy << "\n";
    inner_.on_phase_end(p);
  }
  void on_finished(const loop::RunReport& r) override { inner_.on_finished(r); }

 private:
  loop::Oracle& inner_;
  bool quiet_;
};

void print_summary(const loop::RunReport& report, const std::string& dir) {
  const auto& f = report.final_phase();
  json j{{"variant", report.variant},
         {"cycles", report.cycles.size()},
         {"annotations", report.total_annotations},
         {"stop_reason", report.stop_reason},
         {"test_accuracy", f.test.accuracy},
         {"test_macro_f1", f.test.macro_f1},
         {"output_dir", dir}};
  std::cout << j.dump(2) << "\n";
}

int cmd_train(const CommonOptions& o) {
  const auto cfg = resolve_config(o);
  const auto splits = loop::load_splits(cfg);
  loop::SimulatedOracle sim(splits.train);
  ProgressOracle oracle(sim, o.quiet);
  const auto report = loop::run_loop(splits, cfg, oracle);
  loop::write_run_outputs(cfg.output_dir, report, cfg);
  print_summary(report, cfg.output_dir);
  return kOk;
}

struct ServeOptions {
  std::string bind = "127.0.0.1";
  int port = 8080;
  std::string ui_dir;
  bool exit_when_done = false;
  std::optional<double> timeout_s;
};

std::atomic<bool> g_interrupted{false};

int cmd_serve(const CommonOptions& o, const ServeOptions& s) {
  const auto cfg = resolve_config(o);
  const auto splits = loop::load_splits(cfg);
  annotation::AnnotationBoard board(splits.train.num_classes, splits.train.image_shape);
  annotation::ServerOptions so;
  so.bind = s.bind;
  so.port = s.port;
  if (!s.ui_dir.empty()) so.ui_dir = s.ui_dir;
  annotation::AnnotationServer server(board, so);
  const int port = server.start();
  std::cerr << "annotation service listening on http://" << s.bind << ":" << port << "/\n";

  std::optional<std::chrono::milliseconds> timeout;
  if (s.timeout_s) timeout = std::chrono::milliseconds(static_cast<long long>(*s.timeout_s * 1000.0));
  annotation::HumanOracle human(board, timeout);
  ProgressOracle oracle(human, o.quiet);
  const auto report = loop::run_loop(splits, cfg, oracle);
  loop::write_run_outputs(cfg.output_dir, report, cfg);
  print_summary(report, cfg.output_dir);
  if (!s.exit_when_done) {
    std::cerr << "run finished; serving results until interrupted\n";
    std::signal(SIGINT, [](int) { g_interrupted = true; });
    std::signal(SIGTERM, [](int) { g_interrupted = true; });
    while (!g_interrupted) std::this_thread::sleep_for(std::chrono::milliseconds(200));
  }
  server.stop();
  return kOk;
}

struct ModelIoOptions {
  std::string checkpoint;
  std::string data;
  std::optional<std::size_t> num_classes;
};

data::Dataset load_csv_for(const ModelIoOptions& m, const nn::TaskModel& model) {
  auto ds = data::load_csv(m.data, m.num_classes.value_or(model.num_classes()));
  if (ds.dim() != model.input_dim())
    throw DataError(DataErrorCode::malformed_header, "dataset has " + std::to_string(ds.dim()) +
                                                         " features but the model expects " +
                                                         std::to_string(model.input_dim()));
  ds.num_classes = model.num_classes();
  return ds;
}

int cmd_eval(const ModelIoOptions& m) {
  const auto model = load_checkpoint(m.checkpoint);
  const auto ds = load_csv_for(m, model);
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < ds.size(); ++i)
    if (ds.labels[i]) rows.push_back(i);
  if (rows.empty()) throw DataError(DataErrorCode::degenerate, "no labeled rows to evaluate");
  const auto labeled = ds.subset(rows);
  const auto out = nn::evaluate(model, labeled.features);
  const auto mt = metrics::compute_metrics(out.predicted, labeled.label_vector(), model.num_classes());
  json j{{"samples", labeled.size()},
         {"accuracy", mt.accuracy},
         {"macro_precision", mt.macro_precision},
         {"macro_recall", mt.macro_recall},
         {"macro_f1", mt.macro_f1},
         {"error_rate", mt.error_rate}};
  std::cout << j.dump(2) << "\n";
  return kOk;
}

int cmd_select(const ModelIoOptions& m, const CommonOptions& o, std::size_t k, bool all_rows) {
  auto cfg = resolve_config(o);
  const auto model = load_checkpoint(m.checkpoint);
  const auto ds = load_csv_for(m, model);
  std::vector<std::uint64_t> pool;
  for (std::size_t i = 0; i < ds.size(); ++i)
    if (all_rows || !ds.labels[i]) pool.push_back(ds.ids[i]);
  std::sort(pool.begin(), pool.end());
  const auto rec = loop::select_candidates(model, ds, pool, pool, cfg, k, 2 * k, 0);
  json list = json::array();
  for (const auto& c : rec.candidates) {
    json item{{"id", c.id}, {"predicted_class", c.predicted_class}, {"unified_rank", c.unified_rank}};
    std::vector<double> probs(c.probs.data(), c.probs.data() + c.probs.size());
    item["probs"] = probs;
    if (c.aus) item["aus_variance"] = c.aus->variance;
    if (c.bus) item["bus_score"] = c.bus->weighted;
    list.push_back(std::move(item));
  }
  std::cout << json{{"unstable", rec.unstable}, {"uncertain", rec.uncertain}, {"candidates", list}}.dump(2) << "\n";
  return kOk;
}

struct GenOptions {
  std::string kind = "gaussians";
  std::size_t classes = 3;
  std::size_t total = 3000;
  std::size_t dim = 2;
  double noise = 1.0;
  std::uint64_t seed = 0;
  std::vector<double> ratio;
  std::vector<std::size_t> counts;
  std::string out;
};

int cmd_gen(const GenOptions& g) {
  data::DatasetSpec spec;
  auto kind = data::parse_kind(g.kind);
  if (!kind || *kind == data::DatasetKind::csv_features || *kind == data::DatasetKind::idx_images)
    throw ConfigError("dataset.kind", "gen-data supports gaussians, moons and rings");
  spec.kind = *kind;
  spec.num_classes = g.classes;
  spec.total = g.total;
  spec.dim = g.dim;
  spec.noise = g.noise;
  spec.seed = g.seed;
  spec.class_ratio = g.ratio;
  spec.class_counts = g.counts;
  try {
    spec.validate();
  } catch (const InvalidInput& e) {
    throw ConfigError("dataset", e.what());
  }
  const auto ds = data::gen_synthetic(spec);
  if (g.out.empty() || g.out == "-") std::cout << data::to_csv(ds);
  else data::save_csv(g.out, ds);
  return kOk;
}

struct AblateOptions {
  std::size_t seeds = 3;
  std::vector<std::string> variants{"full", "-AS", "-AUS", "-BUS", "SSL+RS"};
};

int cmd_ablate(const CommonOptions& o, const AblateOptions& a) {
  const auto base = resolve_config(o);
  std::map<std::string, std::vector<double>> acc, f1;
  json runs = json::array();
  for (std::size_t s = 0; s < a.seeds; ++s) {
    auto cfg = base;
    cfg.loop.seed = base.loop.seed + s;
    cfg.dataset.seed = base.dataset.seed + s;
    const auto splits = loop::load_splits(cfg);
    for (const auto& name : a.variants) {
      cfg.loop.variants = parse_variant(name);
      cfg.loop.export_representations = false;
      loop::SimulatedOracle oracle(splits.train);
      const auto report = loop::run_loop(splits, cfg, oracle);
      const auto& t = report.final_phase().test;
      acc[name].push_back(t.accuracy);
      f1[name].push_back(t.macro_f1);
      runs.push_back({{"seed", cfg.loop.seed}, {"variant", name}, {"test_accuracy", t.accuracy}, {"test_macro_f1", t.macro_f1}});
      if (!o.quiet) std::cerr << "seed " << cfg.loop.seed << " " << name << ": acc=" << t.accuracy << " f1=" << t.macro_f1 << "\n";
    }
  }
  auto mean_std = [](const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m += x;
    m /= static_cast<double>(v.size());
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::pair{m, v.size() > 1 ? std::sqrt(s / static_cast<double>(v.size() - 1)) : 0.0};
  };
  json summary = json::array();
  for (const auto& name : a.variants) {
    const auto [am, as] = mean_std(acc[name]);
    const auto [fm, fs] = mean_std(f1[name]);
    summary.push_back({{"variant", name}, {"accuracy_mean", am}, {"accuracy_std", as}, {"macro_f1_mean", fm}, {"macro_f1_std", fs}});
    std::cout << name << "\tacc " << am << " +- " << as << "\tf1 " << fm << " +- " << fs << "\n";
  }
  std::filesystem::create_directories(base.output_dir);
  std::ofstream(std::filesystem::path(base.output_dir) / "ablation.json") << json{{"runs", runs}, {"summary", summary}}.dump(2) << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"alssl: semi-supervised active learning engine"};
  app.require_subcommand(1);

  CommonOptions common;
  auto* train = app.add_subcommand("train", "run the loop with a simulated oracle");
  add_common(train, common);

  ServeOptions serve_opts;
  auto* serve = app.add_subcommand("serve", "run the loop with the HTTP annotation service as oracle");
  add_common(serve, common);
  serve->add_option("--bind", serve_opts.bind, "listen address");
  serve->add_option("--port", serve_opts.port, "listen port (0 = any free port)");
  serve->add_option("--ui-dir", serve_opts.ui_dir, "directory with the annotation UI build");
  serve->add_flag("--exit-when-done", serve_opts.exit_when_done, "stop serving when the loop finishes");
  serve->add_option("--timeout", serve_opts.timeout_s, "seconds to wait for a commit before retrying");

  ModelIoOptions model_io;
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a labeled CSV");
  eval->add_option("--checkpoint", model_io.checkpoint, "model checkpoint")->required();
  eval->add_option("--data", model_io.data, "CSV dataset")->required();

  std::size_t select_k = 10;
  bool select_all = false;
  CommonOptions select_common;
  ModelIoOptions select_io;
  auto* select = app.add_subcommand("select", "score a CSV pool with a checkpoint and list candidates");
  select->add_option("--checkpoint", select_io.checkpoint, "model checkpoint")->required();
  select->add_option("--pool", select_io.data, "CSV pool; rows without a label are scored")->required();
  select->add_option("-k", select_k, "samples per selector");
  select->add_flag("--all", select_all, "score labeled rows too");
  select->add_option("-c,--config", select_common.config_path, "JSON configuration file");

  GenOptions gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "write a synthetic dataset as CSV");
  gen_cmd->add_option("--kind", gen.kind, "gaussians, moons or rings");
  gen_cmd->add_option("--classes", gen.classes, "number of classes");
  gen_cmd->add_option("--total", gen.total, "total samples");
  gen_cmd->add_option("--dim", gen.dim, "feature dimension");
  gen_cmd->add_option("--noise", gen.noise, "noise standard deviation");
  gen_cmd->add_option("--seed", gen.seed, "generator seed");
  gen_cmd->add_option("--ratio", gen.ratio, "class ratio, e.g. --ratio 8.7 1");
  gen_cmd->add_option("--counts", gen.counts, "explicit per-class counts");
  gen_cmd->add_option("-o,--out", gen.out, "output CSV (default stdout)");

  AblateOptions ablate_opts;
  auto* ablate = app.add_subcommand("ablate", "compare variants over several seeds");
  add_common(ablate, common);
  ablate->add_option("--seeds", ablate_opts.seeds, "number of seeds");
  ablate->add_option("--variants", ablate_opts.variants, "comma-separated variants to run")->delimiter(',');

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) return cmd_train(common);
    if (*serve) return cmd_serve(common, serve_opts);
    if (*eval) return cmd_eval(model_io);
    if (*select) return cmd_select(select_io, select_common, select_k, select_all);
    if (*gen_cmd) return cmd_gen(gen);
    if (*ablate) return cmd_ablate(common, ablate_opts);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kFailure;
}
