#include "alssl/config.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include <json.hpp>

#include "alssl/errors.hpp"

namespace alssl {

using json = nlohmann::json;

std::string Variants::name() const {
  if (random_sampling) return disable_adaptive_threshold ? "SSL+RS-AS" : "SSL+RS";
  std::string n;
  if (disable_adaptive_threshold) n += "-AS";
  if (disable_aus) n += "-AUS";
  if (disable_bus) n += "-BUS";
  return n.empty() ? "full" : n;
}

namespace {

std::string join(const std::string& prefix, const std::string& key) { return prefix.empty() ? key : prefix + "." + key; }

/// Typed, path-aware reads from one JSON object; remembers which keys it saw
/// so leftovers can be reported as unknown.
class Section {
 public:
  Section(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
  }

  template <typename Fn>
  void with(const std::string& key, Fn&& fn) {
    known_.insert(key);
    auto it = obj_.find(key);
    if (it != obj_.end()) fn(*it, join(path_, key));
  }

  void number(const std::string& key, double& out) {
    with(key, [&](const json& v, const std::string& p) { out = as_number(v, p); });
  }

  void unsigned_int(const std::string& key, std::size_t& out) {
    with(key, [&](const json& v, const std::string& p) { out = static_cast<std::size_t>(as_unsigned(v, p)); });
  }

  void u64(const std::string& key, std::uint64_t& out) {
    with(key, [&](const json& v, const std::string& p) { out = as_unsigned(v, p); });
  }

  void boolean(const std::string& key, bool& out) {
    with(key, [&](const json& v, const std::string& p) {
      if (!v.is_boolean()) throw ConfigError(p, "expected a boolean");
      out = v.get<bool>();
    });
  }

  void string(const std::string& key, std::string& out) {
    with(key, [&](const json& v, const std::string& p) {
      if (!v.is_string()) throw ConfigError(p, "expected a string");
      out = v.get<std::string>();
    });
  }

  template <typename Fn>
  void section(const std::string& key, Fn&& fn) {
    with(key, [&](const json& v, const std::string& p) {
      Section sub(v, p);
      fn(sub);
      sub.finish();
    });
  }

  void finish() const {
    for (auto it = obj_.begin(); it != obj_.end(); ++it)
      if (!known_.contains(it.key())) throw ConfigError(join(path_, it.key()), "unknown key");
  }

  static double as_number(const json& v, const std::string& p) {
    if (!v.is_number()) throw ConfigError(p, "expected a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) throw ConfigError(p, "expected a finite number");
    return d;
  }

  static std::uint64_t as_unsigned(const json& v, const std::string& p) {
    if (v.is_number_unsigned()) return v.get<std::uint64_t>();
    if (v.is_number_integer()) throw ConfigError(p, "must be nonnegative");
    throw ConfigError(p, "expected a nonnegative integer");
  }

 private:
  const json& obj_;
  std::string path_;
  std::set<std::string> known_;
};

void read_policy(Section& s, augment::AugmentPolicy& p, bool strong) {
  s.number("jitter_sigma", p.jitter_sigma);
  s.number("shift_fraction", p.shift_fraction);
  s.number("flip_probability", p.flip_probability);
  if (strong) {
    s.number("drop_probability", p.drop_probability);
    s.with("scale_range", [&](const json& v, const std::string& path) {
      if (!v.is_array() || v.size() != 2) throw ConfigError(path, "expected [lo, hi]");
      p.scale_lo = Section::as_number(v[0], path + "[0]");
      p.scale_hi = Section::as_number(v[1], path + "[1]");
    });
  }
}

RunConfig from_json(const json& root) {
  RunConfig cfg;
  Section top(root, "");
  top.section("model", [&](Section& s) {
    s.with("hidden", [&](const json& v, const std::string& p) {
      if (!v.is_array() || v.empty()) throw ConfigError(p, "expected a nonempty array of layer widths");
      cfg.model.hidden.clear();
      for (std::size_t i = 0; i < v.size(); ++i)
        cfg.model.hidden.push_back(static_cast<std::size_t>(Section::as_unsigned(v[i], p + "[" + std::to_string(i) + "]")));
    });
  });
  top.section("optimizer", [&](Section& s) {
    s.number("learning_rate", cfg.optimizer.learning_rate);
    s.number("momentum", cfg.optimizer.momentum);
    s.number("weight_decay", cfg.optimizer.weight_decay);
    s.unsigned_int("batch_size", cfg.optimizer.batch_size);
  });
  top.section("ssl", [&](Section& s) {
    s.number("alpha", cfg.ssl.alpha);
    s.number("beta", cfg.ssl.beta);
    s.number("mu", cfg.ssl.mu);
    s.u64("t_max", cfg.ssl.t_max);
    s.unsigned_int("unlabeled_batch_size", cfg.ssl.unlabeled_batch_size);
  });
  top.section("aus", [&](Section& s) {
    s.number("tau", cfg.aus.tau);
    s.unsigned_int("power_iterations", cfg.aus.power_iterations);
    s.number("xi_scale", cfg.aus.xi_scale);
  });
  top.section("bus", [&](Section& s) { s.unsigned_int("neighbors", cfg.bus.neighbors); });
  top.section("augment", [&](Section& s) {
    s.section("weak", [&](Section& w) { read_policy(w, cfg.augment.weak, false); });
    s.section("strong", [&](Section& w) { read_policy(w, cfg.augment.strong, true); });
  });
  top.section("loop", [&](Section& s) {
    auto& l = cfg.loop;
    s.number("initial_fraction", l.initial_fraction);
    s.unsigned_int("max_cycles", l.max_cycles);
    s.number("selector_budget_fraction", l.selector_budget_fraction);
    s.number("annotation_budget_fraction", l.annotation_budget_fraction);
    s.unsigned_int("steps_per_cycle", l.steps_per_cycle);
    s.unsigned_int("eval_interval", l.eval_interval);
    s.unsigned_int("patience", l.patience);
    s.with("target_accuracy", [&](const json& v, const std::string& p) {
      if (v.is_null()) l.target_accuracy.reset();
      else l.target_accuracy = Section::as_number(v, p);
    });
    s.boolean("cold_start", l.cold_start);
    s.u64("seed", l.seed);
    s.unsigned_int("threads", l.threads);
    s.unsigned_int("oracle_retries", l.oracle_retries);
    s.boolean("export_representations", l.export_representations);
    s.section("variants", [&](Section& v) {
      v.boolean("disable_adaptive_threshold", l.variants.disable_adaptive_threshold);
      v.boolean("disable_aus", l.variants.disable_aus);
      v.boolean("disable_bus", l.variants.disable_bus);
      v.boolean("random_sampling", l.variants.random_sampling);
    });
  });
  top.section("dataset", [&](Section& s) {
    auto& d = cfg.dataset;
    s.with("kind", [&](const json& v, const std::string& p) {
      if (!v.is_string()) throw ConfigError(p, "expected a string");
      auto k = data::parse_kind(v.get<std::string>());
      if (!k) throw ConfigError(p, "unknown dataset kind '" + v.get<std::string>() + "'");
      d.kind = *k;
    });
    s.unsigned_int("num_classes", d.num_classes);
    s.with("class_counts", [&](const json& v, const std::string& p) {
      if (!v.is_array()) throw ConfigError(p, "expected an array");
      d.class_counts.clear();
      for (std::size_t i = 0; i < v.size(); ++i)
        d.class_counts.push_back(static_cast<std::size_t>(Section::as_unsigned(v[i], p + "[" + std::to_string(i) + "]")));
    });
    s.with("class_ratio", [&](const json& v, const std::string& p) {
      if (!v.is_array()) throw ConfigError(p, "expected an array");
      d.class_ratio.clear();
      for (std::size_t i = 0; i < v.size(); ++i)
        d.class_ratio.push_back(Section::as_number(v[i], p + "[" + std::to_string(i) + "]"));
    });
    s.unsigned_int("total", d.total);
    s.unsigned_int("dim", d.dim);
    s.number("noise", d.noise);
    s.u64("seed", d.seed);
    s.string("path", d.path);
    s.string("labels_path", d.labels_path);
    s.section("split", [&](Section& sp) {
      sp.number("train", d.split.train);
      sp.number("val", d.split.val);
      sp.number("test", d.split.test);
    });
  });
  top.string("output_dir", cfg.output_dir);
  top.finish();
  return cfg;
}

json policy_json(const augment::AugmentPolicy& p, bool strong) {
  json j{{"jitter_sigma", p.jitter_sigma}, {"shift_fraction", p.shift_fraction}, {"flip_probability", p.flip_probability}};
  if (strong) {
    j["drop_probability"] = p.drop_probability;
    j["scale_range"] = json::array({p.scale_lo, p.scale_hi});
  }
  return j;
}

void require(bool ok, const std::string& key, const std::string& message) {
  if (!ok) throw ConfigError(key, message);
}

bool unit_open_closed(double v) { return v > 0.0 && v <= 1.0; }
bool unit_closed(double v) { return v >= 0.0 && v <= 1.0; }

}  // namespace

void RunConfig::validate() const {
  for (std::size_t i = 0; i < model.hidden.size(); ++i)
    require(model.hidden[i] > 0, "model.hidden[" + std::to_string(i) + "]", "layer width must be positive");
  require(!model.hidden.empty(), "model.hidden", "needs at least one hidden layer");

  require(optimizer.learning_rate > 0.0, "optimizer.learning_rate", "must be > 0");
  require(optimizer.momentum >= 0.0 && optimizer.momentum < 1.0, "optimizer.momentum", "must lie in [0, 1)");
  require(optimizer.weight_decay >= 0.0, "optimizer.weight_decay", "must be >= 0");
  require(optimizer.batch_size > 0, "optimizer.batch_size", "must be positive");

  require(ssl.alpha > 0.0 && ssl.alpha < 1.0, "ssl.alpha", "must lie in (0, 1)");
  require(ssl.beta >= 0.0, "ssl.beta", "must be >= 0");
  require(ssl.alpha + ssl.beta <= 1.0, "ssl.beta", "alpha + beta must not exceed 1");
  require(ssl.mu >= 0.0, "ssl.mu", "must be >= 0");
  require(ssl.unlabeled_batch_size > 0, "ssl.unlabeled_batch_size", "must be positive");

  require(aus.tau > 0.0, "aus.tau", "must be > 0");
  require(aus.power_iterations >= 1, "aus.power_iterations", "must be >= 1");
  require(aus.xi_scale > 0.0, "aus.xi_scale", "must be > 0");
  require(bus.neighbors >= 1, "bus.neighbors", "must be >= 1");

  const auto& w = augment.weak;
  const auto& s = augment.strong;
  require(w.jitter_sigma >= 0.0, "augment.weak.jitter_sigma", "must be >= 0");
  require(w.shift_fraction >= 0.0 && w.shift_fraction < 1.0, "augment.weak.shift_fraction", "must lie in [0, 1)");
  require(unit_closed(w.flip_probability), "augment.weak.flip_probability", "must lie in [0, 1]");
  require(s.jitter_sigma >= w.jitter_sigma, "augment.strong.jitter_sigma", "must be >= augment.weak.jitter_sigma");
  require(s.shift_fraction >= 0.0 && s.shift_fraction < 1.0, "augment.strong.shift_fraction", "must lie in [0, 1)");
  require(unit_closed(s.flip_probability), "augment.strong.flip_probability", "must lie in [0, 1]");
  require(unit_closed(s.drop_probability), "augment.strong.drop_probability", "must lie in [0, 1]");
  require(s.scale_lo > 0.0 && s.scale_lo <= s.scale_hi, "augment.strong.scale_range", "must satisfy 0 < lo <= hi");

  require(unit_open_closed(loop.initial_fraction), "loop.initial_fraction", "must lie in (0, 1]");
  require(loop.selector_budget_fraction >= 0.0 && loop.selector_budget_fraction <= 1.0, "loop.selector_budget_fraction",
          "must lie in [0, 1]");
  require(unit_closed(loop.annotation_budget_fraction), "loop.annotation_budget_fraction", "must lie in [0, 1]");
  require(loop.steps_per_cycle > 0, "loop.steps_per_cycle", "must be positive");
  require(loop.eval_interval > 0, "loop.eval_interval", "must be positive");
  require(loop.patience > 0, "loop.patience", "must be positive");
  if (loop.target_accuracy)
    require(unit_open_closed(*loop.target_accuracy), "loop.target_accuracy", "must lie in (0, 1]");
  const auto& v = loop.variants;
  require(!(v.random_sampling && (v.disable_aus || v.disable_bus)), "loop.variants.random_sampling",
          "random sampling replaces both selectors; do not combine with disable_aus / disable_bus");
  require(!(v.disable_aus && v.disable_bus), "loop.variants.disable_bus",
          "disabling both selectors leaves no candidate source; use random_sampling");

  const auto& d = dataset;
  const bool file_kind = d.kind == data::DatasetKind::csv_features || d.kind == data::DatasetKind::idx_images;
  if (file_kind) {
    require(!d.path.empty(), "dataset.path", "required for file dataset kinds");
  } else {
    require(d.num_classes >= 2, "dataset.num_classes", "must be >= 2");
    require(d.dim >= 2, "dataset.dim", "must be >= 2");
    require(d.noise >= 0.0, "dataset.noise", "must be >= 0");
    require(d.class_counts.empty() || d.class_counts.size() == d.num_classes, "dataset.class_counts",
            "length must equal num_classes");
    require(d.class_ratio.empty() || d.class_ratio.size() == d.num_classes, "dataset.class_ratio",
            "length must equal num_classes");
    for (std::size_t i = 0; i < d.class_ratio.size(); ++i)
      require(d.class_ratio[i] > 0.0, "dataset.class_ratio[" + std::to_string(i) + "]", "must be > 0");
    for (std::size_t i = 0; i < d.class_counts.size(); ++i)
      require(d.class_counts[i] > 0, "dataset.class_counts[" + std::to_string(i) + "]", "must be > 0");
    require(!d.class_counts.empty() || d.total >= d.num_classes, "dataset.total", "must be >= num_classes");
    require(d.kind != data::DatasetKind::moons || d.num_classes == 2, "dataset.num_classes", "moons has two classes");
  }
  for (const auto& [name, f] : {std::pair{"train", d.split.train}, {"val", d.split.val}, {"test", d.split.test}})
    require(unit_closed(f), std::string("dataset.split.") + name, "must lie in [0, 1]");
  require(std::abs(d.split.train + d.split.val + d.split.test - 1.0) <= 1e-9, "dataset.split", "fractions must sum to 1");
  require(d.split.train > 0.0, "dataset.split.train", "must be > 0");
  require(!output_dir.empty(), "output_dir", "must not be empty");
}

RunConfig parse_config(const std::string& text) {
  json root;
  if (text.find_first_not_of(" \t\r\n") == std::string::npos) {
    root = json::object();
  } else {
    try {
      root = json::parse(text, nullptr, true, true);
    } catch (const json::parse_error& e) {
      throw ConfigError("<root>", std::string("parse error: ") + e.what());
    }
  }
  RunConfig cfg = from_json(root);
  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("<file>", "cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

std::string serialize_config(const RunConfig& c) {
  json j;
  j["model"] = {{"hidden", c.model.hidden}};
  j["optimizer"] = {{"learning_rate", c.optimizer.learning_rate},
                    {"momentum", c.optimizer.momentum},
                    {"weight_decay", c.optimizer.weight_decay},
                    {"batch_size", c.optimizer.batch_size}};
  j["ssl"] = {{"alpha", c.ssl.alpha},
              {"beta", c.ssl.beta},
              {"mu", c.ssl.mu},
              {"t_max", c.ssl.t_max},
              {"unlabeled_batch_size", c.ssl.unlabeled_batch_size}};
  j["aus"] = {{"tau", c.aus.tau}, {"power_iterations", c.aus.power_iterations}, {"xi_scale", c.aus.xi_scale}};
  j["bus"] = {{"neighbors", c.bus.neighbors}};
  j["augment"] = {{"weak", policy_json(c.augment.weak, false)}, {"strong", policy_json(c.augment.strong, true)}};
  const auto& l = c.loop;
  j["loop"] = {{"initial_fraction", l.initial_fraction},
               {"max_cycles", l.max_cycles},
               {"selector_budget_fraction", l.selector_budget_fraction},
               {"annotation_budget_fraction", l.annotation_budget_fraction},
               {"steps_per_cycle", l.steps_per_cycle},
               {"eval_interval", l.eval_interval},
               {"patience", l.patience},
               {"target_accuracy", l.target_accuracy ? json(*l.target_accuracy) : json(nullptr)},
               {"cold_start", l.cold_start},
               {"seed", l.seed},
               {"threads", l.threads},
               {"oracle_retries", l.oracle_retries},
               {"export_representations", l.export_representations},
               {"variants",
                {{"disable_adaptive_threshold", l.variants.disable_adaptive_threshold},
                 {"disable_aus", l.variants.disable_aus},
                 {"disable_bus", l.variants.disable_bus},
                 {"random_sampling", l.variants.random_sampling}}}};
  const auto& d = c.dataset;
  j["dataset"] = {{"kind", data::to_string(d.kind)},
                  {"num_classes", d.num_classes},
                  {"class_counts", d.class_counts},
                  {"class_ratio", d.class_ratio},
                  {"total", d.total},
                  {"dim", d.dim},
                  {"noise", d.noise},
                  {"seed", d.seed},
                  {"path", d.path},
                  {"labels_path", d.labels_path},
                  {"split", {{"train", d.split.train}, {"val", d.split.val}, {"test", d.split.test}}}};
  j["output_dir"] = c.output_dir;
  return j.dump(2) + "\n";
}

}  // namespace alssl
