#include "alssl/dataset.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>

#include "alssl/errors.hpp"
#include "alssl/rng.hpp"

namespace alssl::data {

bool Dataset::fully_labeled() const noexcept {
  return std::all_of(labels.begin(), labels.end(), [](const auto& l) { return l.has_value(); });
}

std::size_t Dataset::label(std::size_t row) const {
  if (row >= labels.size() || !labels[row]) throw InvalidInput("sample " + std::to_string(row) + " has no label");
  return *labels[row];
}

std::vector<std::size_t> Dataset::label_vector() const {
  std::vector<std::size_t> out(size());
  for (std::size_t i = 0; i < size(); ++i) out[i] = label(i);
  return out;
}

Dataset Dataset::subset(const std::vector<std::size_t>& rows) const {
  Dataset out;
  out.num_classes = num_classes;
  out.image_shape = image_shape;
  out.features.resize(static_cast<Eigen::Index>(rows.size()), features.cols());
  out.ids.reserve(rows.size());
  out.labels.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto r = rows[i];
    if (r >= size()) throw InvalidInput("subset: row out of range");
    out.ids.push_back(ids[r]);
    out.labels.push_back(labels[r]);
    out.features.row(static_cast<Eigen::Index>(i)) = features.row(static_cast<Eigen::Index>(r));
  }
  return out;
}

bool operator==(const Dataset& a, const Dataset& b) {
  return a.ids == b.ids && a.labels == b.labels && a.num_classes == b.num_classes &&
         a.image_shape == b.image_shape && a.features.rows() == b.features.rows() &&
         a.features.cols() == b.features.cols() && a.features == b.features;
}

const char* to_string(DatasetKind kind) {
  switch (kind) {
    case DatasetKind::gaussians: return "gaussians";
    case DatasetKind::moons: return "moons";
    case DatasetKind::rings: return "rings";
    case DatasetKind::idx_images: return "idx-images";
    case DatasetKind::csv_features: return "csv-features";
  }
  return "unknown";
}

std::optional<DatasetKind> parse_kind(const std::string& text) {
  for (auto k : {DatasetKind::gaussians, DatasetKind::moons, DatasetKind::rings, DatasetKind::idx_images,
                 DatasetKind::csv_features})
    if (text == to_string(k)) return k;
  return std::nullopt;
}

void SplitFractions::validate() const {
  for (double f : {train, val, test})
    if (!(f >= 0.0 && f <= 1.0)) throw InvalidInput("split fractions must lie in [0, 1]");
  if (std::abs(train + val + test - 1.0) > 1e-9) throw InvalidInput("split fractions must sum to 1");
  if (train <= 0.0) throw InvalidInput("train fraction must be positive");
}

DatasetSpec DatasetSpec::imbalanced(std::size_t total, std::uint64_t seed) {
  DatasetSpec s;
  s.num_classes = 2;
  s.class_ratio = {8.7, 1.0};
  s.total = total;
  s.seed = seed;
  return s;
}

std::vector<std::size_t> apportion(std::size_t total, const std::vector<double>& weights) {
  if (weights.empty()) throw InvalidInput("apportion: no weights");
  const double sum = std::accumulate(weights.begin(), weights.end(), 0.0);
  if (!(sum > 0.0)) throw InvalidInput("apportion: weights must have a positive sum");
  std::vector<std::size_t> out(weights.size());
  std::vector<double> frac(weights.size());
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] < 0.0) throw InvalidInput("apportion: negative weight");
    const double exact = static_cast<double>(total) * weights[i] / sum;
    // Round before flooring so 870.0000000001 and 869.9999999999 agree.
    const double fl = std::floor(exact + 1e-9);
    out[i] = static_cast<std::size_t>(fl);
    frac[i] = std::max(0.0, exact - fl);
    assigned += out[i];
  }
  std::vector<std::size_t> order(weights.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return frac[a] > frac[b]; });
  for (std::size_t i = 0; assigned < total; i = (i + 1) % order.size(), ++assigned) ++out[order[i]];
  while (assigned > total) {
    // Only reachable through the epsilon nudge; take back from the largest.
    auto it = std::max_element(out.begin(), out.end());
    --*it;
    --assigned;
  }
  return out;
}

std::vector<std::size_t> DatasetSpec::resolved_counts() const {
  if (!class_counts.empty()) return class_counts;
  if (!class_ratio.empty()) return apportion(total, class_ratio);
  return apportion(total, std::vector<double>(num_classes, 1.0));
}

void DatasetSpec::validate() const {
  split.validate();
  if (kind == DatasetKind::csv_features || kind == DatasetKind::idx_images) {
    if (path.empty()) throw DataError(DataErrorCode::degenerate, "file dataset kinds need a path");
    return;
  }
  if (num_classes == 0) throw DataError(DataErrorCode::degenerate, "dataset needs at least one class");
  if (!class_counts.empty() && class_counts.size() != num_classes)
    throw DataError(DataErrorCode::degenerate, "class_counts length does not match num_classes");
  if (!class_ratio.empty() && class_ratio.size() != num_classes)
    throw DataError(DataErrorCode::degenerate, "class_ratio length does not match num_classes");
  if (dim < 2) throw DataError(DataErrorCode::degenerate, "synthetic datasets need dim >= 2");
  if (!(noise >= 0.0) || !std::isfinite(noise)) throw DataError(DataErrorCode::degenerate, "noise must be >= 0");
  if (kind == DatasetKind::moons && num_classes != 2)
    throw DataError(DataErrorCode::degenerate, "moons has exactly two classes");
  for (auto c : resolved_counts())
    if (c == 0) throw DataError(DataErrorCode::degenerate, "every class needs at least one sample");
}

namespace {

template <typename Rng>
void shuffle(std::vector<std::size_t>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[static_cast<std::size_t>(rng.below(i))]);
}

}  // namespace

Dataset gen_synthetic(const DatasetSpec& spec) {
  try {
    spec.validate();
  } catch (const InvalidInput& e) {
    throw DataError(DataErrorCode::degenerate, e.what());
  }
  if (spec.kind == DatasetKind::csv_features || spec.kind == DatasetKind::idx_images)
    throw DataError(DataErrorCode::degenerate, "gen_synthetic handles synthetic kinds only");
  const auto counts = spec.resolved_counts();
  const std::size_t n = std::accumulate(counts.begin(), counts.end(), std::size_t{0});
  const auto dim = static_cast<Eigen::Index>(spec.dim);
  Matrix raw(static_cast<Eigen::Index>(n), dim);
  std::vector<std::size_t> raw_labels(n);

  std::size_t row = 0;
  for (std::size_t c = 0; c < counts.size(); ++c) {
    KeyedRng rng(Stream::dataset, {spec.seed, c});
    for (std::size_t j = 0; j < counts[c]; ++j, ++row) {
      double x = 0.0, y = 0.0;
      switch (spec.kind) {
        case DatasetKind::gaussians: {
          const double a = 2.0 * std::numbers::pi * static_cast<double>(c) / static_cast<double>(spec.num_classes);
          x = 3.0 * std::cos(a);
          y = 3.0 * std::sin(a);
          break;
        }
        case DatasetKind::moons: {
          const double t = std::numbers::pi * rng.uniform();
          if (c == 0) {
            x = std::cos(t);
            y = std::sin(t);
          } else {
            x = 1.0 - std::cos(t);
            y = 0.5 - std::sin(t);
          }
          break;
        }
        case DatasetKind::rings: {
          const double t = 2.0 * std::numbers::pi * rng.uniform();
          const double radius = static_cast<double>(c + 1);
          x = radius * std::cos(t);
          y = radius * std::sin(t);
          break;
        }
        default: break;
      }
      const auto r = static_cast<Eigen::Index>(row);
      raw(r, 0) = x;
      raw(r, 1) = y;
      for (Eigen::Index d = 2; d < dim; ++d) raw(r, d) = 0.0;
      if (spec.noise > 0.0)
        for (Eigen::Index d = 0; d < dim; ++d) raw(r, d) += spec.noise * rng.normal();
      raw_labels[row] = c;
    }
  }

  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  KeyedRng shuffle_rng(Stream::dataset, {spec.seed, 0xffffffffULL});
  shuffle(perm, shuffle_rng);

  Dataset ds;
  ds.num_classes = spec.num_classes;
  ds.features.resize(static_cast<Eigen::Index>(n), dim);
  ds.ids.resize(n);
  ds.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    ds.ids[i] = i;
    ds.features.row(static_cast<Eigen::Index>(i)) = raw.row(static_cast<Eigen::Index>(perm[i]));
    ds.labels[i] = raw_labels[perm[i]];
  }
  return ds;
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  for (auto& f : out) {
    auto b = f.find_first_not_of(" \t");
    auto e = f.find_last_not_of(" \t");
    f = b == std::string::npos ? std::string{} : f.substr(b, e - b + 1);
  }
  return out;
}

double parse_double(const std::string& field, std::size_t line) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc{} || ptr != field.data() + field.size() || field.empty() || !std::isfinite(v))
    throw DataError(DataErrorCode::parse, "line " + std::to_string(line) + ": bad number '" + field + "'");
  return v;
}

void check_labels(Dataset& ds, std::optional<std::size_t> num_classes) {
  std::size_t max_label = 0;
  bool any = false;
  for (const auto& l : ds.labels) {
    if (!l) continue;
    any = true;
    max_label = std::max(max_label, *l);
    if (num_classes && *l >= *num_classes)
      throw DataError(DataErrorCode::label_out_of_range,
                      "label " + std::to_string(*l) + " out of range for " + std::to_string(*num_classes) + " classes");
  }
  ds.num_classes = num_classes ? *num_classes : (any ? max_label + 1 : 0);
}

}  // namespace

Dataset parse_csv(const std::string& text, std::optional<std::size_t> num_classes) {
  std::vector<std::string> lines;
  {
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      lines.push_back(line);
    }
    while (!lines.empty() && lines.back().empty()) lines.pop_back();
  }
  if (lines.empty()) throw DataError(DataErrorCode::malformed_header, "csv: missing header row");
  const auto header = split_fields(lines.front());
  if (header.size() < 2) throw DataError(DataErrorCode::malformed_header, "csv: header needs feature columns and a label column");
  for (const auto& h : header)
    if (h.empty()) throw DataError(DataErrorCode::malformed_header, "csv: empty column name in header");
  const std::size_t dim = header.size() - 1;

  Dataset ds;
  ds.features.resize(static_cast<Eigen::Index>(lines.size() - 1), static_cast<Eigen::Index>(dim));
  for (std::size_t li = 1; li < lines.size(); ++li) {
    const auto fields = split_fields(lines[li]);
    if (fields.size() < header.size())
      throw DataError(DataErrorCode::truncated_record, "csv line " + std::to_string(li + 1) + ": expected " +
                                                           std::to_string(header.size()) + " fields, got " +
                                                           std::to_string(fields.size()));
    if (fields.size() > header.size())
      throw DataError(DataErrorCode::parse, "csv line " + std::to_string(li + 1) + ": too many fields");
    const auto r = static_cast<Eigen::Index>(li - 1);
    for (std::size_t d = 0; d < dim; ++d) ds.features(r, static_cast<Eigen::Index>(d)) = parse_double(fields[d], li + 1);
    const auto& lab = fields.back();
    if (lab.empty()) {
      ds.labels.emplace_back(std::nullopt);
    } else {
      long long v = 0;
      auto [ptr, ec] = std::from_chars(lab.data(), lab.data() + lab.size(), v);
      if (ec != std::errc{} || ptr != lab.data() + lab.size())
        throw DataError(DataErrorCode::parse, "csv line " + std::to_string(li + 1) + ": bad label '" + lab + "'");
      if (v < 0) throw DataError(DataErrorCode::label_out_of_range, "csv line " + std::to_string(li + 1) + ": negative label");
      ds.labels.emplace_back(static_cast<std::size_t>(v));
    }
    ds.ids.push_back(li - 1);
  }
  check_labels(ds, num_classes);
  return ds;
}

Dataset load_csv(const std::filesystem::path& path, std::optional<std::size_t> num_classes) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(DataErrorCode::io, "cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_csv(buf.str(), num_classes);
}

std::string to_csv(const Dataset& ds) {
  std::string out;
  for (std::size_t d = 0; d < ds.dim(); ++d) out += "f" + std::to_string(d) + ",";
  out += "label\n";
  std::array<char, 64> buf{};
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (std::size_t d = 0; d < ds.dim(); ++d) {
      auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(),
                                     ds.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(d)));
      out.append(buf.data(), ptr);
      out.push_back(',');
    }
    if (ds.labels[i]) out += std::to_string(*ds.labels[i]);
    out.push_back('\n');
  }
  return out;
}

void save_csv(const std::filesystem::path& path, const Dataset& ds) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError(DataErrorCode::io, "cannot open " + path.string() + " for writing");
  out << to_csv(ds);
}

// ---------------------------------------------------------------------------
// IDX

namespace {

constexpr std::uint32_t kIdxImages = 0x00000803;
constexpr std::uint32_t kIdxLabels = 0x00000801;

std::uint32_t read_be32(std::istream& in, const char* what) {
  std::array<unsigned char, 4> b{};
  if (!in.read(reinterpret_cast<char*>(b.data()), 4))
    throw DataError(DataErrorCode::truncated_record, std::string("idx: truncated ") + what);
  return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) | b[3];
}

void write_be32(std::ostream& out, std::uint32_t v) {
  const std::array<char, 4> b{static_cast<char>(v >> 24), static_cast<char>(v >> 16), static_cast<char>(v >> 8),
                              static_cast<char>(v)};
  out.write(b.data(), 4);
}

}  // namespace

Dataset load_idx(const std::filesystem::path& images, const std::optional<std::filesystem::path>& labels,
                 std::optional<std::size_t> num_classes) {
  std::ifstream in(images, std::ios::binary);
  if (!in) throw DataError(DataErrorCode::io, "cannot open " + images.string());
  if (read_be32(in, "header") != kIdxImages) throw DataError(DataErrorCode::bad_magic, "idx images: bad magic");
  const auto n = read_be32(in, "header");
  const auto rows = read_be32(in, "header");
  const auto cols = read_be32(in, "header");
  if (rows == 0 || cols == 0) throw DataError(DataErrorCode::parse, "idx images: zero-sized image");
  const std::size_t px = std::size_t{rows} * cols;
  Dataset ds;
  ds.image_shape = augment::ImageShape{cols, rows};
  ds.features.resize(n, static_cast<Eigen::Index>(px));
  std::vector<unsigned char> buf(px);
  for (std::uint32_t i = 0; i < n; ++i) {
    if (!in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(px)))
      throw DataError(DataErrorCode::truncated_record, "idx images: truncated at record " + std::to_string(i));
    for (std::size_t p = 0; p < px; ++p) ds.features(i, static_cast<Eigen::Index>(p)) = buf[p] / 255.0;
    ds.ids.push_back(i);
  }
  ds.labels.assign(n, std::nullopt);
  if (labels) {
    std::ifstream lin(*labels, std::ios::binary);
    if (!lin) throw DataError(DataErrorCode::io, "cannot open " + labels->string());
    if (read_be32(lin, "header") != kIdxLabels) throw DataError(DataErrorCode::bad_magic, "idx labels: bad magic");
    const auto ln = read_be32(lin, "header");
    if (ln != n) throw DataError(DataErrorCode::parse, "idx labels: count does not match image count");
    for (std::uint32_t i = 0; i < n; ++i) {
      char c = 0;
      if (!lin.get(c)) throw DataError(DataErrorCode::truncated_record, "idx labels: truncated at record " + std::to_string(i));
      ds.labels[i] = static_cast<unsigned char>(c);
    }
  }
  check_labels(ds, num_classes);
  return ds;
}

void save_idx(const std::filesystem::path& images, const std::filesystem::path& labels, const Dataset& ds) {
  if (!ds.image_shape) throw InvalidInput("save_idx: dataset has no image shape");
  std::ofstream out(images, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError(DataErrorCode::io, "cannot open " + images.string() + " for writing");
  write_be32(out, kIdxImages);
  write_be32(out, static_cast<std::uint32_t>(ds.size()));
  write_be32(out, static_cast<std::uint32_t>(ds.image_shape->height));
  write_be32(out, static_cast<std::uint32_t>(ds.image_shape->width));
  for (Eigen::Index i = 0; i < ds.features.rows(); ++i)
    for (Eigen::Index p = 0; p < ds.features.cols(); ++p)
      out.put(static_cast<char>(std::lround(std::clamp(ds.features(i, p), 0.0, 1.0) * 255.0)));
  std::ofstream lout(labels, std::ios::binary | std::ios::trunc);
  if (!lout) throw DataError(DataErrorCode::io, "cannot open " + labels.string() + " for writing");
  write_be32(lout, kIdxLabels);
  write_be32(lout, static_cast<std::uint32_t>(ds.size()));
  for (std::size_t i = 0; i < ds.size(); ++i) lout.put(static_cast<char>(ds.label(i)));
}

Dataset load_dataset(const DatasetSpec& spec) {
  switch (spec.kind) {
    case DatasetKind::csv_features:
      if (spec.path.empty()) throw DataError(DataErrorCode::degenerate, "csv-features needs a path");
      return load_csv(spec.path, spec.num_classes ? std::optional<std::size_t>(spec.num_classes) : std::nullopt);
    case DatasetKind::idx_images: {
      if (spec.path.empty()) throw DataError(DataErrorCode::degenerate, "idx-images needs a path");
      std::optional<std::filesystem::path> lab;
      if (!spec.labels_path.empty()) lab = spec.labels_path;
      return load_idx(spec.path, lab, spec.num_classes ? std::optional<std::size_t>(spec.num_classes) : std::nullopt);
    }
    default: return gen_synthetic(spec);
  }
}

// ---------------------------------------------------------------------------
// Split

Splits split(const Dataset& dataset, const SplitFractions& fractions, std::uint64_t seed) {
  fractions.validate();
  if (!dataset.fully_labeled()) throw DataError(DataErrorCode::degenerate, "split needs a fully labeled dataset");
  const std::array<double, 3> f{fractions.train, fractions.val, fractions.test};
  std::vector<std::vector<std::size_t>> by_class(dataset.num_classes);
  for (std::size_t i = 0; i < dataset.size(); ++i) by_class.at(dataset.label(i)).push_back(i);

  std::array<std::vector<std::size_t>, 3> parts;
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    auto& members = by_class[c];
    if (members.empty()) throw DataError(DataErrorCode::degenerate, "class " + std::to_string(c) + " has no samples");
    KeyedRng rng(Stream::split, {seed, c});
    shuffle(members, rng);
    const auto n = members.size();
    std::array<std::size_t, 3> count{};
    std::array<double, 3> frac{};
    std::size_t assigned = 0;
    for (std::size_t s = 0; s < 3; ++s) {
      const double exact = static_cast<double>(n) * f[s];
      const double fl = std::floor(exact + 1e-9);
      count[s] = static_cast<std::size_t>(fl);
      frac[s] = std::max(0.0, exact - fl);
      assigned += count[s];
    }
    std::array<std::size_t, 3> order{0, 1, 2};
    std::sort(order.begin(), order.end(), [&](auto a, auto b) {
      if (frac[a] != frac[b]) return frac[a] > frac[b];
      return (a + c) % 3 < (b + c) % 3;
    });
    for (std::size_t i = 0; assigned < n; ++i, ++assigned) ++count[order[i % 3]];
    std::size_t pos = 0;
    for (std::size_t s = 0; s < 3; ++s) {
      if (f[s] > 0.0 && count[s] == 0)
        throw DataError(DataErrorCode::degenerate,
                        "class " + std::to_string(c) + " is too small to appear in every split");
      for (std::size_t j = 0; j < count[s]; ++j) parts[s].push_back(members[pos++]);
    }
  }
  auto by_id = [&](std::vector<std::size_t>& rows) {
    std::sort(rows.begin(), rows.end(), [&](auto a, auto b) { return dataset.ids[a] < dataset.ids[b]; });
    return dataset.subset(rows);
  };
  return Splits{by_id(parts[0]), by_id(parts[1]), by_id(parts[2])};
}

}  // namespace alssl::data
