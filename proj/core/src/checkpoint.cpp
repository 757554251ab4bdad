#include "alssl/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "alssl/errors.hpp"

namespace alssl {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr std::array<char, 4> kMagic{'B', 'M', 'I', 'S'};
constexpr std::uint64_t kMaxDim = 1u << 24;

template <typename T>
void put(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T value{};
  if (!in.read(reinterpret_cast<char*>(&value), sizeof(T))) throw DataError(DataErrorCode::truncated_record, "checkpoint truncated");
  return value;
}

void put_matrix(std::ostream& out, const Matrix& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) put<double>(out, m(r, c));
}

void get_matrix(std::istream& in, Matrix& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = get<double>(in);
}

void put_vector(std::ostream& out, const Vector& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) put<double>(out, v[i]);
}

void get_vector(std::istream& in, Vector& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = get<double>(in);
}

}  // namespace

void write_checkpoint(std::ostream& out, const nn::TaskModel& model) {
  out.write(kMagic.data(), kMagic.size());
  put<std::uint32_t>(out, kCheckpointVersion);
  const auto& p = model.params();
  put<std::uint32_t>(out, static_cast<std::uint32_t>(p.layer_count()));
  for (std::size_t l = 0; l < p.layer_count(); ++l) {
    put<std::uint64_t>(out, static_cast<std::uint64_t>(p.weights[l].rows()));
    put<std::uint64_t>(out, static_cast<std::uint64_t>(p.weights[l].cols()));
    put_matrix(out, p.weights[l]);
    put_vector(out, p.biases[l]);
  }
  const auto& v = model.velocity();
  for (std::size_t l = 0; l < v.layer_count(); ++l) {
    put_matrix(out, v.weights[l]);
    put_vector(out, v.biases[l]);
  }
  put<std::uint64_t>(out, model.seed());
  if (!out) throw Error("failed to write checkpoint");
}

nn::TaskModel read_checkpoint(std::istream& in) {
  std::array<char, 4> magic{};
  if (!in.read(magic.data(), magic.size())) throw DataError(DataErrorCode::truncated_record, "checkpoint truncated");
  if (magic != kMagic) throw DataError(DataErrorCode::bad_magic, "not a checkpoint (bad magic)");
  const auto version = get<std::uint32_t>(in);
  if (version != kCheckpointVersion)
    throw DataError(DataErrorCode::parse, "unsupported checkpoint version " + std::to_string(version));
  const auto layers = get<std::uint32_t>(in);
  if (layers < 2 || layers > 64) throw DataError(DataErrorCode::parse, "implausible layer count in checkpoint");
  nn::ParameterSet params;
  for (std::uint32_t l = 0; l < layers; ++l) {
    const auto rows = get<std::uint64_t>(in);
    const auto cols = get<std::uint64_t>(in);
    if (rows == 0 || cols == 0 || rows > kMaxDim || cols > kMaxDim)
      throw DataError(DataErrorCode::parse, "implausible layer shape in checkpoint");
    Matrix w(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    Vector b(static_cast<Eigen::Index>(rows));
    get_matrix(in, w);
    get_vector(in, b);
    params.weights.push_back(std::move(w));
    params.biases.push_back(std::move(b));
  }
  nn::ParameterSet velocity = params.zeros_like();
  for (std::uint32_t l = 0; l < layers; ++l) {
    get_matrix(in, velocity.weights[l]);
    get_vector(in, velocity.biases[l]);
  }
  const auto seed = get<std::uint64_t>(in);
  try {
    return nn::TaskModel(std::move(params), std::move(velocity), seed);
  } catch (const InvalidInput& e) {
    throw DataError(DataErrorCode::parse, std::string("inconsistent checkpoint: ") + e.what());
  }
}

void save_checkpoint(const std::filesystem::path& path, const nn::TaskModel& model) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError(DataErrorCode::io, "cannot open " + path.string() + " for writing");
  write_checkpoint(out, model);
}

nn::TaskModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(DataErrorCode::io, "cannot open " + path.string());
  return read_checkpoint(in);
}

}  // namespace alssl
