#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Dense>

namespace alssl {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

}  // namespace alssl

namespace alssl::nn {

/// Floor applied to probabilities before taking logarithms.
inline constexpr double kLogEpsilon = 1e-12;

/// Weights and biases for every layer. Also used for momentum buffers and
/// gradients, which share the parameter layout exactly.
struct ParameterSet {
  std::vector<Matrix> weights;  // layer l: (out x in)
  std::vector<Vector> biases;   // layer l: (out)

  std::size_t layer_count() const noexcept { return weights.size(); }
  bool same_shape(const ParameterSet& other) const noexcept;
  bool all_finite() const noexcept;
  ParameterSet zeros_like() const;
};

struct ModelConfig {
  std::vector<std::size_t> hidden{64, 32};
};

/// Fully connected classifier: ReLU hidden layers followed by a linear head
/// and softmax. The activations entering the head are the sample's
/// representation.
class TaskModel {
 public:
  /// `sizes` = {input, hidden..., classes}; at least one hidden layer.
  /// Weights drawn from uniform(-s, s), s = sqrt(6 / (fan_in + fan_out));
  /// biases and momentum start at zero.
  static TaskModel create(const std::vector<std::size_t>& sizes, std::uint64_t seed);
  static TaskModel create(std::size_t input_dim, const ModelConfig& cfg, std::size_t num_classes,
                          std::uint64_t seed);

  /// Adopts explicit parameters; velocity defaults to zeros.
  TaskModel(ParameterSet params, std::optional<ParameterSet> velocity, std::uint64_t seed);

  std::size_t input_dim() const noexcept { return static_cast<std::size_t>(params_.weights.front().cols()); }
  std::size_t num_classes() const noexcept { return static_cast<std::size_t>(params_.weights.back().rows()); }
  std::size_t representation_dim() const noexcept {
    return static_cast<std::size_t>(params_.weights.back().cols());
  }
  std::vector<std::size_t> sizes() const;
  std::uint64_t seed() const noexcept { return seed_; }

  const ParameterSet& params() const noexcept { return params_; }
  ParameterSet& params() noexcept { return params_; }
  const ParameterSet& velocity() const noexcept { return velocity_; }
  ParameterSet& velocity() noexcept { return velocity_; }

  const Matrix& head_weight() const noexcept { return params_.weights.back(); }
  const Vector& head_bias() const noexcept { return params_.biases.back(); }

 private:
  void validate() const;

  ParameterSet params_;
  ParameterSet velocity_;
  std::uint64_t seed_ = 0;
};

struct Prediction {
  Vector logits;
  Vector probs;
  Vector representation;
  std::size_t predicted_class = 0;
};

/// Row-per-sample outputs of a batched forward pass.
struct BatchOutput {
  Matrix logits;
  Matrix probs;
  Matrix representations;
  std::vector<std::size_t> predicted;
};

struct OptimizerConfig {
  double learning_rate = 0.03;
  double momentum = 0.9;
  double weight_decay = 0.0005;
  std::size_t batch_size = 64;

  void validate() const;
};

/// Numerically stable softmax of one logit vector.
Vector softmax(const Eigen::Ref<const Vector>& logits);
/// Row-wise softmax.
Matrix softmax_rows(const Matrix& logits);
/// Index of the largest entry; ties go to the lowest index.
std::size_t argmax(const Eigen::Ref<const Vector>& v);

BatchOutput evaluate(const TaskModel& model, const Matrix& batch);
std::vector<Prediction> forward(const TaskModel& model, const Matrix& batch);

/// Classification head applied to a representation vector.
Vector head_logits(const TaskModel& model, const Eigen::Ref<const Vector>& representation);
Vector head_probs(const TaskModel& model, const Eigen::Ref<const Vector>& representation);

/// Cross-entropy of a target distribution against predicted probabilities,
/// with the log floor applied.
double cross_entropy(const Eigen::Ref<const Vector>& target, const Eigen::Ref<const Vector>& probs);

/// Mean cross-entropy over rows. `targets` rows must be one-hot.
double supervised_loss(const Matrix& probs, const Matrix& targets);
double supervised_loss(const std::vector<Prediction>& predictions, const Matrix& targets);

/// Builds an (n x classes) one-hot matrix.
Matrix one_hot(const std::vector<std::size_t>& labels, std::size_t num_classes);

/// One mean-cross-entropy term of the training objective.
struct LossTerm {
  Matrix inputs;
  Matrix targets;
  double weight = 1.0;
};

/// Which terms enter the objective: supervised only, consistency only, or
/// both (combined). At least one must be present.
struct LossSpec {
  std::optional<LossTerm> supervised;
  std::optional<LossTerm> consistency;
};

struct GradientResult {
  ParameterSet gradients;
  double supervised_loss = 0.0;
  double consistency_loss = 0.0;  // already multiplied by the term weight
  double total_loss = 0.0;
};

/// Reverse-mode gradient of the objective described by `spec`.
GradientResult grad_params(const TaskModel& model, const LossSpec& spec);

/// Evaluates the objective only (used by finite-difference checks).
double loss_value(const TaskModel& model, const LossSpec& spec);

/// Gradient with respect to the representation of KL(target || head(r)),
/// differentiating through the head only.
Vector grad_representation(const TaskModel& model, const Eigen::Ref<const Vector>& representation,
                           const Eigen::Ref<const Vector>& target);

/// v <- momentum * v + g + weight_decay * w;  w <- w - lr * v.
/// Throws InvalidInput on shape mismatch or non-finite gradients; the model is
/// untouched in that case.
void sgd_step(TaskModel& model, const ParameterSet& gradients, const OptimizerConfig& cfg);

}  // namespace alssl::nn
