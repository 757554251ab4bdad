#include "alssl/nn.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "alssl/errors.hpp"
#include "alssl/rng.hpp"

namespace alssl::nn {

bool ParameterSet::same_shape(const ParameterSet& other) const noexcept {
  if (weights.size() != other.weights.size() || biases.size() != other.biases.size()) return false;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    if (weights[l].rows() != other.weights[l].rows() || weights[l].cols() != other.weights[l].cols())
      return false;
    if (biases[l].size() != other.biases[l].size()) return false;
  }
  return true;
}

bool ParameterSet::all_finite() const noexcept {
  for (const auto& w : weights)
    if (!w.allFinite()) return false;
  for (const auto& b : biases)
    if (!b.allFinite()) return false;
  return true;
}

ParameterSet ParameterSet::zeros_like() const {
  ParameterSet z;
  z.weights.reserve(weights.size());
  z.biases.reserve(biases.size());
  for (const auto& w : weights) z.weights.push_back(Matrix::Zero(w.rows(), w.cols()));
  for (const auto& b : biases) z.biases.push_back(Vector::Zero(b.size()));
  return z;
}

TaskModel TaskModel::create(const std::vector<std::size_t>& sizes, std::uint64_t seed) {
  if (sizes.size() < 3) throw InvalidInput("model needs input, at least one hidden layer, and output sizes");
  for (auto s : sizes)
    if (s == 0) throw InvalidInput("layer sizes must be positive");
  ParameterSet params;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const auto fan_in = sizes[l];
    const auto fan_out = sizes[l + 1];
    const double s = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    KeyedRng rng(Stream::init, {seed, l});
    Matrix w(fan_out, fan_in);
    for (Eigen::Index r = 0; r < w.rows(); ++r)
      for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = rng.uniform(-s, s);
    params.weights.push_back(std::move(w));
    params.biases.push_back(Vector::Zero(static_cast<Eigen::Index>(fan_out)));
  }
  return TaskModel(std::move(params), std::nullopt, seed);
}

TaskModel TaskModel::create(std::size_t input_dim, const ModelConfig& cfg, std::size_t num_classes,
                            std::uint64_t seed) {
  std::vector<std::size_t> sizes{input_dim};
  sizes.insert(sizes.end(), cfg.hidden.begin(), cfg.hidden.end());
  sizes.push_back(num_classes);
  return create(sizes, seed);
}

TaskModel::TaskModel(ParameterSet params, std::optional<ParameterSet> velocity, std::uint64_t seed)
    : params_(std::move(params)), seed_(seed) {
  velocity_ = velocity ? std::move(*velocity) : params_.zeros_like();
  validate();
}

void TaskModel::validate() const {
  const auto& w = params_.weights;
  if (w.size() < 2) throw InvalidInput("model needs at least one hidden layer");
  if (params_.biases.size() != w.size()) throw InvalidInput("weight/bias layer count mismatch");
  for (std::size_t l = 0; l < w.size(); ++l) {
    if (w[l].rows() == 0 || w[l].cols() == 0) throw InvalidInput("empty layer " + std::to_string(l));
    if (params_.biases[l].size() != w[l].rows())
      throw InvalidInput("bias size mismatch in layer " + std::to_string(l));
    if (l > 0 && w[l].cols() != w[l - 1].rows())
      throw InvalidInput("layer " + std::to_string(l) + " input does not match previous output");
  }
  if (w.back().rows() < 2) throw InvalidInput("model needs at least two classes");
  if (!velocity_.same_shape(params_)) throw InvalidInput("momentum buffers do not match parameter shapes");
}

std::vector<std::size_t> TaskModel::sizes() const {
  std::vector<std::size_t> s{input_dim()};
  for (const auto& w : params_.weights) s.push_back(static_cast<std::size_t>(w.rows()));
  return s;
}

void OptimizerConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
    throw InvalidInput("learning rate must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw InvalidInput("momentum must lie in [0, 1)");
  if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay))
    throw InvalidInput("weight decay must be nonnegative");
  if (batch_size == 0) throw InvalidInput("batch size must be positive");
}

Vector softmax(const Eigen::Ref<const Vector>& logits) {
  const double m = logits.maxCoeff();
  Vector e = (logits.array() - m).exp();
  return e / e.sum();
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double m = logits.row(i).maxCoeff();
    auto e = (logits.row(i).array() - m).exp();
    out.row(i) = e / e.sum();
  }
  return out;
}

std::size_t argmax(const Eigen::Ref<const Vector>& v) {
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return static_cast<std::size_t>(best);
}

namespace {

struct ForwardCache {
  // activations[0] is the input; activations[l+1] is the output of layer l
  // (post-ReLU for hidden layers, logits for the head).
  std::vector<Matrix> activations;
};

ForwardCache run_forward(const TaskModel& model, const Matrix& batch) {
  if (static_cast<std::size_t>(batch.cols()) != model.input_dim())
    throw InvalidInput("batch has " + std::to_string(batch.cols()) + " columns, model expects " +
                       std::to_string(model.input_dim()));
  const auto& p = model.params();
  ForwardCache cache;
  cache.activations.reserve(p.layer_count() + 1);
  cache.activations.push_back(batch);
  for (std::size_t l = 0; l < p.layer_count(); ++l) {
    Matrix z = cache.activations.back() * p.weights[l].transpose();
    z.rowwise() += p.biases[l].transpose();
    if (l + 1 < p.layer_count()) z = z.cwiseMax(0.0);
    cache.activations.push_back(std::move(z));
  }
  return cache;
}

void accumulate_backward(const TaskModel& model, const ForwardCache& cache, Matrix delta,
                         ParameterSet& grads) {
  const auto& p = model.params();
  for (std::size_t l = p.layer_count(); l-- > 0;) {
    const Matrix& input = cache.activations[l];
    grads.weights[l].noalias() += delta.transpose() * input;
    grads.biases[l].noalias() += delta.colwise().sum().transpose();
    if (l == 0) break;
    Matrix upstream = delta * p.weights[l];
    // input is ReLU output of layer l-1; derivative is 1 where positive.
    delta = upstream.cwiseProduct((input.array() > 0.0).cast<double>().matrix());
  }
}

double mean_cross_entropy(const Matrix& probs, const Matrix& targets) {
  if (probs.rows() == 0) return 0.0;
  double total = 0.0;
  for (Eigen::Index i = 0; i < probs.rows(); ++i) total += cross_entropy(targets.row(i).transpose(), probs.row(i).transpose());
  return total / static_cast<double>(probs.rows());
}

void check_targets(const Matrix& targets, Eigen::Index rows, std::size_t num_classes) {
  if (targets.rows() != rows) throw InvalidInput("target count does not match prediction count");
  if (static_cast<std::size_t>(targets.cols()) != num_classes)
    throw InvalidInput("target width does not match class count");
}

}  // namespace

BatchOutput evaluate(const TaskModel& model, const Matrix& batch) {
  auto cache = run_forward(model, batch);
  BatchOutput out;
  out.logits = std::move(cache.activations.back());
  out.representations = std::move(cache.activations[cache.activations.size() - 2]);
  out.probs = softmax_rows(out.logits);
  out.predicted.resize(static_cast<std::size_t>(out.probs.rows()));
  for (Eigen::Index i = 0; i < out.probs.rows(); ++i)
    out.predicted[static_cast<std::size_t>(i)] = argmax(out.probs.row(i).transpose());
  return out;
}

std::vector<Prediction> forward(const TaskModel& model, const Matrix& batch) {
  auto out = evaluate(model, batch);
  std::vector<Prediction> preds(static_cast<std::size_t>(batch.rows()));
  for (Eigen::Index i = 0; i < batch.rows(); ++i) {
    auto& p = preds[static_cast<std::size_t>(i)];
    p.logits = out.logits.row(i).transpose();
    p.probs = out.probs.row(i).transpose();
    p.representation = out.representations.row(i).transpose();
    p.predicted_class = out.predicted[static_cast<std::size_t>(i)];
  }
  return preds;
}

Vector head_logits(const TaskModel& model, const Eigen::Ref<const Vector>& representation) {
  if (static_cast<std::size_t>(representation.size()) != model.representation_dim())
    throw InvalidInput("representation length does not match the head input width");
  return model.head_weight() * representation + model.head_bias();
}

Vector head_probs(const TaskModel& model, const Eigen::Ref<const Vector>& representation) {
  return softmax(head_logits(model, representation));
}

double cross_entropy(const Eigen::Ref<const Vector>& target, const Eigen::Ref<const Vector>& probs) {
  if (target.size() != probs.size()) throw InvalidInput("cross-entropy length mismatch");
  double ce = 0.0;
  for (Eigen::Index c = 0; c < target.size(); ++c) {
    if (target[c] == 0.0) continue;
    ce -= target[c] * std::log(std::max(probs[c], kLogEpsilon));
  }
  return ce;
}

double supervised_loss(const Matrix& probs, const Matrix& targets) {
  check_targets(targets, probs.rows(), static_cast<std::size_t>(probs.cols()));
  return mean_cross_entropy(probs, targets);
}

double supervised_loss(const std::vector<Prediction>& predictions, const Matrix& targets) {
  if (predictions.empty()) return 0.0;
  Matrix probs(static_cast<Eigen::Index>(predictions.size()), predictions.front().probs.size());
  for (std::size_t i = 0; i < predictions.size(); ++i) probs.row(static_cast<Eigen::Index>(i)) = predictions[i].probs.transpose();
  return supervised_loss(probs, targets);
}

Matrix one_hot(const std::vector<std::size_t>& labels, std::size_t num_classes) {
  Matrix m = Matrix::Zero(static_cast<Eigen::Index>(labels.size()), static_cast<Eigen::Index>(num_classes));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= num_classes) throw InvalidInput("label out of range for one-hot encoding");
    m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(labels[i])) = 1.0;
  }
  return m;
}

namespace {

double add_term(const TaskModel& model, const LossTerm& term, ParameterSet* grads) {
  if (term.inputs.rows() == 0) return 0.0;
  auto cache = run_forward(model, term.inputs);
  check_targets(term.targets, term.inputs.rows(), model.num_classes());
  Matrix probs = softmax_rows(cache.activations.back());
  const double loss = term.weight * mean_cross_entropy(probs, term.targets);
  if (grads) {
    // d(mean CE)/d(logits) = (probs - targets) / n for targets on the simplex.
    Matrix delta = (probs - term.targets) * (term.weight / static_cast<double>(term.inputs.rows()));
    accumulate_backward(model, cache, std::move(delta), *grads);
  }
  return loss;
}

void check_spec(const LossSpec& spec) {
  if (!spec.supervised && !spec.consistency) throw InvalidInput("loss spec has no terms");
}

}  // namespace

GradientResult grad_params(const TaskModel& model, const LossSpec& spec) {
  check_spec(spec);
  GradientResult out;
  out.gradients = model.params().zeros_like();
  if (spec.supervised) out.supervised_loss = add_term(model, *spec.supervised, &out.gradients);
  if (spec.consistency) out.consistency_loss = add_term(model, *spec.consistency, &out.gradients);
  out.total_loss = out.supervised_loss + out.consistency_loss;
  return out;
}

double loss_value(const TaskModel& model, const LossSpec& spec) {
  check_spec(spec);
  double total = 0.0;
  if (spec.supervised) total += add_term(model, *spec.supervised, nullptr);
  if (spec.consistency) total += add_term(model, *spec.consistency, nullptr);
  return total;
}

Vector grad_representation(const TaskModel& model, const Eigen::Ref<const Vector>& representation,
                           const Eigen::Ref<const Vector>& target) {
  if (static_cast<std::size_t>(target.size()) != model.num_classes())
    throw InvalidInput("target distribution length does not match class count");
  const Vector q = head_probs(model, representation);
  // KL(t || softmax(z)) = const - sum t log softmax(z);  d/dz = q * sum(t) - t.
  const Vector dz = q * target.sum() - target;
  return model.head_weight().transpose() * dz;
}

void sgd_step(TaskModel& model, const ParameterSet& gradients, const OptimizerConfig& cfg) {
  cfg.validate();
  auto& params = model.params();
  auto& velocity = model.velocity();
  if (!gradients.same_shape(params)) throw InvalidInput("gradient shapes do not match parameters");
  if (!gradients.all_finite()) throw InvalidInput("non-finite gradient; step rejected");
  for (std::size_t l = 0; l < params.layer_count(); ++l) {
    velocity.weights[l] = cfg.momentum * velocity.weights[l] + gradients.weights[l] + cfg.weight_decay * params.weights[l];
    velocity.biases[l] = cfg.momentum * velocity.biases[l] + gradients.biases[l] + cfg.weight_decay * params.biases[l];
    params.weights[l] -= cfg.learning_rate * velocity.weights[l];
    params.biases[l] -= cfg.learning_rate * velocity.biases[l];
  }
}

}  // namespace alssl::nn
