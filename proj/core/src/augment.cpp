#include "alssl/augment.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "alssl/errors.hpp"
#include "alssl/rng.hpp"

namespace alssl::augment {

AugmentPolicy AugmentPolicy::weak_default() { return AugmentPolicy{}; }

AugmentPolicy AugmentPolicy::strong_default() {
  AugmentPolicy p;
  p.kind = PolicyKind::strong;
  p.jitter_sigma = 0.15;
  p.drop_probability = 0.1;
  p.scale_lo = 0.8;
  p.scale_hi = 1.25;
  return p;
}

void AugmentPolicy::validate() const {
  auto in01 = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (!(jitter_sigma >= 0.0) || !std::isfinite(jitter_sigma)) throw InvalidInput("jitter sigma must be >= 0");
  if (!(shift_fraction >= 0.0 && shift_fraction < 1.0)) throw InvalidInput("shift fraction must lie in [0, 1)");
  if (!in01(flip_probability)) throw InvalidInput("flip probability must lie in [0, 1]");
  if (!in01(drop_probability)) throw InvalidInput("feature-drop probability must lie in [0, 1]");
  if (!(scale_lo > 0.0 && scale_lo <= scale_hi) || !std::isfinite(scale_hi))
    throw InvalidInput("scale range must satisfy 0 < lo <= hi");
  if (kind == PolicyKind::weak && drop_probability != 0.0)
    throw InvalidInput("weak policy must not drop features");
  for (double s : feature_scale)
    if (!(s >= 0.0) || !std::isfinite(s)) throw InvalidInput("feature scale must be finite and >= 0");
}

void validate_pair(const AugmentPolicy& weak, const AugmentPolicy& strong) {
  weak.validate();
  strong.validate();
  if (weak.kind != PolicyKind::weak || strong.kind != PolicyKind::strong)
    throw InvalidInput("policy kinds must be (weak, strong)");
  if (weak.jitter_sigma > strong.jitter_sigma)
    throw InvalidInput("weak jitter sigma must not exceed strong jitter sigma");
}

namespace {

using Image = std::vector<double>;

void flip_and_shift(Image& img, const ImageShape& shape, const AugmentPolicy& policy, KeyedRng& rng) {
  const auto w = static_cast<std::ptrdiff_t>(shape.width);
  const auto h = static_cast<std::ptrdiff_t>(shape.height);
  const bool flip = rng.uniform() < policy.flip_probability;
  const auto max_shift = static_cast<std::ptrdiff_t>(std::floor(policy.shift_fraction * static_cast<double>(shape.width)));
  std::ptrdiff_t dx = 0, dy = 0;
  if (max_shift > 0) {
    const auto span = static_cast<std::uint64_t>(2 * max_shift + 1);
    dx = static_cast<std::ptrdiff_t>(rng.below(span)) - max_shift;
    dy = static_cast<std::ptrdiff_t>(rng.below(span)) - max_shift;
  }
  if (!flip && dx == 0 && dy == 0) return;
  Image out(img.size(), 0.0);
  for (std::ptrdiff_t y = 0; y < h; ++y) {
    for (std::ptrdiff_t x = 0; x < w; ++x) {
      const std::ptrdiff_t sx0 = x - dx;
      const std::ptrdiff_t sy = y - dy;
      if (sx0 < 0 || sx0 >= w || sy < 0 || sy >= h) continue;
      const std::ptrdiff_t sx = flip ? (w - 1 - sx0) : sx0;
      out[static_cast<std::size_t>(y * w + x)] = img[static_cast<std::size_t>(sy * w + sx)];
    }
  }
  img.swap(out);
}

enum class ImageOp { brightness, contrast, dropout, noise };

void apply_image_op(Image& img, const ImageShape& shape, ImageOp op, const AugmentPolicy& policy, KeyedRng& rng) {
  switch (op) {
    case ImageOp::brightness: {
      const double s = rng.uniform(policy.scale_lo, policy.scale_hi);
      for (auto& v : img) v *= s;
      break;
    }
    case ImageOp::contrast: {
      const double s = rng.uniform(policy.scale_lo, policy.scale_hi);
      double mean = 0.0;
      for (double v : img) mean += v;
      mean /= static_cast<double>(img.size());
      for (auto& v : img) v = mean + s * (v - mean);
      break;
    }
    case ImageOp::dropout: {
      const std::size_t side = std::max<std::size_t>(1, shape.width / 4);
      const std::size_t x0 = static_cast<std::size_t>(rng.below(shape.width));
      const std::size_t y0 = static_cast<std::size_t>(rng.below(shape.height));
      for (std::size_t y = y0; y < std::min(shape.height, y0 + side); ++y)
        for (std::size_t x = x0; x < std::min(shape.width, x0 + side); ++x) img[y * shape.width + x] = 0.0;
      break;
    }
    case ImageOp::noise: {
      for (auto& v : img) v += policy.jitter_sigma * rng.normal();
      break;
    }
  }
}

}  // namespace

Vector augment(std::span<const double> sample, const AugmentPolicy& policy, const AugmentKey& key,
               const std::optional<ImageShape>& shape) {
  for (double v : sample)
    if (!std::isfinite(v)) throw InvalidInput("augment: non-finite input");
  KeyedRng rng(Stream::augment, {policy.seed, key.sample_id, key.cycle, key.step, key.draw,
                                 static_cast<std::uint64_t>(policy.kind)});
  const auto n = sample.size();

  if (shape) {
    if (shape->pixels() != n) throw InvalidInput("augment: image shape does not match sample length");
    Image img(sample.begin(), sample.end());
    flip_and_shift(img, *shape, policy, rng);
    if (policy.kind == PolicyKind::strong) {
      std::array<ImageOp, 4> ops{ImageOp::brightness, ImageOp::contrast, ImageOp::dropout, ImageOp::noise};
      // Two distinct ops: partial Fisher-Yates over the op list.
      for (std::size_t i = 0; i < 2; ++i) {
        const auto j = i + static_cast<std::size_t>(rng.below(ops.size() - i));
        std::swap(ops[i], ops[j]);
        apply_image_op(img, *shape, ops[i], policy, rng);
      }
      // Pixels arrive in [0,1]; keep distortions in the same range.
      for (auto& v : img) v = std::clamp(v, 0.0, 1.0);
    }
    return Eigen::Map<const Vector>(img.data(), static_cast<Eigen::Index>(img.size()));
  }

  if (!policy.feature_scale.empty() && policy.feature_scale.size() != n)
    throw InvalidInput("augment: feature scale length does not match sample length");
  Vector out = Eigen::Map<const Vector>(sample.data(), static_cast<Eigen::Index>(n));
  if (policy.kind == PolicyKind::strong) {
    const double s = rng.uniform(policy.scale_lo, policy.scale_hi);
    out *= s;
    for (Eigen::Index i = 0; i < out.size(); ++i)
      if (rng.uniform() < policy.drop_probability) out[i] = 0.0;
  }
  if (policy.jitter_sigma > 0.0) {
    for (Eigen::Index i = 0; i < out.size(); ++i) {
      const double scale = policy.feature_scale.empty() ? 1.0 : policy.feature_scale[static_cast<std::size_t>(i)];
      out[i] += policy.jitter_sigma * scale * rng.normal();
    }
  }
  return out;
}

std::vector<double> feature_std(const Matrix& features) {
  std::vector<double> out(static_cast<std::size_t>(features.cols()), 0.0);
  if (features.rows() == 0) return out;
  const Vector mean = features.colwise().mean().transpose();
  for (Eigen::Index c = 0; c < features.cols(); ++c) {
    const double var = (features.col(c).array() - mean[c]).square().mean();
    out[static_cast<std::size_t>(c)] = std::sqrt(var);
  }
  return out;
}

}  // namespace alssl::augment
