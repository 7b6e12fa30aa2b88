#include "tsrobust/augment.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "tsrobust/errors.hpp"

namespace tsrobust {

void AugmentConfig::validate() const {
  auto in01 = [](double p) { return p >= 0.0 && p <= 1.0; };
  if (!in01(jitter.p)) throw ConfigError("jitter.p must be in [0,1]");
  if (jitter.noise_level < 0.0) throw ConfigError("jitter.noise_level must be >= 0");
  if (!in01(random_zero.p)) throw ConfigError("random_zero.p must be in [0,1]");
  if (!in01(segment_zero.total_zero_length))
    throw ConfigError("segment_zero.total_zero_length must be in [0,1]");
  if (!(segment_zero.max_segment_length > 0.0 && segment_zero.max_segment_length <= 1.0))
    throw ConfigError("segment_zero.max_segment_length must be in (0,1]");
  if (gaussian_noise.sigma < 0.0) throw ConfigError("gaussian_noise.sigma must be >= 0");
  if (smooth.kernel_size < 1) throw ConfigError("smooth.kernel_size must be >= 1");
  if (smooth.sigma < 0.0) throw ConfigError("smooth.sigma must be >= 0");
}

std::string augment_method_name(AugmentMethod m) {
  switch (m) {
    case AugmentMethod::Jitter: return "jitter";
    case AugmentMethod::RandomZero: return "rz";
    case AugmentMethod::SegmentZero: return "sz";
    case AugmentMethod::GaussianNoise: return "noise";
    case AugmentMethod::Smooth: return "smooth";
    case AugmentMethod::None: return "none";
  }
  throw ConfigError("unknown augment method");
}

AugmentMethod augment_method_from_name(const std::string& name) {
  if (name == "jitter") return AugmentMethod::Jitter;
  if (name == "rz" || name == "random_zero") return AugmentMethod::RandomZero;
  if (name == "sz" || name == "segment_zero") return AugmentMethod::SegmentZero;
  if (name == "noise" || name == "gaussian_noise") return AugmentMethod::GaussianNoise;
  if (name == "smooth") return AugmentMethod::Smooth;
  if (name == "none") return AugmentMethod::None;
  throw ConfigError("unknown augment method '" + name + "'");
}

std::vector<double> gaussian_kernel(int size, double sigma) {
  if (size < 1) throw ConfigError("gaussian_kernel: size must be >= 1");
  std::vector<double> ker(static_cast<std::size_t>(size));
  const double center = (size - 1) / 2.0;
  if (sigma == 0.0) {
    // sigma -> 0 limit: equal mass on the taps nearest the center
    double best = 1e300;
    for (int i = 0; i < size; ++i) best = std::min(best, std::abs(i - center));
    int count = 0;
    for (int i = 0; i < size; ++i)
      if (std::abs(i - center) == best) ++count;
    for (int i = 0; i < size; ++i)
      ker[static_cast<std::size_t>(i)] = std::abs(i - center) == best ? 1.0 / count : 0.0;
    return ker;
  }
  double sum = 0.0;
  for (int i = 0; i < size; ++i) {
    const double d = i - center;
    ker[static_cast<std::size_t>(i)] = std::exp(-d * d / (2.0 * sigma * sigma));
    sum += ker[static_cast<std::size_t>(i)];
  }
  for (auto& v : ker) v /= sum;
  return ker;
}

AugmentPlan sample_plan(AugmentMethod m, int k, const AugmentConfig& cfg, Rng& rng) {
  AugmentPlan plan;
  switch (m) {
    case AugmentMethod::None:
      plan.kind = AugmentPlan::Kind::Identity;
      break;
    case AugmentMethod::Jitter: {
      plan.kind = AugmentPlan::Kind::Add;
      std::vector<double> mask(static_cast<std::size_t>(k));
      for (auto& b : mask) b = rng.bernoulli(cfg.jitter.p) ? 1.0 : 0.0;
      plan.vec.resize(static_cast<std::size_t>(k));
      for (int i = 0; i < k; ++i)
        plan.vec[static_cast<std::size_t>(i)] =
            mask[static_cast<std::size_t>(i)] * rng.uniform(-1.0, 1.0) * cfg.jitter.noise_level;
      break;
    }
    case AugmentMethod::RandomZero: {
      plan.kind = AugmentPlan::Kind::Mul;
      plan.vec.resize(static_cast<std::size_t>(k));
      for (auto& v : plan.vec) v = rng.bernoulli(cfg.random_zero.p) ? 0.0 : 1.0;
      break;
    }
    case AugmentMethod::SegmentZero: {
      plan.kind = AugmentPlan::Kind::Mul;
      plan.vec.assign(static_cast<std::size_t>(k), 1.0);
      const long target = std::lround(cfg.segment_zero.total_zero_length * k);
      if (target > 0) {
        const long max_len = std::lround(cfg.segment_zero.max_segment_length * k);
        if (max_len < 1)
          throw ConfigError("segment_zero: max_segment_length rounds to zero samples");
        long drawn = 0;
        while (drawn < target) {
          const int len = rng.uniform_int(1, static_cast<int>(max_len));
          const int start = rng.uniform_int(0, k - len);
          std::fill(plan.vec.begin() + start, plan.vec.begin() + start + len, 0.0);
          drawn += len;
        }
      }
      break;
    }
    case AugmentMethod::GaussianNoise: {
      plan.kind = AugmentPlan::Kind::Add;
      plan.vec.resize(static_cast<std::size_t>(k));
      for (auto& v : plan.vec) v = rng.normal(cfg.gaussian_noise.mean, cfg.gaussian_noise.sigma);
      break;
    }
    case AugmentMethod::Smooth: {
      if (cfg.smooth.kernel_size > k)
        throw ConfigError("smooth: kernel_size " + std::to_string(cfg.smooth.kernel_size) +
                          " exceeds series length " + std::to_string(k));
      plan.kind = AugmentPlan::Kind::Conv;
      plan.vec = gaussian_kernel(cfg.smooth.kernel_size, cfg.smooth.sigma);
      break;
    }
  }
  return plan;
}

std::vector<double> apply_plan(const AugmentPlan& plan, std::span<const double> x) {
  std::vector<double> out(x.begin(), x.end());
  switch (plan.kind) {
    case AugmentPlan::Kind::Identity:
      break;
    case AugmentPlan::Kind::Add:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] += plan.vec[i];
      break;
    case AugmentPlan::Kind::Mul:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] *= plan.vec[i];
      break;
    case AugmentPlan::Kind::Conv: {
      // same-length cross-correlation with replicate padding
      const int k = static_cast<int>(x.size());
      const int w = static_cast<int>(plan.vec.size());
      const int left = (w - 1) / 2;
      for (int t = 0; t < k; ++t) {
        double acc = 0.0;
        for (int dw = 0; dw < w; ++dw) {
          int idx = t + dw - left;
          idx = std::clamp(idx, 0, k - 1);
          acc += plan.vec[static_cast<std::size_t>(dw)] * x[static_cast<std::size_t>(idx)];
        }
        out[static_cast<std::size_t>(t)] = acc;
      }
      break;
    }
  }
  return out;
}

std::vector<double> jitter(std::span<const double> x, const AugmentConfig& cfg, Rng& rng) {
  return apply_plan(sample_plan(AugmentMethod::Jitter, static_cast<int>(x.size()), cfg, rng), x);
}

std::vector<double> random_zero(std::span<const double> x, const AugmentConfig& cfg, Rng& rng) {
  return apply_plan(sample_plan(AugmentMethod::RandomZero, static_cast<int>(x.size()), cfg, rng),
                    x);
}

std::vector<double> segment_zero(std::span<const double> x, const AugmentConfig& cfg, Rng& rng) {
  return apply_plan(
      sample_plan(AugmentMethod::SegmentZero, static_cast<int>(x.size()), cfg, rng), x);
}

std::vector<double> gaussian_noise(std::span<const double> x, const AugmentConfig& cfg,
                                   Rng& rng) {
  return apply_plan(
      sample_plan(AugmentMethod::GaussianNoise, static_cast<int>(x.size()), cfg, rng), x);
}

std::vector<double> smooth(std::span<const double> x, const AugmentConfig& cfg) {
  Rng unused(0);
  return apply_plan(sample_plan(AugmentMethod::Smooth, static_cast<int>(x.size()), cfg, unused),
                    x);
}

std::vector<double> apply_method(AugmentMethod m, std::span<const double> x,
                                 const AugmentConfig& cfg, Rng& rng) {
  return apply_plan(sample_plan(m, static_cast<int>(x.size()), cfg, rng), x);
}

AugmentMethod sd_select(Rng& rng) {
  return static_cast<AugmentMethod>(rng.uniform_int(0, kNumAugmentMethods - 1));
}

std::vector<double> sd_apply(std::span<const double> x, const AugmentConfig& cfg, Rng& rng) {
  return apply_method(sd_select(rng), x, cfg, rng);
}

Tensor apply_method_graph(Graph& g, const Tensor& x, AugmentMethod m,
                          const AugmentConfig& cfg, Rng& rng) {
  if (m == AugmentMethod::None) return x;
  if (x.shape().size() != 2)
    throw ShapeError("apply_method_graph: expected [batch, k], got " + shape_str(x.shape()));
  const int batch = x.shape()[0];
  const int k = x.shape()[1];

  if (m == AugmentMethod::Smooth) {
    AugmentPlan plan = sample_plan(m, k, cfg, rng);
    const int w = static_cast<int>(plan.vec.size());
    Tensor ker = g.constant({1, 1, w}, std::move(plan.vec));
    Tensor y = conv1d(reshape(x, {batch, 1, k}), ker, Padding::Replicate);
    return reshape(y, {batch, k});
  }

  std::vector<double> buf(static_cast<std::size_t>(batch) * k);
  AugmentPlan::Kind kind = AugmentPlan::Kind::Identity;
  for (int b = 0; b < batch; ++b) {
    AugmentPlan plan = sample_plan(m, k, cfg, rng);
    kind = plan.kind;
    std::copy(plan.vec.begin(), plan.vec.end(),
              buf.begin() + static_cast<std::size_t>(b) * k);
  }
  Tensor c = g.constant({batch, k}, std::move(buf));
  return kind == AugmentPlan::Kind::Add ? add(x, c) : mul(x, c);
}

}  // namespace tsrobust
