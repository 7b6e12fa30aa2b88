#pragma once

#include <span>
#include <string>
#include <vector>

#include "tsrobust/rng.hpp"
#include "tsrobust/tensor.hpp"

namespace tsrobust {

struct AugmentConfig {
  struct Jitter {
    double p = 0.75;
    double noise_level = 1.0;
  } jitter;
  struct RandomZero {
    double p = 0.5;
  } random_zero;
  struct SegmentZero {
    double total_zero_length = 0.25;   // fraction of k
    double max_segment_length = 0.05;  // fraction of k
  } segment_zero;
  struct GaussianNoise {
    double mean = 0.0;
    double sigma = 0.3;
  } gaussian_noise;
  struct Smooth {
    int kernel_size = 10;
    double sigma = 5.0;
  } smooth;

  void validate() const;
};

enum class AugmentMethod { Jitter, RandomZero, SegmentZero, GaussianNoise, Smooth, None };

constexpr int kNumAugmentMethods = 6;

std::string augment_method_name(AugmentMethod m);
AugmentMethod augment_method_from_name(const std::string& name);

// A sampled realization of one augmentation call: the method collapses to an
// elementwise add, an elementwise multiply, a fixed convolution kernel, or
// the identity. Masks and noise are constants of the call, so gradients flow
// through the equivalent fixed linear/masking operation.
struct AugmentPlan {
  enum class Kind { Identity, Add, Mul, Conv } kind = Kind::Identity;
  std::vector<double> vec;  // addend, mask, or kernel taps
};

AugmentPlan sample_plan(AugmentMethod m, int k, const AugmentConfig& cfg, Rng& rng);

std::vector<double> apply_plan(const AugmentPlan& plan, std::span<const double> x);

// Single-series operations (Algorithm-style surface).
std::vector<double> jitter(std::span<const double> x, const AugmentConfig& cfg, Rng& rng);
std::vector<double> random_zero(std::span<const double> x, const AugmentConfig& cfg, Rng& rng);
std::vector<double> segment_zero(std::span<const double> x, const AugmentConfig& cfg, Rng& rng);
std::vector<double> gaussian_noise(std::span<const double> x, const AugmentConfig& cfg,
                                   Rng& rng);
std::vector<double> smooth(std::span<const double> x, const AugmentConfig& cfg);
std::vector<double> apply_method(AugmentMethod m, std::span<const double> x,
                                 const AugmentConfig& cfg, Rng& rng);

// Normalized Gaussian taps centered at (size-1)/2.
std::vector<double> gaussian_kernel(int size, double sigma);

// Uniform draw over all six methods (None included).
AugmentMethod sd_select(Rng& rng);
std::vector<double> sd_apply(std::span<const double> x, const AugmentConfig& cfg, Rng& rng);

// Applies one method to a whole batch [b, k] inside a recording graph; each
// row gets its own sampled plan (rows in order), Smooth shares its kernel.
Tensor apply_method_graph(Graph& g, const Tensor& x, AugmentMethod m,
                          const AugmentConfig& cfg, Rng& rng);

}  // namespace tsrobust
