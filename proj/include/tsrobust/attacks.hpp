#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tsrobust/model.hpp"
#include "tsrobust/rng.hpp"

namespace tsrobust {

enum class AttackMethod { FGSM, BIM, PGD, GM, SWAP, CW };

std::string attack_method_name(AttackMethod m);
AttackMethod attack_method_from_name(const std::string& name);

struct AttackSpec {
  AttackMethod method = AttackMethod::PGD;
  double epsilon = 0.1;     // L-inf clip radius
  double init_span = 0.001; // uniform random init in +/- span
  int iterations = 1000;    // update steps; 0 means init-only
  double step_size = 0.0005;
  double swap_gap = 0.02;   // SWAP early-stop logit gap
  double cw_c = 1e-5;       // C&W misclassification weight
  double gm_lambda = 0.1;   // GM roughness penalty weight
  std::uint64_t seed = 0;

  // Per-method step sizes: 0.1 for FGSM, 0.0005 for the iterative attacks.
  static AttackSpec defaults(AttackMethod m);
  void validate() const;
};

struct AdversarialBatch {
  int n = 0;
  int k = 0;
  std::vector<double> original;   // n*k
  std::vector<double> perturbed;  // n*k
  std::vector<double> delta;      // n*k, always within the epsilon box
  // Single post-attack forward disagrees with the ground truth label.
  std::vector<std::uint8_t> success;
  std::vector<int> iterations_used;

  std::span<const double> delta_row(int i) const {
    return {delta.data() + static_cast<std::size_t>(i) * k, static_cast<std::size_t>(k)};
  }
};

// Elementwise projection onto [-epsilon, epsilon].
void clip_delta_inplace(std::span<double> delta, double epsilon);
std::vector<double> clip_delta(std::span<const double> delta, double epsilon);

// i.i.d. Uniform(-init_span, init_span).
std::vector<double> random_init(std::size_t count, double init_span, Rng& rng);

AdversarialBatch fgsm(const Model& m, std::span<const double> x, int n,
                      std::span<const int> labels, const AttackSpec& spec);
AdversarialBatch bim(const Model& m, std::span<const double> x, int n,
                     std::span<const int> labels, const AttackSpec& spec);
AdversarialBatch pgd(const Model& m, std::span<const double> x, int n,
                     std::span<const int> labels, const AttackSpec& spec);
AdversarialBatch gm(const Model& m, std::span<const double> x, int n,
                    std::span<const int> labels, const AttackSpec& spec);
AdversarialBatch swap_attack(const Model& m, std::span<const double> x, int n,
                             std::span<const int> labels, const AttackSpec& spec);
AdversarialBatch cw(const Model& m, std::span<const double> x, int n,
                    std::span<const int> labels, const AttackSpec& spec);

AdversarialBatch run_attack(const Model& m, std::span<const double> x, int n,
                            std::span<const int> labels, const AttackSpec& spec);

// PGD inner loop against the given rng stream; used by adversarial training
// so the attack draws stay inside the training stream. Returns delta (n*k).
std::vector<double> pgd_delta(const Model& m, std::span<const double> x, int n,
                              std::span<const int> labels, double epsilon,
                              double init_span, double step_size, int iterations,
                              Rng& rng);

}  // namespace tsrobust
