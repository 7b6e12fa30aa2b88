#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "tsrobust/attacks.hpp"
#include "tsrobust/data.hpp"
#include "tsrobust/model.hpp"

namespace tsrobust {

// AD base order: None first, then the five augmentation methods.
inline constexpr std::array<AugmentMethod, 6> kAdBaseMethods = {
    AugmentMethod::None,         AugmentMethod::Jitter, AugmentMethod::RandomZero,
    AugmentMethod::SegmentZero,  AugmentMethod::GaussianNoise,
    AugmentMethod::Smooth};

// Average Defence ensemble: softmax outputs of the bases are averaged at
// prediction time. Bases keep their own stochastic front layers.
class EnsembleModel final : public Model {
 public:
  explicit EnsembleModel(std::vector<Classifier> bases);

  int num_bases() const { return static_cast<int>(bases_.size()); }
  const Classifier& base(int i) const { return bases_[static_cast<std::size_t>(i)]; }
  Classifier& base(int i) { return bases_[static_cast<std::size_t>(i)]; }

  int num_classes() const override { return bases_.front().num_classes(); }
  int input_length() const override { return bases_.front().input_length(); }
  // Arithmetic mean of the bases' probability outputs.
  Tensor bind_probs(Graph& g, const Tensor& x) const override;
  // log of the averaged probabilities; the attack surface of the deployed
  // averaged model for logit-based objectives.
  Tensor bind_logits(Graph& g, const Tensor& x) const override;

  void save(const std::string& manifest_path) const;
  static EnsembleModel load(const std::string& manifest_path);

 private:
  std::vector<Classifier> bases_;
};

// Single-augmentation training: the method becomes the classifier's front
// layer and trains end-to-end. None yields the undefended baseline.
Classifier train_sdam(const ClassifierConfig& cfg, AugmentMethod method,
                      const AugmentConfig& aug, const Dataset& d, const TrainConfig& tc);

// Shuffle Defence: the front layer samples a method uniformly per forward
// call (or per epoch when per_epoch is set).
Classifier train_sd(const ClassifierConfig& cfg, const AugmentConfig& aug, const Dataset& d,
                    const TrainConfig& tc, bool per_epoch = false);

// Average Defence: six independent train_sdam runs, base i seeded with
// tc.seed ^ i, in kAdBaseMethods order.
EnsembleModel train_ad(const ClassifierConfig& cfg, const AugmentConfig& aug,
                       const Dataset& d, const TrainConfig& tc);

std::vector<int> ad_predict(const EnsembleModel& e, std::span<const double> x, int n,
                            int repeats, std::vector<double>* probs_out = nullptr);

struct VarianceDiagnostic {
  // one entry per probed sample
  std::vector<double> ensemble_variance;
  std::vector<std::vector<double>> base_variances;  // [sample][base]
  std::vector<double> avg_base_variance;
  std::vector<double> ensemble_bias;  // L2 distance of mean output to one-hot
  std::vector<double> avg_base_bias;
};

// Per sample: `trials` stochastic forwards per base; variances are summed
// per output coordinate; the ensemble column uses the averaged outputs of
// the same trials; bias is measured against the one-hot ground truth.
VarianceDiagnostic variance_diagnostic(const EnsembleModel& e, std::span<const double> x,
                                       int n, std::span<const int> labels, int trials);

// PGD-based adversarial training: per batch, PGD-`pgd_steps` twins against
// the current parameters, one step on the natural+adversarial batch.
Classifier train_at(const ClassifierConfig& cfg, const Dataset& d, const TrainConfig& tc,
                    int pgd_steps = 40, std::vector<double>* loss_trace = nullptr);

// Defensive distillation: teacher trained at temperature T on hard labels,
// student trained at T against the teacher's softened outputs, student
// evaluated at T=1.
Classifier train_dd(const ClassifierConfig& cfg, const Dataset& d, const TrainConfig& tc,
                    double temperature = 10.0);

}  // namespace tsrobust
