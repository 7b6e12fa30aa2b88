#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tsrobust/augment.hpp"
#include "tsrobust/data.hpp"
#include "tsrobust/rng.hpp"
#include "tsrobust/tensor.hpp"

namespace tsrobust {

struct ClassifierConfig {
  std::vector<int> channels{32, 64, 32};
  std::vector<int> kernel_widths{7, 5, 3};
  int num_classes = 2;
  double temperature = 1.0;
  void validate() const;
};

// Randomized augmentation front layer. `shuffle` selects a method uniformly
// per forward call (the SD defense); otherwise `method` is applied. The
// layer stays active at inference.
struct FrontLayer {
  bool shuffle = false;
  AugmentMethod method = AugmentMethod::None;
  AugmentConfig augment{};
  bool per_epoch = false;  // SD: reselect once per epoch instead of per call
};

struct Array {
  Shape shape;
  std::vector<double> v;
  std::int64_t size() const { return static_cast<std::int64_t>(v.size()); }
};

// Differentiable evaluation surface shared by single classifiers and
// ensembles: binds a probability (or logit) head over input x into a
// recording graph. Stochastic front layers draw fresh randomness per bind.
class Model {
 public:
  virtual ~Model() = default;
  virtual int num_classes() const = 0;
  virtual int input_length() const = 0;
  virtual Tensor bind_probs(Graph& g, const Tensor& x) const = 0;
  virtual Tensor bind_logits(Graph& g, const Tensor& x) const = 0;
};

// Compact 1-D FCN: conv blocks (zero padding) with ReLU, global average
// pool, affine head, temperature softmax.
class Classifier final : public Model {
 public:
  Classifier(ClassifierConfig cfg, int input_len, std::uint64_t seed);

  struct Binding {
    Tensor logits;
    Tensor probs;
    std::vector<Tensor> params;  // same order as parameters()
  };
  Binding bind(Graph& g, const Tensor& x, bool train_mode, bool track_params) const;

  Tensor bind_probs(Graph& g, const Tensor& x) const override;
  Tensor bind_logits(Graph& g, const Tensor& x) const override;

  // Value-only forward; returns probabilities [batch, C] row-major.
  std::vector<double> forward(std::span<const double> x, int batch, bool train_mode) const;

  int num_classes() const override { return cfg_.num_classes; }
  int input_length() const override { return input_len_; }
  const ClassifierConfig& config() const { return cfg_; }
  std::uint64_t seed() const { return seed_; }

  void set_front(FrontLayer fl);
  void clear_front() { front_.reset(); }
  const std::optional<FrontLayer>& front() const { return front_; }
  // SD per-epoch granularity: the trainer calls this at each epoch start
  // and clears it when training ends, restoring per-call draws at inference.
  void resample_epoch_method() const;
  void clear_epoch_method() const { epoch_method_.reset(); }

  std::vector<Array>& parameters() { return params_; }
  const std::vector<Array>& parameters() const { return params_; }
  std::int64_t parameter_count() const;

  void set_temperature(double t);

  void enable_selection_log(bool on) { log_selections_ = on; }
  const std::vector<AugmentMethod>& selection_log() const { return selection_log_; }

  void save(const std::string& path) const;
  static Classifier load(const std::string& path);
  std::string to_json_string() const;
  static Classifier from_json_string(const std::string& text);

 private:
  AugmentMethod select_front_method() const;

  ClassifierConfig cfg_;
  int input_len_ = 0;
  std::uint64_t seed_ = 0;
  std::vector<Array> params_;  // per block: kernels, bias; then affine W, b
  std::optional<FrontLayer> front_;
  mutable Rng aug_rng_;
  mutable std::optional<AugmentMethod> epoch_method_;
  mutable std::vector<AugmentMethod> selection_log_;
  bool log_selections_ = false;
};

struct TrainConfig {
  int epochs = 1000;
  int batch_size = 32;
  double lr = 1e-3;
  double momentum = 0.9;
  std::uint64_t seed = 0;
  void validate() const;
};

// Mini-batch SGD with momentum on cross-entropy; returns per-epoch mean
// loss. Deterministic given tc.seed. Throws on non-finite loss with the
// offending epoch and batch in the message.
std::vector<double> train(Classifier& m, const Dataset& d, const TrainConfig& tc);

// Same loop against per-sample soft targets ([n, C] row-major, rows sum to
// one); used by distillation.
std::vector<double> train_soft(Classifier& m, const Dataset& d,
                               const std::vector<double>& soft_targets,
                               const TrainConfig& tc);

// Mean probabilities over `repeats` stochastic forwards, [n, C] row-major.
std::vector<double> predict_probs(const Model& m, std::span<const double> x, int n,
                                  int repeats);
// Argmax of repeat-averaged probabilities; ties break to the lowest class.
std::vector<int> predict(const Model& m, std::span<const double> x, int n, int repeats);

int argmax_lowest(std::span<const double> row);

}  // namespace tsrobust
