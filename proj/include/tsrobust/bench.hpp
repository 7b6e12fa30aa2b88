#pragma once

#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "tsrobust/attacks.hpp"
#include "tsrobust/data.hpp"
#include "tsrobust/defenses.hpp"
#include "tsrobust/model.hpp"

namespace tsrobust {

// One matrix cell: a trained defense evaluated on natural and attacked data.
struct EvalReport {
  std::string dataset;
  std::string defense;
  double na = 0.0;
  double f1 = 0.0;
  std::vector<std::pair<std::string, double>> ra;  // attack name -> RA, config order
  double train_seconds = 0.0;
  int repeats = 5;
  std::uint64_t seed = 0;
  nlohmann::json config_snapshot;
  std::string error;  // nonempty when the cell failed

  nlohmann::json to_json() const;
  static EvalReport from_json(const nlohmann::json& j);
};

// Fraction of test samples whose repeat-averaged prediction matches the
// ground truth.
double natural_accuracy(const Model& m, const Dataset& test, int repeats = 5);

// Unweighted mean of per-class F1. A class absent from both truth and
// predictions contributes 1; absent from predictions only contributes 0.
double macro_f1(std::span<const int> y_true, std::span<const int> y_pred, int c);

// Attack every test sample, then accuracy on the perturbed set.
double robust_accuracy(const Model& m, const Dataset& test, const AttackSpec& spec,
                       int repeats = 5);

struct BenchConfig {
  std::string data = "synth";  // "synth" or a UCR TSV path/prefix
  int synth_n_per_class = 100;
  int synth_k = 128;
  double synth_noise = 0.1;
  std::vector<std::string> defenses{"none"};
  std::vector<std::string> attacks{"fgsm", "pgd"};
  ClassifierConfig model;
  TrainConfig train;
  AugmentConfig augment;
  AttackSpec attack;  // shared attack knobs; method set per matrix column
  int repeats = 5;
  bool sd_per_epoch = false;
  int parallel_cells = 1;
  int at_pgd_steps = 40;
  double dd_temperature = 10.0;
  std::string out;  // output directory; cells resume from files found here
  std::string format = "json";

  nlohmann::json to_json() const;
  // Flat key-value document mirroring the CLI flags plus the `augment` and
  // `attack` sub-blocks. TSROBUST_SEED in the environment overrides the seed.
  static BenchConfig from_json(const nlohmann::json& j);
};

// A trained defense; either a single classifier or the AD ensemble.
struct TrainedDefense {
  std::optional<Classifier> single;
  std::optional<EnsembleModel> ensemble;
  double train_seconds = 0.0;

  const Model& model() const;
  void save(const std::string& path_without_ext) const;
};

// Trains one defense by CLI name: none, jitter, rz, sz, noise, smooth, sd,
// ad, at, dd.
TrainedDefense train_defense(const std::string& name, const BenchConfig& cfg,
                             const Dataset& train_set);

// Resolves cfg.data into (train, test); synthetic sets are generated from
// the training seed.
std::pair<Dataset, Dataset> load_bench_data(const BenchConfig& cfg);

// Runs defense x attack; one report per defense, resumable per cell via
// files in cfg.out; a failed cell is recorded and the rest continue.
std::vector<EvalReport> run_matrix(const BenchConfig& cfg);

void emit_report_json(const std::vector<EvalReport>& reports, const std::string& path);
// Columns: defense, NA, F1, Time, then RA_<attack> in config order.
void emit_report_csv(const std::vector<EvalReport>& reports, const std::string& path);
std::vector<EvalReport> load_report_json(const std::string& path);

}  // namespace tsrobust
