#include "tsrobust/defenses.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "tsrobust/serde.hpp"

namespace tsrobust {

using nlohmann::json;

EnsembleModel::EnsembleModel(std::vector<Classifier> bases) : bases_(std::move(bases)) {
  if (bases_.size() < 2) throw ConfigError("ensemble needs at least 2 base models");
  const int c = bases_.front().num_classes();
  const int k = bases_.front().input_length();
  for (const auto& b : bases_)
    if (b.num_classes() != c || b.input_length() != k)
      throw ConfigError("ensemble bases must share class count and input length");
}

Tensor EnsembleModel::bind_probs(Graph& g, const Tensor& x) const {
  Tensor acc = bases_.front().bind_probs(g, x);
  for (std::size_t i = 1; i < bases_.size(); ++i)
    acc = add(acc, bases_[i].bind_probs(g, x));
  return scale(acc, 1.0 / static_cast<double>(bases_.size()));
}

Tensor EnsembleModel::bind_logits(Graph& g, const Tensor& x) const {
  return log_clamped(bind_probs(g, x));
}

void EnsembleModel::save(const std::string& manifest_path) const {
  namespace fs = std::filesystem;
  const fs::path manifest(manifest_path);
  const fs::path dir = manifest.parent_path();
  json bases = json::array();
  for (std::size_t i = 0; i < bases_.size(); ++i) {
    const std::string base_name =
        manifest.stem().string() + "_base" + std::to_string(i) + ".json";
    bases_[i].save((dir / base_name).string());
    bases.push_back(base_name);
  }
  json j{{"format", "tsrobust-ensemble-v1"}, {"bases", std::move(bases)}};
  std::ofstream out(manifest_path);
  if (!out) throw IoError("cannot write " + manifest_path);
  out << j.dump();
}

EnsembleModel EnsembleModel::load(const std::string& manifest_path) {
  namespace fs = std::filesystem;
  std::ifstream in(manifest_path);
  if (!in) throw IoError("cannot open " + manifest_path);
  std::ostringstream ss;
  ss << in.rdbuf();
  json j;
  try {
    j = json::parse(ss.str());
  } catch (const json::exception& e) {
    throw FormatError(std::string("ensemble manifest parse error: ") + e.what());
  }
  if (j.value("format", "") != "tsrobust-ensemble-v1")
    throw FormatError("not a tsrobust ensemble manifest");
  const fs::path dir = fs::path(manifest_path).parent_path();
  std::vector<Classifier> bases;
  for (const auto& name : j["bases"])
    bases.push_back(Classifier::load((dir / name.get<std::string>()).string()));
  return EnsembleModel(std::move(bases));
}

// ---- training-time constructions ----

Classifier train_sdam(const ClassifierConfig& cfg, AugmentMethod method,
                      const AugmentConfig& aug, const Dataset& d, const TrainConfig& tc) {
  aug.validate();
  Classifier m(cfg, d.k, tc.seed);
  FrontLayer fl;
  fl.shuffle = false;
  fl.method = method;
  fl.augment = aug;
  m.set_front(std::move(fl));
  train(m, d, tc);
  return m;
}

Classifier train_sd(const ClassifierConfig& cfg, const AugmentConfig& aug, const Dataset& d,
                    const TrainConfig& tc, bool per_epoch) {
  aug.validate();
  Classifier m(cfg, d.k, tc.seed);
  FrontLayer fl;
  fl.shuffle = true;
  fl.augment = aug;
  fl.per_epoch = per_epoch;
  m.set_front(std::move(fl));
  train(m, d, tc);
  return m;
}

EnsembleModel train_ad(const ClassifierConfig& cfg, const AugmentConfig& aug,
                       const Dataset& d, const TrainConfig& tc) {
  std::vector<Classifier> bases;
  bases.reserve(kAdBaseMethods.size());
  for (std::size_t i = 0; i < kAdBaseMethods.size(); ++i) {
    TrainConfig tci = tc;
    tci.seed = tc.seed ^ static_cast<std::uint64_t>(i);
    bases.push_back(train_sdam(cfg, kAdBaseMethods[i], aug, d, tci));
  }
  return EnsembleModel(std::move(bases));
}

std::vector<int> ad_predict(const EnsembleModel& e, std::span<const double> x, int n,
                            int repeats, std::vector<double>* probs_out) {
  auto probs = predict_probs(e, x, n, repeats);
  const int c = e.num_classes();
  std::vector<int> out(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    out[static_cast<std::size_t>(i)] = argmax_lowest(
        {probs.data() + static_cast<std::size_t>(i) * c, static_cast<std::size_t>(c)});
  if (probs_out) *probs_out = std::move(probs);
  return out;
}

VarianceDiagnostic variance_diagnostic(const EnsembleModel& e, std::span<const double> x,
                                       int n, std::span<const int> labels, int trials) {
  if (trials < 2) throw ConfigError("variance_diagnostic: trials must be >= 2");
  if (static_cast<int>(labels.size()) != n)
    throw ShapeError("variance_diagnostic: labels size mismatch");
  const int c = e.num_classes();
  const int k = e.input_length();
  const int nb = e.num_bases();

  VarianceDiagnostic out;
  out.ensemble_variance.resize(static_cast<std::size_t>(n));
  out.base_variances.assign(static_cast<std::size_t>(n),
                            std::vector<double>(static_cast<std::size_t>(nb), 0.0));
  out.avg_base_variance.resize(static_cast<std::size_t>(n));
  out.ensemble_bias.resize(static_cast<std::size_t>(n));
  out.avg_base_bias.resize(static_cast<std::size_t>(n));

  // population variance per output coordinate, summed over coordinates
  auto summed_variance = [&](const std::vector<double>& rows, const std::vector<double>& mean) {
    double acc = 0.0;
    for (int t = 0; t < trials; ++t)
      for (int j = 0; j < c; ++j) {
        const double dv = rows[static_cast<std::size_t>(t) * c + j] - mean[static_cast<std::size_t>(j)];
        acc += dv * dv;
      }
    return acc / trials;
  };

  std::vector<double> base_out(static_cast<std::size_t>(nb) * trials * c);
  for (int s = 0; s < n; ++s) {
    std::span<const double> row{x.data() + static_cast<std::size_t>(s) * k,
                                static_cast<std::size_t>(k)};
    for (int b = 0; b < nb; ++b)
      for (int t = 0; t < trials; ++t) {
        auto probs = e.base(b).forward(row, 1, false);
        std::copy(probs.begin(), probs.end(),
                  base_out.begin() +
                      (static_cast<std::size_t>(b) * trials + t) * c);
      }

    std::vector<double> ens_rows(static_cast<std::size_t>(trials) * c, 0.0);
    for (int t = 0; t < trials; ++t)
      for (int b = 0; b < nb; ++b)
        for (int j = 0; j < c; ++j)
          ens_rows[static_cast<std::size_t>(t) * c + j] +=
              base_out[(static_cast<std::size_t>(b) * trials + t) * c + j] / nb;

    double var_sum = 0.0, bias_sum = 0.0;
    for (int b = 0; b < nb; ++b) {
      std::vector<double> rows(base_out.begin() + static_cast<std::size_t>(b) * trials * c,
                               base_out.begin() + (static_cast<std::size_t>(b) + 1) * trials * c);
      std::vector<double> mean(static_cast<std::size_t>(c), 0.0);
      for (int t = 0; t < trials; ++t)
        for (int j = 0; j < c; ++j) mean[static_cast<std::size_t>(j)] += rows[static_cast<std::size_t>(t) * c + j];
      for (auto& v : mean) v /= trials;
      const double var = summed_variance(rows, mean);
      out.base_variances[static_cast<std::size_t>(s)][static_cast<std::size_t>(b)] = var;
      var_sum += var;
      double bias_sq = 0.0;
      for (int j = 0; j < c; ++j) {
        const double target = j == labels[s] ? 1.0 : 0.0;
        const double dv = mean[static_cast<std::size_t>(j)] - target;
        bias_sq += dv * dv;
      }
      bias_sum += std::sqrt(bias_sq);
    }
    out.avg_base_variance[static_cast<std::size_t>(s)] = var_sum / nb;
    out.avg_base_bias[static_cast<std::size_t>(s)] = bias_sum / nb;

    std::vector<double> ens_mean(static_cast<std::size_t>(c), 0.0);
    for (int t = 0; t < trials; ++t)
      for (int j = 0; j < c; ++j) ens_mean[static_cast<std::size_t>(j)] += ens_rows[static_cast<std::size_t>(t) * c + j];
    for (auto& v : ens_mean) v /= trials;
    out.ensemble_variance[static_cast<std::size_t>(s)] = summed_variance(ens_rows, ens_mean);
    double bias_sq = 0.0;
    for (int j = 0; j < c; ++j) {
      const double target = j == labels[s] ? 1.0 : 0.0;
      const double dv = ens_mean[static_cast<std::size_t>(j)] - target;
      bias_sq += dv * dv;
    }
    out.ensemble_bias[static_cast<std::size_t>(s)] = std::sqrt(bias_sq);
  }
  return out;
}

Classifier train_at(const ClassifierConfig& cfg, const Dataset& d, const TrainConfig& tc,
                    int pgd_steps, std::vector<double>* loss_trace) {
  tc.validate();
  d.validate();
  if (pgd_steps < 0) throw ConfigError("train_at: pgd_steps must be >= 0");
  Classifier m(cfg, d.k, tc.seed);

  const AttackSpec pgd_cfg = AttackSpec::defaults(AttackMethod::PGD);
  Rng attack_rng(derive_seed(tc.seed, 0x6174ULL));
  Rng shuffle_rng(derive_seed(tc.seed, 0x7368756666ULL));

  const int n = d.size();
  const int c = m.num_classes();
  (void)c;
  std::vector<int> order(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;

  auto& params = m.parameters();
  std::vector<std::vector<double>> velocity(params.size());
  for (std::size_t p = 0; p < params.size(); ++p)
    velocity[p].assign(params[p].v.size(), 0.0);

  std::vector<double> trace;
  std::vector<double> xbuf, xcomb;
  std::vector<int> ybuf, ycomb;

  for (int epoch = 0; epoch < tc.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng.engine());
    double loss_sum = 0.0;
    int batch_index = 0;
    for (int begin = 0; begin < n; begin += tc.batch_size, ++batch_index) {
      const int bs = std::min(tc.batch_size, n - begin);
      xbuf.resize(static_cast<std::size_t>(bs) * d.k);
      ybuf.resize(static_cast<std::size_t>(bs));
      for (int i = 0; i < bs; ++i) {
        const int src = order[static_cast<std::size_t>(begin + i)];
        auto row = d.row(src);
        std::copy(row.begin(), row.end(), xbuf.begin() + static_cast<std::size_t>(i) * d.k);
        ybuf[static_cast<std::size_t>(i)] = d.labels[static_cast<std::size_t>(src)];
      }

      // adversarial twins against the current parameters; equal weight with
      // the natural samples in one combined step
      std::vector<double> delta(xbuf.size(), 0.0);
      if (pgd_steps > 0)
        delta = pgd_delta(m, xbuf, bs, ybuf, pgd_cfg.epsilon, pgd_cfg.init_span,
                          pgd_cfg.step_size, pgd_steps, attack_rng);
      xcomb.resize(2 * xbuf.size());
      ycomb.resize(2 * ybuf.size());
      std::copy(xbuf.begin(), xbuf.end(), xcomb.begin());
      for (std::size_t i = 0; i < xbuf.size(); ++i)
        xcomb[xbuf.size() + i] = xbuf[i] + delta[i];
      std::copy(ybuf.begin(), ybuf.end(), ycomb.begin());
      std::copy(ybuf.begin(), ybuf.end(), ycomb.begin() + ybuf.size());

      Graph g;
      Tensor x = g.constant({2 * bs, d.k}, xcomb);
      Classifier::Binding bind = m.bind(g, x, true, true);
      Tensor loss = cross_entropy(bind.probs, std::span<const int>(ycomb));
      const double lv = loss.scalar();
      if (!std::isfinite(lv))
        throw Error("adversarial training diverged: non-finite loss at epoch " +
                    std::to_string(epoch) + ", batch " + std::to_string(batch_index));
      loss_sum += lv * bs;
      g.backward(loss);

      for (std::size_t p = 0; p < params.size(); ++p) {
        auto grad = bind.params[p].grad();
        auto& vel = velocity[p];
        auto& val = params[p].v;
        for (std::size_t i = 0; i < val.size(); ++i) {
          vel[i] = tc.momentum * vel[i] + grad[i];
          val[i] -= tc.lr * vel[i];
        }
      }
    }
    trace.push_back(loss_sum / n);
  }
  if (loss_trace) *loss_trace = std::move(trace);
  return m;
}

Classifier train_dd(const ClassifierConfig& cfg, const Dataset& d, const TrainConfig& tc,
                    double temperature) {
  if (!(temperature > 0.0)) throw ConfigError("train_dd: temperature must be positive");

  ClassifierConfig hot = cfg;
  hot.temperature = temperature;

  // teacher and student use independent seeds
  TrainConfig teacher_tc = tc;
  teacher_tc.seed = derive_seed(tc.seed, 0x74656163686572ULL);
  Classifier teacher(hot, d.k, teacher_tc.seed);
  train(teacher, d, teacher_tc);

  // softened targets from the teacher at the elevated temperature
  std::vector<double> soft = teacher.forward(d.series, d.size(), false);

  TrainConfig student_tc = tc;
  student_tc.seed = derive_seed(tc.seed, 0x73747564656e74ULL);
  Classifier student(hot, d.k, student_tc.seed);
  train_soft(student, d, soft, student_tc);
  student.set_temperature(1.0);  // evaluated at T=1
  return student;
}

}  // namespace tsrobust
