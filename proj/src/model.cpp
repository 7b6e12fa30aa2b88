#include "tsrobust/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "tsrobust/serde.hpp"

namespace tsrobust {

using nlohmann::json;

void ClassifierConfig::validate() const {
  if (channels.empty()) throw ConfigError("classifier needs at least one conv block");
  if (channels.size() != kernel_widths.size())
    throw ConfigError("channels and kernel_widths must have the same length");
  for (int c : channels)
    if (c < 1) throw ConfigError("channel widths must be >= 1");
  for (int w : kernel_widths)
    if (w < 1) throw ConfigError("kernel widths must be >= 1");
  if (num_classes < 2) throw ConfigError("num_classes must be >= 2");
  if (!(temperature > 0.0)) throw ConfigError("temperature must be positive");
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(lr >= 0.0)) throw ConfigError("learning rate must be >= 0");
  if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("momentum must be in [0, 1)");
}

Classifier::Classifier(ClassifierConfig cfg, int input_len, std::uint64_t seed)
    : cfg_(std::move(cfg)),
      input_len_(input_len),
      seed_(seed),
      aug_rng_(derive_seed(seed, 0x617567ULL)) {
  cfg_.validate();
  if (input_len_ < 1) throw ConfigError("input length must be >= 1");
  for (std::size_t i = 0; i < cfg_.kernel_widths.size(); ++i)
    if (cfg_.kernel_widths[i] > input_len_)
      throw ConfigError("kernel width exceeds input length");

  Rng init(derive_seed(seed, 0x696e6974ULL));
  int ch_in = 1;
  for (std::size_t i = 0; i < cfg_.channels.size(); ++i) {
    const int ch_out = cfg_.channels[i];
    const int w = cfg_.kernel_widths[i];
    Array ker{{ch_out, ch_in, w}, {}};
    ker.v.resize(static_cast<std::size_t>(ch_out) * ch_in * w);
    const double std = std::sqrt(2.0 / (ch_in * w));
    for (auto& v : ker.v) v = init.normal(0.0, std);
    params_.push_back(std::move(ker));
    params_.push_back(Array{{ch_out}, std::vector<double>(static_cast<std::size_t>(ch_out), 0.0)});
    ch_in = ch_out;
  }
  // zero-initialized head: an untrained model predicts uniform 1/C
  params_.push_back(Array{{cfg_.num_classes, ch_in},
                          std::vector<double>(static_cast<std::size_t>(cfg_.num_classes) * ch_in, 0.0)});
  params_.push_back(
      Array{{cfg_.num_classes}, std::vector<double>(static_cast<std::size_t>(cfg_.num_classes), 0.0)});
}

std::int64_t Classifier::parameter_count() const {
  std::int64_t n = 0;
  for (const auto& p : params_) n += p.size();
  return n;
}

void Classifier::set_front(FrontLayer fl) {
  front_ = std::move(fl);
  epoch_method_.reset();
}

void Classifier::set_temperature(double t) {
  if (!(t > 0.0)) throw ConfigError("temperature must be positive");
  cfg_.temperature = t;
}

void Classifier::resample_epoch_method() const {
  if (front_ && front_->shuffle) epoch_method_ = sd_select(aug_rng_);
}

AugmentMethod Classifier::select_front_method() const {
  if (!front_) return AugmentMethod::None;
  if (!front_->shuffle) return front_->method;
  if (front_->per_epoch && epoch_method_) return *epoch_method_;
  return sd_select(aug_rng_);
}

Classifier::Binding Classifier::bind(Graph& g, const Tensor& x, bool train_mode,
                                     bool track_params) const {
  (void)train_mode;  // the front layer stays active at inference
  if (x.shape().size() != 2 || x.shape()[1] != input_len_)
    throw ShapeError("classifier expects [batch, " + std::to_string(input_len_) +
                     "], got " + shape_str(x.shape()));
  const int batch = x.shape()[0];

  Tensor h2 = x;
  if (front_) {
    const AugmentMethod m = select_front_method();
    if (log_selections_) selection_log_.push_back(m);
    h2 = apply_method_graph(g, h2, m, front_->augment, aug_rng_);
  }

  Binding out;
  out.params.reserve(params_.size());
  for (const auto& p : params_)
    out.params.push_back(g.leaf(p.shape, p.v, track_params));

  Tensor h = reshape(h2, {batch, 1, input_len_});
  for (std::size_t i = 0; i < cfg_.channels.size(); ++i) {
    h = conv1d(h, out.params[2 * i], Padding::Zero);
    h = channel_bias(h, out.params[2 * i + 1]);
    h = relu(h);
  }
  Tensor pooled = global_avg_pool(h);
  out.logits = affine(pooled, out.params[params_.size() - 2], out.params[params_.size() - 1]);
  out.probs = softmax_t(out.logits, cfg_.temperature);
  return out;
}

Tensor Classifier::bind_probs(Graph& g, const Tensor& x) const {
  return bind(g, x, false, false).probs;
}

Tensor Classifier::bind_logits(Graph& g, const Tensor& x) const {
  return bind(g, x, false, false).logits;
}

std::vector<double> Classifier::forward(std::span<const double> x, int batch,
                                        bool train_mode) const {
  Graph g;
  Tensor xt = g.constant({batch, input_len_}, std::vector<double>(x.begin(), x.end()));
  Binding b = bind(g, xt, train_mode, false);
  return std::vector<double>(b.probs.values().begin(), b.probs.values().end());
}

// ---- training ----

namespace {

// Shared SGD loop; soft targets (when given) replace the hard labels.
std::vector<double> train_impl(Classifier& m, const Dataset& d, const TrainConfig& tc,
                               const std::vector<double>* soft_targets) {
  tc.validate();
  d.validate();
  if (d.k != m.input_length())
    throw ShapeError("dataset length " + std::to_string(d.k) +
                     " does not match model input length " +
                     std::to_string(m.input_length()));
  const int n = d.size();
  const int c = m.num_classes();
  if (soft_targets &&
      soft_targets->size() != static_cast<std::size_t>(n) * static_cast<std::size_t>(c))
    throw ShapeError("soft target matrix must be [n, C]");

  Rng shuffle_rng(derive_seed(tc.seed, 0x7368756666ULL));
  std::vector<int> order(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;

  auto& params = m.parameters();
  std::vector<std::vector<double>> velocity(params.size());
  for (std::size_t p = 0; p < params.size(); ++p)
    velocity[p].assign(params[p].v.size(), 0.0);

  const bool per_epoch_sd = m.front() && m.front()->shuffle && m.front()->per_epoch;

  std::vector<double> trace;
  trace.reserve(static_cast<std::size_t>(tc.epochs));
  std::vector<double> xbuf;
  std::vector<int> ybuf;
  std::vector<double> tbuf;

  for (int epoch = 0; epoch < tc.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng.engine());
    if (per_epoch_sd) m.resample_epoch_method();

    double loss_sum = 0.0;
    int batch_index = 0;
    for (int begin = 0; begin < n; begin += tc.batch_size, ++batch_index) {
      const int bs = std::min(tc.batch_size, n - begin);
      xbuf.resize(static_cast<std::size_t>(bs) * d.k);
      ybuf.resize(static_cast<std::size_t>(bs));
      tbuf.resize(static_cast<std::size_t>(bs) * c);
      for (int i = 0; i < bs; ++i) {
        const int src = order[static_cast<std::size_t>(begin + i)];
        auto row = d.row(src);
        std::copy(row.begin(), row.end(), xbuf.begin() + static_cast<std::size_t>(i) * d.k);
        ybuf[static_cast<std::size_t>(i)] = d.labels[static_cast<std::size_t>(src)];
        if (soft_targets)
          std::copy_n(soft_targets->data() + static_cast<std::size_t>(src) * c, c,
                      tbuf.begin() + static_cast<std::size_t>(i) * c);
      }

      Graph g;
      Tensor x = g.constant({bs, d.k}, xbuf);
      Classifier::Binding bind = m.bind(g, x, true, true);
      Tensor loss = soft_targets ? cross_entropy(bind.probs, tbuf)
                                 : cross_entropy(bind.probs, std::span<const int>(ybuf));
      const double lv = loss.scalar();
      if (!std::isfinite(lv))
        throw Error("training diverged: non-finite loss at epoch " + std::to_string(epoch) +
                    ", batch " + std::to_string(batch_index));
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
  if (per_epoch_sd) m.clear_epoch_method();
  return trace;
}

}  // namespace

std::vector<double> train(Classifier& m, const Dataset& d, const TrainConfig& tc) {
  return train_impl(m, d, tc, nullptr);
}

std::vector<double> train_soft(Classifier& m, const Dataset& d,
                               const std::vector<double>& soft_targets,
                               const TrainConfig& tc) {
  return train_impl(m, d, tc, &soft_targets);
}

// ---- prediction ----

int argmax_lowest(std::span<const double> row) {
  int best = 0;
  for (int j = 1; j < static_cast<int>(row.size()); ++j)
    if (row[static_cast<std::size_t>(j)] > row[static_cast<std::size_t>(best)]) best = j;
  return best;
}

std::vector<double> predict_probs(const Model& m, std::span<const double> x, int n,
                                  int repeats) {
  if (repeats < 1) throw ConfigError("repeats must be >= 1");
  const int c = m.num_classes();
  std::vector<double> acc(static_cast<std::size_t>(n) * c, 0.0);
  for (int r = 0; r < repeats; ++r) {
    Graph g;
    Tensor xt = g.constant({n, m.input_length()}, std::vector<double>(x.begin(), x.end()));
    Tensor probs = m.bind_probs(g, xt);
    auto pv = probs.values();
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += pv[i];
  }
  for (auto& v : acc) v /= repeats;
  return acc;
}

std::vector<int> predict(const Model& m, std::span<const double> x, int n, int repeats) {
  const int c = m.num_classes();
  auto probs = predict_probs(m, x, n, repeats);
  std::vector<int> out(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    out[static_cast<std::size_t>(i)] =
        argmax_lowest({probs.data() + static_cast<std::size_t>(i) * c,
                       static_cast<std::size_t>(c)});
  return out;
}

// ---- checkpoints ----

json augment_to_json(const AugmentConfig& a) {
  return json{{"jitter", {{"p_j", a.jitter.p}, {"noise_level", a.jitter.noise_level}}},
              {"random_zero", {{"p_r", a.random_zero.p}}},
              {"segment_zero",
               {{"total_zero_length", a.segment_zero.total_zero_length},
                {"max_segment_length", a.segment_zero.max_segment_length}}},
              {"gaussian_noise", {{"mu", a.gaussian_noise.mean}, {"sigma_g", a.gaussian_noise.sigma}}},
              {"smooth", {{"kernel_size", a.smooth.kernel_size}, {"sigma_s", a.smooth.sigma}}}};
}

AugmentConfig augment_from_json(const json& j) {
  AugmentConfig a;
  if (j.contains("jitter")) {
    a.jitter.p = j["jitter"].value("p_j", a.jitter.p);
    a.jitter.noise_level = j["jitter"].value("noise_level", a.jitter.noise_level);
  }
  if (j.contains("random_zero")) a.random_zero.p = j["random_zero"].value("p_r", a.random_zero.p);
  if (j.contains("segment_zero")) {
    a.segment_zero.total_zero_length =
        j["segment_zero"].value("total_zero_length", a.segment_zero.total_zero_length);
    a.segment_zero.max_segment_length =
        j["segment_zero"].value("max_segment_length", a.segment_zero.max_segment_length);
  }
  if (j.contains("gaussian_noise")) {
    a.gaussian_noise.mean = j["gaussian_noise"].value("mu", a.gaussian_noise.mean);
    a.gaussian_noise.sigma = j["gaussian_noise"].value("sigma_g", a.gaussian_noise.sigma);
  }
  if (j.contains("smooth")) {
    a.smooth.kernel_size = j["smooth"].value("kernel_size", a.smooth.kernel_size);
    a.smooth.sigma = j["smooth"].value("sigma_s", a.smooth.sigma);
  }
  a.validate();
  return a;
}

std::string Classifier::to_json_string() const {
  json j;
  j["format"] = "tsrobust-model-v1";
  j["config"] = {{"channels", cfg_.channels},
                 {"kernel_widths", cfg_.kernel_widths},
                 {"num_classes", cfg_.num_classes},
                 {"temperature", cfg_.temperature}};
  j["input_length"] = input_len_;
  j["seed"] = seed_;
  if (front_) {
    j["front"] = {{"shuffle", front_->shuffle},
                  {"method", augment_method_name(front_->method)},
                  {"per_epoch", front_->per_epoch},
                  {"augment", augment_to_json(front_->augment)}};
  } else {
    j["front"] = nullptr;
  }
  json params = json::array();
  for (const auto& p : params_) params.push_back({{"shape", p.shape}, {"values", p.v}});
  j["params"] = std::move(params);
  return j.dump();
}

Classifier Classifier::from_json_string(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint parse error: ") + e.what());
  }
  if (j.value("format", "") != "tsrobust-model-v1")
    throw FormatError("not a tsrobust model checkpoint");
  ClassifierConfig cfg;
  cfg.channels = j["config"]["channels"].get<std::vector<int>>();
  cfg.kernel_widths = j["config"]["kernel_widths"].get<std::vector<int>>();
  cfg.num_classes = j["config"]["num_classes"].get<int>();
  cfg.temperature = j["config"]["temperature"].get<double>();
  Classifier m(cfg, j["input_length"].get<int>(), j["seed"].get<std::uint64_t>());
  if (!j["front"].is_null()) {
    FrontLayer fl;
    fl.shuffle = j["front"]["shuffle"].get<bool>();
    fl.method = augment_method_from_name(j["front"]["method"].get<std::string>());
    fl.per_epoch = j["front"]["per_epoch"].get<bool>();
    fl.augment = augment_from_json(j["front"]["augment"]);
    m.set_front(std::move(fl));
  }
  const json& params = j["params"];
  if (params.size() != m.params_.size()) throw FormatError("checkpoint parameter count mismatch");
  for (std::size_t i = 0; i < m.params_.size(); ++i) {
    Shape shape = params[i]["shape"].get<Shape>();
    if (shape != m.params_[i].shape) throw FormatError("checkpoint parameter shape mismatch");
    m.params_[i].v = params[i]["values"].get<std::vector<double>>();
    if (m.params_[i].v.size() != static_cast<std::size_t>(numel(shape)))
      throw FormatError("checkpoint parameter size mismatch");
  }
  return m;
}

void Classifier::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << to_json_string();
  if (!out) throw IoError("failed writing " + path);
}

Classifier Classifier::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return from_json_string(ss.str());
}

}  // namespace tsrobust
