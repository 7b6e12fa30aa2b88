#include "tsrobust/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace tsrobust {

std::string attack_method_name(AttackMethod m) {
  switch (m) {
    case AttackMethod::FGSM: return "fgsm";
    case AttackMethod::BIM: return "bim";
    case AttackMethod::PGD: return "pgd";
    case AttackMethod::GM: return "gm";
    case AttackMethod::SWAP: return "swap";
    case AttackMethod::CW: return "cw";
  }
  throw ConfigError("unknown attack method");
}

AttackMethod attack_method_from_name(const std::string& name) {
  if (name == "fgsm") return AttackMethod::FGSM;
  if (name == "bim") return AttackMethod::BIM;
  if (name == "pgd") return AttackMethod::PGD;
  if (name == "gm") return AttackMethod::GM;
  if (name == "swap") return AttackMethod::SWAP;
  if (name == "cw") return AttackMethod::CW;
  throw ConfigError("unknown attack method '" + name + "'");
}

AttackSpec AttackSpec::defaults(AttackMethod m) {
  AttackSpec s;
  s.method = m;
  s.step_size = m == AttackMethod::FGSM ? 0.1 : 0.0005;
  return s;
}

void AttackSpec::validate() const {
  if (!(epsilon > 0.0)) throw ConfigError("attack epsilon must be positive");
  if (init_span < 0.0 || init_span > epsilon)
    throw ConfigError("attack init_span must be in [0, epsilon]");
  if (iterations < 0) throw ConfigError("attack iterations must be >= 0");
  if (!(step_size > 0.0)) throw ConfigError("attack step_size must be positive");
  if (cw_c < 0.0) throw ConfigError("attack cw_c must be >= 0");
  if (gm_lambda < 0.0) throw ConfigError("attack gm_lambda must be >= 0");
}

void clip_delta_inplace(std::span<double> delta, double epsilon) {
  if (!(epsilon > 0.0)) throw ConfigError("clip_delta: epsilon must be positive");
  for (auto& v : delta) v = std::clamp(v, -epsilon, epsilon);
}

std::vector<double> clip_delta(std::span<const double> delta, double epsilon) {
  std::vector<double> out(delta.begin(), delta.end());
  clip_delta_inplace(out, epsilon);
  return out;
}

std::vector<double> random_init(std::size_t count, double init_span, Rng& rng) {
  std::vector<double> out(count, 0.0);
  if (init_span > 0.0)
    for (auto& v : out) v = rng.uniform(-init_span, init_span);
  return out;
}

namespace {

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

void check_finite_grad(std::span<const double> g, int k, const char* attack) {
  for (std::size_t i = 0; i < g.size(); ++i)
    if (!std::isfinite(g[i]))
      throw AttackError(std::string(attack) + ": non-finite gradient for sample " +
                        std::to_string(i / static_cast<std::size_t>(k)));
}

// Gradient of mean cross-entropy w.r.t. delta over the listed samples.
std::vector<double> ce_grad(const Model& m, std::span<const double> x,
                            std::span<const double> delta, std::span<const int> labels,
                            int n, int k, const char* attack) {
  std::vector<double> xp(static_cast<std::size_t>(n) * k);
  for (std::size_t i = 0; i < xp.size(); ++i) xp[i] = x[i] + delta[i];
  Graph g;
  Tensor xt = g.leaf({n, k}, std::move(xp), true);
  Tensor loss = cross_entropy(m.bind_probs(g, xt), labels);
  if (!std::isfinite(loss.scalar()))
    throw AttackError(std::string(attack) + ": non-finite loss");
  g.backward(loss);
  std::vector<double> grad(xt.grad().begin(), xt.grad().end());
  check_finite_grad(grad, k, attack);
  return grad;
}

AdversarialBatch finalize(const Model& m, std::span<const double> x, int n, int k,
                          std::span<const int> labels, std::vector<double> delta,
                          std::vector<int> iterations_used, double epsilon) {
  clip_delta_inplace(delta, epsilon);
  AdversarialBatch out;
  out.n = n;
  out.k = k;
  out.original.assign(x.begin(), x.end());
  out.delta = std::move(delta);
  out.perturbed.resize(out.original.size());
  for (std::size_t i = 0; i < out.perturbed.size(); ++i)
    out.perturbed[i] = out.original[i] + out.delta[i];
  out.iterations_used = std::move(iterations_used);
  std::vector<int> preds = predict(m, out.perturbed, n, 1);
  out.success.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    out.success[static_cast<std::size_t>(i)] = preds[static_cast<std::size_t>(i)] != labels[i];
  return out;
}

void check_inputs(const Model& m, std::span<const double> x, int n,
                  std::span<const int> labels) {
  if (static_cast<int>(labels.size()) != n)
    throw ShapeError("attack: labels size does not match n");
  if (x.size() != static_cast<std::size_t>(n) * m.input_length())
    throw ShapeError("attack: input size does not match n * k");
  for (int y : labels)
    if (y < 0 || y >= m.num_classes()) throw DataError("attack: label out of range");
}

}  // namespace

AdversarialBatch fgsm(const Model& m, std::span<const double> x, int n,
                      std::span<const int> labels, const AttackSpec& spec) {
  spec.validate();
  check_inputs(m, x, n, labels);
  const int k = m.input_length();
  Rng rng(derive_seed(spec.seed, 0x6667736dULL));
  std::vector<double> delta = random_init(static_cast<std::size_t>(n) * k, spec.init_span, rng);
  auto grad = ce_grad(m, x, delta, labels, n, k, "fgsm");
  for (std::size_t i = 0; i < delta.size(); ++i) delta[i] += spec.step_size * sign(grad[i]);
  return finalize(m, x, n, k, labels, std::move(delta),
                  std::vector<int>(static_cast<std::size_t>(n), 1), spec.epsilon);
}

namespace {

AdversarialBatch iterated_sign_ascent(const Model& m, std::span<const double> x, int n,
                                      std::span<const int> labels, const AttackSpec& spec,
                                      bool random_start, const char* name,
                                      std::uint64_t salt) {
  spec.validate();
  check_inputs(m, x, n, labels);
  const int k = m.input_length();
  Rng rng(derive_seed(spec.seed, salt));
  std::vector<double> delta =
      random_start ? random_init(static_cast<std::size_t>(n) * k, spec.init_span, rng)
                   : std::vector<double>(static_cast<std::size_t>(n) * k, 0.0);
  for (int it = 0; it < spec.iterations; ++it) {
    auto grad = ce_grad(m, x, delta, labels, n, k, name);
    for (std::size_t i = 0; i < delta.size(); ++i) delta[i] += spec.step_size * sign(grad[i]);
    clip_delta_inplace(delta, spec.epsilon);
  }
  return finalize(m, x, n, k, labels, std::move(delta),
                  std::vector<int>(static_cast<std::size_t>(n), spec.iterations),
                  spec.epsilon);
}

}  // namespace

AdversarialBatch bim(const Model& m, std::span<const double> x, int n,
                     std::span<const int> labels, const AttackSpec& spec) {
  return iterated_sign_ascent(m, x, n, labels, spec, /*random_start=*/false, "bim",
                              0x62696dULL);
}

AdversarialBatch pgd(const Model& m, std::span<const double> x, int n,
                     std::span<const int> labels, const AttackSpec& spec) {
  return iterated_sign_ascent(m, x, n, labels, spec, /*random_start=*/true, "pgd",
                              0x706764ULL);
}

AdversarialBatch gm(const Model& m, std::span<const double> x, int n,
                    std::span<const int> labels, const AttackSpec& spec) {
  spec.validate();
  check_inputs(m, x, n, labels);
  const int k = m.input_length();
  Rng rng(derive_seed(spec.seed, 0x676dULL));
  std::vector<double> delta = random_init(static_cast<std::size_t>(n) * k, spec.init_span, rng);

  for (int it = 0; it < spec.iterations; ++it) {
    Graph g;
    Tensor dt = g.leaf({n, k}, delta, true);
    Tensor xc = g.constant({n, k}, std::vector<double>(x.begin(), x.end()));
    Tensor xp = add(xc, dt);
    Tensor obj = sub(cross_entropy(m.bind_probs(g, xp), labels),
                     scale(roughness(dt), spec.gm_lambda));
    if (!std::isfinite(obj.scalar())) throw AttackError("gm: non-finite objective");
    g.backward(obj);
    std::vector<double> grad(dt.grad().begin(), dt.grad().end());
    check_finite_grad(grad, k, "gm");
    // full-gradient ascent normalized per sample by the max-norm
    for (int i = 0; i < n; ++i) {
      double* drow = delta.data() + static_cast<std::size_t>(i) * k;
      const double* grow = grad.data() + static_cast<std::size_t>(i) * k;
      double ginf = 0.0;
      for (int t = 0; t < k; ++t) ginf = std::max(ginf, std::abs(grow[t]));
      if (ginf == 0.0) continue;
      const double s = spec.step_size / ginf;
      for (int t = 0; t < k; ++t) drow[t] += s * grow[t];
    }
    clip_delta_inplace(delta, spec.epsilon);
  }
  return finalize(m, x, n, k, labels, std::move(delta),
                  std::vector<int>(static_cast<std::size_t>(n), spec.iterations),
                  spec.epsilon);
}

AdversarialBatch swap_attack(const Model& m, std::span<const double> x, int n,
                             std::span<const int> labels, const AttackSpec& spec) {
  spec.validate();
  check_inputs(m, x, n, labels);
  if (m.num_classes() < 2) throw ConfigError("swap: needs at least 2 classes");
  const int k = m.input_length();
  Rng rng(derive_seed(spec.seed, 0x73776170ULL));
  std::vector<double> delta = random_init(static_cast<std::size_t>(n) * k, spec.init_span, rng);
  std::vector<int> iterations_used(static_cast<std::size_t>(n), spec.iterations);

  std::vector<int> active(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) active[static_cast<std::size_t>(i)] = i;

  for (int it = 0; it <= spec.iterations && !active.empty(); ++it) {
    const int na = static_cast<int>(active.size());
    std::vector<double> xp(static_cast<std::size_t>(na) * k);
    std::vector<int> ya(static_cast<std::size_t>(na));
    for (int i = 0; i < na; ++i) {
      const int src = active[static_cast<std::size_t>(i)];
      const double* xr = x.data() + static_cast<std::size_t>(src) * k;
      const double* dr = delta.data() + static_cast<std::size_t>(src) * k;
      double* out = xp.data() + static_cast<std::size_t>(i) * k;
      for (int t = 0; t < k; ++t) out[t] = xr[t] + dr[t];
      ya[static_cast<std::size_t>(i)] = labels[src];
    }

    Graph g;
    Tensor xt = g.leaf({na, k}, std::move(xp), true);
    Tensor logits = m.bind_logits(g, xt);
    Tensor zy = pick_class(logits, ya);
    Tensor zo = max_excluding(logits, ya);
    Tensor margins = sub(zo, zy);  // runner-up minus true-class logit

    // early stop: the leading wrong logit clears the gap
    std::vector<int> still;
    still.reserve(active.size());
    std::vector<int> graph_pos;
    graph_pos.reserve(active.size());
    for (int i = 0; i < na; ++i) {
      const int src = active[static_cast<std::size_t>(i)];
      if (margins.values()[static_cast<std::size_t>(i)] >= spec.swap_gap) {
        iterations_used[static_cast<std::size_t>(src)] = it;
      } else {
        still.push_back(src);
        graph_pos.push_back(i);
      }
    }
    if (still.empty() || it == spec.iterations) {
      active = std::move(still);
      break;
    }

    Tensor obj = sum(margins);
    g.backward(obj);
    std::vector<double> grad(xt.grad().begin(), xt.grad().end());
    check_finite_grad(grad, k, "swap");
    for (std::size_t i = 0; i < still.size(); ++i) {
      const int src = still[i];
      const double* grow = grad.data() + static_cast<std::size_t>(graph_pos[i]) * k;
      double* drow = delta.data() + static_cast<std::size_t>(src) * k;
      for (int t = 0; t < k; ++t)
        drow[t] = std::clamp(drow[t] + spec.step_size * sign(grow[t]), -spec.epsilon,
                             spec.epsilon);
    }
    active = std::move(still);
  }
  return finalize(m, x, n, k, labels, std::move(delta), std::move(iterations_used),
                  spec.epsilon);
}

AdversarialBatch cw(const Model& m, std::span<const double> x, int n,
                    std::span<const int> labels, const AttackSpec& spec) {
  spec.validate();
  check_inputs(m, x, n, labels);
  const int k = m.input_length();
  const int c = m.num_classes();
  Rng rng(derive_seed(spec.seed, 0x6377ULL));
  std::vector<double> delta = random_init(static_cast<std::size_t>(n) * k, spec.init_span, rng);
  const double lr = spec.step_size * 10.0;

  std::vector<double> best_delta = delta;
  std::vector<double> best_obj(static_cast<std::size_t>(n),
                               std::numeric_limits<double>::infinity());
  std::vector<std::uint8_t> best_found(static_cast<std::size_t>(n), 0);

  for (int it = 0; it < spec.iterations; ++it) {
    Graph g;
    Tensor dt = g.leaf({n, k}, delta, true);
    Tensor xc = g.constant({n, k}, std::vector<double>(x.begin(), x.end()));
    Tensor logits = m.bind_logits(g, add(xc, dt));
    Tensor zy = pick_class(logits, labels);
    Tensor zo = max_excluding(logits, labels);
    Tensor obj = add(sum_squares(dt), scale(sum(relu(sub(zy, zo))), spec.cw_c));
    if (!std::isfinite(obj.scalar())) throw AttackError("cw: non-finite objective");

    // per-sample bookkeeping: keep the cheapest successful iterate
    for (int i = 0; i < n; ++i) {
      const double* zrow = logits.values().data() + static_cast<std::size_t>(i) * c;
      const int pred = argmax_lowest({zrow, static_cast<std::size_t>(c)});
      if (pred == labels[i]) continue;
      const double* drow = delta.data() + static_cast<std::size_t>(i) * k;
      double sq = 0.0;
      for (int t = 0; t < k; ++t) sq += drow[t] * drow[t];
      const double margin = zy.values()[static_cast<std::size_t>(i)] -
                            zo.values()[static_cast<std::size_t>(i)];
      const double obj_row = sq + spec.cw_c * std::max(margin, 0.0);
      if (obj_row < best_obj[static_cast<std::size_t>(i)]) {
        best_obj[static_cast<std::size_t>(i)] = obj_row;
        best_found[static_cast<std::size_t>(i)] = 1;
        std::copy_n(drow, k, best_delta.data() + static_cast<std::size_t>(i) * k);
      }
    }

    g.backward(obj);
    std::vector<double> grad(dt.grad().begin(), dt.grad().end());
    check_finite_grad(grad, k, "cw");
    for (std::size_t i = 0; i < delta.size(); ++i) delta[i] -= lr * grad[i];
  }

  for (int i = 0; i < n; ++i)
    if (best_found[static_cast<std::size_t>(i)])
      std::copy_n(best_delta.data() + static_cast<std::size_t>(i) * k, k,
                  delta.data() + static_cast<std::size_t>(i) * k);
  return finalize(m, x, n, k, labels, std::move(delta),
                  std::vector<int>(static_cast<std::size_t>(n), spec.iterations),
                  spec.epsilon);
}

AdversarialBatch run_attack(const Model& m, std::span<const double> x, int n,
                            std::span<const int> labels, const AttackSpec& spec) {
  switch (spec.method) {
    case AttackMethod::FGSM: return fgsm(m, x, n, labels, spec);
    case AttackMethod::BIM: return bim(m, x, n, labels, spec);
    case AttackMethod::PGD: return pgd(m, x, n, labels, spec);
    case AttackMethod::GM: return gm(m, x, n, labels, spec);
    case AttackMethod::SWAP: return swap_attack(m, x, n, labels, spec);
    case AttackMethod::CW: return cw(m, x, n, labels, spec);
  }
  throw ConfigError("unknown attack method");
}

std::vector<double> pgd_delta(const Model& m, std::span<const double> x, int n,
                              std::span<const int> labels, double epsilon,
                              double init_span, double step_size, int iterations,
                              Rng& rng) {
  const int k = m.input_length();
  std::vector<double> delta = random_init(static_cast<std::size_t>(n) * k, init_span, rng);
  clip_delta_inplace(delta, epsilon);
  for (int it = 0; it < iterations; ++it) {
    auto grad = ce_grad(m, x, delta, labels, n, k, "pgd");
    for (std::size_t i = 0; i < delta.size(); ++i) delta[i] += step_size * sign(grad[i]);
    clip_delta_inplace(delta, epsilon);
  }
  return delta;
}

}  // namespace tsrobust
