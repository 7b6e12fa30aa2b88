#include "tsrobust/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <sstream>
#include <string>
#include <utility>

namespace tsrobust {

std::int64_t numel(const Shape& shape) {
  std::int64_t n = 1;
  for (int d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

// ---- Tensor accessors ----

static const Graph::Node& deref(const Tensor& t) {
  if (t.graph() == nullptr) throw GraphError("tensor is not bound to a graph");
  return t.graph()->node(t.id());
}

const Shape& Tensor::shape() const { return deref(*this).shape; }

std::span<const double> Tensor::values() const { return deref(*this).value; }

std::span<const double> Tensor::grad() const {
  const auto& n = deref(*this);
  if (!n.tracked) throw GraphError("tensor is not tracked; no gradient");
  return n.grad;
}

bool Tensor::tracked() const { return deref(*this).tracked; }

double Tensor::scalar() const {
  const auto& n = deref(*this);
  if (n.value.size() != 1)
    throw ShapeError("scalar() on tensor of shape " + shape_str(n.shape));
  return n.value[0];
}

// ---- Graph ----

Tensor Graph::emit(Shape shape, std::vector<double> value, bool tracked,
                   std::function<void(Graph&, int)> backward_fn) {
  if (static_cast<std::int64_t>(value.size()) != numel(shape))
    throw ShapeError("node value size does not match shape " + shape_str(shape));
  Node n;
  n.shape = std::move(shape);
  n.value = std::move(value);
  n.tracked = tracked;
  if (tracked) {
    n.grad.assign(n.value.size(), 0.0);
    n.backward_fn = std::move(backward_fn);
  }
  nodes_.push_back(std::move(n));
  return Tensor(this, static_cast<int>(nodes_.size()) - 1);
}

Tensor Graph::leaf(Shape shape, std::vector<double> values, bool track) {
  Tensor t = emit(std::move(shape), std::move(values), track, nullptr);
  nodes_.back().is_leaf = true;
  if (track) leaves_.push_back(t.id());
  return t;
}

Tensor Graph::constant(Shape shape, std::vector<double> values) {
  return leaf(std::move(shape), std::move(values), false);
}

Tensor Graph::scalar_constant(double value) { return constant({1}, {value}); }

void Graph::check_owns(const Tensor& t, const char* op) const {
  if (t.graph() != this)
    throw GraphError(std::string(op) + ": tensor belongs to a different graph");
}

void Graph::backward(const Tensor& loss) {
  check_owns(loss, "backward");
  if (consumed_)
    throw GraphError("backward already ran on this recording; re-record the forward pass");
  const Node& l = node(loss.id());
  if (l.value.size() != 1)
    throw ShapeError("backward expects a scalar loss, got shape " + shape_str(l.shape));
  consumed_ = true;
  if (!l.tracked) return;  // nothing tracked feeds the loss; leaf grads stay zero
  node(loss.id()).grad[0] = 1.0;
  for (int id = loss.id(); id >= 0; --id) {
    Node& n = node(id);
    if (n.tracked && n.backward_fn) n.backward_fn(*this, id);
  }
}

void backward(const Tensor& loss) {
  if (loss.graph() == nullptr) throw GraphError("backward: tensor is not bound to a graph");
  loss.graph()->backward(loss);
}

// ---- op helpers ----

namespace {

Graph& same_graph(const Tensor& a, const Tensor& b, const char* op) {
  if (a.graph() == nullptr || b.graph() == nullptr)
    throw GraphError(std::string(op) + ": unbound tensor");
  a.graph()->check_owns(b, op);
  return *a.graph();
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                     " vs " + shape_str(b.shape()));
}

void accumulate(Graph::Node& parent, std::span<const double> g) {
  if (!parent.tracked) return;
  for (std::size_t i = 0; i < g.size(); ++i) parent.grad[i] += g[i];
}

}  // namespace

// ---- elementwise ----

Tensor add(const Tensor& a, const Tensor& b) {
  Graph& g = same_graph(a, b, "add");
  require_same_shape(a, b, "add");
  auto av = a.values();
  auto bv = b.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  const int aid = a.id(), bid = b.id();
  return g.emit(a.shape(), std::move(out), a.tracked() || b.tracked(),
                [aid, bid](Graph& gr, int self) {
                  auto gout = gr.node(self).grad;
                  accumulate(gr.node(aid), gout);
                  accumulate(gr.node(bid), gout);
                });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  Graph& g = same_graph(a, b, "sub");
  require_same_shape(a, b, "sub");
  auto av = a.values();
  auto bv = b.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  const int aid = a.id(), bid = b.id();
  return g.emit(a.shape(), std::move(out), a.tracked() || b.tracked(),
                [aid, bid](Graph& gr, int self) {
                  const auto& gout = gr.node(self).grad;
                  accumulate(gr.node(aid), gout);
                  Graph::Node& pb = gr.node(bid);
                  if (pb.tracked)
                    for (std::size_t i = 0; i < gout.size(); ++i) pb.grad[i] -= gout[i];
                });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  Graph& g = same_graph(a, b, "mul");
  require_same_shape(a, b, "mul");
  auto av = a.values();
  auto bv = b.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  const int aid = a.id(), bid = b.id();
  return g.emit(a.shape(), std::move(out), a.tracked() || b.tracked(),
                [aid, bid](Graph& gr, int self) {
                  const auto& gout = gr.node(self).grad;
                  Graph::Node& pa = gr.node(aid);
                  Graph::Node& pb = gr.node(bid);
                  if (pa.tracked)
                    for (std::size_t i = 0; i < gout.size(); ++i)
                      pa.grad[i] += gout[i] * pb.value[i];
                  if (pb.tracked)
                    for (std::size_t i = 0; i < gout.size(); ++i)
                      pb.grad[i] += gout[i] * pa.value[i];
                });
}

Tensor scale(const Tensor& a, double c) {
  if (a.graph() == nullptr) throw GraphError("scale: unbound tensor");
  Graph& g = *a.graph();
  auto av = a.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * c;
  const int aid = a.id();
  return g.emit(a.shape(), std::move(out), a.tracked(),
                [aid, c](Graph& gr, int self) {
                  const auto& gout = gr.node(self).grad;
                  Graph::Node& pa = gr.node(aid);
                  if (pa.tracked)
                    for (std::size_t i = 0; i < gout.size(); ++i) pa.grad[i] += c * gout[i];
                });
}

Tensor reshape(const Tensor& a, Shape target) {
  if (a.graph() == nullptr) throw GraphError("reshape: unbound tensor");
  Graph& g = *a.graph();
  if (numel(target) != numel(a.shape()))
    throw ShapeError("reshape: cannot reshape " + shape_str(a.shape()) + " to " +
                     shape_str(target));
  std::vector<double> out(a.values().begin(), a.values().end());
  const int aid = a.id();
  return g.emit(std::move(target), std::move(out), a.tracked(),
                [aid](Graph& gr, int self) {
                  accumulate(gr.node(aid), gr.node(self).grad);
                });
}

// ---- conv1d ----

namespace {

struct ConvDims {
  int batch, ch_in, k, ch_out, w, left, kp;
};

ConvDims conv_dims(const Tensor& input, const Tensor& kernels) {
  if (input.shape().size() != 3)
    throw ShapeError("conv1d: input must be [batch, ch_in, k], got " +
                     shape_str(input.shape()));
  if (kernels.shape().size() != 3)
    throw ShapeError("conv1d: kernels must be [ch_out, ch_in, w], got " +
                     shape_str(kernels.shape()));
  ConvDims d;
  d.batch = input.shape()[0];
  d.ch_in = input.shape()[1];
  d.k = input.shape()[2];
  d.ch_out = kernels.shape()[0];
  d.w = kernels.shape()[2];
  if (kernels.shape()[1] != d.ch_in)
    throw ShapeError("conv1d: kernel ch_in " + std::to_string(kernels.shape()[1]) +
                     " does not match input ch_in " + std::to_string(d.ch_in));
  if (d.w > d.k)
    throw ShapeError("conv1d: unsupported kernel width " + std::to_string(d.w) +
                     " exceeds series length " + std::to_string(d.k));
  d.left = (d.w - 1) / 2;
  d.kp = d.k + d.w - 1;
  return d;
}

// Materializes [batch, ch_in, k + w - 1] with the requested edge handling.
std::shared_ptr<std::vector<double>> pad_input(std::span<const double> in,
                                               const ConvDims& d, Padding padding) {
  auto padded = std::make_shared<std::vector<double>>(
      static_cast<std::size_t>(d.batch) * d.ch_in * d.kp, 0.0);
  const int right = d.w - 1 - d.left;
  for (int b = 0; b < d.batch; ++b) {
    for (int c = 0; c < d.ch_in; ++c) {
      const double* src = in.data() + (static_cast<std::size_t>(b) * d.ch_in + c) * d.k;
      double* dst = padded->data() + (static_cast<std::size_t>(b) * d.ch_in + c) * d.kp;
      std::copy(src, src + d.k, dst + d.left);
      if (padding == Padding::Replicate) {
        for (int i = 0; i < d.left; ++i) dst[i] = src[0];
        for (int i = 0; i < right; ++i) dst[d.left + d.k + i] = src[d.k - 1];
      }
    }
  }
  return padded;
}

}  // namespace

Tensor conv1d(const Tensor& input, const Tensor& kernels, Padding padding) {
  Graph& g = same_graph(input, kernels, "conv1d");
  const ConvDims d = conv_dims(input, kernels);
  auto padded = pad_input(input.values(), d, padding);
  const double* ker = kernels.values().data();

  std::vector<double> out(static_cast<std::size_t>(d.batch) * d.ch_out * d.k, 0.0);
  for (int b = 0; b < d.batch; ++b) {
    for (int co = 0; co < d.ch_out; ++co) {
      double* o = out.data() + (static_cast<std::size_t>(b) * d.ch_out + co) * d.k;
      for (int ci = 0; ci < d.ch_in; ++ci) {
        const double* p = padded->data() + (static_cast<std::size_t>(b) * d.ch_in + ci) * d.kp;
        const double* kr = ker + (static_cast<std::size_t>(co) * d.ch_in + ci) * d.w;
        for (int dw = 0; dw < d.w; ++dw) {
          const double kv = kr[dw];
          const double* pi = p + dw;
          for (int t = 0; t < d.k; ++t) o[t] += kv * pi[t];
        }
      }
    }
  }

  const int in_id = input.id(), ker_id = kernels.id();
  return g.emit({d.batch, d.ch_out, d.k}, std::move(out),
                input.tracked() || kernels.tracked(),
                [in_id, ker_id, d, padding, padded](Graph& gr, int self) {
    const auto& gout = gr.node(self).grad;
    Graph::Node& in_node = gr.node(in_id);
    Graph::Node& ker_node = gr.node(ker_id);
    const double* ker = ker_node.value.data();

    if (ker_node.tracked) {
      double* dker = ker_node.grad.data();
      for (int b = 0; b < d.batch; ++b) {
        for (int co = 0; co < d.ch_out; ++co) {
          const double* go = gout.data() + (static_cast<std::size_t>(b) * d.ch_out + co) * d.k;
          for (int ci = 0; ci < d.ch_in; ++ci) {
            const double* p =
                padded->data() + (static_cast<std::size_t>(b) * d.ch_in + ci) * d.kp;
            double* dk = dker + (static_cast<std::size_t>(co) * d.ch_in + ci) * d.w;
            for (int dw = 0; dw < d.w; ++dw) {
              const double* pi = p + dw;
              double acc = 0.0;
              for (int t = 0; t < d.k; ++t) acc += go[t] * pi[t];
              dk[dw] += acc;
            }
          }
        }
      }
    }

    if (in_node.tracked) {
      std::vector<double> dpad(static_cast<std::size_t>(d.ch_in) * d.kp);
      const int right = d.w - 1 - d.left;
      for (int b = 0; b < d.batch; ++b) {
        std::fill(dpad.begin(), dpad.end(), 0.0);
        for (int co = 0; co < d.ch_out; ++co) {
          const double* go = gout.data() + (static_cast<std::size_t>(b) * d.ch_out + co) * d.k;
          for (int ci = 0; ci < d.ch_in; ++ci) {
            const double* kr = ker + (static_cast<std::size_t>(co) * d.ch_in + ci) * d.w;
            double* dp = dpad.data() + static_cast<std::size_t>(ci) * d.kp;
            for (int dw = 0; dw < d.w; ++dw) {
              const double kv = kr[dw];
              double* dpi = dp + dw;
              for (int t = 0; t < d.k; ++t) dpi[t] += kv * go[t];
            }
          }
        }
        for (int ci = 0; ci < d.ch_in; ++ci) {
          const double* dp = dpad.data() + static_cast<std::size_t>(ci) * d.kp;
          double* di = in_node.grad.data() + (static_cast<std::size_t>(b) * d.ch_in + ci) * d.k;
          for (int t = 0; t < d.k; ++t) di[t] += dp[d.left + t];
          if (padding == Padding::Replicate) {
            for (int i = 0; i < d.left; ++i) di[0] += dp[i];
            for (int i = 0; i < right; ++i) di[d.k - 1] += dp[d.left + d.k + i];
          }
        }
      }
    }
  });
}

Tensor channel_bias(const Tensor& x, const Tensor& bias) {
  Graph& g = same_graph(x, bias, "channel_bias");
  if (x.shape().size() != 3 || bias.shape().size() != 1 || bias.shape()[0] != x.shape()[1])
    throw ShapeError("channel_bias: expected x [b,c,k] and bias [c], got " +
                     shape_str(x.shape()) + " and " + shape_str(bias.shape()));
  const int batch = x.shape()[0], ch = x.shape()[1], k = x.shape()[2];
  auto xv = x.values();
  auto bv = bias.values();
  std::vector<double> out(xv.size());
  for (int b = 0; b < batch; ++b)
    for (int c = 0; c < ch; ++c) {
      const std::size_t off = (static_cast<std::size_t>(b) * ch + c) * k;
      for (int t = 0; t < k; ++t) out[off + t] = xv[off + t] + bv[c];
    }
  const int xid = x.id(), bid = bias.id();
  return g.emit(x.shape(), std::move(out), x.tracked() || bias.tracked(),
                [xid, bid, batch, ch, k](Graph& gr, int self) {
                  const auto& gout = gr.node(self).grad;
                  accumulate(gr.node(xid), gout);
                  Graph::Node& pb = gr.node(bid);
                  if (pb.tracked) {
                    for (int b = 0; b < batch; ++b)
                      for (int c = 0; c < ch; ++c) {
                        const std::size_t off = (static_cast<std::size_t>(b) * ch + c) * k;
                        double acc = 0.0;
                        for (int t = 0; t < k; ++t) acc += gout[off + t];
                        pb.grad[c] += acc;
                      }
                  }
                });
}

Tensor relu(const Tensor& x) {
  if (x.graph() == nullptr) throw GraphError("relu: unbound tensor");
  Graph& g = *x.graph();
  auto xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] > 0.0 ? xv[i] : 0.0;
  const int xid = x.id();
  return g.emit(x.shape(), std::move(out), x.tracked(),
                [xid](Graph& gr, int self) {
                  const auto& gout = gr.node(self).grad;
                  Graph::Node& px = gr.node(xid);
                  if (px.tracked)
                    for (std::size_t i = 0; i < gout.size(); ++i)
                      if (px.value[i] > 0.0) px.grad[i] += gout[i];
                });
}

Tensor global_avg_pool(const Tensor& x) {
  if (x.graph() == nullptr) throw GraphError("global_avg_pool: unbound tensor");
  Graph& g = *x.graph();
  if (x.shape().size() != 3)
    throw ShapeError("global_avg_pool: expected [batch, ch, k], got " + shape_str(x.shape()));
  const int batch = x.shape()[0], ch = x.shape()[1], k = x.shape()[2];
  if (k < 1) throw ShapeError("global_avg_pool: empty time axis");
  auto xv = x.values();
  std::vector<double> out(static_cast<std::size_t>(batch) * ch);
  for (int b = 0; b < batch; ++b)
    for (int c = 0; c < ch; ++c) {
      const std::size_t off = (static_cast<std::size_t>(b) * ch + c) * k;
      double acc = 0.0;
      for (int t = 0; t < k; ++t) acc += xv[off + t];
      out[static_cast<std::size_t>(b) * ch + c] = acc / k;
    }
  const int xid = x.id();
  return g.emit({batch, ch}, std::move(out), x.tracked(),
                [xid, batch, ch, k](Graph& gr, int self) {
                  const auto& gout = gr.node(self).grad;
                  Graph::Node& px = gr.node(xid);
                  if (!px.tracked) return;
                  const double inv = 1.0 / k;
                  for (int b = 0; b < batch; ++b)
                    for (int c = 0; c < ch; ++c) {
                      const double gv = gout[static_cast<std::size_t>(b) * ch + c] * inv;
                      double* d = px.grad.data() + (static_cast<std::size_t>(b) * ch + c) * k;
                      for (int t = 0; t < k; ++t) d[t] += gv;
                    }
                });
}

Tensor affine(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  Graph& g = same_graph(x, weight, "affine");
  g.check_owns(bias, "affine");
  if (x.shape().size() != 2 || weight.shape().size() != 2 || bias.shape().size() != 1)
    throw ShapeError("affine: expected x [b,n], weight [m,n], bias [m]");
  const int batch = x.shape()[0], n = x.shape()[1];
  const int m = weight.shape()[0];
  if (weight.shape()[1] != n || bias.shape()[0] != m)
    throw ShapeError("affine: dimension mismatch x " + shape_str(x.shape()) + ", weight " +
                     shape_str(weight.shape()) + ", bias " + shape_str(bias.shape()));
  auto xv = x.values();
  auto wv = weight.values();
  auto bv = bias.values();
  std::vector<double> out(static_cast<std::size_t>(batch) * m);
  for (int b = 0; b < batch; ++b)
    for (int j = 0; j < m; ++j) {
      const double* xr = xv.data() + static_cast<std::size_t>(b) * n;
      const double* wr = wv.data() + static_cast<std::size_t>(j) * n;
      double acc = bv[j];
      for (int i = 0; i < n; ++i) acc += xr[i] * wr[i];
      out[static_cast<std::size_t>(b) * m + j] = acc;
    }
  const int xid = x.id(), wid = weight.id(), bid = bias.id();
  return g.emit({batch, m}, std::move(out),
                x.tracked() || weight.tracked() || bias.tracked(),
                [xid, wid, bid, batch, n, m](Graph& gr, int self) {
                  const auto& gout = gr.node(self).grad;
                  Graph::Node& px = gr.node(xid);
                  Graph::Node& pw = gr.node(wid);
                  Graph::Node& pb = gr.node(bid);
                  for (int b = 0; b < batch; ++b) {
                    const double* go = gout.data() + static_cast<std::size_t>(b) * m;
                    if (px.tracked) {
                      double* dx = px.grad.data() + static_cast<std::size_t>(b) * n;
                      for (int j = 0; j < m; ++j) {
                        const double* wr = pw.value.data() + static_cast<std::size_t>(j) * n;
                        for (int i = 0; i < n; ++i) dx[i] += go[j] * wr[i];
                      }
                    }
                    if (pw.tracked) {
                      const double* xr = px.value.data() + static_cast<std::size_t>(b) * n;
                      for (int j = 0; j < m; ++j) {
                        double* dw = pw.grad.data() + static_cast<std::size_t>(j) * n;
                        for (int i = 0; i < n; ++i) dw[i] += go[j] * xr[i];
                      }
                    }
                    if (pb.tracked)
                      for (int j = 0; j < m; ++j) pb.grad[j] += go[j];
                  }
                });
}

Tensor softmax_t(const Tensor& logits, double temperature) {
  if (logits.graph() == nullptr) throw GraphError("softmax_t: unbound tensor");
  Graph& g = *logits.graph();
  if (!(temperature > 0.0))
    throw ConfigError("softmax_t: temperature must be positive, got " +
                      std::to_string(temperature));
  if (logits.shape().size() != 2)
    throw ShapeError("softmax_t: expected [batch, C], got " + shape_str(logits.shape()));
  const int batch = logits.shape()[0], c = logits.shape()[1];
  auto zv = logits.values();
  std::vector<double> out(zv.size());
  for (int b = 0; b < batch; ++b) {
    const double* z = zv.data() + static_cast<std::size_t>(b) * c;
    double* p = out.data() + static_cast<std::size_t>(b) * c;
    double zmax = z[0];
    for (int j = 1; j < c; ++j) zmax = std::max(zmax, z[j]);
    double denom = 0.0;
    for (int j = 0; j < c; ++j) {
      p[j] = std::exp((z[j] - zmax) / temperature);
      denom += p[j];
    }
    for (int j = 0; j < c; ++j) p[j] /= denom;
  }
  const int zid = logits.id();
  return g.emit(logits.shape(), std::move(out), logits.tracked(),
                [zid, batch, c, temperature](Graph& gr, int self) {
                  const Graph::Node& n = gr.node(self);
                  Graph::Node& pz = gr.node(zid);
                  if (!pz.tracked) return;
                  for (int b = 0; b < batch; ++b) {
                    const double* p = n.value.data() + static_cast<std::size_t>(b) * c;
                    const double* gp = n.grad.data() + static_cast<std::size_t>(b) * c;
                    double* dz = pz.grad.data() + static_cast<std::size_t>(b) * c;
                    double dot = 0.0;
                    for (int j = 0; j < c; ++j) dot += gp[j] * p[j];
                    for (int j = 0; j < c; ++j)
                      dz[j] += p[j] * (gp[j] - dot) / temperature;
                  }
                });
}

namespace {
constexpr double kLogClamp = 1e-12;
}

Tensor cross_entropy(const Tensor& probs, std::span<const int> labels) {
  if (probs.graph() == nullptr) throw GraphError("cross_entropy: unbound tensor");
  Graph& g = *probs.graph();
  if (probs.shape().size() != 2)
    throw ShapeError("cross_entropy: expected probs [batch, C], got " +
                     shape_str(probs.shape()));
  const int batch = probs.shape()[0], c = probs.shape()[1];
  if (static_cast<int>(labels.size()) != batch)
    throw ShapeError("cross_entropy: labels size " + std::to_string(labels.size()) +
                     " does not match batch " + std::to_string(batch));
  for (int b = 0; b < batch; ++b)
    if (labels[b] < 0 || labels[b] >= c)
      throw DataError("cross_entropy: label " + std::to_string(labels[b]) +
                      " out of range for " + std::to_string(c) + " classes");
  auto pv = probs.values();
  double loss = 0.0;
  for (int b = 0; b < batch; ++b)
    loss -= std::log(std::max(pv[static_cast<std::size_t>(b) * c + labels[b]], kLogClamp));
  loss /= batch;
  std::vector<int> labels_copy(labels.begin(), labels.end());
  const int pid = probs.id();
  return g.emit({1}, {loss}, probs.tracked(),
                [pid, batch, c, labels_copy](Graph& gr, int self) {
                  const double gl = gr.node(self).grad[0];
                  Graph::Node& pp = gr.node(pid);
                  if (!pp.tracked) return;
                  for (int b = 0; b < batch; ++b) {
                    const std::size_t idx =
                        static_cast<std::size_t>(b) * c + labels_copy[b];
                    const double p = pp.value[idx];
                    if (p >= kLogClamp) pp.grad[idx] -= gl / (batch * p);
                  }
                });
}

Tensor cross_entropy(const Tensor& probs, const std::vector<double>& soft_targets) {
  if (probs.graph() == nullptr) throw GraphError("cross_entropy: unbound tensor");
  Graph& g = *probs.graph();
  if (probs.shape().size() != 2)
    throw ShapeError("cross_entropy: expected probs [batch, C], got " +
                     shape_str(probs.shape()));
  const int batch = probs.shape()[0];
  if (soft_targets.size() != probs.values().size())
    throw ShapeError("cross_entropy: soft target size mismatch");
  auto pv = probs.values();
  double loss = 0.0;
  for (std::size_t i = 0; i < pv.size(); ++i)
    loss -= soft_targets[i] * std::log(std::max(pv[i], kLogClamp));
  loss /= batch;
  const int pid = probs.id();
  return g.emit({1}, {loss}, probs.tracked(),
                [pid, batch, soft_targets](Graph& gr, int self) {
                  const double gl = gr.node(self).grad[0];
                  Graph::Node& pp = gr.node(pid);
                  if (!pp.tracked) return;
                  for (std::size_t i = 0; i < soft_targets.size(); ++i) {
                    const double p = pp.value[i];
                    if (p >= kLogClamp)
                      pp.grad[i] -= gl * soft_targets[i] / (batch * p);
                  }
                });
}

Tensor log_clamped(const Tensor& x, double floor) {
  if (x.graph() == nullptr) throw GraphError("log_clamped: unbound tensor");
  if (!(floor > 0.0)) throw ConfigError("log_clamped: floor must be positive");
  Graph& g = *x.graph();
  auto xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::log(std::max(xv[i], floor));
  const int xid = x.id();
  return g.emit(x.shape(), std::move(out), x.tracked(),
                [xid, floor](Graph& gr, int self) {
                  const auto& gout = gr.node(self).grad;
                  Graph::Node& px = gr.node(xid);
                  if (!px.tracked) return;
                  for (std::size_t i = 0; i < gout.size(); ++i)
                    if (px.value[i] >= floor) px.grad[i] += gout[i] / px.value[i];
                });
}

Tensor sum(const Tensor& x) {
  if (x.graph() == nullptr) throw GraphError("sum: unbound tensor");
  Graph& g = *x.graph();
  double acc = 0.0;
  for (double v : x.values()) acc += v;
  const int xid = x.id();
  return g.emit({1}, {acc}, x.tracked(), [xid](Graph& gr, int self) {
    const double gl = gr.node(self).grad[0];
    Graph::Node& px = gr.node(xid);
    if (px.tracked)
      for (double& d : px.grad) d += gl;
  });
}

Tensor sum_squares(const Tensor& x) {
  if (x.graph() == nullptr) throw GraphError("sum_squares: unbound tensor");
  Graph& g = *x.graph();
  double acc = 0.0;
  for (double v : x.values()) acc += v * v;
  const int xid = x.id();
  return g.emit({1}, {acc}, x.tracked(), [xid](Graph& gr, int self) {
    const double gl = gr.node(self).grad[0];
    Graph::Node& px = gr.node(xid);
    if (px.tracked)
      for (std::size_t i = 0; i < px.grad.size(); ++i)
        px.grad[i] += 2.0 * px.value[i] * gl;
  });
}

Tensor roughness(const Tensor& x) {
  if (x.graph() == nullptr) throw GraphError("roughness: unbound tensor");
  Graph& g = *x.graph();
  Shape s = x.shape();
  int batch = 1, k = 0;
  if (s.size() == 1) {
    k = s[0];
  } else if (s.size() == 2) {
    batch = s[0];
    k = s[1];
  } else {
    throw ShapeError("roughness: expected [k] or [batch, k], got " + shape_str(s));
  }
  auto xv = x.values();
  double acc = 0.0;
  for (int b = 0; b < batch; ++b) {
    const double* r = xv.data() + static_cast<std::size_t>(b) * k;
    for (int t = 0; t + 1 < k; ++t) {
      const double d = r[t + 1] - r[t];
      acc += d * d;
    }
  }
  const int xid = x.id();
  return g.emit({1}, {acc}, x.tracked(), [xid, batch, k](Graph& gr, int self) {
    const double gl = gr.node(self).grad[0];
    Graph::Node& px = gr.node(xid);
    if (!px.tracked) return;
    for (int b = 0; b < batch; ++b) {
      const double* r = px.value.data() + static_cast<std::size_t>(b) * k;
      double* d = px.grad.data() + static_cast<std::size_t>(b) * k;
      for (int t = 0; t + 1 < k; ++t) {
        const double diff = 2.0 * (r[t + 1] - r[t]) * gl;
        d[t + 1] += diff;
        d[t] -= diff;
      }
    }
  });
}

namespace {

void check_class_args(const Tensor& logits, std::span<const int> classes, const char* op) {
  if (logits.shape().size() != 2)
    throw ShapeError(std::string(op) + ": expected logits [batch, C]");
  const int batch = logits.shape()[0], c = logits.shape()[1];
  if (static_cast<int>(classes.size()) != batch)
    throw ShapeError(std::string(op) + ": class index count does not match batch");
  for (int b = 0; b < batch; ++b)
    if (classes[b] < 0 || classes[b] >= c)
      throw DataError(std::string(op) + ": class index out of range");
}

}  // namespace

Tensor pick_class(const Tensor& logits, std::span<const int> classes) {
  if (logits.graph() == nullptr) throw GraphError("pick_class: unbound tensor");
  Graph& g = *logits.graph();
  check_class_args(logits, classes, "pick_class");
  const int batch = logits.shape()[0], c = logits.shape()[1];
  auto zv = logits.values();
  std::vector<double> out(batch);
  for (int b = 0; b < batch; ++b)
    out[b] = zv[static_cast<std::size_t>(b) * c + classes[b]];
  std::vector<int> idx(classes.begin(), classes.end());
  const int zid = logits.id();
  return g.emit({batch}, std::move(out), logits.tracked(),
                [zid, c, idx](Graph& gr, int self) {
                  const auto& gout = gr.node(self).grad;
                  Graph::Node& pz = gr.node(zid);
                  if (!pz.tracked) return;
                  for (std::size_t b = 0; b < idx.size(); ++b)
                    pz.grad[b * c + idx[b]] += gout[b];
                });
}

Tensor max_excluding(const Tensor& logits, std::span<const int> classes) {
  if (logits.graph() == nullptr) throw GraphError("max_excluding: unbound tensor");
  Graph& g = *logits.graph();
  check_class_args(logits, classes, "max_excluding");
  const int batch = logits.shape()[0], c = logits.shape()[1];
  if (c < 2) throw ConfigError("max_excluding: needs at least 2 classes");
  auto zv = logits.values();
  std::vector<double> out(batch);
  std::vector<int> picked(batch);
  for (int b = 0; b < batch; ++b) {
    const double* z = zv.data() + static_cast<std::size_t>(b) * c;
    int best = -1;
    for (int j = 0; j < c; ++j) {
      if (j == classes[b]) continue;
      if (best < 0 || z[j] > z[best]) best = j;
    }
    picked[b] = best;
    out[b] = z[best];
  }
  const int zid = logits.id();
  return g.emit({batch}, std::move(out), logits.tracked(),
                [zid, c, picked](Graph& gr, int self) {
                  const auto& gout = gr.node(self).grad;
                  Graph::Node& pz = gr.node(zid);
                  if (!pz.tracked) return;
                  for (std::size_t b = 0; b < picked.size(); ++b)
                    pz.grad[b * c + picked[b]] += gout[b];
                });
}

}  // namespace tsrobust
