#pragma once

// Test-only oracles. Central finite differences for gradient checks and a
// direct-sum convolution reference, both independent of the library's
// autodiff path.

#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace oracle {

inline std::vector<double> central_diff(
    const std::function<double(const std::vector<double>&)>& f,
    std::vector<double> x, double h = 1e-5) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double x0 = x[i];
    x[i] = x0 + h;
    const double fp = f(x);
    x[i] = x0 - h;
    const double fm = f(x);
    x[i] = x0;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

// Elementwise relative error with an absolute floor near zero.
inline double max_rel_err(std::span<const double> got, std::span<const double> want,
                          double abs_floor = 1e-6) {
  double worst = 0.0;
  for (std::size_t i = 0; i < got.size(); ++i) {
    const double denom = std::max(std::abs(want[i]), abs_floor);
    worst = std::max(worst, std::abs(got[i] - want[i]) / denom);
  }
  return worst;
}

// Brute-force same-length cross-correlation with replicate or zero edges.
inline std::vector<double> conv_direct(const std::vector<double>& x,
                                       const std::vector<double>& ker, bool replicate) {
  const int k = static_cast<int>(x.size());
  const int w = static_cast<int>(ker.size());
  const int left = (w - 1) / 2;
  std::vector<double> out(x.size(), 0.0);
  for (int t = 0; t < k; ++t) {
    double acc = 0.0;
    for (int dw = 0; dw < w; ++dw) {
      const int idx = t + dw - left;
      double v;
      if (idx < 0)
        v = replicate ? x[0] : 0.0;
      else if (idx >= k)
        v = replicate ? x[static_cast<std::size_t>(k) - 1] : 0.0;
      else
        v = x[static_cast<std::size_t>(idx)];
      acc += ker[static_cast<std::size_t>(dw)] * v;
    }
    out[static_cast<std::size_t>(t)] = acc;
  }
  return out;
}

}  // namespace oracle
