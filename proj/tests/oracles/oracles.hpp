#pragma once

// Independent reference implementations used only by tests. Everything here
// is written with plain nested loops in double precision and shares no code
// with the library's kernels.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <vector>

#include "tenet/convnet.hpp"
#include "tenet/grouping.hpp"
#include "tenet/tensor.hpp"

namespace oracle {

using tenet::ConvNet;
using tenet::ModelSpec;
using tenet::Tensor;

/// Dense double array with an N,C,H,W view.
struct Map4 {
  std::size_t n = 0, c = 0, h = 0, w = 0;
  std::vector<double> v;

  Map4() = default;
  Map4(std::size_t n_, std::size_t c_, std::size_t h_, std::size_t w_)
      : n(n_), c(c_), h(h_), w(w_), v(n_ * c_ * h_ * w_, 0.0) {}

  double& at(std::size_t a, std::size_t b, std::size_t y, std::size_t x) {
    return v[((a * c + b) * h + y) * w + x];
  }
  double at(std::size_t a, std::size_t b, std::size_t y, std::size_t x) const {
    return v[((a * c + b) * h + y) * w + x];
  }
};

inline Map4 from_tensor(const Tensor& t) {
  Map4 m(t.dim(0), t.dim(1), t.dim(2), t.dim(3));
  for (std::size_t i = 0; i < t.size(); ++i) m.v[i] = t[i];
  return m;
}

inline Tensor to_tensor(const Map4& m) {
  Tensor t({m.n, m.c, m.h, m.w});
  for (std::size_t i = 0; i < m.v.size(); ++i) t[i] = static_cast<float>(m.v[i]);
  return t;
}

/// Direct cross-correlation; kernel is [Cout, Cin, k, k] row-major.
inline Map4 conv2d(const Map4& x, const std::vector<double>& kernel, std::size_t cout,
                   std::size_t k, std::size_t stride, std::size_t pad) {
  const std::size_t ho = (x.h + 2 * pad - k) / stride + 1;
  const std::size_t wo = (x.w + 2 * pad - k) / stride + 1;
  Map4 y(x.n, cout, ho, wo);
  for (std::size_t n = 0; n < x.n; ++n)
    for (std::size_t o = 0; o < cout; ++o)
      for (std::size_t i = 0; i < ho; ++i)
        for (std::size_t j = 0; j < wo; ++j) {
          double acc = 0.0;
          for (std::size_t c = 0; c < x.c; ++c)
            for (std::size_t u = 0; u < k; ++u)
              for (std::size_t v = 0; v < k; ++v) {
                const long yy = static_cast<long>(i * stride + u) - static_cast<long>(pad);
                const long xx = static_cast<long>(j * stride + v) - static_cast<long>(pad);
                if (yy < 0 || xx < 0 || yy >= static_cast<long>(x.h) ||
                    xx >= static_cast<long>(x.w))
                  continue;
                acc += x.at(n, c, static_cast<std::size_t>(yy), static_cast<std::size_t>(xx)) *
                       kernel[((o * x.c + c) * k + u) * k + v];
              }
          y.at(n, o, i, j) = acc;
        }
  return y;
}

/// Records every branch decision (relu sign, pooling winner) so callers can
/// tell whether two evaluations took the same piecewise-linear region.
struct Trace {
  std::vector<std::uint32_t> decisions;
};

inline std::vector<double> to_double(const Tensor& t) {
  return std::vector<double>(t.data().begin(), t.data().end());
}

/// The library network re-expressed in double precision.
class Net {
 public:
  explicit Net(const ConvNet& model) : spec_(model.spec()) {
    for (const auto& p : model.params()) params_.push_back(to_double(p.value));
  }

  const ModelSpec& spec() const { return spec_; }
  std::vector<std::vector<double>>& params() { return params_; }

  Map4 features(const Map4& x, Trace* trace = nullptr) const {
    Map4 y = x;
    for (std::size_t s = 0; s < spec_.split_point; ++s) y = stage(s, y, trace);
    return y;
  }

  /// Logits [N][K].
  std::vector<std::vector<double>> classify(const Map4& a, Trace* trace = nullptr) const {
    Map4 y = a;
    for (std::size_t s = spec_.split_point; s < spec_.stages.size(); ++s) y = stage(s, y, trace);
    std::vector<std::vector<double>> rows(y.n, std::vector<double>(y.c, 0.0));
    for (std::size_t n = 0; n < y.n; ++n)
      for (std::size_t c = 0; c < y.c; ++c) {
        double acc = 0.0;
        for (std::size_t i = 0; i < y.h; ++i)
          for (std::size_t j = 0; j < y.w; ++j) acc += y.at(n, c, i, j);
        rows[n][c] = acc / static_cast<double>(y.h * y.w);
      }
    const std::size_t layers = spec_.head_hidden.size() + 1;
    std::size_t k = 2 * spec_.stages.size();
    for (std::size_t l = 0; l < layers; ++l, k += 2) {
      const std::vector<double>& wt = params_[k];
      const std::vector<double>& b = params_[k + 1];
      const std::size_t out = b.size();
      const std::size_t in = wt.size() / out;
      for (auto& row : rows) {
        std::vector<double> next(out, 0.0);
        for (std::size_t o = 0; o < out; ++o) {
          double acc = b[o];
          for (std::size_t i = 0; i < in; ++i) acc += wt[o * in + i] * row[i];
          if (l + 1 < layers) {
            if (trace) trace->decisions.push_back(acc > 0.0);
            acc = std::max(acc, 0.0);
          }
          next[o] = acc;
        }
        row = std::move(next);
      }
    }
    return rows;
  }

  std::vector<std::vector<double>> forward(const Map4& x, Trace* trace = nullptr) const {
    return classify(features(x, trace), trace);
  }

 private:
  Map4 stage(std::size_t s, const Map4& x, Trace* trace) const {
    const tenet::ConvStage& st = spec_.stages[s];
    Map4 y = conv2d(x, params_[2 * s], st.out_channels, st.kernel, st.stride, st.padding);
    const std::vector<double>& bias = params_[2 * s + 1];
    for (std::size_t n = 0; n < y.n; ++n)
      for (std::size_t c = 0; c < y.c; ++c)
        for (std::size_t i = 0; i < y.h; ++i)
          for (std::size_t j = 0; j < y.w; ++j) {
            const double v = y.at(n, c, i, j) + bias[c];
            if (trace) trace->decisions.push_back(v > 0.0);
            y.at(n, c, i, j) = std::max(v, 0.0);
          }
    if (!st.pool) return y;
    Map4 p(y.n, y.c, (y.h - 2) / 2 + 1, (y.w - 2) / 2 + 1);
    for (std::size_t n = 0; n < p.n; ++n)
      for (std::size_t c = 0; c < p.c; ++c)
        for (std::size_t i = 0; i < p.h; ++i)
          for (std::size_t j = 0; j < p.w; ++j) {
            double best = -std::numeric_limits<double>::infinity();
            std::uint32_t arg = 0;
            for (std::uint32_t q = 0; q < 4; ++q) {
              const double v = y.at(n, c, 2 * i + q / 2, 2 * j + q % 2);
              if (v > best) {
                best = v;
                arg = q;
              }
            }
            if (trace) trace->decisions.push_back(arg);
            p.at(n, c, i, j) = best;
          }
    return p;
  }

  ModelSpec spec_;
  std::vector<std::vector<double>> params_;
};

/// Batch-mean softmax cross entropy.
inline double cross_entropy(const std::vector<std::vector<double>>& logits,
                            const std::vector<int>& labels) {
  double total = 0.0;
  for (std::size_t n = 0; n < logits.size(); ++n) {
    const auto& row = logits[n];
    const double mx = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (double v : row) z += std::exp(v - mx);
    total += std::log(z) + mx - row[static_cast<std::size_t>(labels[n])];
  }
  return total / static_cast<double>(logits.size());
}

inline double map_distance(const Tensor& maps, std::size_t a, std::size_t b) {
  const std::size_t plane = maps.dim(1) * maps.dim(2);
  double acc = 0.0;
  for (std::size_t p = 0; p < plane; ++p) {
    const double d = static_cast<double>(maps[a * plane + p]) - maps[b * plane + p];
    acc += d * d;
  }
  return acc / static_cast<double>(plane);
}

/// Smallest total distance of every channel to its nearest medoid over all
/// medoid subsets of size `groups`.
inline double exhaustive_medoid_optimum(const Tensor& maps, std::size_t groups) {
  const std::size_t channels = maps.dim(0);
  std::vector<int> pick(channels, 0);
  std::fill(pick.end() - static_cast<std::ptrdiff_t>(groups), pick.end(), 1);
  double best = std::numeric_limits<double>::infinity();
  do {
    double total = 0.0;
    for (std::size_t j = 0; j < channels; ++j) {
      double near = std::numeric_limits<double>::infinity();
      for (std::size_t m = 0; m < channels; ++m) {
        if (pick[m]) near = std::min(near, map_distance(maps, j, m));
      }
      total += near;
    }
    best = std::min(best, total);
  } while (std::next_permutation(pick.begin(), pick.end()));
  return best;
}

/// Sum over channels of the distance to the assigned medoid.
inline double grouping_cost(const Tensor& maps, const tenet::FeatureGrouping& g) {
  double total = 0.0;
  for (std::size_t j = 0; j < g.ids.size(); ++j) total += map_distance(maps, j, g.medoids[g.ids[j]]);
  return total;
}

}  // namespace oracle
