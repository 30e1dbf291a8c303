#include "tenet/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace tenet::ops {
namespace {

using RowMatrix =
    Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

void require(bool ok, const std::string& op, const std::string& what) {
  if (!ok) throw DimensionError(op + ": " + what);
}

void require_rank(const Tensor& t, std::size_t rank, const std::string& op) {
  require(t.rank() == rank, op,
          "expected rank " + std::to_string(rank) + ", got " +
              to_string(t.shape()));
}

constexpr std::size_t kConvBlockFloats = std::size_t{1} << 18;

struct ConvGeometry {
  std::size_t channels, height, width, kernel, stride, padding, out_h, out_w;

  std::size_t rows() const { return channels * kernel * kernel; }
  std::size_t cols() const { return out_h * out_w; }
};

// cols[(c*k + ky)*k + kx, oy*out_w + ox] = x[c, oy*s + ky - p, ox*s + kx - p]
// with `ld` floats between consecutive rows of cols.
void im2col(const float* x, const ConvGeometry& g, float* cols, std::size_t ld) {
  const auto pad = static_cast<std::ptrdiff_t>(g.padding);
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t ky = 0; ky < g.kernel; ++ky) {
      for (std::size_t kx = 0; kx < g.kernel; ++kx) {
        float* dst = cols + ((c * g.kernel + ky) * g.kernel + kx) * ld;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - pad;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const auto ix =
                static_cast<std::ptrdiff_t>(ox * g.stride + kx) - pad;
            const bool inside =
                iy >= 0 && ix >= 0 && iy < static_cast<std::ptrdiff_t>(g.height) &&
                ix < static_cast<std::ptrdiff_t>(g.width);
            dst[oy * g.out_w + ox] =
                inside ? x[(c * g.height + static_cast<std::size_t>(iy)) * g.width +
                           static_cast<std::size_t>(ix)]
                       : 0.0f;
          }
        }
      }
    }
  }
}

void col2im(const float* cols, const ConvGeometry& g, float* x, std::size_t ld) {
  const auto pad = static_cast<std::ptrdiff_t>(g.padding);
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t ky = 0; ky < g.kernel; ++ky) {
      for (std::size_t kx = 0; kx < g.kernel; ++kx) {
        const float* src =
            cols + ((c * g.kernel + ky) * g.kernel + kx) * ld;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - pad;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) continue;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const auto ix =
                static_cast<std::ptrdiff_t>(ox * g.stride + kx) - pad;
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.width)) continue;
            x[(c * g.height + static_cast<std::size_t>(iy)) * g.width +
              static_cast<std::size_t>(ix)] += src[oy * g.out_w + ox];
          }
        }
      }
    }
  }
}

template <typename F, typename DF>
Var unary(const Var& x, std::string_view op, F f, DF df) {
  Tensor out = x.value();
  float* o = out.raw();
  for (std::size_t i = 0; i < out.size(); ++i) o[i] = f(o[i]);
  return x.tape()->record(op, std::move(out), {x},
                          [x, df](Tape& t, const Tensor& g) {
                            Tensor* gx = t.grad_sink(x);
                            if (gx == nullptr) return;
                            const float* in = x.value().raw();
                            const float* go = g.raw();
                            float* dst = gx->raw();
                            for (std::size_t i = 0; i < g.size(); ++i) {
                              dst[i] += go[i] * df(in[i]);
                            }
                          });
}

void check_same_tape(const Var& a, const Var& b, const std::string& op) {
  if (a.tape() != b.tape()) throw TapeError(op + ": operands on different tapes");
}

void check_groups(std::span<const GroupIds> ids, std::size_t batch,
                  std::size_t channels, std::size_t groups,
                  const std::string& op) {
  require(ids.size() == batch, op, "one group assignment per sample required");
  for (const GroupIds& per_sample : ids) {
    require(per_sample.size() == channels, op,
            "group assignment length differs from channel count");
    for (std::size_t id : per_sample) {
      require(id < groups, op, "group index out of range");
    }
  }
}

}  // namespace

float stable_sigmoid(float x) {
  constexpr float lo = std::numeric_limits<float>::min();
  constexpr float hi = 1.0f - std::numeric_limits<float>::epsilon() / 2.0f;
  double s;
  if (x >= 0.0f) {
    s = 1.0 / (1.0 + std::exp(-static_cast<double>(x)));
  } else {
    const double e = std::exp(static_cast<double>(x));
    s = e / (1.0 + e);
  }
  return std::clamp(static_cast<float>(s), lo, hi);
}

std::size_t conv_output_extent(std::size_t in, std::size_t kernel,
                               std::size_t stride, std::size_t padding) {
  if (stride == 0) throw DimensionError("conv2d: stride must be >= 1");
  if (kernel == 0 || kernel > in + 2 * padding) {
    throw DimensionError("conv2d: kernel " + std::to_string(kernel) +
                         " exceeds padded extent " +
                         std::to_string(in + 2 * padding));
  }
  return (in + 2 * padding - kernel) / stride + 1;
}

Var conv2d(const Var& x, const Var& kernel, std::size_t stride,
           std::size_t padding) {
  check_same_tape(x, kernel, "conv2d");
  const Tensor& xv = x.value();
  const Tensor& kv = kernel.value();
  require_rank(xv, 4, "conv2d input");
  require_rank(kv, 4, "conv2d kernel");
  require(kv.dim(1) == xv.dim(1), "conv2d",
          "kernel expects " + std::to_string(kv.dim(1)) + " input channels, got " +
              std::to_string(xv.dim(1)));
  require(kv.dim(2) == kv.dim(3), "conv2d", "kernel must be square");

  const std::size_t batch = xv.dim(0);
  const std::size_t out_channels = kv.dim(0);
  ConvGeometry g{xv.dim(1), xv.dim(2), xv.dim(3), kv.dim(2), stride, padding, 0, 0};
  g.out_h = conv_output_extent(g.height, g.kernel, stride, padding);
  g.out_w = conv_output_extent(g.width, g.kernel, stride, padding);

  Tensor out({batch, out_channels, g.out_h, g.out_w});
  const std::size_t in_stride = g.channels * g.height * g.width;
  const std::size_t out_stride = out_channels * g.cols();
  // Samples are processed in blocks whose im2col buffers sit side by side,
  // so each block is a single GEMM.
  const std::size_t block = std::clamp<std::size_t>(
      kConvBlockFloats / std::max<std::size_t>(g.rows() * g.cols(), 1), 1, batch);
  const auto co = static_cast<Eigen::Index>(out_channels);
  const auto rows = static_cast<Eigen::Index>(g.rows());
  std::vector<float> cols;
  RowMatrix y;
  ConstMatrixMap w(kv.raw(), co, rows);
  for (std::size_t n0 = 0; n0 < batch; n0 += block) {
    const std::size_t nb = std::min(block, batch - n0);
    const std::size_t ld = nb * g.cols();
    cols.resize(g.rows() * ld);
    for (std::size_t i = 0; i < nb; ++i) {
      im2col(xv.raw() + (n0 + i) * in_stride, g, cols.data() + i * g.cols(), ld);
    }
    ConstMatrixMap c(cols.data(), rows, static_cast<Eigen::Index>(ld));
    y.noalias() = w * c;
    for (std::size_t i = 0; i < nb; ++i) {
      float* dst = out.raw() + (n0 + i) * out_stride;
      for (std::size_t o = 0; o < out_channels; ++o) {
        std::copy_n(y.data() + o * ld + i * g.cols(), g.cols(), dst + o * g.cols());
      }
    }
  }

  return x.tape()->record(
      "conv2d", std::move(out), {x, kernel},
      [x, kernel, g, batch, block, out_channels, in_stride, out_stride](
          Tape& t, const Tensor& grad) {
        Tensor* gx = t.grad_sink(x);
        Tensor* gk = t.grad_sink(kernel);
        const Tensor& xv = x.value();
        const Tensor& kv = kernel.value();
        const auto co = static_cast<Eigen::Index>(out_channels);
        const auto rows = static_cast<Eigen::Index>(g.rows());
        ConstMatrixMap w(kv.raw(), co, rows);
        std::vector<float> cols;
        std::vector<float> dy_block;
        RowMatrix dcols;
        for (std::size_t n0 = 0; n0 < batch; n0 += block) {
          const std::size_t nb = std::min(block, batch - n0);
          const std::size_t ld = nb * g.cols();
          dy_block.resize(out_channels * ld);
          for (std::size_t i = 0; i < nb; ++i) {
            const float* src = grad.raw() + (n0 + i) * out_stride;
            for (std::size_t o = 0; o < out_channels; ++o) {
              std::copy_n(src + o * g.cols(), g.cols(), dy_block.data() + o * ld + i * g.cols());
            }
          }
          ConstMatrixMap dy(dy_block.data(), co, static_cast<Eigen::Index>(ld));
          if (gk != nullptr) {
            cols.resize(g.rows() * ld);
            for (std::size_t i = 0; i < nb; ++i) {
              im2col(xv.raw() + (n0 + i) * in_stride, g, cols.data() + i * g.cols(), ld);
            }
            ConstMatrixMap c(cols.data(), rows, static_cast<Eigen::Index>(ld));
            MatrixMap dw(gk->raw(), co, rows);
            dw.noalias() += dy * c.transpose();
          }
          if (gx != nullptr) {
            dcols.noalias() = w.transpose() * dy;
            for (std::size_t i = 0; i < nb; ++i) {
              col2im(dcols.data() + i * g.cols(), g, gx->raw() + (n0 + i) * in_stride, ld);
            }
          }
        }
      });
}

Var add_channel_bias(const Var& x, const Var& bias) {
  check_same_tape(x, bias, "add_channel_bias");
  const Tensor& xv = x.value();
  const Tensor& bv = bias.value();
  require_rank(xv, 4, "add_channel_bias");
  require(bv.rank() == 1 && bv.dim(0) == xv.dim(1), "add_channel_bias",
          "bias length must equal channel count");
  const std::size_t batch = xv.dim(0), channels = xv.dim(1);
  const std::size_t plane = xv.dim(2) * xv.dim(3);
  Tensor out = xv;
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t c = 0; c < channels; ++c) {
      float* p = out.raw() + (n * channels + c) * plane;
      const float b = bv[c];
      for (std::size_t i = 0; i < plane; ++i) p[i] += b;
    }
  }
  return x.tape()->record(
      "add_channel_bias", std::move(out), {x, bias},
      [x, bias, batch, channels, plane](Tape& t, const Tensor& g) {
        if (Tensor* gx = t.grad_sink(x)) {
          float* dst = gx->raw();
          const float* src = g.raw();
          for (std::size_t i = 0; i < g.size(); ++i) dst[i] += src[i];
        }
        if (Tensor* gb = t.grad_sink(bias)) {
          for (std::size_t n = 0; n < batch; ++n) {
            for (std::size_t c = 0; c < channels; ++c) {
              const float* p = g.raw() + (n * channels + c) * plane;
              double acc = 0.0;
              for (std::size_t i = 0; i < plane; ++i) acc += p[i];
              (*gb)[c] += static_cast<float>(acc);
            }
          }
        }
      });
}

Var relu(const Var& x) {
  return unary(
      x, "relu", [](float v) { return v > 0.0f ? v : 0.0f; },
      [](float in) { return in > 0.0f ? 1.0f : 0.0f; });
}

Var sigmoid(const Var& x) {
  return unary(x, "sigmoid", stable_sigmoid, [](float in) {
    const float s = stable_sigmoid(in);
    return s * (1.0f - s);
  });
}

Var scale(const Var& x, float factor) {
  Tensor out = x.value();
  for (float& v : out.data()) v *= factor;
  return x.tape()->record("scale", std::move(out), {x},
                          [x, factor](Tape& t, const Tensor& g) {
                            if (Tensor* gx = t.grad_sink(x)) {
                              for (std::size_t i = 0; i < g.size(); ++i) {
                                (*gx)[i] += g[i] * factor;
                              }
                            }
                          });
}

Var scale_add(const Var& a, const Var& b, float alpha) {
  check_same_tape(a, b, "scale_add");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require(av.shape() == bv.shape(), "scale_add",
          to_string(av.shape()) + " vs " + to_string(bv.shape()));
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += alpha * bv[i];
  return a.tape()->record("scale_add", std::move(out), {a, b},
                          [a, b, alpha](Tape& t, const Tensor& g) {
                            if (Tensor* ga = t.grad_sink(a)) {
                              for (std::size_t i = 0; i < g.size(); ++i) {
                                (*ga)[i] += g[i];
                              }
                            }
                            if (Tensor* gb = t.grad_sink(b)) {
                              for (std::size_t i = 0; i < g.size(); ++i) {
                                (*gb)[i] += alpha * g[i];
                              }
                            }
                          });
}

Var add(const Var& a, const Var& b) {
  check_same_tape(a, b, "add");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require(av.shape() == bv.shape(), "add",
          to_string(av.shape()) + " vs " + to_string(bv.shape()));
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return a.tape()->record("add", std::move(out), {a, b},
                          [a, b](Tape& t, const Tensor& g) {
                            for (const Var* v : {&a, &b}) {
                              if (Tensor* gv = t.grad_sink(*v)) {
                                for (std::size_t i = 0; i < g.size(); ++i) {
                                  (*gv)[i] += g[i];
                                }
                              }
                            }
                          });
}

Var hadamard(const Var& a, const Var& b) {
  check_same_tape(a, b, "hadamard");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const bool same = av.shape() == bv.shape();
  const bool broadcast = !same && av.rank() == 4 && bv.rank() == 4 &&
                         bv.dim(1) == 1 && av.dim(0) == bv.dim(0) &&
                         av.dim(2) == bv.dim(2) && av.dim(3) == bv.dim(3);
  require(same || broadcast, "hadamard",
          "incompatible shapes " + to_string(av.shape()) + " and " +
              to_string(bv.shape()));

  const std::size_t plane = same ? av.size() : av.dim(2) * av.dim(3);
  const std::size_t channels = same ? 1 : av.dim(1);
  // index into b for element i of a
  auto b_index = [=](std::size_t i) {
    if (same) return i;
    const std::size_t n = i / (channels * plane);
    return n * plane + i % plane;
  };

  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[b_index(i)];
  return a.tape()->record("hadamard", std::move(out), {a, b},
                          [a, b, b_index](Tape& t, const Tensor& g) {
                            const Tensor& av = a.value();
                            const Tensor& bv = b.value();
                            if (Tensor* ga = t.grad_sink(a)) {
                              for (std::size_t i = 0; i < g.size(); ++i) {
                                (*ga)[i] += g[i] * bv[b_index(i)];
                              }
                            }
                            if (Tensor* gb = t.grad_sink(b)) {
                              for (std::size_t i = 0; i < g.size(); ++i) {
                                (*gb)[b_index(i)] += g[i] * av[i];
                              }
                            }
                          });
}

Var max_pool2d(const Var& x, std::size_t window, std::size_t stride) {
  const Tensor& xv = x.value();
  require_rank(xv, 4, "max_pool2d");
  require(window >= 1 && stride >= 1, "max_pool2d", "window and stride >= 1");
  require(window <= xv.dim(2) && window <= xv.dim(3), "max_pool2d",
          "window larger than input");
  const std::size_t planes = xv.dim(0) * xv.dim(1);
  const std::size_t h = xv.dim(2), w = xv.dim(3);
  const std::size_t oh = (h - window) / stride + 1;
  const std::size_t ow = (w - window) / stride + 1;

  Tensor out({xv.dim(0), xv.dim(1), oh, ow});
  std::vector<std::size_t> argmax(out.size());
  for (std::size_t p = 0; p < planes; ++p) {
    const float* src = xv.raw() + p * h * w;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        std::size_t best = (oy * stride) * w + ox * stride;
        for (std::size_t ky = 0; ky < window; ++ky) {
          for (std::size_t kx = 0; kx < window; ++kx) {
            const std::size_t idx = (oy * stride + ky) * w + ox * stride + kx;
            if (src[idx] > src[best]) best = idx;
          }
        }
        const std::size_t o = (p * oh + oy) * ow + ox;
        out[o] = src[best];
        argmax[o] = p * h * w + best;
      }
    }
  }
  return x.tape()->record("max_pool2d", std::move(out), {x},
                          [x, argmax = std::move(argmax)](Tape& t, const Tensor& g) {
                            if (Tensor* gx = t.grad_sink(x)) {
                              for (std::size_t i = 0; i < g.size(); ++i) {
                                (*gx)[argmax[i]] += g[i];
                              }
                            }
                          });
}

Var spatial_mean(const Var& x) {
  const Tensor& xv = x.value();
  require(xv.rank() >= 2, "spatial_mean", "needs at least two axes");
  const std::size_t plane = xv.dim(xv.rank() - 2) * xv.dim(xv.rank() - 1);
  require(plane > 0, "spatial_mean", "empty spatial extent");
  Shape shape(xv.shape().begin(), xv.shape().end() - 2);
  Tensor out(shape);
  const std::size_t count = out.size();
  for (std::size_t i = 0; i < count; ++i) {
    double acc = 0.0;
    const float* p = xv.raw() + i * plane;
    for (std::size_t k = 0; k < plane; ++k) acc += p[k];
    out[i] = static_cast<float>(acc / static_cast<double>(plane));
  }
  return x.tape()->record("spatial_mean", std::move(out), {x},
                          [x, plane, count](Tape& t, const Tensor& g) {
                            if (Tensor* gx = t.grad_sink(x)) {
                              const float inv = 1.0f / static_cast<float>(plane);
                              for (std::size_t i = 0; i < count; ++i) {
                                float* p = gx->raw() + i * plane;
                                const float v = g[i] * inv;
                                for (std::size_t k = 0; k < plane; ++k) p[k] += v;
                              }
                            }
                          });
}

Var global_avg_pool(const Var& x) {
  require_rank(x.value(), 4, "global_avg_pool");
  return spatial_mean(x);
}

Var dense(const Var& x, const Var& weight, const Var& bias) {
  check_same_tape(x, weight, "dense");
  check_same_tape(x, bias, "dense");
  const Tensor& xv = x.value();
  const Tensor& wv = weight.value();
  const Tensor& bv = bias.value();
  require_rank(xv, 2, "dense input");
  require_rank(wv, 2, "dense weight");
  require(wv.dim(1) == xv.dim(1), "dense",
          "weight expects " + std::to_string(wv.dim(1)) + " features, got " +
              std::to_string(xv.dim(1)));
  require(bv.rank() == 1 && bv.dim(0) == wv.dim(0), "dense",
          "bias length must equal output features");
  const auto n = static_cast<Eigen::Index>(xv.dim(0));
  const auto k = static_cast<Eigen::Index>(xv.dim(1));
  const auto o = static_cast<Eigen::Index>(wv.dim(0));

  Tensor out({xv.dim(0), wv.dim(0)});
  MatrixMap y(out.raw(), n, o);
  y.noalias() = ConstMatrixMap(xv.raw(), n, k) *
                ConstMatrixMap(wv.raw(), o, k).transpose();
  for (Eigen::Index r = 0; r < n; ++r) {
    for (Eigen::Index c = 0; c < o; ++c) y(r, c) += bv[static_cast<std::size_t>(c)];
  }
  return x.tape()->record(
      "dense", std::move(out), {x, weight, bias},
      [x, weight, bias, n, k, o](Tape& t, const Tensor& g) {
        ConstMatrixMap dy(g.raw(), n, o);
        if (Tensor* gx = t.grad_sink(x)) {
          MatrixMap(gx->raw(), n, k).noalias() +=
              dy * ConstMatrixMap(weight.value().raw(), o, k);
        }
        if (Tensor* gw = t.grad_sink(weight)) {
          MatrixMap(gw->raw(), o, k).noalias() +=
              dy.transpose() * ConstMatrixMap(x.value().raw(), n, k);
        }
        if (Tensor* gb = t.grad_sink(bias)) {
          for (Eigen::Index c = 0; c < o; ++c) {
            double acc = 0.0;
            for (Eigen::Index r = 0; r < n; ++r) acc += dy(r, c);
            (*gb)[static_cast<std::size_t>(c)] += static_cast<float>(acc);
          }
        }
      });
}

namespace {

// Softmax probabilities and per-sample losses, evaluated in double.
struct SoftmaxTerms {
  std::vector<double> probs;
  std::vector<double> losses;
};

SoftmaxTerms softmax_terms(const Tensor& logits, std::span<const int> labels) {
  require_rank(logits, 2, "softmax_cross_entropy");
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  require(labels.size() == n, "softmax_cross_entropy",
          "label count differs from batch size");
  require(k > 0, "softmax_cross_entropy", "no classes");
  SoftmaxTerms terms{std::vector<double>(n * k), std::vector<double>(n)};
  for (std::size_t r = 0; r < n; ++r) {
    const int label = labels[r];
    if (label < 0 || static_cast<std::size_t>(label) >= k) {
      throw std::out_of_range("softmax_cross_entropy: label " +
                              std::to_string(label) + " outside [0, " +
                              std::to_string(k) + ")");
    }
    const float* z = logits.raw() + r * k;
    const double zmax = *std::max_element(z, z + k);
    double total = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      const double e = std::exp(static_cast<double>(z[c]) - zmax);
      terms.probs[r * k + c] = e;
      total += e;
    }
    for (std::size_t c = 0; c < k; ++c) terms.probs[r * k + c] /= total;
    terms.losses[r] = std::log(total) + zmax - static_cast<double>(z[label]);
  }
  return terms;
}

Var cross_entropy_impl(const Var& logits, std::span<const int> labels,
                       bool reduce) {
  SoftmaxTerms terms = softmax_terms(logits.value(), labels);
  const std::size_t n = logits.value().dim(0), k = logits.value().dim(1);
  Tensor out;
  if (reduce) {
    double acc = 0.0;
    for (double l : terms.losses) acc += l;
    out = Tensor({1}, {static_cast<float>(acc / static_cast<double>(n))});
  } else {
    std::vector<float> per(n);
    for (std::size_t r = 0; r < n; ++r) per[r] = static_cast<float>(terms.losses[r]);
    out = Tensor({n}, std::move(per));
  }
  std::vector<int> owned(labels.begin(), labels.end());
  return logits.tape()->record(
      reduce ? "softmax_cross_entropy" : "softmax_cross_entropy_per_sample",
      std::move(out), {logits},
      [logits, probs = std::move(terms.probs), owned = std::move(owned), n, k,
       reduce](Tape& t, const Tensor& g) {
        Tensor* gz = t.grad_sink(logits);
        if (gz == nullptr) return;
        for (std::size_t r = 0; r < n; ++r) {
          const double scale =
              reduce ? static_cast<double>(g[0]) / static_cast<double>(n) : g[r];
          for (std::size_t c = 0; c < k; ++c) {
            const double onehot = static_cast<int>(c) == owned[r] ? 1.0 : 0.0;
            (*gz)[r * k + c] +=
                static_cast<float>(scale * (probs[r * k + c] - onehot));
          }
        }
      });
}

}  // namespace

Var softmax_cross_entropy(const Var& logits, std::span<const int> labels) {
  return cross_entropy_impl(logits, labels, true);
}

Var softmax_cross_entropy_per_sample(const Var& logits,
                                     std::span<const int> labels) {
  return cross_entropy_impl(logits, labels, false);
}

Var sum(const Var& x) {
  double acc = 0.0;
  for (float v : x.value().data()) acc += v;
  return x.tape()->record("sum", Tensor({1}, {static_cast<float>(acc)}), {x},
                          [x](Tape& t, const Tensor& g) {
                            if (Tensor* gx = t.grad_sink(x)) {
                              for (float& v : gx->data()) v += g[0];
                            }
                          });
}

Var mean(const Var& x) {
  const std::size_t count = x.value().size();
  require(count > 0, "mean", "empty tensor");
  double acc = 0.0;
  for (float v : x.value().data()) acc += v;
  return x.tape()->record(
      "mean", Tensor({1}, {static_cast<float>(acc / static_cast<double>(count))}),
      {x}, [x, count](Tape& t, const Tensor& g) {
        if (Tensor* gx = t.grad_sink(x)) {
          const float v = g[0] / static_cast<float>(count);
          for (float& e : gx->data()) e += v;
        }
      });
}

Var select_columns(const Var& x, std::span<const std::size_t> index) {
  const Tensor& xv = x.value();
  require_rank(xv, 2, "select_columns");
  require(index.size() == xv.dim(0), "select_columns", "one index per row");
  const std::size_t n = xv.dim(0), k = xv.dim(1);
  Tensor out({n});
  std::vector<std::size_t> owned(index.begin(), index.end());
  for (std::size_t r = 0; r < n; ++r) {
    require(owned[r] < k, "select_columns", "column index out of range");
    out[r] = xv[r * k + owned[r]];
  }
  return x.tape()->record("select_columns", std::move(out), {x},
                          [x, owned = std::move(owned), k](Tape& t, const Tensor& g) {
                            if (Tensor* gx = t.grad_sink(x)) {
                              for (std::size_t r = 0; r < owned.size(); ++r) {
                                (*gx)[r * k + owned[r]] += g[r];
                              }
                            }
                          });
}

Var gather_groups(const Var& maps, std::span<const GroupIds> ids,
                  std::size_t channels) {
  const Tensor& mv = maps.value();
  require_rank(mv, 4, "gather_groups");
  const std::size_t batch = mv.dim(0), groups = mv.dim(1);
  const std::size_t plane = mv.dim(2) * mv.dim(3);
  check_groups(ids, batch, channels, groups, "gather_groups");
  std::vector<GroupIds> owned(ids.begin(), ids.end());

  Tensor out({batch, channels, mv.dim(2), mv.dim(3)});
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t c = 0; c < channels; ++c) {
      const float* src = mv.raw() + (n * groups + owned[n][c]) * plane;
      std::copy(src, src + plane, out.raw() + (n * channels + c) * plane);
    }
  }
  return maps.tape()->record(
      "gather_groups", std::move(out), {maps},
      [maps, owned = std::move(owned), batch, channels, groups, plane](
          Tape& t, const Tensor& g) {
        Tensor* gm = t.grad_sink(maps);
        if (gm == nullptr) return;
        for (std::size_t n = 0; n < batch; ++n) {
          for (std::size_t c = 0; c < channels; ++c) {
            float* dst = gm->raw() + (n * groups + owned[n][c]) * plane;
            const float* src = g.raw() + (n * channels + c) * plane;
            for (std::size_t i = 0; i < plane; ++i) dst[i] += src[i];
          }
        }
      });
}

Var group_sum(const Var& x, std::span<const GroupIds> ids, std::size_t groups) {
  const Tensor& xv = x.value();
  require_rank(xv, 4, "group_sum");
  const std::size_t batch = xv.dim(0), channels = xv.dim(1);
  const std::size_t plane = xv.dim(2) * xv.dim(3);
  check_groups(ids, batch, channels, groups, "group_sum");
  std::vector<GroupIds> owned(ids.begin(), ids.end());

  Tensor out({batch, groups, xv.dim(2), xv.dim(3)});
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t c = 0; c < channels; ++c) {
      float* dst = out.raw() + (n * groups + owned[n][c]) * plane;
      const float* src = xv.raw() + (n * channels + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) dst[i] += src[i];
    }
  }
  return x.tape()->record(
      "group_sum", std::move(out), {x},
      [x, owned = std::move(owned), batch, channels, groups, plane](
          Tape& t, const Tensor& g) {
        Tensor* gx = t.grad_sink(x);
        if (gx == nullptr) return;
        for (std::size_t n = 0; n < batch; ++n) {
          for (std::size_t c = 0; c < channels; ++c) {
            const float* src = g.raw() + (n * groups + owned[n][c]) * plane;
            float* dst = gx->raw() + (n * channels + c) * plane;
            for (std::size_t i = 0; i < plane; ++i) dst[i] += src[i];
          }
        }
      });
}

Var group_weighted_mean(const Var& x, const Tensor& weights,
                        std::span<const GroupIds> ids, std::size_t groups) {
  const Tensor& xv = x.value();
  require_rank(xv, 4, "group_weighted_mean");
  const std::size_t batch = xv.dim(0), channels = xv.dim(1);
  const std::size_t plane = xv.dim(2) * xv.dim(3);
  require(weights.shape() == Shape{batch, channels}, "group_weighted_mean",
          "weights must be [N, C]");
  check_groups(ids, batch, channels, groups, "group_weighted_mean");
  std::vector<GroupIds> owned(ids.begin(), ids.end());

  // coeff[n, c] = w[n, c] / n_{ids[n][c]}
  std::vector<float> coeff(batch * channels);
  for (std::size_t n = 0; n < batch; ++n) {
    std::vector<std::size_t> sizes(groups, 0);
    for (std::size_t id : owned[n]) ++sizes[id];
    for (std::size_t c = 0; c < channels; ++c) {
      coeff[n * channels + c] =
          weights[n * channels + c] / static_cast<float>(sizes[owned[n][c]]);
    }
  }
  Tensor out({batch, groups, xv.dim(2), xv.dim(3)});
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t c = 0; c < channels; ++c) {
      float* dst = out.raw() + (n * groups + owned[n][c]) * plane;
      const float* src = xv.raw() + (n * channels + c) * plane;
      const float k = coeff[n * channels + c];
      for (std::size_t i = 0; i < plane; ++i) dst[i] += k * src[i];
    }
  }
  return x.tape()->record(
      "group_weighted_mean", std::move(out), {x},
      [x, owned = std::move(owned), coeff = std::move(coeff), batch, channels,
       groups, plane](Tape& t, const Tensor& g) {
        Tensor* gx = t.grad_sink(x);
        if (gx == nullptr) return;
        for (std::size_t n = 0; n < batch; ++n) {
          for (std::size_t c = 0; c < channels; ++c) {
            const float* src = g.raw() + (n * groups + owned[n][c]) * plane;
            float* dst = gx->raw() + (n * channels + c) * plane;
            const float k = coeff[n * channels + c];
            for (std::size_t i = 0; i < plane; ++i) dst[i] += k * src[i];
          }
        }
      });
}

Var group_product(const Var& x) {
  const Tensor& xv = x.value();
  require_rank(xv, 4, "group_product");
  const std::size_t batch = xv.dim(0), groups = xv.dim(1);
  const std::size_t plane = xv.dim(2) * xv.dim(3);
  require(groups >= 1, "group_product", "no groups");
  constexpr double flush = 1e-30;

  Tensor out({batch, xv.dim(2), xv.dim(3)});
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t i = 0; i < plane; ++i) {
      double prod = 1.0;
      for (std::size_t l = 0; l < groups; ++l) {
        prod *= xv[(n * groups + l) * plane + i];
      }
      out[n * plane + i] = std::abs(prod) < flush ? 0.0f : static_cast<float>(prod);
    }
  }
  return x.tape()->record(
      "group_product", std::move(out), {x},
      [x, batch, groups, plane](Tape& t, const Tensor& g) {
        Tensor* gx = t.grad_sink(x);
        if (gx == nullptr) return;
        const Tensor& xv = x.value();
        std::vector<double> prefix(groups + 1), suffix(groups + 1);
        for (std::size_t n = 0; n < batch; ++n) {
          for (std::size_t i = 0; i < plane; ++i) {
            auto at = [&](std::size_t l) {
              return static_cast<double>(xv[(n * groups + l) * plane + i]);
            };
            prefix[0] = 1.0;
            for (std::size_t l = 0; l < groups; ++l) prefix[l + 1] = prefix[l] * at(l);
            if (std::abs(prefix[groups]) < flush) continue;
            suffix[groups] = 1.0;
            for (std::size_t l = groups; l-- > 0;) suffix[l] = suffix[l + 1] * at(l);
            const double gi = g[n * plane + i];
            for (std::size_t l = 0; l < groups; ++l) {
              (*gx)[(n * groups + l) * plane + i] +=
                  static_cast<float>(gi * prefix[l] * suffix[l + 1]);
            }
          }
        }
      });
}

}  // namespace tenet::ops
