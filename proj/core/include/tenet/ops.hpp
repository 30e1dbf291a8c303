#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "tenet/tape.hpp"
#include "tenet/tensor.hpp"

/// Differentiable operations on tape values.
///
/// Image-like tensors are N x C x H x W. Every op validates extents and throws
/// DimensionError on mismatch; every op output is checked for finiteness by
/// the tape.
namespace tenet::ops {

/// Overflow-safe logistic function, clamped to the open interval (0, 1).
float stable_sigmoid(float x);

std::size_t conv_output_extent(std::size_t in, std::size_t kernel,
                               std::size_t stride, std::size_t padding);

/// Cross-correlation of x[N,Cin,H,W] with kernel[Cout,Cin,k,k].
Var conv2d(const Var& x, const Var& kernel, std::size_t stride,
           std::size_t padding);

/// Adds bias[C] to every spatial position of channel C of x[N,C,H,W].
Var add_channel_bias(const Var& x, const Var& bias);

Var relu(const Var& x);
Var sigmoid(const Var& x);
Var scale(const Var& x, float factor);
Var add(const Var& a, const Var& b);
/// a + alpha * b
Var scale_add(const Var& a, const Var& b, float alpha);
/// Elementwise product. `b` matches `a` exactly, or is N x 1 x H x W and is
/// broadcast across the channels of a rank-4 `a`.
Var hadamard(const Var& a, const Var& b);

Var max_pool2d(const Var& x, std::size_t window, std::size_t stride);
/// Mean over the two trailing axes: [..., H, W] -> [...].
Var spatial_mean(const Var& x);
/// [N, C, H, W] -> [N, C]
Var global_avg_pool(const Var& x);
/// x[N,K] * weight[O,K]^T + bias[O]
Var dense(const Var& x, const Var& weight, const Var& bias);

/// Batch mean of -log softmax(logits)[label]. Labels must lie in
/// [0, num_classes).
Var softmax_cross_entropy(const Var& logits, std::span<const int> labels);
/// Per-sample cross entropy, shape [N].
Var softmax_cross_entropy_per_sample(const Var& logits,
                                     std::span<const int> labels);

Var sum(const Var& x);
Var mean(const Var& x);
/// Picks logits[n, index[n]] -> [N].
Var select_columns(const Var& x, std::span<const std::size_t> index);

/// Per-sample channel -> group map used by the group ops below.
using GroupIds = std::vector<std::size_t>;

/// out[n, c] = maps[n, ids[n][c]]: expands per-group maps [N,G,H,W] to
/// per-channel maps [N,C,H,W].
Var gather_groups(const Var& maps, std::span<const GroupIds> ids,
                  std::size_t channels);
/// S[n, l] = sum over channels c with ids[n][c] == l of x[n, c] -> [N,G,H,W].
Var group_sum(const Var& x, std::span<const GroupIds> ids, std::size_t groups);
/// m[n, l] = (1/n_l) sum_{ids[n][c]==l} weights[n,c] * x[n,c], with the
/// weights treated as constants.
Var group_weighted_mean(const Var& x, const Tensor& weights,
                        std::span<const GroupIds> ids, std::size_t groups);
/// Product over the group axis: [N,G,H,W] -> [N,H,W]. Products with magnitude
/// below 1e-30 are flushed to zero together with their gradient.
Var group_product(const Var& x);

}  // namespace tenet::ops
