#pragma once

#include <cstddef>
#include <optional>
#include <span>

#include "tpap/autodiff.hpp"
#include "tpap/tensor.hpp"

/// Differentiable primitives. Every op validates operand shapes and throws
/// ShapeError naming the op and the offending shapes.
///
/// Layout conventions: images are NCHW, conv weights are [out, in, k, k],
/// dense weights are [out, in].
namespace tpap::ops {

Var add(Var a, Var b);
Var sub(Var a, Var b);
/// Elementwise product.
Var mul(Var a, Var b);
Var scale(Var a, float s);
/// Sum of all elements, shape [1].
Var sum(Var a);

/// [m, k] x [k, n] -> [m, n].
Var matmul(Var a, Var b);

/// x [B, in], w [out, in], optional b [out] -> x w^T + b, [B, out].
Var linear(Var x, Var w, std::optional<Var> b = std::nullopt);

/// Direct stride-1 convolution with explicit zero padding on each side.
/// x [B, C, H, W], w [O, C, k, k], optional b [O] ->
/// [B, O, H + 2p - k + 1, W + 2p - k + 1].
Var conv2d(Var x, Var w, std::optional<Var> b, std::size_t padding);

/// max(x, 0). The subgradient at exactly 0 is 0.
Var relu(Var a);

/// Non-overlapping k x k max pooling (stride k, trailing rows/cols dropped).
/// Ties route the gradient to the first maximum in row-major window order.
Var max_pool2d(Var x, std::size_t k);

Var reshape(Var a, Shape shape);

/// Zero-pads the two spatial dims of an NCHW tensor by p on each side.
Var pad2d(Var x, std::size_t p);

/// Fixed per-channel affine map y = x * scale[c] + shift[c] on NCHW input.
/// scale/shift are constants (no gradient).
Var channel_affine(Var x, std::span<const float> scale, std::span<const float> shift);

/// Mean over the batch of -log softmax(logits)[label], computed with the
/// log-sum-exp shift. logits [B, C]; labels must be in [0, C).
Var softmax_cross_entropy(Var logits, std::span<const Label> labels);

}  // namespace tpap::ops
