#include "tpap/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "tpap/error.hpp"

namespace tpap::ops {

namespace {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

[[noreturn]] void shape_fail(const std::string& op, const std::string& detail) {
  throw ShapeError(op + ": " + detail);
}

void require_same(const std::string& op, const Var& a, const Var& b) {
  if (a.shape() != b.shape()) shape_fail(op, shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

void require_rank(const std::string& op, const Var& a, std::size_t rank) {
  if (a.shape().size() != rank)
    shape_fail(op, "expected rank " + std::to_string(rank) + ", got " + shape_str(a.shape()));
}

// Unfolds one C x H x W image into [C*k*k, Ho*Wo] columns.
void im2col(const float* img, std::size_t c, std::size_t h, std::size_t w, std::size_t k, std::size_t pad,
            std::size_t ho, std::size_t wo, float* cols) {
  const auto ih = static_cast<std::ptrdiff_t>(h);
  const auto iw = static_cast<std::ptrdiff_t>(w);
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t ki = 0; ki < k; ++ki) {
      for (std::size_t kj = 0; kj < k; ++kj) {
        float* row = cols + ((ch * k + ki) * k + kj) * ho * wo;
        const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(kj) - static_cast<std::ptrdiff_t>(pad);
        const std::ptrdiff_t x_lo = std::max<std::ptrdiff_t>(0, -dx);
        const std::ptrdiff_t x_hi = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(wo), iw - dx);
        for (std::size_t oy = 0; oy < ho; ++oy) {
          float* out = row + oy * wo;
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy + ki) - static_cast<std::ptrdiff_t>(pad);
          if (iy < 0 || iy >= ih || x_lo >= x_hi) {
            std::fill(out, out + wo, 0.0f);
            continue;
          }
          const float* src = img + (ch * h + static_cast<std::size_t>(iy)) * w;
          std::fill(out, out + x_lo, 0.0f);
          for (std::ptrdiff_t ox = x_lo; ox < x_hi; ++ox) out[ox] = src[ox + dx];
          std::fill(out + x_hi, out + wo, 0.0f);
        }
      }
    }
  }
}

// Adjoint of im2col: scatters-adds columns back into the image.
void col2im(const float* cols, std::size_t c, std::size_t h, std::size_t w, std::size_t k, std::size_t pad,
            std::size_t ho, std::size_t wo, float* img) {
  const auto ih = static_cast<std::ptrdiff_t>(h);
  const auto iw = static_cast<std::ptrdiff_t>(w);
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t ki = 0; ki < k; ++ki) {
      for (std::size_t kj = 0; kj < k; ++kj) {
        const float* row = cols + ((ch * k + ki) * k + kj) * ho * wo;
        const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(kj) - static_cast<std::ptrdiff_t>(pad);
        const std::ptrdiff_t x_lo = std::max<std::ptrdiff_t>(0, -dx);
        const std::ptrdiff_t x_hi = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(wo), iw - dx);
        for (std::size_t oy = 0; oy < ho; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy + ki) - static_cast<std::ptrdiff_t>(pad);
          if (iy < 0 || iy >= ih) continue;
          const float* in = row + oy * wo;
          float* dst = img + (ch * h + static_cast<std::size_t>(iy)) * w;
          for (std::ptrdiff_t ox = x_lo; ox < x_hi; ++ox) dst[ox + dx] += in[ox];
        }
      }
    }
  }
}

}  // namespace

Var add(Var a, Var b) {
  require_same("add", a, b);
  Tensor out = a.value();
  const float* pb = b.value().ptr();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] += pb[i];
  return a.graph().record("add", std::move(out), {a, b}, [a, b](Graph& g, const Tensor& go) {
    g.accumulate(a, go);
    g.accumulate(b, go);
  });
}

Var sub(Var a, Var b) {
  require_same("sub", a, b);
  Tensor out = a.value();
  const float* pb = b.value().ptr();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] -= pb[i];
  return a.graph().record("sub", std::move(out), {a, b}, [a, b](Graph& g, const Tensor& go) {
    g.accumulate(a, go);
    if (b.requires_grad()) {
      Tensor neg = go;
      for (auto& v : neg.data()) v = -v;
      g.accumulate(b, neg);
    }
  });
}

Var mul(Var a, Var b) {
  require_same("mul", a, b);
  Tensor out = a.value();
  const float* pb = b.value().ptr();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= pb[i];
  return a.graph().record("mul", std::move(out), {a, b}, [a, b](Graph& g, const Tensor& go) {
    if (a.requires_grad()) {
      Tensor da = go;
      for (std::size_t i = 0; i < da.numel(); ++i) da[i] *= b.value()[i];
      g.accumulate(a, da);
    }
    if (b.requires_grad()) {
      Tensor db = go;
      for (std::size_t i = 0; i < db.numel(); ++i) db[i] *= a.value()[i];
      g.accumulate(b, db);
    }
  });
}

Var scale(Var a, float s) {
  Tensor out = a.value();
  for (auto& v : out.data()) v *= s;
  return a.graph().record("scale", std::move(out), {a}, [a, s](Graph& g, const Tensor& go) {
    Tensor da = go;
    for (auto& v : da.data()) v *= s;
    g.accumulate(a, da);
  });
}

Var sum(Var a) {
  double acc = 0.0;
  for (float v : a.value().data()) acc += v;
  return a.graph().record("sum", Tensor::scalar(static_cast<float>(acc)), {a}, [a](Graph& g, const Tensor& go) {
    g.accumulate(a, Tensor(a.shape(), go[0]));
  });
}

Var matmul(Var a, Var b) {
  require_rank("matmul", a, 2);
  require_rank("matmul", b, 2);
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  if (b.shape()[0] != k) shape_fail("matmul", shape_str(a.shape()) + " x " + shape_str(b.shape()));
  Tensor out(Shape{m, n});
  MatMap(out.ptr(), m, n).noalias() = ConstMatMap(a.value().ptr(), m, k) * ConstMatMap(b.value().ptr(), k, n);
  return a.graph().record("matmul", std::move(out), {a, b}, [a, b, m, k, n](Graph& g, const Tensor& go) {
    ConstMatMap gm(go.ptr(), m, n);
    if (a.requires_grad()) {
      MatMap(g.grad_buffer(a).ptr(), m, k).noalias() += gm * ConstMatMap(b.value().ptr(), k, n).transpose();
    }
    if (b.requires_grad()) {
      MatMap(g.grad_buffer(b).ptr(), k, n).noalias() += ConstMatMap(a.value().ptr(), m, k).transpose() * gm;
    }
  });
}

Var linear(Var x, Var w, std::optional<Var> b) {
  require_rank("linear", x, 2);
  require_rank("linear", w, 2);
  const std::size_t batch = x.shape()[0], in = x.shape()[1], out_f = w.shape()[0];
  if (w.shape()[1] != in) shape_fail("linear", "input " + shape_str(x.shape()) + " vs weight " + shape_str(w.shape()));
  if (b && b->shape() != Shape{out_f})
    shape_fail("linear", "bias " + shape_str(b->shape()) + " vs weight " + shape_str(w.shape()));

  Tensor out(Shape{batch, out_f});
  MatMap y(out.ptr(), batch, out_f);
  y.noalias() = ConstMatMap(x.value().ptr(), batch, in) * ConstMatMap(w.value().ptr(), out_f, in).transpose();
  if (b) {
    const float* bp = b->value().ptr();
    for (std::size_t r = 0; r < batch; ++r)
      for (std::size_t c = 0; c < out_f; ++c) y(r, c) += bp[c];
  }
  std::vector<Var> inputs{x, w};
  if (b) inputs.push_back(*b);
  return x.graph().record("linear", std::move(out), inputs, [x, w, b, batch, in, out_f](Graph& g, const Tensor& go) {
    ConstMatMap gm(go.ptr(), batch, out_f);
    if (x.requires_grad())
      MatMap(g.grad_buffer(x).ptr(), batch, in).noalias() += gm * ConstMatMap(w.value().ptr(), out_f, in);
    if (w.requires_grad())
      MatMap(g.grad_buffer(w).ptr(), out_f, in).noalias() +=
          gm.transpose() * ConstMatMap(x.value().ptr(), batch, in);
    if (b && b->requires_grad()) {
      float* db = g.grad_buffer(*b).ptr();
      for (std::size_t r = 0; r < batch; ++r)
        for (std::size_t c = 0; c < out_f; ++c) db[c] += gm(r, c);
    }
  });
}

Var conv2d(Var x, Var w, std::optional<Var> b, std::size_t padding) {
  require_rank("conv2d", x, 4);
  require_rank("conv2d", w, 4);
  const auto& xs = x.shape();
  const auto& ws = w.shape();
  const std::size_t batch = xs[0], c = xs[1], h = xs[2], wd = xs[3];
  const std::size_t oc = ws[0], k = ws[2];
  if (ws[1] != c || ws[3] != k)
    shape_fail("conv2d", "input " + shape_str(xs) + " vs weight " + shape_str(ws));
  if (h + 2 * padding < k || wd + 2 * padding < k)
    shape_fail("conv2d", "kernel " + shape_str(ws) + " larger than padded input " + shape_str(xs));
  if (b && b->shape() != Shape{oc})
    shape_fail("conv2d", "bias " + shape_str(b->shape()) + " vs weight " + shape_str(ws));
  const std::size_t ho = h + 2 * padding - k + 1, wo = wd + 2 * padding - k + 1;
  const std::size_t ckk = c * k * k, hw = ho * wo;

  Tensor out(Shape{batch, oc, ho, wo});
  std::vector<float> cols(ckk * hw);
  ConstMatMap wm(w.value().ptr(), oc, ckk);
  for (std::size_t n = 0; n < batch; ++n) {
    im2col(x.value().ptr() + n * c * h * wd, c, h, wd, k, padding, ho, wo, cols.data());
    MatMap y(out.ptr() + n * oc * hw, oc, hw);
    y.noalias() = wm * ConstMatMap(cols.data(), ckk, hw);
    if (b) {
      const float* bp = b->value().ptr();
      for (std::size_t o = 0; o < oc; ++o) y.row(o).array() += bp[o];
    }
  }

  std::vector<Var> inputs{x, w};
  if (b) inputs.push_back(*b);
  return x.graph().record(
      "conv2d", std::move(out), inputs,
      [x, w, b, batch, c, h, wd, oc, k, padding, ho, wo, ckk, hw](Graph& g, const Tensor& go) {
        const bool need_x = x.requires_grad();
        const bool need_w = w.requires_grad();
        std::vector<float> cols(ckk * hw);
        ConstMatMap wm(w.value().ptr(), oc, ckk);
        float* dx = need_x ? g.grad_buffer(x).ptr() : nullptr;
        float* dw = need_w ? g.grad_buffer(w).ptr() : nullptr;
        for (std::size_t n = 0; n < batch; ++n) {
          ConstMatMap gm(go.ptr() + n * oc * hw, oc, hw);
          if (need_w) {
            im2col(x.value().ptr() + n * c * h * wd, c, h, wd, k, padding, ho, wo, cols.data());
            MatMap(dw, oc, ckk).noalias() += gm * ConstMatMap(cols.data(), ckk, hw).transpose();
          }
          if (need_x) {
            MatMap(cols.data(), ckk, hw).noalias() = wm.transpose() * gm;
            col2im(cols.data(), c, h, wd, k, padding, ho, wo, dx + n * c * h * wd);
          }
        }
        if (b && b->requires_grad()) {
          float* db = g.grad_buffer(*b).ptr();
          for (std::size_t n = 0; n < batch; ++n)
            for (std::size_t o = 0; o < oc; ++o) {
              const float* row = go.ptr() + (n * oc + o) * hw;
              float acc = 0.0f;
              for (std::size_t i = 0; i < hw; ++i) acc += row[i];
              db[o] += acc;
            }
        }
      });
}

Var relu(Var a) {
  Tensor out = a.value();
  for (auto& v : out.data()) v = v > 0.0f ? v : 0.0f;
  return a.graph().record("relu", std::move(out), {a}, [a](Graph& g, const Tensor& go) {
    Tensor& da = g.grad_buffer(a);
    const float* xv = a.value().ptr();
    for (std::size_t i = 0; i < da.numel(); ++i)
      if (xv[i] > 0.0f) da[i] += go[i];
  });
}

Var max_pool2d(Var x, std::size_t k) {
  require_rank("max_pool2d", x, 4);
  const auto& xs = x.shape();
  if (k == 0 || xs[2] < k || xs[3] < k) shape_fail("max_pool2d", "window " + std::to_string(k) + " on " + shape_str(xs));
  const std::size_t planes = xs[0] * xs[1], h = xs[2], w = xs[3];
  const std::size_t ho = h / k, wo = w / k;
  Tensor out(Shape{xs[0], xs[1], ho, wo});
  auto argmax = std::make_shared<std::vector<std::uint32_t>>(out.numel());
  const float* src = x.value().ptr();
  for (std::size_t p = 0; p < planes; ++p) {
    const float* plane = src + p * h * w;
    for (std::size_t oy = 0; oy < ho; ++oy)
      for (std::size_t ox = 0; ox < wo; ++ox) {
        std::size_t best = (oy * k) * w + ox * k;
        for (std::size_t i = 0; i < k; ++i)
          for (std::size_t j = 0; j < k; ++j) {
            const std::size_t idx = (oy * k + i) * w + ox * k + j;
            if (plane[idx] > plane[best]) best = idx;
          }
        const std::size_t o = (p * ho + oy) * wo + ox;
        out[o] = plane[best];
        (*argmax)[o] = static_cast<std::uint32_t>(best);
      }
  }
  return x.graph().record("max_pool2d", std::move(out), {x}, [x, argmax, planes, h, w, ho, wo](Graph& g, const Tensor& go) {
    float* dx = g.grad_buffer(x).ptr();
    for (std::size_t p = 0; p < planes; ++p)
      for (std::size_t i = 0; i < ho * wo; ++i) {
        const std::size_t o = p * ho * wo + i;
        dx[p * h * w + (*argmax)[o]] += go[o];
      }
  });
}

Var reshape(Var a, Shape shape) {
  Tensor out = a.value().reshaped(shape);
  return a.graph().record("reshape", std::move(out), {a}, [a](Graph& g, const Tensor& go) {
    g.accumulate(a, go);
  });
}

Var pad2d(Var x, std::size_t p) {
  require_rank("pad2d", x, 4);
  const auto& xs = x.shape();
  const std::size_t planes = xs[0] * xs[1], h = xs[2], w = xs[3];
  const std::size_t hp = h + 2 * p, wp = w + 2 * p;
  Tensor out(Shape{xs[0], xs[1], hp, wp});
  for (std::size_t pl = 0; pl < planes; ++pl)
    for (std::size_t y = 0; y < h; ++y)
      std::copy_n(x.value().ptr() + (pl * h + y) * w, w, out.ptr() + (pl * hp + y + p) * wp + p);
  return x.graph().record("pad2d", std::move(out), {x}, [x, planes, h, w, hp, wp, p](Graph& g, const Tensor& go) {
    float* dx = g.grad_buffer(x).ptr();
    for (std::size_t pl = 0; pl < planes; ++pl)
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t c = 0; c < w; ++c) dx[(pl * h + y) * w + c] += go[(pl * hp + y + p) * wp + p + c];
  });
}

Var channel_affine(Var x, std::span<const float> scale_c, std::span<const float> shift_c) {
  require_rank("channel_affine", x, 4);
  const auto& xs = x.shape();
  if (scale_c.size() != xs[1] || shift_c.size() != xs[1])
    shape_fail("channel_affine", "channels " + std::to_string(xs[1]) + " vs scale/shift " +
                                     std::to_string(scale_c.size()) + "/" + std::to_string(shift_c.size()));
  const std::size_t n = xs[0], c = xs[1], plane = xs[2] * xs[3];
  Tensor out = x.value();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t ch = 0; ch < c; ++ch) {
      float* p = out.ptr() + (i * c + ch) * plane;
      for (std::size_t j = 0; j < plane; ++j) p[j] = p[j] * scale_c[ch] + shift_c[ch];
    }
  std::vector<float> sc(scale_c.begin(), scale_c.end());
  return x.graph().record("channel_affine", std::move(out), {x}, [x, sc, n, c, plane](Graph& g, const Tensor& go) {
    float* dx = g.grad_buffer(x).ptr();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t ch = 0; ch < c; ++ch) {
        const std::size_t off = (i * c + ch) * plane;
        for (std::size_t j = 0; j < plane; ++j) dx[off + j] += go[off + j] * sc[ch];
      }
  });
}

Var softmax_cross_entropy(Var logits, std::span<const Label> labels) {
  require_rank("softmax_cross_entropy", logits, 2);
  const std::size_t batch = logits.shape()[0], classes = logits.shape()[1];
  if (labels.size() != batch)
    shape_fail("softmax_cross_entropy",
               "logits " + shape_str(logits.shape()) + " vs " + std::to_string(labels.size()) + " labels");
  if (batch == 0) shape_fail("softmax_cross_entropy", "empty batch");
  for (Label y : labels)
    if (y < 0 || static_cast<std::size_t>(y) >= classes)
      throw ShapeError("softmax_cross_entropy: label " + std::to_string(y) + " outside [0, " +
                       std::to_string(classes) + ")");

  const float* z = logits.value().ptr();
  double total = 0.0;
  for (std::size_t r = 0; r < batch; ++r) {
    const float* row = z + r * classes;
    const float m = *std::max_element(row, row + classes);
    double s = 0.0;
    for (std::size_t c = 0; c < classes; ++c) s += std::exp(static_cast<double>(row[c]) - m);
    total += static_cast<double>(m) + std::log(s) - static_cast<double>(row[labels[r]]);
  }
  Labels ys(labels.begin(), labels.end());
  return logits.graph().record(
      "softmax_cross_entropy", Tensor::scalar(static_cast<float>(total / static_cast<double>(batch))), {logits},
      [logits, ys = std::move(ys), batch, classes](Graph& g, const Tensor& go) {
        float* dz = g.grad_buffer(logits).ptr();
        const float* z = logits.value().ptr();
        const double scale = static_cast<double>(go[0]) / static_cast<double>(batch);
        std::vector<double> e(classes);
        for (std::size_t r = 0; r < batch; ++r) {
          const float* row = z + r * classes;
          const float m = *std::max_element(row, row + classes);
          double s = 0.0;
          for (std::size_t c = 0; c < classes; ++c) s += (e[c] = std::exp(static_cast<double>(row[c]) - m));
          for (std::size_t c = 0; c < classes; ++c) {
            const double p = e[c] / s - (static_cast<Label>(c) == ys[r] ? 1.0 : 0.0);
            dz[r * classes + c] += static_cast<float>(p * scale);
          }
        }
      });
}

}  // namespace tpap::ops
