#include "tpap/purify.hpp"

#include <algorithm>
#include <cmath>

#include "tpap/attacks.hpp"
#include "tpap/autodiff.hpp"
#include "tpap/error.hpp"
#include "tpap/ops.hpp"

namespace tpap {

void PurifierSpec::validate() const {
  if (!(xi >= 0.0f && xi <= 1.0f)) throw ValidationError("purifier.xi", "must be in [0, 1]");
  if (beta != xi) throw ValidationError("purifier.beta", "single-step purification requires beta == xi");
  if (!(clamp_lo < clamp_hi)) throw ValidationError("purifier.clamp", "range must be non-empty");
}

PurifyTrace purify_batch(const Model& model, const Tensor& batch, const PurifierSpec& spec) {
  spec.validate();
  check_batch_shape(model, batch, "purify_batch");

  PurifyTrace trace;
  const std::size_t n = batch.dim(0);
  if (n == 0) {
    trace.purified = batch;
    return trace;
  }

  // One forward yields both the pre-prediction and the graph whose backward
  // gives the purification direction.
  Graph g;
  Var x = g.leaf(batch, "input", spec.xi != 0.0f);
  Var logits = model.forward(g, x, false);
  trace.pre_labels = predict_labels(logits.value());

  if (spec.xi == 0.0f) {
    trace.purified = batch;
    trace.linf_delta.assign(n, 0.0f);
    return trace;
  }

  Var loss = ops::softmax_cross_entropy(logits, trace.pre_labels);
  const Tensor grad = g.backward(loss).at("input");

  trace.purified = Tensor(batch.shape());
  for (std::size_t i = 0; i < batch.numel(); ++i) {
    const float s = grad[i] > 0.0f ? 1.0f : (grad[i] < 0.0f ? -1.0f : 0.0f);
    float v = std::min(std::max(batch[i] + spec.beta * s, spec.clamp_lo), spec.clamp_hi);
    // x + beta rounds to nearest and may land an ulp beyond the radius; step
    // back towards x so that |x_pur - x| <= xi holds exactly.
    while (std::fabs(static_cast<double>(v) - static_cast<double>(batch[i])) > static_cast<double>(spec.xi))
      v = std::nextafter(v, batch[i]);
    trace.purified[i] = v;
  }
  trace.linf_delta = linf_per_image(trace.purified, batch);
  return trace;
}

TpapPrediction tpap_predict(const Model& model, const Tensor& batch, const PurifierSpec& spec) {
  TpapPrediction out;
  out.trace = purify_batch(model, batch, spec);
  if (spec.xi == 0.0f) {
    out.trace.post_labels = out.trace.pre_labels;
  } else {
    out.trace.post_labels = predict_labels(forward_logits(model, out.trace.purified));
  }
  out.labels = out.trace.post_labels;
  return out;
}

}  // namespace tpap
