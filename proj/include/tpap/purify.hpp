#pragma once

#include <vector>

#include "tpap/nn.hpp"
#include "tpap/tensor.hpp"

namespace tpap {

/// Test-time purification radius. The purification is a single signed step,
/// so the step size always equals the radius.
struct PurifierSpec {
  float xi = 8.0f / 255.0f;
  float beta = 8.0f / 255.0f;
  float clamp_lo = 0.0f;
  float clamp_hi = 1.0f;

  static PurifierSpec radius(float xi) { return PurifierSpec{xi, xi}; }
  /// Throws ValidationError (field "purifier.<name>").
  void validate() const;

  bool operator==(const PurifierSpec&) const = default;
};

struct PurifyTrace {
  Labels pre_labels;              // argmax of the model on the input
  Tensor purified;                // clamp(x + beta * sign(grad), 0, 1), rounded inwards
  Labels post_labels;             // argmax on the purified input (tpap_predict only)
  std::vector<float> linf_delta;  // per-image max |purified - x|
};

/// Pre-predicts labels, then moves every pixel by beta along the sign of the
/// gradient of CE(model(x), pre_labels), i.e. away from the pre-predicted
/// class, and clamps to the pixel range. Ground-truth labels are deliberately
/// not a parameter. Leaves post_labels empty.
PurifyTrace purify_batch(const Model& model, const Tensor& batch, const PurifierSpec& spec);

struct TpapPrediction {
  Labels labels;  // final predictions on the purified batch
  PurifyTrace trace;
};

/// purify_batch followed by classification of the purified images.
TpapPrediction tpap_predict(const Model& model, const Tensor& batch, const PurifierSpec& spec);

}  // namespace tpap
