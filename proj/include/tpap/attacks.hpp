#pragma once

#include <span>
#include <string>

#include "tpap/nn.hpp"
#include "tpap/rng.hpp"
#include "tpap/tensor.hpp"

namespace tpap {

/// L-infinity gradient-sign attack configuration. Budgets are in raw pixel
/// units, so 8/255 means eight intensity levels.
struct AttackSpec {
  enum class Kind { fgsm, pgd };

  Kind kind = Kind::fgsm;
  float epsilon = 8.0f / 255.0f;
  float alpha = 8.0f / 255.0f;
  int steps = 1;
  bool random_init = false;
  float clamp_lo = 0.0f;
  float clamp_hi = 1.0f;

  static AttackSpec fgsm(float epsilon, bool random_init = false);
  /// Defaults: alpha = 2/255 with a uniform random start.
  static AttackSpec pgd(float epsilon, int steps, float alpha = 2.0f / 255.0f, bool random_init = true);

  /// Throws ValidationError (field "attack.<name>") on a broken invariant.
  void validate() const;
  std::string describe() const;

  bool operator==(const AttackSpec&) const = default;
};

/// Elementwise sign with sign(0) = 0.
Tensor sign(const Tensor& t);

/// x + epsilon * sign(grad CE(model(x), labels)), clamped to [0,1]. Results
/// that round an ulp outside the epsilon ball are stepped back inside, so
/// |x_adv - x| <= epsilon holds exactly in every mode. With
/// `random_init` the gradient is taken at a uniform random start inside the
/// epsilon ball (requires `rng`) and the result is projected back onto it.
Tensor fgsm(const Model& model, const Tensor& batch, std::span<const Label> labels, const AttackSpec& spec,
            Rng* rng = nullptr);

/// Projected gradient ascent: optional uniform start in [-eps, eps], then
/// `steps` iterations of x <- clamp(project_eps(x + alpha * sign(grad)), 0, 1).
Tensor pgd(const Model& model, const Tensor& batch, std::span<const Label> labels, const AttackSpec& spec, Rng& rng);

/// Dispatches on spec.kind.
Tensor run_attack(const Model& model, const Tensor& batch, std::span<const Label> labels, const AttackSpec& spec,
                  Rng& rng);

/// Per-image max |a - b|.
std::vector<float> linf_per_image(const Tensor& a, const Tensor& b);

}  // namespace tpap
