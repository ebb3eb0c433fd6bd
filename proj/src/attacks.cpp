#include "tpap/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "tpap/error.hpp"

namespace tpap {

AttackSpec AttackSpec::fgsm(float epsilon, bool random_init) {
  AttackSpec s;
  s.kind = Kind::fgsm;
  s.epsilon = epsilon;
  s.alpha = epsilon;
  s.steps = 1;
  s.random_init = random_init;
  return s;
}

AttackSpec AttackSpec::pgd(float epsilon, int steps, float alpha, bool random_init) {
  AttackSpec s;
  s.kind = Kind::pgd;
  s.epsilon = epsilon;
  s.alpha = alpha;
  s.steps = steps;
  s.random_init = random_init;
  return s;
}

void AttackSpec::validate() const {
  if (!(epsilon >= 0.0f && epsilon <= 1.0f)) throw ValidationError("attack.epsilon", "must be in [0, 1]");
  // A zero budget is a valid no-op attack even though its step is then zero.
  if (!(alpha > 0.0f) && !(epsilon == 0.0f && alpha == 0.0f)) throw ValidationError("attack.alpha", "must be positive");
  if (steps < 1) throw ValidationError("attack.steps", "must be at least 1");
  if (kind == Kind::fgsm && steps != 1) throw ValidationError("attack.steps", "fgsm takes exactly one step");
  if (kind == Kind::fgsm && alpha != epsilon) throw ValidationError("attack.alpha", "fgsm requires alpha == epsilon");
  if (!(clamp_lo < clamp_hi)) throw ValidationError("attack.clamp", "range must be non-empty");
}

std::string AttackSpec::describe() const {
  std::ostringstream os;
  if (kind == Kind::fgsm) {
    os << "FGSM(eps=" << epsilon * 255.0f << "/255" << (random_init ? ", rand-init" : "") << ")";
  } else {
    os << "PGD-" << steps << "(eps=" << epsilon * 255.0f << "/255, alpha=" << alpha * 255.0f << "/255"
       << (random_init ? ", rand-init" : "") << ")";
  }
  return os.str();
}

Tensor sign(const Tensor& t) {
  Tensor out(t.shape());
  for (std::size_t i = 0; i < t.numel(); ++i) out[i] = t[i] > 0.0f ? 1.0f : (t[i] < 0.0f ? -1.0f : 0.0f);
  return out;
}

namespace {

float sgn(float v) { return v > 0.0f ? 1.0f : (v < 0.0f ? -1.0f : 0.0f); }

void check_labels_size(const Tensor& batch, std::span<const Label> labels, const char* op) {
  if (batch.rank() == 0 || batch.dim(0) != labels.size())
    throw ShapeError(std::string(op) + ": batch " + shape_str(batch.shape()) + " vs " + std::to_string(labels.size()) +
                     " labels");
}

// x + eps rounds to nearest and may land an ulp outside the ball; step back
// towards the origin so that |v - origin| <= eps holds exactly.
float pull_inside(float v, float origin, float eps) {
  while (std::fabs(static_cast<double>(v) - static_cast<double>(origin)) > static_cast<double>(eps))
    v = std::nextafter(v, origin);
  return v;
}

void random_start(Tensor& x, const Tensor& origin, const AttackSpec& spec, Rng& rng) {
  for (std::size_t i = 0; i < x.numel(); ++i)
    x[i] = pull_inside(std::clamp(origin[i] + rng.uniform(-spec.epsilon, spec.epsilon), spec.clamp_lo, spec.clamp_hi),
                       origin[i], spec.epsilon);
}

// One signed step from `x`, projected onto the epsilon ball around `origin`,
// then onto the pixel box.
void signed_step(Tensor& x, const Tensor& grad, const Tensor& origin, const AttackSpec& spec, float step) {
  for (std::size_t i = 0; i < x.numel(); ++i) {
    float v = x[i] + step * sgn(grad[i]);
    v = std::min(std::max(v, origin[i] - spec.epsilon), origin[i] + spec.epsilon);
    x[i] = pull_inside(std::min(std::max(v, spec.clamp_lo), spec.clamp_hi), origin[i], spec.epsilon);
  }
}

}  // namespace

Tensor fgsm(const Model& model, const Tensor& batch, std::span<const Label> labels, const AttackSpec& spec, Rng* rng) {
  spec.validate();
  if (spec.kind != AttackSpec::Kind::fgsm) throw ValidationError("attack.kind", "fgsm() called with a non-fgsm spec");
  check_labels_size(batch, labels, "fgsm");
  if (spec.epsilon == 0.0f || batch.dim(0) == 0) return batch;

  if (spec.random_init) {
    if (!rng) throw ValidationError("attack.random_init", "random start requires an rng");
    Tensor x = batch;
    random_start(x, batch, spec, *rng);
    signed_step(x, input_gradient(model, x, labels), batch, spec, spec.alpha);
    return x;
  }

  const Tensor grad = input_gradient(model, batch, labels);
  Tensor out(batch.shape());
  for (std::size_t i = 0; i < batch.numel(); ++i)
    out[i] = pull_inside(std::min(std::max(batch[i] + spec.epsilon * sgn(grad[i]), spec.clamp_lo), spec.clamp_hi),
                         batch[i], spec.epsilon);
  return out;
}

Tensor pgd(const Model& model, const Tensor& batch, std::span<const Label> labels, const AttackSpec& spec, Rng& rng) {
  spec.validate();
  if (spec.kind != AttackSpec::Kind::pgd) throw ValidationError("attack.kind", "pgd() called with a non-pgd spec");
  check_labels_size(batch, labels, "pgd");
  if (spec.epsilon == 0.0f || batch.dim(0) == 0) return batch;

  Tensor x = batch;
  if (spec.random_init) random_start(x, batch, spec, rng);
  for (int s = 0; s < spec.steps; ++s) signed_step(x, input_gradient(model, x, labels), batch, spec, spec.alpha);
  return x;
}

Tensor run_attack(const Model& model, const Tensor& batch, std::span<const Label> labels, const AttackSpec& spec,
                  Rng& rng) {
  return spec.kind == AttackSpec::Kind::fgsm ? fgsm(model, batch, labels, spec, &rng)
                                             : pgd(model, batch, labels, spec, rng);
}

std::vector<float> linf_per_image(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape() || a.rank() == 0)
    throw ShapeError("linf_per_image: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  const std::size_t n = a.dim(0);
  const std::size_t per = n ? a.numel() / n : 0;
  std::vector<float> out(n, 0.0f);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < per; ++j) out[i] = std::max(out[i], std::fabs(a[i * per + j] - b[i * per + j]));
  return out;
}

}  // namespace tpap
