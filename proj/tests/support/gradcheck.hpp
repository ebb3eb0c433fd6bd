#pragma once

// Finite-difference gradient check against the double-precision reference
// forward. Coordinates whose +-h probes change a ReLU on/off state or a
// pooling argmax are skipped: the loss is not differentiable across them.

#include <cmath>
#include <string>

#include "reference.hpp"
#include "tpap/autodiff.hpp"
#include "tpap/nn.hpp"

namespace tpap::testing {

struct GradCheckStats {
  std::size_t checked = 0;
  std::size_t skipped_kink = 0;
  std::size_t skipped_small = 0;
  std::size_t failures = 0;
  double max_rel = 0.0;
  std::string worst;
};

inline double rel_error(double a, double n) {
  const double d = std::max(std::fabs(a), std::fabs(n));
  return d == 0.0 ? 0.0 : std::fabs(a - n) / d;
}

inline void compare(const std::string& what, const Tensor& analytic, const Tensor& numeric,
                    const std::vector<bool>& kink, double tol, double floor, GradCheckStats& s) {
  for (std::size_t i = 0; i < analytic.numel(); ++i) {
    if (kink[i]) {
      ++s.skipped_kink;
      continue;
    }
    if (std::fabs(analytic[i]) <= floor) {
      ++s.skipped_small;
      continue;
    }
    ++s.checked;
    const double r = rel_error(analytic[i], numeric[i]);
    if (r > s.max_rel) {
      s.max_rel = r;
      s.worst = what + "[" + std::to_string(i) + "] analytic " + std::to_string(analytic[i]) + " numeric " +
                std::to_string(numeric[i]);
    }
    if (r >= tol) ++s.failures;
  }
}

// finite_diff_grad probes coordinate i with calls 2i (x + h) and 2i + 1 (x - h),
// which is how kinks are attributed to coordinates below.
inline GradCheckStats check_model_gradients(const Model& model, const Tensor& x, const Labels& y, float h = 1e-3f,
                                            double tol = 1e-3, double floor = 1e-4) {
  GradCheckStats s;
  const Architecture& arch = model.arch();
  const std::size_t classes = model.num_classes();
  const std::vector<int> base = ref_forward(arch, model.params(), x).pattern;

  auto fd = [&](const Tensor& at, auto&& eval, std::vector<bool>& kink) {
    kink.assign(at.numel(), false);
    std::size_t call = 0;
    return finite_diff_grad(
        [&](const Tensor& probe) {
          const RefResult r = eval(probe);
          if (r.pattern != base) kink[call / 2] = true;
          ++call;
          return ref_mean_ce(r.logits, classes, y);
        },
        at, h);
  };

  std::vector<bool> kink;
  const Tensor gx = input_gradient(model, x, y);
  const Tensor nx = fd(x, [&](const Tensor& p) { return ref_forward(arch, model.params(), p); }, kink);
  compare("input", gx, nx, kink, tol, floor, s);

  const LossAndGrads lg = parameter_gradients(model, x, y);
  for (const auto& [name, theta] : model.params()) {
    const Tensor nt = fd(
        theta,
        [&](const Tensor& p) {
          ParamMap params = model.params();
          params.at(name) = p;
          return ref_forward(arch, params, x);
        },
        kink);
    compare(name, lg.grads.at(name), nt, kink, tol, floor, s);
  }
  return s;
}

}  // namespace tpap::testing
