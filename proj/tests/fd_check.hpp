#pragma once

// Central finite-difference gradient oracle shared by the tensor, encoder and
// training test suites. Rebuilds the forward graph per evaluation so the tape
// never sees the perturbed values.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "molgsl/tensor.hpp"

namespace fdcheck {

inline double rel_err(double analytic, double numeric) {
  const double scale = std::max({1e-6, std::fabs(analytic), std::fabs(numeric)});
  return std::fabs(analytic - numeric) / scale;
}

// Analytic grad of `forward()` w.r.t. every element of `param`, compared
// against central differences. Returns the worst relative error.
inline double max_grad_err(const std::function<molgsl::Tensor()>& forward,
                           molgsl::Tensor param, double step = 1e-5) {
  using namespace molgsl;
  param.zero_grad();  // params are shared across checks; drop stale accumulation
  Tape tape;
  {
    TapeScope scope(tape);
    Tensor loss = forward();
    tape.backward(loss);
  }
  std::vector<double> analytic = param.has_grad() ? param.grad()
                                                  : std::vector<double>(param.size(), 0.0);
  double worst = 0.0;
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double saved = param.data()[i];
    param.data()[i] = saved + step;
    const double fp = forward().item();
    param.data()[i] = saved - step;
    const double fm = forward().item();
    param.data()[i] = saved;
    const double numeric = (fp - fm) / (2.0 * step);
    worst = std::max(worst, rel_err(analytic[i], numeric));
  }
  param.zero_grad();
  return worst;
}

}  // namespace fdcheck
