#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

#include "advrep/common.hpp"
#include "advrep/rng.hpp"
#include "advrep/tensor.hpp"

namespace advrep {

struct GradCheckResult {
  double max_rel_err = 0.0;
  size_t checked = 0;
  size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

// Central-difference check of an analytic gradient for one tensor. loss_fn
// must recompute the scalar loss from current tensor values (fresh forward,
// no tape needed). analytic is a copy of the gradient produced by one
// backward pass at the unperturbed point. Checks up to max_checks elements
// (all if the tensor is small, a seeded sample otherwise).
template <typename T>
GradCheckResult gradcheck(TensorT<T>& param,
                          const std::function<double()>& loss_fn,
                          const std::vector<T>& analytic, double eps,
                          size_t max_checks, Rng& rng) {
  ADVREP_CHECK(analytic.size() == param.numel(), "gradcheck size mismatch");
  const size_t n = param.numel();
  std::vector<size_t> idx;
  if (n <= max_checks) {
    idx.resize(n);
    for (size_t i = 0; i < n; ++i) idx[i] = i;
  } else {
    idx.reserve(max_checks);
    for (size_t i = 0; i < max_checks; ++i)
      idx.push_back(static_cast<size_t>(rng.below(n)));
  }

  GradCheckResult r;
  for (size_t i : idx) {
    const T saved = param.data()[i];
    param.data()[i] = saved + static_cast<T>(eps);
    const double lp = loss_fn();
    param.data()[i] = saved - static_cast<T>(eps);
    const double lm = loss_fn();
    param.data()[i] = saved;
    const double numeric = (lp - lm) / (2.0 * eps);
    const double a = static_cast<double>(analytic[i]);
    const double rel =
        std::abs(a - numeric) / std::max(1.0, std::abs(a));
    ++r.checked;
    if (rel > r.max_rel_err) {
      r.max_rel_err = rel;
      r.worst_index = i;
      r.worst_analytic = a;
      r.worst_numeric = numeric;
    }
  }
  return r;
}

// Push values away from |v| < threshold so finite differences never straddle
// a piecewise-linear kink.
template <typename T>
void nudge_off_kinks(TensorT<T>& t, T threshold) {
  T* p = t.data();
  for (size_t i = 0; i < t.numel(); ++i) {
    if (std::abs(p[i]) < threshold)
      p[i] = p[i] >= T(0) ? p[i] + T(10) * threshold
                          : p[i] - T(10) * threshold;
  }
}

}  // namespace advrep
