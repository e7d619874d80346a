#pragma once

#include <functional>

#include "crossview/tensor.hpp"

namespace crossview::numcore {

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::size_t worst_coord = 0;
  std::size_t checked = 0;
  double tol = 0.0;
  bool pass = true;
};

// Central differences (f(p+h)-f(p-h))/2h per coordinate against a supplied
// analytic gradient. The value function must be deterministic: dropout off or
// its mask pinned. Relative error uses a floored denominator so near-zero
// gradients compare absolutely at scale 1e-4.
GradCheckReport grad_check(const std::function<double(const Vec&)>& value,
                           const Vec& params, const Vec& analytic, double h = 1e-6,
                           double tol = 1e-4);

}  // namespace crossview::numcore
