#include "crossview/gradcheck.hpp"

#include <cmath>

namespace crossview::numcore {

GradCheckReport grad_check(const std::function<double(const Vec&)>& value,
                           const Vec& params, const Vec& analytic, double h,
                           double tol) {
  require_dim(params.size() == analytic.size(), "grad_check: gradient length mismatch");
  if (h <= 0.0) fail(ErrKind::parameter, "grad_check: h must be positive");
  GradCheckReport rep;
  rep.tol = tol;
  rep.checked = params.size();
  Vec p = params;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double orig = p[i];
    p[i] = orig + h;
    const double fp = value(p);
    p[i] = orig - h;
    const double fm = value(p);
    p[i] = orig;
    const double fd = (fp - fm) / (2.0 * h);
    const double an = analytic[i];
    const double rel =
        std::fabs(fd - an) / std::max(std::fabs(fd) + std::fabs(an), 1e-4);
    if (rel > rep.max_rel_err) {
      rep.max_rel_err = rel;
      rep.worst_coord = i;
    }
  }
  rep.pass = rep.max_rel_err <= tol;
  return rep;
}

}  // namespace crossview::numcore
