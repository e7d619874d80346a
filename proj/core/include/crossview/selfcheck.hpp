#pragma once

#include <cstdint>

#include "crossview/gradcheck.hpp"

namespace crossview::selfcheck {

struct SuiteConfig {
  std::size_t configs = 100;
  std::uint64_t seed = 0;
  double tol = 1e-4;
  double h = 1e-6;
};

struct SuiteResult {
  std::size_t configs = 0;
  std::size_t failures = 0;
  double max_rel_err = 0.0;
  std::size_t worst_config = 0;
  double seconds = 0.0;
  bool pass() const { return failures == 0; }
};

// Random model/batch configurations; the analytic gradient comes from the
// exact recorded graph the training loop uses, the numeric side from central
// differences through the plain forward path. Dropout is off throughout.
SuiteResult gradient_suite(const SuiteConfig& cfg);

}  // namespace crossview::selfcheck
