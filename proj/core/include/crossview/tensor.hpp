#pragma once

#include <algorithm>
#include <cstddef>
#include <string>
#include <vector>

#include "crossview/error.hpp"

namespace crossview::numcore {

using Vec = std::vector<double>;

// Row-major dense matrix; rows*cols == data.size() always.
struct Mat {
  std::size_t rows = 0;
  std::size_t cols = 0;
  Vec data;

  Mat() = default;
  Mat(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}

  double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  double* row(std::size_t r) { return data.data() + r * cols; }
  const double* row(std::size_t r) const { return data.data() + r * cols; }

  Vec row_vec(std::size_t r) const { return Vec(row(r), row(r) + cols); }
  void set_row(std::size_t r, const Vec& v) { std::copy(v.begin(), v.end(), row(r)); }
};

inline void require_dim(bool ok, const std::string& msg) {
  if (!ok) fail(ErrKind::dimension, msg);
}

}  // namespace crossview::numcore
