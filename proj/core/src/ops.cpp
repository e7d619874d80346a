#include "crossview/ops.hpp"

#include <cmath>

#include "crossview/rng.hpp"

namespace crossview::numcore {

namespace {
constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;  // 1/sqrt(2*pi)
}  // namespace

Vec affine(const Mat& W, const Vec& b, const Vec& x) {
  require_dim(W.cols == x.size() && W.rows == b.size(), "affine: shape mismatch");
  Vec y(W.rows);
  for (std::size_t i = 0; i < W.rows; ++i) {
    const double* wr = W.row(i);
    double acc = b[i];
    for (std::size_t j = 0; j < W.cols; ++j) acc += wr[j] * x[j];
    y[i] = acc;
  }
  return y;
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); }

Vec gelu(const Vec& x) {
  Vec y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = gelu(x[i]);
  return y;
}

double gelu_grad(double x) {
  // Phi(x) + x*phi(x)
  return 0.5 * (1.0 + std::erf(x * kInvSqrt2)) +
         x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
}

Vec layer_norm(const Vec& x, const Vec& gain, const Vec& bias, double eps) {
  const std::size_t n = x.size();
  if (n < 2) fail(ErrKind::degenerate, "layer_norm: need at least 2 elements");
  if (eps <= 0.0) fail(ErrKind::parameter, "layer_norm: eps must be positive");
  require_dim(gain.size() == n && bias.size() == n, "layer_norm: shape mismatch");
  double mu = 0.0;
  for (double v : x) mu += v;
  mu /= static_cast<double>(n);
  double var = 0.0;  // population variance
  for (double v : x) var += (v - mu) * (v - mu);
  var /= static_cast<double>(n);
  const double inv = 1.0 / std::sqrt(var + eps);
  Vec y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = gain[i] * (x[i] - mu) * inv + bias[i];
  return y;
}

double norm2(const Vec& x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return std::sqrt(s);
}

double dot(const Vec& a, const Vec& b) {
  require_dim(a.size() == b.size(), "dot: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

Vec l2_normalize(const Vec& x) {
  const double n = norm2(x);
  if (n <= 1e-12) fail(ErrKind::normalization, "l2_normalize: near-zero norm");
  Vec y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] / n;
  return y;
}

Vec softmax(const Vec& x) {
  if (x.empty()) fail(ErrKind::parameter, "softmax: empty input");
  double m = x[0];
  for (double v : x) m = std::max(m, v);
  Vec y(x.size());
  double z = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    y[i] = std::exp(x[i] - m);
    z += y[i];
  }
  for (double& v : y) v /= z;
  return y;
}

Vec dropout_mask(std::size_t n, double rate, std::uint64_t seed) {
  if (rate < 0.0 || rate >= 1.0) fail(ErrKind::parameter, "dropout: rate must be in [0,1)");
  Vec mask(n, 1.0);
  if (rate == 0.0) return mask;
  Rng rng(seed);
  const double keep = 1.0 / (1.0 - rate);
  for (std::size_t i = 0; i < n; ++i) mask[i] = rng.uniform() < rate ? 0.0 : keep;
  return mask;
}

Vec apply_mask(const Vec& x, const Vec& mask) {
  require_dim(x.size() == mask.size(), "apply_mask: length mismatch");
  Vec y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] * mask[i];
  return y;
}

double log_sum_exp(const Vec& z) {
  if (z.empty()) fail(ErrKind::parameter, "log_sum_exp: empty input");
  double m = z[0];
  for (double v : z) m = std::max(m, v);
  double s = 0.0;
  for (double v : z) s += std::exp(v - m);
  return m + std::log(s);
}

bool is_unit(const double* x, std::size_t n, double tol) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += x[i] * x[i];
  return std::fabs(std::sqrt(s) - 1.0) <= tol;
}

bool is_unit(const Vec& x, double tol) { return is_unit(x.data(), x.size(), tol); }

void require_finite(const Vec& x, const char* what, ErrKind kind) {
  for (double v : x)
    if (!std::isfinite(v)) fail(kind, std::string(what) + ": non-finite value");
}

}  // namespace crossview::numcore
