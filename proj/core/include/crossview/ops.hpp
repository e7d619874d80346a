#pragma once

// Forward definitions of the dense primitives. The tape wraps these for
// training; tests and oracles call them directly. All math is 64-bit.

#include <cstdint>

#include "crossview/tensor.hpp"

namespace crossview::numcore {

Vec affine(const Mat& W, const Vec& b, const Vec& x);  // W x + b

double gelu(double x);  // exact erf form, no tanh approximation
Vec gelu(const Vec& x);
double gelu_grad(double x);

Vec layer_norm(const Vec& x, const Vec& gain, const Vec& bias, double eps = 1e-5);

Vec l2_normalize(const Vec& x);
double norm2(const Vec& x);
double dot(const Vec& a, const Vec& b);

Vec softmax(const Vec& x);

// mask entries are 0 or 1/(1-rate); multiply elementwise to apply
Vec dropout_mask(std::size_t n, double rate, std::uint64_t seed);
Vec apply_mask(const Vec& x, const Vec& mask);

double log_sum_exp(const Vec& z);

bool is_unit(const Vec& x, double tol = 1e-6);
bool is_unit(const double* x, std::size_t n, double tol = 1e-6);
void require_finite(const Vec& x, const char* what, ErrKind kind = ErrKind::contract);

}  // namespace crossview::numcore
