#include "crossview/params.hpp"

#include <cmath>

#include "crossview/rng.hpp"

namespace crossview::pooling {

const char* to_string(PoolMode m) { return m == PoolMode::avg ? "avg" : "att"; }

PoolMode pool_mode_from_string(const std::string& s) {
  if (s == "avg") return PoolMode::avg;
  if (s == "att") return PoolMode::att;
  fail(ErrKind::parameter, "unknown pooling mode: " + s);
}

}  // namespace crossview::pooling

namespace crossview::align {

ModelParams init_params(std::size_t d_in, std::size_t d_out, std::uint64_t seed) {
  if (d_in < 1 || d_out < 1) fail(ErrKind::parameter, "init_params: dims must be >= 1");
  ModelParams p;
  p.adapter.W = Mat(d_in, d_in);
  for (std::size_t i = 0; i < d_in; ++i) p.adapter.W.at(i, i) = 1.0;
  p.adapter.b = Vec(d_in, 0.0);

  numcore::Rng rng(seed);
  const double a1 = std::sqrt(6.0 / static_cast<double>(d_in + d_out));
  p.head.W1 = Mat(d_out, d_in);
  for (double& v : p.head.W1.data) v = rng.uniform(-a1, a1);
  p.head.b1 = Vec(d_out, 0.0);
  const double a2 = std::sqrt(6.0 / static_cast<double>(d_out + d_out));
  p.head.W2 = Mat(d_out, d_out);
  for (double& v : p.head.W2.data) v = rng.uniform(-a2, a2);
  p.head.b2 = Vec(d_out, 0.0);
  p.head.ln_gain = Vec(d_out, 1.0);
  p.head.ln_bias = Vec(d_out, 0.0);

  // scorer reads ground views, which live in the output space
  p.scorer.w = Vec(d_out, 0.0);  // zero scorer makes attention pooling start as the mean
  p.scorer.b = 0.0;
  return p;
}

std::vector<TensorView> tensor_views(ModelParams& p) {
  return {
      {"scorer_w", p.scorer.w.data(), 1, p.scorer.w.size()},
      {"scorer_b", &p.scorer.b, 1, 1},
      {"adapter_w", p.adapter.W.data.data(), p.adapter.W.rows, p.adapter.W.cols},
      {"adapter_b", p.adapter.b.data(), 1, p.adapter.b.size()},
      {"head_w1", p.head.W1.data.data(), p.head.W1.rows, p.head.W1.cols},
      {"head_b1", p.head.b1.data(), 1, p.head.b1.size()},
      {"head_w2", p.head.W2.data.data(), p.head.W2.rows, p.head.W2.cols},
      {"head_b2", p.head.b2.data(), 1, p.head.b2.size()},
      {"ln_gain", p.head.ln_gain.data(), 1, p.head.ln_gain.size()},
      {"ln_bias", p.head.ln_bias.data(), 1, p.head.ln_bias.size()},
  };
}

std::size_t param_count(const ModelParams& p) {
  std::size_t n = 0;
  for (const auto& v : tensor_views(const_cast<ModelParams&>(p))) n += v.count();
  return n;
}

Vec flatten_params(const ModelParams& p) {
  Vec flat;
  flat.reserve(param_count(p));
  for (const auto& v : tensor_views(const_cast<ModelParams&>(p)))
    flat.insert(flat.end(), v.data, v.data + v.count());
  return flat;
}

void unflatten_params(ModelParams& p, const Vec& flat) {
  std::size_t off = 0;
  for (auto& v : tensor_views(p)) {
    if (off + v.count() > flat.size())
      fail(ErrKind::dimension, "unflatten_params: flat vector too short");
    std::copy(flat.begin() + off, flat.begin() + off + v.count(), v.data);
    off += v.count();
  }
  if (off != flat.size())
    fail(ErrKind::dimension, "unflatten_params: flat vector length mismatch");
}

}  // namespace crossview::align
