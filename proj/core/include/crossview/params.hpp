#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "crossview/tensor.hpp"

namespace crossview::pooling {

using numcore::Vec;

enum class PoolMode { avg, att };
const char* to_string(PoolMode m);
PoolMode pool_mode_from_string(const std::string& s);

// single-logit FC scorer: logit_k = w . g_k + b
struct AttentionScorer {
  Vec w;
  double b = 0.0;
};

}  // namespace crossview::pooling

namespace crossview::align {

using numcore::Mat;
using numcore::Vec;

// identity W / zero b at init, so training starts from the frozen features
struct AdapterParams {
  Mat W;  // d_in x d_in
  Vec b;
};

struct HeadParams {
  Mat W1;  // d_out x d_in
  Vec b1;
  Mat W2;  // d_out x d_out
  Vec b2;
  Vec ln_gain;
  Vec ln_bias;
  double dropout_rate = 0.1;
};

struct ModelParams {
  AdapterParams adapter;
  HeadParams head;
  pooling::AttentionScorer scorer;

  std::size_t d_in() const { return adapter.W.rows; }
  std::size_t d_out() const { return head.W1.rows; }
};

ModelParams init_params(std::size_t d_in, std::size_t d_out, std::uint64_t seed);

// Fixed tensor order shared by the optimizer and the checkpoint layout.
struct TensorView {
  const char* name;
  double* data;
  std::size_t rows, cols;
  std::size_t count() const { return rows * cols; }
};
std::vector<TensorView> tensor_views(ModelParams& p);
std::size_t param_count(const ModelParams& p);
Vec flatten_params(const ModelParams& p);
void unflatten_params(ModelParams& p, const Vec& flat);

}  // namespace crossview::align
