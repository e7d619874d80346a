#pragma once

#include <cstdint>

#include "crossview/params.hpp"
#include "crossview/tensor.hpp"

namespace crossview::align {

using numcore::Mat;
using numcore::Vec;

constexpr double kLnEps = 1e-5;

enum class Mode { train, eval };

Vec adapter_forward(const AdapterParams& a, const Vec& x);

// proj = W1 x + b1
// z    = dropout(W2 gelu(proj) + b2)
// out  = l2_normalize(layer_norm(z + proj))
// Dropout fires in train mode only; eval is deterministic.
Vec head_forward(const HeadParams& h, const Vec& x, Mode mode, std::uint64_t dropout_seed);

// Satellite branch: frozen feature -> adapter -> head -> unit embedding.
Vec sen_embed(const ModelParams& p, const Vec& sat_feature, Mode mode,
              std::uint64_t dropout_seed);

// One embedding per row; row i uses a seed derived from (seed, i).
Mat sen_embed_all(const ModelParams& p, const Mat& feats, Mode mode, std::uint64_t seed);

}  // namespace crossview::align
