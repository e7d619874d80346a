#pragma once

#include "crossview/params.hpp"
#include "crossview/store.hpp"
#include "crossview/tensor.hpp"

namespace crossview::pooling {

using numcore::Mat;
using numcore::Vec;

// Both poolers take the 4 x D block of directional views (N,E,S,W) and return
// a unit vector. att_pool with an all-zero scorer reproduces avg_pool bit for
// bit; keep the shared accumulation order intact when touching either.
Vec avg_pool(const Mat& views);
Vec att_pool(const Mat& views, const AttentionScorer& scorer);

Vec pool(const Mat& views, PoolMode mode, const AttentionScorer* scorer);

// One pooled row per location, same order as ds.locations.
Mat pool_dataset(const store::QuadrupletDataset& ds, PoolMode mode,
                 const AttentionScorer* scorer);

}  // namespace crossview::pooling
