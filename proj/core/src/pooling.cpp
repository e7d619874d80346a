#include "crossview/pooling.hpp"

#include "crossview/ops.hpp"

namespace crossview::pooling {

namespace {

void check_views(const Mat& views) {
  if (views.rows != 4)
    fail(ErrKind::dimension,
         "pooling expects exactly 4 directional views, got " + std::to_string(views.rows));
  if (views.cols == 0) fail(ErrKind::dimension, "pooling: empty feature dimension");
  for (std::size_t k = 0; k < 4; ++k)
    numcore::require_finite(views.row_vec(k), "view feature");
}

Vec weighted_rows(const Mat& views, const Vec& w) {
  Vec out(views.cols, 0.0);
  for (std::size_t k = 0; k < views.rows; ++k) {
    const double* g = views.row(k);
    for (std::size_t j = 0; j < views.cols; ++j) out[j] += w[k] * g[j];
  }
  return out;
}

}  // namespace

Vec avg_pool(const Mat& views) {
  check_views(views);
  const Vec w(4, 0.25);
  return numcore::l2_normalize(weighted_rows(views, w));
}

Vec att_pool(const Mat& views, const AttentionScorer& scorer) {
  check_views(views);
  if (scorer.w.size() != views.cols)
    fail(ErrKind::dimension, "scorer width " + std::to_string(scorer.w.size()) +
                                 " does not match view dim " + std::to_string(views.cols));
  Vec logits(4);
  for (std::size_t k = 0; k < 4; ++k) {
    const double* g = views.row(k);
    double z = scorer.b;
    for (std::size_t j = 0; j < views.cols; ++j) z += scorer.w[j] * g[j];
    logits[k] = z;
  }
  numcore::require_finite(logits, "attention logits", ErrKind::degenerate);
  const Vec a = numcore::softmax(logits);
  return numcore::l2_normalize(weighted_rows(views, a));
}

Vec pool(const Mat& views, PoolMode mode, const AttentionScorer* scorer) {
  if (mode == PoolMode::att) {
    if (scorer == nullptr) fail(ErrKind::parameter, "attention pooling needs a scorer");
    return att_pool(views, *scorer);
  }
  if (scorer != nullptr)
    fail(ErrKind::parameter, "average pooling takes no scorer");
  return avg_pool(views);
}

Mat pool_dataset(const store::QuadrupletDataset& ds, PoolMode mode,
                 const AttentionScorer* scorer) {
  if (mode == PoolMode::att && scorer == nullptr)
    fail(ErrKind::parameter, "attention pooling needs a scorer");
  if (mode == PoolMode::avg && scorer != nullptr)
    fail(ErrKind::parameter, "average pooling takes no scorer");
  Mat out(ds.size(), ds.ground.cols);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    try {
      const Mat q = ds.quad(i);
      out.set_row(i, mode == PoolMode::att ? att_pool(q, *scorer) : avg_pool(q));
    } catch (const Error& e) {
      fail(e.kind, ds.locations[i].id + ": " + e.what());
    }
  }
  return out;
}

}  // namespace crossview::pooling
