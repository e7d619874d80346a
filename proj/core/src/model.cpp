#include "crossview/model.hpp"

#include "crossview/ops.hpp"
#include "crossview/rng.hpp"

namespace crossview::align {

Vec adapter_forward(const AdapterParams& a, const Vec& x) {
  numcore::require_dim(a.W.cols == x.size(), "adapter width does not match input dim");
  numcore::require_finite(x, "adapter input");
  return numcore::affine(a.W, a.b, x);
}

Vec head_forward(const HeadParams& h, const Vec& x, Mode mode, std::uint64_t dropout_seed) {
  numcore::require_dim(h.W1.cols == x.size(), "head W1 width does not match input dim");
  const std::size_t d = h.W1.rows;
  numcore::require_dim(h.W2.rows == d && h.W2.cols == d, "head W2 must be d_out x d_out");
  numcore::require_dim(h.ln_gain.size() == d && h.ln_bias.size() == d,
                       "layer norm width does not match d_out");
  numcore::require_finite(x, "head input");

  if (h.dropout_rate < 0.0 || h.dropout_rate >= 1.0)
    fail(ErrKind::parameter, "dropout rate must lie in [0,1)");

  const Vec proj = numcore::affine(h.W1, h.b1, x);
  Vec z = numcore::affine(h.W2, h.b2, numcore::gelu(proj));
  if (mode == Mode::train && h.dropout_rate > 0.0) {
    const Vec mask = numcore::dropout_mask(d, h.dropout_rate, dropout_seed);
    z = numcore::apply_mask(z, mask);
  }
  Vec res(d);
  for (std::size_t i = 0; i < d; ++i) res[i] = z[i] + proj[i];
  return numcore::l2_normalize(numcore::layer_norm(res, h.ln_gain, h.ln_bias, kLnEps));
}

Vec sen_embed(const ModelParams& p, const Vec& sat_feature, Mode mode,
              std::uint64_t dropout_seed) {
  return head_forward(p.head, adapter_forward(p.adapter, sat_feature), mode, dropout_seed);
}

Mat sen_embed_all(const ModelParams& p, const Mat& feats, Mode mode, std::uint64_t seed) {
  Mat out(feats.rows, p.d_out());
  for (std::size_t i = 0; i < feats.rows; ++i)
    out.set_row(i, sen_embed(p, feats.row_vec(i), mode, numcore::mix_seed(seed, i)));
  return out;
}

}  // namespace crossview::align
