#include "crossview/tape.hpp"

#include <cmath>

namespace crossview::numcore {

void Tape::backward(NodeId root) {
  if (root >= nodes_.size()) fail(ErrKind::contract, "backward: bad root node");
  if (nodes_[root].val.size() != 1)
    fail(ErrKind::contract, "backward: root must be scalar");
  for (auto& n : nodes_) std::fill(n.grad.begin(), n.grad.end(), 0.0);
  nodes_[root].grad[0] = 1.0;
  for (std::size_t i = nodes_.size(); i-- > 0;)
    if (nodes_[i].back) nodes_[i].back(*this);
}

Tape::NodeId t_affine(Tape& t, Tape::NodeId W, Tape::NodeId b, Tape::NodeId x,
                      std::size_t m, std::size_t n) {
  const Vec& wv = t.val(W);
  const Vec& bv = t.val(b);
  const Vec& xv = t.val(x);
  require_dim(wv.size() == m * n && bv.size() == m && xv.size() == n,
              "affine: shape mismatch");
  Vec y(m);
  for (std::size_t i = 0; i < m; ++i) {
    double acc = bv[i];
    const double* wr = wv.data() + i * n;
    for (std::size_t j = 0; j < n; ++j) acc += wr[j] * xv[j];
    y[i] = acc;
  }
  const Tape::NodeId out = t.size();
  return t.push(std::move(y), [W, b, x, m, n, out](Tape& tp) {
    const Vec& g = tp.grad(out);
    const Vec& wv = tp.val(W);
    const Vec& xv = tp.val(x);
    Vec& gW = tp.grad(W);
    Vec& gb = tp.grad(b);
    Vec& gx = tp.grad(x);
    for (std::size_t i = 0; i < m; ++i) {
      const double gi = g[i];
      gb[i] += gi;
      const double* wr = wv.data() + i * n;
      double* gr = gW.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) {
        gr[j] += gi * xv[j];
        gx[j] += wr[j] * gi;
      }
    }
  });
}

Tape::NodeId t_affine_const(Tape& t, Tape::NodeId W, Tape::NodeId b, const Vec& x,
                            std::size_t m, std::size_t n) {
  const Vec& wv = t.val(W);
  const Vec& bv = t.val(b);
  require_dim(wv.size() == m * n && bv.size() == m && x.size() == n,
              "affine: shape mismatch");
  Vec y(m);
  for (std::size_t i = 0; i < m; ++i) {
    double acc = bv[i];
    const double* wr = wv.data() + i * n;
    for (std::size_t j = 0; j < n; ++j) acc += wr[j] * x[j];
    y[i] = acc;
  }
  const Tape::NodeId out = t.size();
  return t.push(std::move(y), [W, b, x, m, n, out](Tape& tp) {
    const Vec& g = tp.grad(out);
    Vec& gW = tp.grad(W);
    Vec& gb = tp.grad(b);
    for (std::size_t i = 0; i < m; ++i) {
      const double gi = g[i];
      gb[i] += gi;
      double* gr = gW.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) gr[j] += gi * x[j];
    }
  });
}

Tape::NodeId t_gelu(Tape& t, Tape::NodeId x) {
  Vec y = gelu(t.val(x));
  const Tape::NodeId out = t.size();
  return t.push(std::move(y), [x, out](Tape& tp) {
    const Vec& g = tp.grad(out);
    const Vec& xv = tp.val(x);
    Vec& gx = tp.grad(x);
    for (std::size_t i = 0; i < xv.size(); ++i) gx[i] += g[i] * gelu_grad(xv[i]);
  });
}

Tape::NodeId t_layer_norm(Tape& t, Tape::NodeId x, Tape::NodeId gain, Tape::NodeId bias,
                          double eps) {
  const Vec& xv = t.val(x);
  const std::size_t n = xv.size();
  Vec y = layer_norm(xv, t.val(gain), t.val(bias), eps);
  // recompute the normalized coordinates once for the closure
  double mu = 0.0;
  for (double v : xv) mu += v;
  mu /= static_cast<double>(n);
  double var = 0.0;
  for (double v : xv) var += (v - mu) * (v - mu);
  var /= static_cast<double>(n);
  const double inv = 1.0 / std::sqrt(var + eps);
  Vec xhat(n);
  for (std::size_t i = 0; i < n; ++i) xhat[i] = (xv[i] - mu) * inv;
  const Tape::NodeId out = t.size();
  return t.push(std::move(y), [x, gain, bias, xhat, inv, n, out](Tape& tp) {
    const Vec& g = tp.grad(out);
    const Vec& gv = tp.val(gain);
    Vec& gx = tp.grad(x);
    Vec& ggain = tp.grad(gain);
    Vec& gbias = tp.grad(bias);
    double mean_gh = 0.0, mean_ghx = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double gh = g[i] * gv[i];
      mean_gh += gh;
      mean_ghx += gh * xhat[i];
    }
    mean_gh /= static_cast<double>(n);
    mean_ghx /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double gh = g[i] * gv[i];
      gx[i] += (gh - mean_gh - xhat[i] * mean_ghx) * inv;
      ggain[i] += g[i] * xhat[i];
      gbias[i] += g[i];
    }
  });
}

Tape::NodeId t_l2_normalize(Tape& t, Tape::NodeId x) {
  const Vec& xv = t.val(x);
  const double nrm = norm2(xv);
  Vec y = l2_normalize(xv);
  const Tape::NodeId out = t.size();
  return t.push(std::move(y), [x, nrm, out](Tape& tp) {
    const Vec& g = tp.grad(out);
    const Vec& y = tp.val(out);
    Vec& gx = tp.grad(x);
    double gy = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) gy += g[i] * y[i];
    for (std::size_t i = 0; i < y.size(); ++i) gx[i] += (g[i] - y[i] * gy) / nrm;
  });
}

Tape::NodeId t_softmax(Tape& t, Tape::NodeId x) {
  Vec y = softmax(t.val(x));
  const Tape::NodeId out = t.size();
  return t.push(std::move(y), [x, out](Tape& tp) {
    const Vec& g = tp.grad(out);
    const Vec& y = tp.val(out);
    Vec& gx = tp.grad(x);
    double gy = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) gy += g[i] * y[i];
    for (std::size_t i = 0; i < y.size(); ++i) gx[i] += y[i] * (g[i] - gy);
  });
}

Tape::NodeId t_dropout(Tape& t, Tape::NodeId x, double rate, std::uint64_t seed,
                       bool training) {
  const Vec& xv = t.val(x);
  Vec mask = training ? dropout_mask(xv.size(), rate, seed) : Vec(xv.size(), 1.0);
  if (!training && (rate < 0.0 || rate >= 1.0))
    fail(ErrKind::parameter, "dropout: rate must be in [0,1)");
  Vec y = apply_mask(xv, mask);
  const Tape::NodeId out = t.size();
  return t.push(std::move(y), [x, mask, out](Tape& tp) {
    const Vec& g = tp.grad(out);
    Vec& gx = tp.grad(x);
    for (std::size_t i = 0; i < mask.size(); ++i) gx[i] += g[i] * mask[i];
  });
}

Tape::NodeId t_add(Tape& t, Tape::NodeId a, Tape::NodeId b) {
  const Vec& av = t.val(a);
  const Vec& bv = t.val(b);
  require_dim(av.size() == bv.size(), "add: length mismatch");
  Vec y(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) y[i] = av[i] + bv[i];
  const Tape::NodeId out = t.size();
  return t.push(std::move(y), [a, b, out](Tape& tp) {
    const Vec& g = tp.grad(out);
    Vec& ga = tp.grad(a);
    Vec& gb = tp.grad(b);
    for (std::size_t i = 0; i < g.size(); ++i) {
      ga[i] += g[i];
      gb[i] += g[i];
    }
  });
}

Tape::NodeId t_add_broadcast(Tape& t, Tape::NodeId v, Tape::NodeId s) {
  const Vec& vv = t.val(v);
  const Vec& sv = t.val(s);
  require_dim(sv.size() == 1, "add_broadcast: scalar operand must have size 1");
  Vec y(vv.size());
  for (std::size_t i = 0; i < vv.size(); ++i) y[i] = vv[i] + sv[0];
  const Tape::NodeId out = t.size();
  return t.push(std::move(y), [v, s, out](Tape& tp) {
    const Vec& g = tp.grad(out);
    Vec& gv = tp.grad(v);
    Vec& gs = tp.grad(s);
    for (std::size_t i = 0; i < g.size(); ++i) {
      gv[i] += g[i];
      gs[0] += g[i];
    }
  });
}

Tape::NodeId t_dot_const(Tape& t, Tape::NodeId a, const Vec& c) {
  const Vec& av = t.val(a);
  require_dim(av.size() == c.size(), "dot: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) s += av[i] * c[i];
  const Tape::NodeId out = t.size();
  return t.push(Vec{s}, [a, c, out](Tape& tp) {
    const double g = tp.grad(out)[0];
    Vec& ga = tp.grad(a);
    for (std::size_t i = 0; i < c.size(); ++i) ga[i] += g * c[i];
  });
}

Tape::NodeId t_pack(Tape& t, const std::vector<Tape::NodeId>& scalars) {
  Vec y(scalars.size());
  for (std::size_t k = 0; k < scalars.size(); ++k) {
    require_dim(t.val(scalars[k]).size() == 1, "pack: operands must be scalars");
    y[k] = t.val(scalars[k])[0];
  }
  const Tape::NodeId out = t.size();
  return t.push(std::move(y), [scalars, out](Tape& tp) {
    const Vec& g = tp.grad(out);
    for (std::size_t k = 0; k < scalars.size(); ++k) tp.grad(scalars[k])[0] += g[k];
  });
}

Tape::NodeId t_weighted_sum(Tape& t, Tape::NodeId weights, const std::vector<Vec>& rows) {
  const Vec& wv = t.val(weights);
  require_dim(wv.size() == rows.size() && !rows.empty(), "weighted_sum: shape mismatch");
  const std::size_t d = rows[0].size();
  Vec y(d, 0.0);
  for (std::size_t k = 0; k < rows.size(); ++k) {
    require_dim(rows[k].size() == d, "weighted_sum: ragged rows");
    for (std::size_t j = 0; j < d; ++j) y[j] += wv[k] * rows[k][j];
  }
  const Tape::NodeId out = t.size();
  return t.push(std::move(y), [weights, rows, out](Tape& tp) {
    const Vec& g = tp.grad(out);
    Vec& gw = tp.grad(weights);
    for (std::size_t k = 0; k < rows.size(); ++k) {
      double acc = 0.0;
      for (std::size_t j = 0; j < g.size(); ++j) acc += rows[k][j] * g[j];
      gw[k] += acc;
    }
  });
}

}  // namespace crossview::numcore
