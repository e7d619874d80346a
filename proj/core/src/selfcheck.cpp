#include "crossview/selfcheck.hpp"

#include <chrono>

#include "crossview/model.hpp"
#include "crossview/ops.hpp"
#include "crossview/pooling.hpp"
#include "crossview/rng.hpp"
#include "crossview/trainer.hpp"

namespace crossview::selfcheck {

using numcore::Mat;
using numcore::Rng;
using numcore::Tape;
using numcore::Vec;

namespace {

Vec unit_gauss(Rng& rng, std::size_t d) {
  Vec v(d);
  for (double& x : v) x = rng.gauss();
  return numcore::l2_normalize(v);
}

}  // namespace

SuiteResult gradient_suite(const SuiteConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  SuiteResult res;
  res.configs = cfg.configs;
  for (std::size_t idx = 0; idx < cfg.configs; ++idx) {
    Rng rng(numcore::mix_seed(cfg.seed, idx));
    const std::size_t d_in = 4 + rng.below(5);
    const std::size_t d_out = 4 + rng.below(5);
    const std::size_t batch = 2 + rng.below(3);
    const std::size_t extra_count = rng.below(7);
    const auto pool = (idx % 2 == 0) ? pooling::PoolMode::avg : pooling::PoolMode::att;
    const auto form =
        ((idx / 2) % 2 == 0) ? trainer::LossForm::moco : trainer::LossForm::paper;
    const double tau = 0.1 + 0.4 * rng.uniform();

    align::ModelParams params =
        align::init_params(d_in, d_out, numcore::mix_seed(cfg.seed, 0x1000 + idx));
    params.head.dropout_rate = 0.0;
    // move every tensor off its resting point so no gradient path is trivially zero
    for (double& v : params.adapter.W.data) v += 0.1 * rng.gauss();
    for (double& v : params.adapter.b) v += 0.1 * rng.gauss();
    for (double& v : params.head.b1) v += 0.1 * rng.gauss();
    for (double& v : params.head.b2) v += 0.1 * rng.gauss();
    for (double& v : params.head.ln_gain) v += 0.1 * rng.gauss();
    for (double& v : params.head.ln_bias) v += 0.1 * rng.gauss();
    for (double& v : params.scorer.w) v += 0.1 * rng.gauss();
    params.scorer.b += 0.1 * rng.gauss();

    std::vector<Mat> quads(batch, Mat(4, d_out));
    std::vector<Vec> sats(batch);
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t k = 0; k < 4; ++k) quads[b].set_row(k, unit_gauss(rng, d_out));
      sats[b] = unit_gauss(rng, d_in);
    }
    std::vector<Vec> extra(extra_count);
    for (auto& e : extra) e = unit_gauss(rng, d_out);

    Tape tape;
    const trainer::ParamLeaves leaves = trainer::record_params(tape, params);
    std::vector<Tape::NodeId> s_nodes, g_nodes;
    for (std::size_t b = 0; b < batch; ++b) {
      const trainer::SampleNodes sn =
          trainer::record_sample(tape, leaves, quads[b], sats[b], pool, 0.0, 0);
      g_nodes.push_back(sn.ground);
      s_nodes.push_back(sn.sat);
    }
    const auto loss_id = trainer::t_info_nce(tape, s_nodes, g_nodes, extra, tau, form);
    tape.backward(loss_id);
    Vec analytic;
    for (const auto id : leaves.ids) {
      const Vec& g = tape.grad(id);
      analytic.insert(analytic.end(), g.begin(), g.end());
    }

    const Vec flat = align::flatten_params(params);
    auto value = [&](const Vec& f) {
      align::ModelParams p = params;
      align::unflatten_params(p, f);
      std::vector<Vec> ground(batch), sat_emb(batch);
      for (std::size_t b = 0; b < batch; ++b) {
        ground[b] = pooling::pool(quads[b], pool,
                                  pool == pooling::PoolMode::att ? &p.scorer : nullptr);
        sat_emb[b] = align::sen_embed(p, sats[b], align::Mode::eval, 0);
      }
      return trainer::info_nce(sat_emb, ground, extra, tau, form);
    };

    const numcore::GradCheckReport rep =
        numcore::grad_check(value, flat, analytic, cfg.h, cfg.tol);
    if (rep.max_rel_err > res.max_rel_err) {
      res.max_rel_err = rep.max_rel_err;
      res.worst_config = idx;
    }
    if (!rep.pass) ++res.failures;
  }
  res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

}  // namespace crossview::selfcheck
