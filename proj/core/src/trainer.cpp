#include "crossview/trainer.hpp"

#include <cmath>
#include <fstream>
#include <numeric>

#include "crossview/ops.hpp"
#include "crossview/pooling.hpp"
#include "crossview/rng.hpp"

#include "json.hpp"

namespace crossview::trainer {

KeyQueue::KeyQueue(std::size_t capacity, std::size_t dim)
    : capacity_(capacity), dim_(dim) {
  if (dim_ == 0) fail(ErrKind::dimension, "key queue: dim must be >= 1");
}

void KeyQueue::push_batch(const std::vector<Vec>& keys) {
  for (const Vec& k : keys) {
    if (k.size() != dim_)
      fail(ErrKind::dimension, "key queue: key dim " + std::to_string(k.size()) +
                                   " does not match queue dim " + std::to_string(dim_));
    q_.push_back(k);
  }
  while (q_.size() > capacity_) q_.pop_front();
}

std::vector<Vec> KeyQueue::snapshot() const { return {q_.begin(), q_.end()}; }

namespace {

void check_nce_inputs(const std::vector<Vec>& anchors, const std::vector<Vec>& positives,
                      const std::vector<Vec>& extra, double tau) {
  if (tau <= 0.0) fail(ErrKind::parameter, "info_nce: tau must be positive");
  const std::size_t b = anchors.size();
  if (b < 1) fail(ErrKind::parameter, "info_nce: need at least one pair");
  if (positives.size() != b)
    fail(ErrKind::dimension, "info_nce: anchor/positive count mismatch");
  const std::size_t d = anchors[0].size();
  if (d == 0) fail(ErrKind::dimension, "info_nce: empty embeddings");
  auto check_rows = [&](const std::vector<Vec>& rows, const char* what) {
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].size() != d)
        fail(ErrKind::dimension, std::string("info_nce: ") + what + " " +
                                     std::to_string(i) + " has wrong dim");
      if (!numcore::is_unit(rows[i]))
        fail(ErrKind::contract, std::string("info_nce: ") + what + " " +
                                    std::to_string(i) + " is not unit norm");
    }
  };
  check_rows(anchors, "anchor");
  check_rows(positives, "positive");
  check_rows(extra, "extra key");
}

// Shared core. The softmax runs over queries[i] against every key; the
// positive key for query i is keys[i]. probs, when given, receives one row of
// softmax weights per query.
double nce_core(const std::vector<const Vec*>& queries, const std::vector<const Vec*>& keys,
                double tau, std::vector<Vec>* probs) {
  const std::size_t b = queries.size();
  const std::size_t j_count = keys.size();
  double total = 0.0;
  if (probs) probs->assign(b, Vec());
  for (std::size_t i = 0; i < b; ++i) {
    Vec z(j_count);
    for (std::size_t j = 0; j < j_count; ++j)
      z[j] = numcore::dot(*queries[i], *keys[j]) / tau;
    const double lse = numcore::log_sum_exp(z);
    total += lse - z[i];
    if (probs) {
      Vec p(j_count);
      for (std::size_t j = 0; j < j_count; ++j) p[j] = std::exp(z[j] - lse);
      (*probs)[i] = std::move(p);
    }
  }
  return total / static_cast<double>(b);
}

void split_roles(const std::vector<Vec>& anchors, const std::vector<Vec>& positives,
                 const std::vector<Vec>& extra, LossForm form,
                 std::vector<const Vec*>& queries, std::vector<const Vec*>& keys) {
  queries.clear();
  keys.clear();
  if (form == LossForm::moco) {
    for (const Vec& a : anchors) queries.push_back(&a);
    for (const Vec& p : positives) keys.push_back(&p);
    for (const Vec& e : extra) keys.push_back(&e);
  } else {
    // verbatim form: the pooled ground side queries the batch anchors
    for (const Vec& p : positives) queries.push_back(&p);
    for (const Vec& a : anchors) keys.push_back(&a);
  }
}

}  // namespace

double info_nce(const std::vector<Vec>& anchors, const std::vector<Vec>& positives,
                const std::vector<Vec>& extra_keys, double tau, LossForm form) {
  check_nce_inputs(anchors, positives, extra_keys, tau);
  std::vector<const Vec*> queries, keys;
  split_roles(anchors, positives, extra_keys, form, queries, keys);
  return nce_core(queries, keys, tau, nullptr);
}

Tape::NodeId t_info_nce(Tape& t, const std::vector<Tape::NodeId>& anchors,
                        const std::vector<Tape::NodeId>& positives,
                        const std::vector<Vec>& extra_keys, double tau, LossForm form) {
  std::vector<Vec> a_vals, p_vals;
  a_vals.reserve(anchors.size());
  p_vals.reserve(positives.size());
  for (auto id : anchors) a_vals.push_back(t.val(id));
  for (auto id : positives) p_vals.push_back(t.val(id));
  check_nce_inputs(a_vals, p_vals, extra_keys, tau);

  std::vector<const Vec*> queries, keys;
  split_roles(a_vals, p_vals, extra_keys, form, queries, keys);
  const double loss = nce_core(queries, keys, tau, nullptr);

  // gradient flows to every live query and key node; extra keys stay frozen
  const std::vector<Tape::NodeId> query_ids = form == LossForm::moco ? anchors : positives;
  const std::vector<Tape::NodeId> key_ids = form == LossForm::moco ? positives : anchors;
  const std::vector<Vec> frozen = form == LossForm::moco ? extra_keys : std::vector<Vec>();
  const std::size_t out = t.size();
  return t.push(Vec{loss}, [query_ids, key_ids, frozen, tau, out](Tape& tp) {
    const double g = tp.grad(out)[0];
    if (g == 0.0) return;
    const std::size_t b = query_ids.size();
    std::vector<const Vec*> queries, keys;
    for (auto id : query_ids) queries.push_back(&tp.val(id));
    for (auto id : key_ids) keys.push_back(&tp.val(id));
    for (const Vec& e : frozen) keys.push_back(&e);
    std::vector<Vec> probs;
    nce_core(queries, keys, tau, &probs);
    const double coef = g / (static_cast<double>(b) * tau);
    for (std::size_t i = 0; i < b; ++i) {
      Vec& gq = tp.grad(query_ids[i]);
      for (std::size_t j = 0; j < keys.size(); ++j) {
        const double w = probs[i][j] - (j == i ? 1.0 : 0.0);
        if (w == 0.0) continue;
        const Vec& key = *keys[j];
        for (std::size_t d = 0; d < key.size(); ++d) gq[d] += coef * w * key[d];
        if (j < key_ids.size()) {
          Vec& gk = tp.grad(key_ids[j]);
          const Vec& q = *queries[i];
          for (std::size_t d = 0; d < q.size(); ++d) gk[d] += coef * w * q[d];
        }
      }
    }
  });
}

ParamLeaves record_params(Tape& t, align::ModelParams& params) {
  ParamLeaves leaves;
  leaves.d_in = params.d_in();
  leaves.d_out = params.d_out();
  for (const auto& view : align::tensor_views(params))
    leaves.ids.push_back(t.leaf(Vec(view.data, view.data + view.count())));
  return leaves;
}

SampleNodes record_sample(Tape& t, const ParamLeaves& leaves, const Mat& quad,
                          const Vec& sat_feature, pooling::PoolMode pool,
                          double dropout_rate, std::uint64_t dropout_seed) {
  const Tape::NodeId scorer_w = leaves.ids[0], scorer_b = leaves.ids[1],
                     adapter_w = leaves.ids[2], adapter_b = leaves.ids[3],
                     head_w1 = leaves.ids[4], head_b1 = leaves.ids[5],
                     head_w2 = leaves.ids[6], head_b2 = leaves.ids[7],
                     ln_gain = leaves.ids[8], ln_bias = leaves.ids[9];
  SampleNodes out;
  if (pool == pooling::PoolMode::att) {
    std::vector<Tape::NodeId> logits;
    std::vector<Vec> rows;
    rows.reserve(4);
    for (std::size_t k = 0; k < quad.rows; ++k) {
      rows.push_back(quad.row_vec(k));
      logits.push_back(numcore::t_dot_const(t, scorer_w, rows.back()));
    }
    const auto packed = numcore::t_pack(t, logits);
    const auto shifted = numcore::t_add_broadcast(t, packed, scorer_b);
    const auto weights = numcore::t_softmax(t, shifted);
    const auto pooled = numcore::t_weighted_sum(t, weights, rows);
    out.ground = numcore::t_l2_normalize(t, pooled);
  } else {
    // average pooling has no trainable part; the key enters as a leaf
    out.ground = t.leaf(pooling::avg_pool(quad));
  }

  const auto adapted = numcore::t_affine_const(t, adapter_w, adapter_b, sat_feature,
                                               leaves.d_in, leaves.d_in);
  const auto proj =
      numcore::t_affine(t, head_w1, head_b1, adapted, leaves.d_out, leaves.d_in);
  const auto hidden = numcore::t_gelu(t, proj);
  const auto lin2 =
      numcore::t_affine(t, head_w2, head_b2, hidden, leaves.d_out, leaves.d_out);
  const auto dropped = numcore::t_dropout(t, lin2, dropout_rate, dropout_seed, true);
  const auto res = numcore::t_add(t, dropped, proj);
  const auto normed = numcore::t_layer_norm(t, res, ln_gain, ln_bias, align::kLnEps);
  out.sat = numcore::t_l2_normalize(t, normed);
  return out;
}

double lr_at_epoch(const TrainConfig& cfg, std::size_t epoch) {
  if (cfg.lr_step < 1) fail(ErrKind::parameter, "lr_at_epoch: step must be >= 1");
  const auto windows = static_cast<double>(epoch / cfg.lr_step);
  return cfg.lr0 * std::pow(cfg.lr_gamma, windows);
}

void adamw_step(Vec& params, const Vec& grads, OptimizerState& opt, double lr,
                double weight_decay) {
  if (params.size() != grads.size())
    fail(ErrKind::dimension, "adamw_step: parameter/gradient length mismatch");
  if (lr < 0.0) fail(ErrKind::parameter, "adamw_step: lr must be non-negative");
  if (weight_decay < 0.0)
    fail(ErrKind::parameter, "adamw_step: weight decay must be non-negative");
  numcore::require_finite(grads, "gradients");
  const std::size_t n = params.size();
  if (opt.m.empty()) opt.m.assign(n, 0.0);
  if (opt.v.empty()) opt.v.assign(n, 0.0);
  if (opt.m.size() != n || opt.v.size() != n)
    fail(ErrKind::dimension, "adamw_step: optimizer state length mismatch");
  opt.t += 1;
  const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(opt.t));
  const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(opt.t));
  for (std::size_t i = 0; i < n; ++i) {
    opt.m[i] = opt.beta1 * opt.m[i] + (1.0 - opt.beta1) * grads[i];
    opt.v[i] = opt.beta2 * opt.v[i] + (1.0 - opt.beta2) * grads[i] * grads[i];
    const double mhat = opt.m[i] / bc1;
    const double vhat = opt.v[i] / bc2;
    params[i] -= lr * (mhat / (std::sqrt(vhat) + opt.eps) + weight_decay * params[i]);
  }
}

TrainResult train(const store::QuadrupletDataset& ds, const TrainConfig& cfg,
                  const EpochCallback& on_epoch) {
  validate(cfg);
  const std::size_t n = ds.size();
  if (n == 0) fail(ErrKind::parameter, "train: empty dataset");
  if (n < cfg.batch_size)
    fail(ErrKind::parameter, "train: dataset smaller than one batch");
  if (ds.ground.cols == 0 || ds.sat.cols == 0)
    fail(ErrKind::dimension, "train: empty feature matrices");
  const std::size_t d_in = ds.sat.cols;
  const std::size_t d_out = ds.ground.cols;

  align::ModelParams params = align::init_params(d_in, d_out, cfg.seed);
  params.head.dropout_rate = cfg.dropout_rate;
  OptimizerState opt;
  KeyQueue queue(cfg.queue_capacity, d_out);
  numcore::Rng shuffle_rng(numcore::mix_seed(cfg.seed, 1));

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::vector<LossRecord> losses;
  const std::size_t steps = n / cfg.batch_size;
  std::uint64_t sample_counter = 0;

  auto make_ckpt = [&](std::size_t epochs_done) {
    store::ModelCheckpoint ck;
    ck.d_in = d_in;
    ck.d_out = d_out;
    ck.params = params;
    ck.opt = opt;
    ck.cfg = cfg;
    ck.epoch = epochs_done;
    return ck;
  };

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    const double lr = lr_at_epoch(cfg, epoch);
    for (std::size_t step = 0; step < steps; ++step) {
      try {
        Tape tape;
        const ParamLeaves leaves = record_params(tape, params);
        std::vector<Tape::NodeId> s_nodes, g_nodes;
        for (std::size_t bi = 0; bi < cfg.batch_size; ++bi) {
          const std::size_t loc = order[step * cfg.batch_size + bi];
          const SampleNodes sn = record_sample(
              tape, leaves, ds.quad(loc), ds.sat_feature(loc), cfg.pool, cfg.dropout_rate,
              numcore::mix_seed(cfg.seed, 2 + sample_counter));
          ++sample_counter;
          g_nodes.push_back(sn.ground);
          s_nodes.push_back(sn.sat);
        }

        const auto loss_id =
            t_info_nce(tape, s_nodes, g_nodes, queue.snapshot(), cfg.tau, cfg.loss_form);
        tape.backward(loss_id);

        Vec flat = align::flatten_params(params);
        Vec grad;
        grad.reserve(flat.size());
        for (const auto leaf : leaves.ids) {
          const Vec& gv = tape.grad(leaf);
          grad.insert(grad.end(), gv.begin(), gv.end());
        }
        adamw_step(flat, grad, opt, lr, cfg.weight_decay);
        align::unflatten_params(params, flat);

        std::vector<Vec> batch_keys;
        batch_keys.reserve(g_nodes.size());
        for (const auto gid : g_nodes) batch_keys.push_back(tape.val(gid));
        queue.push_batch(batch_keys);

        losses.push_back({epoch, step, tape.val(loss_id)[0], lr});
      } catch (const Error& e) {
        fail(e.kind, "epoch " + std::to_string(epoch) + " batch " + std::to_string(step) +
                         ": " + e.what());
      }
    }
    if (on_epoch) on_epoch(make_ckpt(epoch + 1), losses);
  }
  return {make_ckpt(cfg.epochs), std::move(losses)};
}

void save_loss_log(const std::vector<LossRecord>& log, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) fail(ErrKind::io, "cannot open for writing: " + path.string());
  for (const auto& r : log) {
    nlohmann::json j;
    j["epoch"] = r.epoch;
    j["batch"] = r.batch;
    j["loss"] = r.loss;
    j["lr"] = r.lr;
    f << j.dump() << "\n";
  }
  f.flush();
  if (!f) fail(ErrKind::io, "write failed: " + path.string());
}

}  // namespace crossview::trainer
