#include <unistd.h>

#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "crossview/model.hpp"
#include "crossview/ops.hpp"
#include "crossview/pooling.hpp"
#include "crossview/rng.hpp"
#include "crossview/selfcheck.hpp"
#include "crossview/store.hpp"
#include "crossview/trainer.hpp"
#include "doctest.h"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace crossview;
using namespace crossview::trainer;
using numcore::Mat;
using numcore::Rng;
using numcore::Tape;
using numcore::Vec;

namespace {

template <typename F>
ErrKind kind_of(F&& f) {
  try {
    std::forward<F>(f)();
  } catch (const Error& e) {
    return e.kind;
  }
  FAIL("expected a typed error, none was thrown");
  return ErrKind::contract;
}

Vec basis(std::size_t d, std::size_t i) {
  Vec v(d, 0.0);
  v[i] = 1.0;
  return v;
}

std::vector<Vec> random_units(Rng& rng, std::size_t count, std::size_t d) {
  std::vector<Vec> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Vec v(d);
    for (double& x : v) x = rng.gauss();
    out.push_back(numcore::l2_normalize(v));
  }
  return out;
}

Vec fd_grad(const std::function<double(const Vec&)>& f, const Vec& p,
            double h = 1e-6) {
  Vec g(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    Vec hi = p, lo = p;
    hi[i] += h;
    lo[i] -= h;
    g[i] = (f(hi) - f(lo)) / (2.0 * h);
  }
  return g;
}

void check_close(const Vec& a, const Vec& b, double tol) {
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double rel =
        std::fabs(a[i] - b[i]) / std::max(std::fabs(a[i]) + std::fabs(b[i]), 1e-4);
    CAPTURE(i);
    CHECK(rel < tol);
  }
}

struct TempDir {
  fs::path path;
  TempDir() {
    static std::atomic<int> counter{0};
    path = fs::temp_directory_path() /
           ("crossview_trainer_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter++));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

}  // namespace

TEST_SUITE_BEGIN("trainer");

TEST_CASE("mutually orthogonal pairs score the uniform-distribution loss") {
  // every dot product is zero, so each row's softmax is uniform over the keys
  const std::vector<Vec> anchors = {basis(6, 0), basis(6, 1)};
  const std::vector<Vec> positives = {basis(6, 2), basis(6, 3)};
  const double l2 = info_nce(anchors, positives, {}, 0.07, LossForm::moco);
  CHECK(l2 == doctest::Approx(0.6931471805599453).epsilon(1e-12));

  const std::vector<Vec> extra = {basis(6, 4), basis(6, 5)};
  const double l4 = info_nce(anchors, positives, extra, 0.07, LossForm::moco);
  CHECK(l4 == doctest::Approx(std::log(4.0)).epsilon(1e-12));

  // the verbatim form has no extra keys, so its denominator stays at the batch
  const double lp = info_nce(anchors, positives, extra, 0.07, LossForm::paper);
  CHECK(lp == doctest::Approx(0.6931471805599453).epsilon(1e-12));
}

TEST_CASE("a single pair against one distractor gives log(1+exp(-1))") {
  // the positive leads the distractor by exactly tau in similarity
  const double tau = 0.07;
  const std::vector<Vec> anchors = {basis(2, 0)};
  const std::vector<Vec> positives = {Vec{tau, std::sqrt(1.0 - tau * tau)}};
  const std::vector<Vec> extra = {basis(2, 1)};
  const double loss = info_nce(anchors, positives, extra, tau, LossForm::moco);
  CHECK(loss == doctest::Approx(0.31326168751822286).epsilon(1e-12));
}

TEST_CASE("every additional key strictly raises the loss") {
  Rng rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t b = 2 + static_cast<std::size_t>(rng.below(3));
    const std::size_t d = 4 + static_cast<std::size_t>(rng.below(5));
    const auto anchors = random_units(rng, b, d);
    const auto positives = random_units(rng, b, d);
    std::vector<Vec> extra;
    double prev = info_nce(anchors, positives, extra, 0.1, LossForm::moco);
    CHECK(prev >= 0.0);
    for (int add = 0; add < 3; ++add) {
      extra.push_back(random_units(rng, 1, d)[0]);
      const double cur = info_nce(anchors, positives, extra, 0.1, LossForm::moco);
      CHECK(cur > prev);
      prev = cur;
    }
  }
}

TEST_CASE("the verbatim form equals the queue form with roles swapped") {
  Rng rng(18);
  const auto anchors = random_units(rng, 4, 6);
  const auto positives = random_units(rng, 4, 6);
  const auto extra = random_units(rng, 3, 6);
  const double paper = info_nce(anchors, positives, extra, 0.09, LossForm::paper);
  const double swapped = info_nce(positives, anchors, {}, 0.09, LossForm::moco);
  CHECK(paper == doctest::Approx(swapped).epsilon(1e-15));
}

TEST_CASE("perfectly aligned orthogonal pairs push the loss toward zero") {
  const std::vector<Vec> pairs = {basis(4, 0), basis(4, 1)};
  const double loss = info_nce(pairs, pairs, {}, 0.07, LossForm::moco);
  CHECK(loss > 0.0);
  CHECK(loss < 1e-5);
}

TEST_CASE("contrastive loss input validation") {
  const std::vector<Vec> a = {basis(3, 0)};
  const std::vector<Vec> p = {basis(3, 1)};
  CHECK(kind_of([&] { info_nce(a, p, {}, 0.0, LossForm::moco); }) == ErrKind::parameter);
  CHECK(kind_of([&] { info_nce(a, p, {}, -0.1, LossForm::moco); }) == ErrKind::parameter);
  CHECK(kind_of([&] { info_nce({}, {}, {}, 0.07, LossForm::moco); }) == ErrKind::parameter);
  CHECK(kind_of([&] {
          info_nce(a, {basis(3, 1), basis(3, 2)}, {}, 0.07, LossForm::moco);
        }) == ErrKind::dimension);
  CHECK(kind_of([&] { info_nce(a, {basis(4, 1)}, {}, 0.07, LossForm::moco); }) ==
        ErrKind::dimension);
  CHECK(kind_of([&] { info_nce({Vec{0.5, 0.5, 0.0}}, p, {}, 0.07, LossForm::moco); }) ==
        ErrKind::contract);
  CHECK(kind_of([&] { info_nce(a, p, {Vec{2.0, 0.0, 0.0}}, 0.07, LossForm::moco); }) ==
        ErrKind::contract);
}

TEST_CASE("recorded loss node reproduces the plain loss value") {
  Rng rng(19);
  const auto anchors = random_units(rng, 3, 5);
  const auto positives = random_units(rng, 3, 5);
  const auto extra = random_units(rng, 2, 5);
  for (const LossForm form : {LossForm::moco, LossForm::paper}) {
    Tape t;
    std::vector<Tape::NodeId> a_nodes, p_nodes;
    for (const Vec& v : anchors) a_nodes.push_back(t.leaf(v));
    for (const Vec& v : positives) p_nodes.push_back(t.leaf(v));
    const auto id = t_info_nce(t, a_nodes, p_nodes, extra, 0.13, form);
    CHECK(t.val(id)[0] ==
          doctest::Approx(info_nce(anchors, positives, extra, 0.13, form)).epsilon(1e-15));
  }
}

TEST_CASE("recorded loss gradients match finite differences through both roles") {
  Rng rng(20);
  const std::size_t b = 3, d = 5;
  const auto extra = random_units(rng, 2, d);
  Vec p0(2 * b * d);
  for (double& x : p0) x = rng.gauss();
  const double tau = 0.2;

  for (const LossForm form : {LossForm::moco, LossForm::paper}) {
    // plain forward for the numeric side: slices are normalized, then scored
    auto value = [&](const Vec& q) {
      std::vector<Vec> anchors, positives;
      for (std::size_t i = 0; i < b; ++i) {
        anchors.push_back(
            numcore::l2_normalize(Vec(q.begin() + i * d, q.begin() + (i + 1) * d)));
        positives.push_back(numcore::l2_normalize(
            Vec(q.begin() + (b + i) * d, q.begin() + (b + i + 1) * d)));
      }
      return info_nce(anchors, positives, extra, tau, form);
    };

    Tape t;
    std::vector<Tape::NodeId> leaves, a_nodes, p_nodes;
    for (std::size_t i = 0; i < 2 * b; ++i) {
      const auto leaf = t.leaf(Vec(p0.begin() + i * d, p0.begin() + (i + 1) * d));
      leaves.push_back(leaf);
      (i < b ? a_nodes : p_nodes).push_back(numcore::t_l2_normalize(t, leaf));
    }
    const auto loss = t_info_nce(t, a_nodes, p_nodes, extra, tau, form);
    t.backward(loss);
    Vec analytic;
    for (const auto leaf : leaves)
      analytic.insert(analytic.end(), t.grad(leaf).begin(), t.grad(leaf).end());
    check_close(analytic, fd_grad(value, p0), 1e-5);
  }
}

TEST_CASE("key queue keeps the newest entries in arrival order") {
  KeyQueue q(4, 2);
  CHECK(q.size() == 0);
  CHECK(q.capacity() == 4);
  auto key = [](double v) { return Vec{v, 0.0}; };
  q.push_batch({key(1), key(2)});
  CHECK(q.size() == 2);
  q.push_batch({key(3), key(4), key(5)});
  CHECK(q.size() == 4);
  const auto snap = q.snapshot();
  REQUIRE(snap.size() == 4);
  CHECK(snap[0] == key(2));
  CHECK(snap[1] == key(3));
  CHECK(snap[2] == key(4));
  CHECK(snap[3] == key(5));
  // snapshot is a copy; pushing later does not mutate it
  q.push_batch({key(6)});
  CHECK(snap[0] == key(2));
  CHECK(q.snapshot()[0] == key(3));
}

TEST_CASE("zero-capacity queues stay empty and bad keys are rejected") {
  KeyQueue q(0, 3);
  q.push_batch({Vec{1.0, 0.0, 0.0}});
  CHECK(q.size() == 0);
  CHECK(q.snapshot().empty());
  KeyQueue r(2, 3);
  CHECK(kind_of([&] { r.push_batch({Vec{1.0, 0.0}}); }) == ErrKind::dimension);
  CHECK(kind_of([] { KeyQueue(4, 0); }) == ErrKind::dimension);
}

TEST_CASE("step decay holds within a window and compounds across windows") {
  TrainConfig cfg;
  cfg.lr0 = 1e-4;
  cfg.lr_step = 5;
  cfg.lr_gamma = 0.95;
  CHECK(lr_at_epoch(cfg, 0) == 1e-4);
  CHECK(lr_at_epoch(cfg, 4) == 1e-4);
  CHECK(lr_at_epoch(cfg, 5) == doctest::Approx(9.5e-5).epsilon(1e-12));
  CHECK(lr_at_epoch(cfg, 9) == doctest::Approx(9.5e-5).epsilon(1e-12));
  CHECK(lr_at_epoch(cfg, 12) == doctest::Approx(9.025e-5).epsilon(1e-12));
  cfg.lr_step = 0;
  CHECK(kind_of([&] { lr_at_epoch(cfg, 1); }) == ErrKind::parameter);
}

TEST_CASE("a zero gradient leaves only the decoupled decay") {
  Vec p = {1.0};
  OptimizerState opt;
  adamw_step(p, Vec{0.0}, opt, 1e-3, 0.01);
  CHECK(p[0] == doctest::Approx(0.99999).epsilon(1e-12));
  CHECK(opt.t == 1);
  // and with decay off the step is a no-op
  Vec q = {1.0};
  OptimizerState opt2;
  adamw_step(q, Vec{0.0}, opt2, 1e-3, 0.0);
  CHECK(q[0] == 1.0);
}

TEST_CASE("the first decay-free step moves by about lr in the gradient direction") {
  for (const double g : {0.5, -0.5}) {
    Vec p = {2.0};
    OptimizerState opt;
    adamw_step(p, Vec{g}, opt, 1e-3, 0.0);
    const double sign = g > 0 ? 1.0 : -1.0;
    CHECK(p[0] == doctest::Approx(2.0 - 1e-3 * sign).epsilon(1e-6));
  }
}

TEST_CASE("five optimizer steps match a hand-rolled scalar trajectory") {
  const Vec grads = {0.3, -0.2, 0.1, 0.05, -0.4};
  const double lr = 0.01, wd = 0.02;
  Vec p = {0.5};
  OptimizerState opt;

  double q = 0.5, m = 0.0, v = 0.0;
  for (std::size_t t = 1; t <= grads.size(); ++t) {
    const double g = grads[t - 1];
    adamw_step(p, Vec{g}, opt, lr, wd);

    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    const double mhat = m / (1.0 - std::pow(0.9, static_cast<double>(t)));
    const double vhat = v / (1.0 - std::pow(0.999, static_cast<double>(t)));
    q -= lr * (mhat / (std::sqrt(vhat) + 1e-8) + wd * q);
    CHECK(p[0] == doctest::Approx(q).epsilon(1e-12));
  }
  CHECK(opt.t == 5);
}

TEST_CASE("optimizer input validation") {
  Vec p = {1.0, 2.0};
  OptimizerState opt;
  CHECK(kind_of([&] { adamw_step(p, Vec{0.0}, opt, 1e-3, 0.0); }) == ErrKind::dimension);
  CHECK(kind_of([&] { adamw_step(p, Vec{0.0, 0.0}, opt, -1.0, 0.0); }) ==
        ErrKind::parameter);
  CHECK(kind_of([&] { adamw_step(p, Vec{0.0, 0.0}, opt, 1e-3, -0.1); }) ==
        ErrKind::parameter);
  CHECK(kind_of([&] {
          adamw_step(p, Vec{std::nan(""), 0.0}, opt, 1e-3, 0.0);
        }) == ErrKind::contract);
  OptimizerState stale;
  stale.m = Vec(3, 0.0);
  stale.v = Vec(3, 0.0);
  CHECK(kind_of([&] { adamw_step(p, Vec{0.0, 0.0}, stale, 1e-3, 0.0); }) ==
        ErrKind::dimension);
}

TEST_CASE("the recorded sample graph reproduces the plain forward path") {
  const store::SynthResult synth = store::synth_dataset(2, 3, 6, 0.15, 23);
  align::ModelParams params = align::init_params(6, 6, 5);
  Rng rng(24);
  for (auto& view : align::tensor_views(params))
    for (std::size_t k = 0; k < view.count(); ++k) view.data[k] += 0.05 * rng.gauss();

  const Mat quad = synth.dataset.quad(1);
  const Vec sat = synth.dataset.sat_feature(1);

  SUBCASE("attention pooling with live dropout") {
    params.head.dropout_rate = 0.3;
    Tape t;
    const ParamLeaves leaves = record_params(t, params);
    const SampleNodes sn =
        record_sample(t, leaves, quad, sat, pooling::PoolMode::att, 0.3, 99);
    const Vec g_plain = pooling::att_pool(quad, params.scorer);
    const Vec g_tape = t.val(sn.ground);
    for (std::size_t j = 0; j < g_plain.size(); ++j)
      CHECK(g_tape[j] == doctest::Approx(g_plain[j]).epsilon(1e-12));
    CHECK(t.val(sn.sat) == align::sen_embed(params, sat, align::Mode::train, 99));
  }
  SUBCASE("average pooling without dropout") {
    params.head.dropout_rate = 0.0;
    Tape t;
    const ParamLeaves leaves = record_params(t, params);
    const SampleNodes sn =
        record_sample(t, leaves, quad, sat, pooling::PoolMode::avg, 0.0, 0);
    CHECK(t.val(sn.ground) == pooling::avg_pool(quad));
    CHECK(t.val(sn.sat) == align::sen_embed(params, sat, align::Mode::eval, 0));
  }
}

TEST_CASE("record_params mirrors the flat parameter layout") {
  align::ModelParams params = align::init_params(4, 3, 6);
  Tape t;
  const ParamLeaves leaves = record_params(t, params);
  REQUIRE(leaves.ids.size() == 10);
  CHECK(leaves.d_in == 4);
  CHECK(leaves.d_out == 3);
  Vec flat;
  for (const auto id : leaves.ids)
    flat.insert(flat.end(), t.val(id).begin(), t.val(id).end());
  CHECK(flat == align::flatten_params(params));
}

TEST_CASE("training runs, logs every step, and lands on the declared epoch") {
  const store::SynthResult synth = store::synth_dataset(2, 8, 8, 0.1, 31);
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 4;
  cfg.queue_capacity = 8;
  cfg.seed = 3;

  std::size_t callbacks = 0;
  const TrainResult res = train(synth.dataset, cfg, [&](const store::ModelCheckpoint& ck,
                                                        const std::vector<LossRecord>& log) {
    ++callbacks;
    CHECK(ck.epoch == callbacks);
    CHECK(log.size() == callbacks * 4);
  });
  CHECK(callbacks == 2);
  CHECK(res.checkpoint.epoch == 2);
  CHECK(res.checkpoint.d_in == 8);
  CHECK(res.checkpoint.d_out == 8);
  CHECK(res.checkpoint.cfg.seed == 3);
  REQUIRE(res.losses.size() == 8);
  for (std::size_t i = 0; i < 8; ++i) {
    CHECK(res.losses[i].epoch == i / 4);
    CHECK(res.losses[i].batch == i % 4);
    CHECK(res.losses[i].lr == cfg.lr0);  // first decay window covers both epochs
    CHECK(std::isfinite(res.losses[i].loss));
    CHECK(res.losses[i].loss >= 0.0);
  }
  CHECK(res.checkpoint.opt.t == 8);

  // training moved the trainable tensors away from the seed values
  const Vec initial = align::flatten_params(align::init_params(8, 8, 3));
  CHECK(align::flatten_params(res.checkpoint.params) != initial);
}

TEST_CASE("training is bitwise deterministic in the seed") {
  const store::SynthResult synth = store::synth_dataset(2, 6, 6, 0.1, 32);
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 3;
  cfg.queue_capacity = 6;
  cfg.seed = 11;
  const TrainResult a = train(synth.dataset, cfg);
  const TrainResult b = train(synth.dataset, cfg);
  CHECK(align::flatten_params(a.checkpoint.params) ==
        align::flatten_params(b.checkpoint.params));
  CHECK(a.checkpoint.opt.m == b.checkpoint.opt.m);
  REQUIRE(a.losses.size() == b.losses.size());
  for (std::size_t i = 0; i < a.losses.size(); ++i)
    CHECK(a.losses[i].loss == b.losses[i].loss);

  cfg.seed = 12;
  const TrainResult c = train(synth.dataset, cfg);
  CHECK(align::flatten_params(a.checkpoint.params) !=
        align::flatten_params(c.checkpoint.params));
}

TEST_CASE("zero epochs return the freshly initialized model") {
  const store::SynthResult synth = store::synth_dataset(2, 4, 5, 0.1, 33);
  TrainConfig cfg;
  cfg.epochs = 0;
  cfg.batch_size = 4;
  cfg.queue_capacity = 8;
  cfg.seed = 9;
  const TrainResult res = train(synth.dataset, cfg);
  CHECK(res.losses.empty());
  CHECK(res.checkpoint.epoch == 0);
  CHECK(align::flatten_params(res.checkpoint.params) ==
        align::flatten_params(align::init_params(5, 5, 9)));
}

TEST_CASE("training rejects invalid configurations up front") {
  const store::SynthResult synth = store::synth_dataset(2, 3, 5, 0.1, 34);
  TrainConfig cfg;
  cfg.batch_size = 1;
  CHECK(kind_of([&] { train(synth.dataset, cfg); }) == ErrKind::parameter);
  cfg.batch_size = 4;
  cfg.queue_capacity = 6;  // not a multiple of the batch
  CHECK(kind_of([&] { train(synth.dataset, cfg); }) == ErrKind::parameter);
  cfg.queue_capacity = 8;
  cfg.tau = 0.0;
  CHECK(kind_of([&] { train(synth.dataset, cfg); }) == ErrKind::parameter);
  cfg.tau = 0.07;
  cfg.batch_size = 7;  // larger than the 6-location dataset
  cfg.queue_capacity = 14;
  CHECK(kind_of([&] { train(synth.dataset, cfg); }) == ErrKind::parameter);
}

TEST_CASE("failures inside a step report the epoch and batch position") {
  store::SynthResult synth = store::synth_dataset(2, 4, 5, 0.1, 35);
  synth.dataset.ground.at(3, 2) = std::nan("");
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = 4;
  cfg.queue_capacity = 8;
  cfg.pool = pooling::PoolMode::avg;
  try {
    train(synth.dataset, cfg);
    FAIL("expected a typed error");
  } catch (const Error& e) {
    CHECK(e.kind == ErrKind::contract);
    CHECK(std::string(e.what()).find("epoch 0 batch") != std::string::npos);
  }
}

TEST_CASE("loss log serializes one record per line") {
  TempDir td;
  const std::vector<LossRecord> log = {{0, 0, 0.75, 1e-3}, {0, 1, 0.5, 1e-3},
                                       {1, 0, 0.25, 9.5e-4}};
  const fs::path p = td.path / "loss.jsonl";
  save_loss_log(log, p);
  std::ifstream f(p);
  std::string line;
  std::size_t i = 0;
  while (std::getline(f, line)) {
    REQUIRE(i < log.size());
    const auto j = nlohmann::json::parse(line);
    CHECK(j.at("epoch").get<std::size_t>() == log[i].epoch);
    CHECK(j.at("batch").get<std::size_t>() == log[i].batch);
    CHECK(j.at("loss").get<double>() == log[i].loss);
    CHECK(j.at("lr").get<double>() == log[i].lr);
    ++i;
  }
  CHECK(i == 3);
  CHECK(kind_of([&] { save_loss_log(log, td.path / "absent" / "x.jsonl"); }) ==
        ErrKind::io);
}

TEST_CASE("a small randomized gradient sweep certifies the training graph") {
  selfcheck::SuiteConfig cfg;
  cfg.configs = 10;
  cfg.seed = 1;
  const selfcheck::SuiteResult res = selfcheck::gradient_suite(cfg);
  CHECK(res.configs == 10);
  CHECK(res.failures == 0);
  CHECK(res.pass());
  CHECK(res.max_rel_err < cfg.tol);
}

TEST_SUITE_END();
