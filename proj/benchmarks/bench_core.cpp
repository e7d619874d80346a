#include <benchmark/benchmark.h>

#include "crossview/metrics.hpp"
#include "crossview/model.hpp"
#include "crossview/ops.hpp"
#include "crossview/pooling.hpp"
#include "crossview/rng.hpp"
#include "crossview/store.hpp"
#include "crossview/trainer.hpp"
#include "crossview/zeroshot.hpp"

namespace {

using crossview::numcore::Mat;
using crossview::numcore::Rng;
using crossview::numcore::Vec;

Vec unit_vec(Rng& rng, std::size_t d) {
  Vec v(d);
  for (double& x : v) x = rng.gauss();
  return crossview::numcore::l2_normalize(v);
}

Mat unit_rows(Rng& rng, std::size_t rows, std::size_t d) {
  Mat m(rows, d);
  for (std::size_t r = 0; r < rows; ++r) m.set_row(r, unit_vec(rng, d));
  return m;
}

void BM_affine(benchmark::State& state) {
  const std::size_t d = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  Mat w(d, d);
  for (double& v : w.data) v = rng.gauss();
  Vec b(d, 0.1), x = unit_vec(rng, d);
  for (auto _ : state) {
    benchmark::DoNotOptimize(crossview::numcore::affine(w, b, x));
  }
}
BENCHMARK(BM_affine)->Arg(128)->Arg(512);

void BM_head_forward(benchmark::State& state) {
  const std::size_t d = static_cast<std::size_t>(state.range(0));
  Rng rng(2);
  auto params = crossview::align::init_params(d, d, 7);
  const Vec x = unit_vec(rng, d);
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        crossview::align::head_forward(params.head, x, crossview::align::Mode::eval, 0));
  }
}
BENCHMARK(BM_head_forward)->Arg(64)->Arg(256);

void BM_info_nce_queue(benchmark::State& state) {
  const std::size_t extra = static_cast<std::size_t>(state.range(0));
  Rng rng(3);
  const std::size_t b = 32, d = 256;
  std::vector<Vec> anchors, positives, extras;
  for (std::size_t i = 0; i < b; ++i) {
    anchors.push_back(unit_vec(rng, d));
    positives.push_back(unit_vec(rng, d));
  }
  for (std::size_t i = 0; i < extra; ++i) extras.push_back(unit_vec(rng, d));
  for (auto _ : state) {
    benchmark::DoNotOptimize(crossview::trainer::info_nce(
        anchors, positives, extras, 0.07, crossview::trainer::LossForm::moco));
  }
}
BENCHMARK(BM_info_nce_queue)->Arg(0)->Arg(1024)->Arg(4096);

void BM_pool_dataset_att(benchmark::State& state) {
  const auto synth = crossview::store::synth_dataset(4, 64, 64, 0.1, 11);
  auto params = crossview::align::init_params(64, 64, 5);
  Rng rng(4);
  for (double& v : params.scorer.w) v = 0.1 * rng.gauss();
  for (auto _ : state) {
    benchmark::DoNotOptimize(crossview::pooling::pool_dataset(
        synth.dataset, crossview::pooling::PoolMode::att, &params.scorer));
  }
}
BENCHMARK(BM_pool_dataset_att);

void BM_retrieve_topk(benchmark::State& state) {
  Rng rng(5);
  const Mat queries = unit_rows(rng, 128, 64);
  const Mat gallery = unit_rows(rng, 1024, 64);
  for (auto _ : state) {
    benchmark::DoNotOptimize(crossview::evaluation::retrieve_topk(queries, gallery, 5));
  }
}
BENCHMARK(BM_retrieve_topk);

void BM_prompt_scores(benchmark::State& state) {
  const auto synth = crossview::store::synth_dataset(10, 2, 64, 0.1, 13);
  for (auto _ : state) {
    benchmark::DoNotOptimize(crossview::zeroshot::prompt_scores(synth.clean_prompts));
  }
}
BENCHMARK(BM_prompt_scores);

void BM_train_epoch(benchmark::State& state) {
  const auto synth = crossview::store::synth_dataset(4, 16, 16, 0.1, 17);
  crossview::trainer::TrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = 8;
  cfg.queue_capacity = 32;
  cfg.seed = 3;
  for (auto _ : state) {
    benchmark::DoNotOptimize(crossview::trainer::train(synth.dataset, cfg));
  }
}
BENCHMARK(BM_train_epoch);

}  // namespace

BENCHMARK_MAIN();
