#pragma once

#include <cstdint>
#include <string>

#include "crossview/params.hpp"

namespace crossview::trainer {

using numcore::Vec;

enum class LossForm { moco, paper };
const char* to_string(LossForm f);
LossForm loss_form_from_string(const std::string& s);

struct OptimizerState {
  Vec m, v;  // first/second moments, flat in the tensor_views order
  std::uint64_t t = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct TrainConfig {
  std::size_t epochs = 20;
  std::size_t batch_size = 32;
  double lr0 = 1e-3;
  double tau = 0.07;
  std::size_t lr_step = 5;
  double lr_gamma = 0.95;
  std::size_t queue_capacity = 4096;
  double weight_decay = 0.01;
  double dropout_rate = 0.1;
  pooling::PoolMode pool = pooling::PoolMode::att;
  LossForm loss_form = LossForm::moco;
  std::uint64_t seed = 0;
};

// tau > 0, batch_size >= 2, queue a multiple of the batch, rate in [0,1)
void validate(const TrainConfig& cfg);

}  // namespace crossview::trainer
