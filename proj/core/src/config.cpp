#include "crossview/config.hpp"

namespace crossview::trainer {

const char* to_string(LossForm f) { return f == LossForm::moco ? "moco" : "paper"; }

LossForm loss_form_from_string(const std::string& s) {
  if (s == "moco") return LossForm::moco;
  if (s == "paper") return LossForm::paper;
  fail(ErrKind::parameter, "unknown loss form: " + s);
}

void validate(const TrainConfig& cfg) {
  if (cfg.tau <= 0.0) fail(ErrKind::parameter, "train config: tau must be positive");
  if (cfg.batch_size < 2) fail(ErrKind::parameter, "train config: batch_size must be >= 2");
  if (cfg.queue_capacity % cfg.batch_size != 0)
    fail(ErrKind::parameter, "train config: queue_capacity must be a multiple of batch_size");
  if (cfg.lr0 <= 0.0) fail(ErrKind::parameter, "train config: lr0 must be positive");
  if (cfg.lr_step < 1) fail(ErrKind::parameter, "train config: lr_step must be >= 1");
  if (cfg.lr_gamma <= 0.0) fail(ErrKind::parameter, "train config: lr_gamma must be positive");
  if (cfg.weight_decay < 0.0)
    fail(ErrKind::parameter, "train config: weight_decay must be non-negative");
  if (cfg.dropout_rate < 0.0 || cfg.dropout_rate >= 1.0)
    fail(ErrKind::parameter, "train config: dropout_rate must be in [0,1)");
}

}  // namespace crossview::trainer
