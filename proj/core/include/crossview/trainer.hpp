#pragma once

#include <deque>
#include <filesystem>
#include <functional>
#include <vector>

#include "crossview/config.hpp"
#include "crossview/model.hpp"
#include "crossview/store.hpp"
#include "crossview/tape.hpp"

namespace crossview::trainer {

using numcore::Mat;
using numcore::Tape;
using numcore::Vec;

// FIFO memory of detached pooled ground embeddings. push_batch appends the
// batch, then evicts oldest entries until size <= capacity.
class KeyQueue {
 public:
  KeyQueue(std::size_t capacity, std::size_t dim);

  void push_batch(const std::vector<Vec>& keys);
  std::vector<Vec> snapshot() const;

  std::size_t size() const { return q_.size(); }
  std::size_t capacity() const { return capacity_; }
  std::size_t dim() const { return dim_; }

 private:
  std::size_t capacity_;
  std::size_t dim_;
  std::deque<Vec> q_;
};

struct LossRecord {
  std::size_t epoch = 0;
  std::size_t batch = 0;
  double loss = 0.0;
  double lr = 0.0;
};

// Contrastive loss at temperature tau over unit embeddings.
//   moco form:  anchors score against positives plus the extra keys
//   paper form: positives score against the batch anchors, extra ignored
// Returns the batch mean; anchors[i] matches positives[i].
double info_nce(const std::vector<Vec>& anchors, const std::vector<Vec>& positives,
                const std::vector<Vec>& extra_keys, double tau, LossForm form);

// Same loss as a recorded scalar node. Gradients reach both anchor and
// positive nodes; extra keys stay frozen.
Tape::NodeId t_info_nce(Tape& t, const std::vector<Tape::NodeId>& anchors,
                        const std::vector<Tape::NodeId>& positives,
                        const std::vector<Vec>& extra_keys, double tau, LossForm form);

// One leaf per tensor, tensor_views order. The gradient suite replays the
// same recorded graph as the training loop through these two helpers.
struct ParamLeaves {
  std::vector<Tape::NodeId> ids;
  std::size_t d_in = 0;
  std::size_t d_out = 0;
};
ParamLeaves record_params(Tape& t, align::ModelParams& params);

struct SampleNodes {
  Tape::NodeId ground = 0;  // pooled ground embedding (the key)
  Tape::NodeId sat = 0;     // satellite embedding (the anchor)
};
SampleNodes record_sample(Tape& t, const ParamLeaves& leaves, const Mat& quad,
                          const Vec& sat_feature, pooling::PoolMode pool,
                          double dropout_rate, std::uint64_t dropout_seed);

// Step decay: lr0 * gamma^floor(epoch / step).
double lr_at_epoch(const TrainConfig& cfg, std::size_t epoch);

// Decoupled weight decay: p -= lr * (mhat/(sqrt(vhat)+eps) + wd*p).
void adamw_step(Vec& params, const Vec& grads, OptimizerState& opt, double lr,
                double weight_decay);

struct TrainResult {
  store::ModelCheckpoint checkpoint;
  std::vector<LossRecord> losses;
};

using EpochCallback =
    std::function<void(const store::ModelCheckpoint&, const std::vector<LossRecord>&)>;

// Full loop: shuffle per epoch, drop the partial batch, one optimizer step per
// batch, enqueue the batch keys after the step. The callback fires after every
// completed epoch with the checkpoint and the loss log so far.
TrainResult train(const store::QuadrupletDataset& ds, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = {});

// JSONL, one {batch, epoch, loss, lr} object per line.
void save_loss_log(const std::vector<LossRecord>& log, const std::filesystem::path& path);

}  // namespace crossview::trainer
