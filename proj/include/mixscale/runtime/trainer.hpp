#pragma once

#include "mixscale/data/dataset.hpp"
#include "mixscale/model/network.hpp"
#include "mixscale/runtime/checkpoint.hpp"

namespace mixscale {

// SGD with momentum and (coupled) weight decay: v = mu*v + g + wd*p,
// p -= lr*v. Momentum buffers are part of the checkpoint.
class SgdOptimizer {
  public:
    SgdOptimizer(ParamRegistry<float>& reg, double momentum, double weight_decay);
    void step(double lr);
    std::vector<CheckpointEntry> state_entries() const;
    void load_state(const std::vector<CheckpointEntry>& entries);

  private:
    ParamRegistry<float>* reg_;
    double momentum_, weight_decay_;
    std::vector<TensorF> velocity_;
};

// Learning-rate ramp: linear warm-up over the configured fraction of total
// iterations, then linear decay toward zero.
double lr_at(const TrainConfig& cfg, long long iter, long long total_iters);

struct IterationLog {
    long long iteration;
    double lr, lambda, bcel, ual, total;
};

struct TrainResult {
    std::vector<IterationLog> log;
    std::string checkpoint_path;
    std::string loss_log_path;
};

CheckpointRecord snapshot_model(const SegmentationNetwork<float>& net,
                                const SgdOptimizer* opt, int epoch,
                                uint64_t fingerprint);

// Restores parameters and buffers into the network; refuses records whose
// fingerprint differs from `expected_fingerprint`.
void restore_model(SegmentationNetwork<float>& net, SgdOptimizer* opt,
                   const CheckpointRecord& record, uint64_t expected_fingerprint);

// Runs the training loop and writes loss_log.csv plus checkpoint.bin under
// out_dir (when non-empty).
TrainResult train_model(SegmentationNetwork<float>& net, const TrainConfig& cfg,
                        const SampleSource& source, const std::string& out_dir);

}  // namespace mixscale
