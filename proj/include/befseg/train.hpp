#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "befseg/data.hpp"
#include "befseg/metrics.hpp"
#include "befseg/model.hpp"

namespace befseg {

struct TrainConfig {
    std::uint64_t seed = 0;
    std::size_t epochs = 30;
    std::size_t batch_size = 8;
    double lr = 1e-3;  // constant
    LossWeights weights;
    double grad_clip_norm = 10.0;  // <= 0 disables clipping
    bool augment = true;
    std::string out_dir;

    // optional inspection point invoked right after each backward pass,
    // before clipping and the update (used by the ablation harness)
    std::function<void(const Model&)> after_backward;

    void validate() const;
};

// Per-parameter adaptive moments: decay 0.9 / 0.999, stabilizer 1e-8, with
// the standard bias correction. The moment buffers are positional, so the
// parameter list must keep its construction-time length and shapes.
class Adam {
public:
    Adam(const ParamList& params, double lr);

    void step(ParamList& params);
    std::size_t steps_taken() const { return t_; }

private:
    double lr_;
    std::size_t t_ = 0;
    std::vector<std::vector<double>> m_, v_;
};

double global_grad_norm(const ParamList& params);

// Scales every gradient by max_norm/norm when the global norm exceeds
// max_norm; a no-op otherwise.
void clip_gradients(ParamList& params, double max_norm);

// One optimization step on an already-augmented batch: accumulate the mean
// of per-sample gradients, clip, update. Throws on a non-finite loss or
// parameter, naming the offender.
LossBreakdown train_step(Model& model, const std::vector<Sample>& batch,
                         const LossWeights& weights, Adam& opt, double clip_norm,
                         const std::function<void(const Model&)>& after_backward = nullptr);

// Forward + per-pixel argmax over a split; confusion metrics plus the mean
// per-image boundary F1. Runs without gradient tracking.
MetricsReport evaluate_model(const Model& model, const std::vector<Sample>& samples);

struct TrainResult {
    std::vector<double> epoch_mean_total;  // one entry per epoch
    double best_val_miou = 0.0;
    std::size_t best_epoch = 0;  // 1-based
    double final_val_miou = 0.0;
    std::string csv_path;
    std::string best_path;
    std::string final_path;
};

// The full loop: shuffled epochs with per-sample crop/scale jitter, a CSV
// row per step, validation after every epoch, checkpoints at the best
// validation mIoU and at the end. Deterministic in (seed, config).
TrainResult run_training(Model& model, const Dataset& data, const TrainConfig& config);

struct AblationArm {
    double lambda3 = 0.0;
    double miou = 0.0;        // median over seeds
    double boundary_f1 = 0.0; // median over seeds
};

struct AblationReport {
    std::vector<AblationArm> arms;
    std::vector<std::uint64_t> seeds;
    bool expectation_met = false;

    std::string to_json() const;
};

// Trains both lambda3 arms (0 and the configured value) across three
// consecutive seeds under one schedule, medians the validation scores, and
// hard-verifies that the lambda3 = 0 arm never produces a boundary-head
// gradient. The reported expectation flag is informational.
AblationReport run_ablation(const ModelConfig& model_config, const Dataset& data,
                            const TrainConfig& base);

}  // namespace befseg
