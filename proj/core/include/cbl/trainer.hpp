#pragma once

#include <span>
#include <string>
#include <vector>

#include "cbl/checkpoint.hpp"
#include "cbl/crd.hpp"
#include "cbl/model.hpp"
#include "cbl/msr.hpp"
#include "cbl/synth.hpp"
#include "cbl/wet.hpp"

namespace cbl {

struct TrainConfig {
    long iterations = 2000;
    double learning_rate = 1e-3;
    double learning_rate_drop = 1e-4;   // rate after the drop point
    double lr_drop_fraction = 5.0 / 7.0;
    double momentum = 0.9;
    double weight_decay = 5e-4;
    int batch_size = 4;
    int hidden_dim = 32;
    int k_heads = 3;
    double neighbor_thresh = 0.5;       // positive-neighbor IoU for refine labels
    double bg_weight_scale = 1.0;       // background weight relative to the nearest seed's score
    double msr_start_fraction = 0.4;
    bool enable_wet = true;
    bool enable_crd = true;
    bool enable_msr = true;
    double grad_clip_norm = 0.0;        // 0 disables clipping
    long log_interval = 50;
    long checkpoint_interval = 0;       // 0 = final checkpoint only
    std::uint64_t seed = 7;

    EmaConfig ema;
    CrdConfig crd{0.5, 1.0, 0, 1.0};  // iter_max == 0 resolves to `iterations`
    MsrConfig msr;

    void validate() const;
    long msr_start_iter() const;
    long crd_horizon() const { return crd.iter_max > 0 ? crd.iter_max : iterations; }
};

/// Per-logging-interval record; total is always consistent with the loss
/// combination rule given the parts.
struct LossReport {
    long iteration = 0;
    double lambda = 1.0;
    double tau = 0.5;
    double lr = 0.0;
    double midn = 0.0;
    double crd = 0.0;
    std::vector<double> oic;  // per head
    double cls = 0.0;
    double reg = 0.0;
    double rcnn = 0.0;
    double total = 0.0;
};

/// Linear decay of the image-level supervision weight from 1 to 0.
double lambda_schedule(long iter_cur, long horizon);

struct LossParts {
    double midn = 0.0;
    double crd = 0.0;
    std::vector<double> oic;
    double rcnn = 0.0;
};

/// L_total = lambda * L_midn + (1 - lambda) * L_crd + sum_k L_oic_k + L_rcnn.
double total_loss(const LossParts& parts, double lambda);

/// SGD with momentum and weight decay:
/// v' = momentum * v + grad + weight_decay * param; param' = param - lr * v'.
void sgd_step(std::span<double> param, std::span<const double> grad, std::span<double> velocity,
              double lr, double momentum, double weight_decay);

/// One scene's forward pass, label generation, losses, and (optionally)
/// gradient accumulation into `grads`. `teacher` may be null (baseline arm).
struct ScenePassResult {
    double midn = 0.0;
    double crd = 0.0;
    std::vector<double> oic;
    double cls = 0.0;
    double reg = 0.0;
};
ScenePassResult scene_pass(const ModelParams& model, const WetParams* teacher,
                           const Scene& scene, double lambda, double tau, bool msr_active,
                           const TrainConfig& cfg, ModelParams* grads);

struct TrainResult {
    ModelParams model;
    WetParams teacher;
    std::vector<Vec> velocity;  // parallel to tensor_refs(model)
    long iteration = 0;
    std::vector<LossReport> history;
};

/// Full optimization loop over the train split of `dataset`. Deterministic in
/// (config, dataset): batches, updates, and reports replay bit-identically.
/// `checkpoint_dir`, when non-empty, receives interval checkpoints.
TrainResult train(const TrainConfig& cfg, const std::vector<Scene>& dataset,
                  const std::string& checkpoint_dir = "");

CheckpointData to_checkpoint(const TrainResult& result, bool has_teacher);

/// Metric history as comma-separated text with a fixed header; values are
/// round-trip exact.
void write_history_csv(const std::vector<LossReport>& history, int k_heads,
                       const std::string& path);

}  // namespace cbl
