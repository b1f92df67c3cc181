#pragma once

#include <functional>
#include <string>
#include <vector>

#include "pcqa/config.hpp"
#include "pcqa/datamodel.hpp"
#include "pcqa/fusion.hpp"

namespace pcqa {

// Training-time augmentation: flip, resized crop, brightness, contrast,
// clamp. Evaluation applies resize only. Deterministic given the rng state;
// draw order is fixed (flip, scale, offsets, brightness, contrast).
struct AugmentParams {
    bool flip = false;
    double crop_scale = 1.0;
    double offset_y = 0.0;  // in [0,1), fraction of the slack
    double offset_x = 0.0;
    double brightness = 1.0;
    double contrast = 1.0;
};

AugmentParams draw_augment_params(Rng& rng, const TrainConfig& cfg);
Image apply_augment(const Image& img, const AugmentParams& p, const TrainConfig& cfg);
Image augment(const Image& img, Rng& rng, const TrainConfig& cfg);

double mse_loss(const Vec& pred, const Vec& target);

// Linear warmup from 0 over W = round(warmup_fraction * total) steps, then
// cosine decay to 0 at total_steps.
double lr_at(long step, long total_steps, const TrainConfig& cfg);

// Global-norm clipping across all parameter gradients. Returns the pre-clip
// global norm.
double clip_gradients(const std::vector<Tensor*>& params, double max_norm);

class AdamW {
  public:
    AdamW(std::vector<Tensor*> params, double weight_decay, double beta1 = 0.9,
          double beta2 = 0.999, double epsilon = 1e-8);

    void step(double lr);
    long step_count() const { return step_count_; }

  private:
    std::vector<Tensor*> params_;
    std::vector<Vec> m_, v_;
    double weight_decay_, beta1_, beta2_, epsilon_;
    long step_count_ = 0;
};

struct EpochMetrics {
    int epoch = 0;
    double train_loss = 0.0;
    double val_srcc = 0.0;
    double val_plcc = 0.0;
    double val_score = 0.0;
    double lr_last = 0.0;
};

struct TrainResult {
    std::vector<EpochMetrics> log;
    int best_epoch = -1;  // -1 when no epoch ran
    double best_val_score = 0.0;
};

struct TrainCallbacks {
    // Called after each epoch with the metrics row and a flag for "new best".
    std::function<void(const EpochMetrics&, bool)> on_epoch;
    std::function<void(PCQAModel&, bool /*is_best*/)> on_checkpoint;
};

// Full recipe: per-epoch shuffle, augment, MSE on normalized MOS, backprop,
// clip, AdamW with warmup + cosine lr, frozen-encoder checksum assertion,
// best-checkpoint selection by validation Val Score.
TrainResult train(PCQAModel& model, const TrainConfig& cfg, const std::vector<Sample>& train_set,
                  const std::vector<Sample>& val_set, const TrainCallbacks& callbacks = {});

// Order-preserving scores over a manifest, no augmentation.
std::vector<double> predict_scores(const PCQAModel& model, const TrainConfig& cfg,
                                   const std::vector<Sample>& samples, bool tta = false);

std::string metrics_csv_header();
std::string metrics_csv_row(const EpochMetrics& m);

}  // namespace pcqa
