#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "diffpose/config.hpp"
#include "diffpose/diffusion.hpp"
#include "diffpose/heatmap_codec.hpp"
#include "diffpose/pose_decoder.hpp"
#include "diffpose/strl.hpp"

namespace diffpose {

// The full learnable system plus its fixed companions (codec, schedule).
struct Model {
    PipelineConfig config;
    Strl strl;
    PoseDecoder decoder;
    CodecConfig codec;
    NoiseSchedule schedule;

    // Deterministic parameter init from config.seed.
    static Model build(const PipelineConfig& config);

    void visit(const nn::ParamFn& f);
    std::int64_t param_count();
};

// Decoupled-weight-decay Adam over the model's visit order.
class AdamW {
  public:
    AdamW() = default;
    AdamW(double beta1, double beta2, double eps, double weight_decay);

    void zero_grad(Model& model);
    void step(Model& model, double lr);

    std::int64_t step_count() const { return t_; }
    void set_step_count(std::int64_t t) { t_ = t; }
    double weight_decay() const { return weight_decay_; }

  private:
    double beta1_ = 0.9;
    double beta2_ = 0.999;
    double eps_ = 1e-8;
    double weight_decay_ = 1e-4;
    std::int64_t t_ = 0;
};

// One training example: cropped input clip plus keyframe ground truth in
// heatmap pixel coordinates.
struct TrainSample {
    ClipTensor clip;
    KeypointSet gt;
};

// Algorithm-1 step over one batch: per sample draw t ~ Uniform{1..T} and eps,
// corrupt the encoded ground truth, run STRL + decoder, average the MSE
// losses, apply one optimizer step.  Randomness is drawn serially per sample
// in index order, so results are independent of worker count.
double train_step(Model& model, const std::vector<const TrainSample*>& batch, AdamW& adam,
                  double lr, Rng& rng);

struct TrainHooks {
    std::function<void(int epoch, std::int64_t step, double lr, double loss)> on_step;
    std::function<void(int epoch)> on_epoch_end;
};

// Full loop: config.epochs epochs of seeded shuffles and stepped lr decay.
void train(Model& model, const std::vector<TrainSample>& dataset, AdamW& adam,
           const TrainHooks& hooks = {});

struct InferenceOptions {
    int steps = 4;
    int ensemble = 10;  // N noise groups
    std::uint64_t seed = 1;
};

// Condition map for a clip (inference path, no gradients).
Tensor compute_condition(Model& model, const ClipTensor& clip);

// Algorithm 2 with N-group ensembling: each group runs the DDIM plan from its
// own noise, predictions are clamped to the signal domain each step, and the
// denormalized heatmaps are averaged with a running (Welford) mean in group
// order.
Tensor sample_pose(Model& model, const Tensor& condition, const InferenceOptions& opts, Rng& rng);

// STRL -> sampler -> argmax decode, in heatmap coordinates.
KeypointSet predict_keypoints(Model& model, const ClipTensor& clip, const InferenceOptions& opts,
                              Rng& rng);

// Checkpoint directory: manifest.json (names, shapes, offsets, config,
// epoch) + params.bin (raw little-endian float32, values and Adam moments).
void save_checkpoint(Model& model, const AdamW& adam, int epoch, const std::string& dir);

struct LoadedCheckpoint {
    Model model;
    AdamW adam;
    int epoch = 0;
};

LoadedCheckpoint load_checkpoint(const std::string& dir);

}  // namespace diffpose
