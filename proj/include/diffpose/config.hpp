#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "diffpose/heatmap_codec.hpp"
#include "diffpose/pose_decoder.hpp"
#include "diffpose/strl.hpp"

namespace diffpose {

using Json = nlohmann::ordered_json;

// Flat configuration surface shared by the CLI and the library pipelines.
// JSON round-trips field-for-field; unknown keys are rejected.
struct PipelineConfig {
    // reproducibility
    std::uint64_t seed = 1;

    // geometry
    int joints = 5;
    int scene_height = 96;
    int scene_width = 72;
    int input_height = 64;
    int input_width = 48;
    int heatmap_height = 16;
    int heatmap_width = 12;

    // heatmap codec
    double sigma = 2.0;
    double amplitude = 1.0;
    double signal_scale = 1.0;
    double visibility_threshold = 0.25;

    // temporal window
    int delta = 2;

    // synthetic scenes
    double motion_amplitude = 6.0;
    double motion_frequency = 0.25;
    double limb_thickness = 1.5;
    double blob_radius = 2.5;
    double background_noise_std = 0.02;
    double occlusion_prob = 0.1;
    double frame_corruption_prob = 0.0;
    double hard_fraction = 0.5;

    // diffusion
    int diffusion_steps = 1000;
    double schedule_offset = 0.008;

    // model
    int patch_size = 16;
    int embed_dim = 64;
    int backbone_layers = 2;
    int fusion_layers = 2;
    int num_heads = 4;
    int cond_channels = 32;
    int level1_channels = 64;
    int level2_channels = 32;
    int level3_channels = 16;
    int seref_channels = 32;
    int fusion_depth = 2;
    int head_channels = 32;
    int step_embed_dim = 64;

    // training
    int epochs = 30;
    int batch_size = 16;
    double base_lr = 5e-4;
    double weight_decay = 1e-4;
    std::vector<int> lr_decay_epochs = {10, 20};

    // inference
    int infer_steps = 4;
    int ensemble_size = 10;

    static PipelineConfig from_json(const Json& j);
    static PipelineConfig load(const std::string& path);
    Json to_json() const;
    void save(const std::string& path) const;
    void validate() const;

    CodecConfig codec() const;
    StrlConfig strl() const;
    DecoderConfig decoder() const;

    // Stepped decay: base_lr * 0.1^(number of decay epochs <= epoch),
    // epochs counted from 1.
    double lr_at_epoch(int epoch) const;
};

// Applies DIFFPOSE_SEED if present in the environment.
void apply_env_overrides(PipelineConfig& config);

}  // namespace diffpose
