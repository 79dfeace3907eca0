#pragma once

#include <cstdint>
#include <vector>

#include "diffpose/config.hpp"
#include "diffpose/crop.hpp"
#include "diffpose/heatmap_codec.hpp"
#include "diffpose/strl.hpp"

namespace diffpose {

// Articulated star figure: a hub joint plus K-1 limb endpoints, each joint
// riding its own sinusoidal trajectory.  All randomness (trajectory
// parameters, occlusion, pixel noise) comes from the per-clip seed.
struct SyntheticSceneConfig {
    int joints = 5;
    int height = 96;
    int width = 72;
    int delta = 2;
    double motion_amplitude = 6.0;   // px, peak trajectory excursion
    double motion_frequency = 0.25;  // cycles per frame
    double limb_thickness = 1.5;     // px
    double blob_radius = 2.5;        // px
    double background_noise_std = 0.02;
    double occlusion_prob = 0.1;         // per joint per clip
    double frame_corruption_prob = 0.0;  // per frame: low contrast + heavy noise

    void validate() const;
    static SyntheticSceneConfig from_pipeline(const PipelineConfig& cfg);
};

struct SyntheticClip {
    ClipTensor clip;                      // 2*delta+1 scene frames, values are n/255
    std::vector<KeypointSet> ground_truth;  // per frame, scene pixel coordinates
    BBox bbox;                            // tight keyframe box around all joints
    bool corrupted_keyframe = false;
};

// Deterministic: the same (config, seed) yields bit-identical frames and
// labels.  Throws GenerationError when a visible joint's trajectory cannot be
// kept inside the frame.
SyntheticClip generate_synthetic_clip(const SyntheticSceneConfig& config, std::uint64_t seed);

}  // namespace diffpose
