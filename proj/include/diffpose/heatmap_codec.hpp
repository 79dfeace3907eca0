#pragma once

#include <vector>

#include "diffpose/tensor.hpp"

namespace diffpose {

struct Keypoint {
    double x = 0.0;
    double y = 0.0;
    bool visible = false;
};

// Per-person joint set in heatmap pixel coordinates.
struct KeypointSet {
    std::vector<Keypoint> joints;
};

struct CodecConfig {
    int joints = 5;
    int height = 16;  // H_h
    int width = 12;   // W_h
    double sigma = 2.0;
    double amplitude = 1.0;
    double signal_scale = 1.0;
    // Peak threshold for decoding visibility, as a fraction of amplitude.
    double visibility_threshold = 0.25;

    void validate() const;
};

// Ground-truth rendering: channel k = amplitude * exp(-(du^2+dv^2)/(2 sigma^2))
// for visible joint k (coordinates clamped into the grid), exactly zero beyond
// 3 sigma on either axis, and an all-zero channel for invisible joints.
Tensor encode_heatmaps(const KeypointSet& keypoints, const CodecConfig& config);

// Argmax decode with deterministic tie-break (lowest row-major index) and a
// 0.25 px shift toward the larger in-grid axis neighbor.  Peak value above
// visibility_threshold * amplitude marks the joint visible.
KeypointSet decode_keypoints(const Tensor& heatmap, const CodecConfig& config);

// Affine map into the symmetric diffusion signal domain:
// v -> (2 v / amplitude - 1) * signal_scale.
Tensor normalize_for_diffusion(const Tensor& heatmap, const CodecConfig& config);

// Exact inverse of normalize_for_diffusion followed by clamping to
// [0, amplitude].
Tensor denormalize_from_diffusion(const Tensor& heatmap, const CodecConfig& config);

}  // namespace diffpose
