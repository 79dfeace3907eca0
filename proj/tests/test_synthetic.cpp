#include <doctest.h>

#include <cmath>

#include "diffpose/heatmap_codec.hpp"
#include "diffpose/synthetic.hpp"

using namespace diffpose;

namespace {

SyntheticSceneConfig quiet_scene() {
    SyntheticSceneConfig s;  // defaults: 5 joints, 96x72, delta 2
    s.background_noise_std = 0.0;
    s.occlusion_prob = 0.0;
    s.frame_corruption_prob = 0.0;
    return s;
}

}  // namespace

TEST_CASE("synthetic: same seed twice is bit-identical") {
    SyntheticSceneConfig s = quiet_scene();
    s.background_noise_std = 0.02;
    s.occlusion_prob = 0.3;
    s.frame_corruption_prob = 0.5;
    SyntheticClip a = generate_synthetic_clip(s, 31);
    SyntheticClip b = generate_synthetic_clip(s, 31);
    REQUIRE(a.clip.frames.size() == b.clip.frames.size());
    for (std::size_t f = 0; f < a.clip.frames.size(); ++f)
        for (std::int64_t i = 0; i < a.clip.frames[f].numel(); ++i)
            CHECK(a.clip.frames[f][i] == b.clip.frames[f][i]);
    for (std::size_t f = 0; f < a.ground_truth.size(); ++f)
        for (std::size_t k = 0; k < a.ground_truth[f].joints.size(); ++k) {
            CHECK(a.ground_truth[f].joints[k].x == b.ground_truth[f].joints[k].x);
            CHECK(a.ground_truth[f].joints[k].y == b.ground_truth[f].joints[k].y);
            CHECK(a.ground_truth[f].joints[k].visible == b.ground_truth[f].joints[k].visible);
        }
    CHECK(a.bbox.x == b.bbox.x);
    CHECK(a.corrupted_keyframe == b.corrupted_keyframe);

    SyntheticClip c = generate_synthetic_clip(s, 32);
    bool any_diff = false;
    for (std::int64_t i = 0; i < a.clip.frames[0].numel() && !any_diff; ++i)
        any_diff = a.clip.frames[0][i] != c.clip.frames[0][i];
    CHECK(any_diff);
}

TEST_CASE("synthetic: zero motion and zero noise freeze the scene") {
    SyntheticSceneConfig s = quiet_scene();
    s.motion_amplitude = 0.0;
    SyntheticClip clip = generate_synthetic_clip(s, 5);
    REQUIRE(clip.clip.frames.size() == 5);
    for (std::size_t f = 1; f < clip.clip.frames.size(); ++f)
        for (std::int64_t i = 0; i < clip.clip.frames[0].numel(); ++i)
            CHECK(clip.clip.frames[f][i] == clip.clip.frames[0][i]);
    for (const KeypointSet& kp : clip.ground_truth)
        for (std::size_t k = 0; k < kp.joints.size(); ++k) {
            CHECK(kp.joints[k].x == clip.ground_truth[0].joints[k].x);
            CHECK(kp.joints[k].y == clip.ground_truth[0].joints[k].y);
        }
}

TEST_CASE("synthetic: occlusion probability one hides every joint") {
    SyntheticSceneConfig s = quiet_scene();
    s.occlusion_prob = 1.0;
    SyntheticClip clip = generate_synthetic_clip(s, 9);
    for (const KeypointSet& kp : clip.ground_truth)
        for (const Keypoint& k : kp.joints) CHECK_FALSE(k.visible);
}

TEST_CASE("synthetic: corruption probability one flags the keyframe") {
    SyntheticSceneConfig s = quiet_scene();
    s.frame_corruption_prob = 1.0;
    CHECK(generate_synthetic_clip(s, 3).corrupted_keyframe);
    s.frame_corruption_prob = 0.0;
    CHECK_FALSE(generate_synthetic_clip(s, 3).corrupted_keyframe);
}

TEST_CASE("synthetic: oversized motion cannot fit the frame") {
    SyntheticSceneConfig s = quiet_scene();
    s.motion_amplitude = 100.0;
    CHECK_THROWS_AS(generate_synthetic_clip(s, 1), GenerationError);
}

TEST_CASE("synthetic: frames are 8-bit quantized") {
    SyntheticSceneConfig s = quiet_scene();
    s.background_noise_std = 0.05;
    SyntheticClip clip = generate_synthetic_clip(s, 12);
    for (std::int64_t i = 0; i < clip.clip.frames[0].numel(); ++i) {
        const double v = clip.clip.frames[0][i] * 255.0;
        CHECK(std::abs(v - std::round(v)) < 1e-9);
        CHECK(v >= 0.0);
        CHECK(v <= 255.0);
    }
}

TEST_CASE("synthetic: keyframe bbox contains every joint") {
    SyntheticSceneConfig s = quiet_scene();
    s.occlusion_prob = 0.2;
    for (std::uint64_t seed : {1ull, 2ull, 3ull, 4ull}) {
        SyntheticClip clip = generate_synthetic_clip(s, seed);
        const KeypointSet& kf = clip.ground_truth[2];
        for (const Keypoint& k : kf.joints) {
            CHECK(k.x >= clip.bbox.x);
            CHECK(k.x <= clip.bbox.x + clip.bbox.w);
            CHECK(k.y >= clip.bbox.y);
            CHECK(k.y <= clip.bbox.y + clip.bbox.h);
        }
    }
}

TEST_CASE("synthetic: ground truth localizes at heatmap resolution") {
    // Encode the generated keyframe pose on a quarter-resolution grid and
    // decode it back: the round trip must stay within half a heatmap pixel.
    SyntheticSceneConfig s = quiet_scene();
    SyntheticClip clip = generate_synthetic_clip(s, 21);
    CodecConfig codec;
    codec.joints = s.joints;
    codec.height = s.height / 4;
    codec.width = s.width / 4;

    const KeypointSet& kf = clip.ground_truth[2];
    KeypointSet scaled;
    for (const Keypoint& k : kf.joints)
        scaled.joints.push_back({(k.x + 0.5) * 0.25 - 0.5, (k.y + 0.5) * 0.25 - 0.5, k.visible});
    KeypointSet out = decode_keypoints(encode_heatmaps(scaled, codec), codec);
    for (std::size_t k = 0; k < scaled.joints.size(); ++k) {
        if (!scaled.joints[k].visible) continue;
        const double err = std::hypot(out.joints[k].x - scaled.joints[k].x,
                                      out.joints[k].y - scaled.joints[k].y);
        CHECK(err <= 0.5);
    }
}

TEST_CASE("synthetic: config validation and pipeline import") {
    SyntheticSceneConfig s = quiet_scene();
    s.joints = 0;
    CHECK_THROWS_AS(s.validate(), ConfigError);
    s = quiet_scene();
    s.occlusion_prob = -0.1;
    CHECK_THROWS_AS(s.validate(), ConfigError);

    PipelineConfig cfg;
    cfg.motion_amplitude = 4.5;
    SyntheticSceneConfig from = SyntheticSceneConfig::from_pipeline(cfg);
    CHECK(from.motion_amplitude == 4.5);
    CHECK(from.joints == cfg.joints);
    CHECK(from.height == cfg.scene_height);
    CHECK(from.delta == cfg.delta);
}
