#pragma once

// Shared harness for the acceptance suites: each binary declares a list of
// named checks, and the runner prints exactly one [PASS]/[FAIL] line per
// check.  A check passes by returning a detail string and fails by throwing.

#include <chrono>
#include <cstdarg>
#include <cstdio>
#include <exception>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "diffpose/dataset.hpp"
#include "diffpose/engine.hpp"
#include "diffpose/metrics.hpp"

namespace acceptance {

struct Failure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline void require(bool ok, const std::string& why) {
    if (!ok) throw Failure(why);
}

struct Check {
    std::string name;
    std::function<std::string()> run;
};

inline int run_all(const std::vector<Check>& checks) {
    int failures = 0;
    for (const Check& c : checks) {
        const auto start = std::chrono::steady_clock::now();
        std::string detail;
        bool ok = true;
        try {
            detail = c.run();
        } catch (const std::exception& e) {
            ok = false;
            detail = e.what();
        }
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::printf("[%s] %s (%.1f s)%s%s\n", ok ? "PASS" : "FAIL", c.name.c_str(), secs,
                    detail.empty() ? "" : ": ", detail.c_str());
        std::fflush(stdout);
        if (!ok) ++failures;
    }
    return failures;
}

inline std::string format(const char* fmt, ...) {
    char buf[512];
    va_list args;
    va_start(args, fmt);
    std::vsnprintf(buf, sizeof(buf), fmt, args);
    va_end(args);
    return std::string(buf);
}

// ---- pipeline helpers shared by the training-based suites ----

inline std::vector<diffpose::TrainSample> to_samples(
    const std::vector<diffpose::PreparedClip>& prepared) {
    std::vector<diffpose::TrainSample> out;
    out.reserve(prepared.size());
    for (const diffpose::PreparedClip& p : prepared) out.push_back(p.sample);
    return out;
}

inline std::string clip_image_id(int id) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "clip_%05d", id);
    return std::string(buf);
}

// Scene-space prediction records, one per prepared clip, with the same
// per-clip noise stream the CLI uses.
inline std::vector<diffpose::AnnotationRecord> predict_records(
    diffpose::Model& model, const std::vector<diffpose::PreparedClip>& prepared,
    const diffpose::InferenceOptions& opts) {
    using namespace diffpose;
    const PipelineConfig& cfg = model.config;
    std::vector<AnnotationRecord> out;
    out.reserve(prepared.size());
    for (const PreparedClip& p : prepared) {
        Rng rng(Rng::derive(opts.seed, 0x4000 + static_cast<std::uint64_t>(p.id)));
        const KeypointSet heat = predict_keypoints(model, p.sample.clip, opts, rng);
        KeypointSet in_kp = heatmap_to_input(heat, cfg.input_height, cfg.input_width,
                                             cfg.heatmap_height, cfg.heatmap_width);
        KeypointSet scene_kp = in_kp;
        for (Keypoint& kp : scene_kp.joints) p.crop.to_scene(kp.x, kp.y, kp.x, kp.y);
        out.push_back(
            AnnotationRecord::from_keypoints(clip_image_id(p.id), 0, p.bbox, scene_kp));
    }
    return out;
}

// Mean PCK at one threshold over (a subset of) clips, matched by image id.
inline double mean_pck(const std::vector<diffpose::AnnotationRecord>& preds,
                       const std::vector<diffpose::AnnotationRecord>& gts, double threshold) {
    const diffpose::MetricReport rep = diffpose::evaluate_predictions(preds, gts, {threshold});
    require(rep.mean[0].has_value(), "PCK undefined: no visible ground-truth joints");
    return *rep.mean[0];
}

}  // namespace acceptance
