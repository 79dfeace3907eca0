#include "diffpose/heatmap_codec.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "diffpose/errors.hpp"

namespace diffpose {

void CodecConfig::validate() const {
    if (joints <= 0) throw ConfigError("codec: joint count must be positive");
    if (height <= 0 || width <= 0) throw ConfigError("codec: resolution must be positive");
    if (sigma <= 0.0) throw ConfigError("codec: sigma must be positive");
    if (amplitude <= 0.0) throw ConfigError("codec: amplitude must be positive");
    if (signal_scale <= 0.0) throw ConfigError("codec: signal_scale must be positive");
    if (visibility_threshold < 0.0 || visibility_threshold >= 1.0)
        throw ConfigError("codec: visibility_threshold must lie in [0, 1)");
}

Tensor encode_heatmaps(const KeypointSet& keypoints, const CodecConfig& config) {
    config.validate();
    if (static_cast<int>(keypoints.joints.size()) != config.joints)
        throw ConfigError("encode_heatmaps: keypoint count " +
                          std::to_string(keypoints.joints.size()) + " does not match configured K=" +
                          std::to_string(config.joints));
    const int kk = config.joints, hh = config.height, ww = config.width;
    Tensor out({kk, hh, ww});
    const double cutoff = 3.0 * config.sigma;
    const double inv2s2 = 1.0 / (2.0 * config.sigma * config.sigma);
    for (int k = 0; k < kk; ++k) {
        const Keypoint& kp = keypoints.joints[static_cast<std::size_t>(k)];
        if (!kp.visible) continue;
        const double cx = std::clamp(kp.x, 0.0, static_cast<double>(ww - 1));
        const double cy = std::clamp(kp.y, 0.0, static_cast<double>(hh - 1));
        const int v0 = std::max(0, static_cast<int>(std::ceil(cy - cutoff)));
        const int v1 = std::min(hh - 1, static_cast<int>(std::floor(cy + cutoff)));
        const int u0 = std::max(0, static_cast<int>(std::ceil(cx - cutoff)));
        const int u1 = std::min(ww - 1, static_cast<int>(std::floor(cx + cutoff)));
        for (int v = v0; v <= v1; ++v) {
            const double dy = v - cy;
            for (int u = u0; u <= u1; ++u) {
                const double dx = u - cx;
                out.at(k, v, u) = config.amplitude * std::exp(-(dx * dx + dy * dy) * inv2s2);
            }
        }
    }
    return out;
}

KeypointSet decode_keypoints(const Tensor& heatmap, const CodecConfig& config) {
    config.validate();
    check_shape(heatmap, {config.joints, config.height, config.width}, "decode_keypoints");
    const int hh = config.height, ww = config.width;
    KeypointSet out;
    out.joints.resize(static_cast<std::size_t>(config.joints));
    for (int k = 0; k < config.joints; ++k) {
        double best = -std::numeric_limits<double>::infinity();
        int by = 0, bx = 0;
        bool found = false;
        for (int v = 0; v < hh; ++v) {
            for (int u = 0; u < ww; ++u) {
                const double val = heatmap.at(k, v, u);
                if (val > best) {  // NaN compares false, so NaN never wins
                    best = val;
                    by = v;
                    bx = u;
                    found = true;
                }
            }
        }
        if (!found) throw NumericError("decode_keypoints: channel " + std::to_string(k) +
                                       " contains no comparable value (all NaN)");
        double x = bx, y = by;
        // Quarter-pixel refinement toward the larger neighbor; only applies
        // when both neighbors exist, so border peaks stay put.
        if (bx > 0 && bx < ww - 1) {
            const double l = heatmap.at(k, by, bx - 1), r = heatmap.at(k, by, bx + 1);
            if (r > l) x += 0.25;
            else if (l > r) x -= 0.25;
        }
        if (by > 0 && by < hh - 1) {
            const double up = heatmap.at(k, by - 1, bx), dn = heatmap.at(k, by + 1, bx);
            if (dn > up) y += 0.25;
            else if (up > dn) y -= 0.25;
        }
        out.joints[static_cast<std::size_t>(k)] = {
            x, y, best > config.visibility_threshold * config.amplitude};
    }
    return out;
}

Tensor normalize_for_diffusion(const Tensor& heatmap, const CodecConfig& config) {
    config.validate();
    Tensor out = heatmap;
    const double a = config.amplitude, s = config.signal_scale;
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = (2.0 * out[i] / a - 1.0) * s;
    return out;
}

Tensor denormalize_from_diffusion(const Tensor& heatmap, const CodecConfig& config) {
    config.validate();
    Tensor out = heatmap;
    const double a = config.amplitude, s = config.signal_scale;
    for (std::int64_t i = 0; i < out.numel(); ++i)
        out[i] = std::clamp((out[i] / s + 1.0) * 0.5 * a, 0.0, a);
    return out;
}

}  // namespace diffpose
