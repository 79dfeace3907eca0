#include "diffpose/synthetic.hpp"

#include <algorithm>
#include <cmath>

#include "diffpose/errors.hpp"
#include "diffpose/rng.hpp"

namespace diffpose {

void SyntheticSceneConfig::validate() const {
    if (joints < 2) throw ConfigError("scene: need at least a hub and one limb joint");
    if (height < 16 || width < 16) throw ConfigError("scene: image too small");
    if (delta < 0) throw ConfigError("scene: delta must be >= 0");
    if (motion_amplitude < 0 || motion_frequency < 0)
        throw ConfigError("scene: motion parameters must be non-negative");
    if (limb_thickness <= 0 || blob_radius <= 0)
        throw ConfigError("scene: render parameters must be positive");
    if (background_noise_std < 0) throw ConfigError("scene: noise std must be non-negative");
    if (occlusion_prob < 0 || occlusion_prob > 1 || frame_corruption_prob < 0 ||
        frame_corruption_prob > 1)
        throw ConfigError("scene: probabilities must lie in [0, 1]");
}

SyntheticSceneConfig SyntheticSceneConfig::from_pipeline(const PipelineConfig& cfg) {
    SyntheticSceneConfig s;
    s.joints = cfg.joints;
    s.height = cfg.scene_height;
    s.width = cfg.scene_width;
    s.delta = cfg.delta;
    s.motion_amplitude = cfg.motion_amplitude;
    s.motion_frequency = cfg.motion_frequency;
    s.limb_thickness = cfg.limb_thickness;
    s.blob_radius = cfg.blob_radius;
    s.background_noise_std = cfg.background_noise_std;
    s.occlusion_prob = cfg.occlusion_prob;
    s.frame_corruption_prob = cfg.frame_corruption_prob;
    return s;
}

namespace {

double segment_distance(double px, double py, double ax, double ay, double bx, double by) {
    const double vx = bx - ax, vy = by - ay;
    const double len2 = vx * vx + vy * vy;
    double t = len2 > 0.0 ? ((px - ax) * vx + (py - ay) * vy) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    const double dx = px - (ax + t * vx), dy = py - (ay + t * vy);
    return std::sqrt(dx * dx + dy * dy);
}

}  // namespace

SyntheticClip generate_synthetic_clip(const SyntheticSceneConfig& config, std::uint64_t seed) {
    config.validate();
    Rng rng(seed);
    const int k = config.joints, frames = 2 * config.delta + 1;
    const double margin = config.blob_radius + 2.0;
    const double reach = 0.22 * std::min(config.height, config.width);

    // Hub rest position: the whole figure (limb reach + motion excursion)
    // must fit inside the frame with the render margin.
    const double span = reach + config.motion_amplitude + margin;
    if (2.0 * span >= std::min(config.height, config.width))
        throw GenerationError("scene: figure does not fit (reach + motion exceed frame)");
    const double hub_x = config.width / 2.0 + rng.uniform(-1.0, 1.0) * (config.width / 2.0 - span);
    const double hub_y =
        config.height / 2.0 + rng.uniform(-1.0, 1.0) * (config.height / 2.0 - span);

    // Trajectory parameters: hub translation plus per-limb angle oscillation.
    const double hub_amp_x = rng.uniform(0.5, 1.0) * config.motion_amplitude;
    const double hub_amp_y = rng.uniform(0.5, 1.0) * config.motion_amplitude;
    const double hub_freq = rng.uniform(0.5, 1.0) * config.motion_frequency;
    const double hub_phase_x = rng.uniform(0.0, 2.0 * M_PI);
    const double hub_phase_y = rng.uniform(0.0, 2.0 * M_PI);
    std::vector<double> limb_r(static_cast<std::size_t>(k - 1));
    std::vector<double> limb_angle(limb_r.size()), limb_osc(limb_r.size()),
        limb_freq(limb_r.size()), limb_phase(limb_r.size());
    for (std::size_t i = 0; i < limb_r.size(); ++i) {
        limb_r[i] = rng.uniform(0.55, 1.0) * reach;
        limb_angle[i] =
            2.0 * M_PI * static_cast<double>(i) / static_cast<double>(k - 1) + rng.uniform(-0.3, 0.3);
        limb_osc[i] = rng.uniform(0.3, 1.0) * config.motion_amplitude / limb_r[i];
        limb_freq[i] = rng.uniform(0.5, 1.0) * config.motion_frequency;
        limb_phase[i] = rng.uniform(0.0, 2.0 * M_PI);
    }

    // Occlusion is a per-(joint, clip) event: it silences the joint in every
    // frame of the clip.
    std::vector<bool> occluded(static_cast<std::size_t>(k));
    for (int j = 0; j < k; ++j) occluded[static_cast<std::size_t>(j)] = rng.uniform() < config.occlusion_prob;

    std::vector<bool> corrupted(static_cast<std::size_t>(frames));
    for (int f = 0; f < frames; ++f)
        corrupted[static_cast<std::size_t>(f)] = rng.uniform() < config.frame_corruption_prob;

    // Joint positions for every frame, keyframe at tau = 0.
    std::vector<std::vector<std::pair<double, double>>> pos(
        static_cast<std::size_t>(frames),
        std::vector<std::pair<double, double>>(static_cast<std::size_t>(k)));
    for (int f = 0; f < frames; ++f) {
        const double tau = static_cast<double>(f - config.delta);
        const double hx = hub_x + hub_amp_x * std::sin(2.0 * M_PI * hub_freq * tau + hub_phase_x);
        const double hy = hub_y + hub_amp_y * std::sin(2.0 * M_PI * hub_freq * tau + hub_phase_y);
        pos[static_cast<std::size_t>(f)][0] = {hx, hy};
        for (std::size_t i = 0; i < limb_r.size(); ++i) {
            const double ang = limb_angle[i] +
                               limb_osc[i] * std::sin(2.0 * M_PI * limb_freq[i] * tau + limb_phase[i]);
            pos[static_cast<std::size_t>(f)][i + 1] = {hx + limb_r[i] * std::cos(ang),
                                                       hy + limb_r[i] * std::sin(ang)};
        }
        for (int j = 0; j < k; ++j) {
            if (occluded[static_cast<std::size_t>(j)]) continue;
            const auto [x, y] = pos[static_cast<std::size_t>(f)][static_cast<std::size_t>(j)];
            if (x < margin || x > config.width - 1 - margin || y < margin ||
                y > config.height - 1 - margin)
                throw GenerationError("scene: visible joint " + std::to_string(j) +
                                      " leaves the frame at frame " + std::to_string(f));
        }
    }

    const double sig_blob = config.blob_radius / 2.0;
    const double sig_line = config.limb_thickness / 2.0;
    SyntheticClip out;
    out.clip.delta = config.delta;
    out.clip.frames.reserve(static_cast<std::size_t>(frames));
    out.ground_truth.resize(static_cast<std::size_t>(frames));
    out.corrupted_keyframe = corrupted[static_cast<std::size_t>(config.delta)];

    for (int f = 0; f < frames; ++f) {
        const auto& joints = pos[static_cast<std::size_t>(f)];
        Tensor img({1, config.height, config.width});
        for (int v = 0; v < config.height; ++v) {
            for (int u = 0; u < config.width; ++u) {
                double val = 0.0;
                // Limbs: soft line from hub to each visible endpoint.
                for (std::size_t i = 0; i < limb_r.size(); ++i) {
                    if (occluded[i + 1]) continue;
                    const double d = segment_distance(u, v, joints[0].first, joints[0].second,
                                                      joints[i + 1].first, joints[i + 1].second);
                    if (d < 4.0 * sig_line)
                        val += 0.45 * std::exp(-d * d / (2.0 * sig_line * sig_line));
                }
                // Joint blobs.
                for (int j = 0; j < k; ++j) {
                    if (occluded[static_cast<std::size_t>(j)]) continue;
                    const double dx = u - joints[static_cast<std::size_t>(j)].first;
                    const double dy = v - joints[static_cast<std::size_t>(j)].second;
                    const double d2 = dx * dx + dy * dy;
                    if (d2 < 16.0 * sig_blob * sig_blob)
                        val += 0.95 * std::exp(-d2 / (2.0 * sig_blob * sig_blob));
                }
                img.at(0, v, u) = std::min(val, 1.0);
            }
        }
        // Per-pixel background noise; draws happen even at std = 0 so the
        // random stream layout does not depend on the configuration.
        for (int v = 0; v < config.height; ++v)
            for (int u = 0; u < config.width; ++u)
                img.at(0, v, u) += config.background_noise_std * rng.normal();
        if (corrupted[static_cast<std::size_t>(f)]) {
            for (int v = 0; v < config.height; ++v)
                for (int u = 0; u < config.width; ++u) {
                    const double crushed = 0.5 + (img.at(0, v, u) - 0.5) * 0.25;
                    img.at(0, v, u) = crushed + 0.1 * rng.normal();
                }
        }
        // Quantize to 8 bits so the in-memory clip equals its on-disk image
        // byte for byte.
        for (std::int64_t i = 0; i < img.numel(); ++i) {
            const double q = std::lround(std::clamp(img[i], 0.0, 1.0) * 255.0);
            img[i] = q / 255.0;
        }
        out.clip.frames.push_back(std::move(img));

        KeypointSet& gt = out.ground_truth[static_cast<std::size_t>(f)];
        gt.joints.resize(static_cast<std::size_t>(k));
        for (int j = 0; j < k; ++j)
            gt.joints[static_cast<std::size_t>(j)] = {joints[static_cast<std::size_t>(j)].first,
                                                      joints[static_cast<std::size_t>(j)].second,
                                                      !occluded[static_cast<std::size_t>(j)]};
    }

    // Tight keyframe box around every joint (occluded ones included: the
    // person occupies the space either way), padded by the blob footprint.
    const auto& key = pos[static_cast<std::size_t>(config.delta)];
    double min_x = key[0].first, max_x = key[0].first;
    double min_y = key[0].second, max_y = key[0].second;
    for (const auto& [x, y] : key) {
        min_x = std::min(min_x, x);
        max_x = std::max(max_x, x);
        min_y = std::min(min_y, y);
        max_y = std::max(max_y, y);
    }
    const double pad = config.blob_radius + 2.0;
    out.bbox = {std::max(0.0, min_x - pad), std::max(0.0, min_y - pad),
                std::min(static_cast<double>(config.width), max_x + pad) -
                    std::max(0.0, min_x - pad),
                std::min(static_cast<double>(config.height), max_y + pad) -
                    std::max(0.0, min_y - pad)};
    return out;
}

}  // namespace diffpose
