#include "diffpose/config.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <set>

#include "diffpose/errors.hpp"

namespace diffpose {

namespace {

// Field table: one entry per config key, with typed read/write thunks.
struct Field {
    const char* key;
    std::function<void(PipelineConfig&, const Json&)> read;
    std::function<Json(const PipelineConfig&)> write;
};

template <class T>
T get_as(const Json& v, const char* key) {
    try {
        return v.get<T>();
    } catch (const Json::exception&) {
        throw ConfigError(std::string("config key '") + key + "' has the wrong type");
    }
}

#define INT_FIELD(name)                                                          \
    Field{#name, [](PipelineConfig& c, const Json& v) { c.name = get_as<int>(v, #name); }, \
          [](const PipelineConfig& c) { return Json(c.name); }}
#define REAL_FIELD(name)                                                         \
    Field{#name,                                                                 \
          [](PipelineConfig& c, const Json& v) { c.name = get_as<double>(v, #name); }, \
          [](const PipelineConfig& c) { return Json(c.name); }}

const std::vector<Field>& fields() {
    static const std::vector<Field> table = {
        Field{"seed",
              [](PipelineConfig& c, const Json& v) {
                  c.seed = get_as<std::uint64_t>(v, "seed");
              },
              [](const PipelineConfig& c) { return Json(c.seed); }},
        INT_FIELD(joints),
        INT_FIELD(scene_height),
        INT_FIELD(scene_width),
        INT_FIELD(input_height),
        INT_FIELD(input_width),
        INT_FIELD(heatmap_height),
        INT_FIELD(heatmap_width),
        REAL_FIELD(sigma),
        REAL_FIELD(amplitude),
        REAL_FIELD(signal_scale),
        REAL_FIELD(visibility_threshold),
        INT_FIELD(delta),
        REAL_FIELD(motion_amplitude),
        REAL_FIELD(motion_frequency),
        REAL_FIELD(limb_thickness),
        REAL_FIELD(blob_radius),
        REAL_FIELD(background_noise_std),
        REAL_FIELD(occlusion_prob),
        REAL_FIELD(frame_corruption_prob),
        REAL_FIELD(hard_fraction),
        INT_FIELD(diffusion_steps),
        REAL_FIELD(schedule_offset),
        INT_FIELD(patch_size),
        INT_FIELD(embed_dim),
        INT_FIELD(backbone_layers),
        INT_FIELD(fusion_layers),
        INT_FIELD(num_heads),
        INT_FIELD(cond_channels),
        INT_FIELD(level1_channels),
        INT_FIELD(level2_channels),
        INT_FIELD(level3_channels),
        INT_FIELD(seref_channels),
        INT_FIELD(fusion_depth),
        INT_FIELD(head_channels),
        INT_FIELD(step_embed_dim),
        INT_FIELD(epochs),
        INT_FIELD(batch_size),
        REAL_FIELD(base_lr),
        REAL_FIELD(weight_decay),
        Field{"lr_decay_epochs",
              [](PipelineConfig& c, const Json& v) {
                  c.lr_decay_epochs = get_as<std::vector<int>>(v, "lr_decay_epochs");
              },
              [](const PipelineConfig& c) { return Json(c.lr_decay_epochs); }},
        INT_FIELD(infer_steps),
        INT_FIELD(ensemble_size),
    };
    return table;
}

#undef INT_FIELD
#undef REAL_FIELD

}  // namespace

PipelineConfig PipelineConfig::from_json(const Json& j) {
    if (!j.is_object()) throw ConfigError("config: top-level JSON value must be an object");
    PipelineConfig cfg;
    std::set<std::string> known;
    for (const Field& f : fields()) known.insert(f.key);
    for (const auto& [key, value] : j.items()) {
        if (!known.count(key)) throw ConfigError("config: unknown key '" + key + "'");
        (void)value;
    }
    for (const Field& f : fields())
        if (j.contains(f.key)) f.read(cfg, j.at(f.key));
    cfg.validate();
    return cfg;
}

PipelineConfig PipelineConfig::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("config: cannot open '" + path + "'");
    Json j;
    try {
        in >> j;
    } catch (const Json::exception& e) {
        throw ParseError("config: invalid JSON in '" + path + "': " + e.what());
    }
    return from_json(j);
}

Json PipelineConfig::to_json() const {
    Json j = Json::object();
    for (const Field& f : fields()) j[f.key] = f.write(*this);
    return j;
}

void PipelineConfig::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw IoError("config: cannot write '" + path + "'");
    out << to_json().dump(2) << "\n";
}

void PipelineConfig::validate() const {
    codec().validate();
    strl().validate();
    decoder().validate();
    if (scene_height <= 0 || scene_width <= 0)
        throw ConfigError("config: scene dimensions must be positive");
    if (motion_amplitude < 0 || motion_frequency < 0)
        throw ConfigError("config: motion parameters must be non-negative");
    if (limb_thickness <= 0 || blob_radius <= 0)
        throw ConfigError("config: render parameters must be positive");
    if (background_noise_std < 0) throw ConfigError("config: noise std must be non-negative");
    if (occlusion_prob < 0 || occlusion_prob > 1 || frame_corruption_prob < 0 ||
        frame_corruption_prob > 1 || hard_fraction < 0 || hard_fraction > 1)
        throw ConfigError("config: probabilities must lie in [0, 1]");
    if (schedule_offset <= 0) throw ConfigError("config: schedule_offset must be positive");
    if (epochs < 1 || batch_size < 1) throw ConfigError("config: epochs and batch_size must be >= 1");
    if (base_lr <= 0 || weight_decay < 0)
        throw ConfigError("config: base_lr must be positive, weight_decay non-negative");
    for (int e : lr_decay_epochs)
        if (e < 1) throw ConfigError("config: lr_decay_epochs entries must be >= 1");
    if (infer_steps < 1 || infer_steps > diffusion_steps)
        throw ConfigError("config: infer_steps must lie in [1, diffusion_steps]");
    if (ensemble_size < 1) throw ConfigError("config: ensemble_size must be >= 1");
    // The condition grid produced by STRL must coincide with the coarsest
    // pyramid level of the decoder.
    const StrlConfig sc = strl();
    const DecoderConfig dc = decoder();
    if (sc.grid_h() != dc.h1() || sc.grid_w() != dc.w1())
        throw ConfigError("config: patch grid " + std::to_string(sc.grid_h()) + "x" +
                          std::to_string(sc.grid_w()) + " must equal the coarsest pyramid level " +
                          std::to_string(dc.h1()) + "x" + std::to_string(dc.w1()));
}

CodecConfig PipelineConfig::codec() const {
    CodecConfig c;
    c.joints = joints;
    c.height = heatmap_height;
    c.width = heatmap_width;
    c.sigma = sigma;
    c.amplitude = amplitude;
    c.signal_scale = signal_scale;
    c.visibility_threshold = visibility_threshold;
    return c;
}

StrlConfig PipelineConfig::strl() const {
    StrlConfig c;
    c.image_channels = 1;
    c.image_height = input_height;
    c.image_width = input_width;
    c.patch_size = patch_size;
    c.embed_dim = embed_dim;
    c.backbone_layers = backbone_layers;
    c.fusion_layers = fusion_layers;
    c.num_heads = num_heads;
    c.delta = delta;
    c.cond_channels = cond_channels;
    return c;
}

DecoderConfig PipelineConfig::decoder() const {
    DecoderConfig c;
    c.joints = joints;
    c.heat_h = heatmap_height;
    c.heat_w = heatmap_width;
    c.cond_channels = cond_channels;
    c.level1_channels = level1_channels;
    c.level2_channels = level2_channels;
    c.level3_channels = level3_channels;
    c.seref_channels = seref_channels;
    c.fusion_depth = fusion_depth;
    c.head_channels = head_channels;
    c.step_embed_dim = step_embed_dim;
    c.num_heads = num_heads;
    c.total_steps = diffusion_steps;
    return c;
}

double PipelineConfig::lr_at_epoch(int epoch) const {
    double lr = base_lr;
    for (int e : lr_decay_epochs)
        if (epoch >= e) lr *= 0.1;
    return lr;
}

void apply_env_overrides(PipelineConfig& config) {
    if (const char* env = std::getenv("DIFFPOSE_SEED")) {
        char* end = nullptr;
        const unsigned long long v = std::strtoull(env, &end, 10);
        if (end == env || *end != '\0')
            throw ConfigError("DIFFPOSE_SEED must be an unsigned integer");
        config.seed = static_cast<std::uint64_t>(v);
    }
}

}  // namespace diffpose
