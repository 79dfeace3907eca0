#include "diffpose/strl.hpp"

#include "diffpose/errors.hpp"

namespace diffpose {

void ClipTensor::validate() const {
    if (delta < 0) throw ConfigError("clip: delta must be >= 0");
    if (static_cast<int>(frames.size()) != 2 * delta + 1)
        throw ConfigError("clip: expected " + std::to_string(2 * delta + 1) + " frames, got " +
                          std::to_string(frames.size()));
    for (const Tensor& f : frames) {
        if (f.rank() != 3) throw ShapeError("clip: frames must be rank-3 (C,H,W)");
        if (!f.same_shape(frames.front())) throw ShapeError("clip: frames must share dimensions");
    }
}

void StrlConfig::validate() const {
    if (image_channels <= 0 || image_height <= 0 || image_width <= 0)
        throw ConfigError("strl: image dimensions must be positive");
    if (patch_size <= 0) throw ConfigError("strl: patch_size must be positive");
    if (image_height % patch_size != 0 || image_width % patch_size != 0)
        throw ShapeError("strl: image dimensions must be divisible by patch_size");
    if (embed_dim <= 0 || embed_dim % num_heads != 0)
        throw ConfigError("strl: embed_dim must be a positive multiple of num_heads");
    if (backbone_layers < 0 || fusion_layers < 1)
        throw ConfigError("strl: layer counts out of range");
    if (delta < 0) throw ConfigError("strl: delta must be >= 0");
    if (cond_channels <= 0) throw ConfigError("strl: cond_channels must be positive");
}

void Strl::init(const StrlConfig& config, Rng& rng) {
    config.validate();
    cfg_ = config;
    const int patch_dim = cfg_.image_channels * cfg_.patch_size * cfg_.patch_size;
    patch_embed_.init(patch_dim, cfg_.embed_dim, rng);
    backbone_.resize(static_cast<std::size_t>(cfg_.backbone_layers));
    for (auto& blk : backbone_) blk.init(cfg_.embed_dim, cfg_.num_heads, rng);
    // One learnable row per (frame, token) pair, 0.02-std normal.
    e_pos_.init_zero({cfg_.frame_count() * cfg_.tokens_per_frame(), cfg_.embed_dim});
    for (std::int64_t i = 0; i < e_pos_.value.numel(); ++i)
        e_pos_.value[i] = rng.normal(0.0, 0.02);
    fusion_.resize(static_cast<std::size_t>(cfg_.fusion_layers));
    for (auto& blk : fusion_) blk.init(cfg_.embed_dim, cfg_.num_heads, rng);
    final_ln_.init(cfg_.embed_dim);
    mlp1_.init(cfg_.embed_dim, cfg_.embed_dim, rng);
    mlp2_.init(cfg_.embed_dim, cfg_.cond_channels, rng);
}

nn::Node* Strl::extract_frame_features(nn::Graph& g, const Tensor& frame) {
    if (frame.rank() != 3 || frame.dim(0) != cfg_.image_channels)
        throw ShapeError("strl: frame must be (" + std::to_string(cfg_.image_channels) + ",H,W)");
    const int h = frame.dim(1), w = frame.dim(2), ps = cfg_.patch_size;
    if (h != cfg_.image_height || w != cfg_.image_width)
        throw ShapeError("strl: frame size " + frame.shape_str() + " does not match config");
    const int gh = h / ps, gw = w / ps;
    const int patch_dim = cfg_.image_channels * ps * ps;
    Tensor patches({gh * gw, patch_dim});
    for (int py = 0; py < gh; ++py) {
        for (int px = 0; px < gw; ++px) {
            double* row = patches.data() + static_cast<std::int64_t>(py * gw + px) * patch_dim;
            int idx = 0;
            for (int c = 0; c < cfg_.image_channels; ++c)
                for (int dy = 0; dy < ps; ++dy)
                    for (int dx = 0; dx < ps; ++dx)
                        row[idx++] = frame.at(c, py * ps + dy, px * ps + dx);
        }
    }
    nn::Node* tokens = patch_embed_.forward(g, g.constant(std::move(patches)));
    for (auto& blk : backbone_) tokens = blk.forward(g, tokens);
    return tokens;
}

nn::Node* Strl::fuse_temporal(nn::Graph& g, const std::vector<nn::Node*>& features) {
    if (static_cast<int>(features.size()) != cfg_.frame_count())
        throw ConfigError("strl: expected " + std::to_string(cfg_.frame_count()) +
                          " frame features, got " + std::to_string(features.size()));
    nn::Node* seq = ad::concat_rows(g, features);
    seq = ad::add(g, seq, g.leaf(e_pos_));
    for (auto& blk : fusion_) seq = blk.forward(g, seq);
    seq = final_ln_.forward(g, seq);
    seq = mlp2_.forward(g, ad::gelu(g, mlp1_.forward(g, seq)));
    nn::Node* per_token = ad::temporal_mean(g, seq, cfg_.frame_count());
    return ad::tokens_to_map(g, per_token, cfg_.grid_h(), cfg_.grid_w());
}

nn::Node* Strl::forward(nn::Graph& g, const ClipTensor& clip) {
    clip.validate();
    if (clip.delta != cfg_.delta) throw ConfigError("strl: clip delta does not match config");
    std::vector<nn::Node*> feats;
    feats.reserve(clip.frames.size());
    for (const Tensor& f : clip.frames) feats.push_back(extract_frame_features(g, f));
    return fuse_temporal(g, feats);
}

void Strl::visit(const std::string& prefix, const nn::ParamFn& f) {
    patch_embed_.visit(prefix + ".patch_embed", f);
    for (std::size_t i = 0; i < backbone_.size(); ++i)
        backbone_[i].visit(prefix + ".backbone." + std::to_string(i), f);
    f(prefix + ".e_pos", e_pos_);
    for (std::size_t i = 0; i < fusion_.size(); ++i)
        fusion_[i].visit(prefix + ".fusion." + std::to_string(i), f);
    final_ln_.visit(prefix + ".final_ln", f);
    mlp1_.visit(prefix + ".mlp1", f);
    mlp2_.visit(prefix + ".mlp2", f);
}

}  // namespace diffpose
