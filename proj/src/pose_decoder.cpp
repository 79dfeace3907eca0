#include "diffpose/pose_decoder.hpp"

#include "diffpose/errors.hpp"

namespace diffpose {

namespace {

// Output padding that lands a stride-2, kernel-3, pad-1 deconvolution from
// ceil(target/2) exactly on target.
int up_pad(int target) { return target % 2 == 0 ? 1 : 0; }

}  // namespace

void DecoderConfig::validate() const {
    if (joints <= 0) throw ConfigError("decoder: joint count must be positive");
    if (heat_h < 1 || heat_w < 1) throw ConfigError("decoder: heatmap size must be positive");
    if (cond_channels <= 0 || level1_channels <= 0 || level2_channels <= 0 ||
        level3_channels <= 0 || seref_channels <= 0 || head_channels <= 0)
        throw ConfigError("decoder: channel counts must be positive");
    if (fusion_depth < 1) throw ConfigError("decoder: fusion_depth must be >= 1");
    if (step_embed_dim < 2 || step_embed_dim % 2 != 0)
        throw ConfigError("decoder: step_embed_dim must be even and >= 2");
    if (num_heads <= 0 || seref_channels % num_heads != 0 ||
        (2 * level1_channels) % num_heads != 0)
        throw ConfigError("decoder: head count must divide seref and fused level-1 widths");
    if (total_steps < 1) throw ConfigError("decoder: total_steps must be >= 1");
}

void PoseDecoder::init(const DecoderConfig& config, Rng& rng) {
    config.validate();
    cfg_ = config;
    const int k = cfg_.joints;

    step_fc1_.init(cfg_.step_embed_dim, cfg_.step_embed_dim, rng);
    step_fc2_.init(cfg_.step_embed_dim, 2 * k, rng, /*zero_init=*/true);

    f1_up_.init(cfg_.cond_channels, cfg_.level1_channels, 3, 1, 1, rng);
    f1_up_.out_pad_h = f1_up_.out_pad_w = 0;
    f2_up_.init(cfg_.cond_channels, cfg_.level2_channels, 3, 2, 1, rng);
    f2_up_.out_pad_h = up_pad(cfg_.h2());
    f2_up_.out_pad_w = up_pad(cfg_.w2());
    f3_up_a_.init(cfg_.cond_channels, cfg_.level3_channels, 3, 2, 1, rng);
    f3_up_a_.out_pad_h = up_pad(cfg_.h2());
    f3_up_a_.out_pad_w = up_pad(cfg_.w2());
    f3_up_b_.init(cfg_.level3_channels, cfg_.level3_channels, 3, 2, 1, rng);
    f3_up_b_.out_pad_h = up_pad(cfg_.h3());
    f3_up_b_.out_pad_w = up_pad(cfg_.w3());

    x_down2_.init(k, k, 3, 2, 1, rng);
    x_down1_.init(k, k, 3, 2, 1, rng);

    l1_embed_.init(k, cfg_.seref_channels, rng);
    l1_seref_.init(cfg_.seref_channels, cfg_.num_heads, rng);
    l1_fusion_.resize(static_cast<std::size_t>(cfg_.fusion_depth));
    for (auto& blk : l1_fusion_) blk.init(2 * cfg_.level1_channels, cfg_.num_heads, rng);
    l1_up_a_.init(2 * cfg_.level1_channels, cfg_.head_channels, 3, 2, 1, rng);
    l1_up_a_.out_pad_h = up_pad(cfg_.h2());
    l1_up_a_.out_pad_w = up_pad(cfg_.w2());
    l1_up_b_.init(cfg_.head_channels, cfg_.head_channels, 3, 2, 1, rng);
    l1_up_b_.out_pad_h = up_pad(cfg_.h3());
    l1_up_b_.out_pad_w = up_pad(cfg_.w3());

    l2_seref1_.init(k, cfg_.seref_channels, 3, 1, 1, rng);
    l2_seref2_.init(cfg_.seref_channels, cfg_.seref_channels, 3, 1, 1, rng);
    l2_fusion_.resize(static_cast<std::size_t>(cfg_.fusion_depth));
    for (auto& c : l2_fusion_) c.init(2 * cfg_.level2_channels, 2 * cfg_.level2_channels, 3, 1, 1, rng);
    l2_up_.init(2 * cfg_.level2_channels, cfg_.head_channels, 3, 2, 1, rng);
    l2_up_.out_pad_h = up_pad(cfg_.h3());
    l2_up_.out_pad_w = up_pad(cfg_.w3());

    l3_seref1_.init(k, cfg_.seref_channels, 3, 1, 1, rng);
    l3_seref2_.init(cfg_.seref_channels, cfg_.seref_channels, 3, 1, 1, rng);
    l3_fusion_.resize(static_cast<std::size_t>(cfg_.fusion_depth));
    for (auto& c : l3_fusion_) c.init(2 * cfg_.level3_channels, 2 * cfg_.level3_channels, 3, 1, 1, rng);
    l3_up_.init(2 * cfg_.level3_channels, cfg_.head_channels, 3, 1, 1, rng);
    l3_up_.out_pad_h = l3_up_.out_pad_w = 0;

    head_.init(cfg_.head_channels, k, 3, 1, 1, rng);
}

nn::Node* PoseDecoder::embed_step_and_rescale(nn::Graph& g, nn::Node* x_t, int t) {
    if (t < 0 || t > cfg_.total_steps)
        throw RangeError("decoder: step t=" + std::to_string(t) + " outside [0, " +
                         std::to_string(cfg_.total_steps) + "]");
    nn::Node* emb = g.constant(nn::sinusoidal_embedding(static_cast<double>(t), cfg_.step_embed_dim));
    nn::Node* h = step_fc2_.forward(g, ad::gelu(g, step_fc1_.forward(g, emb)));
    nn::Node* scale = ad::slice_cols(g, h, 0, cfg_.joints);
    nn::Node* shift = ad::slice_cols(g, h, cfg_.joints, cfg_.joints);
    return ad::channel_affine(g, x_t, scale, shift);
}

std::pair<std::array<nn::Node*, 3>, std::array<nn::Node*, 3>> PoseDecoder::build_pyramids(
    nn::Graph& g, nn::Node* cond, nn::Node* x_bar_t) {
    check_shape(cond->value, {cfg_.cond_channels, cfg_.h1(), cfg_.w1()}, "decoder condition");
    check_shape(x_bar_t->value, {cfg_.joints, cfg_.h3(), cfg_.w3()}, "decoder heatmap input");
    std::array<nn::Node*, 3> f_levels{
        f1_up_.forward(g, cond),
        f2_up_.forward(g, cond),
        f3_up_b_.forward(g, f3_up_a_.forward(g, cond)),
    };
    nn::Node* x3 = x_bar_t;
    nn::Node* x2 = x_down2_.forward(g, x3);
    nn::Node* x1 = x_down1_.forward(g, x2);
    return {f_levels, {x1, x2, x3}};
}

nn::Node* PoseDecoder::lmsfi_low(nn::Graph& g, nn::Node* f1, nn::Node* x1) {
    check_shape(f1->value, {cfg_.level1_channels, cfg_.h1(), cfg_.w1()}, "lmsfi level-1 feature");
    check_shape(x1->value, {cfg_.joints, cfg_.h1(), cfg_.w1()}, "lmsfi level-1 heatmap");
    // SeRef: tokenize, embed, one transformer block.
    nn::Node* tok = l1_embed_.forward(g, ad::map_to_tokens(g, x1));
    tok = l1_seref_.forward(g, tok);
    nn::Node* refined = ad::tokens_to_map(g, tok, cfg_.h1(), cfg_.w1());
    // Sq: channel max, then sigmoid into the (0,1) mask.
    nn::Node* mask = ad::sigmoid(g, ad::channel_max(g, refined));
    nn::Node* retrieved = ad::spatial_scale(g, mask, f1);
    nn::Node* cat = ad::concat_channels(g, retrieved, f1);
    nn::Node* fused = ad::map_to_tokens(g, cat);
    for (auto& blk : l1_fusion_) fused = blk.forward(g, fused);
    nn::Node* map = ad::tokens_to_map(g, fused, cfg_.h1(), cfg_.w1());
    return l1_up_b_.forward(g, l1_up_a_.forward(g, map));
}

nn::Node* PoseDecoder::lmsfi_high(nn::Graph& g, nn::Node* fj, nn::Node* xj, int level) {
    if (level != 2 && level != 3) throw RangeError("lmsfi_high: level must be 2 or 3");
    const int h = level == 2 ? cfg_.h2() : cfg_.h3();
    const int w = level == 2 ? cfg_.w2() : cfg_.w3();
    const int ch = level == 2 ? cfg_.level2_channels : cfg_.level3_channels;
    check_shape(fj->value, {ch, h, w}, "lmsfi feature");
    check_shape(xj->value, {cfg_.joints, h, w}, "lmsfi heatmap");
    nn::Conv& s1 = level == 2 ? l2_seref1_ : l3_seref1_;
    nn::Conv& s2 = level == 2 ? l2_seref2_ : l3_seref2_;
    nn::Node* refined = ad::gelu(g, s2.forward(g, ad::gelu(g, s1.forward(g, xj))));
    nn::Node* mask = ad::sigmoid(g, ad::channel_max(g, refined));
    nn::Node* retrieved = ad::spatial_scale(g, mask, fj);
    nn::Node* cat = ad::concat_channels(g, retrieved, fj);
    auto& fusion = level == 2 ? l2_fusion_ : l3_fusion_;
    for (auto& c : fusion) cat = ad::gelu(g, c.forward(g, cat));
    return level == 2 ? l2_up_.forward(g, cat) : l3_up_.forward(g, cat);
}

nn::Node* PoseDecoder::fuse_and_head(nn::Graph& g, const std::array<nn::Node*, 3>& levels) {
    for (const nn::Node* lv : levels)
        check_shape(lv->value, {cfg_.head_channels, cfg_.h3(), cfg_.w3()}, "fuse_and_head level");
    nn::Node* sum = ad::add(g, ad::add(g, levels[0], levels[1]), levels[2]);
    return head_.forward(g, sum);
}

nn::Node* PoseDecoder::forward(nn::Graph& g, nn::Node* x_t, nn::Node* cond, int t) {
    nn::Node* x_bar = embed_step_and_rescale(g, x_t, t);
    auto [f_levels, x_levels] = build_pyramids(g, cond, x_bar);
    std::array<nn::Node*, 3> outs{
        lmsfi_low(g, f_levels[0], x_levels[0]),
        lmsfi_high(g, f_levels[1], x_levels[1], 2),
        lmsfi_high(g, f_levels[2], x_levels[2], 3),
    };
    return fuse_and_head(g, outs);
}

Tensor PoseDecoder::forward(const Tensor& x_t, const Tensor& cond, int t) {
    nn::Graph g;
    return forward(g, g.constant(x_t), g.constant(cond), t)->value;
}

void PoseDecoder::visit(const std::string& prefix, const nn::ParamFn& f) {
    step_fc1_.visit(prefix + ".step_fc1", f);
    step_fc2_.visit(prefix + ".step_fc2", f);
    f1_up_.visit(prefix + ".f1_up", f);
    f2_up_.visit(prefix + ".f2_up", f);
    f3_up_a_.visit(prefix + ".f3_up_a", f);
    f3_up_b_.visit(prefix + ".f3_up_b", f);
    x_down2_.visit(prefix + ".x_down2", f);
    x_down1_.visit(prefix + ".x_down1", f);
    l1_embed_.visit(prefix + ".l1_embed", f);
    l1_seref_.visit(prefix + ".l1_seref", f);
    for (std::size_t i = 0; i < l1_fusion_.size(); ++i)
        l1_fusion_[i].visit(prefix + ".l1_fusion." + std::to_string(i), f);
    l1_up_a_.visit(prefix + ".l1_up_a", f);
    l1_up_b_.visit(prefix + ".l1_up_b", f);
    l2_seref1_.visit(prefix + ".l2_seref1", f);
    l2_seref2_.visit(prefix + ".l2_seref2", f);
    for (std::size_t i = 0; i < l2_fusion_.size(); ++i)
        l2_fusion_[i].visit(prefix + ".l2_fusion." + std::to_string(i), f);
    l2_up_.visit(prefix + ".l2_up", f);
    l3_seref1_.visit(prefix + ".l3_seref1", f);
    l3_seref2_.visit(prefix + ".l3_seref2", f);
    for (std::size_t i = 0; i < l3_fusion_.size(); ++i)
        l3_fusion_[i].visit(prefix + ".l3_fusion." + std::to_string(i), f);
    l3_up_.visit(prefix + ".l3_up", f);
    head_.visit(prefix + ".head", f);
}

}  // namespace diffpose
