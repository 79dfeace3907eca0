#pragma once

#include <array>
#include <utility>
#include <vector>

#include "diffpose/nn.hpp"
#include "diffpose/tensor.hpp"

namespace diffpose {

struct DecoderConfig {
    int joints = 5;
    int heat_h = 16;
    int heat_w = 12;
    int cond_channels = 32;
    int level1_channels = 64;
    int level2_channels = 32;
    int level3_channels = 16;
    int seref_channels = 32;
    int fusion_depth = 2;
    int head_channels = 32;
    int step_embed_dim = 64;
    int num_heads = 4;
    int total_steps = 1000;

    // Pyramid ladder: level 3 is the heatmap itself, each coarser level
    // halves (ceil) the spatial size; the condition lives at level 1.
    int h3() const { return heat_h; }
    int w3() const { return heat_w; }
    int h2() const { return (heat_h + 1) / 2; }
    int w2() const { return (heat_w + 1) / 2; }
    int h1() const { return (h2() + 1) / 2; }
    int w1() const { return (w2() + 1) / 2; }
    void validate() const;
};

// Denoiser f_theta(x_t, F, t): step-embedding rescale, size-matched pyramid
// construction, mask-guided multiscale interaction per level, additive fusion
// and a 3x3 head producing the predicted clean heatmap.
class PoseDecoder {
  public:
    void init(const DecoderConfig& config, Rng& rng);

    // x_bar_t = x_t * (1 + scale(t)) + shift(t), channel-wise.  The shared
    // MLP output head starts at zero, so this is the identity at init.
    nn::Node* embed_step_and_rescale(nn::Graph& g, nn::Node* x_t, int t);

    // Returns ({F1,F2,F3}, {x1,x2,x3}): deconvolved condition levels at
    // 1x/2x/4x and stride-2-downsampled heatmap levels; x3 is x_bar_t itself.
    std::pair<std::array<nn::Node*, 3>, std::array<nn::Node*, 3>> build_pyramids(
        nn::Graph& g, nn::Node* cond, nn::Node* x_bar_t);

    // Level 1: transformer SeRef on the tokenized heatmap, channel-max
    // squeeze, sigmoid mask, masked retrieval, concat fusion through
    // transformer blocks, then two 2x deconvolutions up to full resolution.
    nn::Node* lmsfi_low(nn::Graph& g, nn::Node* f1, nn::Node* x1);

    // Levels 2/3: same pipeline with convolutional SeRef/fusion; level 2 ends
    // in one 2x deconvolution, level 3 in a size-preserving one.
    nn::Node* lmsfi_high(nn::Graph& g, nn::Node* fj, nn::Node* xj, int level);

    // Element-wise sum of the three aligned levels, then the 3x3 K-channel
    // head.
    nn::Node* fuse_and_head(nn::Graph& g, const std::array<nn::Node*, 3>& levels);

    nn::Node* forward(nn::Graph& g, nn::Node* x_t, nn::Node* cond, int t);
    Tensor forward(const Tensor& x_t, const Tensor& cond, int t);

    void visit(const std::string& prefix, const nn::ParamFn& f);
    const DecoderConfig& config() const { return cfg_; }

  private:
    DecoderConfig cfg_;
    nn::Linear step_fc1_, step_fc2_;
    nn::ConvT f1_up_, f2_up_, f3_up_a_, f3_up_b_;
    nn::Conv x_down2_, x_down1_;
    nn::Linear l1_embed_;
    nn::TransformerBlock l1_seref_;
    std::vector<nn::TransformerBlock> l1_fusion_;
    nn::ConvT l1_up_a_, l1_up_b_;
    nn::Conv l2_seref1_, l2_seref2_;
    std::vector<nn::Conv> l2_fusion_;
    nn::ConvT l2_up_;
    nn::Conv l3_seref1_, l3_seref2_;
    std::vector<nn::Conv> l3_fusion_;
    nn::ConvT l3_up_;
    nn::Conv head_;
};

}  // namespace diffpose
