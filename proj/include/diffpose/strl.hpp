#pragma once

#include <vector>

#include "diffpose/nn.hpp"
#include "diffpose/tensor.hpp"

namespace diffpose {

// A (2*delta+1)-frame window centered on the keyframe; every frame is
// C_img x H_img x W_img.
struct ClipTensor {
    std::vector<Tensor> frames;
    int delta = 0;

    int keyframe() const { return delta; }
    void validate() const;
};

struct StrlConfig {
    int image_channels = 1;
    int image_height = 64;
    int image_width = 48;
    int patch_size = 16;
    int embed_dim = 64;
    int backbone_layers = 2;
    int fusion_layers = 2;
    int num_heads = 4;
    int delta = 2;
    int cond_channels = 32;

    int grid_h() const { return image_height / patch_size; }
    int grid_w() const { return image_width / patch_size; }
    int tokens_per_frame() const { return grid_h() * grid_w(); }
    int frame_count() const { return 2 * delta + 1; }
    void validate() const;
};

// SpatioTemporal Representation Learner: per-frame patch-embedding
// transformer, then temporal fusion over the concatenated token sequence with
// a learnable (frame, token) position table, finishing in a per-token MLP and
// a temporal average that lands on the keyframe's spatial grid.  Spatial
// position information deliberately lives only in the fusion table: the
// per-frame backbone sees bare patch embeddings.
class Strl {
  public:
    void init(const StrlConfig& config, Rng& rng);

    // Tokens (P, embed_dim) for one frame.  The frame enters the graph as a
    // constant; gradients flow into the embedding and encoder weights.
    nn::Node* extract_frame_features(nn::Graph& g, const Tensor& frame);

    // Condition map (cond_channels, grid_h, grid_w) from 2*delta+1 token sets.
    nn::Node* fuse_temporal(nn::Graph& g, const std::vector<nn::Node*>& features);

    nn::Node* forward(nn::Graph& g, const ClipTensor& clip);

    void visit(const std::string& prefix, const nn::ParamFn& f);
    const StrlConfig& config() const { return cfg_; }

  private:
    StrlConfig cfg_;
    nn::Linear patch_embed_;
    std::vector<nn::TransformerBlock> backbone_;
    ad::Param e_pos_;
    std::vector<nn::TransformerBlock> fusion_;
    nn::LayerNormLayer final_ln_;
    nn::Linear mlp1_, mlp2_;
};

}  // namespace diffpose
