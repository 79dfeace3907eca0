#include "diffpose/nn.hpp"

#include <cmath>

#include "diffpose/errors.hpp"

namespace diffpose::nn {

void Linear::init(int in, int out, Rng& rng, bool zero_init) {
    w.init_zero({out, in});
    b.init_zero({out});
    if (!zero_init) {
        const double std = 1.0 / std::sqrt(static_cast<double>(in));
        for (std::int64_t i = 0; i < w.value.numel(); ++i) w.value[i] = rng.normal(0.0, std);
    }
}

Node* Linear::forward(Graph& g, Node* x) { return ad::linear(g, x, g.leaf(w), g.leaf(b)); }

void Linear::visit(const std::string& prefix, const ParamFn& f) {
    f(prefix + ".w", w);
    f(prefix + ".b", b);
}

void LayerNormLayer::init(int dim) {
    gamma.init_zero({dim});
    beta.init_zero({dim});
    gamma.value.fill(1.0);
}

Node* LayerNormLayer::forward(Graph& g, Node* x) {
    return ad::layer_norm(g, x, g.leaf(gamma), g.leaf(beta));
}

void LayerNormLayer::visit(const std::string& prefix, const ParamFn& f) {
    f(prefix + ".gamma", gamma);
    f(prefix + ".beta", beta);
}

void Attention::init(int dim, int heads_in, Rng& rng) {
    if (heads_in <= 0 || dim % heads_in != 0)
        throw ConfigError("attention width must be divisible by head count");
    heads = heads_in;
    scale = 1.0 / std::sqrt(static_cast<double>(dim / heads));
    q.init(dim, dim, rng);
    k.init(dim, dim, rng);
    v.init(dim, dim, rng);
    o.init(dim, dim, rng);
}

Node* Attention::forward(Graph& g, Node* x) {
    Node* qh = ad::split_heads(g, q.forward(g, x), heads);
    Node* kh = ad::split_heads(g, k.forward(g, x), heads);
    Node* vh = ad::split_heads(g, v.forward(g, x), heads);
    Node* att = ad::scale(g, ad::bmm(g, qh, ad::transpose_last2(g, kh)), scale);
    Node* ctx = ad::bmm(g, ad::softmax_last(g, att), vh);
    return o.forward(g, ad::merge_heads(g, ctx));
}

void Attention::visit(const std::string& prefix, const ParamFn& f) {
    q.visit(prefix + ".q", f);
    k.visit(prefix + ".k", f);
    v.visit(prefix + ".v", f);
    o.visit(prefix + ".o", f);
}

void FeedForward::init(int dim, int hidden, Rng& rng) {
    fc1.init(dim, hidden, rng);
    fc2.init(hidden, dim, rng);
}

Node* FeedForward::forward(Graph& g, Node* x) {
    return fc2.forward(g, ad::gelu(g, fc1.forward(g, x)));
}

void FeedForward::visit(const std::string& prefix, const ParamFn& f) {
    fc1.visit(prefix + ".fc1", f);
    fc2.visit(prefix + ".fc2", f);
}

void TransformerBlock::init(int dim, int heads, Rng& rng) {
    ln1.init(dim);
    attn.init(dim, heads, rng);
    ln2.init(dim);
    ffn.init(dim, 4 * dim, rng);
}

Node* TransformerBlock::forward(Graph& g, Node* x) {
    Node* h = ad::add(g, x, attn.forward(g, ln1.forward(g, x)));
    return ad::add(g, h, ffn.forward(g, ln2.forward(g, h)));
}

void TransformerBlock::visit(const std::string& prefix, const ParamFn& f) {
    ln1.visit(prefix + ".ln1", f);
    attn.visit(prefix + ".attn", f);
    ln2.visit(prefix + ".ln2", f);
    ffn.visit(prefix + ".ffn", f);
}

void Conv::init(int ci, int co, int k, int stride_in, int pad_in, Rng& rng) {
    stride = stride_in;
    pad = pad_in;
    w.init_zero({co, ci, k, k});
    b.init_zero({co});
    const double std = std::sqrt(2.0 / (static_cast<double>(ci) * k * k));
    for (std::int64_t i = 0; i < w.value.numel(); ++i) w.value[i] = rng.normal(0.0, std);
}

Node* Conv::forward(Graph& g, Node* x) {
    return ad::conv2d(g, x, g.leaf(w), g.leaf(b), stride, pad);
}

void Conv::visit(const std::string& prefix, const ParamFn& f) {
    f(prefix + ".w", w);
    f(prefix + ".b", b);
}

void ConvT::init(int ci, int co, int k, int stride_in, int pad_in, Rng& rng) {
    stride = stride_in;
    pad = pad_in;
    w.init_zero({ci, co, k, k});
    b.init_zero({co});
    const double std = std::sqrt(2.0 / (static_cast<double>(ci) * k * k));
    for (std::int64_t i = 0; i < w.value.numel(); ++i) w.value[i] = rng.normal(0.0, std);
}

Node* ConvT::forward(Graph& g, Node* x) {
    return ad::conv_transpose2d(g, x, g.leaf(w), g.leaf(b), stride, pad, out_pad_h, out_pad_w);
}

void ConvT::visit(const std::string& prefix, const ParamFn& f) {
    f(prefix + ".w", w);
    f(prefix + ".b", b);
}

Tensor sinusoidal_embedding(double t, int dim) {
    if (dim < 2 || dim % 2 != 0) throw ConfigError("sinusoidal embedding width must be even");
    Tensor e({1, dim});
    const int half = dim / 2;
    for (int i = 0; i < half; ++i) {
        const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) / half);
        e[2 * i] = std::sin(t * freq);
        e[2 * i + 1] = std::cos(t * freq);
    }
    return e;
}

}  // namespace diffpose::nn
