#pragma once

#include <functional>
#include <string>
#include <vector>

#include "diffpose/autodiff.hpp"
#include "diffpose/rng.hpp"

namespace diffpose::nn {

using ad::Graph;
using ad::Node;
using ad::Param;

// Callback over (dotted name, param).  Visit order is the canonical
// serialization / optimizer order and must stay stable.
using ParamFn = std::function<void(const std::string&, Param&)>;

struct Linear {
    Param w, b;  // w:(out,in) b:(out)

    // Xavier-style normal init, std = 1/sqrt(fan_in); zero_init forces all
    // weights and biases to zero (used for heads that must start as identity).
    void init(int in, int out, Rng& rng, bool zero_init = false);
    Node* forward(Graph& g, Node* x);
    void visit(const std::string& prefix, const ParamFn& f);
};

struct LayerNormLayer {
    Param gamma, beta;

    void init(int dim);
    Node* forward(Graph& g, Node* x);
    void visit(const std::string& prefix, const ParamFn& f);
};

struct Attention {
    Linear q, k, v, o;
    int heads = 1;
    double scale = 1.0;

    void init(int dim, int heads, Rng& rng);
    Node* forward(Graph& g, Node* x);
    void visit(const std::string& prefix, const ParamFn& f);
};

struct FeedForward {
    Linear fc1, fc2;

    void init(int dim, int hidden, Rng& rng);
    Node* forward(Graph& g, Node* x);
    void visit(const std::string& prefix, const ParamFn& f);
};

// Pre-norm transformer block: x + attn(ln(x)), then x + ffn(ln(x)).
struct TransformerBlock {
    LayerNormLayer ln1, ln2;
    Attention attn;
    FeedForward ffn;

    void init(int dim, int heads, Rng& rng);
    Node* forward(Graph& g, Node* x);
    void visit(const std::string& prefix, const ParamFn& f);
};

struct Conv {
    Param w, b;  // w:(Co,Ci,k,k)
    int stride = 1, pad = 0;

    // He-style normal init, std = sqrt(2/fan_in).
    void init(int ci, int co, int k, int stride, int pad, Rng& rng);
    Node* forward(Graph& g, Node* x);
    void visit(const std::string& prefix, const ParamFn& f);
};

struct ConvT {
    Param w, b;  // w:(Ci,Co,k,k)
    int stride = 2, pad = 1, out_pad_h = 1, out_pad_w = 1;

    void init(int ci, int co, int k, int stride, int pad, Rng& rng);
    Node* forward(Graph& g, Node* x);
    void visit(const std::string& prefix, const ParamFn& f);
};

// Sinusoidal position/step embedding of width dim (even), as a (1,dim) tensor.
Tensor sinusoidal_embedding(double t, int dim);

}  // namespace diffpose::nn
