#pragma once

#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "diffpose/tensor.hpp"

namespace diffpose::ad {

// Trainable parameter.  Value/grad plus Adam moments.  Params are owned by
// model structs; graphs only reference them, so several per-sample graphs can
// share one parameter set (values are read-only during forward/backward and
// gradient accumulation happens afterwards in a fixed order).
struct Param {
    std::string key;
    Tensor value;
    Tensor grad;
    Tensor m;
    Tensor v;

    void init_zero(std::vector<int> shape) {
        value = Tensor::zeros(shape);
        reset_state();
    }
    void reset_state() {
        grad = Tensor::zeros(value.shape());
        m = Tensor::zeros(value.shape());
        v = Tensor::zeros(value.shape());
    }
};

class Graph;

struct Node {
    Tensor value;
    Tensor grad;
    bool needs_grad = false;
    bool grad_init = false;
    Param* param = nullptr;
    std::function<void(Graph&)> backward;

    // Gradient buffer, allocated on first touch.
    Tensor& g() {
        if (!grad_init) {
            grad = Tensor::zeros(value.shape());
            grad_init = true;
        }
        return grad;
    }
};

// Tape-style reverse-mode graph.  Node creation order is a topological order,
// so backward() is just a reverse sweep.
class Graph {
  public:
    Node* constant(Tensor v);
    Node* leaf(Param& p);
    Node* make(Tensor v, bool needs_grad, std::function<void(Graph&)> back = nullptr);

    // Seeds d(loss)/d(loss) = 1 and sweeps the tape.  loss must be a scalar.
    void backward(Node* loss);

    // Adds scale * d(loss)/d(param) into each referenced Param::grad, in
    // leaf-creation order.
    void add_param_grads(double scale = 1.0);

    std::size_t size() const { return nodes_.size(); }

  private:
    std::vector<std::unique_ptr<Node>> nodes_;
    std::vector<std::pair<Param*, Node*>> param_nodes_;
    std::unordered_map<Param*, Node*> param_lookup_;
};

// ---- primitive ops ----
// All ops validate shapes and throw ShapeError on mismatch.

Node* add(Graph& g, Node* a, Node* b);
Node* sub(Graph& g, Node* a, Node* b);
Node* mul(Graph& g, Node* a, Node* b);
Node* scale(Graph& g, Node* a, double s);

// (m,k) x (k,n) -> (m,n)
Node* matmul(Graph& g, Node* a, Node* b);
// x:(n,in) w:(out,in) b:(out) -> (n,out)
Node* linear(Graph& g, Node* x, Node* w, Node* b);
// (B,m,k) x (B,k,n) -> (B,m,n)
Node* bmm(Graph& g, Node* a, Node* b);
// (B,m,n) -> (B,n,m)
Node* transpose_last2(Graph& g, Node* a);
// (n, h*d) -> (h, n, d)
Node* split_heads(Graph& g, Node* x, int heads);
// (h, n, d) -> (n, h*d)
Node* merge_heads(Graph& g, Node* x);
// softmax over the last axis (rank 2 or 3)
Node* softmax_last(Graph& g, Node* x);
// x:(n,d) gamma,beta:(d)
Node* layer_norm(Graph& g, Node* x, Node* gamma, Node* beta, double eps = 1e-5);
Node* gelu(Graph& g, Node* x);
Node* sigmoid(Graph& g, Node* x);

// x:(Ci,H,W) w:(Co,Ci,kh,kw) b:(Co)
Node* conv2d(Graph& g, Node* x, Node* w, Node* b, int stride, int pad);
// x:(Ci,H,W) w:(Ci,Co,kh,kw) b:(Co); out H = (H-1)*stride - 2*pad + kh + out_pad_h
Node* conv_transpose2d(Graph& g, Node* x, Node* w, Node* b, int stride, int pad, int out_pad_h,
                       int out_pad_w);

// (C,H,W) -> (1,H,W), max over channels (first max wins on ties)
Node* channel_max(Graph& g, Node* x);
// mask:(1,H,W) x:(C,H,W) -> (C,H,W), broadcast multiply
Node* spatial_scale(Graph& g, Node* mask, Node* x);
// (Ca,H,W) + (Cb,H,W) -> (Ca+Cb,H,W)
Node* concat_channels(Graph& g, Node* a, Node* b);
// x:(C,H,W) scale,shift:(1,C): y[c] = x[c]*(1+scale[c]) + shift[c]
Node* channel_affine(Graph& g, Node* x, Node* scale, Node* shift);
// all (n_i, d) stacked along rows
Node* concat_rows(Graph& g, const std::vector<Node*>& xs);
// (G*P, C) -> (P, C), mean over the G groups
Node* temporal_mean(Graph& g, Node* x, int groups);
// (H*W, C) -> (C, H, W)
Node* tokens_to_map(Graph& g, Node* x, int h, int w);
// (C,H,W) -> (H*W, C)
Node* map_to_tokens(Graph& g, Node* x);
// (n, d) -> (n, len), columns [start, start+len)
Node* slice_cols(Graph& g, Node* x, int start, int len);
// mean squared error against a fixed target -> scalar (shape {1})
Node* mse_loss(Graph& g, Node* pred, const Tensor& target);

}  // namespace diffpose::ad
