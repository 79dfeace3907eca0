#include "diffpose/autodiff.hpp"

#include <cmath>

#include "diffpose/errors.hpp"

namespace diffpose::ad {

namespace {

void require(bool ok, const std::string& msg) {
    if (!ok) throw ShapeError(msg);
}

void require_same(const Node* a, const Node* b, const char* op) {
    require(a->value.same_shape(b->value), std::string(op) + ": shape mismatch " +
                                               a->value.shape_str() + " vs " + b->value.shape_str());
}

// Gather img:(C,imgH,imgW) into cols:((C*kh*kw), gridH*gridW) where
// cols[(c*kh+i)*kw+j, gh*gridW+gw] = img[c, gh*s-p+i, gw*s-p+j] (0 outside).
void im2col(const Tensor& img, int kh, int kw, int stride, int pad, int grid_h, int grid_w,
            Tensor& cols) {
    const int c_in = img.dim(0), ih = img.dim(1), iw = img.dim(2);
    const int cols_n = grid_h * grid_w;
    for (int c = 0; c < c_in; ++c) {
        for (int i = 0; i < kh; ++i) {
            for (int j = 0; j < kw; ++j) {
                const int row = (c * kh + i) * kw + j;
                double* dst = cols.data() + static_cast<std::int64_t>(row) * cols_n;
                for (int gh = 0; gh < grid_h; ++gh) {
                    const int h = gh * stride - pad + i;
                    if (h < 0 || h >= ih) {
                        for (int gw = 0; gw < grid_w; ++gw) dst[gh * grid_w + gw] = 0.0;
                        continue;
                    }
                    const double* src = img.data() + (static_cast<std::int64_t>(c) * ih + h) * iw;
                    for (int gw = 0; gw < grid_w; ++gw) {
                        const int w = gw * stride - pad + j;
                        dst[gh * grid_w + gw] = (w < 0 || w >= iw) ? 0.0 : src[w];
                    }
                }
            }
        }
    }
}

// Scatter-add transpose of im2col: img[c, gh*s-p+i, gw*s-p+j] += cols[...].
void col2im_add(const Tensor& cols, int kh, int kw, int stride, int pad, int grid_h, int grid_w,
                Tensor& img) {
    const int c_out = img.dim(0), ih = img.dim(1), iw = img.dim(2);
    const int cols_n = grid_h * grid_w;
    for (int c = 0; c < c_out; ++c) {
        for (int i = 0; i < kh; ++i) {
            for (int j = 0; j < kw; ++j) {
                const int row = (c * kh + i) * kw + j;
                const double* src = cols.data() + static_cast<std::int64_t>(row) * cols_n;
                for (int gh = 0; gh < grid_h; ++gh) {
                    const int h = gh * stride - pad + i;
                    if (h < 0 || h >= ih) continue;
                    double* dst = img.data() + (static_cast<std::int64_t>(c) * ih + h) * iw;
                    for (int gw = 0; gw < grid_w; ++gw) {
                        const int w = gw * stride - pad + j;
                        if (w >= 0 && w < iw) dst[w] += src[gh * grid_w + gw];
                    }
                }
            }
        }
    }
}

double gelu_fwd(double x) {
    const double k = 0.7978845608028654;  // sqrt(2/pi)
    return 0.5 * x * (1.0 + std::tanh(k * (x + 0.044715 * x * x * x)));
}

double gelu_grad(double x) {
    const double k = 0.7978845608028654;
    const double u = k * (x + 0.044715 * x * x * x);
    const double t = std::tanh(u);
    const double du = k * (1.0 + 3.0 * 0.044715 * x * x);
    return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
}

}  // namespace

Node* Graph::make(Tensor v, bool needs_grad, std::function<void(Graph&)> back) {
    auto n = std::make_unique<Node>();
    n->value = std::move(v);
    n->needs_grad = needs_grad;
    if (needs_grad) n->backward = std::move(back);
    Node* p = n.get();
    nodes_.push_back(std::move(n));
    return p;
}

Node* Graph::constant(Tensor v) { return make(std::move(v), false); }

Node* Graph::leaf(Param& p) {
    auto it = param_lookup_.find(&p);
    if (it != param_lookup_.end()) return it->second;
    Node* n = make(p.value, true);
    n->param = &p;
    param_nodes_.emplace_back(&p, n);
    param_lookup_.emplace(&p, n);
    return n;
}

void Graph::backward(Node* loss) {
    if (loss->value.numel() != 1) throw ShapeError("backward: loss must be a scalar");
    loss->g()[0] = 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
        Node* n = it->get();
        if (n->needs_grad && n->grad_init && n->backward) n->backward(*this);
    }
}

void Graph::add_param_grads(double scale) {
    for (auto& [p, n] : param_nodes_) {
        if (!n->grad_init) continue;
        for (std::int64_t i = 0; i < n->grad.numel(); ++i) p->grad[i] += scale * n->grad[i];
    }
}

// ---- elementwise ----

Node* add(Graph& g, Node* a, Node* b) {
    require_same(a, b, "add");
    Tensor out = a->value;
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] += b->value[i];
    bool ng = a->needs_grad || b->needs_grad;
    Node* res = g.make(std::move(out), ng);
    if (ng)
        res->backward = [a, b, res](Graph&) {
            if (a->needs_grad) {
                Tensor& ga = a->g();
                for (std::int64_t i = 0; i < ga.numel(); ++i) ga[i] += res->grad[i];
            }
            if (b->needs_grad) {
                Tensor& gb = b->g();
                for (std::int64_t i = 0; i < gb.numel(); ++i) gb[i] += res->grad[i];
            }
        };
    return res;
}

Node* sub(Graph& g, Node* a, Node* b) {
    require_same(a, b, "sub");
    Tensor out = a->value;
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] -= b->value[i];
    bool ng = a->needs_grad || b->needs_grad;
    Node* res = g.make(std::move(out), ng);
    if (ng)
        res->backward = [a, b, res](Graph&) {
            if (a->needs_grad) {
                Tensor& ga = a->g();
                for (std::int64_t i = 0; i < ga.numel(); ++i) ga[i] += res->grad[i];
            }
            if (b->needs_grad) {
                Tensor& gb = b->g();
                for (std::int64_t i = 0; i < gb.numel(); ++i) gb[i] -= res->grad[i];
            }
        };
    return res;
}

Node* mul(Graph& g, Node* a, Node* b) {
    require_same(a, b, "mul");
    Tensor out = a->value;
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] *= b->value[i];
    bool ng = a->needs_grad || b->needs_grad;
    Node* res = g.make(std::move(out), ng);
    if (ng)
        res->backward = [a, b, res](Graph&) {
            if (a->needs_grad) {
                Tensor& ga = a->g();
                for (std::int64_t i = 0; i < ga.numel(); ++i) ga[i] += res->grad[i] * b->value[i];
            }
            if (b->needs_grad) {
                Tensor& gb = b->g();
                for (std::int64_t i = 0; i < gb.numel(); ++i) gb[i] += res->grad[i] * a->value[i];
            }
        };
    return res;
}

Node* scale(Graph& g, Node* a, double s) {
    Tensor out = a->value;
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] *= s;
    Node* res = g.make(std::move(out), a->needs_grad);
    if (a->needs_grad)
        res->backward = [a, res, s](Graph&) {
            Tensor& ga = a->g();
            for (std::int64_t i = 0; i < ga.numel(); ++i) ga[i] += s * res->grad[i];
        };
    return res;
}

// ---- matrix ops ----

Node* matmul(Graph& g, Node* a, Node* b) {
    require(a->value.rank() == 2 && b->value.rank() == 2, "matmul: rank-2 inputs required");
    const int m = a->value.dim(0), k = a->value.dim(1), n = b->value.dim(1);
    require(b->value.dim(0) == k, "matmul: inner dimensions differ");
    Tensor out({m, n});
    as_matrix(out, m, n).noalias() = as_matrix(a->value, m, k) * as_matrix(b->value, k, n);
    bool ng = a->needs_grad || b->needs_grad;
    Node* res = g.make(std::move(out), ng);
    if (ng)
        res->backward = [a, b, res, m, k, n](Graph&) {
            ConstMatMap go(res->grad.data(), m, n);
            if (a->needs_grad)
                as_matrix(a->g(), m, k).noalias() += go * as_matrix(b->value, k, n).transpose();
            if (b->needs_grad)
                as_matrix(b->g(), k, n).noalias() += as_matrix(a->value, m, k).transpose() * go;
        };
    return res;
}

Node* linear(Graph& g, Node* x, Node* w, Node* b) {
    require(x->value.rank() == 2 && w->value.rank() == 2 && b->value.rank() == 1,
            "linear: expected x(n,in) w(out,in) b(out)");
    const int n = x->value.dim(0), in = x->value.dim(1), out_d = w->value.dim(0);
    require(w->value.dim(1) == in && b->value.dim(0) == out_d, "linear: dimension mismatch");
    Tensor out({n, out_d});
    as_matrix(out, n, out_d).noalias() =
        as_matrix(x->value, n, in) * as_matrix(w->value, out_d, in).transpose();
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < out_d; ++j) out.at(i, j) += b->value[j];
    bool ng = x->needs_grad || w->needs_grad || b->needs_grad;
    Node* res = g.make(std::move(out), ng);
    if (ng)
        res->backward = [x, w, b, res, n, in, out_d](Graph&) {
            ConstMatMap go(res->grad.data(), n, out_d);
            if (x->needs_grad)
                as_matrix(x->g(), n, in).noalias() += go * as_matrix(w->value, out_d, in);
            if (w->needs_grad)
                as_matrix(w->g(), out_d, in).noalias() +=
                    go.transpose() * as_matrix(x->value, n, in);
            if (b->needs_grad) {
                Tensor& gb = b->g();
                for (int i = 0; i < n; ++i)
                    for (int j = 0; j < out_d; ++j) gb[j] += res->grad[static_cast<std::int64_t>(i) * out_d + j];
            }
        };
    return res;
}

Node* bmm(Graph& g, Node* a, Node* b) {
    require(a->value.rank() == 3 && b->value.rank() == 3, "bmm: rank-3 inputs required");
    const int bs = a->value.dim(0), m = a->value.dim(1), k = a->value.dim(2), n = b->value.dim(2);
    require(b->value.dim(0) == bs && b->value.dim(1) == k, "bmm: dimension mismatch");
    Tensor out({bs, m, n});
    for (int i = 0; i < bs; ++i)
        as_matrix(out, m, n, static_cast<std::int64_t>(i) * m * n).noalias() =
            as_matrix(a->value, m, k, static_cast<std::int64_t>(i) * m * k) *
            as_matrix(b->value, k, n, static_cast<std::int64_t>(i) * k * n);
    bool ng = a->needs_grad || b->needs_grad;
    Node* res = g.make(std::move(out), ng);
    if (ng)
        res->backward = [a, b, res, bs, m, k, n](Graph&) {
            for (int i = 0; i < bs; ++i) {
                ConstMatMap go(res->grad.data() + static_cast<std::int64_t>(i) * m * n, m, n);
                if (a->needs_grad)
                    as_matrix(a->g(), m, k, static_cast<std::int64_t>(i) * m * k).noalias() +=
                        go * as_matrix(b->value, k, n, static_cast<std::int64_t>(i) * k * n)
                                 .transpose();
                if (b->needs_grad)
                    as_matrix(b->g(), k, n, static_cast<std::int64_t>(i) * k * n).noalias() +=
                        as_matrix(a->value, m, k, static_cast<std::int64_t>(i) * m * k)
                            .transpose() *
                        go;
            }
        };
    return res;
}

Node* transpose_last2(Graph& g, Node* a) {
    require(a->value.rank() == 3, "transpose_last2: rank-3 input required");
    const int bs = a->value.dim(0), m = a->value.dim(1), n = a->value.dim(2);
    Tensor out({bs, n, m});
    for (int i = 0; i < bs; ++i)
        as_matrix(out, n, m, static_cast<std::int64_t>(i) * m * n) =
            as_matrix(a->value, m, n, static_cast<std::int64_t>(i) * m * n).transpose();
    Node* res = g.make(std::move(out), a->needs_grad);
    if (a->needs_grad)
        res->backward = [a, res, bs, m, n](Graph&) {
            for (int i = 0; i < bs; ++i)
                as_matrix(a->g(), m, n, static_cast<std::int64_t>(i) * m * n) +=
                    ConstMatMap(res->grad.data() + static_cast<std::int64_t>(i) * m * n, n, m)
                        .transpose();
        };
    return res;
}

Node* split_heads(Graph& g, Node* x, int heads) {
    require(x->value.rank() == 2, "split_heads: rank-2 input required");
    const int n = x->value.dim(0), d = x->value.dim(1);
    require(heads > 0 && d % heads == 0, "split_heads: width not divisible by head count");
    const int dh = d / heads;
    Tensor out({heads, n, dh});
    for (int h = 0; h < heads; ++h)
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < dh; ++j) out.at(h, i, j) = x->value.at(i, h * dh + j);
    Node* res = g.make(std::move(out), x->needs_grad);
    if (x->needs_grad)
        res->backward = [x, res, heads, n, dh](Graph&) {
            Tensor& gx = x->g();
            for (int h = 0; h < heads; ++h)
                for (int i = 0; i < n; ++i)
                    for (int j = 0; j < dh; ++j) gx.at(i, h * dh + j) += res->grad.at(h, i, j);
        };
    return res;
}

Node* merge_heads(Graph& g, Node* x) {
    require(x->value.rank() == 3, "merge_heads: rank-3 input required");
    const int heads = x->value.dim(0), n = x->value.dim(1), dh = x->value.dim(2);
    Tensor out({n, heads * dh});
    for (int h = 0; h < heads; ++h)
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < dh; ++j) out.at(i, h * dh + j) = x->value.at(h, i, j);
    Node* res = g.make(std::move(out), x->needs_grad);
    if (x->needs_grad)
        res->backward = [x, res, heads, n, dh](Graph&) {
            Tensor& gx = x->g();
            for (int h = 0; h < heads; ++h)
                for (int i = 0; i < n; ++i)
                    for (int j = 0; j < dh; ++j) gx.at(h, i, j) += res->grad.at(i, h * dh + j);
        };
    return res;
}

Node* softmax_last(Graph& g, Node* x) {
    require(x->value.rank() == 2 || x->value.rank() == 3, "softmax_last: rank-2/3 input required");
    const int d = x->value.dim(x->value.rank() - 1);
    const std::int64_t rows = x->value.numel() / d;
    Tensor out = x->value;
    for (std::int64_t r = 0; r < rows; ++r) {
        double* p = out.data() + r * d;
        double mx = p[0];
        for (int j = 1; j < d; ++j) mx = std::max(mx, p[j]);
        double sum = 0.0;
        for (int j = 0; j < d; ++j) {
            p[j] = std::exp(p[j] - mx);
            sum += p[j];
        }
        for (int j = 0; j < d; ++j) p[j] /= sum;
    }
    Node* res = g.make(std::move(out), x->needs_grad);
    if (x->needs_grad)
        res->backward = [x, res, rows, d](Graph&) {
            Tensor& gx = x->g();
            for (std::int64_t r = 0; r < rows; ++r) {
                const double* s = res->value.data() + r * d;
                const double* go = res->grad.data() + r * d;
                double dot = 0.0;
                for (int j = 0; j < d; ++j) dot += go[j] * s[j];
                double* out_g = gx.data() + r * d;
                for (int j = 0; j < d; ++j) out_g[j] += s[j] * (go[j] - dot);
            }
        };
    return res;
}

Node* layer_norm(Graph& g, Node* x, Node* gamma, Node* beta, double eps) {
    require(x->value.rank() == 2, "layer_norm: rank-2 input required");
    const int n = x->value.dim(0), d = x->value.dim(1);
    require(gamma->value.rank() == 1 && gamma->value.dim(0) == d, "layer_norm: gamma shape");
    require(beta->value.rank() == 1 && beta->value.dim(0) == d, "layer_norm: beta shape");
    Tensor out({n, d});
    auto xhat = std::make_shared<Tensor>(std::vector<int>{n, d});
    auto inv_std = std::make_shared<Tensor>(std::vector<int>{n});
    for (int i = 0; i < n; ++i) {
        const double* row = x->value.data() + static_cast<std::int64_t>(i) * d;
        double mean = 0.0;
        for (int j = 0; j < d; ++j) mean += row[j];
        mean /= d;
        double var = 0.0;
        for (int j = 0; j < d; ++j) var += (row[j] - mean) * (row[j] - mean);
        var /= d;
        const double istd = 1.0 / std::sqrt(var + eps);
        (*inv_std)[i] = istd;
        for (int j = 0; j < d; ++j) {
            const double xh = (row[j] - mean) * istd;
            xhat->at(i, j) = xh;
            out.at(i, j) = gamma->value[j] * xh + beta->value[j];
        }
    }
    bool ng = x->needs_grad || gamma->needs_grad || beta->needs_grad;
    Node* res = g.make(std::move(out), ng);
    if (ng)
        res->backward = [x, gamma, beta, res, xhat, inv_std, n, d](Graph&) {
            for (int i = 0; i < n; ++i) {
                const double* go = res->grad.data() + static_cast<std::int64_t>(i) * d;
                const double* xh = xhat->data() + static_cast<std::int64_t>(i) * d;
                if (gamma->needs_grad) {
                    Tensor& gg = gamma->g();
                    for (int j = 0; j < d; ++j) gg[j] += go[j] * xh[j];
                }
                if (beta->needs_grad) {
                    Tensor& gb = beta->g();
                    for (int j = 0; j < d; ++j) gb[j] += go[j];
                }
                if (x->needs_grad) {
                    double mean_dxh = 0.0, mean_dxh_xh = 0.0;
                    for (int j = 0; j < d; ++j) {
                        const double dxh = go[j] * gamma->value[j];
                        mean_dxh += dxh;
                        mean_dxh_xh += dxh * xh[j];
                    }
                    mean_dxh /= d;
                    mean_dxh_xh /= d;
                    double* gx = x->g().data() + static_cast<std::int64_t>(i) * d;
                    const double istd = (*inv_std)[i];
                    for (int j = 0; j < d; ++j) {
                        const double dxh = go[j] * gamma->value[j];
                        gx[j] += istd * (dxh - mean_dxh - xh[j] * mean_dxh_xh);
                    }
                }
            }
        };
    return res;
}

Node* gelu(Graph& g, Node* x) {
    Tensor out = x->value;
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = gelu_fwd(out[i]);
    Node* res = g.make(std::move(out), x->needs_grad);
    if (x->needs_grad)
        res->backward = [x, res](Graph&) {
            Tensor& gx = x->g();
            for (std::int64_t i = 0; i < gx.numel(); ++i)
                gx[i] += res->grad[i] * gelu_grad(x->value[i]);
        };
    return res;
}

Node* sigmoid(Graph& g, Node* x) {
    Tensor out = x->value;
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = 1.0 / (1.0 + std::exp(-out[i]));
    Node* res = g.make(std::move(out), x->needs_grad);
    if (x->needs_grad)
        res->backward = [x, res](Graph&) {
            Tensor& gx = x->g();
            for (std::int64_t i = 0; i < gx.numel(); ++i) {
                const double y = res->value[i];
                gx[i] += res->grad[i] * y * (1.0 - y);
            }
        };
    return res;
}

// ---- convolutions ----

Node* conv2d(Graph& g, Node* x, Node* w, Node* b, int stride, int pad) {
    require(x->value.rank() == 3 && w->value.rank() == 4 && b->value.rank() == 1,
            "conv2d: expected x(Ci,H,W) w(Co,Ci,kh,kw) b(Co)");
    const int ci = x->value.dim(0), ih = x->value.dim(1), iw = x->value.dim(2);
    const int co = w->value.dim(0), kh = w->value.dim(2), kw = w->value.dim(3);
    require(w->value.dim(1) == ci, "conv2d: channel mismatch");
    require(b->value.dim(0) == co, "conv2d: bias size mismatch");
    const int oh = (ih + 2 * pad - kh) / stride + 1;
    const int ow = (iw + 2 * pad - kw) / stride + 1;
    require(oh >= 1 && ow >= 1, "conv2d: output would be empty");
    const int krows = ci * kh * kw, cols_n = oh * ow;

    auto cols = std::make_shared<Tensor>(std::vector<int>{krows, cols_n});
    im2col(x->value, kh, kw, stride, pad, oh, ow, *cols);
    Tensor out({co, oh, ow});
    as_matrix(out, co, cols_n).noalias() =
        as_matrix(w->value, co, krows) * as_matrix(*cols, krows, cols_n);
    for (int c = 0; c < co; ++c) {
        double* p = out.data() + static_cast<std::int64_t>(c) * cols_n;
        for (int i = 0; i < cols_n; ++i) p[i] += b->value[c];
    }
    bool ng = x->needs_grad || w->needs_grad || b->needs_grad;
    Node* res = g.make(std::move(out), ng);
    if (ng)
        res->backward = [x, w, b, res, cols, stride, pad, ci, ih, iw, co, kh, kw, oh, ow, krows,
                         cols_n](Graph&) {
            ConstMatMap go(res->grad.data(), co, cols_n);
            if (w->needs_grad)
                as_matrix(w->g(), co, krows).noalias() +=
                    go * as_matrix(*cols, krows, cols_n).transpose();
            if (b->needs_grad) {
                Tensor& gb = b->g();
                for (int c = 0; c < co; ++c) {
                    const double* p = res->grad.data() + static_cast<std::int64_t>(c) * cols_n;
                    for (int i = 0; i < cols_n; ++i) gb[c] += p[i];
                }
            }
            if (x->needs_grad) {
                Tensor gcols({krows, cols_n});
                as_matrix(gcols, krows, cols_n).noalias() =
                    as_matrix(w->value, co, krows).transpose() * go;
                col2im_add(gcols, kh, kw, stride, pad, oh, ow, x->g());
            }
            (void)ci;
            (void)ih;
            (void)iw;
        };
    return res;
}

Node* conv_transpose2d(Graph& g, Node* x, Node* w, Node* b, int stride, int pad, int out_pad_h,
                       int out_pad_w) {
    require(x->value.rank() == 3 && w->value.rank() == 4 && b->value.rank() == 1,
            "conv_transpose2d: expected x(Ci,H,W) w(Ci,Co,kh,kw) b(Co)");
    const int ci = x->value.dim(0), ih = x->value.dim(1), iw = x->value.dim(2);
    const int co = w->value.dim(1), kh = w->value.dim(2), kw = w->value.dim(3);
    require(w->value.dim(0) == ci, "conv_transpose2d: channel mismatch");
    require(b->value.dim(0) == co, "conv_transpose2d: bias size mismatch");
    require(out_pad_h >= 0 && out_pad_h < stride && out_pad_w >= 0 && out_pad_w < stride,
            "conv_transpose2d: output padding must be in [0, stride)");
    const int oh = (ih - 1) * stride - 2 * pad + kh + out_pad_h;
    const int ow = (iw - 1) * stride - 2 * pad + kw + out_pad_w;
    require(oh >= 1 && ow >= 1, "conv_transpose2d: output would be empty");
    const int krows = co * kh * kw, grid_n = ih * iw;

    Tensor prod({krows, grid_n});
    as_matrix(prod, krows, grid_n).noalias() =
        as_matrix(w->value, ci, krows).transpose() * as_matrix(x->value, ci, grid_n);
    Tensor out({co, oh, ow});
    col2im_add(prod, kh, kw, stride, pad, ih, iw, out);
    for (int c = 0; c < co; ++c) {
        double* p = out.data() + static_cast<std::int64_t>(c) * oh * ow;
        for (int i = 0; i < oh * ow; ++i) p[i] += b->value[c];
    }
    bool ng = x->needs_grad || w->needs_grad || b->needs_grad;
    Node* res = g.make(std::move(out), ng);
    if (ng)
        res->backward = [x, w, b, res, stride, pad, ci, ih, iw, co, kh, kw, oh, ow, krows,
                         grid_n](Graph&) {
            Tensor gcols({krows, grid_n});
            im2col(res->grad, kh, kw, stride, pad, ih, iw, gcols);
            if (x->needs_grad)
                as_matrix(x->g(), ci, grid_n).noalias() +=
                    as_matrix(w->value, ci, krows) * as_matrix(gcols, krows, grid_n);
            if (w->needs_grad)
                as_matrix(w->g(), ci, krows).noalias() +=
                    as_matrix(x->value, ci, grid_n) *
                    as_matrix(gcols, krows, grid_n).transpose();
            if (b->needs_grad) {
                Tensor& gb = b->g();
                for (int c = 0; c < co; ++c) {
                    const double* p = res->grad.data() + static_cast<std::int64_t>(c) * oh * ow;
                    for (int i = 0; i < oh * ow; ++i) gb[c] += p[i];
                }
            }
        };
    return res;
}

// ---- structural ops ----

Node* channel_max(Graph& g, Node* x) {
    require(x->value.rank() == 3, "channel_max: rank-3 input required");
    const int c = x->value.dim(0), h = x->value.dim(1), w = x->value.dim(2);
    const int hw = h * w;
    Tensor out({1, h, w});
    auto arg = std::make_shared<std::vector<int>>(static_cast<std::size_t>(hw), 0);
    for (int i = 0; i < hw; ++i) {
        double best = x->value[i];
        int best_c = 0;
        for (int cc = 1; cc < c; ++cc) {
            const double v = x->value[static_cast<std::int64_t>(cc) * hw + i];
            if (v > best) {
                best = v;
                best_c = cc;
            }
        }
        out[i] = best;
        (*arg)[static_cast<std::size_t>(i)] = best_c;
    }
    Node* res = g.make(std::move(out), x->needs_grad);
    if (x->needs_grad)
        res->backward = [x, res, arg, hw](Graph&) {
            Tensor& gx = x->g();
            for (int i = 0; i < hw; ++i)
                gx[static_cast<std::int64_t>((*arg)[static_cast<std::size_t>(i)]) * hw + i] +=
                    res->grad[i];
        };
    return res;
}

Node* spatial_scale(Graph& g, Node* mask, Node* x) {
    require(mask->value.rank() == 3 && mask->value.dim(0) == 1, "spatial_scale: mask must be (1,H,W)");
    require(x->value.rank() == 3, "spatial_scale: x must be (C,H,W)");
    require(mask->value.dim(1) == x->value.dim(1) && mask->value.dim(2) == x->value.dim(2),
            "spatial_scale: spatial size mismatch");
    const int c = x->value.dim(0), hw = x->value.dim(1) * x->value.dim(2);
    Tensor out = x->value;
    for (int cc = 0; cc < c; ++cc)
        for (int i = 0; i < hw; ++i) out[static_cast<std::int64_t>(cc) * hw + i] *= mask->value[i];
    bool ng = mask->needs_grad || x->needs_grad;
    Node* res = g.make(std::move(out), ng);
    if (ng)
        res->backward = [mask, x, res, c, hw](Graph&) {
            if (x->needs_grad) {
                Tensor& gx = x->g();
                for (int cc = 0; cc < c; ++cc)
                    for (int i = 0; i < hw; ++i)
                        gx[static_cast<std::int64_t>(cc) * hw + i] +=
                            res->grad[static_cast<std::int64_t>(cc) * hw + i] * mask->value[i];
            }
            if (mask->needs_grad) {
                Tensor& gm = mask->g();
                for (int cc = 0; cc < c; ++cc)
                    for (int i = 0; i < hw; ++i)
                        gm[i] += res->grad[static_cast<std::int64_t>(cc) * hw + i] *
                                 x->value[static_cast<std::int64_t>(cc) * hw + i];
            }
        };
    return res;
}

Node* concat_channels(Graph& g, Node* a, Node* b) {
    require(a->value.rank() == 3 && b->value.rank() == 3, "concat_channels: rank-3 inputs required");
    require(a->value.dim(1) == b->value.dim(1) && a->value.dim(2) == b->value.dim(2),
            "concat_channels: spatial size mismatch");
    const int ca = a->value.dim(0), cb = b->value.dim(0);
    const int h = a->value.dim(1), w = a->value.dim(2);
    Tensor out({ca + cb, h, w});
    std::copy(a->value.data(), a->value.data() + a->value.numel(), out.data());
    std::copy(b->value.data(), b->value.data() + b->value.numel(), out.data() + a->value.numel());
    bool ng = a->needs_grad || b->needs_grad;
    Node* res = g.make(std::move(out), ng);
    if (ng)
        res->backward = [a, b, res](Graph&) {
            const std::int64_t na = a->value.numel();
            if (a->needs_grad) {
                Tensor& ga = a->g();
                for (std::int64_t i = 0; i < na; ++i) ga[i] += res->grad[i];
            }
            if (b->needs_grad) {
                Tensor& gb = b->g();
                for (std::int64_t i = 0; i < gb.numel(); ++i) gb[i] += res->grad[na + i];
            }
        };
    return res;
}

Node* channel_affine(Graph& g, Node* x, Node* scale_n, Node* shift_n) {
    require(x->value.rank() == 3, "channel_affine: x must be (C,H,W)");
    const int c = x->value.dim(0), hw = x->value.dim(1) * x->value.dim(2);
    require(scale_n->value.rank() == 2 && scale_n->value.dim(0) == 1 && scale_n->value.dim(1) == c,
            "channel_affine: scale must be (1,C)");
    require(shift_n->value.rank() == 2 && shift_n->value.dim(0) == 1 && shift_n->value.dim(1) == c,
            "channel_affine: shift must be (1,C)");
    Tensor out = x->value;
    for (int cc = 0; cc < c; ++cc) {
        const double s = 1.0 + scale_n->value[cc];
        const double t = shift_n->value[cc];
        double* p = out.data() + static_cast<std::int64_t>(cc) * hw;
        for (int i = 0; i < hw; ++i) p[i] = p[i] * s + t;
    }
    bool ng = x->needs_grad || scale_n->needs_grad || shift_n->needs_grad;
    Node* res = g.make(std::move(out), ng);
    if (ng)
        res->backward = [x, scale_n, shift_n, res, c, hw](Graph&) {
            for (int cc = 0; cc < c; ++cc) {
                const double* go = res->grad.data() + static_cast<std::int64_t>(cc) * hw;
                if (x->needs_grad) {
                    const double s = 1.0 + scale_n->value[cc];
                    double* gx = x->g().data() + static_cast<std::int64_t>(cc) * hw;
                    for (int i = 0; i < hw; ++i) gx[i] += go[i] * s;
                }
                if (scale_n->needs_grad) {
                    const double* xv = x->value.data() + static_cast<std::int64_t>(cc) * hw;
                    double acc = 0.0;
                    for (int i = 0; i < hw; ++i) acc += go[i] * xv[i];
                    scale_n->g()[cc] += acc;
                }
                if (shift_n->needs_grad) {
                    double acc = 0.0;
                    for (int i = 0; i < hw; ++i) acc += go[i];
                    shift_n->g()[cc] += acc;
                }
            }
        };
    return res;
}

Node* concat_rows(Graph& g, const std::vector<Node*>& xs) {
    require(!xs.empty(), "concat_rows: empty input list");
    const int d = xs[0]->value.dim(1);
    int total = 0;
    bool ng = false;
    for (Node* x : xs) {
        require(x->value.rank() == 2 && x->value.dim(1) == d, "concat_rows: width mismatch");
        total += x->value.dim(0);
        ng = ng || x->needs_grad;
    }
    Tensor out({total, d});
    std::int64_t off = 0;
    for (Node* x : xs) {
        std::copy(x->value.data(), x->value.data() + x->value.numel(), out.data() + off);
        off += x->value.numel();
    }
    Node* res = g.make(std::move(out), ng);
    if (ng) {
        auto inputs = std::make_shared<std::vector<Node*>>(xs);
        res->backward = [inputs, res](Graph&) {
            std::int64_t off = 0;
            for (Node* x : *inputs) {
                if (x->needs_grad) {
                    Tensor& gx = x->g();
                    for (std::int64_t i = 0; i < gx.numel(); ++i) gx[i] += res->grad[off + i];
                }
                off += x->value.numel();
            }
        };
    }
    return res;
}

Node* temporal_mean(Graph& g, Node* x, int groups) {
    require(x->value.rank() == 2, "temporal_mean: rank-2 input required");
    require(groups > 0 && x->value.dim(0) % groups == 0,
            "temporal_mean: rows not divisible by group count");
    const int p = x->value.dim(0) / groups, d = x->value.dim(1);
    Tensor out({p, d});
    for (int gi = 0; gi < groups; ++gi)
        for (int i = 0; i < p; ++i)
            for (int j = 0; j < d; ++j) out.at(i, j) += x->value.at(gi * p + i, j);
    const double inv = 1.0 / groups;
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] *= inv;
    Node* res = g.make(std::move(out), x->needs_grad);
    if (x->needs_grad)
        res->backward = [x, res, groups, p, d, inv](Graph&) {
            Tensor& gx = x->g();
            for (int gi = 0; gi < groups; ++gi)
                for (int i = 0; i < p; ++i)
                    for (int j = 0; j < d; ++j) gx.at(gi * p + i, j) += inv * res->grad.at(i, j);
        };
    return res;
}

Node* tokens_to_map(Graph& g, Node* x, int h, int w) {
    require(x->value.rank() == 2 && x->value.dim(0) == h * w,
            "tokens_to_map: token count must equal h*w");
    const int c = x->value.dim(1);
    Tensor out({c, h, w});
    for (int i = 0; i < h * w; ++i)
        for (int j = 0; j < c; ++j) out[static_cast<std::int64_t>(j) * h * w + i] = x->value.at(i, j);
    Node* res = g.make(std::move(out), x->needs_grad);
    if (x->needs_grad)
        res->backward = [x, res, h, w, c](Graph&) {
            Tensor& gx = x->g();
            for (int i = 0; i < h * w; ++i)
                for (int j = 0; j < c; ++j)
                    gx.at(i, j) += res->grad[static_cast<std::int64_t>(j) * h * w + i];
        };
    return res;
}

Node* map_to_tokens(Graph& g, Node* x) {
    require(x->value.rank() == 3, "map_to_tokens: rank-3 input required");
    const int c = x->value.dim(0), hw = x->value.dim(1) * x->value.dim(2);
    Tensor out({hw, c});
    for (int i = 0; i < hw; ++i)
        for (int j = 0; j < c; ++j) out.at(i, j) = x->value[static_cast<std::int64_t>(j) * hw + i];
    Node* res = g.make(std::move(out), x->needs_grad);
    if (x->needs_grad)
        res->backward = [x, res, c, hw](Graph&) {
            Tensor& gx = x->g();
            for (int i = 0; i < hw; ++i)
                for (int j = 0; j < c; ++j)
                    gx[static_cast<std::int64_t>(j) * hw + i] += res->grad.at(i, j);
        };
    return res;
}

Node* slice_cols(Graph& g, Node* x, int start, int len) {
    require(x->value.rank() == 2, "slice_cols: rank-2 input required");
    const int n = x->value.dim(0), d = x->value.dim(1);
    require(start >= 0 && len > 0 && start + len <= d, "slice_cols: range out of bounds");
    Tensor out({n, len});
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < len; ++j) out.at(i, j) = x->value.at(i, start + j);
    Node* res = g.make(std::move(out), x->needs_grad);
    if (x->needs_grad)
        res->backward = [x, res, start, n, len](Graph&) {
            Tensor& gx = x->g();
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < len; ++j) gx.at(i, start + j) += res->grad.at(i, j);
        };
    return res;
}

Node* mse_loss(Graph& g, Node* pred, const Tensor& target) {
    require(pred->value.same_shape(target), "mse_loss: prediction/target shape mismatch");
    const std::int64_t n = pred->value.numel();
    require(n > 0, "mse_loss: empty tensors");
    double acc = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
        const double dlt = pred->value[i] - target[i];
        acc += dlt * dlt;
    }
    Tensor out({1});
    out[0] = acc / static_cast<double>(n);
    Node* res = g.make(std::move(out), pred->needs_grad);
    if (pred->needs_grad) {
        auto tgt = std::make_shared<Tensor>(target);
        res->backward = [pred, res, tgt, n](Graph&) {
            Tensor& gp = pred->g();
            const double s = 2.0 * res->grad[0] / static_cast<double>(n);
            for (std::int64_t i = 0; i < n; ++i) gp[i] += s * (pred->value[i] - (*tgt)[i]);
        };
    }
    return res;
}

}  // namespace diffpose::ad
