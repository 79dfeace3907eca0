#include <doctest.h>

#include "diffpose/autodiff.hpp"
#include "diffpose/rng.hpp"
#include "test_util.hpp"

using namespace diffpose;
using ad::Graph;
using ad::Node;
using ad::Param;

namespace {

Param make_param(const char* key, std::vector<int> shape, Rng& rng, double scale = 0.5) {
    Param p;
    p.key = key;
    p.init_zero(std::move(shape));
    for (std::int64_t i = 0; i < p.value.numel(); ++i) p.value[i] = scale * rng.normal();
    return p;
}

Tensor random_tensor(std::vector<int> shape, Rng& rng) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = rng.normal();
    return t;
}

}  // namespace

TEST_CASE("graph: leaf caching, constants, scalar-only backward") {
    Rng rng(1);
    Param p = make_param("p", {2, 2}, rng);
    Graph g;
    Node* a = g.leaf(p);
    Node* b = g.leaf(p);
    CHECK(a == b);

    Node* c = g.constant(random_tensor({2, 2}, rng));
    CHECK_FALSE(c->needs_grad);

    Node* sum = ad::add(g, a, c);
    CHECK_THROWS_AS(g.backward(sum), ShapeError);  // (2,2) is not a scalar
}

TEST_CASE("graph: add_param_grads accumulates in repeated passes") {
    Rng rng(2);
    Param p = make_param("p", {3}, rng);
    Tensor target = random_tensor({3}, rng);
    auto run = [&]() {
        Graph g;
        Node* loss = ad::mse_loss(g, g.leaf(p), target);
        g.backward(loss);
        g.add_param_grads(1.0);
    };
    p.grad.fill(0.0);
    run();
    Tensor once = p.grad;
    run();
    for (std::int64_t i = 0; i < once.numel(); ++i)
        CHECK(p.grad[i] == doctest::Approx(2.0 * once[i]).epsilon(1e-12));
}

TEST_CASE("ops: shape validation") {
    Rng rng(3);
    Graph g;
    Node* a = g.constant(random_tensor({2, 3}, rng));
    Node* b = g.constant(random_tensor({3, 2}, rng));
    CHECK_THROWS_AS(ad::add(g, a, b), ShapeError);
    CHECK_THROWS_AS(ad::matmul(g, a, a), ShapeError);
    Node* x = g.constant(random_tensor({2, 4, 4}, rng));
    Node* w = g.constant(random_tensor({3, 3, 3, 3}, rng));  // Ci mismatch
    Node* bias = g.constant(random_tensor({3}, rng));
    CHECK_THROWS_AS(ad::conv2d(g, x, w, bias, 1, 1), ShapeError);
}

TEST_CASE("mse_loss value") {
    Graph g;
    Node* pred = g.constant(Tensor::from({2}, {1.0, 2.0}));
    Node* loss = ad::mse_loss(g, pred, Tensor::zeros({2}));
    CHECK(loss->value[0] == doctest::Approx(2.5).epsilon(1e-15));
}

TEST_CASE("gradients: elementwise add/sub/mul/scale") {
    Rng rng(10);
    Param a = make_param("a", {3, 4}, rng);
    Param b = make_param("b", {3, 4}, rng);
    Tensor target = random_tensor({3, 4}, rng);
    auto build = [&](Graph& g) -> Node* {
        Node* s = ad::add(g, g.leaf(a), g.leaf(b));
        Node* d = ad::sub(g, s, ad::scale(g, g.leaf(b), 0.3));
        Node* m = ad::mul(g, d, g.leaf(a));
        return ad::mse_loss(g, m, target);
    };
    CHECK(testutil::grad_check(build, {&a, &b}, rng) <= 1e-5);
}

TEST_CASE("gradients: matmul and linear") {
    Rng rng(11);
    Param a = make_param("a", {3, 4}, rng);
    Param b = make_param("b", {4, 2}, rng);
    Tensor t1 = random_tensor({3, 2}, rng);
    auto build1 = [&](Graph& g) -> Node* {
        return ad::mse_loss(g, ad::matmul(g, g.leaf(a), g.leaf(b)), t1);
    };
    CHECK(testutil::grad_check(build1, {&a, &b}, rng) <= 1e-5);

    Param x = make_param("x", {5, 3}, rng);
    Param w = make_param("w", {4, 3}, rng);
    Param bias = make_param("bias", {4}, rng);
    Tensor t2 = random_tensor({5, 4}, rng);
    auto build2 = [&](Graph& g) -> Node* {
        return ad::mse_loss(g, ad::linear(g, g.leaf(x), g.leaf(w), g.leaf(bias)), t2);
    };
    CHECK(testutil::grad_check(build2, {&x, &w, &bias}, rng) <= 1e-5);
}

TEST_CASE("gradients: bmm and transpose") {
    Rng rng(12);
    Param a = make_param("a", {2, 3, 4}, rng);
    Param b = make_param("b", {2, 4, 2}, rng);
    Tensor target = random_tensor({2, 2, 3}, rng);
    auto build = [&](Graph& g) -> Node* {
        Node* prod = ad::bmm(g, g.leaf(a), g.leaf(b));  // (2,3,2)
        return ad::mse_loss(g, ad::transpose_last2(g, prod), target);
    };
    CHECK(testutil::grad_check(build, {&a, &b}, rng) <= 1e-5);
}

TEST_CASE("gradients and identity: split/merge heads") {
    Rng rng(13);
    Param x = make_param("x", {6, 8}, rng);
    {
        Graph g;
        Node* split = ad::split_heads(g, g.leaf(x), 2);
        CHECK(split->value.shape() == std::vector<int>{2, 6, 4});
        Node* merged = ad::merge_heads(g, split);
        for (std::int64_t i = 0; i < x.value.numel(); ++i)
            CHECK(merged->value[i] == x.value[i]);
    }
    Tensor target = random_tensor({6, 8}, rng);
    auto build = [&](Graph& g) -> Node* {
        return ad::mse_loss(g, ad::merge_heads(g, ad::split_heads(g, g.leaf(x), 2)), target);
    };
    CHECK(testutil::grad_check(build, {&x}, rng) <= 1e-5);
}

TEST_CASE("gradients: softmax rows sum to one") {
    Rng rng(14);
    Param x = make_param("x", {3, 5}, rng, 1.0);
    {
        Graph g;
        Node* s = ad::softmax_last(g, g.leaf(x));
        for (int r = 0; r < 3; ++r) {
            double row = 0.0;
            for (int c = 0; c < 5; ++c) row += s->value.at(r, c);
            CHECK(row == doctest::Approx(1.0).epsilon(1e-12));
        }
    }
    Tensor target = random_tensor({3, 5}, rng);
    auto build = [&](Graph& g) -> Node* {
        return ad::mse_loss(g, ad::softmax_last(g, g.leaf(x)), target);
    };
    CHECK(testutil::grad_check(build, {&x}, rng) <= 1e-5);

    Param x3 = make_param("x3", {2, 3, 4}, rng, 1.0);
    Tensor target3 = random_tensor({2, 3, 4}, rng);
    auto build3 = [&](Graph& g) -> Node* {
        return ad::mse_loss(g, ad::softmax_last(g, g.leaf(x3)), target3);
    };
    CHECK(testutil::grad_check(build3, {&x3}, rng) <= 1e-5);
}

TEST_CASE("gradients: layer_norm, gelu, sigmoid") {
    Rng rng(15);
    Param x = make_param("x", {4, 6}, rng, 1.0);
    Param gamma = make_param("gamma", {6}, rng);
    Param beta = make_param("beta", {6}, rng);
    Tensor target = random_tensor({4, 6}, rng);
    auto build = [&](Graph& g) -> Node* {
        Node* n = ad::layer_norm(g, g.leaf(x), g.leaf(gamma), g.leaf(beta));
        return ad::mse_loss(g, ad::gelu(g, ad::sigmoid(g, n)), target);
    };
    CHECK(testutil::grad_check(build, {&x, &gamma, &beta}, rng) <= 1e-5);
}

TEST_CASE("conv2d: output shapes and gradients") {
    Rng rng(16);
    Param x = make_param("x", {2, 5, 4}, rng);
    Param w = make_param("w", {3, 2, 3, 3}, rng);
    Param b = make_param("b", {3}, rng);
    {
        Graph g;
        CHECK(ad::conv2d(g, g.leaf(x), g.leaf(w), g.leaf(b), 1, 1)->value.shape() ==
              std::vector<int>{3, 5, 4});
        // stride 2 with k3 p1 lands exactly on ceil(n/2)
        CHECK(ad::conv2d(g, g.leaf(x), g.leaf(w), g.leaf(b), 2, 1)->value.shape() ==
              std::vector<int>{3, 3, 2});
    }
    Tensor t1 = random_tensor({3, 5, 4}, rng);
    auto build1 = [&](Graph& g) -> Node* {
        return ad::mse_loss(g, ad::conv2d(g, g.leaf(x), g.leaf(w), g.leaf(b), 1, 1), t1);
    };
    CHECK(testutil::grad_check(build1, {&x, &w, &b}, rng) <= 1e-5);

    Tensor t2 = random_tensor({3, 3, 2}, rng);
    auto build2 = [&](Graph& g) -> Node* {
        return ad::mse_loss(g, ad::conv2d(g, g.leaf(x), g.leaf(w), g.leaf(b), 2, 1), t2);
    };
    CHECK(testutil::grad_check(build2, {&x, &w, &b}, rng) <= 1e-5);
}

TEST_CASE("conv_transpose2d: output shapes and gradients") {
    Rng rng(17);
    Param x = make_param("x", {2, 3, 2}, rng);
    Param w = make_param("w", {2, 3, 3, 3}, rng);
    Param b = make_param("b", {3}, rng);
    {
        Graph g;
        CHECK(ad::conv_transpose2d(g, g.leaf(x), g.leaf(w), g.leaf(b), 2, 1, 1, 1)->value.shape() ==
              std::vector<int>{3, 6, 4});
        CHECK(ad::conv_transpose2d(g, g.leaf(x), g.leaf(w), g.leaf(b), 2, 1, 0, 0)->value.shape() ==
              std::vector<int>{3, 5, 3});
    }
    Tensor t1 = random_tensor({3, 6, 4}, rng);
    auto build1 = [&](Graph& g) -> Node* {
        return ad::mse_loss(g, ad::conv_transpose2d(g, g.leaf(x), g.leaf(w), g.leaf(b), 2, 1, 1, 1),
                            t1);
    };
    CHECK(testutil::grad_check(build1, {&x, &w, &b}, rng) <= 1e-5);

    Tensor t2 = random_tensor({3, 5, 3}, rng);
    auto build2 = [&](Graph& g) -> Node* {
        return ad::mse_loss(g, ad::conv_transpose2d(g, g.leaf(x), g.leaf(w), g.leaf(b), 2, 1, 0, 0),
                            t2);
    };
    CHECK(testutil::grad_check(build2, {&x, &w, &b}, rng) <= 1e-5);
}

TEST_CASE("gradients: channel_max, spatial_scale, concat_channels") {
    Rng rng(18);
    Param x = make_param("x", {3, 4, 3}, rng, 1.0);
    Param y = make_param("y", {2, 4, 3}, rng);
    Tensor target = random_tensor({5, 4, 3}, rng);
    auto build = [&](Graph& g) -> Node* {
        Node* mask = ad::sigmoid(g, ad::channel_max(g, g.leaf(x)));
        Node* scaled = ad::spatial_scale(g, mask, g.leaf(x));
        return ad::mse_loss(g, ad::concat_channels(g, scaled, g.leaf(y)), target);
    };
    CHECK(testutil::grad_check(build, {&x, &y}, rng) <= 1e-5);
}

TEST_CASE("gradients: channel_affine") {
    Rng rng(19);
    Param x = make_param("x", {3, 4, 2}, rng);
    Param sc = make_param("sc", {1, 3}, rng);
    Param sh = make_param("sh", {1, 3}, rng);
    Tensor target = random_tensor({3, 4, 2}, rng);
    auto build = [&](Graph& g) -> Node* {
        return ad::mse_loss(g, ad::channel_affine(g, g.leaf(x), g.leaf(sc), g.leaf(sh)), target);
    };
    CHECK(testutil::grad_check(build, {&x, &sc, &sh}, rng) <= 1e-5);

    // zero scale/shift is the identity
    sc.value.fill(0.0);
    sh.value.fill(0.0);
    Graph g;
    Node* out = ad::channel_affine(g, g.leaf(x), g.leaf(sc), g.leaf(sh));
    for (std::int64_t i = 0; i < x.value.numel(); ++i) CHECK(out->value[i] == x.value[i]);
}

TEST_CASE("gradients: concat_rows and temporal_mean") {
    Rng rng(20);
    Param a = make_param("a", {2, 5}, rng);
    Param b = make_param("b", {2, 5}, rng);
    Param c = make_param("c", {2, 5}, rng);
    Tensor target = random_tensor({2, 5}, rng);
    auto build = [&](Graph& g) -> Node* {
        Node* cat = ad::concat_rows(g, {g.leaf(a), g.leaf(b), g.leaf(c)});  // (6,5)
        return ad::mse_loss(g, ad::temporal_mean(g, cat, 3), target);
    };
    CHECK(testutil::grad_check(build, {&a, &b, &c}, rng) <= 1e-5);

    // the mean of three stacked copies of equal rows reproduces the rows
    Graph g;
    Node* cat = ad::concat_rows(g, {g.leaf(a), g.leaf(a), g.leaf(a)});
    Node* mean = ad::temporal_mean(g, cat, 3);
    for (std::int64_t i = 0; i < a.value.numel(); ++i)
        CHECK(mean->value[i] == doctest::Approx(a.value[i]).epsilon(1e-15));
}

TEST_CASE("gradients and inverses: tokens_to_map, map_to_tokens, slice_cols") {
    Rng rng(21);
    Param x = make_param("x", {12, 5}, rng);
    {
        Graph g;
        Node* map = ad::tokens_to_map(g, g.leaf(x), 3, 4);
        CHECK(map->value.shape() == std::vector<int>{5, 3, 4});
        Node* back = ad::map_to_tokens(g, map);
        for (std::int64_t i = 0; i < x.value.numel(); ++i) CHECK(back->value[i] == x.value[i]);
    }
    Tensor t1 = random_tensor({5, 3, 4}, rng);
    auto build1 = [&](Graph& g) -> Node* {
        return ad::mse_loss(g, ad::tokens_to_map(g, g.leaf(x), 3, 4), t1);
    };
    CHECK(testutil::grad_check(build1, {&x}, rng) <= 1e-5);

    Param y = make_param("y", {4, 10}, rng);
    Tensor t2 = random_tensor({4, 4}, rng);
    auto build2 = [&](Graph& g) -> Node* {
        return ad::mse_loss(g, ad::slice_cols(g, g.leaf(y), 3, 4), t2);
    };
    CHECK(testutil::grad_check(build2, {&y}, rng) <= 1e-5);
}
