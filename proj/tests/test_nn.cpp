#include <doctest.h>

#include <cmath>
#include <set>

#include "diffpose/nn.hpp"
#include "test_util.hpp"

using namespace diffpose;
using ad::Graph;
using ad::Node;

TEST_CASE("linear: shapes, zero init, deterministic init") {
    Rng rng(1);
    nn::Linear lin;
    lin.init(3, 4, rng);
    CHECK(lin.w.value.shape() == std::vector<int>{4, 3});
    CHECK(lin.b.value.shape() == std::vector<int>{4});

    Rng rng2(1);
    nn::Linear lin2;
    lin2.init(3, 4, rng2);
    for (std::int64_t i = 0; i < lin.w.value.numel(); ++i)
        CHECK(lin.w.value[i] == lin2.w.value[i]);

    nn::Linear zero;
    zero.init(3, 4, rng, /*zero_init=*/true);
    Graph g;
    Node* out = zero.forward(g, g.constant(Tensor::full({2, 3}, 1.5)));
    for (std::int64_t i = 0; i < out->value.numel(); ++i) CHECK(out->value[i] == 0.0);
}

TEST_CASE("layer norm: normalizes rows at default gamma/beta") {
    nn::LayerNormLayer ln;
    ln.init(8);
    Rng rng(2);
    Graph g;
    Node* out = ln.forward(g, g.constant(rng.normal_tensor({3, 8}, 1.0, 2.0)));
    for (int r = 0; r < 3; ++r) {
        double mean = 0.0, var = 0.0;
        for (int c = 0; c < 8; ++c) mean += out->value.at(r, c);
        mean /= 8.0;
        for (int c = 0; c < 8; ++c) {
            const double d = out->value.at(r, c) - mean;
            var += d * d;
        }
        var /= 8.0;
        CHECK(std::abs(mean) < 1e-12);
        CHECK(var == doctest::Approx(1.0).epsilon(1e-3));  // eps shifts it slightly
    }
}

TEST_CASE("attention: head divisibility and shape preservation") {
    Rng rng(3);
    nn::Attention attn;
    CHECK_THROWS_AS(attn.init(10, 3, rng), ConfigError);
    attn.init(12, 4, rng);
    Graph g;
    Node* out = attn.forward(g, g.constant(rng.normal_tensor({7, 12})));
    CHECK(out->value.shape() == std::vector<int>{7, 12});
}

TEST_CASE("transformer block: shape preserved, gradients flow to every param") {
    Rng rng(4);
    nn::TransformerBlock block;
    block.init(8, 2, rng);
    Tensor input = rng.normal_tensor({5, 8});
    Tensor target = rng.normal_tensor({5, 8});
    auto build = [&](Graph& g) -> Node* {
        return ad::mse_loss(g, block.forward(g, g.constant(input)), target);
    };
    std::vector<ad::Param*> params;
    block.visit("block", [&](const std::string&, ad::Param& p) { params.push_back(&p); });
    CHECK(params.size() == 16);  // 2x2 LN + 4x2 attn linears + 2x2 ffn linears
    CHECK(testutil::grad_check(build, params, rng, 3) <= 1e-4);
}

TEST_CASE("visit: names are unique and prefix-scoped") {
    Rng rng(5);
    nn::TransformerBlock block;
    block.init(8, 2, rng);
    std::set<std::string> names;
    block.visit("blk", [&](const std::string& name, ad::Param&) {
        CHECK(name.rfind("blk.", 0) == 0);
        CHECK(names.insert(name).second);  // no duplicates
    });
    CHECK(names.size() == 16);
}

TEST_CASE("conv wrappers: configured geometry matches the ops") {
    Rng rng(6);
    nn::Conv conv;
    conv.init(2, 3, 3, 2, 1, rng);
    Graph g;
    Node* out = conv.forward(g, g.constant(rng.normal_tensor({2, 5, 4})));
    CHECK(out->value.shape() == std::vector<int>{3, 3, 2});

    nn::ConvT up;
    up.init(3, 2, 3, 2, 1, rng);
    up.out_pad_h = 1;
    up.out_pad_w = 1;
    Node* big = up.forward(g, out);
    CHECK(big->value.shape() == std::vector<int>{2, 6, 4});
}

TEST_CASE("sinusoidal embedding: layout and frozen values") {
    Tensor e = nn::sinusoidal_embedding(0.0, 8);
    CHECK(e.shape() == std::vector<int>{1, 8});
    for (int i = 0; i < 4; ++i) {
        CHECK(e[2 * i] == 0.0);      // sin(0)
        CHECK(e[2 * i + 1] == 1.0);  // cos(0)
    }
    Tensor e2 = nn::sinusoidal_embedding(3.0, 8);
    CHECK(e2[0] == doctest::Approx(std::sin(3.0)).epsilon(1e-15));
    CHECK(e2[1] == doctest::Approx(std::cos(3.0)).epsilon(1e-15));
    // frequencies decay geometrically toward 1/10000
    const double f3 = std::exp(-std::log(10000.0) * 3.0 / 4.0);
    CHECK(e2[6] == doctest::Approx(std::sin(3.0 * f3)).epsilon(1e-12));
    CHECK(e2[7] == doctest::Approx(std::cos(3.0 * f3)).epsilon(1e-12));
}
