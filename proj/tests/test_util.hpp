#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "diffpose/autodiff.hpp"
#include "diffpose/rng.hpp"

namespace diffpose::testutil {

// Evaluates the scalar loss a builder produces on a fresh graph.
inline double loss_value(const std::function<ad::Node*(ad::Graph&)>& build) {
    ad::Graph g;
    return build(g)->value[0];
}

inline double rel_err(double a, double b, double floor = 1e-6) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

// Central finite differences against the tape gradients on a sample of
// coordinates per parameter.  Returns the worst relative error seen.
inline double grad_check(const std::function<ad::Node*(ad::Graph&)>& build,
                         const std::vector<ad::Param*>& params, Rng& rng,
                         int samples_per_param = 4, double h = 1e-5) {
    for (ad::Param* p : params) p->grad.fill(0.0);
    {
        ad::Graph g;
        ad::Node* loss = build(g);
        g.backward(loss);
        g.add_param_grads(1.0);
    }
    double worst = 0.0;
    for (ad::Param* p : params) {
        const std::int64_t n = p->value.numel();
        for (int s = 0; s < samples_per_param; ++s) {
            const std::int64_t i =
                n == 1 ? 0 : rng.uniform_int(0, static_cast<int>(n) - 1);
            const double orig = p->value[i];
            const double step = h * std::max(1.0, std::abs(orig));
            p->value[i] = orig + step;
            const double lp = loss_value(build);
            p->value[i] = orig - step;
            const double lm = loss_value(build);
            p->value[i] = orig;
            const double fd = (lp - lm) / (2.0 * step);
            worst = std::max(worst, rel_err(p->grad[i], fd));
        }
    }
    return worst;
}

}  // namespace diffpose::testutil
