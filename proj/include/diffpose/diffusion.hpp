#pragma once

#include <utility>
#include <vector>

#include "diffpose/tensor.hpp"

namespace diffpose {

// Cumulative-product noise table.  alpha_bar[t] for t = 0..T, alpha_bar[0] = 1
// exactly, strictly decreasing, alpha_bar[T] in (0, 0.01).
struct NoiseSchedule {
    int T = 0;
    std::vector<double> alpha_bar;

    double at(int t) const;  // t = -1 is treated as alpha_bar = 1
    void validate() const;
};

// Ordered (t_now, t_next) pairs walked by the sampler; t_next of the final
// pair is -1.
struct SamplingPlan {
    int steps = 0;
    std::vector<std::pair<int, int>> pairs;
};

// Cosine schedule: alpha_bar_t = f(t)/f(0), f(t) = cos^2(((t/T + s)/(1+s)) *
// pi/2), entries clipped into (1e-5, 1].  The raw tail of the cosine curve
// dips below the clip floor for large T, which would flatten consecutive
// entries onto the floor and break strict monotonicity; floored entries are
// therefore decayed geometrically below their predecessor instead.
NoiseSchedule build_cosine_schedule(int T, double s = 0.008);

// Eq. 1 forward corruption: sqrt(abar_t) * x0 + sqrt(1 - abar_t) * eps.
Tensor forward_diffuse(const Tensor& x0, int t, const Tensor& eps, const NoiseSchedule& schedule);

// steps+1 evenly spaced reals over [-1, T-1], rounded, reversed, paired.
SamplingPlan make_sampling_plan(int T, int steps);

// Deterministic DDIM update (eta = 0):
//   eps_hat = (x_t - sqrt(abar_now) * x0_hat) / sqrt(1 - abar_now)
//   out     = sqrt(abar_next) * x0_hat + sqrt(1 - abar_next) * eps_hat
// t_next = -1 short-circuits to x0_hat (abar = 1 kills the noise term).
Tensor ddim_step(const Tensor& x_t, const Tensor& x0_hat, int t_now, int t_next,
                 const NoiseSchedule& schedule);

}  // namespace diffpose
