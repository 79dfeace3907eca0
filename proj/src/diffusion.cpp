#include "diffpose/diffusion.hpp"

#include <algorithm>
#include <cmath>

#include "diffpose/errors.hpp"

namespace diffpose {

double NoiseSchedule::at(int t) const {
    if (t == -1) return 1.0;
    if (t < -1 || t > T)
        throw RangeError("schedule: t=" + std::to_string(t) + " outside [-1, " + std::to_string(T) +
                         "]");
    return alpha_bar[static_cast<std::size_t>(t)];
}

void NoiseSchedule::validate() const {
    if (T < 1 || static_cast<int>(alpha_bar.size()) != T + 1)
        throw ConfigError("schedule: table must hold T+1 entries with T >= 1");
    if (alpha_bar[0] != 1.0) throw ConfigError("schedule: alpha_bar[0] must be exactly 1");
    for (int t = 1; t <= T; ++t) {
        const double v = alpha_bar[static_cast<std::size_t>(t)];
        if (!(v > 0.0 && v <= 1.0)) throw ConfigError("schedule: entries must lie in (0, 1]");
        if (!(v < alpha_bar[static_cast<std::size_t>(t - 1)]))
            throw ConfigError("schedule: alpha_bar must decrease strictly at t=" +
                              std::to_string(t));
    }
    if (!(alpha_bar[static_cast<std::size_t>(T)] < 0.01))
        throw ConfigError("schedule: alpha_bar[T] must be below 0.01");
}

NoiseSchedule build_cosine_schedule(int T, double s) {
    if (T < 1) throw ConfigError("build_cosine_schedule: T must be >= 1");
    if (!(s > 0.0)) throw ConfigError("build_cosine_schedule: s must be positive");
    const double f0 = std::cos((s / (1.0 + s)) * M_PI / 2.0);
    NoiseSchedule sched;
    sched.T = T;
    sched.alpha_bar.resize(static_cast<std::size_t>(T) + 1);
    sched.alpha_bar[0] = 1.0;
    const double floor_v = 1e-5;
    for (int t = 1; t <= T; ++t) {
        const double arg = ((static_cast<double>(t) / T + s) / (1.0 + s)) * M_PI / 2.0;
        const double f = std::cos(arg);
        double v = std::min((f * f) / (f0 * f0), 1.0);
        if (v < floor_v) v = floor_v;
        // Keep strict decrease when the clip floor (or cos^2 flatness)
        // produces a non-decreasing entry.
        const double prev = sched.alpha_bar[static_cast<std::size_t>(t - 1)];
        if (v >= prev) v = prev * 0.999;
        sched.alpha_bar[static_cast<std::size_t>(t)] = v;
    }
    sched.validate();
    return sched;
}

Tensor forward_diffuse(const Tensor& x0, int t, const Tensor& eps, const NoiseSchedule& schedule) {
    if (!x0.same_shape(eps))
        throw ShapeError("forward_diffuse: x0 " + x0.shape_str() + " vs eps " + eps.shape_str());
    if (t < 0 || t > schedule.T)
        throw RangeError("forward_diffuse: t=" + std::to_string(t) + " outside [0, " +
                         std::to_string(schedule.T) + "]");
    const double ab = schedule.at(t);
    const double c0 = std::sqrt(ab), c1 = std::sqrt(1.0 - ab);
    Tensor out = x0;
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = c0 * out[i] + c1 * eps[i];
    return out;
}

SamplingPlan make_sampling_plan(int T, int steps) {
    if (steps < 1) throw ConfigError("make_sampling_plan: steps must be >= 1");
    if (steps > T) throw ConfigError("make_sampling_plan: steps must not exceed T");
    std::vector<int> times(static_cast<std::size_t>(steps) + 1);
    const double span = static_cast<double>(T);  // from -1 to T-1
    for (int i = 0; i <= steps; ++i) {
        const double v = -1.0 + span * static_cast<double>(i) / steps;
        times[static_cast<std::size_t>(i)] = static_cast<int>(std::lround(v));
    }
    SamplingPlan plan;
    plan.steps = steps;
    plan.pairs.reserve(static_cast<std::size_t>(steps));
    for (int i = steps; i >= 1; --i)
        plan.pairs.emplace_back(times[static_cast<std::size_t>(i)],
                                times[static_cast<std::size_t>(i - 1)]);
    for (std::size_t i = 0; i < plan.pairs.size(); ++i) {
        if (plan.pairs[i].first <= plan.pairs[i].second)
            throw ConfigError("make_sampling_plan: degenerate pair (steps too dense for T)");
    }
    return plan;
}

Tensor ddim_step(const Tensor& x_t, const Tensor& x0_hat, int t_now, int t_next,
                 const NoiseSchedule& schedule) {
    if (!x_t.same_shape(x0_hat))
        throw ShapeError("ddim_step: x_t " + x_t.shape_str() + " vs x0_hat " + x0_hat.shape_str());
    if (t_now <= t_next)
        throw RangeError("ddim_step: requires t_now > t_next, got (" + std::to_string(t_now) +
                         ", " + std::to_string(t_next) + ")");
    if (t_next < -1) throw RangeError("ddim_step: t_next must be >= -1");
    if (t_next == -1) return x0_hat;  // abar_next = 1: output is x0_hat exactly
    const double ab_now = schedule.at(t_now);
    const double ab_next = schedule.at(t_next);
    if (ab_now >= 1.0) {
        for (std::int64_t i = 0; i < x_t.numel(); ++i)
            if (x_t[i] != x0_hat[i])
                throw NumericError("ddim_step: abar_now = 1 with x_t != x0_hat is degenerate");
        return x0_hat;
    }
    const double sq_now = std::sqrt(ab_now), sq_next = std::sqrt(ab_next);
    const double inv_noise_now = 1.0 / std::sqrt(1.0 - ab_now);
    const double noise_next = std::sqrt(1.0 - ab_next);
    Tensor out = x0_hat;
    for (std::int64_t i = 0; i < out.numel(); ++i) {
        const double eps_hat = (x_t[i] - sq_now * x0_hat[i]) * inv_noise_now;
        out[i] = sq_next * x0_hat[i] + noise_next * eps_hat;
    }
    return out;
}

}  // namespace diffpose
