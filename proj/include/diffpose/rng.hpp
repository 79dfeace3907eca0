#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "diffpose/errors.hpp"
#include "diffpose/tensor.hpp"

namespace diffpose {

// Deterministic random source.  mt19937_64 output is fully specified by the
// standard, but the std::*_distribution adapters are not, so the uniform and
// normal transforms are done by hand here.  Result: identical streams on any
// conforming platform.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    std::uint64_t next_u64() { return eng_(); }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [lo, hi] inclusive, via rejection-free modulo on the
    // full 64-bit output (bias is < 2^-50 for our ranges and fully
    // deterministic, which is what matters here).
    int uniform_int(int lo, int hi) {
        if (hi < lo) throw RangeError("uniform_int: hi < lo");
        std::uint64_t span = static_cast<std::uint64_t>(hi) - static_cast<std::uint64_t>(lo) + 1;
        return lo + static_cast<int>(eng_() % span);
    }

    // Standard normal via the classic (non-polar) Box-Muller transform:
    // always consumes exactly two uniforms per pair, so the stream layout is
    // fixed.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        // u1 in (0,1] keeps log() finite.
        double u1 = static_cast<double>((eng_() >> 11) + 1) * 0x1.0p-53;
        double u2 = static_cast<double>(eng_() >> 11) * 0x1.0p-53;
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 2.0 * M_PI * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    Tensor normal_tensor(std::vector<int> shape, double mean = 0.0, double stddev = 1.0) {
        Tensor t(std::move(shape));
        for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = mean + stddev * normal();
        return t;
    }

    // Fisher-Yates with our own index draws (std::shuffle is
    // implementation-defined).
    template <class T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(eng_() % i);
            std::swap(v[i - 1], v[j]);
        }
    }

    // Derive an independent stream seed (splitmix64 finalizer).
    static std::uint64_t derive(std::uint64_t seed, std::uint64_t stream) {
        std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

  private:
    std::mt19937_64 eng_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace diffpose
