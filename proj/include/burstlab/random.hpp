#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>

#include "burstlab/common.hpp"
#include "burstlab/tensor.hpp"

namespace burstlab {

/// Deterministic random source: mt19937_64 plus hand-rolled uniform/normal draws so the
/// sequence does not depend on the standard library's distribution implementations.
class RandomSource {
public:
    explicit RandomSource(uint64_t seed) : base_seed_(seed), eng_(seed) {}

    uint64_t base_seed() const { return base_seed_; }

    /// Uniform in [0,1) with 53 random bits.
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Standard normal via Box-Muller; the second draw of each pair is cached.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = 1.0 - uniform(); // (0,1], keeps log() finite
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 2.0 * M_PI * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    /// Uniform integer in [0,n). Rejection sampling, no modulo bias.
    uint64_t integer(uint64_t n) {
        if (n == 0) throw param_error("RandomSource::integer: n must be positive");
        uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        uint64_t x;
        do {
            x = eng_();
        } while (x >= limit);
        return x % n;
    }

    /// Independent child stream; pure function of (base seed, stream index).
    RandomSource derive(uint64_t stream) const { return RandomSource(mix(base_seed_, stream)); }

    /// splitmix64-style avalanche over the (seed, stream) pair.
    static uint64_t mix(uint64_t seed, uint64_t stream) {
        uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    template <class T>
    void fill_normal(TensorT<T>& t) {
        for (auto& x : t.v) x = static_cast<T>(normal());
    }

    std::string save_state() const {
        std::ostringstream os;
        os << eng_ << " " << (has_spare_ ? 1 : 0) << " ";
        os.precision(17);
        os << spare_ << " " << base_seed_;
        return os.str();
    }

    void load_state(const std::string& s) {
        std::istringstream is(s);
        int spare_flag = 0;
        is >> eng_ >> spare_flag >> spare_ >> base_seed_;
        if (!is) throw io_error(io_error::code::truncated, "bad RNG state string");
        has_spare_ = spare_flag != 0;
    }

private:
    uint64_t base_seed_;
    std::mt19937_64 eng_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

/// Drop-in noise source whose draws are all zero. Used to exercise the
/// deterministic paths of stochastic operations.
struct ZeroNoise {
    double uniform() { return 0.0; }
    double normal() { return 0.0; }
    template <class T>
    void fill_normal(TensorT<T>& t) {
        t.zero();
    }
};

} // namespace burstlab
