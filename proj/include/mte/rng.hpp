#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mte/common.hpp"
#include "mte/numerics.hpp"

namespace mte {

/// Deterministic counter-based generator (SplitMix64 core). Streams derived
/// by fork() are statistically independent, so per-cell or per-seed work can
/// run in any order without perturbing other streams.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(mix(seed ^ 0x9E3779B97F4A7C15ull)) {}

    Rng fork(std::uint64_t stream) const {
        Rng r(0);
        r.state_ = mix(state_ ^ mix(stream + 0x632BE59BD9B4E019ull));
        return r;
    }

    std::uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ull;
        return mix(state_);
    }

    // Uniform on (0,1): 53-bit mantissa, offset so 0 and 1 are excluded.
    double uniform01() {
        return (static_cast<double>(next_u64() >> 11) + 0.5) * (1.0 / 9007199254740992.0);
    }

    double uniform(double a, double b) { return a + (b - a) * uniform01(); }

    // Inverse-CDF sampling keeps the stream layout independent of any
    // rejection loop and bit-stable across platforms.
    double normal() { return norm_quantile(uniform01()); }

    double normal(double mean, double sd) { return mean + sd * normal(); }

    bool bernoulli(double p) { return uniform01() < p; }

    std::size_t index(std::size_t n) { return static_cast<std::size_t>(next_u64() % n); }

private:
    static std::uint64_t mix(std::uint64_t z) {
        z ^= z >> 30;
        z *= 0xBF58476D1CE4E5B9ull;
        z ^= z >> 27;
        z *= 0x94D049BB133111EBull;
        z ^= z >> 31;
        return z;
    }

    std::uint64_t state_;
};

/// Samplable scalar distribution, JSON-describable for configs.
struct DistSpec {
    enum class Kind { Constant, Bernoulli, Uniform, Normal, Discrete };

    Kind kind = Kind::Constant;
    double a = 0.0;  // constant value / bernoulli p / uniform low / normal mean
    double b = 0.0;  // uniform high / normal sd
    std::vector<double> values;
    std::vector<double> probs;

    static DistSpec constant(double c) { return {Kind::Constant, c, 0.0, {}, {}}; }
    static DistSpec bernoulli(double p) { return {Kind::Bernoulli, p, 0.0, {}, {}}; }
    static DistSpec uniform(double lo, double hi) { return {Kind::Uniform, lo, hi, {}, {}}; }
    static DistSpec normal(double mean, double sd) { return {Kind::Normal, mean, sd, {}, {}}; }
    static DistSpec discrete(std::vector<double> vals, std::vector<double> p) {
        return {Kind::Discrete, 0.0, 0.0, std::move(vals), std::move(p)};
    }

    double sample(Rng& rng) const {
        switch (kind) {
        case Kind::Constant: return a;
        case Kind::Bernoulli: return rng.bernoulli(a) ? 1.0 : 0.0;
        case Kind::Uniform: return rng.uniform(a, b);
        case Kind::Normal: return a + b * rng.normal();
        case Kind::Discrete: {
            const double u = rng.uniform01();
            double acc = 0.0;
            for (std::size_t i = 0; i < values.size(); ++i) {
                acc += probs[i];
                if (u <= acc) return values[i];
            }
            return values.back();
        }
        }
        throw Error("DistSpec: unknown kind");
    }

    Interval range() const {
        switch (kind) {
        case Kind::Constant: return {a, a};
        case Kind::Bernoulli: return {0.0, 1.0};
        case Kind::Uniform: return {a, b};
        case Kind::Normal: return {a - 8.0 * b, a + 8.0 * b};
        case Kind::Discrete: {
            double lo = values.front(), hi = values.front();
            for (double v : values) {
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
            return {lo, hi};
        }
        }
        throw Error("DistSpec: unknown kind");
    }
};

}  // namespace mte
