#pragma once

// Seeded random streams with hand-rolled distributions. The standard library
// leaves uniform_real_distribution implementation-defined, which would break
// byte-identical outputs across toolchains; mt19937_64 itself is fully
// specified, so drawing from the raw stream keeps every artifact reproducible.

#include "wavemem/numerics.hpp"

#include <cstdint>
#include <random>

namespace wavemem {

class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform in [0, 1) with 53 bits of precision.
    double uniform01() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) {
        return lo + (hi - lo) * uniform01();
    }

    /// Standard normal via Box-Muller; consumes exactly two uniforms per draw.
    double gaussian() {
        const double u1 = 1.0 - uniform01(); // (0, 1], keeps the log finite
        const double u2 = uniform01();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    /// Fair coin over {-1, +1}.
    double sign() { return (engine_() & 1u) ? 1.0 : -1.0; }

    Vec uniform_vec(Index n, double lo, double hi) {
        Vec v(n);
        for (Index i = 0; i < n; ++i) v(i) = uniform(lo, hi);
        return v;
    }

    Vec sign_vec(Index n) {
        Vec v(n);
        for (Index i = 0; i < n; ++i) v(i) = sign();
        return v;
    }

    /// Row-major fill so the consumption order is part of the format.
    Mat uniform_mat(Index rows, Index cols, double lo, double hi) {
        Mat m(rows, cols);
        for (Index r = 0; r < rows; ++r)
            for (Index c = 0; c < cols; ++c) m(r, c) = uniform(lo, hi);
        return m;
    }

    Mat gaussian_mat(Index rows, Index cols, double stddev = 1.0) {
        Mat m(rows, cols);
        for (Index r = 0; r < rows; ++r)
            for (Index c = 0; c < cols; ++c) m(r, c) = stddev * gaussian();
        return m;
    }

private:
    std::mt19937_64 engine_;
};

} // namespace wavemem
