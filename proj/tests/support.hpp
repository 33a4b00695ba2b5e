#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "bicon/matrix.hpp"
#include "bicon/rng.hpp"

namespace bicon::testing {

// Interior point of the simplex: exponentials of uniforms, normalized.
inline std::vector<double> random_simplex(Pcg32& rng, std::size_t n, double spread = 2.0) {
    std::vector<double> v(n);
    double s = 0.0;
    for (auto& x : v) {
        x = std::exp(spread * rng.uniform(-1.0, 1.0));
        s += x;
    }
    for (auto& x : v) x /= s;
    return v;
}

inline Matrix random_matrix(Pcg32& rng, std::size_t rows, std::size_t cols, double sd = 1.0) {
    Matrix m(rows, cols);
    for (auto& v : m.data()) v = rng.normal(0.0, sd);
    return m;
}

inline double rel_err(double a, double b) {
    const double scale = std::max({std::abs(a), std::abs(b), 1e-12});
    return std::abs(a - b) / scale;
}

}  // namespace bicon::testing
