#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "bicon/errors.hpp"
#include "bicon/matrix.hpp"
#include "bicon/rng.hpp"

using namespace bicon;

TEST_SUITE("rng") {
    TEST_CASE("pcg32 matches the reference stream for seed 42, stream 54") {
        Pcg32 rng(42, 54);
        const std::uint32_t expected[] = {0xa15c02b7u, 0x7b47f409u, 0xba1d3330u,
                                          0x83d2f293u, 0xbfa4784bu, 0xcbed606eu};
        for (auto e : expected) CHECK(rng.next_u32() == e);
    }

    TEST_CASE("uniform draws stay in [0, 1) and streams differ") {
        Pcg32 a(7, 0), b(7, 1);
        bool differ = false;
        for (int i = 0; i < 1000; ++i) {
            const double u = a.uniform();
            CHECK(u >= 0.0);
            CHECK(u < 1.0);
            differ |= u != b.uniform();
        }
        CHECK(differ);
    }

    TEST_CASE("normal draws have roughly unit moments") {
        Pcg32 rng(3);
        double s = 0, s2 = 0;
        const int n = 20000;
        for (int i = 0; i < n; ++i) {
            const double x = rng.normal();
            s += x;
            s2 += x * x;
        }
        CHECK(std::abs(s / n) < 0.03);
        CHECK(std::abs(s2 / n - 1.0) < 0.05);
    }

    TEST_CASE("shuffle is a permutation and reproducible") {
        std::vector<int> a(50);
        std::iota(a.begin(), a.end(), 0);
        std::vector<int> b(a);
        Pcg32 r1(9), r2(9);
        r1.shuffle(std::span<int>(a));
        r2.shuffle(std::span<int>(b));
        CHECK(a == b);
        std::vector<int> sorted = a;
        std::sort(sorted.begin(), sorted.end());
        for (int i = 0; i < 50; ++i) CHECK(sorted[static_cast<std::size_t>(i)] == i);
    }

    TEST_CASE("bounded never reaches the bound") {
        Pcg32 rng(1);
        for (int i = 0; i < 1000; ++i) CHECK(rng.bounded(3) < 3u);
    }
}

TEST_SUITE("matrix") {
    TEST_CASE("products agree with their transposed forms") {
        const Matrix a{{1, 2, 3}, {4, 5, 6}};
        const Matrix b{{1, 0}, {0, 1}, {2, -1}};
        const Matrix ab = matmul(a, b);
        CHECK(ab == Matrix{{7, -1}, {16, -1}});
        CHECK(matmul_tn(transpose(a), b) == ab);
        CHECK(matmul_nt(a, transpose(b)) == ab);
    }

    TEST_CASE("shape mismatch is a dimension error") {
        CHECK_THROWS_AS(matmul(Matrix(2, 3), Matrix(2, 3)), DimensionError);
    }

    TEST_CASE("row helpers") {
        const Matrix m{{3, 4}, {0, 1}};
        CHECK(l2_norm(m.row(0)) == 5.0);
        CHECK(squared_distance(m.row(0), m.row(1)) == 18.0);
        CHECK(dot(m.row(0), m.row(1)) == 4.0);
        const std::size_t idx[] = {1, 1, 0};
        const Matrix g = gather_rows(m, idx);
        CHECK(g == Matrix{{0, 1}, {0, 1}, {3, 4}});
        CHECK(max_abs(m) == 4.0);
    }
}
