#include <doctest.h>

#include <cmath>

#include "bicon/divergence.hpp"
#include "bicon/errors.hpp"
#include "support.hpp"

using namespace bicon;
using bicon::testing::random_simplex;

namespace {

const ProbabilityVector kOneZero({1.0, 0.0});
const ProbabilityVector kHalfHalf({0.5, 0.5});

// Oracle: 0.5 ln(4/3) + 0.5 (0.5 ln(2/3) + 0.5 ln 2), evaluated at 30 digits.
constexpr double kJsdOneZeroVsHalf = 0.215761554338835695579;

double central_difference(Divergence kind, const std::vector<double>& p, std::vector<double> q,
                          std::size_t k, double h) {
    q[k] += h;
    const double up = rowwise::divergence(kind, p, q);
    q[k] -= 2 * h;
    const double down = rowwise::divergence(kind, p, q);
    return (up - down) / (2 * h);
}

}  // namespace

TEST_SUITE("divergence") {
    TEST_CASE("closed-form values on two-point distributions") {
        CHECK(divergence(Divergence::KL, kHalfHalf, kHalfHalf) == 0.0);
        CHECK(divergence(Divergence::KL, kOneZero, kHalfHalf) ==
              doctest::Approx(std::log(2.0)).epsilon(1e-12));
        CHECK(divergence(Divergence::TV, kOneZero, kHalfHalf) == doctest::Approx(0.5).epsilon(1e-12));
        CHECK(std::abs(divergence(Divergence::Hellinger, kOneZero, kHalfHalf) -
                       (1.0 - std::sqrt(2.0) / 2.0)) < 1e-9);
        CHECK(std::abs(divergence(Divergence::JSD, kOneZero, kHalfHalf) - kJsdOneZeroVsHalf) < 1e-9);
        CHECK(std::abs(divergence(Divergence::JSD, kOneZero, ProbabilityVector({0.0, 1.0})) -
                       std::log(2.0)) < 1e-9);
    }

    TEST_CASE("gradient examples") {
        const auto g = divergence_grad_q(Divergence::KL, kOneZero, kHalfHalf);
        CHECK(g[0] == doctest::Approx(-2.0));
        CHECK(g[1] == 0.0);
        const ProbabilityVector p({0.2, 0.3, 0.5});
        for (double v : divergence_grad_q(Divergence::Hellinger, p, p)) CHECK(v == 0.0);
        for (double v : divergence_grad_q(Divergence::TV, p, p)) CHECK(v == 0.0);
    }

    TEST_CASE("validation errors") {
        CHECK_THROWS_AS(ProbabilityVector({0.5, 0.6}), DomainError);
        CHECK_THROWS_AS(ProbabilityVector({1.2, -0.2}), DomainError);
        CHECK_THROWS_AS(ProbabilityVector({1.0}), DomainError);
        CHECK_THROWS_AS(divergence(Divergence::TV, kHalfHalf, ProbabilityVector({0.2, 0.3, 0.5})),
                        DimensionError);
        CHECK_THROWS_AS(divergence_grad_q(Divergence::KL, kHalfHalf, ProbabilityVector({1, 0, 0})),
                        DimensionError);
    }

    TEST_CASE("names round-trip and unknown names are config errors") {
        for (auto kind : kAllDivergences) CHECK(parse_divergence(to_string(kind)) == kind);
        CHECK(parse_divergence("tv") == Divergence::TV);
        CHECK_THROWS_AS(parse_divergence("renyi"), ConfigError);
    }

    TEST_CASE("bounds, non-negativity and symmetry on random simplex pairs") {
        Pcg32 rng(2024);
        for (int trial = 0; trial < 1000; ++trial) {
            const std::size_t n = 2 + rng.bounded(15);
            const ProbabilityVector p(random_simplex(rng, n, 4.0));
            const ProbabilityVector q(random_simplex(rng, n, 4.0));
            for (auto kind : kAllDivergences) {
                CHECK(divergence(kind, p, q) >= -1e-12);
                CHECK(divergence(kind, p, p) <= 1e-12);
            }
            CHECK(divergence(Divergence::TV, p, q) <= 1.0 + 1e-12);
            CHECK(divergence(Divergence::JSD, p, q) <= std::log(2.0) + 1e-12);
            CHECK(divergence(Divergence::Hellinger, p, q) <= 1.0 + 1e-12);
            for (auto kind : {Divergence::TV, Divergence::JSD, Divergence::Hellinger}) {
                CHECK(divergence(kind, p, q) == divergence(kind, q, p));
            }
        }
    }

    TEST_CASE("KL is asymmetric on a fixed pair") {
        const ProbabilityVector p({0.7, 0.2, 0.1});
        const ProbabilityVector q({0.1, 0.3, 0.6});
        CHECK(std::abs(divergence(Divergence::KL, p, q) - divergence(Divergence::KL, q, p)) > 1e-3);
    }

    TEST_CASE("small divergence implies close distributions") {
        Pcg32 rng(5);
        for (int trial = 0; trial < 200; ++trial) {
            const auto base = random_simplex(rng, 6);
            std::vector<double> near = base;
            const double eps = 1e-6 * rng.uniform();
            near[0] += eps;
            near[1] -= eps;
            for (auto kind : kAllDivergences) {
                if (rowwise::divergence(kind, base, near) < 1e-9) {
                    double worst = 0;
                    for (std::size_t i = 0; i < 6; ++i) worst = std::max(worst, std::abs(base[i] - near[i]));
                    CHECK(worst < 1e-3);
                }
            }
        }
    }

    TEST_CASE("zero entries in p contribute nothing; q is floored") {
        const ProbabilityVector p({0.0, 1.0});
        const ProbabilityVector q({1.0, 0.0});
        const double kl = divergence(Divergence::KL, p, q);
        CHECK(std::isfinite(kl));
        CHECK(kl == doctest::Approx(-std::log(kProbabilityFloor)));
        for (double g : divergence_grad_q(Divergence::KL, p, q)) CHECK(std::isfinite(g));
    }

    TEST_CASE("analytic gradients match central differences on the 8-simplex") {
        Pcg32 rng(11);
        for (auto kind : kAllDivergences) {
            for (int trial = 0; trial < 50; ++trial) {
                const auto p = random_simplex(rng, 8);
                const auto q = random_simplex(rng, 8);
                std::vector<double> g(8);
                rowwise::divergence_grad_q(kind, p, q, g);
                for (std::size_t k = 0; k < 8; ++k) {
                    // TV is piecewise linear; skip kinks closer than h.
                    if (kind == Divergence::TV && std::abs(p[k] - q[k]) < 1e-5) continue;
                    const double num = central_difference(kind, p, q, k, 1e-6);
                    const double tol = kind == Divergence::JSD ? 1e-6 : 1e-5;
                    CHECK(std::abs(g[k] - num) <= tol * std::max(std::abs(num), 1e-3));
                }
            }
        }
    }
}
