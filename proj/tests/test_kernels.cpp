#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "bicon/errors.hpp"
#include "bicon/kernels.hpp"
#include "support.hpp"

using namespace bicon;
using bicon::testing::random_matrix;

namespace {

void check_rows(const NeighborhoodDistribution& d, double tol = 1e-9) {
    for (std::size_t i = 0; i < d.size(); ++i) {
        CHECK(d(i, i) == 0.0);
        double s = 0.0;
        for (double v : d.row(i)) {
            CHECK(v >= 0.0);
            s += v;
        }
        CHECK(std::abs(s - 1.0) <= tol);
    }
}

Matrix simplex_rows(Pcg32& rng, std::size_t n, std::size_t c) {
    Matrix a(n, c);
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0;
        for (auto& v : a.row(i)) s += (v = rng.uniform() + 1e-3);
        for (auto& v : a.row(i)) v /= s;
    }
    return a;
}

}  // namespace

TEST_SUITE("kernels") {
    TEST_CASE("distance scores for a symmetric placement") {
        const Matrix z{{0, 0}, {1, 0}, {-1, 0}};
        const Matrix s = similarity_matrix(z, KernelSpec(KernelFamily::Distance, 1.0));
        CHECK(s(0, 1) == -1.0);
        CHECK(s(0, 2) == -1.0);
        CHECK(s(1, 2) == -4.0);
        const auto q = kernel_rows(s);
        CHECK(q(0, 1) == doctest::Approx(0.5));
        CHECK(q(0, 2) == doctest::Approx(0.5));
    }

    TEST_CASE("angular score of identical unit vectors is C") {
        const Matrix z{{0.6, 0.8}, {0.6, 0.8}};
        CHECK(similarity_matrix(z, KernelSpec(KernelFamily::Angular, 1.0))(0, 1) ==
              doctest::Approx(1.0));
        CHECK(similarity_matrix(z, KernelSpec(KernelFamily::Angular, 10.0))(0, 1) ==
              doctest::Approx(10.0));
        CHECK_THROWS_AS(similarity_matrix(Matrix{{1, 1}, {0, 2}}, KernelSpec(KernelFamily::Angular, 1.0)),
                        DomainError);
    }

    TEST_CASE("distance scores match a double loop") {
        Pcg32 rng(1);
        const Matrix z = random_matrix(rng, 5, 3);
        const Matrix s = similarity_matrix(z, KernelSpec(KernelFamily::Distance, 1.5));
        for (std::size_t i = 0; i < 5; ++i) {
            for (std::size_t j = 0; j < 5; ++j) {
                if (i == j) continue;
                double d = 0;
                for (std::size_t k = 0; k < 3; ++k) d += (z(i, k) - z(j, k)) * (z(i, k) - z(j, k));
                CHECK(s(i, j) == -1.5 * d);
            }
        }
    }

    TEST_CASE("kernel and scale validation") {
        CHECK_THROWS_AS(KernelSpec(KernelFamily::Distance, 0.0), DomainError);
        CHECK_THROWS_AS(similarity_matrix(Matrix{{std::nan(""), 0}, {0, 0}},
                                          KernelSpec(KernelFamily::Distance, 1.0)),
                        DomainError);
        CHECK_THROWS_AS(kernel_rows(Matrix(1, 1)), DimensionError);
        CHECK(parse_kernel_family("cosine") == KernelFamily::Angular);
        CHECK_THROWS_AS(parse_kernel_family("rbf"), ConfigError);
    }

    TEST_CASE("softmax rows: analytic values, sums, shift invariance") {
        const Matrix s{{0, std::log(3.0), 0}, {0, 0, 0}, {0, 0, 0}};
        const auto q = kernel_rows(s);
        CHECK(q(0, 1) == doctest::Approx(0.75).epsilon(1e-14));
        CHECK(q(0, 2) == doctest::Approx(0.25).epsilon(1e-14));

        Pcg32 rng(2);
        Matrix r = random_matrix(rng, 6, 6, 3.0);
        const auto a = kernel_rows(r);
        check_rows(a, 1e-12);
        for (std::size_t i = 0; i < 6; ++i) {
            const double shift = rng.uniform(-50, 50);
            for (auto& v : r.row(i)) v += shift;
        }
        const auto b = kernel_rows(r);
        for (std::size_t i = 0; i < 6; ++i)
            for (std::size_t j = 0; j < 6; ++j) CHECK(std::abs(a(i, j) - b(i, j)) <= 1e-12);
    }

    TEST_CASE("extreme scores underflow to zero without failing") {
        const Matrix s{{0, 0, -1e6}, {0, 0, 0}, {0, 0, 0}};
        const auto q = kernel_rows(s);
        CHECK(q(0, 2) == 0.0);
        CHECK(q(0, 1) == 1.0);
    }

    TEST_CASE("zero upstream gradient gives zero gradient") {
        Pcg32 rng(3);
        const Matrix z = random_matrix(rng, 5, 2);
        for (auto fam : {KernelFamily::Distance, KernelFamily::Angular}) {
            const Matrix g = kernel_rows_grad(z, KernelSpec(fam, 1.0), Matrix(5, 5));
            CHECK(max_abs(g) == 0.0);
        }
        CHECK_THROWS_AS(kernel_rows_grad(z, KernelSpec(KernelFamily::Distance, 1.0), Matrix(4, 4)),
                        DimensionError);
    }

    TEST_CASE("kernel gradients match central differences of a linear functional") {
        Pcg32 rng(4);
        for (auto fam : {KernelFamily::Distance, KernelFamily::Angular}) {
            const KernelSpec spec(fam, 2.0);
            Matrix z = random_matrix(rng, 5, 3);
            Matrix w = random_matrix(rng, 5, 5);
            for (std::size_t i = 0; i < 5; ++i) w(i, i) = 0.0;
            auto f = [&] {
                const auto q = learned_distribution(z, spec);
                double s = 0;
                for (std::size_t i = 0; i < 5; ++i)
                    for (std::size_t j = 0; j < 5; ++j) s += w(i, j) * q(i, j);
                return s;
            };
            const Matrix g = kernel_rows_grad(z, spec, w);
            for (std::size_t k = 0; k < z.data().size(); ++k) {
                const double h = 1e-6;
                const double keep = z.data()[k];
                z.data()[k] = keep + h;
                const double up = f();
                z.data()[k] = keep - h;
                const double down = f();
                z.data()[k] = keep;
                const double num = (up - down) / (2 * h);
                CHECK(std::abs(g.data()[k] - num) <= 1e-5 * std::max(std::abs(num), 1e-3));
            }
        }
    }

    TEST_CASE("sne rows hit the requested perplexity") {
        Matrix line(10, 1);
        for (std::size_t i = 0; i < 10; ++i) line(i, 0) = static_cast<double>(i);
        const auto p = supervisory_sne(line, 5.0);
        check_rows(p);
        for (std::size_t i = 0; i < 10; ++i) CHECK(std::abs(row_entropy(p.row(i)) - std::log(5.0)) < 1e-4);

        Pcg32 rng(5);
        const Matrix x = random_matrix(rng, 40, 4);
        for (double perp : {2.0, 7.5, 20.0, 39.0}) {
            const auto q = supervisory_sne(x, perp);
            check_rows(q);
            for (std::size_t i = 0; i < 40; ++i) {
                CHECK(std::abs(std::exp(row_entropy(q.row(i))) - perp) < 1e-3);
            }
        }
    }

    TEST_CASE("sne on equidistant points is uniform") {
        const Matrix simplex{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
        const auto p = supervisory_sne(simplex, 2.0);
        for (std::size_t i = 0; i < 3; ++i)
            for (std::size_t j = 0; j < 3; ++j) CHECK(p(i, j) == (i == j ? 0.0 : 0.5));
        const std::vector<double> u(4, 0.25);
        CHECK(row_entropy(u) == doctest::Approx(std::log(4.0)));
    }

    TEST_CASE("sne perplexity range is checked") {
        const Matrix x{{0.0}, {1.0}, {3.0}};
        CHECK_THROWS_AS(supervisory_sne(x, 1.5), PreconditionError);
        CHECK_THROWS_AS(supervisory_sne(x, 2.5), PreconditionError);
    }

    TEST_CASE("label supervision") {
        const std::vector<int> two_pairs{0, 0, 1, 1};
        const auto p = supervisory_labels(two_pairs);
        CHECK(p(0, 1) == 1.0);
        CHECK(p(0, 2) == 0.0);
        CHECK(p(0, 3) == 0.0);
        const auto same = supervisory_labels(std::vector<int>{5, 5, 5, 5});
        for (std::size_t i = 0; i < 4; ++i)
            for (std::size_t j = 0; j < 4; ++j) CHECK(same(i, j) == doctest::Approx(i == j ? 0.0 : 1.0 / 3));

        Pcg32 rng(6);
        std::vector<int> labels{0, 0, 0, 0, 1, 1, 1, 1, 2, 2, 2, 2};
        rng.shuffle(std::span<int>(labels));
        const auto r = supervisory_labels(labels);
        check_rows(r);
        for (std::size_t i = 0; i < 12; ++i)
            for (std::size_t j = 0; j < 12; ++j) CHECK((r(i, j) > 0) == (i != j && labels[i] == labels[j]));

        try {
            supervisory_labels(std::vector<int>{0, 0, 7});
            FAIL("expected a precondition error");
        } catch (const PreconditionError& e) {
            CHECK(std::string(e.what()).find('7') != std::string::npos);
        }
    }

    TEST_CASE("knn supervision") {
        Pcg32 rng(7);
        const Matrix x = random_matrix(rng, 20, 5);
        const auto full = supervisory_knn(x, 19);
        for (std::size_t i = 0; i < 20; ++i)
            for (std::size_t j = 0; j < 20; ++j) CHECK(full(i, j) == doctest::Approx(i == j ? 0.0 : 1.0 / 19));

        const auto p = supervisory_knn(x, 4);
        check_rows(p);
        for (std::size_t i = 0; i < 20; ++i) {
            std::vector<std::size_t> order;
            for (std::size_t j = 0; j < 20; ++j)
                if (j != i) order.push_back(j);
            std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
                return squared_distance(x.row(i), x.row(a)) < squared_distance(x.row(i), x.row(b));
            });
            for (std::size_t r = 0; r < order.size(); ++r) {
                CHECK(p(i, order[r]) == (r < 4 ? 0.25 : 0.0));
            }
        }

        Matrix blocks(12, 2);
        for (std::size_t i = 0; i < 12; ++i) blocks(i, 0) = 10.0 * static_cast<double>(i / 4);
        const auto b = supervisory_knn(blocks, 3);
        for (std::size_t i = 0; i < 12; ++i)
            for (std::size_t j = 0; j < 12; ++j)
                CHECK(b(i, j) == doctest::Approx(i != j && i / 4 == j / 4 ? 1.0 / 3 : 0.0));
    }

    TEST_CASE("knn ties go to the smaller index") {
        const Matrix x{{0.0}, {1.0}, {-1.0}, {2.0}};
        const auto nn = nearest_neighbors(x, 1);
        CHECK(nn[0] == std::vector<std::size_t>{1});
    }

    TEST_CASE("cluster transition") {
        const Matrix same(4, 3, 1.0 / 3);
        const auto u = cluster_transition(same);
        for (std::size_t i = 0; i < 4; ++i)
            for (std::size_t j = 0; j < 4; ++j) CHECK(u(i, j) == doctest::Approx(i == j ? 0.0 : 1.0 / 3));

        Matrix onehot(6, 2);
        for (std::size_t i = 0; i < 6; ++i) onehot(i, i / 3) = 1.0;
        const auto q = cluster_transition(onehot);
        for (std::size_t i = 0; i < 6; ++i)
            for (std::size_t j = 0; j < 6; ++j)
                CHECK(q(i, j) == doctest::Approx(i != j && i / 3 == j / 3 ? 0.5 : 0.0));

        Pcg32 rng(8);
        const auto r = cluster_transition(simplex_rows(rng, 6, 4));
        check_rows(r, 1e-12);

        Matrix lonely(3, 3);
        lonely(0, 0) = lonely(1, 1) = lonely(2, 1) = 1.0;
        try {
            cluster_transition(lonely);
            FAIL("expected a numerical error");
        } catch (const NumericalError& e) {
            CHECK(e.index() == 0);
        }
    }

    TEST_CASE("every construction satisfies the distribution invariants (200 instances)") {
        Pcg32 rng(2025);
        for (int t = 0; t < 200; ++t) {
            const std::size_t n = 4 + rng.bounded(12);
            const Matrix z = random_matrix(rng, n, 3, 1.0 + 3 * rng.uniform());
            check_rows(learned_distribution(z, KernelSpec(KernelFamily::Distance, 0.5 + rng.uniform())));
            check_rows(learned_distribution(z, KernelSpec(KernelFamily::Angular, 10.0)));
            check_rows(supervisory_sne(z, 2.0 + (static_cast<double>(n) - 3.0) * rng.uniform()));
            check_rows(supervisory_knn(z, 1 + rng.bounded(static_cast<std::uint32_t>(n - 1))));
            std::vector<int> labels(n);
            for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i % 2);
            check_rows(supervisory_labels(labels));
            check_rows(cluster_transition(simplex_rows(rng, n, 3)));
        }
    }

    TEST_CASE("a matrix violating the invariants is rejected") {
        CHECK_THROWS_AS(NeighborhoodDistribution(Matrix{{0.5, 0.5}, {1, 0}}, DistributionRole::Learned),
                        DomainError);
        CHECK_THROWS_AS(NeighborhoodDistribution(Matrix{{0, 0.9}, {1, 0}}, DistributionRole::Learned),
                        DomainError);
        CHECK_THROWS_AS(NeighborhoodDistribution(Matrix(2, 3), DistributionRole::Learned), DimensionError);
    }
}
