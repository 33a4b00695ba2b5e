#include <doctest.h>

#include "bicon/gradcheck.hpp"

using namespace bicon;

TEST_SUITE("gradcheck") {
    TEST_CASE("every scope passes") {
        for (auto scope : {GradcheckScope::Divergences, GradcheckScope::Kernels, GradcheckScope::Model,
                           GradcheckScope::End2End}) {
            CAPTURE(to_string(scope));
            const auto r = run_gradcheck(scope, 0);
            CHECK(r.passed());
            CHECK_FALSE(r.entries.empty());
            REQUIRE(r.worst() != nullptr);
            CHECK(r.worst()->worst_error <= 1e-5);
        }
    }

    TEST_CASE("end2end covers divergences, kernels and assemblies") {
        // 3 kernel-based assemblies x 4 divergences x 2 kernels plus 4 cluster cases.
        const auto r = run_gradcheck(GradcheckScope::End2End, 1);
        CHECK(r.passed());
        CHECK(r.entries.size() == 80);
    }

    TEST_CASE("a corrupted gradient is caught") {
        GradcheckOptions opt;
        opt.corrupt = "JSD";
        const auto r = run_gradcheck(GradcheckScope::Divergences, 0, opt);
        CHECK_FALSE(r.passed());
        CHECK(r.worst()->component.find("JSD") != std::string::npos);
    }

    TEST_CASE("scope names") {
        CHECK(parse_gradcheck_scope("end2end") == GradcheckScope::End2End);
        CHECK_THROWS(parse_gradcheck_scope("everything"));
    }
}
