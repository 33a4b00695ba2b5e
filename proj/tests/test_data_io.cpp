#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "bicon/errors.hpp"
#include "bicon/evaluation.hpp"
#include "bicon/data_io.hpp"
#include "support.hpp"

using namespace bicon;
namespace fs = std::filesystem;

namespace {

const fs::path kFixtures = BICON_FIXTURE_DIR;

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

std::size_t count_of(const std::string& s, const std::string& needle) {
    std::size_t n = 0;
    for (auto pos = s.find(needle); pos != std::string::npos; pos = s.find(needle, pos + 1)) ++n;
    return n;
}

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "bicon_test_data_io";
    fs::create_directories(dir);
    return dir / name;
}

double holdout_knn(const LabeledMatrix& m) {
    std::vector<std::size_t> tr, te;
    for (std::size_t i = 0; i < m.features.rows(); ++i) (i % 5 == 4 ? te : tr).push_back(i);
    std::vector<int> ty, ey;
    for (auto i : tr) ty.push_back(m.labels[i]);
    for (auto i : te) ey.push_back(m.labels[i]);
    return knn_accuracy(gather_rows(m.features, tr), ty, gather_rows(m.features, te), ey, 7);
}

}  // namespace

TEST_SUITE("data_io") {
    TEST_CASE("generators are deterministic and seed dependent") {
        DatasetSpec spec;
        spec.n = 60;
        spec.d = 4;
        const auto a = generate(spec);
        const auto b = generate(spec);
        CHECK(a.features == b.features);
        CHECK(a.labels == b.labels);
        spec.seed = 1;
        CHECK_FALSE(generate(spec).features == a.features);
        CHECK(a.labels[0] == 0);
        CHECK(a.labels[4] == 1);

        spec.generator = Generator::ConcentricRings;
        CHECK(generate(spec).features == generate(spec).features);
    }

    TEST_CASE("blob separation controls kNN accuracy") {
        DatasetSpec spec;
        spec.n = 1000;
        spec.d = 10;
        spec.classes = 4;
        spec.separation = 1e-4;
        // Chance is 1/4 over 200 holdout points; allow three binomial sigmas.
        const double chance = holdout_knn(generate(spec));
        CHECK(std::abs(chance - 0.25) <= 3.0 * std::sqrt(0.25 * 0.75 / 200.0));
        spec.separation = 8.0;
        CHECK(holdout_knn(generate(spec)) >= 0.99);
    }

    TEST_CASE("adjacent blob means sit at the requested separation") {
        DatasetSpec spec;
        spec.n = 4000;
        spec.d = 3;
        spec.classes = 3;
        spec.separation = 8.0;
        const auto m = generate(spec);
        Matrix mean(3, 3);
        for (std::size_t i = 0; i < m.features.rows(); ++i)
            for (std::size_t j = 0; j < 3; ++j) mean(static_cast<std::size_t>(m.labels[i]), j) += m.features(i, j) / (4000.0 / 3.0);
        // Sample means carry about 0.03 of noise per coordinate.
        CHECK(std::sqrt(squared_distance(mean.row(0), mean.row(1))) == doctest::Approx(8.0).epsilon(0.03));
    }

    TEST_CASE("invalid dataset specs are rejected") {
        DatasetSpec spec;
        spec.classes = 0;
        CHECK_THROWS_AS(spec.validate(), ConfigError);
        CHECK_THROWS_AS(parse_generator("spirals"), ConfigError);
    }

    TEST_CASE("csv fixture loads exactly") {
        const auto m = load_matrix(kFixtures / "three_rows.csv");
        REQUIRE(m.features.rows() == 3);
        REQUIRE(m.features.cols() == 2);
        CHECK(m.features(0, 0) == 0.5);
        CHECK(m.features(0, 1) == -1.25);
        CHECK(m.features(1, 1) == 4e-3);
        CHECK(m.features(2, 0) == -7.125);
        CHECK(m.labels == std::vector<int>{0, 2, 1});
    }

    TEST_CASE("csv without a label column names the header") {
        try {
            load_matrix_csv(kFixtures / "no_label.csv");
            FAIL("expected ParseError");
        } catch (const ParseError& e) {
            CHECK(std::string(e.what()).find("f0,f1,class") != std::string::npos);
        }
        CHECK_THROWS_AS(load_matrix(kFixtures / "does_not_exist.csv"), IoError);
    }

    TEST_CASE("binary round trip is exact, csv round trip within 1e-12") {
        Pcg32 rng(7);
        LabeledMatrix m{bicon::testing::random_matrix(rng, 25, 3, 1e3), {}};
        for (std::size_t i = 0; i < 25; ++i) m.labels.push_back(static_cast<int>(i % 4));
        m.features(0, 0) = 1e-300;
        m.features(1, 1) = -0.0;

        const auto bin = scratch("m.bin");
        save_matrix_binary(bin, m);
        const auto b = load_matrix(bin);
        CHECK(b.features == m.features);
        CHECK(b.labels == m.labels);
        CHECK(slurp(bin).substr(0, 5) == "BIMX1");

        const auto csv = scratch("m.csv");
        save_matrix_csv(csv, m);
        const auto c = load_matrix(csv);
        CHECK(c.labels == m.labels);
        for (std::size_t k = 0; k < m.features.size(); ++k) {
            CHECK(bicon::testing::rel_err(c.features.data()[k], m.features.data()[k]) <= 1e-12);
        }

        LabeledMatrix unlabeled{Matrix{{1, 2}}, {}};
        save_matrix_binary(bin, unlabeled);
        CHECK_FALSE(load_matrix(bin).has_labels());
    }

    TEST_CASE("scatter svg structure") {
        const auto one = scatter_svg(Matrix{{1.0, 2.0}}, std::vector<int>{0});
        CHECK(count_of(one, "<circle") == 1);
        CHECK(one.rfind("</svg>\n") == one.size() - 7);

        const auto two = scatter_svg(Matrix{{0, 0}, {1, 1}, {2, 0}}, std::vector<int>{3, 5, 3});
        CHECK(count_of(two, "fill=\"#d62728\"") == 3);  // 2 points + legend
        CHECK(count_of(two, "fill=\"#8c564b\"") == 2);
        // Every element opened is closed.
        CHECK(count_of(two, "<g ") == count_of(two, "</g>"));
        CHECK(count_of(two, "<text") == count_of(two, "</text>"));
        CHECK(count_of(two, "<circle") == count_of(two, "/>") - 2);

        CHECK_THROWS_AS(scatter_svg(Matrix(2, 3), std::vector<int>{0, 1}), DimensionError);
    }

    TEST_CASE("scatter svg golden") {
        const Matrix p{{0, 0}, {2, 0}, {0, 2}};
        CHECK(scatter_svg(p, std::vector<int>{0, 1, 0}) == slurp(kFixtures / "scatter_golden.svg"));
    }

    TEST_CASE("report csv golden and round trip") {
        TrainReport r;
        r.tensor_names = {"W", "b"};
        r.losses = {1.5, 0.75, 0.1};
        r.grad_norms = {{0.25, 0.125}, {0.5, 0.0}, {2.0, 1.0}};
        r.metric_names = {"knn"};
        r.snapshots = {{2, {0.875}}};
        const auto text = report_csv(r);
        CHECK(text == slurp(kFixtures / "report_golden.csv"));
        CHECK(count_of(text, "\n") == 4);

        const auto path = scratch("report.csv");
        emit_report_csv(r, path);
        const auto back = read_report_csv(path);
        CHECK(back.losses == r.losses);
        CHECK(back.grad_norms == r.grad_norms);
        CHECK(back.tensor_names == r.tensor_names);
        CHECK(back.metric_names == r.metric_names);
        REQUIRE(back.snapshots.size() == 1);
        CHECK(back.snapshots[0].step == 2);
        CHECK(back.final_metric("knn") == 0.875);

        r.grad_norms.pop_back();
        CHECK_THROWS_AS(report_csv(r), DimensionError);
    }

    TEST_CASE("metrics csv appends with one header") {
        const auto path = scratch("metrics.csv");
        fs::remove(path);
        const std::vector<MetricRow> rows{{"knn", 0.5}, {"silhouette", 0.25}};
        append_metrics_csv(path, rows, 0xabcULL, 3);
        append_metrics_csv(path, rows, 0xabcULL, 4);
        const auto text = slurp(path);
        CHECK(count_of(text, "metric,value,config_hash,seed") == 1);
        CHECK(count_of(text, "\n") == 5);
    }

    TEST_CASE("format_real round trips") {
        for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23}) CHECK(std::stod(format_real(v)) == v);
        CHECK(format_real(2.0) == "2");
    }
}
