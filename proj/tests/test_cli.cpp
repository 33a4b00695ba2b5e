#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "bicon/cli.hpp"
#include "bicon/data_io.hpp"
#include "bicon/errors.hpp"

using namespace bicon;
namespace fs = std::filesystem;

namespace {

struct Result {
    int code;
    std::string out;
    std::string err;
};

Result cli(const std::vector<std::string>& args) {
    std::ostringstream out, err;
    const int code = run_cli(args, out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "bicon_test_cli" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

fs::path write_config(const fs::path& dir, const std::string& body) {
    const auto path = dir / "config.in.json";
    std::ofstream(path) << body;
    return path;
}

const char* kSmallSne = R"({"task": "sne", "mode": "free", "divergence": "TV", "perplexity": 10,
  "epochs": 30, "lr": 0.05, "eval_every": 10, "n": 60, "d": 4, "classes": 3})";

// Value printed as "name value" on its own line.
double printed(const std::string& out, const std::string& name) {
    std::istringstream is(out);
    std::string line;
    while (std::getline(is, line)) {
        if (line.rfind(name + " ", 0) == 0) return std::stod(line.substr(name.size() + 1));
    }
    FAIL("metric " << name << " not printed");
    return 0.0;
}

}  // namespace

TEST_SUITE("cli") {
    TEST_CASE("config parsing is strict") {
        CHECK_THROWS_AS(parse_run_config(R"({"task": "sne", "learning_rate": 1})"), ConfigError);
        CHECK_THROWS_AS(parse_run_config(R"({"epochs": "ten"})"), ConfigError);
        CHECK_THROWS_AS(parse_run_config(R"({"batch_size": 2})"), ConfigError);
        CHECK_THROWS_AS(parse_run_config("[1, 2]"), ConfigError);
        try {
            parse_run_config(R"({"learning_rate": 1})");
        } catch (const ConfigError& e) {
            CHECK(std::string(e.what()).find("learning_rate") != std::string::npos);
        }
    }

    TEST_CASE("config hash ignores key order and spelling of defaults") {
        const auto a = parse_run_config(R"({"task": "sne", "lr": 0.5, "n": 90})");
        const auto b = parse_run_config(R"({"n": 90, "lr": 0.5, "task": "sne", "epochs": 100})");
        CHECK(canonical_config(a) == canonical_config(b));
        CHECK(config_hash(a) == config_hash(b));
        CHECK(config_hash(a) != config_hash(parse_run_config(R"({"task": "sne", "lr": 0.25, "n": 90})")));
        CHECK(hash_hex(config_hash(a)).size() == 16);
        // FNV-1a 64 reference values.
        CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
        CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
        CHECK(fnv1a64("foobar") == 0x85944171f73967e8ULL);
    }

    TEST_CASE("sweep expansion is a cartesian product in declaration order") {
        const auto pts = expand_sweep({"divergence=KL,TV", "lr=0.1,0.01"});
        REQUIRE(pts.size() == 4);
        CHECK(pts[0].directory == "divergence-KL_lr-0.1");
        CHECK(pts[1].directory == "divergence-KL_lr-0.01");
        CHECK(pts[3].directory == "divergence-TV_lr-0.01");
        CHECK(pts[2].overrides[0] == std::pair<std::string, std::string>{"divergence", "TV"});
        CHECK_THROWS_AS(expand_sweep({"divergence"}), ConfigError);
    }

    TEST_CASE("run sne writes its outputs and eval agrees with the report") {
        const auto dir = fresh_dir("sne");
        const auto cfg = write_config(dir, kSmallSne);
        const auto out = dir / "out";
        const auto r = cli({"run", "sne", "--config", cfg.string(), "--out", out.string()});
        REQUIRE_MESSAGE(r.code == 0, r.err);
        for (const char* f : {"report.csv", "metrics.csv", "checkpoint.bin", "scatter.svg", "config.json",
                              "manifest.json"})
            CHECK_MESSAGE(fs::exists(out / f), f);

        const auto report = read_report_csv(out / "report.csv");
        CHECK(report.steps() == 30);
        const double knn = *report.final_metric("knn");

        const auto e = cli({"eval", "--checkpoint", (out / "checkpoint.bin").string(), "--config",
                            (out / "config.json").string(), "--metrics", "knn,silhouette"});
        REQUIRE_MESSAGE(e.code == 0, e.err);
        CHECK(std::abs(printed(e.out, "knn") - knn) <= 1e-12);
        CHECK(std::abs(printed(e.out, "silhouette") - *report.final_metric("silhouette")) <= 1e-12);

        const auto bad = cli({"eval", "--checkpoint", (out / "checkpoint.bin").string(), "--config",
                              (out / "config.json").string(), "--metrics", "accuracy"});
        CHECK(bad.code == kExitUsage);
        CHECK(bad.err.find("accuracy") != std::string::npos);
    }

    TEST_CASE("invalid configs exit with a usage error") {
        const auto dir = fresh_dir("bad");
        const auto cfg = write_config(dir, R"({"task": "supcon", "batch_size": 2})");
        const auto r = cli({"run", "supcon", "--config", cfg.string(), "--out", (dir / "o").string()});
        CHECK(r.code == kExitUsage);
        CHECK(r.err.find("batch_size") != std::string::npos);
        CHECK(cli({"run", "sne", "--config", (dir / "missing.json").string()}).code == kExitUsage);
        CHECK(cli({"frobnicate"}).code == kExitUsage);
        CHECK(cli({"run", "cluster", "--config", cfg.string()}).code == kExitUsage);  // task mismatch
    }

    TEST_CASE("sweeps create one directory per grid point") {
        const auto dir = fresh_dir("sweep");
        const auto cfg = write_config(dir, kSmallSne);
        const auto out = dir / "out";
        const auto r = cli({"run", "sne", "--config", cfg.string(), "--out", out.string(), "--sweep",
                            "divergence=KL,TV,JSD,Hellinger", "--jobs", "2"});
        REQUIRE_MESSAGE(r.code == 0, r.err);
        for (const char* d : {"divergence-KL", "divergence-TV", "divergence-JSD", "divergence-Hellinger"})
            CHECK_MESSAGE(fs::exists(out / d / "report.csv"), d);
        CHECK(fs::exists(out / "sweep.csv"));
        CHECK(r.out.find("[divergence-KL]") < r.out.find("[divergence-Hellinger]"));
    }

    TEST_CASE("eval hungarian is 1 when the predictions are the truth") {
        const auto dir = fresh_dir("hung");
        const auto cfg = write_config(dir, R"({"task": "cluster", "clusters": 3, "knn_k": 10, "batch_size": 60,
          "epochs": 60, "lr": 0.05, "n": 90, "d": 4, "classes": 3, "separation": 12, "restarts": 3})");
        const auto out = dir / "out";
        REQUIRE(cli({"run", "cluster", "--config", cfg.string(), "--out", out.string()}).code == 0);
        const auto e = cli({"eval", "--checkpoint", (out / "checkpoint.bin").string(), "--config",
                            (out / "config.json").string(), "--metrics", "hungarian"});
        REQUIRE_MESSAGE(e.code == 0, e.err);
        CHECK(printed(e.out, "hungarian") == 1.0);
    }

    TEST_CASE("gradcheck exit codes") {
        const auto ok = cli({"gradcheck", "divergences"});
        CHECK(ok.code == kExitOk);
        CHECK(ok.out.find("PASS") != std::string::npos);
        const auto bad = cli({"gradcheck", "--scope", "divergences", "--corrupt", "KL"});
        CHECK(bad.code == kExitGradcheckFailed);
        CHECK(bad.out.find("FAIL") != std::string::npos);
        CHECK(cli({"gradcheck", "everything"}).code == kExitUsage);
    }

    TEST_CASE("re-running produces byte-identical files") {
        const auto dir = fresh_dir("det");
        const auto cfg = write_config(dir, kSmallSne);
        REQUIRE(cli({"run", "sne", "--config", cfg.string(), "--out", (dir / "a").string()}).code == 0);
        REQUIRE(cli({"run", "sne", "--config", cfg.string(), "--out", (dir / "b").string()}).code == 0);
        for (const char* f : {"report.csv", "metrics.csv", "scatter.svg", "checkpoint.bin", "config.json"})
            CHECK_MESSAGE(slurp(dir / "a" / f) == slurp(dir / "b" / f), f);
    }
}
