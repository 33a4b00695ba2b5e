#include "bicon/cli.hpp"

#include <algorithm>
#include <atomic>
#include <cinttypes>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include "bicon/evaluation.hpp"
#include "bicon/gradcheck.hpp"
#include "bicon/model.hpp"

namespace bicon {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

std::shared_ptr<spdlog::logger> logger() {
    static std::once_flag once;
    static std::shared_ptr<spdlog::logger> log;
    std::call_once(once, [] {
        log = std::make_shared<spdlog::logger>("bicon",
                                               std::make_shared<spdlog::sinks::stderr_sink_mt>());
        log->set_pattern("[%l] %v");
        auto level = spdlog::level::info;
        if (const char* env = std::getenv("BICON_LOG")) {
            const std::string v = env;
            if (v == "error") {
                level = spdlog::level::err;
            } else if (v == "debug") {
                level = spdlog::level::debug;
            } else if (v != "info") {
                log->warn("BICON_LOG={} not understood; using info", v);
            }
        }
        log->set_level(level);
    });
    return log;
}

// --- config -----------------------------------------------------------------

const std::vector<std::string>& config_keys() {
    // Sorted for binary_search.
    static const std::vector<std::string> keys = {
        "batch_size", "classes", "clip_norm", "clusters", "collapse_high",
        "collapse_low", "collapse_window", "d", "data_seed", "divergence",
        "encoder", "epochs", "eval_every", "eval_k", "generator",
        "hidden", "init_gain", "init_stddev", "kernel", "kernel_scale",
        "knn_k", "lr", "mode", "n", "out_dim",
        "path", "perplexity", "restarts", "seed", "separation",
        "stream", "task",
    };
    return keys;
}

std::string get_string(const json& j, const std::string& key) {
    if (!j.is_string()) throw ConfigError("config key '" + key + "' must be a string");
    return j.get<std::string>();
}

double get_real(const json& j, const std::string& key) {
    if (!j.is_number()) throw ConfigError("config key '" + key + "' must be a number");
    return j.get<double>();
}

std::uint64_t get_count(const json& j, const std::string& key) {
    if (j.is_number_unsigned()) return j.get<std::uint64_t>();
    if (j.is_number_integer() && j.get<std::int64_t>() >= 0) return j.get<std::uint64_t>();
    throw ConfigError("config key '" + key + "' must be a non-negative integer");
}

json to_json(const RunConfig& c) {
    const LossConfig& l = c.loss;
    const DatasetSpec& d = c.data;
    json j = json::object();
    j["task"] = std::string(to_string(l.task));
    j["divergence"] = std::string(to_string(l.divergence));
    j["kernel"] = std::string(to_string(l.kernel.family()));
    j["kernel_scale"] = l.kernel.scale();
    j["batch_size"] = l.batch_size;
    j["epochs"] = l.epochs;
    j["lr"] = l.lr;
    j["seed"] = l.seed;
    j["stream"] = l.stream;
    j["perplexity"] = l.perplexity;
    j["mode"] = std::string(to_string(l.mode));
    j["init_stddev"] = l.init_stddev;
    j["encoder"] = std::string(to_string(l.encoder));
    j["hidden"] = l.hidden;
    j["out_dim"] = l.out_dim;
    j["init_gain"] = l.init_gain;
    j["knn_k"] = l.knn_k;
    j["clusters"] = l.clusters;
    j["restarts"] = l.restarts;
    j["eval_every"] = l.eval_every;
    j["eval_k"] = l.eval_k;
    j["collapse_low"] = l.collapse_low;
    j["collapse_high"] = l.collapse_high;
    j["collapse_window"] = l.collapse_window;
    j["clip_norm"] = l.clip_norm ? json(*l.clip_norm) : json(nullptr);
    j["generator"] = std::string(to_string(d.generator));
    j["n"] = d.n;
    j["d"] = d.d;
    j["classes"] = d.classes;
    j["separation"] = d.separation;
    j["data_seed"] = d.seed;
    j["path"] = d.path;
    return j;
}

RunConfig from_json(const json& j) {
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    const auto& keys = config_keys();
    for (const auto& [key, value] : j.items()) {
        if (!std::binary_search(keys.begin(), keys.end(), key)) {
            throw ConfigError("unknown config key '" + key + "'");
        }
    }
    RunConfig c;
    LossConfig& l = c.loss;
    DatasetSpec& d = c.data;
    auto has = [&](const char* k) { return j.contains(k); };
    if (has("task")) l.task = parse_task(get_string(j["task"], "task"));
    if (has("divergence")) l.divergence = parse_divergence(get_string(j["divergence"], "divergence"));
    KernelFamily family = KernelFamily::Distance;
    if (has("kernel")) family = parse_kernel_family(get_string(j["kernel"], "kernel"));
    double scale = default_kernel_scale(l.task, family);
    if (has("kernel_scale")) scale = get_real(j["kernel_scale"], "kernel_scale");
    if (!(scale > 0.0)) throw ConfigError("kernel_scale must be > 0");
    l.kernel = KernelSpec(family, scale);
    if (has("batch_size")) l.batch_size = get_count(j["batch_size"], "batch_size");
    if (has("epochs")) l.epochs = get_count(j["epochs"], "epochs");
    if (has("lr")) l.lr = get_real(j["lr"], "lr");
    if (has("seed")) l.seed = get_count(j["seed"], "seed");
    if (has("stream")) l.stream = get_count(j["stream"], "stream");
    if (has("perplexity")) l.perplexity = get_real(j["perplexity"], "perplexity");
    if (has("mode")) l.mode = parse_sne_mode(get_string(j["mode"], "mode"));
    if (has("init_stddev")) l.init_stddev = get_real(j["init_stddev"], "init_stddev");
    if (has("encoder")) l.encoder = parse_encoder_kind(get_string(j["encoder"], "encoder"));
    if (has("hidden")) l.hidden = get_count(j["hidden"], "hidden");
    if (has("out_dim")) l.out_dim = get_count(j["out_dim"], "out_dim");
    if (has("init_gain")) l.init_gain = get_real(j["init_gain"], "init_gain");
    if (has("knn_k")) l.knn_k = get_count(j["knn_k"], "knn_k");
    if (has("clusters")) l.clusters = get_count(j["clusters"], "clusters");
    if (has("restarts")) l.restarts = get_count(j["restarts"], "restarts");
    if (has("eval_every")) l.eval_every = get_count(j["eval_every"], "eval_every");
    if (has("eval_k")) l.eval_k = get_count(j["eval_k"], "eval_k");
    if (has("collapse_low")) l.collapse_low = get_real(j["collapse_low"], "collapse_low");
    if (has("collapse_high")) l.collapse_high = get_real(j["collapse_high"], "collapse_high");
    if (has("collapse_window")) {
        l.collapse_window = get_count(j["collapse_window"], "collapse_window");
    }
    if (has("clip_norm") && !j["clip_norm"].is_null()) {
        l.clip_norm = get_real(j["clip_norm"], "clip_norm");
    }
    if (has("generator")) d.generator = parse_generator(get_string(j["generator"], "generator"));
    if (has("n")) d.n = get_count(j["n"], "n");
    if (has("d")) d.d = get_count(j["d"], "d");
    if (has("classes")) d.classes = get_count(j["classes"], "classes");
    if (has("separation")) d.separation = get_real(j["separation"], "separation");
    if (has("data_seed")) d.seed = get_count(j["data_seed"], "data_seed");
    if (has("path")) d.path = get_string(j["path"], "path");
    l.validate();
    d.validate();
    return c;
}

json parse_json_text(std::string_view text) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    if (!out) throw IoError("write failed for " + path.string());
}

// Sweep values are JSON scalars when they parse as such, otherwise strings.
json sweep_value(const std::string& raw) {
    json v = json::parse(raw, nullptr, false);
    if (v.is_discarded() || v.is_structured()) return json(raw);
    return v;
}

LabeledMatrix load_dataset(const DatasetSpec& spec, const fs::path& config_dir) {
    DatasetSpec resolved = spec;
    if (resolved.generator == Generator::File && fs::path(resolved.path).is_relative()) {
        resolved.path = (config_dir / resolved.path).string();
    }
    return generate(resolved);
}

// --- run --------------------------------------------------------------------

struct RunOutcome {
    int code = kExitOk;
    std::string stdout_text;
    std::vector<MetricRow> metrics;
    std::uint64_t hash = 0;
    std::uint64_t seed = 0;
};

void add_metric(std::vector<MetricRow>& rows, std::string name, double value) {
    rows.push_back({std::move(name), value});
}

void add_spike_metrics(std::vector<MetricRow>& rows, const TrainReport& report) {
    const SpikeSummary s = grad_norm_series(report);
    add_metric(rows, "final_loss", report.losses.back());
    add_metric(rows, "spike_max", s.total.max);
    add_metric(rows, "spike_median", s.total.median);
    add_metric(rows, "spike_ratio", s.total.ratio);
}

RunOutcome execute_run(const RunConfig& config, const fs::path& config_path, const fs::path& out_dir) {
    RunOutcome outcome;
    outcome.hash = config_hash(config);
    outcome.seed = config.loss.seed;
    const LossConfig& l = config.loss;
    auto log = logger();
    log->info("run {} divergence={} kernel={} -> {}", to_string(l.task), to_string(l.divergence),
              to_string(l.kernel.family()), out_dir.string());
    log->debug("config {}", canonical_config(config));

    const LabeledMatrix data = load_dataset(config.data, config_path.parent_path());
    fs::create_directories(out_dir);

    TrainReport report;
    Checkpoint checkpoint;
    std::optional<Matrix> scatter;
    std::vector<MetricRow>& rows = outcome.metrics;

    switch (l.task) {
        case Task::Sne: {
            auto r = run_sne(l, data.features, l.mode, data.labels);
            report = std::move(r.report);
            checkpoint = std::move(r.checkpoint);
            if (r.embedding.cols() == 2) scatter = std::move(r.embedding);
            for (const auto& name : report.metric_names) {
                if (auto v = report.final_metric(name)) add_metric(rows, name, *v);
            }
            break;
        }
        case Task::Cluster: {
            auto r = run_cluster(l, data.features, data.labels);
            report = std::move(r.report);
            checkpoint = r.head.to_checkpoint();
            if (data.has_labels()) {
                add_metric(rows, "hungarian", hungarian_accuracy(r.head.predict(data.features), data.labels));
                const auto km = kmeans(data.features, l.clusters, l.seed);
                add_metric(rows, "kmeans_hungarian", hungarian_accuracy(km.labels, data.labels));
            }
            add_metric(rows, "objective", r.objective);
            add_metric(rows, "restart", static_cast<double>(r.restart));
            break;
        }
        case Task::Supcon: {
            if (!data.has_labels()) throw ConfigError("supcon needs a labeled dataset");
            auto r = run_supcon(l, data.features, data.labels);
            report = std::move(r.report);
            checkpoint = r.encoder.to_checkpoint();
            const Matrix z = r.encoder.forward(data.features);
            if (z.cols() == 2) scatter = metric_features(z, l.kernel.family());
            if (auto v = report.final_metric("knn")) add_metric(rows, "knn", *v);
            add_metric(rows, "collapsed", report.collapsed ? 1.0 : 0.0);
            break;
        }
    }
    add_spike_metrics(rows, report);

    emit_report_csv(report, out_dir / "report.csv");
    const fs::path metrics_path = out_dir / "metrics.csv";
    fs::remove(metrics_path);
    append_metrics_csv(metrics_path, rows, outcome.hash, l.seed);
    save_checkpoint(out_dir / "checkpoint.bin", checkpoint);
    if (scatter) emit_scatter_svg(*scatter, data.labels, out_dir / "scatter.svg");
    write_text(out_dir / "config.json", canonical_config(config, 2) + "\n");
    json manifest = {
        {"config_path", config_path.string()},
        {"config", to_json(config)},
        {"output_dir", out_dir.string()},
        {"config_hash", hash_hex(outcome.hash)},
    };
    write_text(out_dir / "manifest.json", manifest.dump(2) + "\n");

    std::ostringstream text;
    for (const auto& row : rows) text << row.metric << ' ' << format_real(row.value) << '\n';
    outcome.stdout_text = text.str();
    log->info("finished {} steps, final loss {}", report.steps(), format_real(report.losses.back()));
    return outcome;
}

// Wraps execute_run, mapping failures onto exit codes and messages.
RunOutcome guarded_run(const RunConfig& config, const fs::path& config_path, const fs::path& out_dir,
                       std::string& error) {
    try {
        return execute_run(config, config_path, out_dir);
    } catch (const TrainingAborted& e) {
        error = "numerical abort: divergence " + std::string(to_string(e.divergence())) +
                " at step " + std::to_string(e.step()) + ": " + e.what();
        return {kExitNumerical, {}, {}, 0, 0};
    } catch (const NumericalError& e) {
        error = std::string("numerical abort: ") + e.what();
        return {kExitNumerical, {}, {}, 0, 0};
    } catch (const std::exception& e) {
        error = e.what();
        return {kExitUsage, {}, {}, 0, 0};
    }
}

struct RunArgs {
    std::string task;
    std::string config;
    std::string out = ".";
    std::vector<std::string> sweeps;
    std::size_t jobs = 1;
    std::optional<std::uint64_t> seed;
};

int cmd_run(const RunArgs& args, std::ostream& out, std::ostream& err) {
    json base = parse_json_text(read_text(args.config));
    if (!base.is_object()) throw ConfigError("config must be a JSON object");
    const Task task = parse_task(args.task);
    if (base.contains("task") && parse_task(get_string(base["task"], "task")) != task) {
        throw ConfigError("config task '" + base["task"].get<std::string>() +
                          "' does not match the requested task '" + args.task + "'");
    }
    base["task"] = std::string(to_string(task));
    if (args.seed) base["seed"] = *args.seed;

    if (args.sweeps.empty()) {
        const RunConfig config = from_json(base);
        std::string error;
        RunOutcome o = guarded_run(config, args.config, args.out, error);
        if (o.code != kExitOk) {
            err << error << '\n';
            return o.code;
        }
        out << o.stdout_text;
        return kExitOk;
    }

    const auto points = expand_sweep(args.sweeps);
    // Validate every grid point before running anything.
    std::vector<RunConfig> configs;
    for (std::size_t g = 0; g < points.size(); ++g) {
        json j = base;
        for (const auto& [key, value] : points[g].overrides) j[key] = sweep_value(value);
        j["stream"] = g;
        configs.push_back(from_json(j));
    }

    std::vector<RunOutcome> outcomes(points.size());
    std::vector<std::string> errors(points.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t g = next++; g < points.size(); g = next++) {
            outcomes[g] = guarded_run(configs[g], args.config,
                                      fs::path(args.out) / points[g].directory, errors[g]);
        }
    };
    const std::size_t jobs = std::clamp<std::size_t>(args.jobs, 1, points.size());
    std::vector<std::thread> pool;
    for (std::size_t t = 1; t < jobs; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();

    int code = kExitOk;
    std::ostringstream summary;
    summary << "run,metric,value,config_hash,seed\n";
    for (std::size_t g = 0; g < points.size(); ++g) {
        const RunOutcome& o = outcomes[g];
        out << "[" << points[g].directory << "]\n";
        if (o.code != kExitOk) {
            err << points[g].directory << ": " << errors[g] << '\n';
            code = std::max(code, o.code);
            continue;
        }
        out << o.stdout_text;
        for (const auto& row : o.metrics) {
            summary << points[g].directory << ',' << row.metric << ',' << format_real(row.value)
                    << ',' << hash_hex(o.hash) << ',' << o.seed << '\n';
        }
    }
    fs::create_directories(args.out);
    write_text(fs::path(args.out) / "sweep.csv", summary.str());
    return code;
}

// --- eval -------------------------------------------------------------------

const std::vector<std::string> kEvalMetrics = {"hungarian", "knn", "probe", "silhouette"};

struct EvalArgs {
    std::string checkpoint;
    std::string config;
    std::string dataset;
    std::vector<std::string> metrics;
    std::string csv;
    std::optional<std::uint64_t> seed;
};

int cmd_eval(const EvalArgs& args, std::ostream& out) {
    std::vector<std::string> metrics;
    for (const auto& item : args.metrics) {
        std::stringstream ss(item);
        for (std::string m; std::getline(ss, m, ',');) {
            if (m.empty()) continue;
            if (std::find(kEvalMetrics.begin(), kEvalMetrics.end(), m) == kEvalMetrics.end()) {
                throw ConfigError("unknown metric '" + m +
                                  "'; valid metrics: hungarian, knn, probe, silhouette");
            }
            metrics.push_back(m);
        }
    }
    if (metrics.empty()) throw ConfigError("no metrics requested");
    if (args.config.empty() == args.dataset.empty()) {
        throw ConfigError("eval needs exactly one of --config or --dataset");
    }

    RunConfig config;
    LabeledMatrix data;
    std::uint64_t hash = 0;
    if (!args.config.empty()) {
        config = from_json(parse_json_text(read_text(args.config)));
        data = load_dataset(config.data, fs::path(args.config).parent_path());
        hash = config_hash(config);
    } else {
        data = load_matrix(args.dataset);
        hash = fnv1a64(args.dataset);
    }
    if (args.seed) config.loss.seed = *args.seed;
    if (!data.has_labels()) throw ConfigError("eval needs a labeled dataset");

    const Checkpoint ckpt = load_checkpoint(args.checkpoint);
    Matrix z;
    std::optional<std::vector<int>> predicted;
    switch (ckpt.kind) {
        case ModelKind::FreeEmbedding: {
            z = FreeEmbedding::from_checkpoint(ckpt).table();
            if (z.rows() != data.features.rows()) {
                throw DimensionError("embedding table has " + std::to_string(z.rows()) +
                                     " rows but the dataset has " +
                                     std::to_string(data.features.rows()));
            }
            break;
        }
        case ModelKind::LinearEncoder:
        case ModelKind::Mlp1Encoder:
            z = Encoder::from_checkpoint(ckpt).forward(data.features);
            break;
        case ModelKind::ClusterHead: {
            const ClusterHead head = ClusterHead::from_checkpoint(ckpt);
            z = head.forward(data.features);
            predicted = head.predict(data.features);
            break;
        }
    }
    const Matrix f = metric_features(z, config.loss.kernel.family());
    const Split split = holdout_split(f.rows());
    std::vector<int> train_y, test_y;
    for (auto i : split.train) train_y.push_back(data.labels[i]);
    for (auto i : split.test) test_y.push_back(data.labels[i]);

    std::vector<MetricRow> rows;
    for (const auto& m : metrics) {
        double v = 0.0;
        if (m == "knn") {
            v = holdout_knn(f, data.labels, config.loss.eval_k);
        } else if (m == "silhouette") {
            v = silhouette(f, data.labels);
        } else if (m == "probe") {
            v = linear_probe(gather_rows(f, split.train), train_y, gather_rows(f, split.test), test_y,
                             LinearProbeOptions{.seed = config.loss.seed});
        } else {
            if (!predicted) {
                std::vector<int> classes = data.labels;
                std::sort(classes.begin(), classes.end());
                classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
                predicted = kmeans(f, classes.size(), config.loss.seed).labels;
            }
            v = hungarian_accuracy(*predicted, data.labels);
        }
        rows.push_back({m, v});
        out << m << ' ' << format_real(v) << '\n';
    }
    if (!args.csv.empty()) append_metrics_csv(args.csv, rows, hash, config.loss.seed);
    return kExitOk;
}

// --- gradcheck --------------------------------------------------------------

int cmd_gradcheck(const std::string& scope_name, std::uint64_t seed, const std::string& corrupt,
                  std::ostream& out, std::ostream& err) {
    const GradcheckScope scope = parse_gradcheck_scope(scope_name);
    GradcheckOptions options;
    options.corrupt = corrupt;
    const GradcheckReport report = run_gradcheck(scope, seed, options);
    for (const auto& e : report.entries) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.3e", e.worst_error);
        out << (e.passed ? "ok   " : "FAIL ") << e.component << " worst_rel_err=" << buf
            << " index=" << e.worst_index << '\n';
    }
    const GradcheckEntry* worst = report.worst();
    if (worst) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.3e", worst->worst_error);
        out << "worst " << worst->component << ' ' << buf << '\n';
    }
    if (!report.passed()) {
        for (const auto& e : report.entries) {
            if (!e.passed) {
                err << "gradient mismatch in " << e.component << " at index " << e.worst_index << '\n';
            }
        }
        out << "gradcheck " << to_string(scope) << " seed " << seed << ": FAIL\n";
        return kExitGradcheckFailed;
    }
    out << "gradcheck " << to_string(scope) << " seed " << seed << ": PASS\n";
    return kExitOk;
}

}  // namespace

RunConfig parse_run_config(std::string_view json_text) {
    return from_json(parse_json_text(json_text));
}

std::string canonical_config(const RunConfig& config, int indent) {
    return to_json(config).dump(indent);
}

std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t config_hash(const RunConfig& config) { return fnv1a64(canonical_config(config)); }

std::string hash_hex(std::uint64_t hash) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016" PRIx64, hash);
    return buf;
}

std::vector<SweepPoint> expand_sweep(const std::vector<std::string>& specs) {
    std::vector<SweepPoint> points{SweepPoint{}};
    for (const auto& spec : specs) {
        const auto eq = spec.find('=');
        if (eq == std::string::npos || eq == 0 || eq + 1 == spec.size()) {
            throw ConfigError("sweep spec '" + spec + "' must look like key=v1,v2");
        }
        const std::string key = spec.substr(0, eq);
        std::vector<std::string> values;
        std::stringstream ss(spec.substr(eq + 1));
        for (std::string v; std::getline(ss, v, ',');) {
            if (v.empty()) throw ConfigError("sweep spec '" + spec + "' has an empty value");
            values.push_back(v);
        }
        std::vector<SweepPoint> next;
        for (const auto& p : points) {
            for (const auto& v : values) {
                SweepPoint q = p;
                q.overrides.emplace_back(key, v);
                std::string part = key + "-" + v;
                std::replace_if(part.begin(), part.end(),
                                [](char c) { return c == '/' || c == '\\' || c == ' '; }, '_');
                q.directory += (q.directory.empty() ? "" : "_") + part;
                next.push_back(std::move(q));
            }
        }
        points = std::move(next);
    }
    return points;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"f-divergence neighborhood losses: training, gradient checks, evaluation", "bicon"};
    app.require_subcommand(1);

    std::string scope;
    std::uint64_t gc_seed = 0;
    std::string corrupt;
    auto* gc = app.add_subcommand("gradcheck", "finite-difference checks of analytic gradients");
    gc->add_option("scope,--scope", scope, "divergences | kernels | model | end2end")->required();
    gc->add_option("--seed", gc_seed, "instance seed");
    gc->add_option("--corrupt", corrupt)->group("");  // test hook

    RunArgs run;
    std::uint64_t run_seed = 0;
    auto* rc = app.add_subcommand("run", "train one task, or a sweep of them");
    rc->add_option("task", run.task, "sne | cluster | supcon")->required();
    rc->add_option("--config", run.config, "flat JSON config")->required();
    rc->add_option("--out", run.out, "output directory");
    rc->add_option("--sweep", run.sweeps, "key=v1,v2 (repeatable)")
        ->expected(1)
        ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
    rc->add_option("--jobs", run.jobs, "parallel sweep points")->check(CLI::PositiveNumber);
    auto* run_seed_opt = rc->add_option("--seed", run_seed, "override the training seed");

    EvalArgs ev;
    std::uint64_t ev_seed = 0;
    auto* ec = app.add_subcommand("eval", "metrics of a checkpoint on a dataset");
    ec->add_option("--checkpoint", ev.checkpoint)->required();
    ec->add_option("--config", ev.config, "config whose dataset and kernel to use");
    ec->add_option("--dataset", ev.dataset, "CSV or binary matrix file");
    ec->add_option("--metrics", ev.metrics, "hungarian,knn,probe,silhouette")
        ->required()
        ->expected(1)
        ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
    ec->add_option("--csv", ev.csv, "append metric rows here");
    auto* ev_seed_opt = ec->add_option("--seed", ev_seed, "seed for k-means and the probe");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << e.what() << '\n';
        if (!app.get_subcommands().empty()) {
            err << "run 'bicon " << app.get_subcommands().front()->get_name() << " --help' for usage\n";
        }
        return kExitUsage;
    }

    try {
        if (gc->parsed()) return cmd_gradcheck(scope, gc_seed, corrupt, out, err);
        if (rc->parsed()) {
            if (*run_seed_opt) run.seed = run_seed;
            return cmd_run(run, out, err);
        }
        if (*ev_seed_opt) ev.seed = ev_seed;
        return cmd_eval(ev, out);
    } catch (const TrainingAborted& e) {
        err << "numerical abort: divergence " << to_string(e.divergence()) << " at step " << e.step()
            << ": " << e.what() << '\n';
        return kExitNumerical;
    } catch (const NumericalError& e) {
        err << "numerical abort: " << e.what() << '\n';
        return kExitNumerical;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    }
}

}  // namespace bicon
