#include "bicon/trainers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "bicon/evaluation.hpp"
#include "bicon/rng.hpp"

namespace bicon {

std::string_view to_string(Task task) {
    switch (task) {
        case Task::Sne: return "sne";
        case Task::Cluster: return "cluster";
        case Task::Supcon: return "supcon";
    }
    return "?";
}

Task parse_task(std::string_view name) {
    if (name == "sne") return Task::Sne;
    if (name == "cluster") return Task::Cluster;
    if (name == "supcon") return Task::Supcon;
    throw ConfigError("unknown task '" + std::string(name) + "' (expected sne, cluster or supcon)");
}

std::string_view to_string(SneMode mode) { return mode == SneMode::Free ? "free" : "parametric"; }

SneMode parse_sne_mode(std::string_view name) {
    if (name == "free") return SneMode::Free;
    if (name == "parametric") return SneMode::Parametric;
    throw ConfigError("unknown sne mode '" + std::string(name) + "' (expected free or parametric)");
}

double default_kernel_scale(Task task, KernelFamily family) {
    if (task == Task::Supcon && family == KernelFamily::Angular) return 10.0;
    return 1.0;
}

void LossConfig::validate() const {
    if (batch_size < 4) {
        throw ConfigError("batch_size must be >= 4, got " + std::to_string(batch_size));
    }
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("lr must be finite and >= 0");
    if (!(perplexity > 0.0)) throw ConfigError("perplexity must be > 0");
    if (!(init_stddev > 0.0)) throw ConfigError("init_stddev must be > 0");
    if (!(init_gain > 0.0)) throw ConfigError("init_gain must be > 0");
    if (hidden < 1 || out_dim < 1) throw ConfigError("hidden and out_dim must be >= 1");
    if (knn_k < 1) throw ConfigError("knn_k must be >= 1");
    if (clusters < 2) throw ConfigError("clusters must be >= 2");
    if (eval_every < 1 || eval_k < 1) throw ConfigError("eval_every and eval_k must be >= 1");
    if (!(collapse_low > 0.0 && collapse_low < collapse_high)) {
        throw ConfigError("collapse thresholds need 0 < collapse_low < collapse_high");
    }
    if (collapse_window < 1) throw ConfigError("collapse_window must be >= 1");
    if (clip_norm && !(*clip_norm > 0.0)) throw ConfigError("clip_norm must be > 0");
    if (restarts < 1) throw ConfigError("restarts must be >= 1");
}

LossAndGrad loss_and_grad(Divergence kind, const NeighborhoodDistribution& p,
                          const NeighborhoodDistribution& q) {
    std::vector<std::size_t> rows(p.size());
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    return loss_and_grad(kind, p, q, rows);
}

LossAndGrad loss_and_grad(Divergence kind, const NeighborhoodDistribution& p,
                          const NeighborhoodDistribution& q, std::span<const std::size_t> rows) {
    const std::size_t n = p.size();
    if (q.size() != n) {
        throw DimensionError("loss_and_grad: p is " + std::to_string(n) + "x" + std::to_string(n) +
                             " but q is " + std::to_string(q.size()) + "x" +
                             std::to_string(q.size()));
    }
    LossAndGrad out{0.0, Matrix(n, n)};
    if (rows.empty()) return out;
    const double w = 1.0 / static_cast<double>(rows.size());
    for (std::size_t i : rows) {
        if (i >= n) throw DimensionError("loss_and_grad: row index out of range");
        // Diagonal entries are 0 in both p and q and contribute nothing.
        out.loss += rowwise::divergence(kind, p.row(i), q.row(i));
        auto g = out.dL_dq.row(i);
        rowwise::divergence_grad_q(kind, p.row(i), q.row(i), g);
        for (double& v : g) v *= w;
        g[i] = 0.0;
    }
    out.loss *= w;
    return out;
}

BatchSupervision restrict_supervision(const NeighborhoodDistribution& p,
                                      std::span<const std::size_t> index) {
    const std::size_t b = index.size();
    if (b < 2) throw DimensionError("a batch needs at least 2 rows");
    Matrix sub(b, b);
    std::vector<std::size_t> active;
    for (std::size_t a = 0; a < b; ++a) {
        double total = 0.0;
        for (std::size_t c = 0; c < b; ++c) {
            if (c == a) continue;
            sub(a, c) = p(index[a], index[c]);
            total += sub(a, c);
        }
        if (total > 0.0) {
            for (double& v : sub.row(a)) v /= total;
            active.push_back(a);
        } else {
            for (std::size_t c = 0; c < b; ++c) sub(a, c) = c == a ? 0.0 : 1.0 / double(b - 1);
        }
    }
    return {NeighborhoodDistribution(std::move(sub), DistributionRole::Supervisory),
            std::move(active)};
}

Objective free_embedding_objective(Divergence kind, const KernelSpec& kernel,
                                   const NeighborhoodDistribution& p, const FreeEmbedding& emb) {
    const Matrix& z = emb.table();
    const auto q = learned_distribution(z, kernel);
    auto lg = loss_and_grad(kind, p, q);
    Objective obj{lg.loss, {}};
    obj.grads.push_back(kernel_rows_grad(z, kernel, q, lg.dL_dq));
    return obj;
}

Objective encoder_objective(Divergence kind, const KernelSpec& kernel,
                            const NeighborhoodDistribution& p, const Encoder& encoder,
                            const Matrix& x) {
    const Matrix z = encoder.forward(x);
    const auto q = learned_distribution(z, kernel);
    auto lg = loss_and_grad(kind, p, q);
    const Matrix dz = kernel_rows_grad(z, kernel, q, lg.dL_dq);
    return {lg.loss, encoder.backward(x, dz).params};
}

Objective cluster_objective(Divergence kind, const NeighborhoodDistribution& p,
                            std::span<const std::size_t> active, const ClusterHead& head,
                            const Matrix& x) {
    const Matrix phi = head.forward(x);
    const auto q = cluster_transition(phi);
    auto lg = loss_and_grad(kind, p, q, active);
    const Matrix dphi = cluster_transition_grad(phi, q, lg.dL_dq);
    return {lg.loss, head.backward(x, phi, dphi).params};
}

Split holdout_split(std::size_t n, std::size_t every) {
    if (every < 2) throw PreconditionError("holdout period must be >= 2");
    Split s;
    for (std::size_t i = 0; i < n; ++i) {
        (i % every == every - 1 ? s.test : s.train).push_back(i);
    }
    return s;
}

Matrix metric_features(const Matrix& z, KernelFamily family) {
    return family == KernelFamily::Angular ? normalize_rows(z) : z;
}

double holdout_knn(const Matrix& features, std::span<const int> labels, std::size_t k) {
    if (labels.size() != features.rows()) throw DimensionError("one label per row required");
    const Split s = holdout_split(features.rows());
    std::vector<int> ytr, yte;
    for (std::size_t i : s.train) ytr.push_back(labels[i]);
    for (std::size_t i : s.test) yte.push_back(labels[i]);
    return knn_accuracy(gather_rows(features, s.train), ytr, gather_rows(features, s.test), yte,
                        std::min(k, s.train.size()));
}

namespace {

// Records norms, clips if asked, and applies one Adam step. Converts
// non-finite values into TrainingAborted.
void apply_step(const LossConfig& cfg, std::size_t step, const Objective& obj,
                std::vector<Matrix*> params, Adam& adam, TrainReport& report) {
    if (!std::isfinite(obj.loss)) {
        throw TrainingAborted("non-finite loss at step " + std::to_string(step) + " (" +
                                  std::string(to_string(cfg.divergence)) + ")",
                              step, cfg.divergence);
    }
    std::vector<double> norms;
    double total = 0.0;
    for (const Matrix& g : obj.grads) {
        norms.push_back(frobenius_norm(g));
        total += norms.back() * norms.back();
    }
    report.losses.push_back(obj.loss);
    report.grad_norms.push_back(norms);

    std::vector<Matrix> grads = obj.grads;
    total = std::sqrt(total);
    if (cfg.clip_norm && total > *cfg.clip_norm) {
        const double s = *cfg.clip_norm / total;
        for (Matrix& g : grads)
            for (double& v : g.data()) v *= s;
    }
    try {
        adam.step(params, grads);
    } catch (const NumericalError&) {
        throw TrainingAborted("non-finite gradient at step " + std::to_string(step) + " (" +
                                  std::string(to_string(cfg.divergence)) + ")",
                              step, cfg.divergence);
    }
}

bool snapshot_due(const LossConfig& cfg, std::size_t step, std::size_t total_steps) {
    return (step + 1) % cfg.eval_every == 0 || step + 1 == total_steps;
}

}  // namespace

SneResult run_sne(const LossConfig& config, const Matrix& x, SneMode mode,
                  std::span<const int> labels, const Matrix* init) {
    config.validate();
    if (!labels.empty() && labels.size() != x.rows()) {
        throw DimensionError("run_sne: one label per row required");
    }
    const auto p = supervisory_sne(x, config.perplexity);
    Pcg32 rng(config.seed, config.stream);
    Adam adam(AdamOptions{.lr = config.lr});

    std::optional<FreeEmbedding> free;
    std::optional<Encoder> encoder;
    TrainReport report;
    if (mode == SneMode::Free) {
        if (init) {
            if (init->rows() != x.rows()) throw DimensionError("init embedding needs one row per point");
            free.emplace(*init);
        } else {
            free.emplace(FreeEmbedding::gaussian(x.rows(), config.out_dim, rng, config.init_stddev));
        }
        report.tensor_names = FreeEmbedding::parameter_names();
    } else {
        encoder.emplace(config.encoder == EncoderKind::Linear
                            ? Encoder::linear(x.cols(), config.out_dim, rng, config.init_gain)
                            : Encoder::mlp1(x.cols(), config.hidden, config.out_dim, rng,
                                            config.init_gain));
        report.tensor_names = encoder->parameter_names();
    }
    if (!labels.empty()) report.metric_names = {"knn", "silhouette"};

    auto embed = [&]() { return free ? free->table() : encoder->forward(x); };

    const std::size_t steps = config.epochs;
    for (std::size_t step = 0; step < steps; ++step) {
        Objective obj = free ? free_embedding_objective(config.divergence, config.kernel, p, *free)
                             : encoder_objective(config.divergence, config.kernel, p, *encoder, x);
        apply_step(config, step, obj, free ? free->parameters() : encoder->parameters(), adam,
                   report);
        if (!labels.empty() && snapshot_due(config, step, steps)) {
            const Matrix z = embed();
            if (!z.all_finite()) {
                throw TrainingAborted("embedding became non-finite", step, config.divergence);
            }
            const Matrix f = metric_features(z, config.kernel.family());
            report.snapshots.push_back(
                {step, {holdout_knn(f, labels, config.eval_k), silhouette(f, labels)}});
        }
    }
    SneResult result{std::move(report), embed(), {}};
    result.checkpoint = free ? free->to_checkpoint() : encoder->to_checkpoint();
    return result;
}

namespace {

// One training run of the cluster head from its current parameters.
TrainReport train_cluster_head(const LossConfig& config, const Matrix& x,
                               const NeighborhoodDistribution& p, std::span<const int> true_labels,
                               ClusterHead& head, Pcg32& rng) {
    const std::size_t n = x.rows();
    Adam adam(AdamOptions{.lr = config.lr});
    TrainReport report;
    report.tensor_names = ClusterHead::parameter_names();
    if (!true_labels.empty()) report.metric_names = {"hungarian"};

    const std::size_t batch = std::min(config.batch_size, n);
    std::size_t batches = n / batch;
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    const std::size_t steps = config.epochs * batches;

    std::size_t step = 0;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        if (batch < n) rng.shuffle(std::span<std::size_t>(order));
        for (std::size_t b = 0; b < batches; ++b, ++step) {
            // The last batch absorbs the remainder so every row is visited.
            const std::size_t lo = b * batch;
            const std::size_t hi = b + 1 == batches ? n : lo + batch;
            std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(lo),
                                         order.begin() + static_cast<std::ptrdiff_t>(hi));
            const Matrix xb = batch < n ? gather_rows(x, idx) : x;
            if (batch == n) std::iota(idx.begin(), idx.end(), std::size_t{0});
            const BatchSupervision sup = restrict_supervision(p, idx);
            Objective obj;
            try {
                obj = cluster_objective(config.divergence, sup.p, sup.active, head, xb);
            } catch (const NumericalError& e) {
                const std::size_t row = e.index() < idx.size() ? idx[e.index()] : e.index();
                throw NumericalError("degenerate cluster transition at row " +
                                         std::to_string(row) + ", step " + std::to_string(step),
                                     row);
            }
            apply_step(config, step, obj, head.parameters(), adam, report);
            if (!true_labels.empty() && snapshot_due(config, step, steps)) {
                const auto pred = head.predict(x);
                report.snapshots.push_back({step, {hungarian_accuracy(pred, true_labels)}});
            }
        }
    }
    return report;
}

}  // namespace

double full_cluster_objective(Divergence kind, const NeighborhoodDistribution& p,
                              const ClusterHead& head, const Matrix& x) {
    const auto q = cluster_transition(head.forward(x));
    const std::size_t n = p.size();
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) total += rowwise::divergence(kind, p.row(i), q.row(i));
    return total / static_cast<double>(n);
}

ClusterResult run_cluster(const LossConfig& config, const Matrix& x,
                          std::span<const int> true_labels, const ClusterHead* init) {
    config.validate();
    const std::size_t n = x.rows();
    if (!true_labels.empty() && true_labels.size() != n) {
        throw DimensionError("run_cluster: one label per row required");
    }
    if (config.knn_k + 1 > n) throw ConfigError("knn_k must be <= N - 1");
    const auto p = supervisory_knn(x, config.knn_k);
    Pcg32 rng(config.seed, config.stream);

    std::optional<ClusterResult> best;
    std::vector<double> objectives;
    for (std::size_t r = 0; r < config.restarts; ++r) {
        ClusterHead head = init && r == 0
                               ? *init
                               : ClusterHead::glorot(x.cols(), config.clusters, rng, config.init_gain);
        TrainReport report = train_cluster_head(config, x, p, true_labels, head, rng);
        const double objective = full_cluster_objective(config.divergence, p, head, x);
        objectives.push_back(objective);
        if (!best || objective < best->objective) {
            Matrix assignments = head.forward(x);
            best = ClusterResult{std::move(report), std::move(assignments), std::move(head), r,
                                 objective, {}};
        }
    }
    best->restart_objectives = std::move(objectives);
    return std::move(*best);
}

SupconResult run_supcon(const LossConfig& config, const Matrix& x, std::span<const int> labels) {
    config.validate();
    if (labels.size() != x.rows()) throw DimensionError("run_supcon: one label per row required");
    const Split split = holdout_split(x.rows());

    std::vector<int> classes(labels.begin(), labels.end());
    std::sort(classes.begin(), classes.end());
    classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
    if (classes.size() < 2) throw ConfigError("supcon needs at least 2 classes");
    const std::size_t per_class = config.batch_size / classes.size();
    if (per_class < 2) {
        throw ConfigError("batch_size " + std::to_string(config.batch_size) +
                          " leaves fewer than 2 samples per class for " +
                          std::to_string(classes.size()) + " classes");
    }
    std::vector<std::vector<std::size_t>> pools(classes.size());
    for (std::size_t i : split.train) {
        const auto c = std::lower_bound(classes.begin(), classes.end(), labels[i]) - classes.begin();
        pools[static_cast<std::size_t>(c)].push_back(i);
    }
    for (std::size_t c = 0; c < pools.size(); ++c) {
        if (pools[c].size() < 2) {
            throw PreconditionError("class " + std::to_string(classes[c]) +
                                    " has fewer than 2 training samples");
        }
    }

    Pcg32 rng(config.seed, config.stream);
    Encoder encoder = config.encoder == EncoderKind::Linear
                          ? Encoder::linear(x.cols(), config.out_dim, rng, config.init_gain)
                          : Encoder::mlp1(x.cols(), config.hidden, config.out_dim, rng,
                                          config.init_gain);
    Adam adam(AdamOptions{.lr = config.lr});
    TrainReport report;
    report.tensor_names = encoder.parameter_names();
    report.metric_names = {"knn"};

    std::vector<std::size_t> cursor(pools.size(), 0);
    for (auto& pool : pools) rng.shuffle(std::span<std::size_t>(pool));
    auto draw = [&](std::size_t c) {
        if (cursor[c] == pools[c].size()) {
            rng.shuffle(std::span<std::size_t>(pools[c]));
            cursor[c] = 0;
        }
        return pools[c][cursor[c]++];
    };

    const double chance = 1.0 / static_cast<double>(classes.size());
    std::vector<double> history;
    bool peaked = false;

    const std::size_t per_epoch = std::max<std::size_t>(1, split.train.size() / config.batch_size);
    const std::size_t steps = config.epochs * per_epoch;
    for (std::size_t step = 0; step < steps; ++step) {
        std::vector<std::size_t> idx;
        for (std::size_t c = 0; c < pools.size(); ++c) {
            const std::size_t take = std::min(per_class, pools[c].size());
            for (std::size_t t = 0; t < take; ++t) idx.push_back(draw(c));
        }
        std::vector<int> yb;
        for (std::size_t i : idx) yb.push_back(labels[i]);
        const Matrix xb = gather_rows(x, idx);
        const auto p = supervisory_labels(yb);
        Objective obj = encoder_objective(config.divergence, config.kernel, p, encoder, xb);
        apply_step(config, step, obj, encoder.parameters(), adam, report);

        if (snapshot_due(config, step, steps)) {
            const Matrix z = encoder.forward(x);
            if (!z.all_finite()) {
                throw TrainingAborted("encoder output became non-finite", step, config.divergence);
            }
            const double acc = holdout_knn(metric_features(z, config.kernel.family()), labels,
                                           config.eval_k);
            report.snapshots.push_back({step, {acc}});
            history.push_back(acc);
            const std::size_t w = std::min(config.collapse_window, history.size());
            const double avg =
                std::accumulate(history.end() - static_cast<std::ptrdiff_t>(w), history.end(), 0.0) /
                static_cast<double>(w);
            if (avg >= config.collapse_high * chance) peaked = true;
            if (peaked && avg < config.collapse_low * chance) report.collapsed = true;
        }
    }
    return {std::move(report), std::move(encoder)};
}

SpikeStats spike_stats(std::span<const double> series) {
    if (series.empty()) throw PreconditionError("spike statistics need a non-empty series");
    std::vector<double> s(series.begin(), series.end());
    std::sort(s.begin(), s.end());
    SpikeStats st;
    st.max = s.back();
    const std::size_t m = s.size() / 2;
    st.median = s.size() % 2 == 1 ? s[m] : 0.5 * (s[m - 1] + s[m]);
    if (st.median > 0.0) {
        st.ratio = st.max / st.median;
    } else {
        st.ratio = st.max > 0.0 ? std::numeric_limits<double>::infinity() : 1.0;
    }
    return st;
}

SpikeSummary grad_norm_series(const TrainReport& report, std::size_t window) {
    if (report.steps() == 0) throw PreconditionError("report has no steps");
    const std::size_t w = std::min(std::max<std::size_t>(window, 1), report.steps());
    SpikeSummary out;
    out.tensor_names = report.tensor_names;
    std::vector<double> total(w, 0.0);
    for (std::size_t t = 0; t < report.tensor_names.size(); ++t) {
        std::vector<double> series(w);
        for (std::size_t s = 0; s < w; ++s) {
            series[s] = report.grad_norms[s][t];
            total[s] += series[s] * series[s];
        }
        out.per_tensor.push_back(spike_stats(series));
    }
    for (double& v : total) v = std::sqrt(v);
    out.total = spike_stats(total);
    return out;
}

}  // namespace bicon
