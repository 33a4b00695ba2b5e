#include "bicon/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "bicon/divergence.hpp"
#include "bicon/errors.hpp"
#include "bicon/kernels.hpp"
#include "bicon/model.hpp"
#include "bicon/rng.hpp"
#include "bicon/trainers.hpp"

namespace bicon {

std::string_view to_string(GradcheckScope scope) {
    switch (scope) {
        case GradcheckScope::Divergences: return "divergences";
        case GradcheckScope::Kernels: return "kernels";
        case GradcheckScope::Model: return "model";
        case GradcheckScope::End2End: return "end2end";
    }
    return "?";
}

GradcheckScope parse_gradcheck_scope(std::string_view name) {
    if (name == "divergences") return GradcheckScope::Divergences;
    if (name == "kernels") return GradcheckScope::Kernels;
    if (name == "model") return GradcheckScope::Model;
    if (name == "end2end") return GradcheckScope::End2End;
    throw ConfigError("unknown gradcheck scope '" + std::string(name) +
                      "' (expected divergences, kernels, model or end2end)");
}

bool GradcheckReport::passed() const {
    return std::all_of(entries.begin(), entries.end(), [](const auto& e) { return e.passed; });
}

const GradcheckEntry* GradcheckReport::worst() const {
    const GradcheckEntry* w = nullptr;
    for (const auto& e : entries) {
        if (!w || e.worst_error > w->worst_error) w = &e;
    }
    return w;
}

Matrix numeric_gradient(const std::function<double()>& f, Matrix& param, double h) {
    Matrix g(param.rows(), param.cols());
    auto data = param.data();
    for (std::size_t k = 0; k < data.size(); ++k) {
        const double orig = data[k];
        data[k] = orig + h;
        const double up = f();
        data[k] = orig - h;
        const double down = f();
        data[k] = orig;
        g.data()[k] = (up - down) / (2.0 * h);
    }
    return g;
}

void compare_gradients(const std::string& prefix, const std::function<double()>& f,
                       const std::vector<Matrix*>& params, std::vector<Matrix> analytic,
                       const std::vector<std::string>& names, const GradcheckOptions& options,
                       GradcheckReport& report) {
    std::vector<Matrix> numeric;
    double scale = 0.0;
    for (Matrix* p : params) {
        numeric.push_back(numeric_gradient(f, *p, options.step));
        scale = std::max(scale, max_abs(numeric.back()));
    }
    scale = std::max(scale, 1e-300);
    for (std::size_t t = 0; t < params.size(); ++t) {
        GradcheckEntry e;
        e.component = prefix + "/" + names[t];
        if (!options.corrupt.empty() && e.component.find(options.corrupt) != std::string::npos &&
            !analytic[t].empty()) {
            analytic[t].data()[0] += 0.1 * scale + 1e-3;
        }
        auto a = analytic[t].data();
        auto n = numeric[t].data();
        for (std::size_t k = 0; k < a.size(); ++k) {
            const double denom = std::max({std::abs(a[k]), std::abs(n[k]), options.floor_fraction * scale});
            const double err = std::abs(a[k] - n[k]) / denom;
            if (!(err <= e.worst_error)) {
                e.worst_error = std::isnan(err) ? std::numeric_limits<double>::infinity() : err;
                e.worst_index = k;
            }
        }
        e.passed = e.worst_error <= options.tolerance;
        report.entries.push_back(std::move(e));
    }
}

namespace {

std::vector<double> random_simplex(Pcg32& rng, std::size_t n, double floor) {
    std::vector<double> v(n);
    double s = 0.0;
    for (double& x : v) {
        x = rng.uniform(floor, 1.0);
        s += x;
    }
    for (double& x : v) x /= s;
    return v;
}

Matrix random_normal(Pcg32& rng, std::size_t r, std::size_t c, double sd = 1.0) {
    Matrix m(r, c);
    for (double& v : m.data()) v = rng.normal(0.0, sd);
    return m;
}

Matrix random_upstream(Pcg32& rng, std::size_t n) {
    Matrix g = random_normal(rng, n, n);
    for (std::size_t i = 0; i < n; ++i) g(i, i) = 0.0;
    return g;
}

double weighted_sum(const Matrix& w, const Matrix& m) {
    double s = 0.0;
    for (std::size_t k = 0; k < m.size(); ++k) s += w.data()[k] * m.data()[k];
    return s;
}

void check_divergences(std::uint64_t seed, const GradcheckOptions& opt, GradcheckReport& report) {
    Pcg32 rng(seed, 1);
    for (Divergence kind : kAllDivergences) {
        for (int trial = 0; trial < 20; ++trial) {
            const auto p = random_simplex(rng, 8, 0.05);
            const auto qv = random_simplex(rng, 8, 0.05);
            Matrix q(1, 8);
            std::copy(qv.begin(), qv.end(), q.data().begin());
            Matrix analytic(1, 8);
            rowwise::divergence_grad_q(kind, p, q.data(), analytic.data());
            auto f = [&] { return rowwise::divergence(kind, p, q.data()); };
            compare_gradients("divergences/" + std::string(to_string(kind)) + "/trial" +
                                  std::to_string(trial),
                              f, {&q}, {analytic}, {"q"}, opt, report);
        }
    }
}

void check_kernels(std::uint64_t seed, const GradcheckOptions& opt, GradcheckReport& report) {
    Pcg32 rng(seed, 2);
    for (KernelFamily fam : {KernelFamily::Distance, KernelFamily::Angular}) {
        const KernelSpec spec(fam, fam == KernelFamily::Angular ? 2.0 : 1.0);
        for (int trial = 0; trial < 5; ++trial) {
            Matrix z = random_normal(rng, 5, 3);
            const Matrix g = random_upstream(rng, 5);
            const Matrix analytic = kernel_rows_grad(z, spec, g);
            auto f = [&] { return weighted_sum(g, learned_distribution(z, spec).matrix()); };
            compare_gradients("kernels/" + std::string(to_string(fam)) + "/trial" +
                                  std::to_string(trial),
                              f, {&z}, {analytic}, {"z"}, opt, report);
        }
    }
    // cluster_transition, differentiated through a softmax so that
    // perturbations stay on the simplex.
    for (int trial = 0; trial < 5; ++trial) {
        Matrix logits = random_normal(rng, 6, 4);
        const Matrix g = random_upstream(rng, 6);
        const Matrix phi = softmax(logits);
        const auto q = cluster_transition(phi);
        const Matrix dphi = cluster_transition_grad(phi, q, g);
        Matrix analytic(6, 4);
        for (std::size_t i = 0; i < 6; ++i) {
            const double mean = dot(phi.row(i), dphi.row(i));
            for (std::size_t c = 0; c < 4; ++c) analytic(i, c) = phi(i, c) * (dphi(i, c) - mean);
        }
        auto f = [&] { return weighted_sum(g, cluster_transition(softmax(logits)).matrix()); };
        compare_gradients("kernels/cluster_transition/trial" + std::to_string(trial), f, {&logits},
                          {analytic}, {"logits"}, opt, report);
    }
}

void check_model(std::uint64_t seed, const GradcheckOptions& opt, GradcheckReport& report) {
    Pcg32 rng(seed, 3);
    for (EncoderKind kind : {EncoderKind::Linear, EncoderKind::Mlp1}) {
        Encoder enc = kind == EncoderKind::Linear ? Encoder::linear(4, 3, rng)
                                                  : Encoder::mlp1(4, 5, 3, rng);
        // Nonzero biases so every path is exercised.
        for (Matrix* p : enc.parameters())
            for (double& v : p->data()) v += rng.normal(0.0, 0.3);
        Matrix x = random_normal(rng, 6, 4);
        const Matrix g = random_normal(rng, 6, 3);
        Gradients an = enc.backward(x, g);
        auto f = [&] { return weighted_sum(g, enc.forward(x)); };
        auto params = enc.parameters();
        params.push_back(&x);
        an.params.push_back(an.input);
        auto names = enc.parameter_names();
        names.push_back("input");
        compare_gradients("model/encoder_" + std::string(to_string(kind)), f, params, an.params,
                          names, opt, report);
    }
    ClusterHead head = ClusterHead::glorot(4, 3, rng);
    for (Matrix* p : head.parameters())
        for (double& v : p->data()) v += rng.normal(0.0, 0.3);
    Matrix x = random_normal(rng, 6, 4);
    const Matrix g = random_normal(rng, 6, 3);
    Gradients an = head.backward(x, head.forward(x), g);
    auto f = [&] { return weighted_sum(g, head.forward(x)); };
    auto params = head.parameters();
    params.push_back(&x);
    an.params.push_back(an.input);
    auto names = ClusterHead::parameter_names();
    names.push_back("input");
    compare_gradients("model/cluster_head", f, params, an.params, names, opt, report);
}

// Three well-separated groups in 4-D; small enough for exhaustive differences.
Matrix small_blobs(Pcg32& rng, std::size_t n, std::vector<int>& labels) {
    Matrix x(n, 4);
    labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        labels[i] = static_cast<int>(i % 3);
        for (std::size_t j = 0; j < 4; ++j) {
            x(i, j) = rng.normal(0.0, 0.5) + (j == i % 3 ? 3.0 : 0.0);
        }
    }
    return x;
}

void check_end2end(std::uint64_t seed, const GradcheckOptions& opt, GradcheckReport& report) {
    Pcg32 rng(seed, 4);
    std::vector<int> labels;
    const Matrix x_sne = small_blobs(rng, 10, labels);
    const auto p_sne = supervisory_sne(x_sne, 4.0);
    const Matrix x_sup = small_blobs(rng, 12, labels);
    const std::vector<int> sup_labels = labels;
    const auto p_sup = supervisory_labels(sup_labels);
    const Matrix x_clu = small_blobs(rng, 12, labels);
    const auto p_clu_full = supervisory_knn(x_clu, 3);

    for (Divergence div : kAllDivergences) {
        const std::string d(to_string(div));
        for (KernelFamily fam : {KernelFamily::Distance, KernelFamily::Angular}) {
            const std::string k(to_string(fam));
            {
                const KernelSpec spec(fam, default_kernel_scale(Task::Sne, fam));
                FreeEmbedding emb = FreeEmbedding::gaussian(x_sne.rows(), 2, rng, 1.0);
                const Objective obj = free_embedding_objective(div, spec, p_sne, emb);
                auto f = [&] { return free_embedding_objective(div, spec, p_sne, emb).loss; };
                compare_gradients("end2end/sne_free/" + d + "/" + k, f, emb.parameters(), obj.grads,
                                  FreeEmbedding::parameter_names(), opt, report);
            }
            {
                const KernelSpec spec(fam, default_kernel_scale(Task::Sne, fam));
                Encoder enc = Encoder::mlp1(4, 5, 2, rng);
                for (Matrix* p : enc.parameters())
                    for (double& v : p->data()) v += rng.normal(0.0, 0.2);
                const Objective obj = encoder_objective(div, spec, p_sne, enc, x_sne);
                auto f = [&] { return encoder_objective(div, spec, p_sne, enc, x_sne).loss; };
                compare_gradients("end2end/sne_parametric/" + d + "/" + k, f, enc.parameters(),
                                  obj.grads, enc.parameter_names(), opt, report);
            }
            {
                const KernelSpec spec(fam, default_kernel_scale(Task::Supcon, fam));
                Encoder enc = Encoder::mlp1(4, 5, 3, rng);
                for (Matrix* p : enc.parameters())
                    for (double& v : p->data()) v += rng.normal(0.0, 0.2);
                const Objective obj = encoder_objective(div, spec, p_sup, enc, x_sup);
                auto f = [&] { return encoder_objective(div, spec, p_sup, enc, x_sup).loss; };
                compare_gradients("end2end/supcon/" + d + "/" + k, f, enc.parameters(), obj.grads,
                                  enc.parameter_names(), opt, report);
            }
        }
        // The cluster assembly has no similarity kernel. Checked on a
        // 10-row batch so the renormalized sub-rows are covered too.
        const std::vector<std::size_t> idx = {0, 1, 2, 3, 4, 5, 6, 7, 9, 11};
        const Matrix xb = gather_rows(x_clu, idx);
        const BatchSupervision sup = restrict_supervision(p_clu_full, idx);
        ClusterHead head = ClusterHead::glorot(4, 3, rng);
        for (Matrix* p : head.parameters())
            for (double& v : p->data()) v += rng.normal(0.0, 0.2);
        const Objective obj = cluster_objective(div, sup.p, sup.active, head, xb);
        auto f = [&] { return cluster_objective(div, sup.p, sup.active, head, xb).loss; };
        compare_gradients("end2end/cluster/" + d, f, head.parameters(), obj.grads,
                          ClusterHead::parameter_names(), opt, report);
    }
}

}  // namespace

GradcheckReport run_gradcheck(GradcheckScope scope, std::uint64_t seed,
                              const GradcheckOptions& options) {
    GradcheckReport report;
    switch (scope) {
        case GradcheckScope::Divergences: check_divergences(seed, options, report); break;
        case GradcheckScope::Kernels: check_kernels(seed, options, report); break;
        case GradcheckScope::Model: check_model(seed, options, report); break;
        case GradcheckScope::End2End: check_end2end(seed, options, report); break;
    }
    return report;
}

}  // namespace bicon
