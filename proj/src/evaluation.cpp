#include "bicon/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <string>

#include "bicon/errors.hpp"
#include "bicon/model.hpp"
#include "bicon/rng.hpp"

namespace bicon {

namespace {

std::vector<int> sorted_unique(std::span<const int> v) {
    std::vector<int> u(v.begin(), v.end());
    std::sort(u.begin(), u.end());
    u.erase(std::unique(u.begin(), u.end()), u.end());
    return u;
}

int dense_index(const std::vector<int>& alphabet, int label) {
    return static_cast<int>(std::lower_bound(alphabet.begin(), alphabet.end(), label) -
                            alphabet.begin());
}

}  // namespace

ConfusionMatrix confusion_matrix(std::span<const int> pred, std::span<const int> truth) {
    if (pred.size() != truth.size()) {
        throw DimensionError("prediction and truth lengths differ: " + std::to_string(pred.size()) +
                             " vs " + std::to_string(truth.size()));
    }
    if (pred.empty()) throw DimensionError("cannot score an empty labeling");
    ConfusionMatrix cm;
    cm.predicted_labels = sorted_unique(pred);
    cm.true_labels = sorted_unique(truth);
    cm.counts.assign(cm.predicted_labels.size(),
                     std::vector<std::int64_t>(cm.true_labels.size(), 0));
    for (std::size_t i = 0; i < pred.size(); ++i) {
        ++cm.counts[dense_index(cm.predicted_labels, pred[i])][dense_index(cm.true_labels, truth[i])];
    }
    cm.total = static_cast<std::int64_t>(pred.size());
    return cm;
}

Assignment max_weight_assignment(const std::vector<std::vector<std::int64_t>>& weights) {
    const std::size_t rows = weights.size();
    const std::size_t cols = rows == 0 ? 0 : weights[0].size();
    const std::size_t n = std::max(rows, cols);
    Assignment result;
    result.mapping.assign(rows, -1);
    if (n == 0) return result;

    // Minimize cost = -weight on the zero-padded square matrix. Indices are
    // 1-based inside the solver; index 0 is the virtual start column.
    auto cost = [&](std::size_t i, std::size_t j) -> std::int64_t {
        if (i >= rows || j >= cols) return 0;
        return -weights[i][j];
    };
    constexpr std::int64_t kInf = std::numeric_limits<std::int64_t>::max() / 4;
    std::vector<std::int64_t> u(n + 1, 0), v(n + 1, 0), minv(n + 1);
    std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
    std::vector<char> used(n + 1);
    for (std::size_t i = 1; i <= n; ++i) {
        p[0] = i;
        std::size_t j0 = 0;
        std::fill(minv.begin(), minv.end(), kInf);
        std::fill(used.begin(), used.end(), 0);
        do {
            used[j0] = 1;
            const std::size_t i0 = p[j0];
            std::int64_t delta = kInf;
            std::size_t j1 = 0;
            for (std::size_t j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const std::int64_t cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (std::size_t j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const std::size_t j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    for (std::size_t j = 1; j <= n; ++j) {
        const std::size_t i = p[j] - 1;
        const std::size_t c = j - 1;
        if (i < rows && c < cols) {
            result.mapping[i] = static_cast<int>(c);
            result.matched += weights[i][c];
        }
    }
    return result;
}

double hungarian_accuracy(std::span<const int> pred, std::span<const int> truth) {
    const ConfusionMatrix cm = confusion_matrix(pred, truth);
    const Assignment a = max_weight_assignment(cm.counts);
    return static_cast<double>(a.matched) / static_cast<double>(cm.total);
}

std::vector<int> knn_predict(const Matrix& train_z, std::span<const int> train_y,
                             const Matrix& test_z, std::size_t k) {
    if (train_z.rows() != train_y.size()) {
        throw DimensionError("training features and labels differ in length");
    }
    if (train_z.cols() != test_z.cols()) {
        throw DimensionError("train and test feature dimensions differ: " +
                             std::to_string(train_z.cols()) + " vs " + std::to_string(test_z.cols()));
    }
    if (k < 1 || k > train_z.rows()) {
        throw PreconditionError("k must lie in [1, train size], got " + std::to_string(k));
    }
    const std::vector<int> classes = sorted_unique(train_y);
    std::vector<int> out(test_z.rows());
    std::vector<std::pair<double, std::size_t>> cand(train_z.rows());
    std::vector<std::size_t> votes(classes.size());
    for (std::size_t t = 0; t < test_z.rows(); ++t) {
        for (std::size_t i = 0; i < train_z.rows(); ++i) {
            cand[i] = {squared_distance(test_z.row(t), train_z.row(i)), i};
        }
        std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(k), cand.end());
        std::fill(votes.begin(), votes.end(), 0);
        for (std::size_t r = 0; r < k; ++r) ++votes[dense_index(classes, train_y[cand[r].second])];
        // max_element returns the first maximum, i.e. the smallest class id.
        out[t] = classes[static_cast<std::size_t>(std::max_element(votes.begin(), votes.end()) -
                                                  votes.begin())];
    }
    return out;
}

double knn_accuracy(const Matrix& train_z, std::span<const int> train_y, const Matrix& test_z,
                    std::span<const int> test_y, std::size_t k) {
    if (test_z.rows() != test_y.size()) {
        throw DimensionError("test features and labels differ in length");
    }
    if (test_y.empty()) throw DimensionError("empty test set");
    const auto pred = knn_predict(train_z, train_y, test_z, k);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == test_y[i];
    return static_cast<double>(hits) / static_cast<double>(pred.size());
}

double linear_probe(const Matrix& train_z, std::span<const int> train_y, const Matrix& test_z,
                    std::span<const int> test_y, const LinearProbeOptions& options) {
    if (train_z.rows() != train_y.size() || test_z.rows() != test_y.size()) {
        throw DimensionError("features and labels differ in length");
    }
    if (train_z.cols() != test_z.cols()) throw DimensionError("train/test feature dims differ");
    if (test_y.empty()) throw DimensionError("empty test set");
    const std::vector<int> classes = sorted_unique(train_y);
    if (classes.size() < 2) throw PreconditionError("linear probe needs at least 2 classes");

    Pcg32 rng(options.seed, 0x70726f6265ULL);
    ClusterHead head = ClusterHead::glorot(train_z.cols(), classes.size(), rng);
    Adam adam(AdamOptions{.lr = options.lr});
    const double inv_n = 1.0 / static_cast<double>(train_z.rows());
    std::vector<int> target(train_y.size());
    for (std::size_t i = 0; i < train_y.size(); ++i) target[i] = dense_index(classes, train_y[i]);

    for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
        Matrix probs = head.forward(train_z);
        double loss = 0.0;
        for (std::size_t i = 0; i < probs.rows(); ++i) {
            const auto c = static_cast<std::size_t>(target[i]);
            loss -= std::log(std::max(probs(i, c), 1e-300));
            probs(i, c) -= 1.0;
        }
        if (!std::isfinite(loss)) throw NumericalError("linear probe loss is not finite", epoch);
        for (double& v : probs.data()) v *= inv_n;
        Gradients g = head.backward_logits(train_z, probs);
        auto params = head.parameters();
        adam.step(params, g.params);
    }

    const auto pred = head.predict(test_z);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) hits += classes[pred[i]] == test_y[i];
    return static_cast<double>(hits) / static_cast<double>(pred.size());
}

double silhouette(const Matrix& z, std::span<const int> labels) {
    const std::size_t n = z.rows();
    if (labels.size() != n) throw DimensionError("labels and features differ in length");
    if (n < 3) throw PreconditionError("silhouette needs at least 3 points");
    const std::vector<int> clusters = sorted_unique(labels);
    if (clusters.size() < 2) throw PreconditionError("silhouette needs at least 2 clusters");

    std::vector<std::size_t> dense(n);
    std::vector<std::size_t> sizes(clusters.size(), 0);
    for (std::size_t i = 0; i < n; ++i) {
        dense[i] = static_cast<std::size_t>(dense_index(clusters, labels[i]));
        ++sizes[dense[i]];
    }
    std::vector<double> sums(clusters.size());
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t own = dense[i];
        if (sizes[own] == 1) continue;
        std::fill(sums.begin(), sums.end(), 0.0);
        for (std::size_t j = 0; j < n; ++j) {
            if (j != i) sums[dense[j]] += std::sqrt(squared_distance(z.row(i), z.row(j)));
        }
        const double a = sums[own] / static_cast<double>(sizes[own] - 1);
        double b = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < clusters.size(); ++c) {
            if (c != own) b = std::min(b, sums[c] / static_cast<double>(sizes[c]));
        }
        const double denom = std::max(a, b);
        if (denom > 0.0) total += (b - a) / denom;
    }
    return total / static_cast<double>(n);
}

KMeansResult kmeans(const Matrix& x, std::size_t k, std::uint64_t seed, std::size_t restarts,
                    std::size_t max_iterations) {
    const std::size_t n = x.rows();
    const std::size_t d = x.cols();
    if (k < 1 || k > n) throw PreconditionError("k-means needs 1 <= k <= N");
    Pcg32 rng(seed, 0x6b6d65616e73ULL);
    KMeansResult best;
    best.inertia = std::numeric_limits<double>::infinity();

    for (std::size_t r = 0; r < std::max<std::size_t>(restarts, 1); ++r) {
        // k-means++ seeding.
        Matrix centers(k, d);
        std::vector<double> dist(n, std::numeric_limits<double>::infinity());
        std::size_t first = rng.bounded(static_cast<std::uint32_t>(n));
        std::copy_n(x.row(first).begin(), d, centers.row(0).begin());
        for (std::size_t c = 1; c < k; ++c) {
            double total = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                dist[i] = std::min(dist[i], squared_distance(x.row(i), centers.row(c - 1)));
                total += dist[i];
            }
            double target = rng.uniform() * total;
            std::size_t pick = n - 1;
            for (std::size_t i = 0; i < n; ++i) {
                target -= dist[i];
                if (target < 0.0) {
                    pick = i;
                    break;
                }
            }
            std::copy_n(x.row(pick).begin(), d, centers.row(c).begin());
        }

        std::vector<int> labels(n, -1);
        double inertia = 0.0;
        for (std::size_t it = 0; it < max_iterations; ++it) {
            bool changed = false;
            inertia = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                double bd = std::numeric_limits<double>::infinity();
                int bc = 0;
                for (std::size_t c = 0; c < k; ++c) {
                    const double dd = squared_distance(x.row(i), centers.row(c));
                    if (dd < bd) {
                        bd = dd;
                        bc = static_cast<int>(c);
                    }
                }
                changed |= labels[i] != bc;
                labels[i] = bc;
                inertia += bd;
            }
            if (!changed) break;
            Matrix sums(k, d);
            std::vector<std::size_t> counts(k, 0);
            for (std::size_t i = 0; i < n; ++i) {
                const auto c = static_cast<std::size_t>(labels[i]);
                ++counts[c];
                for (std::size_t j = 0; j < d; ++j) sums(c, j) += x(i, j);
            }
            for (std::size_t c = 0; c < k; ++c) {
                if (counts[c] == 0) continue;  // empty cluster keeps its center
                for (std::size_t j = 0; j < d; ++j) centers(c, j) = sums(c, j) / double(counts[c]);
            }
        }
        if (inertia < best.inertia) {
            best.inertia = inertia;
            best.labels = std::move(labels);
            best.centers = std::move(centers);
        }
    }
    return best;
}

}  // namespace bicon
