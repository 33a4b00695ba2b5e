#include "bicon/kernels.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <string>

#include "bicon/errors.hpp"

namespace bicon {

std::string_view to_string(KernelFamily family) {
    return family == KernelFamily::Angular ? "angular" : "distance";
}

KernelFamily parse_kernel_family(std::string_view name) {
    std::string lower(name);
    std::transform(lower.begin(), lower.end(), lower.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (lower == "angular" || lower == "cosine") return KernelFamily::Angular;
    if (lower == "distance" || lower == "euclidean") return KernelFamily::Distance;
    throw ConfigError("unknown kernel '" + std::string(name) + "' (expected angular or distance)");
}

KernelSpec::KernelSpec(KernelFamily family, double scale) : family_(family), scale_(scale) {
    if (!(scale > 0.0) || !std::isfinite(scale)) {
        throw DomainError("kernel scale must be positive and finite");
    }
}

void check_neighborhood(const Matrix& m) {
    if (m.rows() != m.cols()) {
        throw DimensionError("neighborhood matrix must be square, got " + std::to_string(m.rows()) +
                             "x" + std::to_string(m.cols()));
    }
    if (m.rows() < 2) throw DimensionError("neighborhood matrix needs N >= 2");
    for (std::size_t i = 0; i < m.rows(); ++i) {
        if (m(i, i) != 0.0) {
            throw DomainError("neighborhood row " + std::to_string(i) + " has a nonzero diagonal");
        }
        double sum = 0.0;
        for (double v : m.row(i)) {
            if (!(v >= 0.0 && v <= 1.0)) {
                throw DomainError("neighborhood row " + std::to_string(i) +
                                  " has an entry outside [0, 1]");
            }
            sum += v;
        }
        if (std::abs(sum - 1.0) > kRowSumTolerance) {
            throw DomainError("neighborhood row " + std::to_string(i) + " sums to " +
                              std::to_string(sum));
        }
    }
}

NeighborhoodDistribution::NeighborhoodDistribution(Matrix matrix, DistributionRole role)
    : matrix_(std::move(matrix)), role_(role) {
    check_neighborhood(matrix_);
}

Matrix normalize_rows(const Matrix& z) {
    Matrix out = z;
    for (std::size_t i = 0; i < z.rows(); ++i) {
        const double n = l2_norm(z.row(i));
        if (!(n > 0.0) || !std::isfinite(n)) {
            throw DomainError("cannot normalize row " + std::to_string(i));
        }
        for (double& v : out.row(i)) v /= n;
    }
    return out;
}

Matrix similarity_matrix(const Matrix& z, const KernelSpec& spec) {
    if (z.rows() < 2) throw DimensionError("similarity_matrix needs N >= 2");
    if (!z.all_finite()) throw DomainError("embedding has non-finite entries");
    const std::size_t n = z.rows();
    const double c = spec.scale();
    if (spec.family() == KernelFamily::Angular) {
        for (std::size_t i = 0; i < n; ++i) {
            if (std::abs(l2_norm(z.row(i)) - 1.0) > 1e-9) {
                throw DomainError("angular kernel expects unit rows; row " + std::to_string(i) +
                                  " is not normalized");
            }
        }
    }
    Matrix s(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const double v = spec.family() == KernelFamily::Angular
                                 ? c * dot(z.row(i), z.row(j))
                                 : -c * squared_distance(z.row(i), z.row(j));
            s(i, j) = v;
            s(j, i) = v;
        }
    }
    return s;
}

NeighborhoodDistribution kernel_rows(const Matrix& scores) {
    if (scores.rows() != scores.cols()) throw DimensionError("score matrix must be square");
    const std::size_t n = scores.rows();
    if (n < 2) throw DimensionError("kernel_rows needs N >= 2");
    Matrix q(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            if (!std::isfinite(scores(i, j))) {
                throw DomainError("non-finite score in row " + std::to_string(i));
            }
            mx = std::max(mx, scores(i, j));
        }
        double z = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            const double e = std::exp(scores(i, j) - mx);
            q(i, j) = e;
            z += e;
        }
        for (double& v : q.row(i)) v /= z;
    }
    return {std::move(q), DistributionRole::Learned};
}

NeighborhoodDistribution learned_distribution(const Matrix& z, const KernelSpec& spec) {
    if (spec.family() == KernelFamily::Angular) {
        return kernel_rows(similarity_matrix(normalize_rows(z), spec));
    }
    return kernel_rows(similarity_matrix(z, spec));
}

Matrix softmax_rows_backward(const NeighborhoodDistribution& q, const Matrix& dL_dq) {
    const std::size_t n = q.size();
    if (dL_dq.rows() != n || dL_dq.cols() != n) {
        throw DimensionError("dL/dq shape does not match the distribution");
    }
    Matrix ds(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        double mean = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            if (j != i) mean += q(i, j) * dL_dq(i, j);
        }
        for (std::size_t j = 0; j < n; ++j) {
            if (j != i) ds(i, j) = q(i, j) * (dL_dq(i, j) - mean);
        }
    }
    return ds;
}

Matrix kernel_rows_grad(const Matrix& z, const KernelSpec& spec, const Matrix& dL_dq) {
    return kernel_rows_grad(z, spec, learned_distribution(z, spec), dL_dq);
}

Matrix kernel_rows_grad(const Matrix& z, const KernelSpec& spec,
                        const NeighborhoodDistribution& q, const Matrix& dL_dq) {
    const std::size_t n = z.rows();
    const std::size_t d = z.cols();
    if (q.size() != n || dL_dq.rows() != n || dL_dq.cols() != n) {
        throw DimensionError("kernel_rows_grad: shapes of z, q and dL/dq disagree");
    }
    const Matrix ds = softmax_rows_backward(q, dL_dq);
    const double c = spec.scale();
    Matrix grad(n, d);

    if (spec.family() == KernelFamily::Distance) {
        // s_ij = -C |z_i - z_j|^2 feeds both row i and row j.
        for (std::size_t i = 0; i < n; ++i) {
            auto gi = grad.row(i);
            for (std::size_t j = i + 1; j < n; ++j) {
                const double w = -2.0 * c * (ds(i, j) + ds(j, i));
                if (w == 0.0) continue;
                auto gj = grad.row(j);
                for (std::size_t k = 0; k < d; ++k) {
                    const double diff = z(i, k) - z(j, k);
                    gi[k] += w * diff;
                    gj[k] -= w * diff;
                }
            }
        }
        return grad;
    }

    const Matrix u = normalize_rows(z);
    Matrix du(n, d);
    for (std::size_t i = 0; i < n; ++i) {
        auto gi = du.row(i);
        for (std::size_t j = i + 1; j < n; ++j) {
            const double w = c * (ds(i, j) + ds(j, i));
            if (w == 0.0) continue;
            auto gj = du.row(j);
            for (std::size_t k = 0; k < d; ++k) {
                gi[k] += w * u(j, k);
                gj[k] += w * u(i, k);
            }
        }
    }
    // Through u = z / |z|: project onto the tangent space and divide by |z|.
    for (std::size_t i = 0; i < n; ++i) {
        const double norm = l2_norm(z.row(i));
        const double radial = dot(u.row(i), du.row(i));
        for (std::size_t k = 0; k < d; ++k) {
            grad(i, k) = (du(i, k) - radial * u(i, k)) / norm;
        }
    }
    return grad;
}

double row_entropy(std::span<const double> row) {
    double h = 0.0;
    for (double v : row) {
        if (v > 0.0) h -= v * std::log(v);
    }
    return h;
}

namespace {

// Fills `out` (off-diagonal of row i) with exp(-beta * d) / Z and returns the entropy.
double gaussian_row(std::span<const double> shifted, std::size_t self, double beta,
                    std::span<double> out) {
    double z = 0.0;
    double weighted = 0.0;
    for (std::size_t j = 0; j < shifted.size(); ++j) {
        if (j == self) {
            out[j] = 0.0;
            continue;
        }
        const double e = std::exp(-beta * shifted[j]);
        out[j] = e;
        z += e;
        weighted += e * shifted[j];
    }
    for (double& v : out) v /= z;
    return std::log(z) + beta * weighted / z;
}

}  // namespace

NeighborhoodDistribution supervisory_sne(const Matrix& x, double perplexity) {
    const std::size_t n = x.rows();
    if (n < 3) throw DimensionError("supervisory_sne needs N >= 3");
    if (!(perplexity >= 2.0 && perplexity <= static_cast<double>(n - 1))) {
        throw PreconditionError("perplexity must lie in [2, N-1], got " +
                                std::to_string(perplexity));
    }
    if (!x.all_finite()) throw DomainError("input features have non-finite entries");

    constexpr int kMaxIterations = 64;
    constexpr double kTolerance = 1e-6;
    const double target = std::log(perplexity);

    Matrix p(n, n);
    std::vector<double> shifted(n);
    for (std::size_t i = 0; i < n; ++i) {
        double lo_d = std::numeric_limits<double>::infinity();
        double hi_d = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            shifted[j] = j == i ? 0.0 : squared_distance(x.row(i), x.row(j));
            if (j != i) {
                lo_d = std::min(lo_d, shifted[j]);
                hi_d = std::max(hi_d, shifted[j]);
            }
        }
        auto out = p.row(i);
        // Softmax is invariant to the shift; it keeps exp() in range.
        for (std::size_t j = 0; j < n; ++j) shifted[j] = j == i ? 0.0 : shifted[j] - lo_d;

        if (hi_d - lo_d <= 1e-12 * std::max(1.0, hi_d)) {
            // Equidistant neighbors: every bandwidth gives the uniform row.
            for (std::size_t j = 0; j < n; ++j) out[j] = j == i ? 0.0 : 1.0 / double(n - 1);
            continue;
        }

        double beta = 0.0;
        double beta_lo = 0.0;
        double beta_hi = std::numeric_limits<double>::infinity();
        const double spread = (hi_d - lo_d);
        bool converged = false;
        for (int it = 0; it < kMaxIterations; ++it) {
            const double h = gaussian_row(shifted, i, beta, out);
            if (std::abs(std::exp(h) - perplexity) < kTolerance) {
                converged = true;
                break;
            }
            if (h > target) {
                beta_lo = beta;
                beta = std::isinf(beta_hi) ? (beta == 0.0 ? 1.0 / spread : beta * 2.0)
                                           : 0.5 * (beta + beta_hi);
            } else {
                beta_hi = beta;
                beta = 0.5 * (beta_lo + beta_hi);
            }
        }
        if (!converged) {
            throw NumericalError("perplexity bisection did not converge for row " +
                                     std::to_string(i),
                                 i);
        }
    }
    return {std::move(p), DistributionRole::Supervisory};
}

NeighborhoodDistribution supervisory_labels(std::span<const int> labels) {
    const std::size_t n = labels.size();
    if (n < 2) throw DimensionError("supervisory_labels needs N >= 2");
    std::map<int, std::size_t> counts;
    for (int l : labels) ++counts[l];
    for (const auto& [label, count] : counts) {
        if (count < 2) {
            throw PreconditionError("class " + std::to_string(label) +
                                    " has a single member in the batch");
        }
    }
    Matrix p(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        const double w = 1.0 / static_cast<double>(counts[labels[i]] - 1);
        for (std::size_t j = 0; j < n; ++j) {
            if (j != i && labels[j] == labels[i]) p(i, j) = w;
        }
    }
    return {std::move(p), DistributionRole::Supervisory};
}

std::vector<std::vector<std::size_t>> nearest_neighbors(const Matrix& x, std::size_t k) {
    const std::size_t n = x.rows();
    if (k < 1 || k + 1 > n) {
        throw PreconditionError("k must lie in [1, N-1], got " + std::to_string(k));
    }
    std::vector<std::vector<std::size_t>> result(n);
    std::vector<std::pair<double, std::size_t>> cand;
    cand.reserve(n - 1);
    for (std::size_t i = 0; i < n; ++i) {
        cand.clear();
        for (std::size_t j = 0; j < n; ++j) {
            if (j != i) cand.emplace_back(squared_distance(x.row(i), x.row(j)), j);
        }
        std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(k), cand.end());
        result[i].reserve(k);
        for (std::size_t r = 0; r < k; ++r) result[i].push_back(cand[r].second);
    }
    return result;
}

NeighborhoodDistribution supervisory_knn(const Matrix& x, std::size_t k) {
    const auto nbrs = nearest_neighbors(x, k);
    Matrix p(x.rows(), x.rows());
    const double w = 1.0 / static_cast<double>(k);
    for (std::size_t i = 0; i < nbrs.size(); ++i) {
        for (std::size_t j : nbrs[i]) p(i, j) = w;
    }
    return {std::move(p), DistributionRole::Supervisory};
}

NeighborhoodDistribution cluster_transition(const Matrix& assignments) {
    const std::size_t n = assignments.rows();
    if (n < 2) throw DimensionError("cluster_transition needs N >= 2");
    for (std::size_t i = 0; i < n; ++i) {
        double sum = 0.0;
        for (double v : assignments.row(i)) {
            if (!(v >= 0.0)) throw DomainError("assignment row " + std::to_string(i) + " is negative");
            sum += v;
        }
        if (std::abs(sum - 1.0) > kRowSumTolerance) {
            throw DomainError("assignment row " + std::to_string(i) + " is not on the simplex");
        }
    }
    Matrix q = matmul_nt(assignments, assignments);
    for (std::size_t i = 0; i < n; ++i) {
        q(i, i) = 0.0;
        double total = 0.0;
        for (double v : q.row(i)) total += v;
        if (!(total > 0.0)) {
            throw NumericalError("cluster transition row " + std::to_string(i) +
                                     " has zero overlap with every other point",
                                 i);
        }
        for (double& v : q.row(i)) v /= total;
    }
    return {std::move(q), DistributionRole::Learned};
}

Matrix cluster_transition_grad(const Matrix& assignments, const NeighborhoodDistribution& q,
                               const Matrix& dL_dq) {
    const std::size_t n = assignments.rows();
    if (q.size() != n || dL_dq.rows() != n || dL_dq.cols() != n) {
        throw DimensionError("cluster_transition_grad: shapes disagree");
    }
    // q_ij = a_ij / S_i, a_ij = <phi_i, phi_j>. dL/da_ij = (g_ij - sum_k q_ik g_ik) / S_i.
    // S_i = <phi_i, sum_j phi_j> - <phi_i, phi_i>.
    std::vector<double> colsum(assignments.cols(), 0.0);
    for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t c = 0; c < assignments.cols(); ++c) colsum[c] += assignments(j, c);
    }
    Matrix da(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto phi = assignments.row(i);
        const double total = dot(phi, colsum) - dot(phi, phi);
        double mean = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            if (j != i) mean += q(i, j) * dL_dq(i, j);
        }
        for (std::size_t j = 0; j < n; ++j) {
            if (j != i) da(i, j) = (dL_dq(i, j) - mean) / total;
        }
    }
    // a is symmetric, so phi_i collects (da + da^T) phi.
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const double s = da(i, j) + da(j, i);
            da(i, j) = s;
            da(j, i) = s;
        }
    }
    return matmul(da, assignments);
}

}  // namespace bicon
