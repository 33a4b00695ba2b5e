#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "bicon/matrix.hpp"

namespace bicon {

enum class KernelFamily { Angular, Distance };

std::string_view to_string(KernelFamily family);
KernelFamily parse_kernel_family(std::string_view name);

/// Similarity kernel s(z_i, z_j) scaled by C: angular uses the dot product
/// of unit-normalized rows, distance uses the negative squared distance.
class KernelSpec {
public:
    KernelSpec(KernelFamily family, double scale);

    KernelFamily family() const noexcept { return family_; }
    double scale() const noexcept { return scale_; }

private:
    KernelFamily family_;
    double scale_;
};

enum class DistributionRole { Supervisory, Learned };

// Row sums must be within this of 1 for a NeighborhoodDistribution.
inline constexpr double kRowSumTolerance = 1e-9;

/// Row-stochastic N x N matrix of transition probabilities p(j|i) or q(j|i)
/// with an identically zero diagonal. Construction validates the invariants.
class NeighborhoodDistribution {
public:
    NeighborhoodDistribution(Matrix matrix, DistributionRole role);

    const Matrix& matrix() const noexcept { return matrix_; }
    DistributionRole role() const noexcept { return role_; }
    std::size_t size() const noexcept { return matrix_.rows(); }
    std::span<const double> row(std::size_t i) const { return matrix_.row(i); }
    double operator()(std::size_t i, std::size_t j) const { return matrix_(i, j); }

private:
    Matrix matrix_;
    DistributionRole role_;
};

// Throws DomainError describing the first violated invariant.
void check_neighborhood(const Matrix& m);

// Each row scaled to unit l2 norm. Throws DomainError on a zero row.
Matrix normalize_rows(const Matrix& z);

/// Pairwise scores C * s(z_i, z_j). The diagonal is excluded from every
/// downstream softmax and is written as 0. The angular family expects rows
/// already on the unit sphere (within 1e-9).
Matrix similarity_matrix(const Matrix& z, const KernelSpec& spec);

/// Row softmax over the off-diagonal scores, max-shifted.
NeighborhoodDistribution kernel_rows(const Matrix& scores);

/// q(.|i) straight from raw embeddings: normalizes first for the angular
/// family, then similarity_matrix + kernel_rows.
NeighborhoodDistribution learned_distribution(const Matrix& z, const KernelSpec& spec);

/// Backpropagates dL/dq through kernel_rows and the similarity kernel to
/// the raw (un-normalized) embeddings. The diagonal of dL_dq is ignored.
Matrix kernel_rows_grad(const Matrix& z, const KernelSpec& spec, const Matrix& dL_dq);
// Same, reusing q = learned_distribution(z, spec) from the forward pass.
Matrix kernel_rows_grad(const Matrix& z, const KernelSpec& spec,
                        const NeighborhoodDistribution& q, const Matrix& dL_dq);

/// Classic SNE conditionals p(j|i) ∝ exp(-|x_i - x_j|^2 / (2 sigma_i^2)),
/// with sigma_i bisected so that exp(H_i) matches `perplexity`.
NeighborhoodDistribution supervisory_sne(const Matrix& x, double perplexity);

// Entropy (nats) of one row, 0 ln 0 = 0.
double row_entropy(std::span<const double> row);

/// p(j|i) uniform over the other members of i's class.
NeighborhoodDistribution supervisory_labels(std::span<const int> labels);

/// p(j|i) = 1/k over the k nearest neighbors of x_i (Euclidean, ties to the
/// smaller index).
NeighborhoodDistribution supervisory_knn(const Matrix& x, std::size_t k);

// The k nearest neighbor indices of every row, nearest first.
std::vector<std::vector<std::size_t>> nearest_neighbors(const Matrix& x, std::size_t k);

/// q(j|i) = <phi_i, phi_j> / sum_{k != i} <phi_i, phi_k> for a row-stochastic
/// assignment matrix phi. Throws NumericalError carrying the row index when
/// a row has zero total overlap.
NeighborhoodDistribution cluster_transition(const Matrix& assignments);

/// dL/dphi given dL/dq for q = cluster_transition(phi).
Matrix cluster_transition_grad(const Matrix& assignments, const NeighborhoodDistribution& q,
                               const Matrix& dL_dq);

// dL/ds from dL/dq through a zero-diagonal row softmax.
Matrix softmax_rows_backward(const NeighborhoodDistribution& q, const Matrix& dL_dq);

}  // namespace bicon
