#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "bicon/matrix.hpp"

namespace bicon {

/// counts(predicted, true) after mapping both label alphabets to dense
/// indices in ascending order of label value.
struct ConfusionMatrix {
    std::vector<int> predicted_labels;
    std::vector<int> true_labels;
    std::vector<std::vector<std::int64_t>> counts;
    std::int64_t total = 0;
};

ConfusionMatrix confusion_matrix(std::span<const int> pred, std::span<const int> truth);

/// Optimal one-to-one matching of predicted clusters to true classes.
/// mapping[p] is the dense true-class index matched to dense predicted
/// index p, or -1 when p is left unmatched (more clusters than classes).
struct Assignment {
    std::vector<int> mapping;
    std::int64_t matched = 0;
};

/// Maximum-weight assignment on a rectangular count matrix, padded square
/// with zeros and solved exactly by the O(n^3) shortest augmenting path
/// method with row/column potentials.
Assignment max_weight_assignment(const std::vector<std::vector<std::int64_t>>& weights);

/// Fraction of points correctly labeled after the best cluster-to-class
/// matching. Throws DimensionError on empty or mismatched inputs.
double hungarian_accuracy(std::span<const int> pred, std::span<const int> truth);

/// Euclidean k-NN vote. Distance ties go to the smaller training index;
/// vote ties go to the smallest class id.
std::vector<int> knn_predict(const Matrix& train_z, std::span<const int> train_y,
                             const Matrix& test_z, std::size_t k);
double knn_accuracy(const Matrix& train_z, std::span<const int> train_y, const Matrix& test_z,
                    std::span<const int> test_y, std::size_t k = 7);

struct LinearProbeOptions {
    std::size_t epochs = 200;
    double lr = 1e-2;
    std::uint64_t seed = 0;
};

/// Trains a softmax linear classifier on frozen features with full-batch
/// Adam and returns top-1 accuracy on the test split.
double linear_probe(const Matrix& train_z, std::span<const int> train_y, const Matrix& test_z,
                    std::span<const int> test_y, const LinearProbeOptions& options = {});

/// Mean silhouette coefficient with Euclidean distances. Points alone in
/// their cluster score 0, as do points with a = b = 0.
double silhouette(const Matrix& z, std::span<const int> labels);

struct KMeansResult {
    std::vector<int> labels;
    Matrix centers;
    double inertia = 0.0;
};

/// Lloyd's algorithm with k-means++ seeding; best of `restarts` by inertia.
KMeansResult kmeans(const Matrix& x, std::size_t k, std::uint64_t seed, std::size_t restarts = 5,
                    std::size_t max_iterations = 100);

}  // namespace bicon
