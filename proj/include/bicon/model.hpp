#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bicon/matrix.hpp"
#include "bicon/rng.hpp"

namespace bicon {

// Tags written into checkpoint headers. Values are part of the file format.
enum class ModelKind : std::uint64_t {
    FreeEmbedding = 1,
    LinearEncoder = 2,
    Mlp1Encoder = 3,
    ClusterHead = 4,
};

std::string_view to_string(ModelKind kind);

struct Checkpoint {
    ModelKind kind = ModelKind::FreeEmbedding;
    std::vector<Matrix> tensors;
};

/// Layout, all integers 64-bit little-endian:
///   "BICN1" | kind | tensor count | (rows, cols) per tensor | float64 LE data, row-major
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Parameter gradients in parameters() order, plus dL/dinput when the
/// model has an input.
struct Gradients {
    std::vector<Matrix> params;
    Matrix input;
};

// Glorot/Xavier uniform bound sqrt(6 / (fan_in + fan_out)).
double glorot_bound(std::size_t fan_in, std::size_t fan_out);
Matrix glorot_uniform(std::size_t fan_in, std::size_t fan_out, Pcg32& rng, double gain = 1.0);

/// Embedding table trained directly (nonparametric SNE).
class FreeEmbedding {
public:
    explicit FreeEmbedding(Matrix table);
    static FreeEmbedding gaussian(std::size_t rows, std::size_t dim, Pcg32& rng,
                                  double stddev = 1e-2);

    const Matrix& table() const noexcept { return table_; }
    Matrix& table() noexcept { return table_; }

    std::vector<Matrix*> parameters() { return {&table_}; }
    std::vector<const Matrix*> parameters() const { return {&table_}; }
    static std::vector<std::string> parameter_names() { return {"table"}; }

    Checkpoint to_checkpoint() const;
    static FreeEmbedding from_checkpoint(const Checkpoint& ckpt);

private:
    Matrix table_;
};

enum class EncoderKind { Linear, Mlp1 };

std::string_view to_string(EncoderKind kind);
EncoderKind parse_encoder_kind(std::string_view name);

/// linear: x W1 + b1.  mlp1: tanh(x W1 + b1) W2 + b2.
/// Biases are 1 x width row vectors.
class Encoder {
public:
    Encoder(EncoderKind kind, Matrix w1, Matrix b1, Matrix w2 = {}, Matrix b2 = {});

    static Encoder linear(std::size_t in, std::size_t out, Pcg32& rng, double gain = 1.0);
    static Encoder mlp1(std::size_t in, std::size_t hidden, std::size_t out, Pcg32& rng,
                        double gain = 1.0);

    EncoderKind kind() const noexcept { return kind_; }
    std::size_t input_dim() const noexcept { return w1_.rows(); }
    std::size_t output_dim() const noexcept;

    Matrix forward(const Matrix& x) const;
    // Exact chain rule; recomputes the hidden activations from x.
    Gradients backward(const Matrix& x, const Matrix& dL_dout) const;

    std::vector<Matrix*> parameters();
    std::vector<const Matrix*> parameters() const;
    std::vector<std::string> parameter_names() const;

    Checkpoint to_checkpoint() const;
    static Encoder from_checkpoint(const Checkpoint& ckpt);

private:
    void check_input(const Matrix& x) const;

    EncoderKind kind_;
    Matrix w1_, b1_, w2_, b2_;
};

/// Linear layer followed by a row softmax; rows of the output are soft
/// cluster assignments (or class probabilities for a linear probe).
class ClusterHead {
public:
    ClusterHead(Matrix weights, Matrix bias);
    static ClusterHead glorot(std::size_t in, std::size_t clusters, Pcg32& rng, double gain = 1.0);

    std::size_t input_dim() const noexcept { return weights_.rows(); }
    std::size_t clusters() const noexcept { return weights_.cols(); }

    Matrix logits(const Matrix& x) const;
    Matrix forward(const Matrix& x) const;
    // Gradients from dL/d(assignments); `assignments` is forward(x).
    Gradients backward(const Matrix& x, const Matrix& assignments, const Matrix& dL_dassign) const;
    // Gradients from dL/d(logits) directly.
    Gradients backward_logits(const Matrix& x, const Matrix& dL_dlogits) const;
    std::vector<int> predict(const Matrix& x) const;

    std::vector<Matrix*> parameters() { return {&weights_, &bias_}; }
    std::vector<const Matrix*> parameters() const { return {&weights_, &bias_}; }
    static std::vector<std::string> parameter_names() { return {"weights", "bias"}; }

    Checkpoint to_checkpoint() const;
    static ClusterHead from_checkpoint(const Checkpoint& ckpt);

private:
    Matrix weights_;
    Matrix bias_;
};

// Numerically stable row softmax.
Matrix softmax(const Matrix& logits);

struct AdamOptions {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Adam with bias correction. Moment buffers are sized on the first step
/// and must keep matching the parameter shapes afterwards.
class Adam {
public:
    explicit Adam(AdamOptions options = {}) : opt_(options) {}

    // Throws NumericalError (index = flat element position across tensors)
    // if any gradient entry is non-finite; parameters are left untouched.
    void step(std::span<Matrix* const> params, std::span<const Matrix> grads);

    std::size_t steps() const noexcept { return t_; }
    const AdamOptions& options() const noexcept { return opt_; }

private:
    AdamOptions opt_;
    std::size_t t_ = 0;
    std::vector<Matrix> m_;
    std::vector<Matrix> v_;
};

}  // namespace bicon
