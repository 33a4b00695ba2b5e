#include "bicon/model.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>

#include "bicon/binary_io.hpp"
#include "bicon/errors.hpp"

namespace bicon {

namespace {

constexpr std::string_view kCheckpointMagic = "BICN1";

std::string shape(const Matrix& m) {
    return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

void require_shape(const Matrix& m, std::size_t rows, std::size_t cols, const char* what) {
    if (m.rows() != rows || m.cols() != cols) {
        throw DimensionError(std::string(what) + " has shape " + shape(m) + ", expected " +
                             std::to_string(rows) + "x" + std::to_string(cols));
    }
}

void add_bias(Matrix& m, const Matrix& bias) {
    for (std::size_t i = 0; i < m.rows(); ++i) {
        auto r = m.row(i);
        for (std::size_t j = 0; j < m.cols(); ++j) r[j] += bias(0, j);
    }
}

Matrix column_sums(const Matrix& m) {
    Matrix s(1, m.cols());
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j) s(0, j) += m(i, j);
    return s;
}

void expect_kind(const Checkpoint& ckpt, ModelKind kind, std::size_t tensors) {
    if (ckpt.kind != kind) {
        throw DimensionError("checkpoint holds a " + std::string(to_string(ckpt.kind)) +
                             ", expected " + std::string(to_string(kind)));
    }
    if (ckpt.tensors.size() != tensors) {
        throw DimensionError("checkpoint has " + std::to_string(ckpt.tensors.size()) +
                             " tensors, expected " + std::to_string(tensors));
    }
}

}  // namespace

std::string_view to_string(ModelKind kind) {
    switch (kind) {
        case ModelKind::FreeEmbedding: return "free_embedding";
        case ModelKind::LinearEncoder: return "linear_encoder";
        case ModelKind::Mlp1Encoder: return "mlp1_encoder";
        case ModelKind::ClusterHead: return "cluster_head";
    }
    return "unknown";
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open " + path.string() + " for writing");
    os.write(kCheckpointMagic.data(), static_cast<std::streamsize>(kCheckpointMagic.size()));
    binary::write_u64(os, static_cast<std::uint64_t>(ckpt.kind));
    binary::write_u64(os, ckpt.tensors.size());
    for (const auto& t : ckpt.tensors) {
        binary::write_u64(os, t.rows());
        binary::write_u64(os, t.cols());
    }
    for (const auto& t : ckpt.tensors)
        for (double v : t.data()) binary::write_f64(os, v);
    if (!os) throw IoError("write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path.string());
    binary::expect_magic(is, kCheckpointMagic);
    Checkpoint ckpt;
    const std::uint64_t kind = binary::read_u64(is);
    if (kind < 1 || kind > 4) throw IoError("unknown model kind tag " + std::to_string(kind));
    ckpt.kind = static_cast<ModelKind>(kind);
    const std::uint64_t count = binary::read_u64(is);
    if (count > 64) throw IoError("implausible tensor count " + std::to_string(count));
    std::vector<std::pair<std::uint64_t, std::uint64_t>> shapes(count);
    for (auto& [r, c] : shapes) {
        r = binary::read_u64(is);
        c = binary::read_u64(is);
        if (r > (1u << 28) || c > (1u << 28)) throw IoError("implausible tensor shape");
    }
    for (const auto& [r, c] : shapes) {
        Matrix t(r, c);
        for (double& v : t.data()) v = binary::read_f64(is);
        ckpt.tensors.push_back(std::move(t));
    }
    return ckpt;
}

double glorot_bound(std::size_t fan_in, std::size_t fan_out) {
    return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

Matrix glorot_uniform(std::size_t fan_in, std::size_t fan_out, Pcg32& rng, double gain) {
    const double a = gain * glorot_bound(fan_in, fan_out);
    Matrix w(fan_in, fan_out);
    for (double& v : w.data()) v = rng.uniform(-a, a);
    return w;
}

// FreeEmbedding

FreeEmbedding::FreeEmbedding(Matrix table) : table_(std::move(table)) {
    if (!table_.all_finite()) throw DomainError("embedding table has non-finite entries");
}

FreeEmbedding FreeEmbedding::gaussian(std::size_t rows, std::size_t dim, Pcg32& rng,
                                      double stddev) {
    Matrix t(rows, dim);
    for (double& v : t.data()) v = rng.normal(0.0, stddev);
    return FreeEmbedding(std::move(t));
}

Checkpoint FreeEmbedding::to_checkpoint() const { return {ModelKind::FreeEmbedding, {table_}}; }

FreeEmbedding FreeEmbedding::from_checkpoint(const Checkpoint& ckpt) {
    expect_kind(ckpt, ModelKind::FreeEmbedding, 1);
    return FreeEmbedding(ckpt.tensors[0]);
}

// Encoder

std::string_view to_string(EncoderKind kind) {
    return kind == EncoderKind::Linear ? "linear" : "mlp1";
}

EncoderKind parse_encoder_kind(std::string_view name) {
    if (name == "linear") return EncoderKind::Linear;
    if (name == "mlp1") return EncoderKind::Mlp1;
    throw ConfigError("unknown encoder '" + std::string(name) + "' (expected linear or mlp1)");
}

Encoder::Encoder(EncoderKind kind, Matrix w1, Matrix b1, Matrix w2, Matrix b2)
    : kind_(kind), w1_(std::move(w1)), b1_(std::move(b1)), w2_(std::move(w2)), b2_(std::move(b2)) {
    require_shape(b1_, 1, w1_.cols(), "b1");
    if (kind_ == EncoderKind::Mlp1) {
        if (w2_.rows() != w1_.cols()) {
            throw DimensionError("W2 has " + std::to_string(w2_.rows()) + " rows, expected " +
                                 std::to_string(w1_.cols()));
        }
        require_shape(b2_, 1, w2_.cols(), "b2");
    } else if (!w2_.empty() || !b2_.empty()) {
        throw DimensionError("linear encoder takes no second layer");
    }
    for (const Matrix* p : parameters()) {
        if (!p->all_finite()) throw DomainError("encoder parameters must be finite");
    }
}

Encoder Encoder::linear(std::size_t in, std::size_t out, Pcg32& rng, double gain) {
    Matrix w1 = glorot_uniform(in, out, rng, gain);
    return Encoder(EncoderKind::Linear, std::move(w1), Matrix(1, out));
}

Encoder Encoder::mlp1(std::size_t in, std::size_t hidden, std::size_t out, Pcg32& rng,
                      double gain) {
    Matrix w1 = glorot_uniform(in, hidden, rng, gain);
    Matrix w2 = glorot_uniform(hidden, out, rng, gain);
    return Encoder(EncoderKind::Mlp1, std::move(w1), Matrix(1, hidden), std::move(w2),
                   Matrix(1, out));
}

std::size_t Encoder::output_dim() const noexcept {
    return kind_ == EncoderKind::Linear ? w1_.cols() : w2_.cols();
}

void Encoder::check_input(const Matrix& x) const {
    if (x.cols() != input_dim()) {
        throw DimensionError("encoder expects " + std::to_string(input_dim()) +
                             " input columns, got " + std::to_string(x.cols()));
    }
}

Matrix Encoder::forward(const Matrix& x) const {
    check_input(x);
    Matrix h = matmul(x, w1_);
    add_bias(h, b1_);
    if (kind_ == EncoderKind::Linear) return h;
    for (double& v : h.data()) v = std::tanh(v);
    Matrix out = matmul(h, w2_);
    add_bias(out, b2_);
    return out;
}

Gradients Encoder::backward(const Matrix& x, const Matrix& dL_dout) const {
    check_input(x);
    if (dL_dout.rows() != x.rows() || dL_dout.cols() != output_dim()) {
        throw DimensionError("dL/dout has shape " + shape(dL_dout) + ", expected " +
                             std::to_string(x.rows()) + "x" + std::to_string(output_dim()));
    }
    Gradients g;
    if (kind_ == EncoderKind::Linear) {
        g.params.push_back(matmul_tn(x, dL_dout));
        g.params.push_back(column_sums(dL_dout));
        g.input = matmul_nt(dL_dout, w1_);
        return g;
    }
    Matrix h = matmul(x, w1_);
    add_bias(h, b1_);
    for (double& v : h.data()) v = std::tanh(v);

    Matrix dh = matmul_nt(dL_dout, w2_);
    for (std::size_t k = 0; k < dh.size(); ++k) {
        const double t = h.data()[k];
        dh.data()[k] *= 1.0 - t * t;
    }
    g.params.push_back(matmul_tn(x, dh));
    g.params.push_back(column_sums(dh));
    g.params.push_back(matmul_tn(h, dL_dout));
    g.params.push_back(column_sums(dL_dout));
    g.input = matmul_nt(dh, w1_);
    return g;
}

std::vector<Matrix*> Encoder::parameters() {
    if (kind_ == EncoderKind::Linear) return {&w1_, &b1_};
    return {&w1_, &b1_, &w2_, &b2_};
}

std::vector<const Matrix*> Encoder::parameters() const {
    if (kind_ == EncoderKind::Linear) return {&w1_, &b1_};
    return {&w1_, &b1_, &w2_, &b2_};
}

std::vector<std::string> Encoder::parameter_names() const {
    if (kind_ == EncoderKind::Linear) return {"W1", "b1"};
    return {"W1", "b1", "W2", "b2"};
}

Checkpoint Encoder::to_checkpoint() const {
    if (kind_ == EncoderKind::Linear) return {ModelKind::LinearEncoder, {w1_, b1_}};
    return {ModelKind::Mlp1Encoder, {w1_, b1_, w2_, b2_}};
}

Encoder Encoder::from_checkpoint(const Checkpoint& ckpt) {
    if (ckpt.kind == ModelKind::LinearEncoder) {
        expect_kind(ckpt, ModelKind::LinearEncoder, 2);
        return Encoder(EncoderKind::Linear, ckpt.tensors[0], ckpt.tensors[1]);
    }
    expect_kind(ckpt, ModelKind::Mlp1Encoder, 4);
    return Encoder(EncoderKind::Mlp1, ckpt.tensors[0], ckpt.tensors[1], ckpt.tensors[2],
                   ckpt.tensors[3]);
}

// ClusterHead

ClusterHead::ClusterHead(Matrix weights, Matrix bias)
    : weights_(std::move(weights)), bias_(std::move(bias)) {
    require_shape(bias_, 1, weights_.cols(), "cluster head bias");
    if (weights_.cols() < 2) throw DimensionError("cluster head needs at least 2 outputs");
    if (!weights_.all_finite() || !bias_.all_finite()) {
        throw DomainError("cluster head parameters must be finite");
    }
}

ClusterHead ClusterHead::glorot(std::size_t in, std::size_t clusters, Pcg32& rng, double gain) {
    return ClusterHead(glorot_uniform(in, clusters, rng, gain), Matrix(1, clusters));
}

Matrix softmax(const Matrix& logits) {
    Matrix out = logits;
    for (std::size_t i = 0; i < out.rows(); ++i) {
        auto r = out.row(i);
        const double mx = *std::max_element(r.begin(), r.end());
        double z = 0.0;
        for (double& v : r) {
            v = std::exp(v - mx);
            z += v;
        }
        for (double& v : r) v /= z;
    }
    return out;
}

Matrix ClusterHead::logits(const Matrix& x) const {
    if (x.cols() != input_dim()) {
        throw DimensionError("cluster head expects " + std::to_string(input_dim()) +
                             " input columns, got " + std::to_string(x.cols()));
    }
    Matrix l = matmul(x, weights_);
    add_bias(l, bias_);
    return l;
}

Matrix ClusterHead::forward(const Matrix& x) const { return softmax(logits(x)); }

Gradients ClusterHead::backward_logits(const Matrix& x, const Matrix& dL_dlogits) const {
    require_shape(dL_dlogits, x.rows(), clusters(), "dL/dlogits");
    Gradients g;
    g.params.push_back(matmul_tn(x, dL_dlogits));
    g.params.push_back(column_sums(dL_dlogits));
    g.input = matmul_nt(dL_dlogits, weights_);
    return g;
}

Gradients ClusterHead::backward(const Matrix& x, const Matrix& assignments,
                                const Matrix& dL_dassign) const {
    require_shape(assignments, x.rows(), clusters(), "assignments");
    require_shape(dL_dassign, x.rows(), clusters(), "dL/dassignments");
    Matrix dlogits(x.rows(), clusters());
    for (std::size_t i = 0; i < x.rows(); ++i) {
        const double mean = dot(assignments.row(i), dL_dassign.row(i));
        for (std::size_t c = 0; c < clusters(); ++c) {
            dlogits(i, c) = assignments(i, c) * (dL_dassign(i, c) - mean);
        }
    }
    return backward_logits(x, dlogits);
}

std::vector<int> ClusterHead::predict(const Matrix& x) const {
    const Matrix l = logits(x);
    std::vector<int> out(l.rows());
    for (std::size_t i = 0; i < l.rows(); ++i) {
        auto r = l.row(i);
        out[i] = static_cast<int>(std::max_element(r.begin(), r.end()) - r.begin());
    }
    return out;
}

Checkpoint ClusterHead::to_checkpoint() const { return {ModelKind::ClusterHead, {weights_, bias_}}; }

ClusterHead ClusterHead::from_checkpoint(const Checkpoint& ckpt) {
    expect_kind(ckpt, ModelKind::ClusterHead, 2);
    return ClusterHead(ckpt.tensors[0], ckpt.tensors[1]);
}

// Adam

void Adam::step(std::span<Matrix* const> params, std::span<const Matrix> grads) {
    if (params.size() != grads.size()) {
        throw DimensionError("adam: " + std::to_string(params.size()) + " parameters but " +
                             std::to_string(grads.size()) + " gradients");
    }
    std::size_t offset = 0;
    for (std::size_t t = 0; t < params.size(); ++t) {
        if (!params[t]->same_shape(grads[t])) {
            throw DimensionError("adam: gradient " + std::to_string(t) + " has shape " +
                                 shape(grads[t]) + ", parameter is " + shape(*params[t]));
        }
        auto g = grads[t].data();
        for (std::size_t k = 0; k < g.size(); ++k) {
            if (!std::isfinite(g[k])) {
                throw NumericalError("non-finite gradient entry", offset + k);
            }
        }
        offset += g.size();
    }
    if (m_.empty()) {
        for (const Matrix* p : params) {
            m_.emplace_back(p->rows(), p->cols());
            v_.emplace_back(p->rows(), p->cols());
        }
    } else if (m_.size() != params.size()) {
        throw DimensionError("adam: parameter count changed between steps");
    } else {
        for (std::size_t t = 0; t < params.size(); ++t) {
            if (!m_[t].same_shape(*params[t])) {
                throw DimensionError("adam: parameter shape changed between steps");
            }
        }
    }

    ++t_;
    const double bc1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
    for (std::size_t t = 0; t < params.size(); ++t) {
        auto p = params[t]->data();
        auto g = grads[t].data();
        auto m = m_[t].data();
        auto v = v_[t].data();
        for (std::size_t k = 0; k < p.size(); ++k) {
            m[k] = opt_.beta1 * m[k] + (1.0 - opt_.beta1) * g[k];
            v[k] = opt_.beta2 * v[k] + (1.0 - opt_.beta2) * g[k] * g[k];
            const double mhat = m[k] / bc1;
            const double vhat = v[k] / bc2;
            p[k] -= opt_.lr * mhat / (std::sqrt(vhat) + opt_.eps);
        }
    }
}

}  // namespace bicon
