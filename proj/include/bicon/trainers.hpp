#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bicon/divergence.hpp"
#include "bicon/errors.hpp"
#include "bicon/kernels.hpp"
#include "bicon/matrix.hpp"
#include "bicon/model.hpp"
#include "bicon/report.hpp"

namespace bicon {

enum class Task { Sne, Cluster, Supcon };
enum class SneMode { Free, Parametric };

std::string_view to_string(Task task);
Task parse_task(std::string_view name);
std::string_view to_string(SneMode mode);
SneMode parse_sne_mode(std::string_view name);

// Default kernel scale C for a task and kernel family.
double default_kernel_scale(Task task, KernelFamily family);

struct LossConfig {
    Task task = Task::Sne;
    Divergence divergence = Divergence::KL;
    KernelSpec kernel{KernelFamily::Distance, 1.0};
    std::size_t batch_size = 256;
    std::size_t epochs = 100;
    double lr = 1e-3;
    std::uint64_t seed = 0;
    std::uint64_t stream = 0;  // RNG stream, distinct per sweep grid point

    // sne
    double perplexity = 30.0;
    SneMode mode = SneMode::Free;
    double init_stddev = 1e-2;  // free-embedding init

    // parametric sne / supcon encoder
    EncoderKind encoder = EncoderKind::Mlp1;
    std::size_t hidden = 64;
    std::size_t out_dim = 2;
    double init_gain = 1.0;  // multiplies the Glorot bound

    // cluster
    std::size_t knn_k = 10;
    std::size_t clusters = 10;
    std::size_t restarts = 1;  // independent inits; the lowest full-data loss wins

    // evaluation during training
    std::size_t eval_every = 25;
    std::size_t eval_k = 7;
    double collapse_low = 1.5;   // x chance
    double collapse_high = 3.0;  // x chance
    std::size_t collapse_window = 3;

    std::optional<double> clip_norm;  // global l2 clip, off by default

    // Throws ConfigError naming the violated constraint.
    void validate() const;
};

/// Raised when a training loss or gradient stops being finite.
class TrainingAborted : public NumericalError {
public:
    TrainingAborted(const std::string& what, std::size_t step, Divergence divergence)
        : NumericalError(what, step), divergence_(divergence) {}

    std::size_t step() const noexcept { return index(); }
    Divergence divergence() const noexcept { return divergence_; }

private:
    Divergence divergence_;
};

struct LossAndGrad {
    double loss = 0.0;
    Matrix dL_dq;
};

/// Mean over rows of D(p(.|i) || q(.|i)) with uniform p(i); dL/dq row i is
/// dD/dq scaled by 1/N, diagonal forced to 0.
LossAndGrad loss_and_grad(Divergence kind, const NeighborhoodDistribution& p,
                          const NeighborhoodDistribution& q);
// Restricts the mean to `rows`; other rows contribute nothing and get a zero gradient.
LossAndGrad loss_and_grad(Divergence kind, const NeighborhoodDistribution& p,
                          const NeighborhoodDistribution& q, std::span<const std::size_t> rows);

/// Supervisory distribution restricted to a batch: entries among `index`
/// renormalized per row. Rows left with no mass are filled uniformly and
/// omitted from `active`.
struct BatchSupervision {
    NeighborhoodDistribution p;
    std::vector<std::size_t> active;
};
BatchSupervision restrict_supervision(const NeighborhoodDistribution& p,
                                      std::span<const std::size_t> index);

/// Loss plus gradient for every trainable tensor, in parameters() order.
struct Objective {
    double loss = 0.0;
    std::vector<Matrix> grads;
};

// Free-embedding SNE: q from the kernel applied to the table itself.
Objective free_embedding_objective(Divergence kind, const KernelSpec& kernel,
                                   const NeighborhoodDistribution& p, const FreeEmbedding& emb);
// Encoder-produced embeddings (parametric SNE, SupCon).
Objective encoder_objective(Divergence kind, const KernelSpec& kernel,
                            const NeighborhoodDistribution& p, const Encoder& encoder,
                            const Matrix& x);
// Cluster head + cluster_transition (PMI-style clustering).
Objective cluster_objective(Divergence kind, const NeighborhoodDistribution& p,
                            std::span<const std::size_t> active, const ClusterHead& head,
                            const Matrix& x);

/// Every `every`-th index (i % every == every - 1) goes to the test side.
struct Split {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};
Split holdout_split(std::size_t n, std::size_t every = 5);

// Features the kNN/probe metrics see: raw outputs, unit-normalized for the
// angular kernel.
Matrix metric_features(const Matrix& z, KernelFamily family);

// kNN accuracy on the holdout split of (features, labels).
double holdout_knn(const Matrix& features, std::span<const int> labels, std::size_t k);

struct SneResult {
    TrainReport report;
    Matrix embedding;
    Checkpoint checkpoint;
};

/// Full-batch SNE. p from supervisory_sne(x) once; q from the kernel on a
/// free table (optionally starting at `init`) or on encoder(x). Labels, if
/// given, are only used for metric snapshots (knn, silhouette).
SneResult run_sne(const LossConfig& config, const Matrix& x, SneMode mode,
                  std::span<const int> labels = {}, const Matrix* init = nullptr);

struct ClusterResult {
    TrainReport report;  // of the chosen restart
    Matrix assignments;
    ClusterHead head;
    std::size_t restart = 0;
    double objective = 0.0;  // full-data loss of the chosen restart
    std::vector<double> restart_objectives;
};

// Loss of the head on every row at once, with the full supervisory p.
double full_cluster_objective(Divergence kind, const NeighborhoodDistribution& p,
                              const ClusterHead& head, const Matrix& x);

/// p = supervisory_knn(x) fixed; cluster head trained on shuffled
/// mini-batches with per-batch renormalized p. With restarts > 1 the head
/// is re-initialized that many times and the run with the lowest full-data
/// loss is kept. `true_labels` feed the hungarian metric snapshots only.
ClusterResult run_cluster(const LossConfig& config, const Matrix& x,
                          std::span<const int> true_labels = {},
                          const ClusterHead* init = nullptr);

struct SupconResult {
    TrainReport report;
    Encoder encoder;
};

/// Class-balanced mini-batches from the training split; kNN on the
/// holdout split tracked every eval_every steps and fed to the collapse
/// detector.
SupconResult run_supcon(const LossConfig& config, const Matrix& x, std::span<const int> labels);

struct SpikeStats {
    double max = 0.0;
    double median = 0.0;
    double ratio = 1.0;
};

struct SpikeSummary {
    std::vector<std::string> tensor_names;
    std::vector<SpikeStats> per_tensor;
    SpikeStats total;  // over the l2 norm across all tensors
};

SpikeStats spike_stats(std::span<const double> series);
/// Spike statistics over the first `window` steps of the report.
SpikeSummary grad_norm_series(const TrainReport& report, std::size_t window = 50);

}  // namespace bicon
