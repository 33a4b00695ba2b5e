#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bicon/matrix.hpp"
#include "bicon/report.hpp"

namespace bicon {

enum class Generator { GaussianBlobs, ConcentricRings, File };

std::string_view to_string(Generator g);
Generator parse_generator(std::string_view name);

struct DatasetSpec {
    Generator generator = Generator::GaussianBlobs;
    std::size_t n = 300;
    std::size_t d = 10;
    std::size_t classes = 3;
    double separation = 8.0;  // in units of the per-coordinate sigma
    std::uint64_t seed = 0;
    std::string path;  // Generator::File only

    // Throws ConfigError on the first violated invariant.
    void validate() const;
};

/// Features plus integer labels in [0, classes). Labels may be empty for
/// unlabeled binary files.
struct LabeledMatrix {
    Matrix features;
    std::vector<int> labels;

    bool has_labels() const noexcept { return !labels.empty(); }
};

/// gaussian_blobs: point i belongs to class i % classes, drawn with unit
/// sigma around class means placed on a scaled simplex (classes <= d) or a
/// regular polygon in the first two coordinates (classes > d) so adjacent
/// means are `separation` apart. concentric_rings: ring c has radius
/// (c + 1) * separation with unit radial noise; extra dimensions are unit noise.
LabeledMatrix generate(const DatasetSpec& spec);

/// Dispatches on content: files starting with "BIMX1" are binary, anything
/// else is parsed as CSV with header f0..f{d-1},label.
LabeledMatrix load_matrix(const std::filesystem::path& path);
LabeledMatrix load_matrix_csv(const std::filesystem::path& path);
LabeledMatrix load_matrix_binary(const std::filesystem::path& path);

/// "BIMX1" | N | d | has_labels (all u64 LE) | float64 LE row-major | int64 labels
void save_matrix_binary(const std::filesystem::path& path, const LabeledMatrix& m);
void save_matrix_csv(const std::filesystem::path& path, const LabeledMatrix& m);

// Shortest round-trip formatting ("%.17g").
std::string format_real(double v);

std::string scatter_svg(const Matrix& points, std::span<const int> labels);
void emit_scatter_svg(const Matrix& points, std::span<const int> labels,
                      const std::filesystem::path& path);

std::string report_csv(const TrainReport& report);
void emit_report_csv(const TrainReport& report, const std::filesystem::path& path);
// Parses the emit_report_csv layout back into a report (snapshots and
// losses; the collapse flag is not stored in the CSV).
TrainReport read_report_csv(const std::filesystem::path& path);

struct MetricRow {
    std::string metric;
    double value = 0.0;
};

/// Appends rows "metric,value,config_hash,seed", writing the header first
/// when the file is new.
void append_metrics_csv(const std::filesystem::path& path, std::span<const MetricRow> rows,
                        std::uint64_t config_hash, std::uint64_t seed);

}  // namespace bicon
