#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "bicon/data_io.hpp"
#include "bicon/trainers.hpp"

namespace bicon {

// Stable process exit codes.
enum ExitCode : int {
    kExitOk = 0,
    kExitGradcheckFailed = 1,
    kExitUsage = 2,
    kExitNumerical = 3,
};

/// Everything a run needs: the loss/trainer settings and the dataset.
struct RunConfig {
    LossConfig loss;
    DatasetSpec data;
};

/// Parses a flat JSON object. Unknown keys, wrong value types and invalid
/// values throw ConfigError. Missing keys take their defaults; a missing
/// kernel_scale resolves to default_kernel_scale(task, kernel).
RunConfig parse_run_config(std::string_view json_text);

/// Fully resolved, key-sorted JSON text; identical for configs that mean the same run.
std::string canonical_config(const RunConfig& config, int indent = -1);

std::uint64_t fnv1a64(std::string_view bytes);
// FNV-1a 64 of canonical_config(config).
std::uint64_t config_hash(const RunConfig& config);
std::string hash_hex(std::uint64_t hash);

/// One expanded sweep point: overrides in declaration order plus the
/// directory name derived from them.
struct SweepPoint {
    std::vector<std::pair<std::string, std::string>> overrides;
    std::string directory;
};

/// Cartesian product of "key=v1,v2,..." specs; the first spec varies slowest.
std::vector<SweepPoint> expand_sweep(const std::vector<std::string>& specs);

/// Entry point behind the `bicon` executable. args excludes argv[0].
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace bicon
