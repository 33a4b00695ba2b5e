#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace bicon {

struct MetricSnapshot {
    std::size_t step = 0;
    // Aligned with TrainReport::metric_names; NaN where a metric was not taken.
    std::vector<double> values;
};

/// Per-step training trace: loss, l2 gradient norm of every parameter
/// tensor (before any clipping), and periodic metric snapshots.
struct TrainReport {
    std::vector<std::string> tensor_names;
    std::vector<double> losses;
    std::vector<std::vector<double>> grad_norms;  // [step][tensor]
    std::vector<std::string> metric_names;
    std::vector<MetricSnapshot> snapshots;
    bool collapsed = false;

    std::size_t steps() const noexcept { return losses.size(); }

    // Value of `name` in the most recent snapshot that recorded it.
    std::optional<double> final_metric(const std::string& name) const {
        for (std::size_t m = 0; m < metric_names.size(); ++m) {
            if (metric_names[m] != name) continue;
            for (auto it = snapshots.rbegin(); it != snapshots.rend(); ++it) {
                if (m < it->values.size() && !std::isnan(it->values[m])) return it->values[m];
            }
        }
        return std::nullopt;
    }
};

}  // namespace bicon
