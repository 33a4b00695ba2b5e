#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "bicon/matrix.hpp"

namespace bicon {

enum class GradcheckScope { Divergences, Kernels, Model, End2End };

std::string_view to_string(GradcheckScope scope);
GradcheckScope parse_gradcheck_scope(std::string_view name);

struct GradcheckOptions {
    double step = 1e-6;        // central-difference h
    double tolerance = 1e-5;   // pass threshold on the relative error
    // Entries smaller than floor_fraction * (largest numeric entry of the
    // instance) are compared against that floor instead of their own size.
    double floor_fraction = 1e-3;
    // Test hook: components whose name contains this string get their
    // analytic gradient perturbed before comparison.
    std::string corrupt;
};

/// One compared tensor. The relative error of an entry is
/// |analytic - numeric| / max(|analytic|, |numeric|, floor_fraction * scale),
/// where scale is the largest |numeric| entry across every tensor of the
/// same instance.
struct GradcheckEntry {
    std::string component;
    double worst_error = 0.0;
    std::size_t worst_index = 0;  // row-major position in the tensor
    bool passed = true;
};

struct GradcheckReport {
    std::vector<GradcheckEntry> entries;

    bool passed() const;
    const GradcheckEntry* worst() const;
};

// Central differences of f with respect to every entry of `param`
// (perturbed in place and restored).
Matrix numeric_gradient(const std::function<double()>& f, Matrix& param, double h);

/// Compares analytic gradients for one instance against central
/// differences; `params` and `analytic` are parallel. Appends one entry per tensor.
void compare_gradients(const std::string& prefix, const std::function<double()>& f,
                       const std::vector<Matrix*>& params, std::vector<Matrix> analytic,
                       const std::vector<std::string>& names, const GradcheckOptions& options,
                       GradcheckReport& report);

GradcheckReport run_gradcheck(GradcheckScope scope, std::uint64_t seed,
                              const GradcheckOptions& options = {});

}  // namespace bicon
