#include "bicon/divergence.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <string>

#include "bicon/errors.hpp"

namespace bicon {

std::string_view to_string(Divergence kind) {
    switch (kind) {
        case Divergence::KL: return "KL";
        case Divergence::TV: return "TV";
        case Divergence::JSD: return "JSD";
        case Divergence::Hellinger: return "Hellinger";
    }
    return "?";
}

Divergence parse_divergence(std::string_view name) {
    std::string lower(name);
    std::transform(lower.begin(), lower.end(), lower.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    for (Divergence d : kAllDivergences) {
        std::string canon(to_string(d));
        std::transform(canon.begin(), canon.end(), canon.begin(),
                       [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
        if (canon == lower) return d;
    }
    throw ConfigError("unknown divergence '" + std::string(name) +
                      "' (expected KL, TV, JSD or Hellinger)");
}

void check_probability_vector(std::span<const double> v) {
    if (v.size() < 2) {
        throw DomainError("probability vector needs at least 2 entries, got " +
                          std::to_string(v.size()));
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (!(v[i] >= 0.0) || !std::isfinite(v[i])) {
            throw DomainError("probability entry " + std::to_string(i) +
                              " is negative or non-finite");
        }
        sum += v[i];
    }
    if (std::abs(sum - 1.0) > kSimplexTolerance) {
        throw DomainError("probability vector sums to " + std::to_string(sum));
    }
}

ProbabilityVector::ProbabilityVector(std::vector<double> values) : values_(std::move(values)) {
    check_probability_vector(values_);
}

namespace {

double floored(double x) { return std::max(x, kProbabilityFloor); }

// x ln(x / y) with 0 ln 0 = 0.
double xlogx_over(double x, double y) { return x > 0.0 ? x * std::log(x / floored(y)) : 0.0; }

void require_same_length(std::size_t a, std::size_t b) {
    if (a != b) {
        throw DimensionError("divergence arguments differ in length: " + std::to_string(a) +
                             " vs " + std::to_string(b));
    }
}

}  // namespace

namespace rowwise {

double divergence(Divergence kind, std::span<const double> p, std::span<const double> q) {
    double acc = 0.0;
    const std::size_t n = p.size();
    switch (kind) {
        case Divergence::KL:
            for (std::size_t i = 0; i < n; ++i) acc += xlogx_over(p[i], q[i]);
            return acc;
        case Divergence::TV:
            for (std::size_t i = 0; i < n; ++i) acc += std::abs(p[i] - q[i]);
            return 0.5 * acc;
        case Divergence::JSD:
            for (std::size_t i = 0; i < n; ++i) {
                const double m = 0.5 * (p[i] + q[i]);
                acc += xlogx_over(p[i], m) + xlogx_over(q[i], m);
            }
            return 0.5 * acc;
        case Divergence::Hellinger:
            for (std::size_t i = 0; i < n; ++i) {
                const double d = std::sqrt(p[i]) - std::sqrt(q[i]);
                acc += d * d;
            }
            return 0.5 * acc;
    }
    return acc;
}

void divergence_grad_q(Divergence kind, std::span<const double> p, std::span<const double> q,
                       std::span<double> out) {
    const std::size_t n = p.size();
    switch (kind) {
        case Divergence::KL:
            for (std::size_t i = 0; i < n; ++i) out[i] = -p[i] / floored(q[i]);
            return;
        case Divergence::TV:
            for (std::size_t i = 0; i < n; ++i) {
                const double d = q[i] - p[i];
                out[i] = d > 0.0 ? 0.5 : (d < 0.0 ? -0.5 : 0.0);
            }
            return;
        case Divergence::JSD:
            for (std::size_t i = 0; i < n; ++i) {
                const double qi = floored(q[i]);
                out[i] = 0.5 * std::log(2.0 * qi / (p[i] + qi));
            }
            return;
        case Divergence::Hellinger:
            for (std::size_t i = 0; i < n; ++i) {
                out[i] = 0.5 * (1.0 - std::sqrt(p[i] / floored(q[i])));
            }
            return;
    }
}

}  // namespace rowwise

double divergence(Divergence kind, const ProbabilityVector& p, const ProbabilityVector& q) {
    require_same_length(p.size(), q.size());
    return rowwise::divergence(kind, p.values(), q.values());
}

std::vector<double> divergence_grad_q(Divergence kind, const ProbabilityVector& p,
                                      const ProbabilityVector& q) {
    require_same_length(p.size(), q.size());
    std::vector<double> out(p.size());
    rowwise::divergence_grad_q(kind, p.values(), q.values(), out);
    return out;
}

}  // namespace bicon
