#pragma once

#include <array>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace bicon {

enum class Divergence { KL, TV, JSD, Hellinger };

inline constexpr std::array<Divergence, 4> kAllDivergences = {
    Divergence::KL, Divergence::TV, Divergence::JSD, Divergence::Hellinger};

// Floor applied to q (and to the JSD mixture) before logs, roots and divisions.
inline constexpr double kProbabilityFloor = 1e-12;
// Tolerance on |sum - 1| for a vector to count as a distribution.
inline constexpr double kSimplexTolerance = 1e-9;

std::string_view to_string(Divergence kind);
// Accepts the canonical names (KL, TV, JSD, Hellinger), case-insensitively.
// Throws ConfigError on anything else.
Divergence parse_divergence(std::string_view name);

/// A validated point on the probability simplex: n >= 2, non-negative
/// entries summing to 1 within kSimplexTolerance.
class ProbabilityVector {
public:
    explicit ProbabilityVector(std::vector<double> values);

    std::span<const double> values() const noexcept { return values_; }
    std::size_t size() const noexcept { return values_.size(); }
    double operator[](std::size_t i) const { return values_[i]; }

private:
    std::vector<double> values_;
};

// Throws DomainError naming the offending entry.
void check_probability_vector(std::span<const double> v);

/// D(p || q) in nats. KL = sum p ln(p/q); TV = 1/2 sum |p - q|;
/// JSD = 1/2 KL(p||m) + 1/2 KL(q||m) with m = (p + q)/2;
/// Hellinger is the squared form 1/2 sum (sqrt p - sqrt q)^2.
double divergence(Divergence kind, const ProbabilityVector& p, const ProbabilityVector& q);

/// dD/dq_k for every k, q treated as unconstrained (no renormalization).
std::vector<double> divergence_grad_q(Divergence kind, const ProbabilityVector& p,
                                      const ProbabilityVector& q);

// Unvalidated row kernels used by the loss assembly, which checks whole
// neighborhood matrices once up front. Lengths must already match.
namespace rowwise {
double divergence(Divergence kind, std::span<const double> p, std::span<const double> q);
void divergence_grad_q(Divergence kind, std::span<const double> p, std::span<const double> q,
                       std::span<double> out);
}  // namespace rowwise

}  // namespace bicon
