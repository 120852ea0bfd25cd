#pragma once

#include <cstddef>
#include <limits>
#include <span>
#include <vector>

namespace mfstop {

/// Nonincreasing discount sequence with delta(0) = 1.
///
/// Two families are supported: an explicit finite sequence (zero beyond its
/// length) and the generalized quasi-hyperbolic form
///
///     delta(0) = 1,  delta(k) = K * beta^k  for k >= 1,
///
/// where K * beta < 1 but K may exceed 1 (increasing impatience).
class Discount {
public:
    enum class Kind { general_sequence, quasi_hyperbolic };

    static Discount quasi_hyperbolic(double k_amp, double beta);
    static Discount sequence(std::vector<double> weights);

    double weight(std::size_t k) const;

    /// sum_{k > from} delta(k); exact for both families.
    double tail_sum(std::size_t from) const;

    Kind kind() const noexcept { return kind_; }
    double k_amp() const noexcept { return k_amp_; }
    double beta() const noexcept { return beta_; }
    std::span<const double> weights() const noexcept { return weights_; }

private:
    Discount() = default;

    Kind kind_ = Kind::quasi_hyperbolic;
    double k_amp_ = 1.0;
    double beta_ = 0.0;
    std::vector<double> weights_;
};

/// delta_lambda(k) = delta(k) * (1 / (1 + lambda))^(k^2).
class RegularizedDiscount {
public:
    RegularizedDiscount(Discount base, double lambda);

    double weight(std::size_t k) const;

    const Discount& base() const noexcept { return base_; }
    double lambda() const noexcept { return lambda_; }

private:
    Discount base_;
    double lambda_;
};

/// -phi ln phi - (1 - phi) ln(1 - phi), with 0 ln 0 = 0.
double shannon_entropy(double phi);

struct TailMass {
    double mass;            ///< lambda * sum_k (1/(1+lambda))^(k^2)
    double analytic_bound;  ///< (1+lambda) ln(1+sqrt(lambda)) + sqrt(lambda)
    std::size_t terms;
};

TailMass lambda_tail_mass(double lambda, double tol = 1e-15);

/// Smallest k_max with sum_{k>k_max} delta_lambda(k) (reward_bound + lambda ln 2) < tol.
std::size_t truncation_horizon(const RegularizedDiscount& rd, double reward_bound,
                               double tol);

struct PlainHorizon {
    std::size_t k_max;
    double tail_bound;  ///< (reward_bound + entropy_weight ln 2) * sum_{k>k_max} delta(k)
};

/// Horizon for an unpenalized discount. Returns the certified horizon when it
/// is <= cap, otherwise cap together with the residual tail bound.
PlainHorizon plain_truncation_horizon(const Discount& d, double reward_bound,
                                      double entropy_weight, double tol,
                                      std::size_t cap = 200);

}  // namespace mfstop
