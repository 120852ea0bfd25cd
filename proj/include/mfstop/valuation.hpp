#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "mfstop/discount.hpp"
#include "mfstop/model.hpp"

namespace mfstop {

using PolicyFn = std::function<double(double)>;

/// Discount plus entropy weight. With lambda > 0 the weights are the
/// regularized delta_lambda unless regularize_discount is false, in which case
/// only the entropy bonus is added and the plain delta is kept.
struct PayoffSpec {
    Discount discount;
    double lambda = 0.0;
    bool regularize_discount = true;

    double weight(std::size_t k) const;
    std::vector<double> weights(std::size_t horizon) const;
};

struct HorizonInfo {
    std::size_t k_max;
    double tail_bound;  ///< certified bound on the neglected tail of the series
};

/// Truncation rule: regularized discounts use truncation_horizon; plain ones
/// use the plain tail bound capped at `cap`.
HorizonInfo payoff_horizon(const PayoffSpec& payoff, double reward_bound, double tol = 1e-8,
                           std::size_t cap = 200);

/// Per-node results of evaluating one stationary policy.
struct PolicyEvaluation {
    std::vector<double> policy;        ///< phi at nodes
    std::vector<double> reward;        ///< r at nodes
    std::vector<double> value;         ///< J^phi
    std::vector<double> aux;           ///< J~^phi (shifted discount), the T2 output
    std::vector<double> continuation;  ///< f_phi = E0 J~^phi(T0(mu, Z))
    std::vector<double> aux_next;      ///< internal: level-1 continuation grid
    std::size_t horizon = 0;
    double tail_bound = 0.0;
};

/// Grid evaluator of value, auxiliary value and continuation.
///
/// Uses the backward recursion H_m = w(m) g + (1 - phi) E0[H_{m+1}(T0)] with
/// g = r phi + lambda E(phi). Policy and reward are evaluated exactly at the
/// noise targets; only the continuation grid is interpolated.
class Valuator {
public:
    Valuator(const ModelSpec& model, PayoffSpec payoff,
             std::optional<std::size_t> horizon = std::nullopt);

    PolicyEvaluation evaluate(const PolicyGrid& phi) const;
    PolicyEvaluation evaluate(const PolicyFn& phi) const;

    /// Continuation value at an arbitrary live coordinate from a finished evaluation.
    double continuation_at(const PolicyEvaluation& ev, const PolicyFn& phi, double mu) const;

    const ExpectationOperator& op() const noexcept { return op_; }
    const ModelSpec& model() const noexcept { return *model_; }
    const PayoffSpec& payoff() const noexcept { return payoff_; }
    std::size_t horizon() const noexcept { return horizon_.k_max; }
    double tail_bound() const noexcept { return horizon_.tail_bound; }

private:
    PolicyEvaluation run(std::vector<double> phi_nodes, const std::vector<double>& phi_pts) const;

    const ModelSpec* model_;
    PayoffSpec payoff_;
    HorizonInfo horizon_;
    ExpectationOperator op_;
    std::vector<double> r_nodes_, r_pts_;
    std::vector<double> w_;
};

/// J^{psi (+) phi}(mu) = r psi + lambda E(psi) + (1 - psi) f.
double deviation_value(double reward, double continuation, double psi, double lambda);

enum class Shift { none, one_step };

struct ValuationRequest {
    const ModelSpec* model = nullptr;
    PayoffSpec payoff;
    PolicyFn policy;
    std::optional<double> head;  ///< first-step action psi, then policy
    MeanFieldState start;
    std::size_t horizon = 0;
    Shift shift = Shift::none;
    std::size_t paths = 10000;
    std::uint64_t seed = 1;
    std::size_t tensor_nodes = 16;
};

struct Estimate {
    double value = 0.0;
    double std_error = 0.0;
};

/// Survival-product value over the unstopped chain. Tensor quadrature over
/// the common noise when horizon <= 3, seeded Monte Carlo beyond.
Estimate survival_value(const ValuationRequest& req);

/// Independent Monte Carlo evaluator that draws the stopping decision as a
/// Bernoulli variable at every step instead of weighting by survival.
Estimate direct_simulation_value(const ValuationRequest& req);

}  // namespace mfstop
