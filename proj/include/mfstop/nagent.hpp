#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "mfstop/discount.hpp"
#include "mfstop/rng.hpp"
#include "mfstop/valuation.hpp"

namespace mfstop {

enum class AgentState : std::uint8_t { A, B, stopped };

/// N agents on {A, B} plus the common stopped state.
struct Population {
    std::vector<AgentState> states;
    bool stopped = false;

    std::size_t size() const noexcept { return states.size(); }
    std::size_t count_a() const noexcept;
    double mass_on_a() const noexcept;  ///< empirical measure of A
};

/// Seeded stream families for one simulated path. Agent i reads the
/// idiosyncratic stream with index agent_map[i] (identity when empty).
struct RngPlan {
    std::uint64_t seed = 1;
    std::uint64_t path = 0;
    std::vector<std::size_t> agent_map;

    double initial(std::size_t agent) const;
    double idiosyncratic(std::size_t agent, std::size_t time) const;
    double common(std::size_t time) const;
    double device(std::size_t time) const;
    CounterRng stream(StreamKind kind, std::uint64_t agent, std::uint64_t time) const;
};

Population initial_population(std::size_t n, double nu0, const RngPlan& rng);

/// One transition with explicit draws: stop everyone if u <= phi(mu_hat),
/// else an agent at A stays at A iff its draw is <= z0; B is absorbing.
Population step_population(const Population& pop, double phi_at_empirical, double u, double z0,
                           std::span<const double> idio);

/// One transition drawing (U_{k+1}, Z0_{k+1}, Z^i_{k+1}) from the plan.
Population step_population(const Population& pop, const PolicyFn& phi, const RngPlan& rng,
                           std::size_t k);

struct NAgentConfig {
    Discount discount = Discount::quasi_hyperbolic(1.8, 0.5);
    std::size_t horizon = 60;
    std::size_t paths = 10000;
    std::uint64_t seed = 1;
    bool per_agent = false;  ///< literal per-agent draws instead of binomial counts
};

/// Average N-agent payoff (1/N) sum_i J^{i,N}: reward 1{x = B} at the common
/// stop, stop probability integrated out along each path.
Estimate n_agent_average_value(std::size_t n, const PolicyFn& phi, std::optional<double> head,
                               double nu0, const NAgentConfig& cfg);

struct DeviationGap {
    double gap;
    double std_error;
    Estimate gain_stop;      ///< avg value(1 (+) phi) - avg value(phi)
    Estimate gain_continue;  ///< avg value(0 (+) phi) - avg value(phi)
    Estimate value;          ///< avg value(phi)
};

/// Best first-step deviation gain, estimated with common random numbers.
DeviationGap n_agent_epsilon_gap(std::size_t n, const PolicyFn& phi, double nu0,
                                 const NAgentConfig& cfg);

struct CoupledDifference {
    Estimate difference;  ///< N-agent value minus mean-field value, pathwise coupled
    Estimate n_agent;
    Estimate mean_field;
};

/// Runs the N-agent system and the mean-field chain on the same common noise.
CoupledDifference n_agent_value_difference(std::size_t n, const PolicyFn& phi, double nu0,
                                           const NAgentConfig& cfg);

/// E|p_hat - p| for p_hat ~ Binomial(N, p) / N by direct summation.
double exact_empirical_rate(double p, std::size_t n);

struct RateRow {
    std::size_t n;
    double estimate;
    double std_error;
};

struct RateResult {
    std::vector<RateRow> rows;
    double slope;
    double slope_half_width;  ///< 95% delta-method half-width
};

struct LogLogFit {
    double slope;
    double half_width;  ///< 95% delta-method half-width
};

/// OLS slope of log estimate on log N.
LogLogFit fit_log_log(const std::vector<RateRow>& rows);

RateResult estimate_empirical_rate(double p, const std::vector<std::size_t>& ns,
                                   std::size_t samples, std::uint64_t seed);

/// W1 between two-point measures given their masses on A (d(A,B) = 1).
inline double wasserstein_two_point(double mass_a, double mass_b) {
    return mass_a > mass_b ? mass_a - mass_b : mass_b - mass_a;
}

void write_rate_csv(std::ostream& os, const std::vector<RateRow>& rows);

}  // namespace mfstop
