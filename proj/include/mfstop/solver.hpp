#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "mfstop/model.hpp"
#include "mfstop/valuation.hpp"

namespace mfstop {

/// Gibbs stopping probability exp(r/l) / (exp(r/l) + exp(c/l)), overflow-free.
double gibbs_policy(double lambda, double reward, double continuation);

/// sup over psi of r psi + lambda E(psi) + (1 - psi) c, i.e. lambda * logsumexp(r/l, c/l).
double regularized_best_response_value(double lambda, double reward, double continuation);

/// Lower bound 1/(1 + exp((||v|| + L1)/lambda)) on every Gibbs output.
double gibbs_lower_bound(double lambda, double value_sup, double reward_bound);

struct SolverConfig {
    double lambda = 0.1;
    double damping = 0.5;
    std::size_t max_iter = 2000;
    double residual_tol = 1e-6;
    bool regularize_discount = true;  ///< false keeps plain delta with the entropy bonus

    void validate() const;
};

struct IterationRecord {
    std::size_t iter;
    double residual;
    double sup_policy_change;
};

struct EquilibriumResult {
    PolicyGrid policy;
    ValueGrid aux_value;
    double residual = 0.0;
    std::size_t iterations = 0;
    bool converged = false;
    std::vector<IterationRecord> log;
};

/// T2: node values of J~_lambda^phi.
ValueGrid auxiliary_operator(const Valuator& val, const PolicyGrid& phi);

/// T1 o T2 applied node-wise, with the evaluation it came from.
std::vector<double> gibbs_map(const Valuator& val, const PolicyGrid& phi,
                              PolicyEvaluation* ev_out = nullptr);

/// Damped Picard iteration phi <- (1 - w) phi + w T1(T2(phi)).
EquilibriumResult solve_fixed_point(const ModelSpec& model, const Discount& discount,
                                    const SolverConfig& cfg,
                                    std::optional<PolicyGrid> init = std::nullopt);

/// Solves along a decreasing lambda schedule, warm-starting each stage.
std::vector<EquilibriumResult> solve_continuation(const ModelSpec& model,
                                                  const Discount& discount, SolverConfig cfg,
                                                  const std::vector<double>& schedule);

/// max over nodes of sup_psi J_lambda^{psi (+) phi} - J_lambda^phi.
double regularized_equilibrium_gap(const ModelSpec& model, const Discount& discount,
                                   double lambda, const PolicyGrid& phi,
                                   bool regularize_discount = true);

/// max over nodes of max(J^{1 (+) phi}, J^{0 (+) phi}) - J^phi with lambda = 0.
double epsilon_gap_unregularized(const ModelSpec& model, const Discount& discount,
                                 const PolicyFn& phi);

enum class RegionClass { stop_required, continue_required, indifferent };

struct RelaxedReport {
    std::vector<RegionClass> classes;
    std::vector<double> margin;  ///< r - f_phi per node
    std::vector<std::size_t> violations;
    std::size_t stop_count = 0, continue_count = 0, indifferent_count = 0;
    std::optional<double> lower_threshold;  ///< last node of the leading phi = 1 block
    std::optional<double> upper_threshold;  ///< first node after it where phi = 0
};

RelaxedReport relaxed_report_from(const PolicyEvaluation& ev, const Grid1D& grid, double band,
                                  double policy_tol = 1e-9);

RelaxedReport relaxed_equilibrium_report(const ModelSpec& model, const Discount& discount,
                                         const PolicyFn& phi, double band);

void write_residual_csv(std::ostream& os, const std::vector<IterationRecord>& log);

}  // namespace mfstop
