#pragma once

#include <cstddef>
#include <iosfwd>
#include <stdexcept>
#include <vector>

#include "mfstop/discount.hpp"
#include "mfstop/model.hpp"

namespace mfstop {

/// Raised when a closed form is requested outside its parameter regime.
class UnsupportedParameters : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Quasi-hyperbolic parameters of the R&D announcement example.
struct RdParams {
    double k_amp = 1.8;
    double beta = 0.5;

    void validate() const;
    bool increasing_impatience() const noexcept { return k_amp > 1.0; }
    Discount discount() const { return Discount::quasi_hyperbolic(k_amp, beta); }
};

struct ClosedFormEquilibrium {
    double a;    ///< (1 - K beta) / (1 - K beta / 2)
    double b;    ///< (1 - beta) / (2 - beta)
    bool mixed;  ///< a < b, equivalently K > 2 / ((3 - beta) beta)
};

ClosedFormEquilibrium thresholds(const RdParams& p);

/// Relaxed equilibrium: 1 on [0,a], interior mixing on (a,b], 0 on (b,1].
double closed_form_policy(const RdParams& p, double mu);

/// Pure equilibrium used when no mixing region exists: stop on [0,a], continue after.
double pure_threshold_policy(const RdParams& p, double mu);

/// Continuation value of the equilibrium (mixed or pure threshold regime).
double closed_form_continuation(const RdParams& p, double mu);

/// Right limit of the mixed policy at the lower threshold.
double phi_a_plus(const RdParams& p);

/// Phi_lambda(mu, v) = 1 / (1 + exp((v - 1 + mu) / lambda)).
double rd_gibbs(double lambda, double mu, double v);

struct RegularizedOde {
    double lambda;
    std::vector<double> mu;
    std::vector<double> v;    ///< V~_lambda
    std::vector<double> phi;  ///< Phi_lambda(mu, V~_lambda(mu))
    double v0;
    double slope0;            ///< V~_lambda'(0)
};

/// Solves the initial-value equation at mu = 0 by bisection and integrates
/// the ODE on (0,1] with fixed-step RK4, starting one step off the singular point.
RegularizedOde solve_regularized_ode(const RdParams& p, double lambda, double step = 5e-4);

struct ConvergenceRow {
    double lambda;
    double phi_gap;
    double v_gap;
    double v0;
};

/// Sup-gaps to the relaxed equilibrium outside exclusion neighbourhoods of a and b.
std::vector<ConvergenceRow> convergence_table(const RdParams& p, const std::vector<double>& lambdas,
                                              double exclusion, double step = 5e-4);

void write_ode_csv(std::ostream& os, const RdParams& p, const RegularizedOde& sol);

}  // namespace mfstop
