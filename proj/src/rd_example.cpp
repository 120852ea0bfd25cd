#include "mfstop/rd_example.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "mfstop/io.hpp"
#include "mfstop/solver.hpp"

namespace mfstop {

void RdParams::validate() const {
    if (!(beta > 0.0 && beta < 1.0)) throw std::domain_error("beta must lie in (0,1)");
    if (!(k_amp > 0.0)) throw std::domain_error("K must be positive");
    if (!(k_amp * beta < 1.0)) throw std::domain_error("K*beta must be < 1");
}

ClosedFormEquilibrium thresholds(const RdParams& p) {
    p.validate();
    const double kb = p.k_amp * p.beta;
    ClosedFormEquilibrium eq;
    eq.a = (1.0 - kb) / (1.0 - kb / 2.0);
    eq.b = (1.0 - p.beta) / (2.0 - p.beta);
    eq.mixed = p.k_amp > 2.0 / ((3.0 - p.beta) * p.beta);
    return eq;
}

double closed_form_policy(const RdParams& p, double mu) {
    const auto eq = thresholds(p);
    if (!eq.mixed) throw UnsupportedParameters("parameters admit no mixed equilibrium");
    if (mu <= eq.a) return 1.0;
    if (mu > eq.b) return 0.0;
    const double v = (1.0 - p.beta - (2.0 - p.beta) * mu) / (p.beta * (p.k_amp - 1.0) * (1.0 - mu));
    return std::clamp(v, 0.0, 1.0);
}

double pure_threshold_policy(const RdParams& p, double mu) {
    return mu <= thresholds(p).a ? 1.0 : 0.0;
}

double closed_form_continuation(const RdParams& p, double mu) {
    const auto eq = thresholds(p);
    const double kb = p.k_amp * p.beta;
    if (mu <= eq.a) return kb * (1.0 - mu / 2.0);
    if (eq.mixed) {
        if (mu <= eq.b) return 1.0 - mu;
        return (1.0 - eq.b) * std::pow(mu / eq.b, p.beta - 1.0);
    }
    return (1.0 - eq.a) * std::pow(mu / eq.a, p.beta - 1.0);
}

double phi_a_plus(const RdParams& p) {
    const double k = p.k_amp, b = p.beta;
    return ((1.0 - b) * k * b - 2.0 + 2.0 * k * b) / (k * b * b * (k - 1.0));
}

double rd_gibbs(double lambda, double mu, double v) { return gibbs_policy(lambda, 1.0 - mu, v); }

namespace {

// mu V~' = B(mu, V~).
double bracket(const RdParams& p, double lambda, double mu, double v) {
    const double phi = rd_gibbs(lambda, mu, v);
    const double kb = p.k_amp * p.beta;
    return (p.beta - 1.0) * v - p.beta * phi * v + kb * phi * (1.0 - mu) +
           lambda * kb * shannon_entropy(phi);
}

double initial_residual(const RdParams& p, double lambda, double v) {
    const double phi = rd_gibbs(lambda, 0.0, v);
    return p.beta * ((1.0 - phi) * v + p.k_amp * phi + p.k_amp * lambda * shannon_entropy(phi)) - v;
}

}  // namespace

RegularizedOde solve_regularized_ode(const RdParams& p, double lambda, double step) {
    p.validate();
    if (!(lambda > 0.0)) throw std::invalid_argument("lambda must be positive");
    if (!(step > 0.0 && step <= 0.5)) throw std::invalid_argument("step must lie in (0, 0.5]");

    const double operator_bound = 1.0 + (2.0 * std::log(2.0) + 1.0) * std::log(2.0);
    double lo = 0.0;
    double hi = std::max(operator_bound, p.k_amp * p.beta / (1.0 - p.beta) + 1.0);
    double flo = initial_residual(p, lambda, lo), fhi = initial_residual(p, lambda, hi);
    if (!(flo > 0.0 && fhi < 0.0))
        throw std::runtime_error("initial-value bisection bracket failed: f(lo)=" +
                                 format_number(flo) + " f(hi)=" + format_number(fhi));
    while (hi - lo > 1e-13) {
        const double mid = 0.5 * (lo + hi);
        (initial_residual(p, lambda, mid) > 0.0 ? lo : hi) = mid;
    }
    const double v0 = 0.5 * (lo + hi);

    // Slope at the singular point: V' = B_mu + B_v V' along the solution.
    const double h = step;
    auto d_mu = [&](double hh) { return (bracket(p, lambda, hh, v0) - bracket(p, lambda, 0.0, v0)) / hh; };
    const double b_mu = 2.0 * d_mu(h) - d_mu(2.0 * h);
    const double dv = 1e-6;
    const double b_v = (bracket(p, lambda, 0.0, v0 + dv) - bracket(p, lambda, 0.0, v0 - dv)) / (2.0 * dv);
    const double slope0 = b_mu / (1.0 - b_v);

    const std::size_t n = static_cast<std::size_t>(std::llround(1.0 / step));
    const double dt = 1.0 / static_cast<double>(n);
    RegularizedOde sol;
    sol.lambda = lambda;
    sol.v0 = v0;
    sol.slope0 = slope0;
    sol.mu.resize(n + 1);
    sol.v.resize(n + 1);
    sol.phi.resize(n + 1);
    for (std::size_t i = 0; i <= n; ++i) sol.mu[i] = static_cast<double>(i) * dt;
    sol.mu[n] = 1.0;
    sol.v[0] = v0;
    sol.v[1] = v0 + dt * slope0;
    auto f = [&](double mu, double v) { return bracket(p, lambda, mu, v) / mu; };
    for (std::size_t i = 1; i < n; ++i) {
        const double m = sol.mu[i], v = sol.v[i];
        const double k1 = f(m, v);
        const double k2 = f(m + dt / 2, v + dt / 2 * k1);
        const double k3 = f(m + dt / 2, v + dt / 2 * k2);
        const double k4 = f(m + dt, v + dt * k3);
        sol.v[i + 1] = v + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if (!std::isfinite(sol.v[i + 1]) || std::abs(sol.v[i + 1]) > 10.0 * hi)
            throw std::runtime_error("ODE integration unstable at mu=" + format_number(m));
    }
    for (std::size_t i = 0; i <= n; ++i) sol.phi[i] = rd_gibbs(lambda, sol.mu[i], sol.v[i]);
    return sol;
}

std::vector<ConvergenceRow> convergence_table(const RdParams& p, const std::vector<double>& lambdas,
                                              double exclusion, double step) {
    if (!(exclusion > 0.0)) throw std::invalid_argument("exclusion must be positive");
    const auto eq = thresholds(p);
    std::vector<ConvergenceRow> rows;
    for (double lam : lambdas) {
        const auto sol = solve_regularized_ode(p, lam, step);
        ConvergenceRow row{lam, 0.0, 0.0, sol.v0};
        for (std::size_t i = 0; i < sol.mu.size(); ++i) {
            const double m = sol.mu[i];
            if (std::abs(m - eq.a) < exclusion || std::abs(m - eq.b) < exclusion) continue;
            const double phi0 = eq.mixed ? closed_form_policy(p, m) : pure_threshold_policy(p, m);
            row.phi_gap = std::max(row.phi_gap, std::abs(sol.phi[i] - phi0));
            row.v_gap = std::max(row.v_gap, std::abs(sol.v[i] - closed_form_continuation(p, m)));
        }
        rows.push_back(row);
    }
    return rows;
}

void write_ode_csv(std::ostream& os, const RdParams& p, const RegularizedOde& sol) {
    const bool mixed = thresholds(p).mixed;
    CsvWriter csv(os, {"mu", "v_lambda", "phi_lambda", "phi_closed", "v_closed"});
    for (std::size_t i = 0; i < sol.mu.size(); ++i) {
        const double m = sol.mu[i];
        csv.row(m, sol.v[i], sol.phi[i],
                mixed ? closed_form_policy(p, m) : pure_threshold_policy(p, m),
                closed_form_continuation(p, m));
    }
}

}  // namespace mfstop
