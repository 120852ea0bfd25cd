// One PASS/FAIL line per acceptance criterion. `--only C<n>` runs a single one.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "mfstop/discount.hpp"
#include "mfstop/etf_rl.hpp"
#include "mfstop/io.hpp"
#include "mfstop/nagent.hpp"
#include "mfstop/rd_example.hpp"
#include "mfstop/rng.hpp"
#include "mfstop/solver.hpp"
#include "mfstop/valuation.hpp"

using namespace mfstop;

namespace {

struct Outcome {
    bool pass;
    std::string detail;
};

const RdParams kRd{};

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

PolicyFn as_fn(const PolicyGrid& g) {
    return [g](double x) { return g(x); };
}

PolicyGrid random_policy(const Grid1D& grid, std::uint64_t seed, std::uint64_t index) {
    std::vector<double> v(11);
    CounterRng g(seed, StreamKind::sampling, index);
    for (auto& x : v) x = g.uniform();
    const GridFunction coarse(Grid1D(0.0, 1.0, v.size()), v);
    return PolicyGrid(grid, [&](double m) { return coarse(m); });
}

Outcome c1() {
    const auto eq = thresholds(kRd);
    const double ea = std::abs(eq.a - 2.0 / 11.0), eb = std::abs(eq.b - 1.0 / 3.0);
    // a = 2/11 is not representable; allow a few ulp of rounding in the formula.
    const bool ok = ea <= 4.0 * std::numeric_limits<double>::epsilon() &&
                    eb <= 4.0 * std::numeric_limits<double>::epsilon() && eq.mixed &&
                    kRd.k_amp > 1.6 && kRd.k_amp < 2.0;
    return {ok, "a=" + format_number(eq.a) + " b=" + format_number(eq.b) + " |da|=" + fmt(ea) +
                    " |db|=" + fmt(eb) + " mixed=" + (eq.mixed ? "true" : "false")};
}

Outcome c2() {
    const auto t0 = std::chrono::steady_clock::now();
    const auto m = make_rd_model(401);
    const auto rep = relaxed_equilibrium_report(
        m, kRd.discount(), [](double mu) { return closed_form_policy(kRd, mu); }, 5e-3);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return {rep.violations.empty() && secs < 30.0,
            "violations=" + std::to_string(rep.violations.size()) + " stop=" +
                std::to_string(rep.stop_count) + " continue=" + std::to_string(rep.continue_count) +
                " indifferent=" + std::to_string(rep.indifferent_count) + " runtime=" + fmt(secs) + "s"};
}

Outcome c3() {
    const auto rows = convergence_table(kRd, {0.1, 0.05, 0.01}, 0.05);
    bool decreasing = true;
    for (std::size_t i = 1; i < rows.size(); ++i) decreasing = decreasing && rows[i].phi_gap < rows[i - 1].phi_gap;
    const auto& last = rows.back();
    const bool ok = decreasing && last.phi_gap <= 0.1 && std::abs(last.v0 - 0.9) <= 0.05;
    std::string d = "phi_gaps=";
    for (const auto& r : rows) d += fmt(r.phi_gap) + (&r == &last ? "" : ",");
    d += " (target <= 0.1 at lambda=0.01) v0=" + fmt(last.v0);
    return {ok, d};
}

Outcome c4() {
    const auto m = make_rd_model(2001);
    SolverConfig cfg;
    cfg.lambda = 0.1;
    cfg.regularize_discount = false;
    const auto res = solve_fixed_point(m, kRd.discount(), cfg);
    const auto sol = solve_regularized_ode(kRd, 0.1);
    double gap = 0.0;
    for (std::size_t i = 0; i < sol.mu.size(); ++i)
        gap = std::max(gap, std::abs(res.policy(sol.mu[i]) - sol.phi[i]));
    return {res.converged && res.residual <= 1e-6 && gap <= 1e-2,
            "sup|phi_grid - phi_ode|=" + fmt(gap) + " residual=" + fmt(res.residual) + " iterations=" +
                std::to_string(res.iterations)};
}

Outcome c5() {
    const auto m = make_rd_model(2001);
    const auto stages = solve_continuation(m, kRd.discount(), {}, {0.1, 0.05, 0.01});
    std::vector<double> gaps;
    bool converged = true;
    for (const auto& s : stages) {
        converged = converged && s.converged;
        gaps.push_back(epsilon_gap_unregularized(m, kRd.discount(), as_fn(s.policy)));
    }
    bool nonincreasing = true;
    for (std::size_t i = 1; i < gaps.size(); ++i) nonincreasing = nonincreasing && gaps[i] <= gaps[i - 1];
    return {converged && nonincreasing && gaps.back() <= 0.05,
            "eps_gaps=" + fmt(gaps[0]) + "," + fmt(gaps[1]) + "," + fmt(gaps[2]) +
                (converged ? "" : " (solver not converged)")};
}

Outcome c6() {
    const auto m = make_rd_model(401);
    const double bound = 1.0 + (2.0 * std::log(2.0) + 1.0) * std::log(2.0);
    double worst = 0.0;
    for (double lam : {1.0, 0.1}) {
        const Valuator val(m, PayoffSpec{kRd.discount(), lam, true});
        for (std::size_t k = 0; k < 20; ++k) {
            const auto aux = auxiliary_operator(val, random_policy(m.grid, 42, k));
            for (double v : aux.values()) worst = std::max(worst, std::abs(v));
        }
    }
    bool tails = true;
    std::string td;
    for (double lam : {1.0, 0.1, 0.01, 0.001}) {
        const auto t = lambda_tail_mass(lam);
        tails = tails && t.mass <= t.analytic_bound;
        td += " " + fmt(t.mass) + "<=" + fmt(t.analytic_bound);
    }
    return {worst <= bound && tails, "sup|T2|=" + fmt(worst) + " bound=" + fmt(bound) + " tail:" + td};
}

Outcome c7() {
    const auto m = make_rd_model(401);
    double worst = 0.0;
    for (std::size_t k = 0; k < 10; ++k) {
        const PolicyGrid phi = random_policy(m.grid, 42, 1000 + k);
        CounterRng g(42, StreamKind::initial, k);
        ValuationRequest req{.model = &m,
                             .payoff = PayoffSpec{kRd.discount(), 0.0, true},
                             .policy = as_fn(phi),
                             .head = std::nullopt,
                             .start = MeanFieldState::live(g.uniform()),
                             .horizon = 12,
                             .shift = Shift::none,
                             .paths = 20000,
                             .seed = 42 + 2 * k,
                             .tensor_nodes = 16};
        const auto s = survival_value(req);
        req.seed = 43 + 2 * k;
        const auto d = direct_simulation_value(req);
        worst = std::max(worst, std::abs(s.value - d.value) / std::hypot(s.std_error, d.std_error));
    }
    return {worst <= 3.0, "max |survival - direct| / se = " + fmt(worst) + " over 10 pairs"};
}

Outcome c8() {
    const auto t0 = std::chrono::steady_clock::now();
    const auto res = estimate_empirical_rate(0.5, {100, 1000, 10000, 100000}, 200000, 42);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const double m1 = exact_empirical_rate(0.5, 1);
    const double m100 = res.rows.front().estimate;
    const bool ok = res.slope >= -0.6 && res.slope <= -0.4 && m1 == 0.5 &&
                    std::abs(m100 - 0.0399) <= 1e-3 &&
                    std::abs(exact_empirical_rate(0.5, 100) - 0.0399) <= 1e-3 && secs < 120.0;
    return {ok, "slope=" + fmt(res.slope) + " +/- " + fmt(res.slope_half_width) + " M1=" + fmt(m1) +
                    " M100=" + fmt(m100) + " exact M100=" + fmt(exact_empirical_rate(0.5, 100)) +
                    " runtime=" + fmt(secs) + "s"};
}

Outcome c9() {
    const auto m = make_rd_model(2001);
    SolverConfig cfg;
    cfg.lambda = 0.05;
    const auto res = solve_fixed_point(m, kRd.discount(), cfg);
    NAgentConfig na;
    na.paths = 100000;
    na.seed = 42;
    const auto phi = as_fn(res.policy);
    const auto big = n_agent_epsilon_gap(10000, phi, 0.6, na);
    const auto small = n_agent_epsilon_gap(100, phi, 0.6, na);
    const double se = std::hypot(big.std_error, small.std_error);
    const bool ok = res.converged && big.gap <= 0.05 + 3.0 * big.std_error && big.gap <= small.gap + 3.0 * se;
    return {ok, "gap(N=1e4)=" + fmt(big.gap) + " se=" + fmt(big.std_error) + " gap(N=1e2)=" + fmt(small.gap)};
}

Outcome c10() {
    const PolicyFn phi0 = [](double mu) { return closed_form_policy(kRd, mu); };
    NAgentConfig na;
    na.paths = 20000;
    na.seed = 42;
    const auto d100 = n_agent_value_difference(100, phi0, 0.6, na);
    const auto d10k = n_agent_value_difference(10000, phi0, 0.6, na);
    const double se = std::hypot(d100.difference.std_error, d10k.difference.std_error);
    const double drop = std::abs(d100.difference.value) - std::abs(d10k.difference.value);
    return {drop > 3.0 * se, "|diff| N=100: " + fmt(std::abs(d100.difference.value)) + " N=1e4: " +
                                 fmt(std::abs(d10k.difference.value)) + " drop/se=" + fmt(drop / se)};
}

Outcome c11() {
    const auto t0 = std::chrono::steady_clock::now();
    const EtfParams p;
    const auto res = policy_iteration(p, 100, TdConfig{}, 42, default_etf_grid(p));
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (res.diverged || res.history.size() != 100) return {false, "training diverged"};
    const double ratio = res.history.back().tdloss / res.history.front().tdloss;
    const double change = res.history.back().policy_change;
    const auto rep = policy_region_report(res.policy);
    const Grid2D& g = res.policy.grid;
    std::size_t near = 0;
    for (std::size_t i = 0; i < g.np(); ++i)
        for (std::size_t j = 0; j < g.nr(); ++j)
            if (rep.cls[g.index(i, j)] == -1 && std::abs(g.price(i) - p.strike) <= 0.2 * p.strike) ++near;
    const double near_frac = rep.hold ? static_cast<double>(near) / static_cast<double>(rep.hold) : 0.0;
    const double neg = mean_stop_probability_at(res.policy, -0.02);
    const double pos = mean_stop_probability_at(res.policy, 0.02);
    const bool ok = ratio <= 0.1 && change <= 0.05 && rep.hold > 0 && near_frac >= 0.9 && neg <= pos &&
                    secs < 600.0;
    return {ok, "tdloss_ratio=" + fmt(ratio) + " policy_change=" + fmt(change) + " hold=" +
                    std::to_string(rep.hold) + " near_strike=" + fmt(near_frac) + " stop(-0.02)=" + fmt(neg) +
                    " stop(+0.02)=" + fmt(pos) + " runtime=" + fmt(secs) + "s"};
}

const std::vector<std::pair<std::string, std::function<Outcome()>>> kCriteria{
    {"C1", c1}, {"C2", c2}, {"C3", c3}, {"C4", c4},  {"C5", c5},  {"C6", c6},
    {"C7", c7}, {"C8", c8}, {"C9", c9}, {"C10", c10}, {"C11", c11},
};

}  // namespace

int main(int argc, char** argv) {
    std::string only;
    for (int i = 1; i < argc; ++i) {
        const std::string a = argv[i];
        if (a == "--only" && i + 1 < argc) only = argv[++i];
        else {
            std::cerr << "usage: mfstop_acceptance [--only C<n>]\n";
            return 1;
        }
    }
    int failures = 0;
    bool matched = false;
    for (const auto& [name, fn] : kCriteria) {
        if (!only.empty() && name != only) continue;
        matched = true;
        Outcome o;
        try {
            o = fn();
        } catch (const std::exception& e) {
            o = {false, std::string("error: ") + e.what()};
        }
        std::cout << name << ' ' << (o.pass ? "PASS" : "FAIL") << ' ' << o.detail << std::endl;
        failures += o.pass ? 0 : 1;
    }
    if (!matched) {
        std::cerr << "unknown criterion " << only << '\n';
        return 1;
    }
    return failures == 0 ? 0 : 1;
}
