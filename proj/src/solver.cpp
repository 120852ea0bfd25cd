#include "mfstop/solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <stdexcept>

#include "mfstop/diagnostics.hpp"
#include "mfstop/io.hpp"

namespace mfstop {

double gibbs_policy(double lambda, double reward, double continuation) {
    if (!(lambda > 0.0)) throw std::domain_error("lambda must be positive");
    const double x = (continuation - reward) / lambda;
    if (x > 0.0) {
        const double e = std::exp(-x);
        return e / (1.0 + e);
    }
    return 1.0 / (1.0 + std::exp(x));
}

double regularized_best_response_value(double lambda, double reward, double continuation) {
    if (!(lambda > 0.0)) throw std::domain_error("lambda must be positive");
    const double hi = std::max(reward, continuation);
    return hi + lambda * std::log1p(std::exp(-std::abs(reward - continuation) / lambda));
}

double gibbs_lower_bound(double lambda, double value_sup, double reward_bound) {
    const double x = (value_sup + reward_bound) / lambda;
    return std::exp(-x) / (1.0 + std::exp(-x));
}

void SolverConfig::validate() const {
    if (!(lambda > 0.0)) throw std::invalid_argument("lambda must be positive");
    if (!(damping > 0.0 && damping <= 1.0)) throw std::invalid_argument("damping must lie in (0,1]");
    if (!(residual_tol > 0.0)) throw std::invalid_argument("residual_tol must be positive");
    if (max_iter == 0) throw std::invalid_argument("max_iter must be positive");
}

ValueGrid auxiliary_operator(const Valuator& val, const PolicyGrid& phi) {
    return ValueGrid(val.model().grid, val.evaluate(phi).aux);
}

std::vector<double> gibbs_map(const Valuator& val, const PolicyGrid& phi, PolicyEvaluation* ev_out) {
    PolicyEvaluation ev = val.evaluate(phi);
    const double lambda = val.payoff().lambda;
    std::vector<double> out(ev.policy.size());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = gibbs_policy(lambda, ev.reward[i], ev.continuation[i]);
    if (ev_out) *ev_out = std::move(ev);
    return out;
}

namespace {

double sup_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s = std::max(s, std::abs(a[i] - b[i]));
    return s;
}

EquilibriumResult iterate(const Valuator& val, const SolverConfig& cfg, PolicyGrid phi) {
    const Grid1D grid = val.model().grid;
    EquilibriumResult best;
    best.residual = std::numeric_limits<double>::infinity();
    std::vector<double> cur = phi.values();
    for (std::size_t it = 0;; ++it) {
        PolicyEvaluation ev;
        const std::vector<double> mapped = gibbs_map(val, PolicyGrid(grid, cur), &ev);
        for (double v : mapped)
            if (!std::isfinite(v)) throw NumericFailure("non-finite policy iterate", cur);
        const double residual = sup_diff(cur, mapped);
        if (residual < best.residual) {
            best.residual = residual;
            best.policy = PolicyGrid(grid, cur);
            best.aux_value = ValueGrid(grid, ev.aux);
            best.iterations = it;
        }
        if (residual <= cfg.residual_tol) {
            best.converged = true;
            best.log.push_back({it, residual, 0.0});
            break;
        }
        if (it >= cfg.max_iter) {
            best.log.push_back({it, residual, 0.0});
            break;
        }
        std::vector<double> nxt(cur.size());
        for (std::size_t i = 0; i < cur.size(); ++i)
            nxt[i] = std::clamp((1.0 - cfg.damping) * cur[i] + cfg.damping * mapped[i], 0.0, 1.0);
        best.log.push_back({it, residual, sup_diff(cur, nxt)});
        cur.swap(nxt);
    }
    return best;
}

}  // namespace

EquilibriumResult solve_fixed_point(const ModelSpec& model, const Discount& discount,
                                    const SolverConfig& cfg, std::optional<PolicyGrid> init) {
    cfg.validate();
    const Valuator val(model, PayoffSpec{discount, cfg.lambda, cfg.regularize_discount});
    PolicyGrid phi = init ? *init : PolicyGrid::constant(model.grid, 0.5);
    if (phi.grid().size() != model.grid.size())
        throw std::invalid_argument("initial policy grid does not match model grid");
    return iterate(val, cfg, std::move(phi));
}

std::vector<EquilibriumResult> solve_continuation(const ModelSpec& model, const Discount& discount,
                                                  SolverConfig cfg,
                                                  const std::vector<double>& schedule) {
    std::vector<EquilibriumResult> out;
    std::optional<PolicyGrid> warm;
    for (double lam : schedule) {
        cfg.lambda = lam;
        out.push_back(solve_fixed_point(model, discount, cfg, warm));
        warm = out.back().policy;
    }
    return out;
}

double regularized_equilibrium_gap(const ModelSpec& model, const Discount& discount, double lambda,
                                   const PolicyGrid& phi, bool regularize_discount) {
    if (!(lambda > 0.0)) throw std::invalid_argument("lambda must be positive");
    const Valuator val(model, PayoffSpec{discount, lambda, regularize_discount});
    const PolicyEvaluation ev = val.evaluate(phi);
    double gap = 0.0;
    for (std::size_t i = 0; i < ev.value.size(); ++i) {
        const double best = regularized_best_response_value(lambda, ev.reward[i], ev.continuation[i]);
        gap = std::max(gap, best - ev.value[i]);
    }
    return gap;
}

double epsilon_gap_unregularized(const ModelSpec& model, const Discount& discount,
                                 const PolicyFn& phi) {
    const Valuator val(model, PayoffSpec{discount, 0.0, false});
    const PolicyEvaluation ev = val.evaluate(phi);
    double gap = 0.0;
    for (std::size_t i = 0; i < ev.value.size(); ++i) {
        const double r = ev.reward[i], f = ev.continuation[i];
        gap = std::max(gap, std::max(r, f) - ev.value[i]);
    }
    return gap;
}

RelaxedReport relaxed_report_from(const PolicyEvaluation& ev, const Grid1D& grid, double band,
                                  double policy_tol) {
    if (!(band > 0.0)) throw std::invalid_argument("band must be positive");
    RelaxedReport rep;
    const std::size_t n = ev.policy.size();
    rep.classes.resize(n);
    rep.margin.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double m = ev.reward[i] - ev.continuation[i];
        const double p = ev.policy[i];
        rep.margin[i] = m;
        if (m > band) {
            rep.classes[i] = RegionClass::stop_required;
            ++rep.stop_count;
            if (p < 1.0 - policy_tol) rep.violations.push_back(i);
        } else if (m < -band) {
            rep.classes[i] = RegionClass::continue_required;
            ++rep.continue_count;
            if (p > policy_tol) rep.violations.push_back(i);
        } else {
            rep.classes[i] = RegionClass::indifferent;
            ++rep.indifferent_count;
        }
    }
    std::size_t i = 0;
    while (i < n && ev.policy[i] >= 1.0 - policy_tol) ++i;
    if (i > 0) rep.lower_threshold = grid.node(i - 1);
    while (i < n && ev.policy[i] > policy_tol) ++i;
    if (i < n) rep.upper_threshold = grid.node(i);
    return rep;
}

RelaxedReport relaxed_equilibrium_report(const ModelSpec& model, const Discount& discount,
                                         const PolicyFn& phi, double band) {
    const Valuator val(model, PayoffSpec{discount, 0.0, false});
    return relaxed_report_from(val.evaluate(phi), model.grid, band);
}

void write_residual_csv(std::ostream& os, const std::vector<IterationRecord>& log) {
    CsvWriter csv(os, {"iter", "residual", "sup_policy_change"});
    for (const auto& r : log) csv.row(r.iter, r.residual, r.sup_policy_change);
}

}  // namespace mfstop
