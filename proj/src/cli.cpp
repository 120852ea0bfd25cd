#include "mfstop/cli.hpp"

#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <ostream>

#include "CLI11.hpp"
#include "mfstop/config.hpp"
#include "mfstop/diagnostics.hpp"
#include "mfstop/discount.hpp"
#include "mfstop/etf_rl.hpp"
#include "mfstop/io.hpp"
#include "mfstop/nagent.hpp"
#include "mfstop/parallel.hpp"
#include "mfstop/rd_example.hpp"
#include "mfstop/rng.hpp"
#include "mfstop/solver.hpp"
#include "mfstop/valuation.hpp"

namespace fs = std::filesystem;

namespace mfstop {

const char* version() noexcept { return "0.1.0"; }

namespace {

struct RunContext {
    std::string command;
    Json params;
    ModelConfig model;
    bool uses_model = false;
    SeedChoice seed;
    std::size_t threads = 1;
    fs::path out_dir;
    std::vector<std::string> outputs;

    double real(const char* k) const { return params.at(k).get<double>(); }
    long long integer(const char* k) const { return params.at(k).get<long long>(); }
    std::size_t count(const char* k) const {
        const long long v = integer(k);
        if (v < 0) throw ConfigError(std::string(k) + " must be nonnegative");
        return static_cast<std::size_t>(v);
    }
    bool flag(const char* k) const { return params.at(k).get<bool>(); }
    std::string text(const char* k) const { return params.at(k).get<std::string>(); }
    std::vector<double> reals(const char* k) const { return params.at(k).get<std::vector<double>>(); }
    std::vector<std::size_t> counts(const char* k) const {
        std::vector<std::size_t> out;
        for (const auto& v : params.at(k)) {
            if (v.get<long long>() < 1) throw ConfigError(std::string(k) + " entries must be positive");
            out.push_back(v.get<std::size_t>());
        }
        return out;
    }

    /// Opens out_dir/name in binary mode so line endings stay LF.
    std::ofstream open(const std::string& name) {
        fs::create_directories(out_dir);
        std::ofstream os(out_dir / name, std::ios::binary);
        if (!os) throw std::runtime_error("cannot write " + (out_dir / name).string());
        outputs.push_back(name);
        return os;
    }
};

struct CommandResult {
    int status = exit_ok;
    std::string state = "ok";
    Json body = Json::object();
};

struct Command {
    std::string name;
    std::string help;
    std::vector<ParamSpec> params;
    bool uses_model;
    ExampleKind default_example;
    std::function<CommandResult(RunContext&)> run;
};

ParamSpec real(std::string n, double d, std::string h) { return {std::move(n), ParamType::real, d, std::move(h)}; }
ParamSpec integer(std::string n, long long d, std::string h) {
    return {std::move(n), ParamType::integer, d, std::move(h)};
}
ParamSpec boolean(std::string n, bool d, std::string h) { return {std::move(n), ParamType::boolean, d, std::move(h)}; }
ParamSpec choice(std::string n, std::string d, std::vector<std::string> c, std::string h) {
    return {std::move(n), ParamType::text, d, std::move(h), std::move(c)};
}
ParamSpec reals(std::string n, std::vector<double> d, std::string h) {
    return {std::move(n), ParamType::real_list, d, std::move(h)};
}
ParamSpec integers(std::string n, std::vector<long long> d, std::string h) {
    return {std::move(n), ParamType::integer_list, d, std::move(h)};
}

// Nulls stand in for non-finite values so the summary stays valid JSON.
Json num(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

std::string utc_now() {
    const std::time_t t = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

PolicyFn as_fn(const PolicyGrid& g) {
    return [g](double x) { return g(x); };
}

RdParams rd_params(const RunContext& c) {
    RdParams p{c.real("K"), c.real("beta")};
    p.validate();
    return p;
}

void require_example(const RunContext& c, std::initializer_list<ExampleKind> ok) {
    for (auto k : ok)
        if (c.model.example == k) return;
    throw ConfigError(c.command + " does not support this model example");
}

std::vector<ParamSpec> rd_base() {
    return {real("K", 1.8, "discount amplitude K"), real("beta", 0.5, "discount base beta")};
}

std::vector<ParamSpec> with(std::vector<ParamSpec> a, const std::vector<ParamSpec>& b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
}

// ---- rd-solve ---------------------------------------------------------------

CommandResult cmd_rd_solve(RunContext& c) {
    SolverConfig sc;
    sc.lambda = c.real("lambda");
    sc.damping = c.real("damping");
    sc.max_iter = c.count("max_iter");
    sc.residual_tol = c.real("tol");
    sc.regularize_discount = c.flag("regularize_discount");
    sc.validate();
    const double init = c.real("init");
    if (!(init >= 0.0 && init <= 1.0)) throw ConfigError("init must lie in [0,1]");
    const RdParams rp = rd_params(c);
    const Discount disc = rp.discount();
    const ModelSpec model = build_model(c.model, c.seed.seed);

    const auto res = solve_fixed_point(model, disc, sc, PolicyGrid::constant(model.grid, init));
    {
        auto os = c.open("residuals.csv");
        write_residual_csv(os, res.log);
    }
    const Valuator val(model, PayoffSpec{disc, sc.lambda, sc.regularize_discount});
    const PolicyEvaluation ev = val.evaluate(res.policy);
    {
        auto os = c.open("policy.csv");
        CsvWriter csv(os, {"mu", "phi", "aux_value", "continuation", "reward"});
        for (std::size_t i = 0; i < model.grid.size(); ++i)
            csv.row(model.grid.node(i), ev.policy[i], ev.aux[i], ev.continuation[i], ev.reward[i]);
    }
    const double reg_gap =
        regularized_equilibrium_gap(model, disc, sc.lambda, res.policy, sc.regularize_discount);
    const double eps_gap = epsilon_gap_unregularized(model, disc, as_fn(res.policy));

    CommandResult out;
    Json& b = out.body;
    b["lambda"] = sc.lambda;
    b["regularize_discount"] = sc.regularize_discount;
    b["converged"] = res.converged;
    b["iterations"] = res.iterations;
    b["residual"] = num(res.residual);
    b["regularized_gap"] = num(reg_gap);
    b["epsilon_gap"] = num(eps_gap);
    b["horizon"] = val.horizon();
    b["tail_bound"] = num(val.tail_bound());
    if (c.model.example == ExampleKind::rd) {
        const auto th = thresholds(rp);
        b["closed_form"] = Json{{"a", th.a}, {"b", th.b}, {"mixed", th.mixed}};
    }
    b["tolerances"] = Json{{"residual", sc.residual_tol}};
    if (!res.converged) {
        out.status = exit_not_converged;
        out.state = "not_converged";
    }
    return out;
}

// ---- rd-ode -----------------------------------------------------------------

CommandResult cmd_rd_ode(RunContext& c) {
    const double lambda = c.real("lambda");
    if (!(lambda > 0.0)) throw ConfigError("lambda must be positive");
    const RdParams rp = rd_params(c);
    const auto sol = solve_regularized_ode(rp, lambda, c.real("step"));
    {
        auto os = c.open("ode.csv");
        write_ode_csv(os, rp, sol);
    }
    CommandResult out;
    Json& b = out.body;
    b["lambda"] = lambda;
    b["step"] = c.real("step");
    b["rows"] = sol.mu.size();
    b["v0"] = num(sol.v0);
    b["slope0"] = num(sol.slope0);
    b["v0_limit"] = rp.k_amp * rp.beta;
    return out;
}

// ---- rd-converge ------------------------------------------------------------

CommandResult cmd_rd_converge(RunContext& c) {
    const RdParams rp = rd_params(c);
    const auto lambdas = c.reals("lambdas");
    for (double l : lambdas)
        if (!(l > 0.0)) throw ConfigError("lambda must be positive");
    const double phi_tol = c.real("phi_tol"), v0_tol = c.real("v0_tol");
    const auto rows = convergence_table(rp, lambdas, c.real("exclusion"), c.real("step"));
    {
        auto os = c.open("convergence.csv");
        CsvWriter csv(os, {"lambda", "phi_gap", "v_gap", "v0"});
        for (const auto& r : rows) csv.row(r.lambda, r.phi_gap, r.v_gap, r.v0);
    }
    bool decreasing = true;
    for (std::size_t i = 1; i < rows.size(); ++i)
        decreasing = decreasing && rows[i].phi_gap < rows[i - 1].phi_gap;
    const auto& last = rows.back();
    const double target = rp.k_amp * rp.beta;

    CommandResult out;
    Json& b = out.body;
    b["exclusion"] = c.real("exclusion");
    Json arr = Json::array();
    for (const auto& r : rows)
        arr.push_back(Json{{"lambda", r.lambda}, {"phi_gap", num(r.phi_gap)}, {"v_gap", num(r.v_gap)},
                           {"v0", num(r.v0)}});
    b["rows"] = arr;
    b["strictly_decreasing"] = decreasing;
    b["phi_gap_final"] = num(last.phi_gap);
    b["v0_final"] = num(last.v0);
    b["v0_limit"] = target;
    b["passed"] = decreasing && last.phi_gap <= phi_tol && std::abs(last.v0 - target) <= v0_tol;
    b["tolerances"] = Json{{"phi_gap", phi_tol}, {"v0", v0_tol}};
    return out;
}

// ---- nagent-rate ------------------------------------------------------------

CommandResult cmd_nagent_rate(RunContext& c) {
    const double p = c.real("p");
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("p must lie in [0,1]");
    const auto ns = c.counts("Ns");
    const auto res = estimate_empirical_rate(p, ns, c.count("samples"), c.seed.seed);
    {
        auto os = c.open("rate.csv");
        write_rate_csv(os, res.rows);
    }
    CommandResult out;
    Json& b = out.body;
    b["p"] = p;
    b["samples"] = c.count("samples");
    Json arr = Json::array();
    for (const auto& r : res.rows)
        arr.push_back(Json{{"N", r.n}, {"estimate", r.estimate}, {"stderr", r.std_error},
                           {"exact", exact_empirical_rate(p, r.n)}});
    b["rows"] = arr;
    b["slope"] = num(res.slope);
    b["slope_half_width"] = num(res.slope_half_width);
    b["expected_slope"] = -0.5;
    b["gap"] = num(std::abs(res.slope + 0.5));
    return out;
}

// ---- nagent-eps -------------------------------------------------------------

CommandResult cmd_nagent_eps(RunContext& c) {
    require_example(c, {ExampleKind::rd});
    const double lambda = c.real("lambda");
    const std::string kind = c.text("policy");
    if (kind == "regularized" && !(lambda > 0.0)) throw ConfigError("lambda must be positive");
    const double nu0 = c.real("nu0");
    if (!(nu0 >= 0.0 && nu0 <= 1.0)) throw ConfigError("nu0 must lie in [0,1]");
    const auto ns = c.counts("Ns");
    const RdParams rp = rd_params(c);
    NAgentConfig na;
    na.discount = rp.discount();
    na.horizon = c.count("horizon");
    na.paths = c.count("paths");
    na.seed = c.seed.seed;
    na.per_agent = c.flag("per_agent");
    if (na.paths < 2) throw ConfigError("paths must be >= 2");

    CommandResult out;
    Json& b = out.body;
    PolicyFn phi;
    ModelSpec model;
    if (kind == "regularized") {
        model = build_model(c.model, c.seed.seed);
        SolverConfig sc;
        sc.lambda = lambda;
        const auto res = solve_fixed_point(model, na.discount, sc);
        phi = as_fn(res.policy);
        b["solver"] = Json{{"converged", res.converged}, {"iterations", res.iterations},
                           {"residual", num(res.residual)}};
        if (!res.converged) {
            out.status = exit_not_converged;
            out.state = "not_converged";
        }
    } else {
        phi = [rp](double m) { return closed_form_policy(rp, m); };
    }

    std::vector<RateRow> rows;
    Json arr = Json::array();
    for (std::size_t n : ns) {
        const auto g = n_agent_epsilon_gap(n, phi, nu0, na);
        rows.push_back({n, g.gap, g.std_error});
        arr.push_back(Json{{"N", n}, {"gap", num(g.gap)}, {"stderr", num(g.std_error)},
                           {"gain_stop", num(g.gain_stop.value)},
                           {"gain_continue", num(g.gain_continue.value)},
                           {"value", num(g.value.value)}});
    }
    {
        auto os = c.open("eps.csv");
        write_rate_csv(os, rows);
    }
    const double tol = c.real("tolerance");
    b["policy"] = kind;
    b["lambda"] = lambda;
    b["nu0"] = nu0;
    b["paths"] = na.paths;
    b["rows"] = arr;
    b["gap"] = num(rows.back().estimate);
    b["stderr"] = num(rows.back().std_error);
    b["within_tolerance"] = rows.back().estimate <= tol + 3.0 * rows.back().std_error;
    bool positive = rows.size() >= 3;
    for (const auto& r : rows) positive = positive && r.estimate > 0.0;
    if (positive) {
        const auto fit = fit_log_log(rows);
        b["slope"] = num(fit.slope);
        b["slope_half_width"] = num(fit.half_width);
    } else {
        b["slope"] = nullptr;
        b["slope_half_width"] = nullptr;
    }
    b["tolerances"] = Json{{"gap", tol}};
    return out;
}

// ---- etf --------------------------------------------------------------------

std::vector<ParamSpec> market_params() {
    const EtfParams d;
    return {real("a_bar", d.a_bar, "return drift"),
            real("b_bar", d.b_bar, "return persistence"),
            real("c_bar", d.c_bar, "noise scale"),
            real("d_bar", d.d_bar, "noise loading on the return"),
            real("strike", d.strike, "strike P0"),
            integer("noise_df", d.noise_df, "Student-t degrees of freedom")};
}

EtfParams etf_params(const RunContext& c, bool with_control) {
    EtfParams p;
    p.a_bar = c.real("a_bar");
    p.b_bar = c.real("b_bar");
    p.c_bar = c.real("c_bar");
    p.d_bar = c.real("d_bar");
    p.strike = c.real("strike");
    p.noise_df = static_cast<int>(c.integer("noise_df"));
    if (with_control) {
        p.k_amp = c.real("K");
        p.beta = c.real("beta");
        p.lambda = c.real("lambda");
    }
    p.validate();
    return p;
}

CommandResult cmd_etf_train(RunContext& c) {
    const EtfParams p = etf_params(c, true);
    TdConfig cfg;
    cfg.batch = c.count("batch");
    cfg.horizon = c.count("horizon");
    cfg.lr = c.real("lr");
    cfg.passes = c.count("passes");
    cfg.optimizer = c.text("optimizer") == "adam" ? Optimizer::adam : Optimizer::sgd;
    if (!(cfg.lr > 0.0)) throw ConfigError("lr must be positive");
    const std::size_t outer = c.count("L");
    if (outer < 1) throw ConfigError("L must be >= 1");
    const auto res = policy_iteration(p, outer, cfg, c.seed.seed, default_etf_grid(p));
    {
        auto os = c.open("policy.csv");
        write_policy_csv(os, res.policy);
    }
    {
        auto os = c.open("loss.csv");
        write_loss_csv(os, res.history);
    }
    const auto rep = policy_region_report(res.policy);
    double hold_lo = INFINITY, hold_hi = -INFINITY;
    const Grid2D& g = res.policy.grid;
    for (std::size_t i = 0; i < g.np(); ++i)
        for (std::size_t j = 0; j < g.nr(); ++j)
            if (rep.cls[g.index(i, j)] == -1) {
                hold_lo = std::min(hold_lo, g.price(i));
                hold_hi = std::max(hold_hi, g.price(i));
            }

    CommandResult out;
    Json& b = out.body;
    b["outer_iterations"] = res.history.size();
    b["diverged"] = res.diverged;
    if (!res.history.empty()) {
        const auto& first = res.history.front();
        const auto& last = res.history.back();
        b["tdloss_initial"] = num(first.tdloss);
        b["tdloss_final"] = num(last.tdloss);
        b["tdloss_ratio"] = num(last.tdloss / first.tdloss);
        b["celoss_final"] = num(last.celoss);
        b["final_policy_change"] = num(last.policy_change);
    }
    b["regions"] = Json{{"stop", rep.stop}, {"hold", rep.hold}, {"mixed", rep.mixed}};
    b["hold_price_range"] = rep.hold ? Json::array({hold_lo, hold_hi}) : Json(nullptr);
    b["mean_stop_probability"] = Json{{"ret_minus_0.02", mean_stop_probability_at(res.policy, -0.02)},
                                      {"ret_plus_0.02", mean_stop_probability_at(res.policy, 0.02)}};
    b["tolerances"] = Json{{"tdloss_ratio", 0.1}, {"policy_change", 0.05}};
    if (res.diverged) {
        out.status = exit_not_converged;
        out.state = "diverged";
    }
    return out;
}

CommandResult cmd_etf_simulate(RunContext& c) {
    const EtfParams p = etf_params(c, false);
    const std::size_t steps = c.count("steps"), paths = c.count("paths");
    if (steps < 1 || paths < 1) throw ConfigError("steps and paths must be positive");
    InitialLaw init;
    init.fixed = !c.flag("random_start");
    const auto sim = simulate_market(p, steps, paths, c.seed.seed, init);
    {
        auto os = c.open("trajectory.csv");
        write_trajectory_csv(os, sim);
    }
    // Moments of the simulated daily returns, all paths pooled (the start excluded).
    double n = 0, s1 = 0, s2 = 0;
    for (const auto& path : sim)
        for (std::size_t t = 1; t < path.ret.size(); ++t) {
            n += 1;
            s1 += path.ret[t];
        }
    const double mean = s1 / n;
    double m4 = 0;
    for (const auto& path : sim)
        for (std::size_t t = 1; t < path.ret.size(); ++t) {
            const double d = path.ret[t] - mean;
            s2 += d * d;
            m4 += d * d * d * d;
        }
    const double var = s2 / n;
    CommandResult out;
    Json& b = out.body;
    b["steps"] = steps;
    b["paths"] = paths;
    b["mean_return"] = num(mean);
    b["stationary_return"] = p.stationary_return();
    b["return_stderr"] = num(std::sqrt(var / n));
    b["excess_kurtosis"] = num(m4 / n / (var * var) - 3.0);
    return out;
}

// ---- check-invariants -------------------------------------------------------

PolicyGrid random_policy(const Grid1D& grid, std::uint64_t seed, std::uint64_t index) {
    constexpr std::size_t knots = 11;
    std::vector<double> v(knots);
    CounterRng g(seed, StreamKind::sampling, index);
    for (auto& x : v) x = g.uniform();
    const GridFunction coarse(Grid1D(0.0, 1.0, knots), v);
    return PolicyGrid(grid, [&](double m) { return coarse(m); });
}

CommandResult cmd_check_invariants(RunContext& c) {
    require_example(c, {ExampleKind::rd, ExampleKind::custom_table});
    const RdParams rp = rd_params(c);
    const Discount disc = rp.discount();
    const ModelSpec model = build_model(c.model, c.seed.seed);
    const auto lambdas = c.reals("lambdas");
    for (double l : lambdas)
        if (!(l > 0.0)) throw ConfigError("lambda must be positive");
    const std::size_t policies = c.count("policies");

    Json checks = Json::array();
    bool all = true;
    auto record = [&](std::string name, bool ok, double value, double bound) {
        all = all && ok;
        checks.push_back(Json{{"name", std::move(name)}, {"passed", ok}, {"value", num(value)},
                              {"bound", num(bound)}});
    };

    if (c.model.example == ExampleKind::rd) {
        const auto th = thresholds(rp);
        const double a = (1.0 - rp.k_amp * rp.beta) / (1.0 - rp.k_amp * rp.beta / 2.0);
        const double b = (1.0 - rp.beta) / (2.0 - rp.beta);
        record("thresholds", th.a == a && th.b == b, std::max(std::abs(th.a - a), std::abs(th.b - b)), 0.0);
    }

    const double l0 = 2.0 * std::log(2.0) + 1.0;
    const double op_bound = model.reward_bound + l0 * std::log(2.0);
    for (double lam : lambdas) {
        const Valuator val(model, PayoffSpec{disc, lam, true});
        double worst = 0.0, min_gibbs = 1.0, lower = 1.0;
        for (std::size_t k = 0; k < policies; ++k) {
            const PolicyGrid phi = random_policy(model.grid, c.seed.seed, k);
            PolicyEvaluation ev;
            const auto next = gibbs_map(val, phi, &ev);
            double sup = 0.0;
            for (double v : ev.aux) sup = std::max(sup, std::abs(v));
            worst = std::max(worst, sup);
            for (double v : next) min_gibbs = std::min(min_gibbs, v);
            lower = std::min(lower, gibbs_lower_bound(lam, sup, model.reward_bound));
        }
        record("operator_bound_lambda_" + format_number(lam), worst <= op_bound, worst, op_bound);
        record("gibbs_lower_bound_lambda_" + format_number(lam), min_gibbs >= lower, min_gibbs, lower);
    }

    for (double lam : c.reals("tail_lambdas")) {
        if (!(lam > 0.0)) throw ConfigError("lambda must be positive");
        const auto tm = lambda_tail_mass(lam);
        record("tail_mass_lambda_" + format_number(lam), tm.mass <= tm.analytic_bound, tm.mass,
               tm.analytic_bound);
    }

    record("exact_rate_n1", std::abs(exact_empirical_rate(0.5, 1) - 0.5) < 1e-15,
           exact_empirical_rate(0.5, 1), 0.5);

    // Survival-product and direct Bernoulli evaluators on independent seeds.
    const std::size_t pairs = c.count("survival_pairs");
    double worst_z = 0.0;
    for (std::size_t k = 0; k < pairs; ++k) {
        const PolicyGrid phi = random_policy(model.grid, c.seed.seed, 1000 + k);
        CounterRng g(c.seed.seed, StreamKind::initial, k);
        ValuationRequest req{.model = &model,
                             .payoff = PayoffSpec{disc, 0.0, true},
                             .policy = as_fn(phi),
                             .head = std::nullopt,
                             .start = MeanFieldState::live(g.uniform()),
                             .horizon = c.count("survival_horizon"),
                             .shift = Shift::none,
                             .paths = c.count("survival_paths"),
                             .seed = c.seed.seed + 2 * k,
                             .tensor_nodes = 16};
        const Estimate s = survival_value(req);
        req.seed = c.seed.seed + 2 * k + 1;
        const Estimate d = direct_simulation_value(req);
        const double se = std::sqrt(s.std_error * s.std_error + d.std_error * d.std_error);
        worst_z = std::max(worst_z, se > 0.0 ? std::abs(s.value - d.value) / se : 0.0);
    }
    if (pairs > 0) record("survival_equivalence_z", worst_z <= 3.0, worst_z, 3.0);

    CommandResult out;
    out.body["checks"] = checks;
    out.body["all_passed"] = all;
    {
        auto os = c.open("invariants.csv");
        CsvWriter csv(os, {"name", "passed", "value", "bound"});
        for (const auto& ch : checks)
            csv.row(ch["name"].get<std::string>(), std::string(ch["passed"].get<bool>() ? "true" : "false"),
                    ch["value"].is_null() ? std::string("nan") : format_number(ch["value"].get<double>()),
                    ch["bound"].is_null() ? std::string("nan") : format_number(ch["bound"].get<double>()));
    }
    if (!all) {
        out.status = exit_not_converged;
        out.state = "failed";
    }
    return out;
}

// ---- registry ---------------------------------------------------------------

std::vector<Command> commands() {
    std::vector<Command> cmds;
    cmds.push_back({"rd-solve", "Regularized equilibrium of a unit-interval model by damped fixed-point iteration",
                    with(rd_base(), {real("lambda", 0.1, "regularization strength"),
                                     real("damping", 0.5, "Picard damping weight"),
                                     integer("max_iter", 2000, "iteration cap"),
                                     real("tol", 1e-6, "sup-norm residual tolerance"),
                                     real("init", 0.5, "constant initial policy"),
                                     boolean("regularize_discount", true,
                                             "use delta_lambda (false keeps plain delta)")}),
                    true, ExampleKind::rd, cmd_rd_solve});
    cmds.push_back({"rd-ode", "Regularized R&D equilibrium from the scalar ODE",
                    with(rd_base(), {real("lambda", 0.05, "regularization strength"),
                                     real("step", 5e-4, "RK4 step on (0,1]")}),
                    false, ExampleKind::rd, cmd_rd_ode});
    cmds.push_back({"rd-converge", "Sup-gaps of the regularized policy to the relaxed equilibrium",
                    with(rd_base(), {reals("lambdas", {0.1, 0.05, 0.01}, "lambda schedule"),
                                     real("exclusion", 0.05, "half-width excluded around a and b"),
                                     real("step", 5e-4, "RK4 step"),
                                     real("phi_tol", 0.1, "target phi gap at the last lambda"),
                                     real("v0_tol", 0.05, "target |V(0) - K beta| at the last lambda")}),
                    false, ExampleKind::rd, cmd_rd_converge});
    cmds.push_back({"nagent-rate", "Empirical-measure rate E W1(mu_N, mu) over N",
                    {real("p", 0.5, "mass on the first state"),
                     integers("Ns", {100, 1000, 10000, 100000}, "population sizes"),
                     integer("samples", 200000, "Monte Carlo samples per N")},
                    false, ExampleKind::rd, cmd_nagent_rate});
    cmds.push_back({"nagent-eps", "First-step deviation gap of a policy in the N-agent R&D game",
                    with(rd_base(), {real("lambda", 0.05, "regularization of the solved policy"),
                                     choice("policy", "regularized", {"regularized", "closed-form"},
                                            "policy under test"),
                                     real("nu0", 0.6, "initial mass on the first state"),
                                     integers("Ns", {100, 10000}, "population sizes"),
                                     integer("paths", 100000, "simulated paths per N"),
                                     integer("horizon", 60, "simulation horizon"),
                                     boolean("per_agent", false, "per-agent draws instead of binomial counts"),
                                     real("tolerance", 0.05, "target gap")}),
                    true, ExampleKind::rd, cmd_nagent_eps});
    cmds.push_back({"etf-train", "Policy iteration with grid TD evaluation for the ETF put",
                    with(market_params(), {real("K", 1.01, "discount amplitude"),
                                           real("beta", 0.7, "discount base"),
                                           real("lambda", 0.1, "regularization strength"),
                                           integer("L", 100, "outer iterations"),
                                           integer("batch", 200, "paths per batch (M)"),
                                           integer("horizon", 500, "path length (T_m)"),
                                           real("lr", 1e-3, "learning rate"),
                                           integer("passes", 6, "evaluation batches per outer iteration"),
                                           choice("optimizer", "sgd", {"sgd", "adam"}, "table optimizer")}),
                    false, ExampleKind::etf, cmd_etf_train});
    cmds.push_back({"etf-simulate", "Simulate the ETF price/return dynamics",
                    with(market_params(), {integer("steps", 250, "steps per path"),
                                           integer("paths", 1, "number of paths"),
                                           boolean("random_start", false, "draw initial states")}),
                    false, ExampleKind::etf, cmd_etf_simulate});
    cmds.push_back({"check-invariants", "Operator bounds, Gibbs floor, tail mass and evaluator agreement",
                    with(rd_base(), {reals("lambdas", {1.0, 0.1}, "lambdas for operator bounds"),
                                     integer("policies", 20, "random policies per lambda"),
                                     reals("tail_lambdas", {1.0, 0.1, 0.01, 0.001}, "lambdas for tail mass"),
                                     integer("survival_pairs", 10, "random (policy, start) pairs"),
                                     integer("survival_horizon", 12, "valuation horizon"),
                                     integer("survival_paths", 20000, "paths per evaluator")}),
                    true, ExampleKind::rd, cmd_check_invariants});
    return cmds;
}

struct Raw {
    std::string config, model_file, out;
    std::optional<std::uint64_t> seed;
    std::optional<long long> threads, grid_points;
    std::map<std::string, std::string> values;
};

void write_json(const fs::path& path, const Json& j) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    os << j.dump(2) << '\n';
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    const auto cmds = commands();
    CLI::App app{"Mean-field stopping experiments", "mfstop"};
    app.set_version_flag("--version", version());
    app.require_subcommand(1);
    Raw raw;
    std::map<std::string, CLI::Option*> opts;
    std::map<std::string, CLI::App*> subs;
    for (const auto& cmd : cmds) {
        CLI::App* sub = app.add_subcommand(cmd.name, cmd.help);
        subs[cmd.name] = sub;
        sub->add_option("--config", raw.config, "JSON config file; flags override its values");
        sub->add_option("--out", raw.out, "output directory (default mfstop-out/<command>)");
        sub->add_option("--seed", raw.seed, "seed (fallback: config, then MFSTOP_SEED, then 42)");
        sub->add_option("--threads", raw.threads, "worker cap; 0 uses all cores (default 1)");
        if (cmd.uses_model) {
            sub->add_option("--model", raw.model_file, "model JSON file");
            sub->add_option("--grid-points", raw.grid_points, "model grid size");
        }
        for (const auto& p : cmd.params) {
            std::string desc = p.help;
            if (!p.default_value.is_null()) desc += " [default " + p.default_value.dump() + "]";
            opts[cmd.name + "/" + p.name] = sub->add_option(flag_name(p.name), raw.values[cmd.name + "/" + p.name], desc);
        }
    }

    try {
        std::vector<std::string> rev(args.rbegin(), args.rend());
        app.parse(rev);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? exit_ok : exit_usage;
    }

    const Command* cmd = nullptr;
    for (const auto& c : cmds)
        if (subs[c.name]->parsed()) cmd = &c;
    if (!cmd) {
        err << app.help();
        return exit_usage;
    }

    RunContext ctx;
    ctx.command = cmd->name;
    const auto started = std::chrono::steady_clock::now();
    const std::string started_utc = utc_now();
    try {
        Json file = Json();
        if (!raw.config.empty()) {
            file = load_json_file(raw.config);
            reject_unknown_keys(file, {"command", "seed", "threads", "out_dir", "params", "model"}, "config");
            if (file.contains("command") && file.at("command") != cmd->name)
                throw ConfigError("config is for command " + file.at("command").dump() + ", not " + cmd->name);
            if (!cmd->uses_model && file.contains("model"))
                throw ConfigError(cmd->name + " takes no model section");
        }
        std::map<std::string, std::string> flags;
        for (const auto& p : cmd->params)
            if (opts[cmd->name + "/" + p.name]->count() > 0) flags[p.name] = raw.values[cmd->name + "/" + p.name];
        ctx.params = merge_params(cmd->params, file.is_null() ? Json() : file.value("params", Json()), flags);
        ctx.seed = resolve_seed(raw.seed, file);

        long long threads = 1;
        if (!file.is_null() && file.contains("threads")) {
            if (!file["threads"].is_number_integer()) throw ConfigError("threads must be an integer");
            threads = file["threads"].get<long long>();
        }
        if (raw.threads) threads = *raw.threads;
        if (threads < 0) throw ConfigError("threads must be nonnegative");
        set_default_threads(static_cast<std::size_t>(threads));
        ctx.threads = default_threads();

        std::string out_dir = "mfstop-out/" + cmd->name;
        if (!file.is_null() && file.contains("out_dir")) {
            if (!file["out_dir"].is_string()) throw ConfigError("out_dir must be a string");
            out_dir = file["out_dir"].get<std::string>();
        }
        if (!raw.out.empty()) out_dir = raw.out;
        ctx.out_dir = out_dir;

        ctx.uses_model = cmd->uses_model;
        if (cmd->uses_model) {
            ModelConfig m;
            m.example = cmd->default_example;
            if (!file.is_null() && file.contains("model")) m = parse_model_config(file["model"], m);
            if (!raw.model_file.empty()) m = parse_model_config(load_json_file(raw.model_file), m);
            if (raw.grid_points) {
                if (*raw.grid_points < 2) throw ConfigError("grid_points must be >= 2");
                m.grid_points = static_cast<std::size_t>(*raw.grid_points);
            }
            ctx.model = m;
        }
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return exit_usage;
    }

    CommandResult result;
    std::string failure;
    try {
        result = cmd->run(ctx);
    } catch (const NumericFailure& e) {
        result.status = exit_not_converged;
        result.state = "numeric_failure";
        failure = e.what();
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return exit_usage;
    }

    Json summary = Json::object();
    summary["command"] = cmd->name;
    summary["status"] = result.state;
    summary["seed"] = ctx.seed.seed;
    if (!failure.empty()) summary["error"] = failure;
    for (const auto& item : result.body.items()) summary[item.key()] = item.value();

    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    try {
        fs::create_directories(ctx.out_dir);
        write_json(ctx.out_dir / "summary.json", summary);
        ctx.outputs.push_back("summary.json");
        Json manifest = Json::object();
        manifest["tool"] = "mfstop";
        manifest["version"] = version();
        manifest["command"] = cmd->name;
        manifest["seed"] = ctx.seed.seed;
        manifest["seed_source"] = ctx.seed.source;
        manifest["threads"] = ctx.threads;
        manifest["out_dir"] = ctx.out_dir.string();
        manifest["config_file"] = raw.config.empty() ? Json(nullptr) : Json(raw.config);
        manifest["params"] = ctx.params;
        if (ctx.uses_model) manifest["model"] = to_json(ctx.model);
        manifest["outputs"] = ctx.outputs;
        manifest["status"] = result.state;
        manifest["exit_code"] = result.status;
        manifest["started_utc"] = started_utc;
        manifest["finished_utc"] = utc_now();
        manifest["elapsed_seconds"] = elapsed;
        write_json(ctx.out_dir / "manifest.json", manifest);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return exit_usage;
    }
    out << summary.dump(2) << '\n';
    if (!failure.empty()) err << "error: " << failure << '\n';
    return result.status;
}

}  // namespace mfstop
