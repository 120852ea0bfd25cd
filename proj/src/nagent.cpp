#include "mfstop/nagent.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <random>
#include <stdexcept>

#include "mfstop/io.hpp"
#include "mfstop/parallel.hpp"

namespace mfstop {

std::size_t Population::count_a() const noexcept {
    return static_cast<std::size_t>(std::count(states.begin(), states.end(), AgentState::A));
}

double Population::mass_on_a() const noexcept {
    return states.empty() ? 0.0 : static_cast<double>(count_a()) / static_cast<double>(size());
}

CounterRng RngPlan::stream(StreamKind kind, std::uint64_t agent, std::uint64_t time) const {
    return CounterRng(seed, kind, path, agent, time);
}

double RngPlan::initial(std::size_t agent) const {
    const std::size_t a = agent_map.empty() ? agent : agent_map.at(agent);
    return stream(StreamKind::initial, a, 0).uniform();
}

double RngPlan::idiosyncratic(std::size_t agent, std::size_t time) const {
    const std::size_t a = agent_map.empty() ? agent : agent_map.at(agent);
    return stream(StreamKind::idiosyncratic, a, time).uniform();
}

double RngPlan::common(std::size_t time) const {
    return stream(StreamKind::common, 0, time).uniform();
}

double RngPlan::device(std::size_t time) const {
    return stream(StreamKind::stopping, 0, time).uniform();
}

Population initial_population(std::size_t n, double nu0, const RngPlan& rng) {
    if (!(nu0 >= 0.0 && nu0 <= 1.0)) throw std::invalid_argument("nu0 must lie in [0,1]");
    Population pop;
    pop.states.resize(n);
    for (std::size_t i = 0; i < n; ++i)
        pop.states[i] = rng.initial(i) < nu0 ? AgentState::A : AgentState::B;
    return pop;
}

Population step_population(const Population& pop, double phi_at_empirical, double u, double z0,
                           std::span<const double> idio) {
    if (pop.stopped) return pop;
    Population next = pop;
    if (u <= phi_at_empirical) {
        next.stopped = true;
        std::fill(next.states.begin(), next.states.end(), AgentState::stopped);
        return next;
    }
    if (idio.size() < pop.size()) throw std::invalid_argument("missing idiosyncratic draws");
    for (std::size_t i = 0; i < pop.size(); ++i)
        if (pop.states[i] == AgentState::A && idio[i] > z0) next.states[i] = AgentState::B;
    return next;
}

Population step_population(const Population& pop, const PolicyFn& phi, const RngPlan& rng,
                           std::size_t k) {
    if (pop.stopped) return pop;
    std::vector<double> idio(pop.size());
    for (std::size_t i = 0; i < pop.size(); ++i) idio[i] = rng.idiosyncratic(i, k + 1);
    return step_population(pop, phi(pop.mass_on_a()), rng.device(k + 1), rng.common(k + 1), idio);
}

namespace {

// Empirical A-mass along the unstopped chain of one path, plus the common draws.
struct CountPath {
    std::vector<double> mass;
    std::vector<double> z0;  ///< z0[k] drives the move from k to k+1
};

CountPath simulate_counts(std::size_t n, double nu0, const NAgentConfig& cfg, std::uint64_t path) {
    const RngPlan rng{cfg.seed, path, {}};
    CountPath out;
    out.mass.resize(cfg.horizon + 1);
    out.z0.resize(cfg.horizon);
    for (std::size_t k = 0; k < cfg.horizon; ++k) out.z0[k] = rng.common(k + 1);
    const double dn = static_cast<double>(n);
    if (cfg.per_agent) {
        Population pop = initial_population(n, nu0, rng);
        std::vector<double> idio(n);
        out.mass[0] = pop.mass_on_a();
        for (std::size_t k = 0; k < cfg.horizon; ++k) {
            for (std::size_t i = 0; i < n; ++i) idio[i] = rng.idiosyncratic(i, k + 1);
            pop = step_population(pop, 0.0, 1.0, out.z0[k], idio);
            out.mass[k + 1] = pop.mass_on_a();
        }
        return out;
    }
    CounterRng init = rng.stream(StreamKind::initial, 0, 0);
    long long count = std::binomial_distribution<long long>(static_cast<long long>(n), nu0)(init);
    out.mass[0] = static_cast<double>(count) / dn;
    for (std::size_t k = 0; k < cfg.horizon; ++k) {
        if (count > 0) {
            CounterRng g = rng.stream(StreamKind::idiosyncratic, 0, k + 1);
            count = std::binomial_distribution<long long>(count, out.z0[k])(g);
        }
        out.mass[k + 1] = static_cast<double>(count) / dn;
    }
    return out;
}

// sum_{k >= from} delta(k) (1 - m_k) phi(m_k) prod_{from <= j < k} (1 - phi(m_j))
double path_value(const std::vector<double>& mass, const std::vector<double>& w, const PolicyFn& phi,
                  std::size_t from, std::optional<double> head) {
    double acc = 0.0, survive = 1.0;
    for (std::size_t k = from; k < mass.size(); ++k) {
        const double p = (k == from && head) ? *head : phi(mass[k]);
        acc += w[k] * (1.0 - mass[k]) * p * survive;
        survive *= 1.0 - p;
        if (survive == 0.0) break;
    }
    return acc;
}

Estimate summarize(const std::vector<double>& v) {
    const double n = static_cast<double>(v.size());
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= n;
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return {mean, v.size() > 1 ? std::sqrt(ss / (n - 1.0) / n) : 0.0};
}

std::vector<double> discount_weights(const NAgentConfig& cfg) {
    std::vector<double> w(cfg.horizon + 1);
    for (std::size_t k = 0; k <= cfg.horizon; ++k) w[k] = cfg.discount.weight(k);
    return w;
}

void check(std::size_t n, double nu0, const NAgentConfig& cfg) {
    if (n == 0) throw std::invalid_argument("N must be positive");
    if (!(nu0 >= 0.0 && nu0 <= 1.0)) throw std::invalid_argument("nu0 must lie in [0,1]");
    if (cfg.paths == 0) throw std::invalid_argument("paths must be positive");
}

}  // namespace

Estimate n_agent_average_value(std::size_t n, const PolicyFn& phi, std::optional<double> head,
                               double nu0, const NAgentConfig& cfg) {
    check(n, nu0, cfg);
    const auto w = discount_weights(cfg);
    std::vector<double> v(cfg.paths);
    parallel_for(cfg.paths, [&](std::size_t path) {
        v[path] = path_value(simulate_counts(n, nu0, cfg, path).mass, w, phi, 0, head);
    });
    return summarize(v);
}

DeviationGap n_agent_epsilon_gap(std::size_t n, const PolicyFn& phi, double nu0,
                                 const NAgentConfig& cfg) {
    check(n, nu0, cfg);
    const auto w = discount_weights(cfg);
    std::vector<double> d_stop(cfg.paths), d_cont(cfg.paths), val(cfg.paths);
    parallel_for(cfg.paths, [&](std::size_t path) {
        const auto cp = simulate_counts(n, nu0, cfg, path);
        const double r0 = 1.0 - cp.mass[0];
        const double p0 = phi(cp.mass[0]);
        const double cont = path_value(cp.mass, w, phi, 1, std::nullopt);
        d_stop[path] = (1.0 - p0) * (r0 - cont);
        d_cont[path] = p0 * (cont - r0);
        val[path] = p0 * r0 + (1.0 - p0) * cont;
    });
    DeviationGap g;
    g.gain_stop = summarize(d_stop);
    g.gain_continue = summarize(d_cont);
    g.value = summarize(val);
    const bool stop_better = g.gain_stop.value >= g.gain_continue.value;
    g.gap = stop_better ? g.gain_stop.value : g.gain_continue.value;
    g.std_error = stop_better ? g.gain_stop.std_error : g.gain_continue.std_error;
    return g;
}

CoupledDifference n_agent_value_difference(std::size_t n, const PolicyFn& phi, double nu0,
                                           const NAgentConfig& cfg) {
    check(n, nu0, cfg);
    const auto w = discount_weights(cfg);
    std::vector<double> vn(cfg.paths), vm(cfg.paths), d(cfg.paths);
    parallel_for(cfg.paths, [&](std::size_t path) {
        const auto cp = simulate_counts(n, nu0, cfg, path);
        std::vector<double> mf(cp.mass.size());
        mf[0] = nu0;
        for (std::size_t k = 0; k + 1 < mf.size(); ++k) mf[k + 1] = mf[k] * cp.z0[k];
        vn[path] = path_value(cp.mass, w, phi, 0, std::nullopt);
        vm[path] = path_value(mf, w, phi, 0, std::nullopt);
        d[path] = vn[path] - vm[path];
    });
    return {summarize(d), summarize(vn), summarize(vm)};
}

double exact_empirical_rate(double p, std::size_t n) {
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("p must lie in [0,1]");
    if (n == 0) throw std::invalid_argument("N must be positive");
    if (p == 0.0 || p == 1.0) return 0.0;
    const double dn = static_cast<double>(n);
    const double lp = std::log(p), lq = std::log1p(-p);
    double s = 0.0;
    for (std::size_t k = 0; k <= n; ++k) {
        const double dk = static_cast<double>(k);
        const double logc = std::lgamma(dn + 1.0) - std::lgamma(dk + 1.0) - std::lgamma(dn - dk + 1.0);
        s += std::exp(logc + dk * lp + (dn - dk) * lq) * std::abs(dk / dn - p);
    }
    return s;
}

LogLogFit fit_log_log(const std::vector<RateRow>& rows) {
    const std::size_t m = rows.size();
    if (m < 2) throw std::invalid_argument("need at least two points for a log-log fit");
    double xbar = 0.0, ybar = 0.0;
    std::vector<double> x(m), y(m), sy(m);
    for (std::size_t i = 0; i < m; ++i) {
        if (!(rows[i].estimate > 0.0)) throw std::domain_error("log-log fit needs positive estimates");
        x[i] = std::log(static_cast<double>(rows[i].n));
        y[i] = std::log(rows[i].estimate);
        sy[i] = rows[i].std_error / rows[i].estimate;
        xbar += x[i];
        ybar += y[i];
    }
    xbar /= static_cast<double>(m);
    ybar /= static_cast<double>(m);
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        sxx += (x[i] - xbar) * (x[i] - xbar);
        sxy += (x[i] - xbar) * (y[i] - ybar);
    }
    // Delta method: the slope is linear in y, and var(log e) ~ (se / e)^2.
    double var = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        const double c = (x[i] - xbar) / sxx;
        var += c * c * sy[i] * sy[i];
    }
    return {sxy / sxx, 1.959963984540054 * std::sqrt(var)};
}

RateResult estimate_empirical_rate(double p, const std::vector<std::size_t>& ns,
                                   std::size_t samples, std::uint64_t seed) {
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("p must lie in [0,1]");
    if (ns.size() < 2) throw std::invalid_argument("need at least two values of N");
    if (samples < 2) throw std::invalid_argument("need at least two samples");
    for (std::size_t i = 0; i < ns.size(); ++i)
        if (ns[i] == 0 || (i > 0 && ns[i] <= ns[i - 1]))
            throw std::invalid_argument("Ns must be positive and increasing");
    RateResult res;
    for (std::size_t idx = 0; idx < ns.size(); ++idx) {
        const std::size_t n = ns[idx];
        std::vector<double> d(samples);
        parallel_for(samples, [&](std::size_t s) {
            CounterRng g(seed, StreamKind::sampling, idx, s);
            const long long k = std::binomial_distribution<long long>(static_cast<long long>(n), p)(g);
            d[s] = wasserstein_two_point(static_cast<double>(k) / static_cast<double>(n), p);
        });
        const Estimate e = summarize(d);
        res.rows.push_back({n, e.value, e.std_error});
    }
    const LogLogFit fit = fit_log_log(res.rows);
    res.slope = fit.slope;
    res.slope_half_width = fit.half_width;
    return res;
}

void write_rate_csv(std::ostream& os, const std::vector<RateRow>& rows) {
    CsvWriter csv(os, {"N", "estimate", "stderr"});
    for (const auto& r : rows) csv.row(r.n, r.estimate, r.std_error);
}

}  // namespace mfstop
