#include "mfstop/etf_rl.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <random>
#include <stdexcept>

#include "mfstop/diagnostics.hpp"
#include "mfstop/discount.hpp"
#include "mfstop/io.hpp"
#include "mfstop/parallel.hpp"
#include "mfstop/rng.hpp"
#include "mfstop/solver.hpp"

namespace mfstop {

void EtfParams::validate() const {
    if (!(strike > 0.0)) throw std::invalid_argument("strike must be positive");
    if (!(beta > 0.0 && beta < 1.0)) throw std::invalid_argument("beta must lie in (0,1)");
    if (!(k_amp > 0.0 && k_amp * beta < 1.0)) throw std::invalid_argument("K*beta must be < 1");
    if (!(lambda > 0.0)) throw std::invalid_argument("lambda must be positive");
    if (noise_df < 1) throw std::invalid_argument("noise_df must be >= 1");
    if (!(std::abs(b_bar) < 1.0)) throw std::invalid_argument("|b_bar| must be < 1");
}

Grid2D::Grid2D(double p_lo, double p_hi, std::size_t np, double r_lo, double r_hi, std::size_t nr)
    : p_lo_(p_lo), r_lo_(r_lo), np_(np), nr_(nr) {
    if (np < 2 || nr < 2) throw std::invalid_argument("2-D grid needs at least 2 nodes per axis");
    if (!(p_hi > p_lo && r_hi > r_lo)) throw std::invalid_argument("grid bounds must be increasing");
    hp_ = (p_hi - p_lo) / static_cast<double>(np - 1);
    hr_ = (r_hi - r_lo) / static_cast<double>(nr - 1);
}

namespace {

std::pair<std::size_t, double> axis(double x, double lo, double h, std::size_t n) {
    double s = (x - lo) / h;
    s = std::clamp(s, 0.0, static_cast<double>(n - 1));
    std::size_t i = static_cast<std::size_t>(s);
    if (i >= n - 1) i = n - 2;
    return {i, s - static_cast<double>(i)};
}

}  // namespace

Grid2D::Stencil Grid2D::stencil(EtfState s) const noexcept {
    const auto [i, tp] = axis(s.price, p_lo_, hp_, np_);
    const auto [j, tr] = axis(s.ret, r_lo_, hr_, nr_);
    return {{index(i, j), index(i, j + 1), index(i + 1, j), index(i + 1, j + 1)},
            {(1 - tp) * (1 - tr), (1 - tp) * tr, tp * (1 - tr), tp * tr}};
}

double Table2D::operator()(EtfState s) const noexcept {
    const auto st = grid.stencil(s);
    double v = 0.0;
    for (int c = 0; c < 4; ++c) v += st.w[c] * values[st.idx[c]];
    return v;
}

Grid2D default_etf_grid(const EtfParams& p) {
    return Grid2D(0.0, 2.0 * p.strike, 101, -0.1, 0.1, 41);
}

std::vector<MarketPath> simulate_market(const EtfParams& p, std::size_t steps, std::size_t paths,
                                        std::uint64_t seed, const InitialLaw& init,
                                        std::uint64_t stream) {
    p.validate();
    if (steps < 1) throw std::invalid_argument("T must be >= 1");
    const double cap = 2.0 * p.strike;
    std::vector<MarketPath> out(paths);
    parallel_for(paths, [&](std::size_t j) {
        CounterRng start(seed, StreamKind::initial, j, stream);
        CounterRng noise(seed, StreamKind::market, j, stream);
        std::student_t_distribution<double> eps(p.noise_df);
        MarketPath& path = out[j];
        path.price.resize(steps);
        path.ret.resize(steps);
        path.avg_sq_return.resize(steps);
        double price = p.strike, ret = p.stationary_return();
        if (!init.fixed) {
            price = p.strike * (init.price_lo + (init.price_hi - init.price_lo) * start.uniform());
            ret += init.ret_spread * (2.0 * start.uniform() - 1.0);
        }
        double v = ret * ret;
        for (std::size_t t = 0; t < steps; ++t) {
            path.price[t] = price;
            path.ret[t] = ret;
            path.avg_sq_return[t] = v;
            const double e = eps(noise);
            const double f = p.a_bar + p.b_bar * ret, g = p.c_bar + p.d_bar * ret;
            // Average squared return with no idiosyncratic dispersion.
            v = f * f + g * g * e * e + 2.0 * f * g * e;
            ret = std::clamp(f + g * e, -1.0, 1.0);
            price = std::clamp(price * (1.0 + ret), 0.0, cap);
        }
    });
    return out;
}

Table2D gibbs_update(const EtfParams& p, const Table2D& f) {
    Table2D phi(f.grid, 0.0);
    for (std::size_t i = 0; i < f.grid.np(); ++i)
        for (std::size_t j = 0; j < f.grid.nr(); ++j) {
            const std::size_t k = f.grid.index(i, j);
            phi.values[k] = gibbs_policy(p.lambda, p.reward(f.grid.price(i)), p.k_amp * f.values[k]);
        }
    return phi;
}

namespace {

// Dense Adam step with the usual defaults (0.9, 0.999, 1e-8). The update is
// invariant to gradient scale, so the summed batch gradient is used as is.
void adam_step(AdamState& st, std::vector<double>& x, const std::vector<double>& grad, double lr) {
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    if (st.m.size() != x.size()) {
        st.m.assign(x.size(), 0.0);
        st.v.assign(x.size(), 0.0);
        st.steps = 0;
    }
    ++st.steps;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(st.steps));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(st.steps));
    for (std::size_t q = 0; q < x.size(); ++q) {
        st.m[q] = b1 * st.m[q] + (1.0 - b1) * grad[q];
        st.v[q] = b2 * st.v[q] + (1.0 - b2) * grad[q] * grad[q];
        x[q] -= lr * (st.m[q] / c1) / (std::sqrt(st.v[q] / c2) + eps);
    }
}

}  // namespace

TdResult td_evaluate_policy(const EtfParams& p, const Table2D& phi, ApproximatorTables tables,
                            const TdConfig& cfg, std::uint64_t seed, std::uint64_t sweep) {
    if (cfg.batch < 1) throw std::invalid_argument("batch must be >= 1");
    if (cfg.horizon < 2) throw std::invalid_argument("T_m must be >= 2");
    const std::size_t m = cfg.batch, tm = cfg.horizon;
    const auto paths = simulate_market(p, tm, m, seed, cfg.init, sweep + 1);

    // Policy and entropy-augmented reward along every sampled path.
    std::vector<double> phik(m * tm), rewards(m * tm);
    for (std::size_t j = 0; j < m; ++j)
        for (std::size_t k = 0; k < tm; ++k) {
            const EtfState s{paths[j].price[k], paths[j].ret[k]};
            const double f = std::clamp(phi(s), 0.0, 1.0);
            phik[j * tm + k] = f;
            rewards[j * tm + k] = p.reward(s.price) * f + p.lambda * shannon_entropy(f);
        }

    TdResult res;
    res.trace.reserve(tm - 1);
    auto& F = tables.f.values;
    auto& G = tables.g.values;
    std::vector<double> gF(F.size(), 0.0), gG(G.size(), 0.0);
    std::vector<std::size_t> touched;
    double td_sum = 0.0, ce_sum = 0.0;
    for (std::size_t k = 0; k + 1 < tm; ++k) {
        double td = 0.0, ce = 0.0;
        touched.clear();
        for (std::size_t j = 0; j < m; ++j) {
            const EtfState s{paths[j].price[k], paths[j].ret[k]};
            const EtfState s1{paths[j].price[k + 1], paths[j].ret[k + 1]};
            const auto st = tables.f.grid.stencil(s);
            double fs = 0.0, gs = 0.0;
            for (int c = 0; c < 4; ++c) {
                fs += st.w[c] * F[st.idx[c]];
                gs += st.w[c] * G[st.idx[c]];
            }
            const double target = (1.0 - phik[j * tm + k + 1]) * tables.f(s1) + rewards[j * tm + k + 1];
            const double e_td = fs - p.beta * gs;
            const double e_ce = gs - target;  // target held fixed (semi-gradient)
            td += e_td * e_td;
            ce += e_ce * e_ce;
            for (int c = 0; c < 4; ++c) {
                const std::size_t q = st.idx[c];
                if (gF[q] == 0.0 && gG[q] == 0.0) touched.push_back(q);
                gF[q] += 2.0 * e_td * st.w[c];
                gG[q] += 2.0 * (e_ce - p.beta * e_td) * st.w[c];
            }
        }
        if (cfg.optimizer == Optimizer::sgd) {
            for (std::size_t q : touched) {
                F[q] -= cfg.lr * gF[q];
                G[q] -= cfg.lr * gG[q];
            }
        } else {
            adam_step(tables.adam_f, F, gF, cfg.lr);
            adam_step(tables.adam_g, G, gG, cfg.lr);
        }
        for (std::size_t q : touched) gF[q] = gG[q] = 0.0;
        td /= static_cast<double>(m);
        ce /= static_cast<double>(m);
        if (!std::isfinite(td) || !std::isfinite(ce))
            throw NumericFailure("TD evaluation diverged at step " + std::to_string(k), F);
        res.trace.push_back({td, ce});
        td_sum += td;
        ce_sum += ce;
    }
    res.mean = {td_sum / static_cast<double>(tm - 1), ce_sum / static_cast<double>(tm - 1)};
    res.tables = std::move(tables);
    return res;
}

PolicyIterationResult policy_iteration(const EtfParams& p, std::size_t outer, const TdConfig& cfg,
                                       std::uint64_t seed, Grid2D grid) {
    p.validate();
    if (outer < 1) throw std::invalid_argument("L must be >= 1");
    if (cfg.passes < 1) throw std::invalid_argument("passes must be >= 1");
    PolicyIterationResult out;
    out.tables = {Table2D(grid, 0.0), Table2D(grid, 0.0), {}, {}};
    out.policy = gibbs_update(p, out.tables.f);
    for (std::size_t l = 0; l < outer; ++l) {
        LossPoint mean{};
        try {
            for (std::size_t pass = 0; pass < cfg.passes; ++pass) {
                TdResult td = td_evaluate_policy(p, out.policy, std::move(out.tables), cfg, seed,
                                                 l * cfg.passes + pass);
                out.tables = std::move(td.tables);
                mean.tdloss += td.mean.tdloss / static_cast<double>(cfg.passes);
                mean.celoss += td.mean.celoss / static_cast<double>(cfg.passes);
            }
        } catch (const NumericFailure&) {
            out.diverged = true;
            return out;
        }
        Table2D next = gibbs_update(p, out.tables.f);
        double change = 0.0;
        for (std::size_t q = 0; q < next.values.size(); ++q)
            change = std::max(change, std::abs(next.values[q] - out.policy.values[q]));
        out.policy = std::move(next);
        out.history.push_back({l + 1, mean.tdloss, mean.celoss, change});
    }
    return out;
}

RegionReport policy_region_report(const Table2D& phi, double lo, double hi) {
    if (!(lo >= 0.0 && lo < hi && hi <= 1.0)) throw std::invalid_argument("need 0 <= lo < hi <= 1");
    RegionReport rep;
    const Grid2D& g = phi.grid;
    rep.cls.resize(g.size());
    rep.stop_boundary.assign(g.nr(), -1.0);
    for (std::size_t i = 0; i < g.np(); ++i)
        for (std::size_t j = 0; j < g.nr(); ++j) {
            const std::size_t k = g.index(i, j);
            const double v = phi.values[k];
            if (v >= hi) {
                rep.cls[k] = 1;
                ++rep.stop;
                rep.stop_boundary[j] = std::max(rep.stop_boundary[j], g.price(i));
            } else if (v <= lo) {
                rep.cls[k] = -1;
                ++rep.hold;
            } else {
                rep.cls[k] = 0;
                ++rep.mixed;
            }
        }
    return rep;
}

double mean_stop_probability_at(const Table2D& phi, double ret) {
    const Grid2D& g = phi.grid;
    std::size_t best = 0;
    for (std::size_t j = 1; j < g.nr(); ++j)
        if (std::abs(g.ret(j) - ret) < std::abs(g.ret(best) - ret)) best = j;
    double s = 0.0;
    for (std::size_t i = 0; i < g.np(); ++i) s += phi.values[g.index(i, best)];
    return s / static_cast<double>(g.np());
}

void write_policy_csv(std::ostream& os, const Table2D& phi) {
    CsvWriter csv(os, {"p", "r", "phi"});
    const Grid2D& g = phi.grid;
    for (std::size_t i = 0; i < g.np(); ++i)
        for (std::size_t j = 0; j < g.nr(); ++j) csv.row(g.price(i), g.ret(j), phi.values[g.index(i, j)]);
}

void write_loss_csv(std::ostream& os, const std::vector<OuterRecord>& history) {
    CsvWriter csv(os, {"outer_iter", "tdloss", "celoss"});
    for (const auto& h : history) csv.row(h.outer_iter, h.tdloss, h.celoss);
}

void write_trajectory_csv(std::ostream& os, const std::vector<MarketPath>& paths) {
    CsvWriter csv(os, {"path", "t", "price", "ret", "avg_sq_return"});
    for (std::size_t j = 0; j < paths.size(); ++j)
        for (std::size_t t = 0; t < paths[j].price.size(); ++t)
            csv.row(j, t, paths[j].price[t], paths[j].ret[t], paths[j].avg_sq_return[t]);
}

}  // namespace mfstop
