#include "mfstop/valuation.hpp"

#include <cmath>
#include <stdexcept>

#include "mfstop/parallel.hpp"
#include "mfstop/rng.hpp"

namespace mfstop {

double PayoffSpec::weight(std::size_t k) const {
    if (lambda > 0.0 && regularize_discount) {
        const double kk = static_cast<double>(k) * static_cast<double>(k);
        return discount.weight(k) * std::exp(-kk * std::log1p(lambda));
    }
    return discount.weight(k);
}

std::vector<double> PayoffSpec::weights(std::size_t horizon) const {
    std::vector<double> w(horizon + 2);
    for (std::size_t k = 0; k < w.size(); ++k) w[k] = weight(k);
    return w;
}

HorizonInfo payoff_horizon(const PayoffSpec& payoff, double reward_bound, double tol,
                           std::size_t cap) {
    if (payoff.lambda < 0.0) throw std::invalid_argument("lambda must be nonnegative");
    if (payoff.lambda > 0.0 && payoff.regularize_discount) {
        const RegularizedDiscount rd(payoff.discount, payoff.lambda);
        const std::size_t k = truncation_horizon(rd, reward_bound, tol);
        double tail = 0.0;
        for (std::size_t j = k + 1; j < k + 400; ++j) tail += rd.weight(j);
        return {k, (reward_bound + payoff.lambda * std::log(2.0)) * tail};
    }
    const auto h = plain_truncation_horizon(payoff.discount, reward_bound, payoff.lambda, tol, cap);
    return {h.k_max, h.tail_bound};
}

Valuator::Valuator(const ModelSpec& model, PayoffSpec payoff, std::optional<std::size_t> horizon)
    : model_(&model),
      payoff_(std::move(payoff)),
      horizon_(payoff_horizon(payoff_, model.reward_bound)),
      op_(model) {
    if (horizon) horizon_.k_max = *horizon;
    w_ = payoff_.weights(horizon_.k_max);
    const auto& grid = model.grid;
    r_nodes_.resize(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) r_nodes_[i] = model.reward(grid.node(i));
    r_pts_.resize(op_.nodes() * op_.points());
    for (std::size_t i = 0; i < op_.nodes(); ++i)
        for (std::size_t q = 0; q < op_.points(); ++q)
            r_pts_[i * op_.points() + q] = model.reward(op_.target(i, q));
}

PolicyEvaluation Valuator::evaluate(const PolicyGrid& phi) const {
    if (phi.grid().size() != op_.nodes())
        throw std::invalid_argument("policy grid does not match model grid");
    std::vector<double> pts;
    op_.gather(phi.values(), pts);
    return run(phi.values(), pts);
}

PolicyEvaluation Valuator::evaluate(const PolicyFn& phi) const {
    const std::size_t n = op_.nodes(), nq = op_.points();
    std::vector<double> nodes(n), pts(n * nq);
    for (std::size_t i = 0; i < n; ++i) nodes[i] = phi(model_->grid.node(i));
    for (std::size_t k = 0; k < n * nq; ++k) pts[k] = phi(op_.target(k / nq, k % nq));
    return run(std::move(nodes), pts);
}

PolicyEvaluation Valuator::run(std::vector<double> phi_nodes,
                               const std::vector<double>& phi_pts) const {
    const std::size_t n = op_.nodes(), nq = op_.points(), kmax = horizon_.k_max;
    const double lambda = payoff_.lambda;
    const auto qw = op_.weights();

    // Point-level stop payoff and survival weight, fixed across the recursion.
    std::vector<double> gsum(n, 0.0), surv(n * nq);
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (std::size_t q = 0; q < nq; ++q) {
            const std::size_t k = i * nq + q;
            const double p = phi_pts[k];
            if (!std::isfinite(p) || p < 0.0 || p > 1.0)
                throw std::invalid_argument("policy value outside [0,1] at a noise target");
            const double g = r_pts_[k] * p + (lambda > 0.0 ? lambda * shannon_entropy(p) : 0.0);
            s += qw[q] * g;
            surv[k] = qw[q] * (1.0 - p);
        }
        gsum[i] = s;
    }

    std::vector<double> c(n, 0.0), next(n), c1(n, 0.0);
    for (std::size_t m = kmax; m-- > 0;) {
        const double wm = w_[m + 1];
        parallel_for(n, [&](std::size_t i) {
            double s = 0.0;
            for (std::size_t q = 0; q < nq; ++q) {
                const std::size_t k = i * nq + q;
                const std::size_t j = op_.cell(i, q);
                s += surv[k] * (c[j] + (c[j + 1] - c[j]) * op_.frac(i, q));
            }
            next[i] = wm * gsum[i] + s;
        });
        c.swap(next);
        if (m == 1) c1 = c;
    }

    PolicyEvaluation ev;
    ev.horizon = kmax;
    ev.tail_bound = horizon_.tail_bound;
    ev.reward = r_nodes_;
    ev.continuation = c;
    ev.aux_next = c1;
    ev.value.resize(n);
    ev.aux.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double p = phi_nodes[i];
        const double g = r_nodes_[i] * p + (lambda > 0.0 ? lambda * shannon_entropy(p) : 0.0);
        ev.value[i] = g + (1.0 - p) * c[i];
        ev.aux[i] = (kmax >= 1 ? w_[1] * g : 0.0) + (1.0 - p) * c1[i];
        if (!std::isfinite(ev.value[i]) || !std::isfinite(ev.aux[i]) || !std::isfinite(c[i]))
            throw std::runtime_error("non-finite value in policy evaluation");
    }
    ev.policy = std::move(phi_nodes);
    return ev;
}

double Valuator::continuation_at(const PolicyEvaluation& ev, const PolicyFn& phi,
                                 double mu) const {
    const GridFunction c1(model_->grid, ev.aux_next);
    const double lambda = payoff_.lambda;
    const double w1 = ev.horizon >= 1 ? w_[1] : 0.0;
    double s = 0.0;
    for (std::size_t q = 0; q < model_->plan.size(); ++q) {
        const double y = model_->transition(mu, model_->noise_quantile(model_->plan.levels[q]));
        const double p = phi(y);
        const double g = model_->reward(y) * p + (lambda > 0.0 ? lambda * shannon_entropy(p) : 0.0);
        s += model_->plan.weights[q] * (w1 * g + (1.0 - p) * c1(y));
    }
    return s;
}

double deviation_value(double reward, double continuation, double psi, double lambda) {
    const double ent = lambda > 0.0 ? lambda * shannon_entropy(psi) : 0.0;
    return reward * psi + ent + (1.0 - psi) * continuation;
}

namespace {

struct PathContext {
    const ValuationRequest& req;
    std::vector<double> w;

    double phi_at(std::size_t k, double x) const {
        if (k == 0 && req.head) return *req.head;
        return req.policy(x);
    }
    double stage(double x, double p) const {
        const double lam = req.payoff.lambda;
        return req.model->reward(x) * p + (lam > 0.0 ? lam * shannon_entropy(p) : 0.0);
    }
};

PathContext make_context(const ValuationRequest& req) {
    if (!req.model) throw std::invalid_argument("valuation request without model");
    if (!req.policy) throw std::invalid_argument("valuation request without policy");
    PathContext ctx{req, {}};
    const std::size_t off = req.shift == Shift::one_step ? 1 : 0;
    ctx.w.resize(req.horizon + 1);
    for (std::size_t k = 0; k <= req.horizon; ++k) ctx.w[k] = req.payoff.weight(k + off);
    return ctx;
}

double tensor_sum(const PathContext& ctx, const NoisePlan& plan, std::size_t k, double x,
                  double survive) {
    const double p = ctx.phi_at(k, x);
    double total = ctx.w[k] * ctx.stage(x, p) * survive;
    if (k == ctx.req.horizon) return total;
    const double s_next = survive * (1.0 - p);
    if (s_next == 0.0) return total;
    for (std::size_t q = 0; q < plan.size(); ++q) {
        const double z = ctx.req.model->noise_quantile(plan.levels[q]);
        total += plan.weights[q] *
                 tensor_sum(ctx, plan, k + 1, ctx.req.model->transition(x, z), s_next);
    }
    return total;
}

Estimate mean_and_error(const std::vector<double>& v) {
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    const double n = static_cast<double>(v.size());
    return {mean, v.size() > 1 ? std::sqrt(ss / (n - 1.0) / n) : 0.0};
}

}  // namespace

Estimate survival_value(const ValuationRequest& req) {
    const PathContext ctx = make_context(req);
    if (req.start.stopped) return {0.0, 0.0};
    if (req.horizon <= 3) {
        const NoisePlan plan = NoisePlan::gauss_legendre(req.tensor_nodes);
        return {tensor_sum(ctx, plan, 0, req.start.coord, 1.0), 0.0};
    }
    std::vector<double> per_path(req.paths);
    parallel_for(req.paths, [&](std::size_t path) {
        CounterRng rng(req.seed, StreamKind::common, path);
        double x = req.start.coord, survive = 1.0, acc = 0.0;
        for (std::size_t k = 0; k <= req.horizon; ++k) {
            const double p = ctx.phi_at(k, x);
            acc += ctx.w[k] * ctx.stage(x, p) * survive;
            survive *= 1.0 - p;
            if (survive == 0.0) break;
            x = req.model->transition(x, req.model->noise_quantile(rng.uniform()));
        }
        per_path[path] = acc;
    });
    return mean_and_error(per_path);
}

Estimate direct_simulation_value(const ValuationRequest& req) {
    const PathContext ctx = make_context(req);
    if (req.start.stopped) return {0.0, 0.0};
    std::vector<double> per_path(req.paths);
    const double lam = req.payoff.lambda;
    parallel_for(req.paths, [&](std::size_t path) {
        CounterRng noise(req.seed, StreamKind::common, path);
        CounterRng device(req.seed, StreamKind::stopping, path);
        MeanFieldState mu = MeanFieldState::live(req.start.coord);
        double acc = 0.0;
        for (std::size_t k = 0; k <= req.horizon && !mu.stopped; ++k) {
            const double p = ctx.phi_at(k, mu.coord);
            if (lam > 0.0) acc += ctx.w[k] * lam * shannon_entropy(p);
            const int action = device.uniform() <= p ? 1 : 0;
            if (action == 1) acc += ctx.w[k] * reward_of(*req.model, mu);
            mu = transition_state(*req.model, mu, action,
                                  req.model->noise_quantile(noise.uniform()));
        }
        per_path[path] = acc;
    });
    return mean_and_error(per_path);
}

}  // namespace mfstop
