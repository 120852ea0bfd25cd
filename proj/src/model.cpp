#include "mfstop/model.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <stdexcept>

#include <boost/math/special_functions/legendre.hpp>

#include "mfstop/rng.hpp"

namespace mfstop {
namespace {

std::atomic<std::size_t> g_clamps{0};

}  // namespace

Grid1D::Grid1D(double lo, double hi, std::size_t n) : lo_(lo), hi_(hi), n_(n) {
    if (n < 2) throw std::invalid_argument("grid needs at least 2 nodes");
    if (!(hi > lo)) throw std::invalid_argument("grid bounds must be increasing");
    h_ = (hi - lo) / static_cast<double>(n - 1);
}

std::vector<double> Grid1D::nodes() const {
    std::vector<double> x(n_);
    for (std::size_t i = 0; i < n_; ++i) x[i] = node(i);
    x.back() = hi_;
    return x;
}

Grid1D::Stencil Grid1D::locate(double x) const noexcept {
    // Tolerate rounding right at the hull edges without counting a clamp.
    const double slack = 1e-12 * (hi_ - lo_);
    if (x < lo_) {
        if (x < lo_ - slack) g_clamps.fetch_add(1, std::memory_order_relaxed);
        return {0, 0.0};
    }
    if (x > hi_) {
        if (x > hi_ + slack) g_clamps.fetch_add(1, std::memory_order_relaxed);
        return {n_ - 2, 1.0};
    }
    const double s = (x - lo_) / h_;
    std::size_t j = static_cast<std::size_t>(s);
    if (j >= n_ - 1) j = n_ - 2;
    return {j, std::clamp(s - static_cast<double>(j), 0.0, 1.0)};
}

std::size_t clamp_events() noexcept { return g_clamps.load(std::memory_order_relaxed); }

GridFunction::GridFunction(Grid1D grid, std::vector<double> values)
    : grid_(grid), values_(std::move(values)) {
    if (values_.size() != grid_.size())
        throw std::invalid_argument("grid function size does not match grid");
}

GridFunction::GridFunction(Grid1D grid, const std::function<double(double)>& f) : grid_(grid) {
    values_.resize(grid_.size());
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] = f(grid_.node(i));
}

double GridFunction::operator()(double x) const noexcept {
    const auto s = grid_.locate(x);
    return values_[s.cell] + (values_[s.cell + 1] - values_[s.cell]) * s.frac;
}

double interpolate(const GridFunction& g, double x) noexcept { return g(x); }

namespace {

void check_policy(const std::vector<double>& v) {
    for (double x : v)
        if (!(x >= 0.0 && x <= 1.0))
            throw std::invalid_argument("policy values must lie in [0,1]");
}

}  // namespace

PolicyGrid::PolicyGrid(Grid1D grid, std::vector<double> values)
    : GridFunction(grid, std::move(values)) {
    check_policy(this->values());
}

PolicyGrid::PolicyGrid(Grid1D grid, const std::function<double(double)>& f)
    : GridFunction(grid, f) {
    check_policy(values());
}

PolicyGrid PolicyGrid::constant(Grid1D grid, double value) {
    return PolicyGrid(grid, std::vector<double>(grid.size(), value));
}

NoisePlan NoisePlan::gauss_legendre(std::size_t nodes) {
    if (nodes == 0) throw std::invalid_argument("quadrature needs at least one node");
    NoisePlan p;
    p.kind = Kind::quadrature;
    const auto zeros = boost::math::legendre_p_zeros<double>(static_cast<int>(nodes));
    std::vector<std::pair<double, double>> xw;
    for (double x : zeros) {
        const double dp = boost::math::legendre_p_prime(static_cast<int>(nodes), x);
        const double w = 2.0 / ((1.0 - x * x) * dp * dp);
        xw.emplace_back(x, w);
        if (x != 0.0) xw.emplace_back(-x, w);
    }
    std::sort(xw.begin(), xw.end());
    double total = 0.0;
    for (auto& [x, w] : xw) total += w;
    for (auto& [x, w] : xw) {
        p.levels.push_back(0.5 * (1.0 + x));
        p.weights.push_back(w / total);
    }
    return p;
}

NoisePlan NoisePlan::composite_gauss_legendre(std::size_t panels, std::size_t order) {
    if (panels == 0) throw std::invalid_argument("composite rule needs at least one panel");
    const NoisePlan base = gauss_legendre(order);
    NoisePlan p;
    p.kind = Kind::quadrature;
    const double width = 1.0 / static_cast<double>(panels);
    for (std::size_t k = 0; k < panels; ++k)
        for (std::size_t j = 0; j < base.size(); ++j) {
            p.levels.push_back(width * (static_cast<double>(k) + base.levels[j]));
            p.weights.push_back(width * base.weights[j]);
        }
    return p;
}

NoisePlan NoisePlan::monte_carlo(std::size_t samples, std::uint64_t seed) {
    if (samples == 0) throw std::invalid_argument("monte carlo plan needs samples");
    NoisePlan p;
    p.kind = Kind::monte_carlo;
    p.seed = seed;
    p.levels.resize(samples);
    p.weights.assign(samples, 1.0 / static_cast<double>(samples));
    for (std::size_t i = 0; i < samples; ++i)
        p.levels[i] = CounterRng(seed, StreamKind::sampling, i).uniform();
    return p;
}

MeanFieldState transition_state(const ModelSpec& model, MeanFieldState mu, int action, double z) {
    if (mu.stopped) return mu;
    if (!(z >= model.noise_lo && z <= model.noise_hi))
        throw std::domain_error("noise draw outside support");
    if (action == 1) return MeanFieldState::stopped_state();
    return MeanFieldState::live(model.transition(mu.coord, z));
}

double reward_of(const ModelSpec& model, MeanFieldState mu) {
    return mu.stopped ? 0.0 : model.reward(mu.coord);
}

double expect_over_noise(const ModelSpec& model, const GridFunction& f, MeanFieldState mu) {
    if (mu.stopped) throw std::invalid_argument("expectation requires a live state");
    double s = 0.0;
    for (std::size_t q = 0; q < model.plan.size(); ++q)
        s += model.plan.weights[q] *
             f(model.transition(mu.coord, model.noise_quantile(model.plan.levels[q])));
    return s;
}

ExpectationOperator::ExpectationOperator(const ModelSpec& model)
    : model_(&model), n_(model.grid.size()), q_(model.plan.size()), weights_(model.plan.weights) {
    std::vector<double> z(q_);
    for (std::size_t q = 0; q < q_; ++q) z[q] = model.noise_quantile(model.plan.levels[q]);
    cell_.resize(n_ * q_);
    frac_.resize(n_ * q_);
    target_.resize(n_ * q_);
    for (std::size_t i = 0; i < n_; ++i) {
        const double x = model.grid.node(i);
        for (std::size_t q = 0; q < q_; ++q) {
            const double y = model.transition(x, z[q]);
            const auto s = model.grid.locate(y);
            cell_[i * q_ + q] = static_cast<std::uint32_t>(s.cell);
            frac_[i * q_ + q] = s.frac;
            target_[i * q_ + q] = y;
        }
    }
}

void ExpectationOperator::gather(std::span<const double> values, std::vector<double>& out) const {
    out.resize(n_ * q_);
    for (std::size_t k = 0; k < out.size(); ++k) {
        const double lo = values[cell_[k]];
        out[k] = lo + (values[cell_[k] + 1] - lo) * frac_[k];
    }
}

std::vector<double> ExpectationOperator::apply(std::span<const double> values) const {
    std::vector<double> out(n_, 0.0);
    for (std::size_t i = 0; i < n_; ++i) {
        double s = 0.0;
        for (std::size_t q = 0; q < q_; ++q) {
            const std::size_t k = i * q_ + q;
            const double lo = values[cell_[k]];
            s += weights_[q] * (lo + (values[cell_[k] + 1] - lo) * frac_[k]);
        }
        out[i] = s;
    }
    return out;
}

ModelSpec make_rd_model(std::size_t grid_points, NoisePlan plan) {
    ModelSpec m;
    m.name = "rd";
    m.transition = [](double mu, double z) { return mu * z; };
    m.reward = [](double mu) { return 1.0 - mu; };
    m.noise_quantile = [](double u) { return u; };
    m.noise_lo = 0.0;
    m.noise_hi = 1.0;
    m.plan = std::move(plan);
    m.reward_bound = 1.0;
    m.grid = Grid1D(0.0, 1.0, grid_points);
    return m;
}

ModelSpec make_custom_table_model(std::vector<double> transition_table,
                                  std::vector<double> reward_table, double mix,
                                  std::size_t grid_points, NoisePlan plan) {
    if (transition_table.size() < 2 || reward_table.size() < 2)
        throw std::invalid_argument("custom tables need at least 2 entries");
    if (!(mix >= 0.0 && mix <= 1.0)) throw std::invalid_argument("mix must lie in [0,1]");
    for (double t : transition_table)
        if (!(t >= 0.0 && t <= 1.0))
            throw std::invalid_argument("transition table values must lie in [0,1]");
    const Grid1D tgrid(0.0, 1.0, transition_table.size());
    const GridFunction t1(tgrid, std::move(transition_table));
    const GridFunction r(Grid1D(0.0, 1.0, reward_table.size()), reward_table);
    double bound = 0.0;
    for (double v : reward_table) bound = std::max(bound, std::abs(v));

    ModelSpec m;
    m.name = "custom-table";
    m.transition = [t1, mix](double mu, double z) { return (1.0 - mix) * t1(mu) + mix * z; };
    m.reward = [r](double mu) { return r(mu); };
    m.noise_quantile = [](double u) { return u; };
    m.plan = std::move(plan);
    m.reward_bound = bound;
    m.grid = Grid1D(0.0, 1.0, grid_points);
    return m;
}

}  // namespace mfstop
