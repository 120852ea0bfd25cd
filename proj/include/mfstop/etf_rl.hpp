#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <vector>

namespace mfstop {

/// Linear-t market model for the ETF put.
struct EtfParams {
    double a_bar = std::pow(1.07, 1.0 / 252.0) - 1.0;
    double b_bar = 0.5;
    double c_bar = 0.006;
    double d_bar = 0.006;
    double strike = 100.0;  ///< P0
    double beta = 0.7;
    double k_amp = 1.01;    ///< K
    double lambda = 0.1;
    int noise_df = 10;

    void validate() const;
    double stationary_return() const noexcept { return a_bar / (1.0 - b_bar); }
    double reward(double price) const noexcept { return price < strike ? strike - price : 0.0; }
};

struct EtfState {
    double price;
    double ret;
};

/// Tensor grid over (price, ret) with bilinear interpolation. Out-of-hull
/// queries clamp to the hull.
class Grid2D {
public:
    Grid2D() = default;
    Grid2D(double p_lo, double p_hi, std::size_t np, double r_lo, double r_hi, std::size_t nr);

    std::size_t np() const noexcept { return np_; }
    std::size_t nr() const noexcept { return nr_; }
    std::size_t size() const noexcept { return np_ * nr_; }
    double price(std::size_t i) const noexcept { return p_lo_ + hp_ * static_cast<double>(i); }
    double ret(std::size_t j) const noexcept { return r_lo_ + hr_ * static_cast<double>(j); }
    std::size_t index(std::size_t i, std::size_t j) const noexcept { return i * nr_ + j; }

    struct Stencil {
        std::array<std::size_t, 4> idx;
        std::array<double, 4> w;
    };
    Stencil stencil(EtfState s) const noexcept;

private:
    double p_lo_ = 0.0, hp_ = 1.0, r_lo_ = 0.0, hr_ = 1.0;
    std::size_t np_ = 0, nr_ = 0;
};

/// Node table on a Grid2D.
struct Table2D {
    Grid2D grid;
    std::vector<double> values;

    Table2D() = default;
    Table2D(Grid2D g, double fill) : grid(g), values(g.size(), fill) {}
    double operator()(EtfState s) const noexcept;
};

/// Default grid: price [0, 2 P0] x 101 nodes, ret [-0.1, 0.1] x 41 nodes.
Grid2D default_etf_grid(const EtfParams& p);

/// Per-entry first and second moment estimates for the adaptive optimizer.
struct AdamState {
    std::vector<double> m, v;
    std::size_t steps = 0;
};

struct ApproximatorTables {
    Table2D f;  ///< evaluation target F
    Table2D g;  ///< conditional-expectation surrogate G
    AdamState adam_f, adam_g;
};

struct MarketPath {
    std::vector<double> price, ret, avg_sq_return;
};

/// Initial states for every path: price uniform on [lo, hi] x P0, ret at the
/// stationary mean plus a uniform offset of half-width ret_spread.
struct InitialLaw {
    double price_lo = 0.5;
    double price_hi = 1.5;
    double ret_spread = 0.02;
    bool fixed = false;  ///< when true every path starts at (P0, stationary mean)
};

std::vector<MarketPath> simulate_market(const EtfParams& p, std::size_t steps, std::size_t paths,
                                        std::uint64_t seed, const InitialLaw& init = {},
                                        std::uint64_t stream = 0);

enum class Optimizer { sgd, adam };

struct TdConfig {
    std::size_t batch = 200;    ///< M
    std::size_t horizon = 500;  ///< T_m
    double lr = 1e-3;
    Optimizer optimizer = Optimizer::sgd;
    std::size_t passes = 6;  ///< evaluation batches per outer iteration
    InitialLaw init;
};

struct LossPoint {
    double tdloss;
    double celoss;
};

struct TdResult {
    ApproximatorTables tables;
    std::vector<LossPoint> trace;  ///< batch losses per time step k
    LossPoint mean;                ///< averages over the sweep
};

/// One sweep of the two-table TD scheme for a fixed policy table.
TdResult td_evaluate_policy(const EtfParams& p, const Table2D& phi, ApproximatorTables tables,
                            const TdConfig& cfg, std::uint64_t seed, std::uint64_t sweep = 0);

/// phi(p, r) = 1 / (1 + exp((K F(p, r) - R(p)) / lambda)) on every node.
Table2D gibbs_update(const EtfParams& p, const Table2D& f);

struct OuterRecord {
    std::size_t outer_iter;
    double tdloss;
    double celoss;
    double policy_change;  ///< sup-norm change of phi at this update
};

struct PolicyIterationResult {
    Table2D policy;
    ApproximatorTables tables;
    std::vector<OuterRecord> history;
    bool diverged = false;
};

PolicyIterationResult policy_iteration(const EtfParams& p, std::size_t outer, const TdConfig& cfg,
                                       std::uint64_t seed, Grid2D grid);

struct RegionReport {
    std::size_t stop = 0, hold = 0, mixed = 0;
    std::vector<int> cls;  ///< per node: 1 stop, -1 hold, 0 mixed
    /// Per return node: highest price node still in the stop region (-1 if none).
    std::vector<double> stop_boundary;
};

RegionReport policy_region_report(const Table2D& phi, double lo = 0.05, double hi = 0.95);

/// Mean of phi over the price nodes at the return node closest to ret.
double mean_stop_probability_at(const Table2D& phi, double ret);

void write_policy_csv(std::ostream& os, const Table2D& phi);
void write_loss_csv(std::ostream& os, const std::vector<OuterRecord>& history);
void write_trajectory_csv(std::ostream& os, const std::vector<MarketPath>& paths);

}  // namespace mfstop
