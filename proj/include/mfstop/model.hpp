#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace mfstop {

/// Mean-field state for a two-point population: either the absorbing stopped
/// state or a live distribution, encoded by its mass on the first point.
struct MeanFieldState {
    bool stopped = false;
    double coord = 0.0;

    static MeanFieldState live(double mass) { return {false, mass}; }
    static MeanFieldState stopped_state() { return {true, 0.0}; }
};

/// Uniform node set on [lo, hi].
class Grid1D {
public:
    Grid1D() = default;
    Grid1D(double lo, double hi, std::size_t n);

    std::size_t size() const noexcept { return n_; }
    double lo() const noexcept { return lo_; }
    double hi() const noexcept { return hi_; }
    double spacing() const noexcept { return h_; }
    double node(std::size_t i) const noexcept { return lo_ + h_ * static_cast<double>(i); }
    std::vector<double> nodes() const;

    struct Stencil {
        std::size_t cell;  ///< left node of the bracketing cell
        double frac;       ///< position within the cell, in [0,1]
    };

    /// Bracketing cell of x. Out-of-hull queries clamp and bump clamp_events().
    Stencil locate(double x) const noexcept;

private:
    double lo_ = 0.0, hi_ = 1.0, h_ = 1.0;
    std::size_t n_ = 0;
};

/// Number of out-of-hull interpolation queries clamped so far (process-wide).
std::size_t clamp_events() noexcept;

/// Node values on a Grid1D with piecewise-linear interpolation.
class GridFunction {
public:
    GridFunction() = default;
    GridFunction(Grid1D grid, std::vector<double> values);
    GridFunction(Grid1D grid, const std::function<double(double)>& f);

    double operator()(double x) const noexcept;
    const Grid1D& grid() const noexcept { return grid_; }
    const std::vector<double>& values() const noexcept { return values_; }
    std::vector<double>& mutable_values() noexcept { return values_; }

private:
    Grid1D grid_;
    std::vector<double> values_;
};

using ValueGrid = GridFunction;

/// GridFunction whose node values are validated to lie in [0,1].
class PolicyGrid : public GridFunction {
public:
    PolicyGrid() = default;
    PolicyGrid(Grid1D grid, std::vector<double> values);
    PolicyGrid(Grid1D grid, const std::function<double(double)>& f);
    static PolicyGrid constant(Grid1D grid, double value);
};

double interpolate(const GridFunction& g, double x) noexcept;

/// Integration rule for the common noise, stated on quantile levels u in (0,1).
struct NoisePlan {
    enum class Kind { quadrature, monte_carlo };

    Kind kind = Kind::quadrature;
    std::vector<double> levels;
    std::vector<double> weights;
    std::uint64_t seed = 0;

    std::size_t size() const noexcept { return levels.size(); }

    static NoisePlan gauss_legendre(std::size_t nodes);
    static NoisePlan composite_gauss_legendre(std::size_t panels, std::size_t order = 4);
    static NoisePlan monte_carlo(std::size_t samples, std::uint64_t seed);
};

/// Mean-field stopping model over a two-point state space.
struct ModelSpec {
    std::string name;
    std::function<double(double mass, double z)> transition;  ///< T0 on live states
    std::function<double(double mass)> reward;
    std::function<double(double u)> noise_quantile;           ///< u in (0,1) -> z
    double noise_lo = 0.0, noise_hi = 1.0;                    ///< support of Z0
    NoisePlan plan;
    double reward_bound = 1.0;                                ///< L1
    Grid1D grid;
};

MeanFieldState transition_state(const ModelSpec& model, MeanFieldState mu, int action, double z);
double reward_of(const ModelSpec& model, MeanFieldState mu);
double expect_over_noise(const ModelSpec& model, const GridFunction& f, MeanFieldState mu);

/// Precomputed interpolation stencils of T0(x_i, z_q) for every node x_i and
/// plan point z_q, stored row-major (node, point).
class ExpectationOperator {
public:
    explicit ExpectationOperator(const ModelSpec& model);

    std::size_t nodes() const noexcept { return n_; }
    std::size_t points() const noexcept { return q_; }
    const ModelSpec& model() const noexcept { return *model_; }
    const Grid1D& grid() const noexcept { return model_->grid; }
    std::span<const double> weights() const noexcept { return weights_; }

    std::size_t cell(std::size_t i, std::size_t q) const noexcept { return cell_[i * q_ + q]; }
    double frac(std::size_t i, std::size_t q) const noexcept { return frac_[i * q_ + q]; }
    double target(std::size_t i, std::size_t q) const noexcept { return target_[i * q_ + q]; }

    /// Interpolates node values at every (node, point) target.
    void gather(std::span<const double> values, std::vector<double>& out) const;

    /// Node-wise E0[f(T0(x_i, Z))].
    std::vector<double> apply(std::span<const double> values) const;

private:
    const ModelSpec* model_;
    std::size_t n_, q_;
    std::vector<double> weights_;
    std::vector<std::uint32_t> cell_;
    std::vector<double> frac_;
    std::vector<double> target_;
};

/// The R&D model: T0(mu, z) = mu z with Z0 ~ U[0,1] and r(mu) = 1 - mu.
ModelSpec make_rd_model(std::size_t grid_points = 2001,
                        NoisePlan plan = NoisePlan::composite_gauss_legendre(256));

/// Tabulated model: T0(mu, z) = (1 - mix) T1(mu) + mix z with Z0 ~ U[0,1];
/// T1 and r are piecewise-linear tables on uniform nodes of [0,1].
ModelSpec make_custom_table_model(std::vector<double> transition_table,
                                  std::vector<double> reward_table, double mix,
                                  std::size_t grid_points, NoisePlan plan);

}  // namespace mfstop
