#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "mfstop/parallel.hpp"
#include "mfstop/rd_example.hpp"
#include "mfstop/solver.hpp"
#include "mfstop/valuation.hpp"

using namespace mfstop;

namespace {

const RdParams kRd{};

PayoffSpec plain() { return {kRd.discount(), 0.0, true}; }

ValuationRequest request(const ModelSpec& m, PayoffSpec pay, PolicyFn phi, double mu,
                         std::size_t horizon, std::uint64_t seed = 1) {
    return ValuationRequest{.model = &m,
                            .payoff = std::move(pay),
                            .policy = std::move(phi),
                            .head = std::nullopt,
                            .start = MeanFieldState::live(mu),
                            .horizon = horizon,
                            .shift = Shift::none,
                            .paths = 20000,
                            .seed = seed,
                            .tensor_nodes = 16};
}

// Random Lipschitz policy: clamped affine-plus-sine profile.
PolicyFn random_policy(std::mt19937_64& gen) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double a = u(gen), b = u(gen) - 0.5, c = 0.3 * u(gen), w = 2.0 + 6.0 * u(gen);
    return [=](double x) { return std::clamp(a + b * x + c * std::sin(w * x), 0.0, 1.0); };
}

}  // namespace

TEST(GridEvaluator, StopImmediately) {
    const auto m = make_rd_model(401);
    const Valuator val(m, plain());
    const auto ev = val.evaluate(PolicyGrid::constant(m.grid, 1.0));
    for (std::size_t i = 0; i < m.grid.size(); i += 40) {
        EXPECT_NEAR(ev.value[i], 1.0 - m.grid.node(i), 1e-14);
        EXPECT_NEAR(ev.continuation[i], 0.9 * (1.0 - m.grid.node(i) / 2.0), 1e-12);
    }
    EXPECT_NEAR(val.continuation_at(ev, [](double) { return 1.0; }, 0.4), 0.72, 1e-12);
}

TEST(GridEvaluator, NeverStop) {
    const auto m = make_rd_model(201);
    const Valuator val(m, plain());
    const auto ev = val.evaluate(PolicyGrid::constant(m.grid, 0.0));
    for (double v : ev.value) EXPECT_EQ(v, 0.0);
}

TEST(GridEvaluator, ClosedFormContinuation) {
    const auto m = make_rd_model(2001);
    const Valuator val(m, plain());
    const PolicyFn phi = [](double mu) { return closed_form_policy(kRd, mu); };
    const auto ev = val.evaluate(phi);
    EXPECT_NEAR(val.continuation_at(ev, phi, 0.1), 0.855, 3e-3);
    EXPECT_NEAR(val.continuation_at(ev, phi, 0.25), 0.75, 3e-3);
    EXPECT_NEAR(val.continuation_at(ev, phi, 0.5), (2.0 / 3.0) * std::pow(1.5, -0.5), 3e-3);
    EXPECT_NEAR((2.0 / 3.0) * std::pow(1.5, -0.5), 0.54433, 1e-5);
}

TEST(GridEvaluator, HorizonFromTruncation) {
    const auto m = make_rd_model(101);
    const Valuator reg(m, {kRd.discount(), 0.1, true});
    EXPECT_EQ(reg.horizon(), truncation_horizon(RegularizedDiscount(kRd.discount(), 0.1), 1.0, 1e-8));
    EXPECT_LT(reg.tail_bound(), 1e-8);
    const Valuator pl(m, plain());
    EXPECT_LE(pl.horizon(), 200u);
    EXPECT_LT(pl.tail_bound(), 1e-8);
    const Valuator fixed(m, plain(), 5);
    EXPECT_EQ(fixed.horizon(), 5u);
}

TEST(SurvivalValue, TrivialPolicies) {
    const auto m = make_rd_model(101);
    for (double mu : {0.0, 0.3, 0.9}) {
        EXPECT_NEAR(survival_value(request(m, plain(), [](double) { return 1.0; }, mu, 2)).value,
                    1.0 - mu, 1e-15);
        EXPECT_EQ(survival_value(request(m, plain(), [](double) { return 0.0; }, mu, 20)).value, 0.0);
    }
    auto stopped = request(m, plain(), [](double) { return 1.0; }, 0.3, 2);
    stopped.start = MeanFieldState::stopped_state();
    EXPECT_EQ(survival_value(stopped).value, 0.0);
}

TEST(SurvivalValue, ShiftedStopImmediately) {
    const auto m = make_rd_model(101);
    auto req = request(m, plain(), [](double) { return 1.0; }, 0.4, 2);
    req.shift = Shift::one_step;
    EXPECT_NEAR(survival_value(req).value, 0.9 * 0.6, 1e-15);
    // one step later the expected shifted value is delta(1) E r(mu Z)
    req.head = 0.0;
    req.shift = Shift::none;
    EXPECT_NEAR(survival_value(req).value, 0.72, 1e-13);
}

TEST(SurvivalValue, MatchesGridEvaluatorAtShortHorizon) {
    const auto m = make_rd_model(2001);
    const PolicyFn phi = [](double x) { return 0.3 + 0.4 * x; };
    const Valuator val(m, plain(), 3);
    const auto ev = val.evaluate(phi);
    const double grid_value = GridFunction(m.grid, ev.value)(0.7);
    EXPECT_NEAR(survival_value(request(m, plain(), phi, 0.7, 3)).value, grid_value, 1e-6);
}

TEST(DeviationValue, Affinity) {
    for (double f : {0.0, 0.3, 0.85}) {
        const double r = 0.6;
        const double v0 = deviation_value(r, f, 0.0, 0.0), v1 = deviation_value(r, f, 1.0, 0.0);
        EXPECT_EQ(v1, r);
        EXPECT_EQ(v0, f);
        EXPECT_NEAR(deviation_value(r, f, 0.5, 0.0), 0.5 * (v0 + v1), 1e-16);
    }
}

TEST(DeviationValue, ConcaveWithGibbsMaximizer) {
    for (double lambda : {0.01, 0.1, 1.0})
        for (double f : {0.2, 0.6, 0.95}) {
            const double r = 0.6;
            const double psi = gibbs_policy(lambda, r, f);
            const double best = deviation_value(r, f, psi, lambda);
            EXPECT_GE(best, deviation_value(r, f, 0.0, lambda) - 1e-12);
            EXPECT_GE(best, deviation_value(r, f, 1.0, lambda) - 1e-12);
            EXPECT_NEAR(best, regularized_best_response_value(lambda, r, f), 1e-12);
        }
}

TEST(SurvivalValue, UniformBound) {
    const auto m = make_rd_model(101);
    const double bound = 1.0 + (2.0 * std::log(2.0) + 1.0) * std::log(2.0);
    std::mt19937_64 gen(5);
    for (int t = 0; t < 10; ++t) {
        const auto phi = random_policy(gen);
        for (double lambda : {0.01, 0.1, 1.0}) {
            PayoffSpec pay{kRd.discount(), lambda, true};
            const Valuator val(m, pay);
            for (double v : val.evaluate(phi).value) EXPECT_LE(std::abs(v), bound);
        }
    }
}

TEST(SurvivalValue, AgreesWithDirectSimulation) {
    const auto m = make_rd_model(101);
    std::mt19937_64 gen(17);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int t = 0; t < 10; ++t) {
        const auto phi = random_policy(gen);
        const double mu = u(gen);
        auto a = request(m, plain(), phi, mu, 12, 100 + t);
        auto b = request(m, plain(), phi, mu, 12, 500 + t);
        const auto sa = survival_value(a), sb = direct_simulation_value(b);
        const double se = std::hypot(sa.std_error, sb.std_error);
        EXPECT_LE(std::abs(sa.value - sb.value), 3.0 * se + 1e-12) << "pair " << t;
    }
}

TEST(SurvivalValue, IndependentOfThreadCount) {
    const auto m = make_rd_model(101);
    const PolicyFn phi = [](double x) { return 0.2 + 0.5 * x; };
    auto req = request(m, plain(), phi, 0.6, 10, 9);
    set_default_threads(1);
    const auto one = survival_value(req);
    set_default_threads(4);
    const auto four = survival_value(req);
    set_default_threads(1);
    EXPECT_EQ(one.value, four.value);
    EXPECT_EQ(one.std_error, four.std_error);
}

TEST(GridEvaluator, IndependentOfThreadCount) {
    const auto m = make_rd_model(401);
    const Valuator val(m, {kRd.discount(), 0.1, true});
    const PolicyFn phi = [](double x) { return 0.5 * x; };
    set_default_threads(1);
    const auto a = val.evaluate(phi);
    set_default_threads(3);
    const auto b = val.evaluate(phi);
    set_default_threads(1);
    EXPECT_EQ(a.value, b.value);
    EXPECT_EQ(a.continuation, b.continuation);
}
