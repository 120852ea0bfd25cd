#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <sstream>

#include "mfstop/nagent.hpp"
#include "mfstop/parallel.hpp"
#include "mfstop/rd_example.hpp"

using namespace mfstop;

namespace {

const RdParams kRd{};

Population from_string(const std::string& s) {
    Population p;
    for (char c : s) p.states.push_back(c == 'A' ? AgentState::A : AgentState::B);
    return p;
}

NAgentConfig config(std::size_t paths, std::uint64_t seed) {
    NAgentConfig cfg;
    cfg.paths = paths;
    cfg.seed = seed;
    return cfg;
}

}  // namespace

TEST(Population, EmpiricalMeasure) {
    const auto p = from_string("AABB");
    EXPECT_EQ(p.count_a(), 2u);
    EXPECT_DOUBLE_EQ(p.mass_on_a(), 0.5);
}

TEST(StepPopulation, RuleExample) {
    const auto p = from_string("AABB");
    const std::vector<double> idio{0.2, 0.9, 0.4, 0.6};
    const auto next = step_population(p, 0.0, 0.3, 0.5, idio);
    EXPECT_FALSE(next.stopped);
    EXPECT_EQ(next.states, from_string("ABBB").states);
}

TEST(StepPopulation, AlwaysStopEndsEverything) {
    const RngPlan rng{3, 0, {}};
    const auto p = initial_population(50, 0.5, rng);
    const auto next = step_population(p, [](double) { return 1.0; }, rng, 0);
    EXPECT_TRUE(next.stopped);
    for (auto s : next.states) EXPECT_EQ(s, AgentState::stopped);
    const auto later = step_population(next, [](double) { return 0.0; }, rng, 1);
    EXPECT_TRUE(later.stopped);
}

TEST(NAgentValue, TrivialPolicies) {
    const auto cfg = config(4000, 5);
    EXPECT_EQ(n_agent_average_value(50, [](double) { return 0.0; }, std::nullopt, 0.6, cfg).value, 0.0);
    const auto stop = n_agent_average_value(50, [](double) { return 1.0; }, std::nullopt, 0.6, cfg);
    EXPECT_NEAR(stop.value, 0.4, 3.0 * stop.std_error);
    EXPECT_GT(stop.std_error, 0.0);
}

TEST(NAgentValue, LargePopulationMatchesMeanField) {
    const PolicyFn phi0 = [](double mu) { return closed_form_policy(kRd, mu); };
    const auto cfg = config(10000, 11);
    const auto est = n_agent_average_value(10000, phi0, std::nullopt, 0.6, cfg);
    const auto m = make_rd_model(2001);
    const Valuator val(m, PayoffSpec{kRd.discount(), 0.0, true});
    const double mf = GridFunction(m.grid, val.evaluate(phi0).value)(0.6);
    EXPECT_LE(std::abs(est.value - mf), 3.0 * est.std_error) << est.value << " vs " << mf;
}

TEST(NAgentValue, CoupledDifferenceShrinks) {
    const PolicyFn phi0 = [](double mu) { return closed_form_policy(kRd, mu); };
    const auto cfg = config(4000, 2);
    const auto small = n_agent_value_difference(100, phi0, 0.6, cfg);
    const auto large = n_agent_value_difference(10000, phi0, 0.6, cfg);
    EXPECT_LT(std::abs(large.difference.value), std::abs(small.difference.value));
    EXPECT_LT(std::abs(large.difference.value), 1e-3);
}

TEST(NAgentValue, PerAgentAgreesWithBinomial) {
    const PolicyFn phi = [](double mu) { return 0.2 + 0.5 * mu; };
    auto cfg = config(20000, 21);
    const auto binom = n_agent_average_value(20, phi, std::nullopt, 0.6, cfg);
    cfg.per_agent = true;
    cfg.seed = 22;
    const auto agents = n_agent_average_value(20, phi, std::nullopt, 0.6, cfg);
    EXPECT_LE(std::abs(binom.value - agents.value),
              3.0 * std::hypot(binom.std_error, agents.std_error));
}

TEST(NAgentValue, IndependentOfThreadCount) {
    const PolicyFn phi = [](double mu) { return 0.3 * mu; };
    for (bool per_agent : {false, true}) {
        auto cfg = config(500, 8);
        cfg.per_agent = per_agent;
        set_default_threads(1);
        const auto a = n_agent_average_value(30, phi, std::nullopt, 0.5, cfg);
        set_default_threads(4);
        const auto b = n_agent_average_value(30, phi, std::nullopt, 0.5, cfg);
        set_default_threads(1);
        EXPECT_EQ(a.value, b.value);
        EXPECT_EQ(a.std_error, b.std_error);
    }
}

TEST(NAgentValue, InputValidation) {
    const PolicyFn phi = [](double) { return 0.5; };
    EXPECT_THROW(n_agent_average_value(0, phi, std::nullopt, 0.5, {}), std::invalid_argument);
    EXPECT_THROW(n_agent_average_value(5, phi, std::nullopt, 1.5, {}), std::invalid_argument);
    auto cfg = config(0, 1);
    EXPECT_THROW(n_agent_average_value(5, phi, std::nullopt, 0.5, cfg), std::invalid_argument);
}

TEST(EpsilonGap, StopAtRewardPeak) {
    const auto g = n_agent_epsilon_gap(100, [](double) { return 1.0; }, 0.0, config(2000, 4));
    EXPECT_NEAR(g.gap, 0.0, 1e-15);
    EXPECT_NEAR(g.value.value, 1.0, 1e-15);
}

TEST(EpsilonGap, ShrinksWithN) {
    const PolicyFn phi0 = [](double mu) { return closed_form_policy(kRd, mu); };
    const auto cfg = config(20000, 6);
    const auto small = n_agent_epsilon_gap(100, phi0, 0.6, cfg);
    const auto large = n_agent_epsilon_gap(10000, phi0, 0.6, cfg);
    EXPECT_LE(large.gap, small.gap + 3.0 * std::hypot(small.std_error, large.std_error));
}

TEST(EmpiricalRate, ExactValues) {
    EXPECT_DOUBLE_EQ(exact_empirical_rate(0.5, 1), 0.5);
    EXPECT_DOUBLE_EQ(exact_empirical_rate(0.5, 2), 0.25);
    EXPECT_NEAR(exact_empirical_rate(0.5, 100), 0.0398, 1e-4);
    EXPECT_EQ(exact_empirical_rate(0.0, 10), 0.0);
    EXPECT_THROW(exact_empirical_rate(0.5, 0), std::invalid_argument);
}

TEST(EmpiricalRate, MonteCarloSlope) {
    const auto res = estimate_empirical_rate(0.5, {100, 1000, 10000, 100000}, 20000, 42);
    ASSERT_EQ(res.rows.size(), 4u);
    EXPECT_GE(res.slope, -0.6);
    EXPECT_LE(res.slope, -0.4);
    EXPECT_GT(res.slope_half_width, 0.0);
    for (const auto& r : res.rows)
        EXPECT_LE(std::abs(r.estimate - exact_empirical_rate(0.5, r.n)), 4.0 * r.std_error);
    EXPECT_THROW(estimate_empirical_rate(0.5, {100, 10}, 100, 1), std::invalid_argument);
}

TEST(EmpiricalRate, LogLogFitOfExactPowerLaw) {
    std::vector<RateRow> rows;
    for (std::size_t n : {10u, 100u, 1000u}) rows.push_back({n, 2.0 / std::sqrt(double(n)), 0.0});
    const auto fit = fit_log_log(rows);
    EXPECT_NEAR(fit.slope, -0.5, 1e-14);
    EXPECT_EQ(fit.half_width, 0.0);
}

TEST(Coupling, EmpiricalW1BoundByEnumeration) {
    // Vectors with k and k' entries at A sharing j common A positions.
    for (std::size_t n = 1; n <= 12; ++n)
        for (std::size_t k = 0; k <= n; ++k)
            for (std::size_t kp = 0; kp <= n; ++kp) {
                const std::size_t jlo = k + kp > n ? k + kp - n : 0;
                for (std::size_t j = jlo; j <= std::min(k, kp); ++j) {
                    const double dn = static_cast<double>(n);
                    const double w1 = wasserstein_two_point(k / dn, kp / dn);
                    const double mean_d = static_cast<double>((k - j) + (kp - j)) / dn;
                    EXPECT_LE(w1, mean_d + 1e-15);
                }
            }
}

TEST(Exchangeability, PermutedStreamsGiveSameLaw) {
    const std::size_t n = 20, paths = 20000, steps = 3;
    std::vector<std::size_t> reversed(n);
    std::iota(reversed.rbegin(), reversed.rend(), 0);
    auto stats = [&](const std::vector<std::size_t>& map) {
        std::vector<double> mass(paths);
        for (std::size_t path = 0; path < paths; ++path) {
            const RngPlan rng{77, path, map};
            auto pop = initial_population(n, 0.7, rng);
            for (std::size_t k = 0; k < steps; ++k)
                pop = step_population(pop, [](double) { return 0.0; }, rng, k);
            mass[path] = pop.mass_on_a();
        }
        double m = 0.0, ss = 0.0;
        for (double x : mass) m += x;
        m /= paths;
        for (double x : mass) ss += (x - m) * (x - m);
        return std::pair{m, std::sqrt(ss / (paths - 1.0) / paths)};
    };
    const auto [m1, s1] = stats({});
    const auto [m2, s2] = stats(reversed);
    EXPECT_LE(std::abs(m1 - m2), 3.0 * std::hypot(s1, s2));
    EXPECT_NEAR(m1, 0.7 / 8.0, 3.0 * s1 + 1e-3);
}

TEST(RateCsv, Header) {
    std::ostringstream os;
    write_rate_csv(os, {{100, 0.04, 0.001}});
    EXPECT_EQ(os.str(), "N,estimate,stderr\n100,0.04,0.001\n");
}
