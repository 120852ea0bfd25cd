#include "mfstop/discount.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "mfstop/diagnostics.hpp"

namespace mfstop {

Discount Discount::quasi_hyperbolic(double k_amp, double beta) {
    if (!(beta > 0.0 && beta < 1.0))
        throw std::invalid_argument("beta must lie in (0,1)");
    if (!(k_amp > 0.0))
        throw std::invalid_argument("K must be positive");
    if (!(k_amp * beta < 1.0))
        throw std::invalid_argument("K*beta must be < 1");
    Discount d;
    d.kind_ = Kind::quasi_hyperbolic;
    d.k_amp_ = k_amp;
    d.beta_ = beta;
    return d;
}

Discount Discount::sequence(std::vector<double> weights) {
    if (weights.empty() || weights.front() != 1.0)
        throw std::invalid_argument("discount sequence must start with delta(0) = 1");
    for (std::size_t k = 0; k < weights.size(); ++k) {
        if (!(weights[k] >= 0.0 && weights[k] <= 1.0))
            throw std::invalid_argument("discount weight outside [0,1] at k=" + std::to_string(k));
        if (k > 0 && weights[k] > weights[k - 1])
            throw std::invalid_argument("discount sequence not nonincreasing at k=" +
                                        std::to_string(k));
    }
    Discount d;
    d.kind_ = Kind::general_sequence;
    d.weights_ = std::move(weights);
    return d;
}

double Discount::weight(std::size_t k) const {
    if (kind_ == Kind::quasi_hyperbolic)
        return k == 0 ? 1.0 : k_amp_ * std::pow(beta_, static_cast<double>(k));
    return k < weights_.size() ? weights_[k] : 0.0;
}

double Discount::tail_sum(std::size_t from) const {
    if (kind_ == Kind::quasi_hyperbolic)
        return k_amp_ * std::pow(beta_, static_cast<double>(from + 1)) / (1.0 - beta_);
    double s = 0.0;
    for (std::size_t k = weights_.size(); k-- > from + 1;) s += weights_[k];
    return s;
}

RegularizedDiscount::RegularizedDiscount(Discount base, double lambda)
    : base_(std::move(base)), lambda_(lambda) {
    if (!(lambda > 0.0) || !std::isfinite(lambda))
        throw std::invalid_argument("lambda must be positive");
    if (lambda > 1.0)
        warn("lambda > 1 lies outside the range covered by the operator bounds");
}

double RegularizedDiscount::weight(std::size_t k) const {
    const double kk = static_cast<double>(k) * static_cast<double>(k);
    return base_.weight(k) * std::exp(-kk * std::log1p(lambda_));
}

double shannon_entropy(double phi) {
    if (!(phi >= 0.0 && phi <= 1.0))
        throw std::domain_error("entropy argument outside [0,1]");
    auto xlogx = [](double x) { return x > 0.0 ? x * std::log(x) : 0.0; };
    return -xlogx(phi) - xlogx(1.0 - phi);
}

TailMass lambda_tail_mass(double lambda, double tol) {
    if (!(lambda > 0.0)) throw std::invalid_argument("lambda must be positive");
    const double log_q = -std::log1p(lambda);
    double sum = 0.0;
    std::size_t k = 0;
    for (;; ++k) {
        const double term = std::exp(log_q * static_cast<double>(k) * static_cast<double>(k));
        sum += term;
        if (term < tol) break;
    }
    const double s = std::sqrt(lambda);
    return {lambda * sum, (1.0 + lambda) * std::log1p(s) + s, k + 1};
}

namespace {

// Suffix sums tail[n] = sum_{k>n} w(k) over a window long enough that the
// remainder is negligible against the smallest representable tolerance.
template <class Weight>
std::vector<double> suffix_tails(Weight&& w, std::size_t limit) {
    std::vector<double> terms;
    terms.reserve(256);
    for (std::size_t k = 0; k < limit; ++k) {
        const double t = w(k);
        terms.push_back(t);
        if (k > 1 && t < 1e-300) break;
    }
    std::vector<double> tail(terms.size(), 0.0);
    double acc = 0.0;
    for (std::size_t n = terms.size(); n-- > 0;) {
        tail[n] = acc;
        acc += terms[n];
    }
    return tail;
}

}  // namespace

std::size_t truncation_horizon(const RegularizedDiscount& rd, double reward_bound, double tol) {
    if (reward_bound < 0.0) throw std::invalid_argument("reward bound must be nonnegative");
    if (!(tol > 0.0)) throw std::invalid_argument("tolerance must be positive");
    if (std::isinf(tol)) return 0;
    const double scale = reward_bound + rd.lambda() * std::log(2.0);
    const auto tail = suffix_tails([&](std::size_t k) { return rd.weight(k); }, 1u << 20);
    for (std::size_t n = 0; n < tail.size(); ++n)
        if (scale * tail[n] < tol) return n;
    return tail.size();
}

PlainHorizon plain_truncation_horizon(const Discount& d, double reward_bound,
                                      double entropy_weight, double tol, std::size_t cap) {
    if (!(tol > 0.0)) throw std::invalid_argument("tolerance must be positive");
    const double scale = reward_bound + entropy_weight * std::log(2.0);
    if (std::isinf(tol)) return {0, scale * d.tail_sum(0)};
    for (std::size_t n = 0; n <= cap; ++n) {
        const double bound = scale * d.tail_sum(n);
        if (bound < tol) return {n, bound};
    }
    return {cap, scale * d.tail_sum(cap)};
}

}  // namespace mfstop
