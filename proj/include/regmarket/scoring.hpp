#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <utility>
#include <vector>

#include "regmarket/belief.hpp"
#include "regmarket/rng.hpp"

namespace regmkt {

inline constexpr double kLogTwoPi = 1.8378770664093454836;

/// Negative log predictive likelihood of y under a Gaussian predictive.
inline double nll(const PredictiveDistribution& pred, double y) {
    const double d = y - pred.mean;
    return 0.5 * (kLogTwoPi - std::log(pred.precision) + pred.precision * d * d);
}

/// Closed-form KL divergence D(p || q) between univariate Gaussians in
/// precision form:
///   0.5 * (log(xi_p/xi_q) - 1 + xi_q/xi_p + xi_q (mu_p - mu_q)^2)
inline double gaussian_kl(const PredictiveDistribution& p, const PredictiveDistribution& q) {
    if (!(p.precision > 0.0) || !(q.precision > 0.0))
        throw std::invalid_argument("gaussian_kl: precisions must be positive");
    const double d = p.mean - q.mean;
    return 0.5 * (std::log(p.precision / q.precision) - 1.0 + q.precision / p.precision +
                  q.precision * d * d);
}

/// Exponential-forgetting estimate of an expectation:
///   E_t = (1 - tau) v_t + tau E_{t-1}
/// The first absorbed value initializes the estimate (the zero-step prior
/// carries no weight), so early estimates are unbiased.
struct RecursiveEstimate {
    double value = 0.0;
    double forgetting = 1.0;  // tau
    long steps = 0;

    explicit RecursiveEstimate(double tau = 1.0) : forgetting(tau) {
        if (!(tau >= 0.0 && tau <= 1.0))
            throw std::invalid_argument("recursive estimate: tau must lie in [0, 1]");
    }
};

inline RecursiveEstimate recursive_update(const RecursiveEstimate& prev, double current_value) {
    RecursiveEstimate next = prev;
    next.value = prev.steps == 0
                     ? current_value
                     : (1.0 - prev.forgetting) * current_value + prev.forgetting * prev.value;
    next.steps = prev.steps + 1;
    return next;
}

/// Empirical expected shortfall (CVaR): the negated mean of the
/// ceil(alpha * N) smallest samples.
inline double expected_shortfall(const std::vector<double>& samples, double alpha) {
    if (samples.empty()) throw std::invalid_argument("expected_shortfall: empty samples");
    if (!(alpha > 0.0 && alpha < 1.0))
        throw std::invalid_argument("expected_shortfall: alpha must lie in (0, 1)");
    std::vector<double> sorted = samples;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t k = static_cast<std::size_t>(
        std::ceil(alpha * static_cast<double>(sorted.size())));
    const double tail = std::accumulate(sorted.begin(), sorted.begin() + static_cast<long>(k), 0.0);
    return -tail / static_cast<double>(k);
}

enum class StatisticKind { Mean, ExpectedShortfall };

inline double evaluate_statistic(StatisticKind kind, const std::vector<double>& samples,
                                 double alpha) {
    switch (kind) {
        case StatisticKind::Mean:
            return std::accumulate(samples.begin(), samples.end(), 0.0) /
                   static_cast<double>(samples.size());
        case StatisticKind::ExpectedShortfall:
            return expected_shortfall(samples, alpha);
    }
    throw std::logic_error("unknown statistic");
}

namespace detail {
inline double sorted_quantile(const std::vector<double>& sorted, double q) {
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
}
}  // namespace detail

/// Two-sided confidence interval by sub-sampling: 500 resamples of size
/// floor(N/2) without replacement, empirical quantiles at the tails of the
/// requested level. Deterministic given the seed.
inline std::pair<double, double> subsample_confidence_interval(
    const std::vector<double>& samples, StatisticKind statistic, double alpha, double level,
    std::uint64_t rng_seed, int resamples = 500) {
    if (samples.size() < 20)
        throw std::invalid_argument("subsample_confidence_interval: need at least 20 samples");
    if (!(level > 0.0 && level < 1.0))
        throw std::invalid_argument("subsample_confidence_interval: level must lie in (0, 1)");

    const std::size_t n = samples.size();
    const std::size_t m = n / 2;
    Rng rng(rng_seed);
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::vector<double> subset(m);
    std::vector<double> stats;
    stats.reserve(static_cast<std::size_t>(resamples));
    for (int b = 0; b < resamples; ++b) {
        // partial Fisher-Yates: the first m slots become the resample
        for (std::size_t k = 0; k < m; ++k) {
            const std::size_t j = k + rng.index(n - k);
            std::swap(idx[k], idx[j]);
            subset[k] = samples[idx[k]];
        }
        stats.push_back(evaluate_statistic(statistic, subset, alpha));
    }
    std::sort(stats.begin(), stats.end());
    const double tail = (1.0 - level) / 2.0;
    return {detail::sorted_quantile(stats, tail), detail::sorted_quantile(stats, 1.0 - tail)};
}

/// Revenue risk summary for one market cell (Fig.-4-style reductions).
struct RiskReport {
    double expected_value = 0.0;
    double expected_shortfall = 0.0;
    double alpha = 0.05;
    std::pair<double, double> ev_interval{0.0, 0.0};
    std::pair<double, double> es_interval{0.0, 0.0};
};

inline RiskReport risk_report(const std::vector<double>& samples, double alpha, double level,
                              std::uint64_t rng_seed) {
    RiskReport r;
    r.alpha = alpha;
    r.expected_value = evaluate_statistic(StatisticKind::Mean, samples, alpha);
    r.expected_shortfall = expected_shortfall(samples, alpha);
    r.ev_interval = subsample_confidence_interval(samples, StatisticKind::Mean, alpha, level,
                                                  Rng::derive(rng_seed, 0));
    r.es_interval = subsample_confidence_interval(samples, StatisticKind::ExpectedShortfall, alpha,
                                                  level, Rng::derive(rng_seed, 1));
    return r;
}

}  // namespace regmkt
