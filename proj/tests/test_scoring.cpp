#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <vector>

#include "regmarket/rng.hpp"
#include "regmarket/scoring.hpp"

using namespace regmkt;

namespace {

// Quadrature oracle for the Gaussian KL divergence: Simpson's rule over the
// hull of both supports, evaluated through log densities.
double kl_quadrature(const PredictiveDistribution& p, const PredictiveDistribution& q) {
    const double sp = 1.0 / std::sqrt(p.precision);
    const double sq = 1.0 / std::sqrt(q.precision);
    const double lo = std::min(p.mean - 14.0 * sp, q.mean - 14.0 * sq);
    const double hi = std::max(p.mean + 14.0 * sp, q.mean + 14.0 * sq);
    const int n = 40000;  // even
    const double h = (hi - lo) / n;
    const auto logpdf = [](const PredictiveDistribution& d, double x) {
        const double r = x - d.mean;
        return 0.5 * (std::log(d.precision) - kLogTwoPi - d.precision * r * r);
    };
    const auto integrand = [&](double x) {
        const double lp = logpdf(p, x);
        const double density = std::exp(lp);
        if (density < 1e-300) return 0.0;
        return density * (lp - logpdf(q, x));
    };
    double sum = integrand(lo) + integrand(hi);
    for (int k = 1; k < n; ++k) sum += integrand(lo + k * h) * (k % 2 ? 4.0 : 2.0);
    return sum * h / 3.0;
}

}  // namespace

TEST_CASE("nll closed form") {
    REQUIRE(nll({0.0, 1.0}, 0.0) == Catch::Approx(0.5 * kLogTwoPi));
    REQUIRE(nll({0.0, 1.0}, 1.0) == Catch::Approx(0.5 * kLogTwoPi + 0.5));

    // monotone in |y - mean| for fixed precision
    double prev = nll({0.0, 2.5}, 0.0);
    for (double y : {0.3, 0.7, 1.5, 4.0}) {
        const double cur = nll({0.0, 2.5}, y);
        REQUIRE(cur > prev);
        prev = cur;
    }
}

TEST_CASE("nll is a strictly proper score for Gaussians") {
    Rng rng(314);
    const double true_mean = 0.4, true_prec = 2.0;
    std::vector<double> samples(20000);
    for (auto& s : samples) s = true_mean + rng.normal() / std::sqrt(true_prec);

    double best = 1e300;
    double best_mean = 0, best_prec = 0;
    for (double m : {-0.4, 0.0, 0.4, 0.8, 1.2}) {
        for (double prec : {0.5, 1.0, 2.0, 4.0}) {
            double total = 0.0;
            for (double s : samples) total += nll({m, prec}, s);
            if (total < best) {
                best = total;
                best_mean = m;
                best_prec = prec;
            }
        }
    }
    REQUIRE(best_mean == Catch::Approx(true_mean));
    REQUIRE(best_prec == Catch::Approx(true_prec));
}

TEST_CASE("gaussian_kl basics") {
    const PredictiveDistribution p{1.0, 1.0}, q{0.0, 1.0};
    REQUIRE(gaussian_kl(p, p) == 0.0);
    REQUIRE(gaussian_kl(p, q) == Catch::Approx(0.5));

    // asymmetry witness
    const PredictiveDistribution a{0.0, 4.0}, b{0.0, 0.5};
    REQUIRE(gaussian_kl(a, b) != gaussian_kl(b, a));

    REQUIRE_THROWS_AS(gaussian_kl({0.0, -1.0}, q), std::invalid_argument);
}

TEST_CASE("gaussian_kl nonnegativity and equal-precision identity") {
    Rng rng(500);
    for (int rep = 0; rep < 300; ++rep) {
        const PredictiveDistribution p{rng.uniform(-3, 3), std::exp(rng.uniform(-1.5, 1.5))};
        const PredictiveDistribution q{rng.uniform(-3, 3), std::exp(rng.uniform(-1.5, 1.5))};
        REQUIRE(gaussian_kl(p, q) >= 0.0);

        // common precision: kl = (xi/2) * dmean^2, an algebraic identity
        const PredictiveDistribution r{q.mean, p.precision};
        const double d = p.mean - q.mean;
        REQUIRE(std::abs(gaussian_kl(p, r) - 0.5 * p.precision * d * d) <= 1e-12);
    }
}

TEST_CASE("gaussian_kl matches the quadrature oracle") {
    Rng rng(901);
    for (int rep = 0; rep < 50; ++rep) {
        const PredictiveDistribution p{rng.uniform(-3, 3), std::exp(rng.uniform(-1.5, 1.5))};
        const PredictiveDistribution q{rng.uniform(-3, 3), std::exp(rng.uniform(-1.5, 1.5))};
        REQUIRE(gaussian_kl(p, q) == Catch::Approx(kl_quadrature(p, q)).margin(1e-6));
    }
}

TEST_CASE("recursive_update follows Eq. 7 with first-value initialization") {
    RecursiveEstimate est(0.9);
    est = recursive_update(est, 1.0);  // first value absorbed as-is
    REQUIRE(est.value == 1.0);
    REQUIRE(est.steps == 1);
    est = recursive_update(est, 2.0);
    REQUIRE(est.value == Catch::Approx(1.1));

    // tau = 0: full forgetting
    RecursiveEstimate zero(0.0);
    zero = recursive_update(zero, 5.0);
    zero = recursive_update(zero, -3.0);
    REQUIRE(zero.value == -3.0);

    // tau = 1: the initial estimate persists
    RecursiveEstimate one(1.0);
    one = recursive_update(one, 4.0);
    for (double v : {9.0, -2.0, 100.0}) one = recursive_update(one, v);
    REQUIRE(one.value == 4.0);

    REQUIRE_THROWS_AS(RecursiveEstimate(1.5), std::invalid_argument);
}

TEST_CASE("recursive estimates stay within the convex hull of the values") {
    Rng rng(77);
    for (double tau : {0.0, 0.3, 0.9, 1.0}) {
        RecursiveEstimate est(tau);
        double lo = 1e300, hi = -1e300;
        for (int k = 0; k < 100; ++k) {
            const double v = rng.uniform(-5, 5);
            lo = std::min(lo, v);
            hi = std::max(hi, v);
            est = recursive_update(est, v);
            REQUIRE(est.value >= lo - 1e-12);
            REQUIRE(est.value <= hi + 1e-12);
        }
    }
}

TEST_CASE("expected_shortfall on fixed samples") {
    REQUIRE(expected_shortfall({2.5, 2.5, 2.5, 2.5}, 0.3) == Catch::Approx(-2.5));
    REQUIRE(expected_shortfall({-3.0, -1.0, 0.0, 2.0, 10.0}, 0.2) == Catch::Approx(3.0));
    REQUIRE_THROWS_AS(expected_shortfall({}, 0.1), std::invalid_argument);
    REQUIRE_THROWS_AS(expected_shortfall({1.0}, 0.0), std::invalid_argument);
    REQUIRE_THROWS_AS(expected_shortfall({1.0}, 1.0), std::invalid_argument);
}

TEST_CASE("expected_shortfall approaches the analytic Gaussian value") {
    Rng rng(2718);
    std::vector<double> samples(200000);
    for (auto& s : samples) s = rng.normal();
    // ES_alpha for N(0,1): pdf(z_alpha) / alpha with alpha = 0.05
    REQUIRE(expected_shortfall(samples, 0.05) == Catch::Approx(2.0627).margin(0.05));
}

TEST_CASE("subsample confidence interval") {
    std::vector<double> constant(50, 3.25);
    const auto ci = subsample_confidence_interval(constant, StatisticKind::Mean, 0.05, 0.95, 1);
    REQUIRE(ci.first == 3.25);
    REQUIRE(ci.second == 3.25);

    REQUIRE_THROWS_AS(
        subsample_confidence_interval({1.0, 2.0}, StatisticKind::Mean, 0.05, 0.95, 1),
        std::invalid_argument);

    // deterministic given the seed
    Rng rng(404);
    std::vector<double> samples(400);
    for (auto& s : samples) s = rng.normal();
    const auto a = subsample_confidence_interval(samples, StatisticKind::Mean, 0.05, 0.95, 9);
    const auto b = subsample_confidence_interval(samples, StatisticKind::Mean, 0.05, 0.95, 9);
    REQUIRE(a == b);
}

TEST_CASE("subsample CI covers the full-sample statistic in most trials") {
    Rng rng(808);
    int covered = 0;
    const int trials = 60;
    for (int trial = 0; trial < trials; ++trial) {
        std::vector<double> samples(300);
        for (auto& s : samples) s = rng.normal();
        const double stat = evaluate_statistic(StatisticKind::Mean, samples, 0.05);
        const auto ci = subsample_confidence_interval(samples, StatisticKind::Mean, 0.05, 0.95,
                                                      static_cast<std::uint64_t>(trial));
        if (stat >= ci.first && stat <= ci.second) ++covered;
    }
    REQUIRE(covered >= static_cast<int>(0.95 * trials));
}

TEST_CASE("subsample CI narrows with more data") {
    Rng rng(606);
    std::vector<double> small(100), large(10000);
    for (auto& s : small) s = rng.normal();
    for (auto& s : large) s = rng.normal();
    const auto ci_small = subsample_confidence_interval(small, StatisticKind::Mean, 0.05, 0.95, 3);
    const auto ci_large = subsample_confidence_interval(large, StatisticKind::Mean, 0.05, 0.95, 3);
    REQUIRE(ci_small.second - ci_small.first > ci_large.second - ci_large.first);
}

TEST_CASE("risk_report aggregates the pieces") {
    Rng rng(1234);
    std::vector<double> samples(2000);
    for (auto& s : samples) s = rng.normal(1.0, 0.5);
    const RiskReport report = risk_report(samples, 0.05, 0.95, 10);
    REQUIRE(report.expected_value == Catch::Approx(1.0).margin(0.05));
    REQUIRE(report.expected_shortfall == Catch::Approx(-1.0 + 0.5 * 2.0627).margin(0.1));
    REQUIRE(report.ev_interval.first < report.expected_value);
    REQUIRE(report.ev_interval.second > report.expected_value);
}
