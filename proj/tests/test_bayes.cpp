#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <cmath>

#include "regmarket/basis.hpp"
#include "regmarket/belief.hpp"
#include "regmarket/mle.hpp"
#include "regmarket/rng.hpp"
#include "regmarket/simulation.hpp"

using namespace regmkt;

namespace {

Eigen::VectorXd vec(std::initializer_list<double> v) {
    Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
    Eigen::Index k = 0;
    for (double x : v) out[k++] = x;
    return out;
}

// Batch conjugate posterior from the normal equations: Lambda = gamma I +
// xi X^T X, m = Lambda^{-1} xi X^T y. Independent of the sequential update
// path it checks.
struct BatchPosterior {
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;
};

BatchPosterior batch_posterior_oracle(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                      double gamma, double xi) {
    const Eigen::MatrixXd lam =
        gamma * Eigen::MatrixXd::Identity(x.cols(), x.cols()) + xi * x.transpose() * x;
    const Eigen::MatrixXd cov = lam.inverse();
    return {cov * (xi * x.transpose() * y), cov};
}

// Pointwise product oracle for likelihood flattening in 1-D: evaluates
// post^tau * prior^(1-tau) on a fine grid, normalizes, and measures the
// resulting mean and variance numerically.
struct GridMoments {
    double mean;
    double var;
};

GridMoments flatten_grid_oracle(double m_post, double v_post, double m_prior, double v_prior,
                                double tau) {
    const double lo = std::min(m_post, m_prior) - 12.0 * std::sqrt(std::max(v_post, v_prior));
    const double hi = std::max(m_post, m_prior) + 12.0 * std::sqrt(std::max(v_post, v_prior));
    const int n = 200001;
    const double h = (hi - lo) / (n - 1);
    double z = 0.0, m1 = 0.0, m2 = 0.0;
    for (int k = 0; k < n; ++k) {
        const double x = lo + k * h;
        const double lp = -0.5 * (x - m_post) * (x - m_post) / v_post;
        const double l0 = -0.5 * (x - m_prior) * (x - m_prior) / v_prior;
        const double density = std::exp(tau * lp + (1.0 - tau) * l0);
        z += density;
        m1 += density * x;
        m2 += density * x * x;
    }
    m1 /= z;
    m2 /= z;
    return {m1, m2 - m1 * m1};
}

}  // namespace

TEST_CASE("init_prior is zero-mean isotropic") {
    const GaussianBelief b = init_prior(2, 1.0);
    REQUIRE(b.mean().isZero());
    REQUIRE(b.covariance().isApprox(Eigen::MatrixXd::Identity(2, 2)));

    REQUIRE(init_prior(1, 1e-6).covariance()(0, 0) == Catch::Approx(1e6));
    REQUIRE(init_prior(4, 0.5).covariance().isApprox(2.0 * Eigen::MatrixXd::Identity(4, 4)));

    REQUIRE_THROWS_AS(init_prior(0, 1.0), std::invalid_argument);
    REQUIRE_THROWS_AS(init_prior(2, 0.0), std::invalid_argument);
    REQUIRE_THROWS_AS(init_prior(2, -1.0), std::invalid_argument);
}

TEST_CASE("flatten_prior limits are exact") {
    Rng rng(11);
    Eigen::MatrixXd a(3, 3);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) a(i, j) = rng.normal();
    const Eigen::MatrixXd cov = a * a.transpose() + Eigen::MatrixXd::Identity(3, 3);
    const GaussianBelief posterior(vec({1.0, -2.0, 0.5}), cov);
    const GaussianBelief prior = init_prior(3, 0.5);

    const GaussianBelief at_one = flatten_prior(posterior, prior, 1.0);
    REQUIRE(at_one.mean() == posterior.mean());
    REQUIRE(at_one.covariance() == posterior.covariance());

    const GaussianBelief at_zero = flatten_prior(posterior, prior, 0.0);
    REQUIRE(at_zero.mean() == prior.mean());
    REQUIRE(at_zero.covariance() == prior.covariance());

    REQUIRE_THROWS_AS(flatten_prior(posterior, init_prior(2, 1.0), 0.5), std::invalid_argument);
    REQUIRE_THROWS_AS(flatten_prior(posterior, prior, 1.5), std::invalid_argument);
    REQUIRE_THROWS_AS(flatten_prior(posterior, prior, -0.1), std::invalid_argument);
}

TEST_CASE("flatten_prior matches the grid-product oracle") {
    // tau=0.5, posterior N(1,1), prior N(0,1) -> N(0.5, 1)
    const GaussianBelief post(vec({1.0}), Eigen::MatrixXd::Identity(1, 1));
    const GaussianBelief prior(vec({0.0}), Eigen::MatrixXd::Identity(1, 1));
    const GaussianBelief flat = flatten_prior(post, prior, 0.5);
    REQUIRE(flat.mean()[0] == Catch::Approx(0.5).margin(1e-12));
    REQUIRE(flat.covariance()(0, 0) == Catch::Approx(1.0).margin(1e-12));

    const GridMoments oracle = flatten_grid_oracle(1.0, 1.0, 0.0, 1.0, 0.5);
    REQUIRE(flat.mean()[0] == Catch::Approx(oracle.mean).margin(1e-6));
    REQUIRE(flat.covariance()(0, 0) == Catch::Approx(oracle.var).margin(1e-6));

    // a second, asymmetric case against the same oracle
    const GaussianBelief post2(vec({2.0}), 0.25 * Eigen::MatrixXd::Identity(1, 1));
    const GaussianBelief prior2(vec({-1.0}), 4.0 * Eigen::MatrixXd::Identity(1, 1));
    const GaussianBelief flat2 = flatten_prior(post2, prior2, 0.7);
    const GridMoments oracle2 = flatten_grid_oracle(2.0, 0.25, -1.0, 4.0, 0.7);
    REQUIRE(flat2.mean()[0] == Catch::Approx(oracle2.mean).margin(1e-5));
    REQUIRE(flat2.covariance()(0, 0) == Catch::Approx(oracle2.var).margin(1e-5));
}

TEST_CASE("update_posterior: scalar conjugate case") {
    const GaussianBelief prior(vec({0.0}), Eigen::MatrixXd::Identity(1, 1));
    const GaussianBelief post = update_posterior(prior, vec({1.0}), 2.0, 1.0);
    REQUIRE(post.mean()[0] == Catch::Approx(1.0).margin(1e-14));
    REQUIRE(post.covariance()(0, 0) == Catch::Approx(0.5).margin(1e-14));
}

TEST_CASE("update_posterior: near-zero information leaves the mean") {
    const GaussianBelief prior(vec({0.3, -0.7}), Eigen::MatrixXd::Identity(2, 2));
    const GaussianBelief post = update_posterior(prior, vec({1.0, 2.0}), 5.0, 1e-12);
    REQUIRE((post.mean() - prior.mean()).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("update_posterior rejects non-finite inputs") {
    const GaussianBelief prior = init_prior(2, 1.0);
    REQUIRE_THROWS_AS(update_posterior(prior, vec({1.0, std::nan("")}), 0.0, 1.0),
                      std::invalid_argument);
    REQUIRE_THROWS_AS(update_posterior(prior, vec({1.0, 0.0}), INFINITY, 1.0),
                      std::invalid_argument);
    REQUIRE_THROWS_AS(update_posterior(prior, vec({1.0}), 0.0, 1.0), std::invalid_argument);
}

TEST_CASE("sequential updates equal the batch posterior (Eq. 4b)") {
    Rng rng(42);
    const int n = 60, d = 4;
    const double gamma = 1e-6, xi = 1.3;
    Eigen::MatrixXd x(n, d);
    Eigen::VectorXd y(n);
    for (int t = 0; t < n; ++t) {
        x(t, 0) = 1.0;
        for (int k = 1; k < d; ++k) x(t, k) = rng.normal();
        y[t] = 0.5 * x(t, 1) - 0.2 * x(t, 2) + rng.normal();
    }

    GaussianBelief belief = init_prior(d, gamma);
    for (int t = 0; t < n; ++t)
        belief = update_posterior(belief, x.row(t).transpose(), y[t], xi);

    const BatchPosterior oracle = batch_posterior_oracle(x, y, gamma, xi);
    REQUIRE((belief.mean() - oracle.mean).norm() / oracle.mean.norm() < 1e-9);
    REQUIRE((belief.covariance() - oracle.cov).norm() / oracle.cov.norm() < 1e-9);
}

TEST_CASE("posterior covariance trace is non-increasing under updates") {
    Rng rng(7);
    GaussianBelief belief = init_prior(3, 0.1);
    double trace = belief.covariance().trace();
    for (int t = 0; t < 50; ++t) {
        const Eigen::VectorXd psi = vec({1.0, rng.normal(), rng.normal()});
        belief = update_posterior(belief, psi, rng.normal(), 0.8);
        const double next = belief.covariance().trace();
        REQUIRE(next <= trace + 1e-12);
        trace = next;
    }
}

TEST_CASE("predictive mean and precision") {
    const GaussianBelief b(vec({1.0, 2.0}), Eigen::MatrixXd::Identity(2, 2));
    const PredictiveDistribution pred = predictive(b, vec({1.0, 3.0}), 1.0);
    REQUIRE(pred.mean == Catch::Approx(7.0));
    // S = I, psi = [1,1]: variance 1 + 2 = 3
    const PredictiveDistribution p2 = predictive(b, vec({1.0, 1.0}), 1.0);
    REQUIRE(p2.precision == Catch::Approx(1.0 / 3.0));

    // degenerate covariance -> precision equals xi
    const GaussianBelief tight(vec({1.0}), 1e-300 * Eigen::MatrixXd::Identity(1, 1));
    REQUIRE(predictive(tight, vec({2.0}), 0.7).precision == Catch::Approx(0.7));
}

TEST_CASE("predictive precision stays within (0, xi]") {
    Rng rng(99);
    for (int rep = 0; rep < 200; ++rep) {
        Eigen::MatrixXd a(3, 3);
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) a(i, j) = rng.normal();
        const GaussianBelief b(vec({0.0, 0.0, 0.0}),
                               a * a.transpose() + 1e-9 * Eigen::MatrixXd::Identity(3, 3));
        const Eigen::VectorXd psi = vec({rng.normal(), rng.normal(), rng.normal()});
        const double xi = std::exp(rng.normal());
        const PredictiveDistribution pred = predictive(b, psi, xi);
        REQUIRE(pred.precision > 0.0);
        REQUIRE(pred.precision <= xi * (1.0 + 1e-12));
    }
}

TEST_CASE("mle_predictive matches the degenerate Bayesian case") {
    const Eigen::VectorXd theta = vec({0.4, -1.2});
    const Eigen::VectorXd psi = vec({1.0, 2.5});
    const PredictiveDistribution mp = mle_predictive(theta, psi, 2.0);
    const GaussianBelief degenerate(theta, Eigen::MatrixXd::Zero(2, 2));
    const PredictiveDistribution bp = predictive(degenerate, psi, 2.0);
    REQUIRE(mp.mean == Catch::Approx(bp.mean));
    REQUIRE(mp.precision == Catch::Approx(bp.precision));

    REQUIRE(mle_predictive(vec({0.0, 0.0}), psi, 1.7).mean == 0.0);
    REQUIRE(mle_predictive(vec({0.0, 0.0}), psi, 1.7).precision == Catch::Approx(1.7));
    REQUIRE_THROWS_AS(mle_predictive(theta, vec({1.0}), 1.0), std::invalid_argument);
}

TEST_CASE("mle predictive precision always >= Bayesian for the same xi") {
    Rng rng(123);
    for (int rep = 0; rep < 100; ++rep) {
        Eigen::MatrixXd a(2, 2);
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j) a(i, j) = rng.normal();
        const Eigen::MatrixXd s = a * a.transpose();  // PSD
        const Eigen::VectorXd theta = vec({rng.normal(), rng.normal()});
        const Eigen::VectorXd psi = vec({rng.normal(), rng.normal()});
        const double xi = std::exp(rng.normal());
        REQUIRE(mle_predictive(theta, psi, xi).precision >=
                predictive(GaussianBelief(theta, s), psi, xi).precision - 1e-15);
    }
}

TEST_CASE("mle_fit recovers noise-free coefficients and interpolates") {
    // w = [-0.11, 0.31, 0.08, 0.65], noise-free
    Rng rng(2024);
    const Eigen::VectorXd w = vec({-0.11, 0.31, 0.08, 0.65});
    Eigen::MatrixXd x(30, 3);
    Eigen::VectorXd y(30);
    for (int t = 0; t < 30; ++t) {
        for (int k = 0; k < 3; ++k) x(t, k) = rng.normal();
        y[t] = w[0] + w[1] * x(t, 0) + w[2] * x(t, 1) + w[3] * x(t, 2);
    }
    const Dataset data(x, y);
    const Hypothesis hyp = Hypothesis::linear(3, 1.23);
    const MleFit fit = mle_fit(data, {0, 1, 2}, hyp);
    REQUIRE_FALSE(fit.rank_deficient);
    REQUIRE((fit.coefficients - w).cwiseAbs().maxCoeff() < 1e-8);

    // two points, dummy + one linear basis: exact interpolation
    Eigen::MatrixXd x2(2, 1);
    x2 << 0.0, 1.0;
    const Dataset line(x2, vec({0.0, 1.0}));
    const MleFit interp = mle_fit(line, {0}, Hypothesis::linear(1, 1.0));
    REQUIRE(interp.coefficients[0] == Catch::Approx(0.0).margin(1e-12));
    REQUIRE(interp.coefficients[1] == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("mle_fit matches the normal-equations oracle") {
    Rng rng(5);
    Eigen::MatrixXd x(40, 2);
    Eigen::VectorXd y(40);
    for (int t = 0; t < 40; ++t) {
        x(t, 0) = rng.normal();
        x(t, 1) = rng.normal();
        y[t] = 0.3 - x(t, 0) + 2.0 * x(t, 1) + 0.5 * rng.normal();
    }
    const Dataset data(x, y);
    const Hypothesis hyp = Hypothesis::linear(2, 1.0);
    const MleFit fit = mle_fit(data, {0, 1}, hyp);

    const Eigen::MatrixXd xd = design_matrix(data, {0, 1}, hyp);
    const Eigen::VectorXd oracle =
        (xd.transpose() * xd).ldlt().solve(xd.transpose() * y);
    REQUIRE((fit.coefficients - oracle).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("mle_fit flags underdetermined systems and returns min-norm") {
    Rng rng(9);
    Eigen::MatrixXd x(2, 3);  // 2 rows, 4 coefficients
    Eigen::VectorXd y(2);
    for (int t = 0; t < 2; ++t) {
        for (int k = 0; k < 3; ++k) x(t, k) = rng.normal();
        y[t] = rng.normal();
    }
    const Dataset data(x, y);
    const Hypothesis hyp = Hypothesis::linear(3, 1.0);
    const MleFit fit = mle_fit(data, {0, 1, 2}, hyp);
    REQUIRE(fit.rank_deficient);
    // still fits the observations exactly
    const Eigen::MatrixXd xd = design_matrix(data, {0, 1, 2}, hyp);
    REQUIRE((xd * fit.coefficients - y).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("square basis recovers interpolant-setup coefficients") {
    SetupSpec spec;
    spec.kind = SetupKind::Interpolant;
    spec.true_w = vec({0.2, -0.4, 0.9, 0.1});
    spec.xi = 1e8;  // effectively noise-free
    spec.n_samples = 100;
    spec.seed = 31;
    const Dataset data = generate(spec);

    std::vector<BasisKind> basis{BasisKind::Dummy, BasisKind::Square, BasisKind::Square,
                                 BasisKind::Square};
    const Hypothesis hyp(basis, 1.0, 1e-6, 1.0);
    const MleFit fit = mle_fit(data, {0, 1, 2}, hyp);
    REQUIRE((fit.coefficients - spec.true_w).cwiseAbs().maxCoeff() < 1e-3);
}

TEST_CASE("hypothesis invariants") {
    REQUIRE_THROWS_AS(Hypothesis({BasisKind::Identity}, 1.0, 1.0, 1.0), std::invalid_argument);
    REQUIRE_THROWS_AS(Hypothesis({BasisKind::Dummy}, -1.0, 1.0, 1.0), std::invalid_argument);
    REQUIRE_THROWS_AS(Hypothesis({BasisKind::Dummy}, 1.0, 0.0, 1.0), std::invalid_argument);
    REQUIRE_THROWS_AS(Hypothesis({BasisKind::Dummy}, 1.0, 1.0, 1.1), std::invalid_argument);
    const Hypothesis ok = Hypothesis::linear(2, 1.0);
    REQUIRE(ok.basis[0] == BasisKind::Dummy);
    REQUIRE(ok.n_features() == 2);
}

TEST_CASE("posterior converges toward the MLE point mass (Eq. 13)") {
    // KL( posterior || delta at MLE ) is infinite; the operative distance is
    // the posterior's concentration around the MLE, which must shrink.
    SetupSpec spec;
    spec.kind = SetupKind::Baseline;
    spec.true_w = vec({-0.1, 0.3, 0.8, -0.4});
    spec.xi = 0.5;
    spec.n_samples = 4000;
    spec.seed = 77;
    const Dataset data = generate(spec);
    const Hypothesis hyp = Hypothesis::linear(3, spec.xi);

    double prev_spread = 1e100;
    double prev_distance = 1e100;
    for (long n : {100L, 400L, 1600L, 4000L}) {
        const Dataset subset(data.inputs.topRows(n), data.targets.head(n));
        GaussianBelief b = init_prior(4, 1e-6);
        for (Eigen::Index t = 0; t < n; ++t)
            b = update_posterior(b, hyp.design_vector(subset.inputs.row(t).transpose(), {0, 1, 2}),
                                 subset.targets[t], spec.xi);
        const MleFit fit = mle_fit(subset, {0, 1, 2}, hyp);
        const double spread = b.covariance().trace();
        const double distance = (b.mean() - fit.coefficients).norm();
        REQUIRE(spread < prev_spread);
        REQUIRE(distance <= prev_distance + 1e-6);
        prev_spread = spread;
        prev_distance = distance;
    }
}
