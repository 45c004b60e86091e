#pragma once

#include <Eigen/Core>
#include <Eigen/QR>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "regmarket/dataset.hpp"
#include "regmarket/mle.hpp"
#include "regmarket/rng.hpp"

namespace regmkt {

/// The four data-generating setups of the simulation studies. They share a
/// linear ground-truth interpolant over i.i.d. standard-normal features and
/// add layers of likelihood misspecification.
enum class SetupKind { Baseline, Interpolant, Noise, Heteroskedasticity };

inline const char* to_string(SetupKind k) {
    switch (k) {
        case SetupKind::Baseline: return "baseline";
        case SetupKind::Interpolant: return "interpolant";
        case SetupKind::Noise: return "noise";
        case SetupKind::Heteroskedasticity: return "heteroskedasticity";
    }
    return "?";
}

inline SetupKind setup_from_string(const std::string& s) {
    if (s == "baseline") return SetupKind::Baseline;
    if (s == "interpolant") return SetupKind::Interpolant;
    if (s == "noise") return SetupKind::Noise;
    if (s == "heteroskedasticity") return SetupKind::Heteroskedasticity;
    throw std::invalid_argument("unknown setup: " + s);
}

/// Optional time variation of w2, the coefficient of the first support
/// agent's feature.
struct Nonstationarity {
    enum class Kind { None, LinearDrift, StepChange };
    Kind kind = Kind::None;
    double w2_end = 0.0;    // destination value
    long change_step = 0;   // step of the discontinuity (0-based), StepChange only
};

struct SetupSpec {
    SetupKind kind = SetupKind::Baseline;
    Eigen::VectorXd true_w;     // [w0, w1, ..., wd], dummy coefficient first
    double xi = 1.0;            // noise precision
    long n_samples = 0;
    std::uint64_t seed = 0;
    Nonstationarity nonstat;
    double t_clip = 50.0;       // Student-t draws clipped to keep ledgers finite

    int n_features() const { return static_cast<int>(true_w.size()) - 1; }

    void validate() const {
        if (true_w.size() < 1) throw std::invalid_argument("setup: true_w must include the dummy");
        if (!(xi > 0.0)) throw std::invalid_argument("setup: xi must be positive");
        if (n_samples < 0) throw std::invalid_argument("setup: n_samples must be nonnegative");
        if (kind == SetupKind::Heteroskedasticity && n_features() < 2)
            throw std::invalid_argument("setup: heteroskedastic noise needs feature x2");
    }
};

/// True value of w2 at a given step under the spec's nonstationarity.
inline double w2_at(const SetupSpec& spec, long t) {
    const double w2_start = spec.true_w.size() > 2 ? spec.true_w[2] : 0.0;
    switch (spec.nonstat.kind) {
        case Nonstationarity::Kind::None:
            return w2_start;
        case Nonstationarity::Kind::LinearDrift: {
            if (spec.n_samples <= 1) return w2_start;
            const double frac = static_cast<double>(t) / static_cast<double>(spec.n_samples - 1);
            return w2_start + frac * (spec.nonstat.w2_end - w2_start);
        }
        case Nonstationarity::Kind::StepChange:
            return t < spec.nonstat.change_step ? w2_start : spec.nonstat.w2_end;
    }
    return w2_start;
}

/// Synthetic dataset: features i.i.d. standard normal, target per setup.
inline Dataset generate(const SetupSpec& spec) {
    spec.validate();
    const int d = spec.n_features();
    Rng rng(spec.seed);
    Eigen::MatrixXd x(spec.n_samples, d);
    Eigen::VectorXd y(spec.n_samples);
    const double noise_scale = 1.0 / std::sqrt(spec.xi);

    for (long t = 0; t < spec.n_samples; ++t) {
        for (int k = 0; k < d; ++k) x(t, k) = rng.normal();

        double f = spec.true_w[0];
        for (int k = 0; k < d; ++k) {
            const double w = (k == 1) ? w2_at(spec, t) : spec.true_w[k + 1];
            const double v = x(t, k);
            f += w * (spec.kind == SetupKind::Interpolant ? v * v : v);
        }

        double eps;
        if (spec.kind == SetupKind::Noise || spec.kind == SetupKind::Heteroskedasticity) {
            double tdraw = rng.student_t2();
            tdraw = std::clamp(tdraw, -spec.t_clip, spec.t_clip);
            eps = tdraw * noise_scale;
            if (spec.kind == SetupKind::Heteroskedasticity) eps *= x(t, 1) * x(t, 1);
        } else {
            eps = rng.normal() * noise_scale;
        }
        y[t] = f + eps;
    }
    return Dataset(std::move(x), std::move(y));
}

/// Untruthful report: centred Gaussian noise added to exactly one feature
/// column; every other column is untouched.
inline Dataset noisy_report(const Dataset& data, int feature, double noise_std,
                            std::uint64_t seed) {
    if (noise_std < 0.0) throw std::invalid_argument("noisy_report: noise_std must be >= 0");
    if (feature < 0 || feature >= data.cols())
        throw std::invalid_argument("noisy_report: feature index out of range");
    Dataset out = data;
    if (noise_std == 0.0) return out;
    Rng rng(seed);
    for (Eigen::Index t = 0; t < out.rows(); ++t)
        out.inputs(t, feature) += noise_std * rng.normal();
    return out;
}

/// Closed-form generalized ridge estimate: the minimizer of
///   sum_t [ (y_t - w^T psi_t)^2 + w^T Sigma w ]
/// i.e. (X^T X + N Sigma)^{-1} X^T y, the expected least-squares fit under
/// per-step reporting noise with diagonal covariance Sigma.
inline Eigen::VectorXd ridge_oracle(const Dataset& data, const std::vector<int>& coalition,
                                    const Eigen::VectorXd& noise_variance,
                                    const Hypothesis& hypothesis) {
    const Eigen::MatrixXd x = design_matrix(data, coalition, hypothesis);
    if (noise_variance.size() != x.cols())
        throw std::invalid_argument("ridge_oracle: Sigma must match the design columns");
    if ((noise_variance.array() < 0.0).any())
        throw std::invalid_argument("ridge_oracle: Sigma entries must be nonnegative");
    Eigen::MatrixXd system = x.transpose() * x;
    system += static_cast<double>(data.rows()) * noise_variance.asDiagonal().toDenseMatrix();
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(system);
    return cod.solve(x.transpose() * data.targets);
}

/// Closed-form moments of phi = w^2 var(X) with w ~ N(w_mean, w_var): a
/// scaled noncentral chi-squared with one degree of freedom.
struct MomentCheckReport {
    double theoretical_mean = 0.0;
    double theoretical_variance = 0.0;
    double empirical_mean = 0.0;
    double empirical_variance = 0.0;
    double z_mean = 0.0;       // informational; the scale of the paper's mean formula is implied
    double z_variance = 0.0;
    std::size_t n_samples = 0;
};

inline MomentCheckReport shapley_moment_check(double w_mean, double w_var, double x_var,
                                              const std::vector<double>& samples) {
    if (!(w_var >= 0.0) || !(x_var > 0.0))
        throw std::invalid_argument("shapley_moment_check: variances must be nonnegative");
    if (samples.size() < 2) throw std::invalid_argument("shapley_moment_check: need samples");

    MomentCheckReport r;
    r.n_samples = samples.size();
    r.theoretical_mean = x_var * (w_var + w_mean * w_mean);
    r.theoretical_variance =
        2.0 * w_var * (2.0 * w_mean * w_mean + w_var) * x_var * x_var;

    const double n = static_cast<double>(samples.size());
    double mean = 0.0;
    for (double s : samples) mean += s;
    mean /= n;
    double m2 = 0.0, m4 = 0.0;
    for (double s : samples) {
        const double d = s - mean;
        m2 += d * d;
        m4 += d * d * d * d;
    }
    const double var = m2 / (n - 1.0);
    m2 /= n;
    m4 /= n;
    r.empirical_mean = mean;
    r.empirical_variance = var;

    const double se_mean = std::sqrt(var / n);
    const double se_var = std::sqrt(std::max(m4 - m2 * m2, 0.0) / n);
    r.z_mean = (mean - r.theoretical_mean) / se_mean;
    r.z_variance = (var - r.theoretical_variance) / se_var;
    return r;
}

/// Draws phi = w^2 var(X) samples for the moment check.
inline std::vector<double> sample_shapley_moments(double w_mean, double w_var, double x_var,
                                                  std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> out(n);
    const double sd = std::sqrt(w_var);
    for (std::size_t k = 0; k < n; ++k) {
        const double w = w_mean + sd * rng.normal();
        out[k] = w * w * x_var;
    }
    return out;
}

/// Seeded Monte Carlo harness: run k receives Rng::derive(master, k) and the
/// results come back in run order regardless of scheduling, so reductions
/// are independent of completion order.
template <typename Result, typename RunFn>
std::vector<Result> run_seeded(long runs, std::uint64_t master_seed, int jobs, RunFn&& fn) {
    if (runs < 1) throw std::invalid_argument("run_seeded: runs must be >= 1");
    if (jobs <= 0) jobs = static_cast<int>(std::thread::hardware_concurrency());
    jobs = std::max(1, std::min<int>(jobs, static_cast<int>(runs)));

    std::vector<Result> results(static_cast<std::size_t>(runs));
    if (jobs == 1) {
        for (long k = 0; k < runs; ++k)
            results[static_cast<std::size_t>(k)] = fn(k, Rng::derive(master_seed, static_cast<std::uint64_t>(k)));
        return results;
    }
    std::atomic<long> next{0};
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(jobs));
    std::exception_ptr error;
    std::mutex error_mutex;
    for (int w = 0; w < jobs; ++w) {
        pool.emplace_back([&]() {
            for (;;) {
                const long k = next.fetch_add(1);
                if (k >= runs) return;
                try {
                    results[static_cast<std::size_t>(k)] =
                        fn(k, Rng::derive(master_seed, static_cast<std::uint64_t>(k)));
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!error) error = std::current_exception();
                    return;
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
    return results;
}

inline double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

}  // namespace regmkt
