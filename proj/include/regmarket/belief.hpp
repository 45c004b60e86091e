#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

namespace regmkt {

/// Univariate Gaussian predictive over the next target value, parameterized
/// by mean and precision (inverse variance).
struct PredictiveDistribution {
    double mean = 0.0;
    double precision = 1.0;

    double variance() const { return 1.0 / precision; }
};

/// Gaussian belief over the coefficients of one coalition model: mean vector
/// m and covariance matrix S (kept directly; symmetry re-enforced after each
/// update to suppress drift).
class GaussianBelief {
public:
    GaussianBelief() = default;

    GaussianBelief(Eigen::VectorXd mean, Eigen::MatrixXd covariance,
                   std::vector<int> coalition = {})
        : mean_(std::move(mean)), cov_(std::move(covariance)), coalition_(std::move(coalition)) {
        if (cov_.rows() != cov_.cols() || cov_.rows() != mean_.size())
            throw std::invalid_argument("belief: mean/covariance dimension mismatch");
        if (!mean_.allFinite() || !cov_.allFinite())
            throw std::invalid_argument("belief: non-finite entries");
        symmetrize();
    }

    Eigen::Index dim() const { return mean_.size(); }
    const Eigen::VectorXd& mean() const { return mean_; }
    const Eigen::MatrixXd& covariance() const { return cov_; }
    const std::vector<int>& coalition() const { return coalition_; }

    Eigen::MatrixXd precision() const {
        return cov_.ldlt().solve(Eigen::MatrixXd::Identity(cov_.rows(), cov_.cols()));
    }

private:
    void symmetrize() { cov_ = ((cov_ + cov_.transpose()) * 0.5).eval(); }

    Eigen::VectorXd mean_;
    Eigen::MatrixXd cov_;
    std::vector<int> coalition_;
};

/// Zero-mean isotropic prior N(0, (1/gamma) I).
inline GaussianBelief init_prior(int dim, double gamma, std::vector<int> coalition = {}) {
    if (dim < 1) throw std::invalid_argument("init_prior: dim must be >= 1");
    if (!(gamma > 0.0)) throw std::invalid_argument("init_prior: gamma must be positive");
    return GaussianBelief(Eigen::VectorXd::Zero(dim),
                          Eigen::MatrixXd::Identity(dim, dim) / gamma,
                          std::move(coalition));
}

/// Likelihood flattening: the Gaussian proportional to posterior^tau *
/// prior^(1-tau). In precision form Lambda = tau*Lp + (1-tau)*L0 with the
/// precision-weighted mean.
inline GaussianBelief flatten_prior(const GaussianBelief& previous_posterior,
                                    const GaussianBelief& original_prior, double tau) {
    if (previous_posterior.dim() != original_prior.dim())
        throw std::invalid_argument("flatten_prior: dimension mismatch");
    if (!(tau >= 0.0 && tau <= 1.0))
        throw std::invalid_argument("flatten_prior: tau must lie in [0, 1]");
    if (tau == 1.0) return previous_posterior;
    if (tau == 0.0) return original_prior;

    const Eigen::MatrixXd lam_post = previous_posterior.precision();
    const Eigen::MatrixXd lam_prior = original_prior.precision();
    const Eigen::MatrixXd lam = tau * lam_post + (1.0 - tau) * lam_prior;
    const Eigen::VectorXd h =
        tau * (lam_post * previous_posterior.mean()) + (1.0 - tau) * (lam_prior * original_prior.mean());
    const auto ldlt = lam.ldlt();
    Eigen::MatrixXd cov = ldlt.solve(Eigen::MatrixXd::Identity(lam.rows(), lam.cols()));
    Eigen::VectorXd mean = ldlt.solve(h);
    return GaussianBelief(std::move(mean), std::move(cov), previous_posterior.coalition());
}

/// Conjugate rank-one update with one observation (psi, y) under noise
/// precision xi: Lambda' = Lambda + xi psi psi^T, applied to the covariance
/// through the Sherman-Morrison identity.
inline GaussianBelief update_posterior(const GaussianBelief& prior, const Eigen::VectorXd& basis_values,
                                       double y, double xi) {
    if (basis_values.size() != prior.dim())
        throw std::invalid_argument("update_posterior: basis dimension mismatch");
    if (!basis_values.allFinite() || !std::isfinite(y) || !std::isfinite(xi) || !(xi > 0.0))
        throw std::invalid_argument("update_posterior: non-finite inputs");

    const Eigen::MatrixXd& s = prior.covariance();
    const Eigen::VectorXd sp = s * basis_values;
    const double denom = 1.0 + xi * basis_values.dot(sp);
    Eigen::MatrixXd cov = s - (xi / denom) * (sp * sp.transpose());
    const double gain_scale = xi * (y - basis_values.dot(prior.mean())) / denom;
    Eigen::VectorXd mean = prior.mean() + gain_scale * sp;
    return GaussianBelief(std::move(mean), std::move(cov), prior.coalition());
}

/// Posterior predictive: mean psi^T m, precision 1 / (1/xi + psi^T S psi).
inline PredictiveDistribution predictive(const GaussianBelief& belief,
                                         const Eigen::VectorXd& basis_values, double xi) {
    if (basis_values.size() != belief.dim())
        throw std::invalid_argument("predictive: basis dimension mismatch");
    const double quad = basis_values.dot(belief.covariance() * basis_values);
    if (quad < -1e-9 * (1.0 + std::abs(quad)))
        throw std::runtime_error("predictive: covariance lost positive definiteness");
    const double var = 1.0 / xi + std::max(quad, 0.0);
    return PredictiveDistribution{basis_values.dot(belief.mean()), 1.0 / var};
}

}  // namespace regmkt
