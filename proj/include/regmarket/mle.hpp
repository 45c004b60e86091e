#pragma once

#include <Eigen/Core>
#include <Eigen/QR>
#include <stdexcept>
#include <vector>

#include "regmarket/basis.hpp"
#include "regmarket/belief.hpp"
#include "regmarket/dataset.hpp"

namespace regmkt {

struct MleFit {
    Eigen::VectorXd coefficients;
    bool rank_deficient = false;  // solved through the minimum-norm pseudo-inverse
};

inline Eigen::MatrixXd design_matrix(const Dataset& data, const std::vector<int>& coalition,
                                     const Hypothesis& hypothesis) {
    Eigen::MatrixXd x(data.rows(), static_cast<Eigen::Index>(coalition.size()) + 1);
    for (Eigen::Index t = 0; t < data.rows(); ++t)
        x.row(t) = hypothesis.design_vector(data.inputs.row(t).transpose(), coalition).transpose();
    return x;
}

/// Least-squares coefficients for one coalition. Underdetermined systems
/// fall back to the minimum-norm pseudo-inverse solution and are flagged.
inline MleFit mle_fit(const Dataset& data, const std::vector<int>& coalition,
                      const Hypothesis& hypothesis) {
    const Eigen::MatrixXd x = design_matrix(data, coalition, hypothesis);
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(x);
    MleFit fit;
    fit.coefficients = cod.solve(data.targets);
    fit.rank_deficient = cod.rank() < x.cols();
    return fit;
}

/// Frequentist predictive: the point estimate carries no parameter
/// uncertainty, so the precision is exactly xi.
inline PredictiveDistribution mle_predictive(const Eigen::VectorXd& theta_star,
                                             const Eigen::VectorXd& basis_values, double xi) {
    if (theta_star.size() != basis_values.size())
        throw std::invalid_argument("mle_predictive: dimension mismatch");
    if (!(xi > 0.0)) throw std::invalid_argument("mle_predictive: xi must be positive");
    return PredictiveDistribution{basis_values.dot(theta_star), xi};
}

/// Exponentially weighted least-squares sufficient statistics, the
/// frequentist counterpart of the flattened online posterior. discount(tau)
/// scales past information before each new observation is absorbed.
class WeightedLeastSquares {
public:
    explicit WeightedLeastSquares(int dim)
        : gram_(Eigen::MatrixXd::Zero(dim, dim)), moment_(Eigen::VectorXd::Zero(dim)) {}

    void discount(double tau) {
        gram_ *= tau;
        moment_ *= tau;
    }

    void absorb(const Eigen::VectorXd& psi, double y) {
        gram_.noalias() += psi * psi.transpose();
        moment_.noalias() += psi * y;
    }

    MleFit solve() const {
        Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(gram_);
        MleFit fit;
        fit.coefficients = cod.solve(moment_);
        fit.rank_deficient = cod.rank() < gram_.cols();
        return fit;
    }

private:
    Eigen::MatrixXd gram_;
    Eigen::VectorXd moment_;
};

}  // namespace regmkt
