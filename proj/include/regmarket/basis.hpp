#pragma once

#include <Eigen/Core>
#include <stdexcept>
#include <string>
#include <vector>

namespace regmkt {

/// Basis functions applied per raw feature. Every design vector starts with
/// the constant dummy basis, which belongs to the central agent.
enum class BasisKind { Dummy, Identity, Square };

inline double basis_value(BasisKind kind, double x) {
    switch (kind) {
        case BasisKind::Dummy: return 1.0;
        case BasisKind::Identity: return x;
        case BasisKind::Square: return x * x;
    }
    throw std::logic_error("unknown basis kind");
}

/// The fixed modelling assumptions of a regression task: basis functions,
/// noise precision xi, isotropic prior precision gamma and the forgetting
/// factor tau. xi is a hyperparameter per coalition, not inferred.
struct Hypothesis {
    std::vector<BasisKind> basis;  // basis[0] is the dummy, basis[k] maps feature k-1
    double noise_precision = 1.0;  // xi > 0
    double prior_precision = 1e-6; // gamma > 0; proxy for the flat prior
    double forgetting = 1.0;       // tau in [0, 1]

    Hypothesis() = default;
    Hypothesis(std::vector<BasisKind> b, double xi, double gamma, double tau)
        : basis(std::move(b)), noise_precision(xi), prior_precision(gamma), forgetting(tau) {
        validate();
    }

    /// Dummy plus an identity basis for each of n_features raw features.
    static Hypothesis linear(int n_features, double xi, double gamma = 1e-6, double tau = 1.0) {
        std::vector<BasisKind> b(static_cast<std::size_t>(n_features) + 1, BasisKind::Identity);
        b[0] = BasisKind::Dummy;
        return Hypothesis(std::move(b), xi, gamma, tau);
    }

    void validate() const {
        if (!(noise_precision > 0.0))
            throw std::invalid_argument("hypothesis: noise_precision must be positive");
        if (!(prior_precision > 0.0))
            throw std::invalid_argument("hypothesis: prior_precision must be positive");
        if (!(forgetting >= 0.0 && forgetting <= 1.0))
            throw std::invalid_argument("hypothesis: forgetting must lie in [0, 1]");
        if (basis.empty() || basis[0] != BasisKind::Dummy)
            throw std::invalid_argument("hypothesis: basis[0] must be the dummy basis");
    }

    int n_features() const { return static_cast<int>(basis.size()) - 1; }

    BasisKind feature_basis(int raw_index) const {
        const std::size_t slot = static_cast<std::size_t>(raw_index) + 1;
        if (slot >= basis.size())
            throw std::invalid_argument("hypothesis: feature index outside basis list");
        return basis[slot];
    }

    /// Design vector psi(x_C) for a coalition of raw feature indices (sorted,
    /// central features included). The dummy leads.
    Eigen::VectorXd design_vector(const Eigen::VectorXd& x_raw,
                                  const std::vector<int>& coalition) const {
        Eigen::VectorXd psi(static_cast<Eigen::Index>(coalition.size()) + 1);
        psi[0] = 1.0;
        for (std::size_t k = 0; k < coalition.size(); ++k) {
            const int raw = coalition[k];
            if (raw < 0 || raw >= x_raw.size())
                throw std::invalid_argument("design_vector: feature index out of range");
            psi[static_cast<Eigen::Index>(k) + 1] = basis_value(feature_basis(raw), x_raw[raw]);
        }
        return psi;
    }
};

inline const char* to_string(BasisKind k) {
    switch (k) {
        case BasisKind::Dummy: return "dummy";
        case BasisKind::Identity: return "identity";
        case BasisKind::Square: return "square";
    }
    return "?";
}

}  // namespace regmkt
