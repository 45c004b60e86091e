#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "regmarket/basis.hpp"
#include "regmarket/belief.hpp"
#include "regmarket/dataset.hpp"
#include "regmarket/mle.hpp"
#include "regmarket/registry.hpp"
#include "regmarket/scoring.hpp"

namespace regmkt {

/// The four market designs. They differ only in how the marginal
/// contribution of a feature to a coalition is formed:
///   MleNll / BlrNll : loss reduction in the expected NLL
///   BlrKlM          : KL of the predictive with the feature from the one without
///   BlrKlV          : difference of KL-based information gains relative to
///                     the central agent's predictive
enum class MarketDesign { MleNll, BlrNll, BlrKlM, BlrKlV };

inline const char* to_string(MarketDesign d) {
    switch (d) {
        case MarketDesign::MleNll: return "mle_nll";
        case MarketDesign::BlrNll: return "blr_nll";
        case MarketDesign::BlrKlM: return "blr_kl_m";
        case MarketDesign::BlrKlV: return "blr_kl_v";
    }
    return "?";
}

inline MarketDesign design_from_string(const std::string& s) {
    if (s == "mle_nll") return MarketDesign::MleNll;
    if (s == "blr_nll") return MarketDesign::BlrNll;
    if (s == "blr_kl_m") return MarketDesign::BlrKlM;
    if (s == "blr_kl_v") return MarketDesign::BlrKlV;
    throw std::invalid_argument("unknown market design: " + s);
}

inline bool is_bayesian(MarketDesign d) { return d != MarketDesign::MleNll; }

struct unsupported_design_error : std::logic_error {
    using std::logic_error::logic_error;
};

struct enumeration_cap_error : std::length_error {
    using std::length_error::length_error;
};

inline constexpr int kShapleyEnumerationCap = 20;
inline constexpr int kPermutationOracleCap = 10;

/// Exact Shapley weight for a subset of the given size:
/// |C|! (n-|C|-1)! / n!  ==  1 / (n * binom(n-1, |C|)).
inline double shapley_subset_weight(int subset_size, int n) {
    double binom = 1.0;  // binom(n-1, subset_size); exact for n <= 20
    for (int k = 1; k <= subset_size; ++k)
        binom = binom * static_cast<double>(n - subset_size - 1 + k) / static_cast<double>(k);
    return 1.0 / (static_cast<double>(n) * binom);
}

using WeightFn = std::function<double(int subset_size, int n)>;

/// Coalition values for one transaction (one time step or one batch stage),
/// keyed by bitmask over the support features I_{-c}. The union with the
/// central agent's features is implicit: mask 0 is the central-only model.
struct CoalitionValueTable {
    MarketDesign design = MarketDesign::BlrNll;
    int n = 0;                       // |I_{-c}|
    std::vector<double> value;       // 2^n entries; E[l_C] or the KL-v gain; empty for KL-m
    std::vector<double> pair_gain;   // KL-m only, indexed mask * n + i with i not in mask
    double block_gain = 0.0;         // KL(pred_I || pred_{I_c}) expectation, KL designs

    std::uint32_t full_mask() const { return (n >= 32) ? ~0u : ((1u << n) - 1u); }

    double pair(std::uint32_t mask, int i) const {
        return pair_gain[static_cast<std::size_t>(mask) * static_cast<std::size_t>(n) +
                         static_cast<std::size_t>(i)];
    }
    double& pair(std::uint32_t mask, int i) {
        return pair_gain[static_cast<std::size_t>(mask) * static_cast<std::size_t>(n) +
                         static_cast<std::size_t>(i)];
    }
};

/// Per-step predictive records for every coalition mask, with the realized
/// target. This is the slice of the model cache one valuation needs.
struct StepRecords {
    std::vector<PredictiveDistribution> pred;  // indexed by mask, complete power set
    double y = 0.0;
};

/// Per-step coalition value under the given design. KL-m has no coalition
/// value (its valuation acts directly on marginal contributions).
inline double per_step_value(MarketDesign design, std::uint32_t mask, const StepRecords& records) {
    if (design == MarketDesign::BlrKlM)
        throw unsupported_design_error("per_step_value: KL-m defines no coalition value");
    if (mask >= records.pred.size())
        throw std::runtime_error("per_step_value: missing cache entry for coalition");
    switch (design) {
        case MarketDesign::MleNll:
        case MarketDesign::BlrNll:
            return nll(records.pred[mask], records.y);
        case MarketDesign::BlrKlV:
            return gaussian_kl(records.pred[mask], records.pred[0]);
        default:
            break;
    }
    throw std::logic_error("per_step_value: unreachable");
}

/// Marginal contribution of support feature i (bit index) to the coalition
/// given by mask. Positive means beneficial under every design.
inline double marginal_contribution(const CoalitionValueTable& t, int i, std::uint32_t mask) {
    if (i < 0 || i >= t.n) throw std::invalid_argument("marginal_contribution: bad feature index");
    if (mask & (1u << i))
        throw std::invalid_argument("marginal_contribution: feature already in coalition");
    switch (t.design) {
        case MarketDesign::MleNll:
        case MarketDesign::BlrNll:
            return t.value[mask] - t.value[mask | (1u << i)];  // loss reduction
        case MarketDesign::BlrKlM:
            return t.pair(mask, i);
        case MarketDesign::BlrKlV:
            return t.value[mask | (1u << i)] - t.value[mask];  // information gained
    }
    throw std::logic_error("marginal_contribution: unreachable");
}

/// Exact Shapley value of support feature i: the weighted sum of marginal
/// contributions over all subsets of I_{-c} \ {i}.
inline double shapley(const CoalitionValueTable& t, int i, const WeightFn& weight = {}) {
    if (t.n > kShapleyEnumerationCap)
        throw enumeration_cap_error("shapley: support set exceeds the enumeration cap");
    if (i < 0 || i >= t.n) throw std::invalid_argument("shapley: bad feature index");

    std::vector<int> others;
    for (int k = 0; k < t.n; ++k)
        if (k != i) others.push_back(k);

    double total = 0.0;
    const std::uint32_t subsets = 1u << others.size();
    for (std::uint32_t sub = 0; sub < subsets; ++sub) {
        std::uint32_t mask = 0;
        int size = 0;
        for (std::size_t b = 0; b < others.size(); ++b) {
            if (sub & (1u << b)) {
                mask |= 1u << others[b];
                ++size;
            }
        }
        const double w = weight ? weight(size, t.n) : shapley_subset_weight(size, t.n);
        total += w * marginal_contribution(t, i, mask);
    }
    return total;
}

inline std::vector<double> shapley_all(const CoalitionValueTable& t, const WeightFn& weight = {}) {
    std::vector<double> out(static_cast<std::size_t>(t.n));
    for (int i = 0; i < t.n; ++i) out[static_cast<std::size_t>(i)] = shapley(t, i, weight);
    return out;
}

/// Independent route: average each feature's marginal contribution when
/// added along every one of the n! arrival orders. Agrees with the weighted
/// subset sum; kept for audits and tests.
inline std::vector<double> shapley_permutation_oracle(const CoalitionValueTable& t) {
    if (t.n > kPermutationOracleCap)
        throw enumeration_cap_error("permutation oracle: support set too large");
    std::vector<int> order(static_cast<std::size_t>(t.n));
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> sums(static_cast<std::size_t>(t.n), 0.0);
    long count = 0;
    do {
        std::uint32_t mask = 0;
        for (int i : order) {
            sums[static_cast<std::size_t>(i)] += marginal_contribution(t, i, mask);
            mask |= 1u << i;
        }
        ++count;
    } while (std::next_permutation(order.begin(), order.end()));
    for (double& s : sums) s /= static_cast<double>(count);
    return sums;
}

/// Central agent's payment for the transaction the table describes. For the
/// KL designs the grand block of support features is priced as a single
/// addition to I_c.
inline double central_payment(const CoalitionValueTable& t, double lambda) {
    if (lambda < 0.0) throw std::invalid_argument("central_payment: lambda must be nonnegative");
    switch (t.design) {
        case MarketDesign::MleNll:
        case MarketDesign::BlrNll:
            return lambda * (t.value[0] - t.value[t.full_mask()]);
        case MarketDesign::BlrKlM:
            return lambda * t.block_gain;
        case MarketDesign::BlrKlV:
            return lambda * t.value[t.full_mask()];  // v(I) - v(I_c), and v(I_c) = 0
    }
    throw std::logic_error("central_payment: unreachable");
}

/// Per-feature Shapley values phi_{i,t} alongside their exponential-
/// forgetting estimates E[phi_i]_t.
struct ShapleyVector {
    std::vector<int> features;                 // raw indices of I_{-c}, sorted
    std::vector<double> current;               // phi_{i,t}
    std::vector<RecursiveEstimate> expected;   // E[phi_i]_t

    static ShapleyVector from_values(std::vector<int> feats, std::vector<double> values,
                                     double tau) {
        ShapleyVector v;
        v.features = std::move(feats);
        v.current = std::move(values);
        v.expected.assign(v.current.size(), RecursiveEstimate(tau));
        for (std::size_t k = 0; k < v.current.size(); ++k)
            v.expected[k] = recursive_update(v.expected[k], v.current[k]);
        return v;
    }

    std::vector<double> expected_values() const {
        std::vector<double> out(expected.size());
        for (std::size_t k = 0; k < expected.size(); ++k) out[k] = expected[k].value;
        return out;
    }
};

/// Elementwise Eq.-7-style recursion of the expected Shapley values.
inline ShapleyVector update_expected_shapley(const ShapleyVector& prev,
                                             const ShapleyVector& current, double tau) {
    if (prev.features != current.features)
        throw std::invalid_argument("update_expected_shapley: feature index sets differ");
    ShapleyVector next = current;
    next.expected.resize(prev.expected.size());
    for (std::size_t k = 0; k < prev.expected.size(); ++k) {
        RecursiveEstimate est = prev.expected[k];
        est.forgetting = tau;
        next.expected[k] = recursive_update(est, current.current[k]);
    }
    return next;
}

/// Revenue of each support agent: lambda times the sum of expected Shapley
/// values over the features it owns.
inline std::map<std::string, double> agent_revenues(const ShapleyVector& shapley_expected,
                                                    const AgentRegistry& registry, double lambda) {
    std::map<std::string, double> out;
    for (const auto& [agent, feats] : registry.support) out[agent] = 0.0;
    for (std::size_t k = 0; k < shapley_expected.features.size(); ++k) {
        const int feature = shapley_expected.features[k];
        bool found = false;
        for (const auto& [agent, feats] : registry.support) {
            if (std::find(feats.begin(), feats.end(), feature) != feats.end()) {
                out[agent] += lambda * shapley_expected.expected[k].value;
                found = true;
                break;
            }
        }
        if (!found)
            throw std::invalid_argument("agent_revenues: feature " + std::to_string(feature) +
                                        " is not owned by any support agent");
    }
    return out;
}

/// pi_c - sum_a pi_a for the transaction. Zero (to rounding) for every
/// design except KL-m, whose inseparable marginal breaks the telescoping
/// sum.
inline double budget_gap(const CoalitionValueTable& t, const AgentRegistry& registry,
                         double lambda) {
    const std::vector<int> features = registry.support_features();
    if (static_cast<int>(features.size()) != t.n)
        throw std::invalid_argument("budget_gap: registry does not match the value table");
    const ShapleyVector phi = ShapleyVector::from_values(features, shapley_all(t), 1.0);
    const auto revenues = agent_revenues(phi, registry, lambda);
    double paid = 0.0;
    for (const auto& [agent, r] : revenues) paid += r;
    return central_payment(t, lambda) - paid;
}

/// Batch-fit models for the complete power set of support coalitions. Every
/// entry's coalition is C' = C union I_c; the dummy basis is always present.
/// Built once per transaction, read-only afterwards.
class CoalitionModelCache {
public:
    CoalitionModelCache(const Dataset& fit_data, const AgentRegistry& registry,
                        const Hypothesis& hypothesis, MarketDesign design)
        : design_(design), hypothesis_(hypothesis), central_(registry.central_features),
          support_(registry.support_features()) {
        std::sort(central_.begin(), central_.end());
        const int n = n_support();
        if (n >= 31) throw enumeration_cap_error("coalition cache: too many support features");
        const std::uint32_t count = 1u << n;
        beliefs_.reserve(count);
        thetas_.reserve(count);
        for (std::uint32_t mask = 0; mask < count; ++mask) {
            const std::vector<int> coalition = coalition_features(mask);
            if (is_bayesian(design_)) {
                GaussianBelief b = init_prior(static_cast<int>(coalition.size()) + 1,
                                              hypothesis_.prior_precision, coalition);
                for (Eigen::Index t = 0; t < fit_data.rows(); ++t) {
                    const Eigen::VectorXd psi =
                        hypothesis_.design_vector(fit_data.inputs.row(t).transpose(), coalition);
                    b = update_posterior(b, psi, fit_data.targets[t], hypothesis_.noise_precision);
                }
                beliefs_.push_back(std::move(b));
                thetas_.emplace_back();
            } else {
                MleFit fit = mle_fit(fit_data, coalition, hypothesis_);
                thetas_.push_back(std::move(fit.coefficients));
                beliefs_.emplace_back();
            }
        }
    }

    MarketDesign design() const { return design_; }
    int n_support() const { return static_cast<int>(support_.size()); }
    const std::vector<int>& support_features() const { return support_; }
    const Hypothesis& hypothesis() const { return hypothesis_; }

    std::vector<int> coalition_features(std::uint32_t mask) const {
        std::vector<int> coalition = central_;
        for (int k = 0; k < n_support(); ++k)
            if (mask & (1u << k)) coalition.push_back(support_[static_cast<std::size_t>(k)]);
        std::sort(coalition.begin(), coalition.end());
        return coalition;
    }

    const GaussianBelief& belief(std::uint32_t mask) const {
        return beliefs_.at(mask);
    }

    PredictiveDistribution predict(std::uint32_t mask, const Eigen::VectorXd& x_raw) const {
        const std::vector<int> coalition = coalition_features(mask);
        const Eigen::VectorXd psi = hypothesis_.design_vector(x_raw, coalition);
        if (is_bayesian(design_))
            return predictive(beliefs_.at(mask), psi, hypothesis_.noise_precision);
        return mle_predictive(thetas_.at(mask), psi, hypothesis_.noise_precision);
    }

    /// Predictive records for every step of an evaluation set.
    std::vector<StepRecords> records(const Dataset& eval) const {
        const std::uint32_t count = 1u << n_support();
        std::vector<StepRecords> out(static_cast<std::size_t>(eval.rows()));
        for (Eigen::Index t = 0; t < eval.rows(); ++t) {
            StepRecords& rec = out[static_cast<std::size_t>(t)];
            rec.y = eval.targets[t];
            rec.pred.resize(count);
            for (std::uint32_t mask = 0; mask < count; ++mask)
                rec.pred[mask] = predict(mask, eval.inputs.row(t).transpose());
        }
        return out;
    }

private:
    MarketDesign design_;
    Hypothesis hypothesis_;
    std::vector<int> central_;
    std::vector<int> support_;
    std::vector<GaussianBelief> beliefs_;
    std::vector<Eigen::VectorXd> thetas_;
};

/// Sample-average coalition values over an evaluation set: the batch-stage
/// estimate of the expectations each design needs.
inline CoalitionValueTable stage_value_table(MarketDesign design,
                                             const std::vector<StepRecords>& records, int n) {
    CoalitionValueTable t;
    t.design = design;
    t.n = n;
    const std::uint32_t count = 1u << n;
    const double steps = static_cast<double>(records.size());
    if (records.empty()) throw std::invalid_argument("stage_value_table: empty evaluation set");

    if (design == MarketDesign::BlrKlM) {
        t.pair_gain.assign(static_cast<std::size_t>(count) * static_cast<std::size_t>(n), 0.0);
        for (const StepRecords& rec : records) {
            for (std::uint32_t mask = 0; mask < count; ++mask)
                for (int i = 0; i < n; ++i)
                    if (!(mask & (1u << i)))
                        t.pair(mask, i) += gaussian_kl(rec.pred[mask | (1u << i)], rec.pred[mask]);
            t.block_gain += gaussian_kl(rec.pred[count - 1], rec.pred[0]);
        }
        for (double& g : t.pair_gain) g /= steps;
        t.block_gain /= steps;
        return t;
    }

    t.value.assign(count, 0.0);
    for (const StepRecords& rec : records) {
        for (std::uint32_t mask = 0; mask < count; ++mask)
            t.value[mask] += per_step_value(design, mask, rec);
        if (design == MarketDesign::BlrKlV)
            t.block_gain += gaussian_kl(rec.pred[count - 1], rec.pred[0]);
    }
    for (double& v : t.value) v /= steps;
    t.block_gain /= steps;
    return t;
}

}  // namespace regmkt
