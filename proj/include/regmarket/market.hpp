#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "regmarket/allocation.hpp"
#include "regmarket/basis.hpp"
#include "regmarket/belief.hpp"
#include "regmarket/dataset.hpp"
#include "regmarket/mle.hpp"
#include "regmarket/registry.hpp"
#include "regmarket/scoring.hpp"

namespace regmkt {

struct sequencing_error : std::logic_error {
    using std::logic_error::logic_error;
};

struct MarketConfig {
    MarketDesign design = MarketDesign::BlrNll;
    double lambda_in = 1.0;   // bid for the in-sample stage
    double lambda_out = 1.0;  // bid for the out-of-sample stage
    double tau = 1.0;         // forgetting, shared by posterior flattening and recursions
    Hypothesis hypothesis;
    double alpha = 0.05;
    std::uint64_t seed = 0;

    void validate() const {
        if (lambda_in < 0.0 || lambda_out < 0.0)
            throw std::invalid_argument("market config: bids must be nonnegative");
        if (!(tau >= 0.0 && tau <= 1.0))
            throw std::invalid_argument("market config: tau must lie in [0, 1]");
        if (!(alpha > 0.0 && alpha < 1.0))
            throw std::invalid_argument("market config: alpha must lie in (0, 1)");
        hypothesis.validate();
    }
};

enum class Stage { InSample, OutOfSample };

inline const char* to_string(Stage s) {
    return s == Stage::InSample ? "in_sample" : "out_of_sample";
}

struct ClearingRow {
    long t = 0;
    Stage stage = Stage::InSample;
    double pi_c = 0.0;
    std::vector<double> expected_phi;     // E[phi_i]_t per support feature
    std::vector<double> pi_a;             // per support agent, aligned with agent list
    std::vector<double> phi_step;         // per-step phi_{i,t} from the raw scores
    std::vector<double> coalition_value;  // per mask; empty under KL-m
    double ell_central = 0.0;             // per-step NLL of the central-only model
    double ell_grand = 0.0;               // per-step NLL of the grand coalition
};

struct ClearingResult {
    MarketDesign design = MarketDesign::BlrNll;
    std::vector<int> support_features;       // raw indices, sorted
    std::vector<std::string> agents;         // support agent ids, sorted
    std::vector<ClearingRow> in_rows;
    std::vector<ClearingRow> out_rows;

    // Out-of-sample inputs retained so the out ledger can be re-derived from
    // information available at t-1 only.
    std::vector<StepRecords> out_records;
    std::vector<long> out_steps;

    std::map<std::string, double> cumulative_revenue(Stage stage) const {
        std::map<std::string, double> out;
        const auto& rows = stage == Stage::InSample ? in_rows : out_rows;
        for (const auto& agent : agents) out[agent] = 0.0;
        for (const auto& row : rows)
            for (std::size_t k = 0; k < agents.size(); ++k) out[agents[k]] += row.pi_a[k];
        return out;
    }
};

namespace detail {

/// Recursion state for one market stage: exponential-forgetting estimates of
/// every quantity the design's valuation needs, updated from per-step
/// predictive records. Shapley values computed from the recursed table equal
/// the Eq.-10 recursion of per-step Shapley values because both maps are
/// linear and all estimates initialize on the same step.
class StageEngine {
public:
    StageEngine(MarketDesign design, double tau, int n_support)
        : design_(design), n_(n_support), count_(1u << n_support) {
        ell_.assign(count_, RecursiveEstimate(tau));
        if (design_ == MarketDesign::BlrKlV) klv_.assign(count_, RecursiveEstimate(tau));
        if (design_ == MarketDesign::BlrKlM) {
            klm_pairs_.assign(static_cast<std::size_t>(count_) * static_cast<std::size_t>(n_),
                              RecursiveEstimate(tau));
            klm_block_ = RecursiveEstimate(tau);
        }
    }

    struct Outcome {
        CoalitionValueTable table;          // recursed estimates
        std::vector<double> phi_step;       // Shapley of the raw per-step values
        double ell_central = 0.0;
        double ell_grand = 0.0;
    };

    Outcome absorb(const StepRecords& rec) {
        Outcome out;
        CoalitionValueTable step_table;
        step_table.design = design_;
        step_table.n = n_;

        // NLL recursions are always maintained; they feed the NLL designs,
        // the ledger's coalition estimates and the replay summaries.
        std::vector<double> step_nll(count_);
        for (std::uint32_t mask = 0; mask < count_; ++mask) {
            step_nll[mask] = nll(rec.pred[mask], rec.y);
            ell_[mask] = recursive_update(ell_[mask], step_nll[mask]);
        }
        out.ell_central = step_nll[0];
        out.ell_grand = step_nll[count_ - 1];

        switch (design_) {
            case MarketDesign::MleNll:
            case MarketDesign::BlrNll: {
                step_table.value = step_nll;
                out.table.value.resize(count_);
                for (std::uint32_t mask = 0; mask < count_; ++mask)
                    out.table.value[mask] = ell_[mask].value;
                break;
            }
            case MarketDesign::BlrKlV: {
                step_table.value.resize(count_);
                out.table.value.resize(count_);
                for (std::uint32_t mask = 0; mask < count_; ++mask) {
                    step_table.value[mask] = gaussian_kl(rec.pred[mask], rec.pred[0]);
                    klv_[mask] = recursive_update(klv_[mask], step_table.value[mask]);
                    out.table.value[mask] = klv_[mask].value;
                }
                break;
            }
            case MarketDesign::BlrKlM: {
                step_table.pair_gain.assign(
                    static_cast<std::size_t>(count_) * static_cast<std::size_t>(n_), 0.0);
                out.table.pair_gain.resize(step_table.pair_gain.size());
                for (std::uint32_t mask = 0; mask < count_; ++mask) {
                    for (int i = 0; i < n_; ++i) {
                        if (mask & (1u << i)) continue;
                        const double g =
                            gaussian_kl(rec.pred[mask | (1u << i)], rec.pred[mask]);
                        step_table.pair(mask, i) = g;
                        auto& est = pair_estimate(mask, i);
                        est = recursive_update(est, g);
                        out.table.pair(mask, i) = est.value;
                    }
                }
                const double block = gaussian_kl(rec.pred[count_ - 1], rec.pred[0]);
                step_table.block_gain = block;
                klm_block_ = recursive_update(klm_block_, block);
                out.table.block_gain = klm_block_.value;
                break;
            }
        }
        out.table.design = design_;
        out.table.n = n_;
        out.phi_step = shapley_all(step_table);
        return out;
    }

    const std::vector<RecursiveEstimate>& ell() const { return ell_; }

private:
    RecursiveEstimate& pair_estimate(std::uint32_t mask, int i) {
        return klm_pairs_[static_cast<std::size_t>(mask) * static_cast<std::size_t>(n_) +
                          static_cast<std::size_t>(i)];
    }

    MarketDesign design_;
    int n_;
    std::uint32_t count_;
    std::vector<RecursiveEstimate> ell_;
    std::vector<RecursiveEstimate> klv_;
    std::vector<RecursiveEstimate> klm_pairs_;
    RecursiveEstimate klm_block_{1.0};
};

inline ClearingRow make_row(long t, Stage stage, const StageEngine::Outcome& outcome,
                            double lambda, const AgentRegistry& registry,
                            const std::vector<int>& support_features) {
    ClearingRow row;
    row.t = t;
    row.stage = stage;
    row.expected_phi = shapley_all(outcome.table);
    row.phi_step = outcome.phi_step;
    row.pi_c = central_payment(outcome.table, lambda);
    const ShapleyVector phi = ShapleyVector::from_values(support_features, row.expected_phi, 1.0);
    const auto revenues = agent_revenues(phi, registry, lambda);
    row.pi_a.reserve(revenues.size());
    for (const auto& [agent, value] : revenues) row.pi_a.push_back(value);
    row.coalition_value = outcome.table.value;
    row.ell_central = outcome.ell_central;
    row.ell_grand = outcome.ell_grand;
    return row;
}

}  // namespace detail

/// Online two-stage market. Each arrival (x_t, y_t) first clears the
/// out-of-sample stage against the forecast issued from the t-1 posterior,
/// then updates the posteriors (flattened by tau) and clears the in-sample
/// stage. Both stages share the posteriors but carry separate recursion
/// states and ledgers.
class OnlineMarket {
public:
    OnlineMarket(MarketConfig config, AgentRegistry registry, int n_raw_features)
        : config_(std::move(config)), registry_(std::move(registry)) {
        config_.validate();
        registry_.validate(n_raw_features);
        support_ = registry_.support_features();
        const int n = static_cast<int>(support_.size());
        if (n >= 31) throw enumeration_cap_error("online market: too many support features");
        count_ = 1u << n;
        in_engine_.emplace(config_.design, config_.tau, n);
        out_engine_.emplace(config_.design, config_.tau, n);

        result_.design = config_.design;
        result_.support_features = support_;
        result_.agents = registry_.support_agents();

        central_ = registry_.central_features;
        std::sort(central_.begin(), central_.end());
        for (std::uint32_t mask = 0; mask < count_; ++mask) {
            coalitions_.push_back(coalition_features(mask));
            const int dim = static_cast<int>(coalitions_.back().size()) + 1;
            if (is_bayesian(config_.design)) {
                priors_.push_back(init_prior(dim, config_.hypothesis.prior_precision,
                                             coalitions_.back()));
                beliefs_.push_back(priors_.back());
                wls_.emplace_back(0);
            } else {
                wls_.emplace_back(dim);
                thetas_.push_back(Eigen::VectorXd::Zero(dim));
                priors_.push_back(GaussianBelief());
                beliefs_.push_back(GaussianBelief());
            }
        }
        if (!is_bayesian(config_.design)) thetas_.resize(count_);
    }

    /// Clears one stage at time t. Out-of-sample must precede in-sample
    /// within a step, needs a previously updated posterior, and time indices
    /// must be strictly increasing.
    void clear_step(Stage stage, long t, const Eigen::VectorXd& x_raw, double y) {
        if (stage == Stage::OutOfSample) {
            if (!has_posterior_)
                throw sequencing_error("out-of-sample clearing requires a prior prediction");
            if (t <= last_t_)
                throw sequencing_error("out-of-sample clearing: time index not increasing");
            const StepRecords rec = current_records(x_raw, y);
            const auto outcome = out_engine_->absorb(rec);
            result_.out_rows.push_back(detail::make_row(t, stage, outcome, config_.lambda_out,
                                                        registry_, support_));
            result_.out_records.push_back(rec);
            result_.out_steps.push_back(t);
            out_cleared_t_ = t;
            return;
        }
        if (t <= last_t_) throw sequencing_error("in-sample clearing: time index not increasing");
        absorb_observation(x_raw, y);
        const StepRecords rec = current_records(x_raw, y);
        const auto outcome = in_engine_->absorb(rec);
        result_.in_rows.push_back(detail::make_row(t, stage, outcome, config_.lambda_in,
                                                   registry_, support_));
        last_t_ = t;
        has_posterior_ = true;
    }

    /// One arrival: out-of-sample clearing (skipped at the first step), then
    /// the in-sample update and clearing.
    void step(long t, const Eigen::VectorXd& x_raw, double y) {
        if (has_posterior_) clear_step(Stage::OutOfSample, t, x_raw, y);
        clear_step(Stage::InSample, t, x_raw, y);
    }

    const ClearingResult& result() const { return result_; }
    ClearingResult take_result() { return std::move(result_); }

    /// Posterior mean of the grand-coalition model (Bayesian designs).
    const GaussianBelief& grand_belief() const { return beliefs_.at(count_ - 1); }

    const std::vector<RecursiveEstimate>& stage_ell(Stage s) const {
        return (s == Stage::InSample ? in_engine_ : out_engine_)->ell();
    }

private:
    std::vector<int> coalition_features(std::uint32_t mask) const {
        std::vector<int> coalition = central_;
        for (std::size_t k = 0; k < support_.size(); ++k)
            if (mask & (1u << k)) coalition.push_back(support_[k]);
        std::sort(coalition.begin(), coalition.end());
        return coalition;
    }

    void absorb_observation(const Eigen::VectorXd& x_raw, double y) {
        for (std::uint32_t mask = 0; mask < count_; ++mask) {
            const Eigen::VectorXd psi =
                config_.hypothesis.design_vector(x_raw, coalitions_[mask]);
            if (is_bayesian(config_.design)) {
                GaussianBelief flattened =
                    flatten_prior(beliefs_[mask], priors_[mask], config_.tau);
                beliefs_[mask] = update_posterior(flattened, psi, y,
                                                  config_.hypothesis.noise_precision);
            } else {
                wls_[mask].discount(config_.tau);
                wls_[mask].absorb(psi, y);
                thetas_[mask] = wls_[mask].solve().coefficients;
            }
        }
    }

    StepRecords current_records(const Eigen::VectorXd& x_raw, double y) const {
        StepRecords rec;
        rec.y = y;
        rec.pred.resize(count_);
        for (std::uint32_t mask = 0; mask < count_; ++mask) {
            const Eigen::VectorXd psi =
                config_.hypothesis.design_vector(x_raw, coalitions_[mask]);
            rec.pred[mask] =
                is_bayesian(config_.design)
                    ? predictive(beliefs_[mask], psi, config_.hypothesis.noise_precision)
                    : mle_predictive(thetas_[mask], psi, config_.hypothesis.noise_precision);
        }
        return rec;
    }

    MarketConfig config_;
    AgentRegistry registry_;
    std::vector<int> central_;
    std::vector<int> support_;
    std::uint32_t count_ = 1;
    std::vector<std::vector<int>> coalitions_;
    std::vector<GaussianBelief> priors_;
    std::vector<GaussianBelief> beliefs_;
    std::vector<WeightedLeastSquares> wls_;
    std::vector<Eigen::VectorXd> thetas_;
    std::optional<detail::StageEngine> in_engine_;
    std::optional<detail::StageEngine> out_engine_;
    ClearingResult result_;
    long last_t_ = 0;
    long out_cleared_t_ = 0;
    bool has_posterior_ = false;
};

/// Replays a time-ordered dataset through the online market. Steps are
/// numbered 1..N; the out-of-sample stage starts at the second arrival.
inline ClearingResult run_online(const Dataset& data, const MarketConfig& config,
                                 const AgentRegistry& registry) {
    data.validate();
    OnlineMarket market(config, registry, static_cast<int>(data.cols()));
    for (Eigen::Index t = 0; t < data.rows(); ++t)
        market.step(static_cast<long>(t) + 1, data.inputs.row(t).transpose(), data.targets[t]);
    return market.take_result();
}

/// Rebuilds the out-of-sample ledger from the stored per-step predictions.
/// Reproduces the original rows exactly: out-of-sample scoring only ever saw
/// information available at t-1.
inline std::vector<ClearingRow> rederive_out_ledger(const ClearingResult& result,
                                                    const MarketConfig& config,
                                                    const AgentRegistry& registry) {
    detail::StageEngine engine(config.design, config.tau,
                               static_cast<int>(result.support_features.size()));
    std::vector<ClearingRow> rows;
    rows.reserve(result.out_records.size());
    for (std::size_t k = 0; k < result.out_records.size(); ++k) {
        const auto outcome = engine.absorb(result.out_records[k]);
        rows.push_back(detail::make_row(result.out_steps[k], Stage::OutOfSample, outcome,
                                        config.lambda_out, registry, result.support_features));
    }
    return rows;
}

/// One batch transaction: models fitted once on the in-sample window, the
/// expectations estimated by sample averages over each stage's evaluation
/// set. This is the single-shot clearing used by the Monte Carlo studies.
struct StageClearing {
    std::vector<double> phi;                 // per support feature
    double pi_c = 0.0;                       // per time step
    std::map<std::string, double> revenue;   // per agent, per time step
    double budget_gap = 0.0;
    long n_steps = 0;
    CoalitionValueTable table;

    std::map<std::string, double> cumulative_revenue() const {
        std::map<std::string, double> out = revenue;
        for (auto& [agent, r] : out) r *= static_cast<double>(n_steps);
        return out;
    }
};

struct BatchClearing {
    StageClearing in_sample;
    StageClearing out_of_sample;
    bool has_out = false;
    CoalitionModelCache cache;  // fitted coalition models, read-only

    explicit BatchClearing(CoalitionModelCache c) : cache(std::move(c)) {}
};

namespace detail {
inline StageClearing clear_stage(const CoalitionModelCache& cache, const Dataset& eval,
                                 double lambda, const AgentRegistry& registry) {
    StageClearing stage;
    const auto records = cache.records(eval);
    stage.table = stage_value_table(cache.design(), records, cache.n_support());
    stage.phi = shapley_all(stage.table);
    stage.pi_c = central_payment(stage.table, lambda);
    const ShapleyVector phi =
        ShapleyVector::from_values(cache.support_features(), stage.phi, 1.0);
    stage.revenue = agent_revenues(phi, registry, lambda);
    double paid = 0.0;
    for (const auto& [agent, r] : stage.revenue) paid += r;
    stage.budget_gap = stage.pi_c - paid;
    stage.n_steps = eval.rows();
    return stage;
}
}  // namespace detail

inline BatchClearing clear_batch(const Dataset& in_sample, const Dataset* out_of_sample,
                                 const MarketConfig& config, const AgentRegistry& registry) {
    config.validate();
    registry.validate(static_cast<int>(in_sample.cols()));
    BatchClearing result(
        CoalitionModelCache(in_sample, registry, config.hypothesis, config.design));
    result.in_sample = detail::clear_stage(result.cache, in_sample, config.lambda_in, registry);
    if (out_of_sample != nullptr) {
        result.out_of_sample =
            detail::clear_stage(result.cache, *out_of_sample, config.lambda_out, registry);
        result.has_out = true;
    }
    return result;
}

struct SelectionReport {
    AgentRegistry registry;
    std::vector<int> pruned;                  // removed support features
    std::map<int, double> marginal;           // validation marginal per support feature
    bool empty_market = false;                // all support features pruned
};

/// Feature-selection stub: keeps support features whose grand-coalition
/// marginal contribution on a trailing validation window is nonnegative.
/// The marginal is the NLL reduction of the Bayesian model fitted on the
/// head of the data and scored on the tail. Central features are never
/// removed.
inline SelectionReport select_features(const Dataset& data, const AgentRegistry& registry,
                                       const Hypothesis& hypothesis,
                                       double validation_fraction = 0.2) {
    if (!(validation_fraction > 0.0 && validation_fraction <= 0.5))
        throw std::invalid_argument("select_features: validation_fraction must lie in (0, 0.5]");
    registry.validate(static_cast<int>(data.cols()));

    SelectionReport report;
    report.registry = registry;
    const std::vector<int> support = registry.support_features();
    if (support.empty()) return report;

    const Eigen::Index n = data.rows();
    const Eigen::Index n_tail = std::max<Eigen::Index>(
        1, static_cast<Eigen::Index>(std::ceil(validation_fraction * static_cast<double>(n))));
    const Eigen::Index n_head = n - n_tail;
    if (n_head < 1) throw std::invalid_argument("select_features: not enough data to split");

    Dataset head(data.inputs.topRows(n_head), data.targets.head(n_head));
    Dataset tail(data.inputs.bottomRows(n_tail), data.targets.tail(n_tail));

    std::vector<int> all = registry.all_features();
    const auto tail_mean_nll = [&](const std::vector<int>& coalition) {
        GaussianBelief b = init_prior(static_cast<int>(coalition.size()) + 1,
                                      hypothesis.prior_precision);
        for (Eigen::Index t = 0; t < head.rows(); ++t) {
            const Eigen::VectorXd psi =
                hypothesis.design_vector(head.inputs.row(t).transpose(), coalition);
            b = update_posterior(b, psi, head.targets[t], hypothesis.noise_precision);
        }
        double total = 0.0;
        for (Eigen::Index t = 0; t < tail.rows(); ++t) {
            const Eigen::VectorXd psi =
                hypothesis.design_vector(tail.inputs.row(t).transpose(), coalition);
            total += nll(predictive(b, psi, hypothesis.noise_precision), tail.targets[t]);
        }
        return total / static_cast<double>(tail.rows());
    };

    const double grand_nll = tail_mean_nll(all);
    for (int feature : support) {
        std::vector<int> without = all;
        without.erase(std::find(without.begin(), without.end(), feature));
        const double marginal = tail_mean_nll(without) - grand_nll;
        report.marginal[feature] = marginal;
        if (marginal < 0.0) {
            report.pruned.push_back(feature);
            for (auto& [agent, feats] : report.registry.support)
                feats.erase(std::remove(feats.begin(), feats.end(), feature), feats.end());
        }
    }
    for (auto it = report.registry.support.begin(); it != report.registry.support.end();) {
        if (it->second.empty())
            it = report.registry.support.erase(it);
        else
            ++it;
    }
    report.empty_market = report.registry.support.empty();
    return report;
}

}  // namespace regmkt
