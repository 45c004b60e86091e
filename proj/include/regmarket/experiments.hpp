#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <map>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "regmarket/data_io.hpp"
#include "regmarket/market.hpp"
#include "regmarket/simulation.hpp"

namespace regmkt {

/// Descriptor for one Monte Carlo study: which experiment, over which
/// designs/setups/sample sizes, how many seeded runs.
struct ExperimentParams {
    std::string experiment = "convergence";
    std::vector<MarketDesign> designs{MarketDesign::MleNll, MarketDesign::BlrNll,
                                      MarketDesign::BlrKlM, MarketDesign::BlrKlV};
    std::vector<SetupKind> setups{SetupKind::Baseline};
    std::vector<long> sample_sizes{8, 32, 128, 512, 1024};
    long runs = 200;
    std::uint64_t seed = 1;
    int jobs = 0;

    Eigen::VectorXd true_w;
    double xi = 1.0;
    double gamma = 1e-6;
    double tau = 1.0;
    double alpha = 0.05;
    double ci_level = 0.95;
    double lambda_in = 1.0;
    double lambda_out = 1.0;
    long out_samples = 1000;

    // tracking
    std::vector<double> taus{0.94, 1.0};
    Nonstationarity nonstat{Nonstationarity::Kind::StepChange, -0.5, 600};
    long horizon = 1000;
    long post_change_window = 100;

    // truthfulness
    std::vector<double> noise_levels{0.0, 0.25, 0.5, 1.0};
    int corrupt_feature = 1;
    long ridge_replications = 500;
    long ridge_samples = 1000;
    double ridge_noise_std = 0.5;

    // risk sweeps
    std::string sweep;  // "", "sample_size" or "w2"
    std::vector<double> sweep_values;

    // moments
    double w_var = 1.0;
    double x_var = 1.0;
    std::vector<double> w_means{0.0, 0.5, 1.0, 1.5, 2.0};
    std::size_t moment_samples = 100000;

    MarketConfig market_config(MarketDesign design) const {
        MarketConfig cfg;
        cfg.design = design;
        cfg.lambda_in = lambda_in;
        cfg.lambda_out = lambda_out;
        cfg.tau = tau;
        cfg.alpha = alpha;
        cfg.seed = seed;
        cfg.hypothesis =
            Hypothesis::linear(static_cast<int>(true_w.size()) - 1, xi, gamma, tau);
        return cfg;
    }

    SetupSpec setup_spec(SetupKind kind, long n, std::uint64_t run_seed) const {
        SetupSpec s;
        s.kind = kind;
        s.true_w = true_w;
        s.xi = xi;
        s.n_samples = n;
        s.seed = run_seed;
        return s;
    }
};

struct MonteCarloReport {
    std::map<std::string, TidyTable> tables;
    nlohmann::ordered_json manifest;
};

namespace detail {

inline GaussianBelief batch_blr_fit(const Dataset& data, const std::vector<int>& coalition,
                                    const Hypothesis& hyp) {
    GaussianBelief b = init_prior(static_cast<int>(coalition.size()) + 1, hyp.prior_precision,
                                  coalition);
    for (Eigen::Index t = 0; t < data.rows(); ++t)
        b = update_posterior(b, hyp.design_vector(data.inputs.row(t).transpose(), coalition),
                             data.targets[t], hyp.noise_precision);
    return b;
}

inline double mean_nll_blr(const GaussianBelief& b, const Dataset& eval,
                           const std::vector<int>& coalition, const Hypothesis& hyp) {
    double total = 0.0;
    for (Eigen::Index t = 0; t < eval.rows(); ++t) {
        const auto psi = hyp.design_vector(eval.inputs.row(t).transpose(), coalition);
        total += nll(predictive(b, psi, hyp.noise_precision), eval.targets[t]);
    }
    return total / static_cast<double>(eval.rows());
}

inline double mean_nll_mle(const Eigen::VectorXd& theta, const Dataset& eval,
                           const std::vector<int>& coalition, const Hypothesis& hyp) {
    double total = 0.0;
    for (Eigen::Index t = 0; t < eval.rows(); ++t) {
        const auto psi = hyp.design_vector(eval.inputs.row(t).transpose(), coalition);
        total += nll(mle_predictive(theta, psi, hyp.noise_precision), eval.targets[t]);
    }
    return total / static_cast<double>(eval.rows());
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Calibration study: out-of-sample NLL of the grand-coalition model under
// Bayesian vs maximum-likelihood inference, per setup and sample size.

inline TidyTable calibration_experiment(const ExperimentParams& p) {
    TidyTable t;
    t.columns = {"setup", "n", "runs", "nll_blr", "nll_mle", "improvement"};
    const Hypothesis hyp = Hypothesis::linear(static_cast<int>(p.true_w.size()) - 1, p.xi,
                                              p.gamma, 1.0);
    std::vector<int> grand(static_cast<std::size_t>(hyp.n_features()));
    std::iota(grand.begin(), grand.end(), 0);

    for (SetupKind setup : p.setups) {
        for (long n : p.sample_sizes) {
            struct RunOut {
                double blr = 0.0, mle = 0.0;
            };
            const auto results = run_seeded<RunOut>(
                p.runs, Rng::derive(p.seed, static_cast<std::uint64_t>(n) * 131 +
                                                static_cast<std::uint64_t>(setup)),
                p.jobs, [&](long, std::uint64_t run_seed) {
                    const Dataset in =
                        generate(p.setup_spec(setup, n, Rng::derive(run_seed, 0)));
                    const Dataset out =
                        generate(p.setup_spec(setup, p.out_samples, Rng::derive(run_seed, 1)));
                    RunOut r;
                    const GaussianBelief b = detail::batch_blr_fit(in, grand, hyp);
                    r.blr = detail::mean_nll_blr(b, out, grand, hyp);
                    const MleFit fit = mle_fit(in, grand, hyp);
                    r.mle = detail::mean_nll_mle(fit.coefficients, out, grand, hyp);
                    return r;
                });
            double blr = 0.0, mle = 0.0;
            for (const auto& r : results) {
                blr += r.blr;
                mle += r.mle;
            }
            blr /= static_cast<double>(p.runs);
            mle /= static_cast<double>(p.runs);
            t.add_row({to_string(setup), std::to_string(n), std::to_string(p.runs),
                       format_double(blr), format_double(mle),
                       format_double((mle - blr) / std::abs(mle))});
        }
    }
    return t;
}

// ---------------------------------------------------------------------------
// Convergence study: in-sample Shapley values and the total allocation per
// design as the sample size grows.

inline TidyTable convergence_experiment(const ExperimentParams& p) {
    TidyTable t;
    t.columns = {"design", "n", "runs", "mean_phi_x2", "mean_phi_x3", "mean_payment_units",
                 "mean_gap", "allocation_ratio"};
    const int d = static_cast<int>(p.true_w.size()) - 1;
    const AgentRegistry registry = simulation_registry(d);

    struct RunOut {
        std::map<MarketDesign, std::vector<double>> phi;
        std::map<MarketDesign, double> payment_units;  // pi_c / lambda
        std::map<MarketDesign, double> gap;
    };

    for (long n : p.sample_sizes) {
        const auto results = run_seeded<RunOut>(
            p.runs, Rng::derive(p.seed, static_cast<std::uint64_t>(n)), p.jobs,
            [&](long, std::uint64_t run_seed) {
                const Dataset data =
                    generate(p.setup_spec(SetupKind::Baseline, n, run_seed));
                RunOut r;
                for (MarketDesign design : p.designs) {
                    MarketConfig cfg = p.market_config(design);
                    cfg.lambda_in = 1.0;
                    cfg.tau = 1.0;
                    cfg.hypothesis.forgetting = 1.0;
                    const BatchClearing cleared = clear_batch(data, nullptr, cfg, registry);
                    r.phi[design] = cleared.in_sample.phi;
                    r.payment_units[design] = cleared.in_sample.pi_c;
                    r.gap[design] = cleared.in_sample.budget_gap;
                }
                return r;
            });
        for (MarketDesign design : p.designs) {
            std::vector<double> phi(static_cast<std::size_t>(d - 1), 0.0);
            double payment = 0.0, gap = 0.0;
            for (const auto& r : results) {
                const auto& rp = r.phi.at(design);
                for (std::size_t k = 0; k < phi.size(); ++k) phi[k] += rp[k];
                payment += r.payment_units.at(design);
                gap += r.gap.at(design);
            }
            for (auto& v : phi) v /= static_cast<double>(p.runs);
            payment /= static_cast<double>(p.runs);
            gap /= static_cast<double>(p.runs);
            t.add_row({to_string(design), std::to_string(n), std::to_string(p.runs),
                       format_double(phi[0]), format_double(phi.size() > 1 ? phi[1] : 0.0),
                       format_double(payment), format_double(gap),
                       format_double((payment - gap) / payment)});
        }
    }
    return t;
}

// ---------------------------------------------------------------------------
// Risk study: expected value and expected shortfall (with sub-sampling CIs)
// of the first support agent's revenue, per setup, design and stage.

inline TidyTable risk_experiment(const ExperimentParams& p) {
    TidyTable t;
    t.columns = {"setup",          "design", "stage", "sweep", "n",
                 "runs",           "expected_value", "expected_shortfall",
                 "ev_lo",          "ev_hi",  "es_lo", "es_hi"};
    const int d = static_cast<int>(p.true_w.size()) - 1;
    const AgentRegistry registry = simulation_registry(d);
    const std::string first_agent = "a1";  // owner of x2

    std::vector<double> sweep_values = p.sweep_values;
    if (p.sweep.empty()) sweep_values = {0.0};
    if (p.sweep == "sample_size" && sweep_values.empty())
        for (long n : p.sample_sizes) sweep_values.push_back(static_cast<double>(n));

    for (SetupKind setup : p.setups) {
        for (double sweep_value : sweep_values) {
            Eigen::VectorXd w = p.true_w;
            long n = p.sample_sizes.empty() ? 1000 : p.sample_sizes.front();
            if (p.sweep == "w2") w[2] = sweep_value;
            if (p.sweep == "sample_size") n = static_cast<long>(sweep_value);

            struct RunOut {
                std::map<MarketDesign, std::pair<double, double>> revenue;  // in, out
            };
            ExperimentParams local = p;
            local.true_w = w;
            const auto results = run_seeded<RunOut>(
                p.runs,
                Rng::derive(p.seed, static_cast<std::uint64_t>(setup) * 7919 +
                                        static_cast<std::uint64_t>(n) * 131 +
                                        static_cast<std::uint64_t>(sweep_value * 1024)),
                p.jobs, [&](long, std::uint64_t run_seed) {
                    const Dataset in =
                        generate(local.setup_spec(setup, n, Rng::derive(run_seed, 0)));
                    const Dataset out = generate(
                        local.setup_spec(setup, p.out_samples, Rng::derive(run_seed, 1)));
                    RunOut r;
                    for (MarketDesign design : p.designs) {
                        MarketConfig cfg = local.market_config(design);
                        cfg.tau = 1.0;
                        cfg.hypothesis.forgetting = 1.0;
                        const BatchClearing cleared = clear_batch(in, &out, cfg, registry);
                        r.revenue[design] = {cleared.in_sample.cumulative_revenue().at(first_agent),
                                             cleared.out_of_sample.cumulative_revenue().at(first_agent)};
                    }
                    return r;
                });

            for (MarketDesign design : p.designs) {
                for (Stage stage : {Stage::InSample, Stage::OutOfSample}) {
                    std::vector<double> revenue;
                    revenue.reserve(results.size());
                    for (const auto& r : results)
                        revenue.push_back(stage == Stage::InSample ? r.revenue.at(design).first
                                                                   : r.revenue.at(design).second);
                    const RiskReport report =
                        risk_report(revenue, p.alpha, p.ci_level, Rng::derive(p.seed, 99));
                    t.add_row({to_string(setup), to_string(design), to_string(stage),
                               format_double(sweep_value), std::to_string(n),
                               std::to_string(p.runs), format_double(report.expected_value),
                               format_double(report.expected_shortfall),
                               format_double(report.ev_interval.first),
                               format_double(report.ev_interval.second),
                               format_double(report.es_interval.first),
                               format_double(report.es_interval.second)});
                }
            }
        }
    }
    return t;
}

// ---------------------------------------------------------------------------
// Tracking study: temporal evolution of the grand posterior mean of w2 under
// a nonstationary coefficient, for several forgetting factors.

struct TrackingResult {
    TidyTable trace;    // tau, t, mean_w2_estimate, true_w2
    TidyTable summary;  // tau, post_change_mae
};

inline TrackingResult tracking_experiment(const ExperimentParams& p) {
    const int d = static_cast<int>(p.true_w.size()) - 1;
    const Hypothesis base_hyp = Hypothesis::linear(d, p.xi, p.gamma, 1.0);
    std::vector<int> grand(static_cast<std::size_t>(d));
    std::iota(grand.begin(), grand.end(), 0);
    const int w2_slot = 2;  // [dummy, x1, x2, ...]

    TrackingResult out;
    out.trace.columns = {"tau", "t", "mean_w2_estimate", "true_w2"};
    out.summary.columns = {"tau", "runs", "post_change_mae"};

    SetupSpec proto;
    proto.kind = SetupKind::Baseline;
    proto.true_w = p.true_w;
    proto.xi = p.xi;
    proto.n_samples = p.horizon;
    proto.nonstat = p.nonstat;

    for (double tau : p.taus) {
        struct RunOut {
            std::vector<double> estimate;
            double mae = 0.0;
        };
        const auto results = run_seeded<RunOut>(
            p.runs, p.seed, p.jobs, [&](long, std::uint64_t run_seed) {
                SetupSpec spec = proto;
                spec.seed = run_seed;  // paired across taus: same data per run index
                const Dataset data = generate(spec);
                GaussianBelief prior = init_prior(d + 1, p.gamma);
                GaussianBelief belief = prior;
                RunOut r;
                r.estimate.resize(static_cast<std::size_t>(data.rows()));
                double err = 0.0;
                long count = 0;
                for (Eigen::Index t = 0; t < data.rows(); ++t) {
                    belief = flatten_prior(belief, prior, tau);
                    belief = update_posterior(
                        belief, base_hyp.design_vector(data.inputs.row(t).transpose(), grand),
                        data.targets[t], p.xi);
                    const double estimate = belief.mean()[w2_slot];
                    r.estimate[static_cast<std::size_t>(t)] = estimate;
                    if (spec.nonstat.kind == Nonstationarity::Kind::StepChange &&
                        t >= spec.nonstat.change_step &&
                        t < spec.nonstat.change_step + p.post_change_window) {
                        err += std::abs(estimate - w2_at(spec, t));
                        ++count;
                    }
                }
                r.mae = count > 0 ? err / static_cast<double>(count) : 0.0;
                return r;
            });

        std::vector<double> mean_estimate(static_cast<std::size_t>(p.horizon), 0.0);
        double mae = 0.0;
        for (const auto& r : results) {
            for (std::size_t t = 0; t < mean_estimate.size(); ++t)
                mean_estimate[t] += r.estimate[t];
            mae += r.mae;
        }
        for (auto& v : mean_estimate) v /= static_cast<double>(p.runs);
        mae /= static_cast<double>(p.runs);

        for (long t = 0; t < p.horizon; ++t)
            out.trace.add_row({format_double(tau), std::to_string(t + 1),
                               format_double(mean_estimate[static_cast<std::size_t>(t)]),
                               format_double(w2_at(proto, t))});
        out.summary.add_row({format_double(tau), std::to_string(p.runs), format_double(mae)});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Truthfulness study: mean in-sample revenue of the corrupted agent as the
// injected reporting noise grows, plus the Ridge-equivalence check on the
// average of noisy least-squares fits.

struct TruthfulnessResult {
    TidyTable revenue;  // noise_std, runs, mean_revenue
    TidyTable ridge;    // coefficient, ridge, mean_fit, se, z
};

inline TruthfulnessResult truthfulness_experiment(const ExperimentParams& p) {
    const int d = static_cast<int>(p.true_w.size()) - 1;
    const AgentRegistry registry = simulation_registry(d);
    const std::string corrupted_agent = "a" + std::to_string(p.corrupt_feature);
    const long n = p.sample_sizes.empty() ? 500 : p.sample_sizes.front();

    TruthfulnessResult out;
    out.revenue.columns = {"noise_std", "runs", "mean_revenue"};

    for (std::size_t level = 0; level < p.noise_levels.size(); ++level) {
        const double noise = p.noise_levels[level];
        const auto results = run_seeded<double>(
            p.runs, p.seed, p.jobs, [&](long, std::uint64_t run_seed) {
                const Dataset clean =
                    generate(p.setup_spec(SetupKind::Baseline, n, Rng::derive(run_seed, 0)));
                const Dataset reported =
                    noisy_report(clean, p.corrupt_feature, noise, Rng::derive(run_seed, 1));
                MarketConfig cfg = p.market_config(MarketDesign::BlrNll);
                cfg.tau = 1.0;
                cfg.hypothesis.forgetting = 1.0;
                const BatchClearing cleared = clear_batch(reported, nullptr, cfg, registry);
                return cleared.in_sample.cumulative_revenue().at(corrupted_agent);
            });
        out.revenue.add_row({format_double(noise), std::to_string(p.runs),
                             format_double(mean_of(results))});
    }

    // Ridge equivalence: the average of least-squares fits over noisy
    // replications approaches the generalized ridge solution.
    const Dataset base =
        generate(p.setup_spec(SetupKind::Baseline, p.ridge_samples, Rng::derive(p.seed, 4242)));
    const Hypothesis hyp = Hypothesis::linear(d, p.xi, p.gamma, 1.0);
    std::vector<int> grand(static_cast<std::size_t>(d));
    std::iota(grand.begin(), grand.end(), 0);
    Eigen::VectorXd sigma = Eigen::VectorXd::Zero(d + 1);
    sigma[p.corrupt_feature + 1] = p.ridge_noise_std * p.ridge_noise_std;
    const Eigen::VectorXd ridge = ridge_oracle(base, grand, sigma, hyp);

    const auto fits = run_seeded<Eigen::VectorXd>(
        p.ridge_replications, Rng::derive(p.seed, 5555), p.jobs,
        [&](long, std::uint64_t run_seed) {
            const Dataset noisy =
                noisy_report(base, p.corrupt_feature, p.ridge_noise_std, run_seed);
            return mle_fit(noisy, grand, hyp).coefficients;
        });
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(d + 1);
    for (const auto& f : fits) mean += f;
    mean /= static_cast<double>(fits.size());
    Eigen::VectorXd var = Eigen::VectorXd::Zero(d + 1);
    for (const auto& f : fits) var += (f - mean).cwiseAbs2();
    var /= static_cast<double>(fits.size() - 1);

    out.ridge.columns = {"coefficient", "ridge", "mean_fit", "se", "z"};
    for (int k = 0; k <= d; ++k) {
        const double se = std::sqrt(var[k] / static_cast<double>(fits.size()));
        out.ridge.add_row({std::to_string(k), format_double(ridge[k]), format_double(mean[k]),
                           format_double(se), format_double((mean[k] - ridge[k]) / se)});
    }
    return out;
}

// ---------------------------------------------------------------------------
// In-sample showcase: a single market run at increasing batch sizes,
// recording posterior moments, the in-sample NLL distribution and the
// cumulative revenues.

struct InSampleResult {
    TidyTable posterior;  // n, coefficient, mean, sd, true_w
    TidyTable nll_points; // n, t, nll
    TidyTable revenues;   // n, agent, cumulative_revenue
};

inline InSampleResult in_sample_experiment(const ExperimentParams& p) {
    const int d = static_cast<int>(p.true_w.size()) - 1;
    const AgentRegistry registry = simulation_registry(d);
    const long n_max = *std::max_element(p.sample_sizes.begin(), p.sample_sizes.end());
    const Dataset full = generate(p.setup_spec(SetupKind::Baseline, n_max, p.seed));
    std::vector<int> grand(static_cast<std::size_t>(d));
    std::iota(grand.begin(), grand.end(), 0);
    const Hypothesis hyp = Hypothesis::linear(d, p.xi, p.gamma, 1.0);

    InSampleResult out;
    out.posterior.columns = {"n", "coefficient", "mean", "sd", "true_w"};
    out.nll_points.columns = {"n", "t", "nll"};
    out.revenues.columns = {"n", "agent", "cumulative_revenue"};

    for (long n : p.sample_sizes) {
        Dataset subset(full.inputs.topRows(n), full.targets.head(n));
        const GaussianBelief posterior = detail::batch_blr_fit(subset, grand, hyp);
        for (int k = 0; k <= d; ++k)
            out.posterior.add_row({std::to_string(n), std::to_string(k),
                                   format_double(posterior.mean()[k]),
                                   format_double(std::sqrt(posterior.covariance()(k, k))),
                                   format_double(p.true_w[k])});

        MarketConfig cfg = p.market_config(MarketDesign::MleNll);
        cfg.tau = 1.0;
        cfg.hypothesis.forgetting = 1.0;
        const BatchClearing cleared = clear_batch(subset, nullptr, cfg, registry);
        const auto records = cleared.cache.records(subset);
        for (Eigen::Index t = 0; t < subset.rows(); ++t)
            out.nll_points.add_row(
                {std::to_string(n), std::to_string(t + 1),
                 format_double(nll(records[static_cast<std::size_t>(t)]
                                       .pred[records[static_cast<std::size_t>(t)].pred.size() - 1],
                                   subset.targets[t]))});
        for (const auto& [agent, revenue] : cleared.in_sample.cumulative_revenue())
            out.revenues.add_row({std::to_string(n), agent, format_double(revenue)});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Shapley moment study: empirical vs closed-form moments, plus the variance
// sweep over the coefficient mean.

inline TidyTable moment_experiment(const ExperimentParams& p) {
    TidyTable t;
    t.columns = {"w_mean", "samples", "theoretical_mean", "empirical_mean", "z_mean",
                 "theoretical_variance", "empirical_variance", "z_variance"};
    for (std::size_t k = 0; k < p.w_means.size(); ++k) {
        const double w_mean = p.w_means[k];
        const auto samples = sample_shapley_moments(w_mean, p.w_var, p.x_var, p.moment_samples,
                                                    Rng::derive(p.seed, k));
        const MomentCheckReport r = shapley_moment_check(w_mean, p.w_var, p.x_var, samples);
        t.add_row({format_double(w_mean), std::to_string(p.moment_samples),
                   format_double(r.theoretical_mean), format_double(r.empirical_mean),
                   format_double(r.z_mean), format_double(r.theoretical_variance),
                   format_double(r.empirical_variance), format_double(r.z_variance)});
    }
    return t;
}

// ---------------------------------------------------------------------------

inline nlohmann::ordered_json experiment_manifest(const ExperimentParams& p) {
    nlohmann::ordered_json j;
    j["experiment"] = p.experiment;
    j["runs"] = p.runs;
    j["seed"] = p.seed;
    std::vector<std::string> designs, setups;
    for (auto d : p.designs) designs.emplace_back(to_string(d));
    for (auto s : p.setups) setups.emplace_back(to_string(s));
    j["designs"] = designs;
    j["setups"] = setups;
    j["sample_sizes"] = p.sample_sizes;
    j["true_w"] = std::vector<double>(p.true_w.data(), p.true_w.data() + p.true_w.size());
    j["xi"] = p.xi;
    j["gamma"] = p.gamma;
    j["tau"] = p.tau;
    j["alpha"] = p.alpha;
    j["lambda_in"] = p.lambda_in;
    j["lambda_out"] = p.lambda_out;
    j["out_samples"] = p.out_samples;
    if (p.experiment == "tracking") {
        j["taus"] = p.taus;
        j["nonstationary"] = {{"kind", p.nonstat.kind == Nonstationarity::Kind::StepChange
                                           ? "step"
                                           : (p.nonstat.kind == Nonstationarity::Kind::LinearDrift
                                                  ? "linear"
                                                  : "none")},
                              {"w2_end", p.nonstat.w2_end},
                              {"change_step", p.nonstat.change_step}};
        j["horizon"] = p.horizon;
    }
    if (p.experiment == "truthfulness") {
        j["noise_levels"] = p.noise_levels;
        j["corrupt_feature"] = p.corrupt_feature;
        j["ridge_replications"] = p.ridge_replications;
        j["ridge_samples"] = p.ridge_samples;
        j["ridge_noise_std"] = p.ridge_noise_std;
    }
    if (!p.sweep.empty()) {
        j["sweep"] = p.sweep;
        j["sweep_values"] = p.sweep_values;
    }
    return j;
}

/// Runs the named experiment and reduces it to plot-ready tables. Results
/// are keyed by run index, so the reduction is independent of scheduling.
inline MonteCarloReport monte_carlo(const ExperimentParams& p) {
    MonteCarloReport report;
    report.manifest = experiment_manifest(p);
    if (p.experiment == "calibration") {
        report.tables["nll_ratio_vs_n"] = calibration_experiment(p);
    } else if (p.experiment == "convergence") {
        report.tables["shapley_vs_n"] = convergence_experiment(p);
    } else if (p.experiment == "risk") {
        report.tables["risk_ev_es"] = risk_experiment(p);
    } else if (p.experiment == "tracking") {
        TrackingResult r = tracking_experiment(p);
        report.tables["tracking_trace"] = std::move(r.trace);
        report.tables["tracking_summary"] = std::move(r.summary);
    } else if (p.experiment == "truthfulness") {
        TruthfulnessResult r = truthfulness_experiment(p);
        report.tables["truthfulness_revenue"] = std::move(r.revenue);
        report.tables["ridge_equivalence"] = std::move(r.ridge);
    } else if (p.experiment == "in_sample") {
        InSampleResult r = in_sample_experiment(p);
        report.tables["posterior_trace"] = std::move(r.posterior);
        report.tables["nll_distribution"] = std::move(r.nll_points);
        report.tables["revenues"] = std::move(r.revenues);
    } else if (p.experiment == "moments") {
        report.tables["shapley_moments"] = moment_experiment(p);
    } else {
        throw std::invalid_argument("unknown experiment: " + p.experiment);
    }
    return report;
}

/// Paper defaults per experiment, so a minimal config runs the matching
/// study out of the box.
inline ExperimentParams default_params(const std::string& experiment) {
    ExperimentParams p;
    p.experiment = experiment;
    const auto w = [](std::initializer_list<double> v) {
        Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
        Eigen::Index k = 0;
        for (double x : v) out[k++] = x;
        return out;
    };
    if (experiment == "in_sample") {
        p.true_w = w({-0.11, 0.31, 0.08, 0.65});
        p.xi = 1.23;
        p.lambda_in = 0.01;
        p.sample_sizes = {4, 10, 40};
        p.runs = 1;
    } else if (experiment == "calibration") {
        p.true_w = w({-0.1, 0.3, 0.8, -0.4});
        p.xi = 0.5;
        p.setups = {SetupKind::Baseline, SetupKind::Interpolant, SetupKind::Noise,
                    SetupKind::Heteroskedasticity};
        p.sample_sizes = {10, 40, 160, 640, 1000};
    } else if (experiment == "convergence") {
        p.true_w = w({-0.1, 0.8, 0.7, -0.9});
        p.xi = 1.0;
        p.sample_sizes = {8, 32, 128, 512, 1024};
    } else if (experiment == "risk") {
        p.true_w = w({0.1, -0.5, 0.0, 0.7});
        p.xi = 0.67;
        p.lambda_in = p.lambda_out = 0.03;
        p.setups = {SetupKind::Baseline, SetupKind::Interpolant, SetupKind::Noise,
                    SetupKind::Heteroskedasticity};
        p.sample_sizes = {1000};
        p.designs = {MarketDesign::MleNll, MarketDesign::BlrNll, MarketDesign::BlrKlM,
                     MarketDesign::BlrKlV};
        p.runs = 500;
    } else if (experiment == "tracking") {
        p.true_w = w({0.0, -0.2, 0.1, 0.3});
        p.xi = 0.98;
        p.lambda_in = p.lambda_out = 0.95;
    } else if (experiment == "truthfulness") {
        p.true_w = w({-0.1, 0.8, 0.7, -0.9});
        p.xi = 1.0;
        p.sample_sizes = {500};
    } else if (experiment == "moments") {
        p.true_w = w({0.0, 0.0, 0.0, 0.0});
    } else {
        throw std::invalid_argument("unknown experiment: " + experiment);
    }
    return p;
}

inline ExperimentParams params_from_json(const nlohmann::json& j) {
    const std::string experiment = j.value("experiment", "convergence");
    ExperimentParams p = default_params(experiment);
    if (j.contains("designs")) {
        p.designs.clear();
        for (const auto& name : j.at("designs"))
            p.designs.push_back(design_from_string(name.get<std::string>()));
    }
    if (j.contains("setups")) {
        p.setups.clear();
        for (const auto& name : j.at("setups"))
            p.setups.push_back(setup_from_string(name.get<std::string>()));
    }
    if (j.contains("sample_sizes"))
        p.sample_sizes = j.at("sample_sizes").get<std::vector<long>>();
    if (j.contains("true_w")) {
        const auto v = j.at("true_w").get<std::vector<double>>();
        p.true_w = Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
    }
    p.runs = j.value("runs", p.runs);
    if (p.runs < 1) throw std::invalid_argument("config: runs must be >= 1");
    p.seed = j.value("seed", p.seed);
    p.jobs = j.value("jobs", p.jobs);
    p.xi = j.value("xi", p.xi);
    p.gamma = j.value("gamma", p.gamma);
    p.tau = j.value("tau", p.tau);
    p.alpha = j.value("alpha", p.alpha);
    p.ci_level = j.value("ci_level", p.ci_level);
    p.lambda_in = j.value("lambda_in", p.lambda_in);
    p.lambda_out = j.value("lambda_out", p.lambda_out);
    p.out_samples = j.value("out_samples", p.out_samples);
    if (j.contains("taus")) p.taus = j.at("taus").get<std::vector<double>>();
    if (j.contains("nonstationary")) {
        const auto& ns = j.at("nonstationary");
        const std::string kind = ns.value("kind", "step");
        p.nonstat.kind = kind == "linear" ? Nonstationarity::Kind::LinearDrift
                        : kind == "none"  ? Nonstationarity::Kind::None
                                          : Nonstationarity::Kind::StepChange;
        p.nonstat.w2_end = ns.value("w2_end", p.nonstat.w2_end);
        p.nonstat.change_step = ns.value("change_step", p.nonstat.change_step);
    }
    p.horizon = j.value("horizon", p.horizon);
    p.post_change_window = j.value("post_change_window", p.post_change_window);
    if (j.contains("noise_levels"))
        p.noise_levels = j.at("noise_levels").get<std::vector<double>>();
    p.corrupt_feature = j.value("corrupt_feature", p.corrupt_feature);
    p.ridge_replications = j.value("ridge_replications", p.ridge_replications);
    p.ridge_samples = j.value("ridge_samples", p.ridge_samples);
    p.ridge_noise_std = j.value("ridge_noise_std", p.ridge_noise_std);
    p.sweep = j.value("sweep", p.sweep);
    if (j.contains("sweep_values"))
        p.sweep_values = j.at("sweep_values").get<std::vector<double>>();
    if (j.contains("w_means")) p.w_means = j.at("w_means").get<std::vector<double>>();
    p.w_var = j.value("w_var", p.w_var);
    p.x_var = j.value("x_var", p.x_var);
    p.moment_samples = j.value("moment_samples", p.moment_samples);
    return p;
}

}  // namespace regmkt
