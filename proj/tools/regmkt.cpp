// regmkt: regression-market experiments, replay and audits from the command
// line. Emits tidy CSV tables; exit codes: 0 success, 1 runtime/tolerance
// failure, 2 usage error.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>

#include "regmarket/allocation.hpp"
#include "regmarket/data_io.hpp"
#include "regmarket/experiments.hpp"
#include "regmarket/market.hpp"
#include "regmarket/replay.hpp"
#include "regmarket/rng.hpp"

namespace {

int log_level() {
    const char* env = std::getenv("REGMKT_LOG");
    if (env == nullptr) return 0;
    const std::string v(env);
    if (v == "debug") return 2;
    if (v == "info") return 1;
    return 0;
}

void log_info(const std::string& msg) {
    if (log_level() >= 1) std::cerr << "[regmkt] " << msg << "\n";
}

struct CommonOpts {
    std::string config_path;
    std::string out_dir = "out";
    std::uint64_t seed = 0;
    bool seed_set = false;
    int jobs = 0;
    std::string design;
    std::string setup;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("--config", opts.config_path, "JSON configuration file");
    cmd->add_option("--out", opts.out_dir, "output directory");
    cmd->add_option("--seed", opts.seed, "seed override")->each([&](const std::string&) {
        opts.seed_set = true;
    });
    cmd->add_option("--jobs", opts.jobs, "worker threads (default: available cores)");
    cmd->add_option("--design", opts.design, "market design override");
    cmd->add_option("--setup", opts.setup, "setup override");
}

nlohmann::json load_config_or_empty(const CommonOpts& opts) {
    if (opts.config_path.empty()) return nlohmann::json::object();
    return regmkt::load_json_file(opts.config_path);
}

void apply_overrides(regmkt::ExperimentParams& params, const CommonOpts& opts) {
    if (opts.seed_set) params.seed = opts.seed;
    if (opts.jobs > 0) params.jobs = opts.jobs;
    if (!opts.design.empty()) params.designs = {regmkt::design_from_string(opts.design)};
    if (!opts.setup.empty()) params.setups = {regmkt::setup_from_string(opts.setup)};
}

void write_report(const regmkt::MonteCarloReport& report, const std::string& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    for (const auto& [name, table] : report.tables) {
        const std::string path = (fs::path(out_dir) / (name + ".csv")).string();
        regmkt::write_table_csv(table, path);
        log_info("wrote " + path);
    }
    regmkt::write_file_atomic((fs::path(out_dir) / "manifest.json").string(),
                              report.manifest.dump(2) + "\n");
}

int run_simulate(const CommonOpts& opts) {
    const nlohmann::json config = load_config_or_empty(opts);
    regmkt::ExperimentParams params = config.empty()
                                          ? regmkt::default_params("convergence")
                                          : regmkt::params_from_json(config);
    apply_overrides(params, opts);
    log_info("experiment " + params.experiment + ", runs=" + std::to_string(params.runs));
    const regmkt::MonteCarloReport report = regmkt::monte_carlo(params);
    write_report(report, opts.out_dir);
    return 0;
}

int run_risk_report(const CommonOpts& opts) {
    nlohmann::json config = load_config_or_empty(opts);
    config["experiment"] = "risk";
    regmkt::ExperimentParams params = regmkt::params_from_json(config);
    apply_overrides(params, opts);
    const regmkt::MonteCarloReport report = regmkt::monte_carlo(params);
    write_report(report, opts.out_dir);
    const auto& table = report.tables.at("risk_ev_es");
    for (const auto& row : table.rows)
        std::cout << row[0] << " " << row[1] << " " << row[2]
                  << " EV=" << row[6] << " ES=" << row[7] << "\n";
    return 0;
}

int run_replay(const CommonOpts& opts, const std::string& data_path_flag) {
    const nlohmann::json config = load_config_or_empty(opts);
    std::string data_path = data_path_flag;
    if (data_path.empty()) data_path = config.value("data", "");
    if (data_path.empty()) throw CLI::ValidationError("replay", "no data CSV given");

    const regmkt::RawSeriesTable table = regmkt::ingest_csv(data_path);
    log_info("ingested " + std::to_string(table.values.rows()) + " rows, dropped " +
             std::to_string(table.dropped_rows));

    regmkt::ReplaySpec spec;
    spec.lag_order = config.value("lag", 1);
    const std::string target = !opts.setup.empty() ? opts.setup : config.value("target", "ALL");
    if (target == "ALL") {
        spec.all_entities_as_central = true;
        spec.target_entity = table.entities.front();
    } else {
        spec.target_entity = target;
    }
    spec.apply_selection = config.value("select_features", false);
    spec.validation_fraction = config.value("validation_fraction", 0.2);

    nlohmann::json market_json = config.is_object() ? config : nlohmann::json::object();
    if (!market_json.contains("design")) market_json["design"] = "blr_kl_v";
    if (!market_json.contains("tau")) market_json["tau"] = 0.998;
    if (!market_json.contains("lambda_in")) market_json["lambda_in"] = 50.0;
    if (!market_json.contains("lambda_out")) market_json["lambda_out"] = 150.0;
    if (!opts.design.empty()) market_json["design"] = opts.design;
    if (opts.seed_set) market_json["seed"] = opts.seed;
    const int n_lag_features =
        static_cast<int>(table.values.cols()) * spec.lag_order;
    spec.market = regmkt::market_config_from_json(market_json, n_lag_features);

    const auto outcomes = regmkt::run_replay(table, spec);

    namespace fs = std::filesystem;
    fs::create_directories(opts.out_dir);
    std::vector<std::int64_t> stamps;
    {
        // step t corresponds to lagged row t-1
        regmkt::ReplaySpec probe = spec;
        probe.target_entity = outcomes.front().central_entity;
        stamps = regmkt::build_lagged_dataset(table, probe).first.timestamps;
    }
    for (const auto& outcome : outcomes) {
        const std::string path =
            (fs::path(opts.out_dir) / ("ledger_" + outcome.central_entity + ".csv")).string();
        regmkt::write_ledger(outcome.clearing, path, regmkt::LedgerFormat::Csv);
        log_info("wrote " + path);
    }
    regmkt::write_table_csv(regmkt::quarterly_summary(outcomes, stamps),
                            (fs::path(opts.out_dir) / "quarterly_summary.csv").string());

    nlohmann::ordered_json manifest;
    manifest["data"] = data_path;
    manifest["target"] = target;
    manifest["lag"] = spec.lag_order;
    manifest["market"] = regmkt::market_config_to_json(spec.market);
    regmkt::write_file_atomic((fs::path(opts.out_dir) / "manifest.json").string(),
                              manifest.dump(2) + "\n");
    return 0;
}

int run_shapley_audit(const CommonOpts& opts, int n_support, bool tamper_weights) {
    const nlohmann::json config = load_config_or_empty(opts);
    const std::uint64_t seed = opts.seed_set ? opts.seed : config.value("seed", 7ULL);
    const double tolerance = config.value("tolerance", 1e-9);
    regmkt::Rng rng(seed);

    double max_deviation = 0.0;
    double max_balance_gap = 0.0;
    double klm_gap = 0.0;

    const regmkt::WeightFn weight =
        tamper_weights ? regmkt::WeightFn([](int s, int n) {
            return regmkt::shapley_subset_weight(s, n) * (s == 0 ? 1.01 : 1.0);
        })
                       : regmkt::WeightFn{};

    for (int instance = 0; instance < 25; ++instance) {
        // random value tables for every design
        for (regmkt::MarketDesign design :
             {regmkt::MarketDesign::BlrNll, regmkt::MarketDesign::BlrKlV,
              regmkt::MarketDesign::BlrKlM}) {
            regmkt::CoalitionValueTable t;
            t.design = design;
            t.n = n_support;
            const std::uint32_t count = 1u << n_support;
            if (design == regmkt::MarketDesign::BlrKlM) {
                t.pair_gain.assign(static_cast<std::size_t>(count) * n_support, 0.0);
                for (std::uint32_t mask = 0; mask < count; ++mask)
                    for (int i = 0; i < n_support; ++i)
                        if (!(mask & (1u << i))) t.pair(mask, i) = rng.uniform(0.0, 2.0);
                t.block_gain = rng.uniform(0.0, 2.0);
            } else {
                t.value.assign(count, 0.0);
                for (std::uint32_t mask = 1; mask < count; ++mask)
                    t.value[mask] = rng.uniform(-1.0, 1.0);
            }
            const auto exact = regmkt::shapley_all(t, weight);
            const auto oracle = regmkt::shapley_permutation_oracle(t);
            for (std::size_t k = 0; k < exact.size(); ++k)
                max_deviation = std::max(max_deviation, std::abs(exact[k] - oracle[k]));

            // budget coherence of the weighted sum against the payment
            double total = 0.0;
            for (double phi : exact) total += phi;
            const double payment_units = regmkt::central_payment(t, 1.0);
            if (design == regmkt::MarketDesign::BlrKlM)
                klm_gap = payment_units - total;
            else
                max_balance_gap = std::max(max_balance_gap, std::abs(payment_units - total));
        }
    }

    std::cout << "shapley-audit: max |eq9 - permutation oracle| = " << max_deviation << "\n";
    std::cout << "shapley-audit: max |pi_c - sum(phi)| (NLL, KL-v) = " << max_balance_gap << "\n";
    std::cout << "shapley-audit: last KL-m budget gap (unconstrained sign) = " << klm_gap << "\n";
    if (max_deviation > tolerance || max_balance_gap > tolerance) {
        std::cout << "shapley-audit: FAILED tolerance " << tolerance << "\n";
        return 1;
    }
    std::cout << "shapley-audit: OK\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Bayesian regression markets: experiments, replay and audits"};
    app.require_subcommand(1);

    CommonOpts simulate_opts, replay_opts, audit_opts, risk_opts;
    std::string replay_data;
    int audit_features = 3;
    bool tamper_weights = false;

    CLI::App* simulate = app.add_subcommand("simulate", "run a Monte Carlo experiment");
    add_common(simulate, simulate_opts);

    CLI::App* replay = app.add_subcommand("replay", "online replay of a CSV series");
    add_common(replay, replay_opts);
    replay->add_option("--data", replay_data, "CSV with timestamp + one column per entity");

    CLI::App* audit = app.add_subcommand("shapley-audit",
                                         "check Eq.-9 Shapley against the permutation oracle");
    add_common(audit, audit_opts);
    audit->add_option("--features", audit_features, "support features in the random instance")
        ->check(CLI::Range(1, 8));
    audit->add_flag("--tamper-weights", tamper_weights)->group("");  // fault-injection hook

    CLI::App* risk = app.add_subcommand("risk-report", "revenue risk study (EV/ES with CIs)");
    add_common(risk, risk_opts);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() != 0) {
            std::cerr << e.what() << "\n";
            return 2;
        }
        return app.exit(e);  // --help
    }

    try {
        if (simulate->parsed()) return run_simulate(simulate_opts);
        if (replay->parsed()) return run_replay(replay_opts, replay_data);
        if (audit->parsed()) return run_shapley_audit(audit_opts, audit_features, tamper_weights);
        if (risk->parsed()) return run_risk_report(risk_opts);
    } catch (const CLI::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
