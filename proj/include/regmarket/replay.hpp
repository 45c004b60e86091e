#pragma once

#include <map>
#include <string>
#include <vector>

#include "regmarket/data_io.hpp"
#include "regmarket/market.hpp"

namespace regmkt {

struct ReplayOutcome {
    std::string central_entity;
    ClearingResult clearing;
    SelectionReport selection;
    bool selection_applied = false;
};

/// Runs the online replay for one central entity: lagged ARX dataset,
/// optional feature selection, then the two-stage online loop.
inline ReplayOutcome replay_one(const RawSeriesTable& table, ReplaySpec spec) {
    ReplayOutcome outcome;
    outcome.central_entity = spec.target_entity;
    auto [data, registry] = build_lagged_dataset(table, spec);

    MarketConfig config = spec.market;
    config.hypothesis =
        Hypothesis::linear(static_cast<int>(data.cols()), config.hypothesis.noise_precision,
                           config.hypothesis.prior_precision, config.tau);

    if (spec.apply_selection) {
        outcome.selection =
            select_features(data, registry, config.hypothesis, spec.validation_fraction);
        registry = outcome.selection.registry;
        outcome.selection_applied = true;
    }
    outcome.clearing = run_online(data, config, registry);
    return outcome;
}

/// Every entity takes a turn as the central agent (or just the named one).
inline std::vector<ReplayOutcome> run_replay(const RawSeriesTable& table, const ReplaySpec& spec) {
    std::vector<ReplayOutcome> outcomes;
    if (spec.all_entities_as_central) {
        for (const auto& entity : table.entities) {
            ReplaySpec one = spec;
            one.target_entity = entity;
            outcomes.push_back(replay_one(table, one));
        }
    } else {
        outcomes.push_back(replay_one(table, spec));
    }
    return outcomes;
}

/// Quarterly fractional NLL improvement per (central entity, quarter,
/// stage): the relative gap between the central-only and grand-coalition
/// per-step scores averaged over the quarter.
inline TidyTable quarterly_summary(const std::vector<ReplayOutcome>& outcomes,
                                   const std::vector<std::int64_t>& timestamps_by_step) {
    TidyTable t;
    t.columns = {"entity", "quarter", "stage", "nll_improvement", "steps"};

    for (const auto& outcome : outcomes) {
        const auto accumulate_stage = [&](const std::vector<ClearingRow>& rows, Stage stage) {
            std::map<std::string, std::pair<double, double>> sums;  // quarter -> (central, grand)
            std::map<std::string, long> counts;
            for (const auto& row : rows) {
                const std::size_t idx = static_cast<std::size_t>(row.t - 1);
                if (idx >= timestamps_by_step.size()) continue;
                const std::string q = quarter_label(timestamps_by_step[idx]);
                sums[q].first += row.ell_central;
                sums[q].second += row.ell_grand;
                counts[q] += 1;
            }
            for (const auto& [q, pair] : sums) {
                const double n = static_cast<double>(counts[q]);
                const double central = pair.first / n;
                const double grand = pair.second / n;
                const double improvement = (central - grand) / std::abs(central);
                t.add_row({outcome.central_entity, q, to_string(stage),
                           format_double(improvement), std::to_string(counts[q])});
            }
        };
        accumulate_stage(outcome.clearing.in_rows, Stage::InSample);
        accumulate_stage(outcome.clearing.out_rows, Stage::OutOfSample);
    }
    return t;
}

}  // namespace regmkt
