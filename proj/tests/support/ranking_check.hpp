#pragma once

// Randomized and hand-built tables for rank-sum model selection.

#include <string>
#include <vector>

#include "histag/sweep.hpp"
#include "support/oracles.hpp"

namespace histag::oracle {

inline SweepLog log_from_table(const std::vector<std::vector<double>>& table, const std::vector<std::string>& names) {
    SweepLog log;
    for (std::size_t r = 0; r < table.size(); ++r) {
        SweepRun row;
        row.run_id = static_cast<int>(r);
        row.run_index = static_cast<int>(r);
        for (std::size_t m = 0; m < names.size(); ++m) row.metrics[names[m]] = table[r][m];
        log.push_back(row);
    }
    return log;
}

/// runs x metrics table drawn from a small value set so ties are common.
inline std::vector<std::vector<double>> random_table(std::size_t runs, std::size_t metrics, Rng& rng) {
    static const std::vector<double> levels = {0.61, 0.7, 0.72, 0.8, 0.85, 0.9, 0.97};
    std::vector<std::vector<double>> t(runs, std::vector<double>(metrics));
    for (auto& row : t) {
        for (auto& v : row) v = levels[rng.below(levels.size())];
    }
    return t;
}

struct RankingAgreement {
    int tables = 0;
    int agree = 0;
};

/// Selection on `count` random 5-run x 6-metric tables against the sort-based
/// oracle. Metric 0 is the tie-breaking target.
inline RankingAgreement randomized_ranking(int count, std::uint64_t seed) {
    const std::vector<std::string> names = {"all.accuracy", "all.precision", "all.recall",
                                            "known.accuracy", "unknown.accuracy", "ambiguous.accuracy"};
    Rng rng(seed);
    RankingAgreement out;
    for (int t = 0; t < count; ++t) {
        auto table = random_table(5, 6, rng);
        RankingPolicy policy;
        policy.target_metric = names[0];
        auto result = rank_models(log_from_table(table, names), policy);
        ++out.tables;
        if (result.selected == static_cast<int>(select_run(table, 0))) ++out.agree;
    }
    return out;
}

/// Run 0 is best on the target metric alone; run 1 is second on it but first
/// everywhere else. Rank sums must pick run 1.
inline bool dominance_counterexample() {
    const std::vector<std::string> names = {"all.accuracy", "all.precision", "all.recall",
                                            "known.accuracy", "unknown.accuracy", "ambiguous.accuracy"};
    std::vector<std::vector<double>> table = {
        {0.99, 0.50, 0.50, 0.50, 0.50, 0.50},
        {0.98, 0.90, 0.90, 0.90, 0.90, 0.90},
        {0.97, 0.80, 0.80, 0.80, 0.80, 0.80},
        {0.96, 0.70, 0.70, 0.70, 0.70, 0.70},
        {0.95, 0.60, 0.60, 0.60, 0.60, 0.60},
    };
    RankingPolicy policy;
    policy.target_metric = "all.accuracy";
    return rank_models(log_from_table(table, names), policy).selected == 1 && select_run(table, 0) == 1;
}

/// The unknown_target metrics favour run 2 strongly enough to flip the
/// winner when counted. Excluded by default, they must not.
inline bool exclusion_counterexample() {
    const std::vector<std::string> names = {"all.accuracy",
                                            "all.precision",
                                            "unknown_target.accuracy",
                                            "unknown_target.precision",
                                            "unknown_target.recall",
                                            "unknown_target.f1"};
    std::vector<std::vector<double>> table = {
        {0.95, 0.90, 0.10, 0.10, 0.10, 0.10},
        {0.94, 0.89, 0.20, 0.20, 0.20, 0.20},
        {0.93, 0.88, 0.90, 0.90, 0.90, 0.90},
        {0.92, 0.87, 0.30, 0.30, 0.30, 0.30},
        {0.91, 0.86, 0.40, 0.40, 0.40, 0.40},
    };
    auto log = log_from_table(table, names);
    RankingPolicy with_default;
    auto kept = rank_models(log, with_default);
    RankingPolicy none;
    none.excluded.clear();
    auto all = rank_models(log, none);
    std::vector<std::vector<double>> visible;
    for (const auto& row : table) visible.push_back({row[0], row[1]});
    return kept.selected == 0 && kept.metrics.size() == 2 && select_run(visible, 0) == 0 && all.selected == 2 &&
           select_run(table, 0) == 2;
}

}  // namespace histag::oracle
