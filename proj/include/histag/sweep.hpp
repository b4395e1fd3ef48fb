#pragma once

// Hyperparameter grid execution with repeated runs and rank-sum selection.

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "histag/tagger.hpp"

namespace histag {

struct SweepGrid {
    TaskId task = TaskId::POS;
    std::vector<int> cemb_sizes{100, 150, 200, 300};
    std::vector<int> cemb_layers{1, 2};
    std::vector<int> hidden_sizes{150, 200, 250, 300, 350};
    int runs_per_config = 5;
    /// Shared hyperparameters of every grid point.
    TrainConfig base;

    void check() const;
};

/// The published grid for `task`; LEMMA also tries a hidden size of 170.
SweepGrid default_grid(TaskId task);

/// Applies "key=value" override lines ("hidden_sizes=150,200", "runs=5",
/// or any TrainConfig key for the shared settings).
void apply_grid_overrides(SweepGrid& grid, std::string_view text);

/// Cartesian product in (cemb_size, cemb_layers, hidden_size) order.
std::vector<TrainConfig> generate_grid(const SweepGrid& grid);

struct SweepRun {
    int run_id = 0;
    int config_index = 0;
    int run_index = 0;
    std::uint64_t seed = 0;
    TrainConfig config;
    bool failed = false;
    std::string error;
    std::map<std::string, double> metrics;
    std::string model_path;

    bool operator==(const SweepRun&) const = default;
};

using SweepLog = std::vector<SweepRun>;

nlohmann::json to_json(const SweepRun& run);
SweepRun sweep_run_from_json(const nlohmann::json& j);

/// Reads a log file. A final line cut short by an interruption is ignored;
/// any other malformed line raises InputError. A missing file is empty.
SweepLog read_sweep_log(const std::string& path);

struct RunResult {
    std::map<std::string, double> metrics;
    std::string model_path;
};

/// Trains one grid point; throwing marks the run as failed.
using RunFunction = std::function<RunResult(const TrainConfig& config, const SplitSet& splits, int run_id)>;

/// Trains, scores dev with the token-class metric table, and saves the model
/// under `model_dir` when it is non-empty.
RunFunction default_run_function(std::string model_dir);

struct SweepOptions {
    std::string log_path;
    int workers = 1;
    /// Stop after this many new runs (simulates an interruption).
    std::optional<int> max_new_runs;
    RunFunction run;
};

/// Runs every (config, run) pair missing from the log and appends one row
/// per finished run, in run-id order. Returns the full log.
SweepLog run_sweep(const SweepGrid& grid, const SplitSet& splits, const SweepOptions& options);

struct RankingPolicy {
    std::set<std::string> excluded = default_exclusions();
    /// Metric used to break rank-sum ties (higher wins).
    std::string target_metric = "all.accuracy";

    static std::set<std::string> default_exclusions();
    static RankingPolicy for_task(TaskId task);
};

struct RankResult {
    int selected = -1;
    std::vector<std::string> metrics;
    /// run id -> sum of ranks over `metrics`.
    std::map<int, double> rank_sums;
};

/// Fractional descending ranks (1 = best, ties share the mean rank).
std::vector<double> fractional_ranks(const std::vector<double>& values);

/// Ranks the successful runs on every metric they all report, minus the
/// exclusions, and selects the lowest rank sum.
RankResult rank_models(const SweepLog& log, const RankingPolicy& policy);

}  // namespace histag
