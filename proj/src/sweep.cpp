#include "histag/sweep.hpp"

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <thread>

#include "histag/evaluation.hpp"

namespace histag {

using nlohmann::json;

void SweepGrid::check() const {
    if (cemb_sizes.empty() || cemb_layers.empty() || hidden_sizes.empty()) {
        throw ConfigError("sweep grid has an empty value set");
    }
    if (runs_per_config < 1) throw ConfigError("runs per config must be >= 1");
    for (int l : cemb_layers) {
        if (l != 1 && l != 2) throw ConfigError("cemb_layers values must be 1 or 2");
    }
    base.check();
}

SweepGrid default_grid(TaskId task) {
    SweepGrid g;
    g.task = task;
    g.base.task = task;
    if (task == TaskId::LEMMA) {
        g.hidden_sizes = {150, 170, 200, 250, 300, 350};
        g.base.target_metric = TargetMetric::precision;
    } else {
        g.base.target_metric = TargetMetric::accuracy;
    }
    return g;
}

namespace {

std::vector<int> parse_int_list(std::string_view key, std::string_view value) {
    std::vector<int> out;
    for (const auto& part : split(value, ',')) {
        auto t = trim(part);
        if (t.empty()) continue;
        try {
            std::size_t used = 0;
            int v = std::stoi(std::string(t), &used);
            if (used != t.size() || v <= 0) throw std::invalid_argument("bad");
            out.push_back(v);
        } catch (const std::exception&) {
            throw ConfigError("bad value in " + std::string(key) + ": '" + std::string(t) + "'");
        }
    }
    if (out.empty()) throw ConfigError("override " + std::string(key) + " is empty");
    return out;
}

}  // namespace

void apply_grid_overrides(SweepGrid& grid, std::string_view text) {
    for (const auto& raw : split(text, '\n')) {
        auto line = trim(raw);
        if (line.empty() || line.front() == '#') continue;
        auto eq = line.find('=');
        if (eq == std::string_view::npos) throw ConfigError("expected key=value, got '" + std::string(line) + "'");
        auto key = trim(line.substr(0, eq));
        auto value = trim(line.substr(eq + 1));
        if (key == "cemb_sizes") grid.cemb_sizes = parse_int_list(key, value);
        else if (key == "cemb_layers") grid.cemb_layers = parse_int_list(key, value);
        else if (key == "hidden_sizes") grid.hidden_sizes = parse_int_list(key, value);
        else if (key == "runs" || key == "runs_per_config") grid.runs_per_config = parse_int_list(key, value).at(0);
        else if (key == "task") throw ConfigError("the sweep task cannot be overridden");
        else grid.base.set(key, value);
    }
    grid.check();
}

std::vector<TrainConfig> generate_grid(const SweepGrid& grid) {
    grid.check();
    std::vector<TrainConfig> out;
    for (int e : grid.cemb_sizes) {
        for (int l : grid.cemb_layers) {
            for (int h : grid.hidden_sizes) {
                TrainConfig c = grid.base;
                c.task = grid.task;
                c.cemb_size = e;
                c.cemb_layers = l;
                c.hidden_size = h;
                c.check();
                out.push_back(c);
            }
        }
    }
    return out;
}

// --- log rows -------------------------------------------------------------

json to_json(const SweepRun& run) {
    json config = json::object();
    for (const auto& line : split(run.config.to_text(), '\n')) {
        auto eq = line.find('=');
        if (eq != std::string::npos) config[line.substr(0, eq)] = line.substr(eq + 1);
    }
    json j;
    j["run_id"] = run.run_id;
    j["config_index"] = run.config_index;
    j["run_index"] = run.run_index;
    j["seed"] = run.seed;
    j["config"] = config;
    j["status"] = run.failed ? "failed" : "ok";
    if (run.failed) j["error"] = run.error;
    j["metrics"] = run.metrics;
    j["model_path"] = run.model_path;
    return j;
}

SweepRun sweep_run_from_json(const json& j) {
    SweepRun run;
    try {
        run.run_id = j.at("run_id").get<int>();
        run.config_index = j.at("config_index").get<int>();
        run.run_index = j.at("run_index").get<int>();
        run.seed = j.at("seed").get<std::uint64_t>();
        TrainConfig config;
        for (const auto& [k, v] : j.at("config").items()) config.set(k, v.get<std::string>());
        config.check();
        run.config = config;
        run.failed = j.at("status").get<std::string>() == "failed";
        if (run.failed) run.error = j.value("error", "");
        run.metrics = j.at("metrics").get<std::map<std::string, double>>();
        run.model_path = j.value("model_path", "");
    } catch (const json::exception& e) {
        throw InputError(std::string("malformed sweep log row: ") + e.what());
    } catch (const ConfigError& e) {
        throw InputError(std::string("malformed sweep log config: ") + e.what());
    }
    return run;
}

SweepLog read_sweep_log(const std::string& path) {
    SweepLog log;
    if (!std::filesystem::exists(path)) return log;
    std::string text = read_file(path);
    auto lines = split(text, '\n');
    const bool complete = !text.empty() && text.back() == '\n';
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (trim(lines[i]).empty()) continue;
        const bool last = i + 1 == lines.size();
        try {
            log.push_back(sweep_run_from_json(json::parse(lines[i])));
        } catch (const std::exception& e) {
            if (last && !complete) break;  // cut short by an interruption
            throw InputError(path + ":" + std::to_string(i + 1) + ": " + e.what());
        }
    }
    return log;
}

// --- running --------------------------------------------------------------

RunFunction default_run_function(std::string model_dir) {
    return [model_dir](const TrainConfig& config, const SplitSet& splits, int run_id) {
        TrainedModel model = train(config, splits);
        std::vector<std::vector<std::string>> forms;
        for (const auto& s : splits.dev) forms.push_back(s.forms());
        std::vector<std::string> pred;
        for (auto& s : predict_labels(model, forms)) {
            for (auto& l : s) pred.push_back(std::move(l));
        }
        auto classes = eval::classify_tokens(splits.train, splits.dev);
        RunResult result;
        result.metrics = eval::score(task_column(splits.dev, config.task), pred, classes).flatten();
        if (!model_dir.empty()) {
            std::filesystem::create_directories(model_dir);
            auto path = std::filesystem::path(model_dir) / ("run_" + std::to_string(run_id) + ".model");
            save_model(model, path.string());
            result.model_path = path.string();
        }
        return result;
    };
}

SweepLog run_sweep(const SweepGrid& grid, const SplitSet& splits, const SweepOptions& options) {
    const auto configs = generate_grid(grid);
    if (options.workers < 1) throw ConfigError("workers must be >= 1");
    if (options.log_path.empty()) throw ConfigError("sweep needs a log path");

    SweepLog log = read_sweep_log(options.log_path);
    const int runs = grid.runs_per_config;
    const int total = static_cast<int>(configs.size()) * runs;
    std::set<int> done;
    for (const auto& row : log) {
        bool fits = row.run_id >= 0 && row.run_id < total && row.run_index >= 0 && row.run_index < runs &&
                    row.run_id == row.config_index * runs + row.run_index;
        if (fits) {
            TrainConfig expected = configs[static_cast<std::size_t>(row.config_index)];
            expected.seed = row.seed;
            fits = row.config == expected;
        }
        if (!fits) throw ConfigError("sweep log " + options.log_path + " does not belong to this grid");
        done.insert(row.run_id);
    }
    {
        // Rewrite without a torn trailing line before appending.
        std::string clean;
        for (const auto& row : log) clean += to_json(row).dump() + "\n";
        if (!log.empty() || std::filesystem::exists(options.log_path)) write_file(options.log_path, clean);
    }

    std::vector<int> pending;
    for (int id = 0; id < total; ++id) {
        if (!done.count(id)) pending.push_back(id);
    }
    if (options.max_new_runs && static_cast<int>(pending.size()) > *options.max_new_runs) {
        pending.resize(static_cast<std::size_t>(std::max(0, *options.max_new_runs)));
    }

    RunFunction run_fn = options.run ? options.run : default_run_function("");
    std::vector<std::optional<SweepRun>> results(pending.size());
    std::mutex mu;
    std::size_t next_commit = 0;
    std::atomic<std::size_t> next_job{0};
    std::ofstream out(options.log_path, std::ios::app | std::ios::binary);
    if (!out) throw RuntimeFailure("cannot open sweep log " + options.log_path);

    auto worker = [&] {
        for (;;) {
            std::size_t k = next_job.fetch_add(1);
            if (k >= pending.size()) return;
            SweepRun row;
            row.run_id = pending[k];
            row.config_index = row.run_id / runs;
            row.run_index = row.run_id % runs;
            row.seed = mix_seed(grid.base.seed, static_cast<std::uint64_t>(row.config_index),
                                static_cast<std::uint64_t>(row.run_index));
            row.config = configs[static_cast<std::size_t>(row.config_index)];
            row.config.seed = row.seed;
            try {
                RunResult r = run_fn(row.config, splits, row.run_id);
                row.metrics = std::move(r.metrics);
                row.model_path = std::move(r.model_path);
            } catch (const std::exception& e) {
                row.failed = true;
                row.error = e.what();
                row.metrics.clear();
            }
            std::lock_guard<std::mutex> lock(mu);
            results[k] = std::move(row);
            while (next_commit < results.size() && results[next_commit]) {
                out << to_json(*results[next_commit]).dump() << "\n";
                out.flush();
                ++next_commit;
            }
        }
    };

    const int n = std::min<int>(options.workers, static_cast<int>(pending.size()));
    if (n <= 1) {
        worker();
    } else {
        std::vector<std::thread> threads;
        for (int i = 0; i < n; ++i) threads.emplace_back(worker);
        for (auto& t : threads) t.join();
    }
    out.close();
    return read_sweep_log(options.log_path);
}

// --- ranking --------------------------------------------------------------

std::set<std::string> RankingPolicy::default_exclusions() {
    std::set<std::string> out;
    for (const char* m : {"accuracy", "precision", "recall", "f1"}) out.insert(std::string("unknown_target.") + m);
    return out;
}

RankingPolicy RankingPolicy::for_task(TaskId task) {
    RankingPolicy p;
    p.target_metric = task == TaskId::LEMMA ? "all.precision" : "all.accuracy";
    return p;
}

std::vector<double> fractional_ranks(const std::vector<double>& values) {
    std::vector<double> ranks(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        std::size_t better = 0, equal = 0;
        for (double v : values) {
            if (v > values[i]) ++better;
            else if (v == values[i]) ++equal;
        }
        ranks[i] = static_cast<double>(better) + (static_cast<double>(equal) + 1.0) / 2.0;
    }
    return ranks;
}

RankResult rank_models(const SweepLog& log, const RankingPolicy& policy) {
    std::vector<const SweepRun*> ok;
    for (const auto& r : log) {
        if (!r.failed) ok.push_back(&r);
    }
    if (ok.empty()) throw RuntimeFailure("no successful run to rank");

    RankResult result;
    for (const auto& [name, v] : ok.front()->metrics) {
        if (policy.excluded.count(name)) continue;
        bool everywhere = std::all_of(ok.begin(), ok.end(), [&](const SweepRun* r) { return r->metrics.count(name) > 0; });
        if (everywhere) result.metrics.push_back(name);
    }
    if (result.metrics.empty()) throw ConfigError("ranking policy leaves no metric");

    for (const auto* r : ok) result.rank_sums[r->run_id] = 0.0;
    for (const auto& name : result.metrics) {
        std::vector<double> values;
        for (const auto* r : ok) values.push_back(r->metrics.at(name));
        auto ranks = fractional_ranks(values);
        for (std::size_t i = 0; i < ok.size(); ++i) result.rank_sums[ok[i]->run_id] += ranks[i];
    }

    auto target = [&](const SweepRun* r) {
        auto it = r->metrics.find(policy.target_metric);
        return it == r->metrics.end() ? 0.0 : it->second;
    };
    const SweepRun* best = nullptr;
    for (const auto* r : ok) {
        if (!best) {
            best = r;
            continue;
        }
        double a = result.rank_sums[r->run_id], b = result.rank_sums[best->run_id];
        if (a < b || (a == b && (target(r) > target(best) || (target(r) == target(best) && r->run_id < best->run_id)))) {
            best = r;
        }
    }
    result.selected = best->run_id;
    return result;
}

}  // namespace histag
