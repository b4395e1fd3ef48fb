// histag: command-line front end for every pipeline stage.
//
// Exit codes: 0 success, 2 bad input, 3 configuration error, 4 runtime failure.

#include <algorithm>
#include <csignal>
#include <filesystem>
#include <iostream>
#include <map>
#include <set>

#include <CLI11.hpp>

#include "histag/corpus.hpp"
#include "histag/evaluation.hpp"
#include "histag/pipeline.hpp"
#include "histag/preprocess.hpp"
#include "histag/service.hpp"
#include "histag/sweep.hpp"
#include "histag/tagger.hpp"

namespace fs = std::filesystem;
using namespace histag;

namespace {

constexpr int kExitInput = 2;
constexpr int kExitConfig = 3;
constexpr int kExitRuntime = 4;

std::vector<Sentence> read_sentences(const std::vector<std::string>& paths) {
    std::vector<Sentence> out;
    for (const auto& p : paths) {
        Document doc = read_corpus(p);
        for (auto& s : doc.sentences) out.push_back(std::move(s));
    }
    return out;
}

void write_sentences(const std::string& path, std::vector<Sentence> sentences, bool header = false) {
    Document doc;
    doc.has_header = header;
    doc.sentences = std::move(sentences);
    write_file(path, write_tsv(doc));
}

SegmentMode parse_segment(const std::string& s) {
    if (s == "punctuation") return SegmentMode::punctuation;
    if (s == "line") return SegmentMode::line;
    throw ConfigError("segment must be punctuation or line, got '" + s + "'");
}

void ensure_dir(const std::string& dir) {
    if (!dir.empty()) fs::create_directories(dir);
}

std::string join_path(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

/// Reads key=value lines of a pipeline config file.
std::vector<std::pair<std::string, std::string>> read_config_file(const std::string& path) {
    if (!fs::exists(path)) throw ConfigError("config file not found: " + path);
    std::vector<std::pair<std::string, std::string>> out;
    int n = 0;
    for (const auto& raw : split(read_file(path), '\n')) {
        ++n;
        auto line = trim(raw);
        if (line.empty() || line.front() == '#' || line.front() == '[') continue;
        auto eq = line.find('=');
        if (eq == std::string_view::npos) throw ConfigError(path + ":" + std::to_string(n) + ": expected key=value");
        out.emplace_back(std::string(trim(line.substr(0, eq))), std::string(trim(line.substr(eq + 1))));
    }
    return out;
}

/// Expands --config FILE into flags placed before the user's own, skipping
/// keys the user already set and keys the subcommand does not know.
std::vector<std::string> expand_config(CLI::App& app, std::vector<std::string> args) {
    if (args.empty()) return args;
    CLI::App* sub = app.get_subcommand_no_throw(args.front());
    if (!sub) return args;
    std::string config_path;
    std::set<std::string> given;
    std::vector<std::string> rest{args.front()};
    for (std::size_t i = 1; i < args.size(); ++i) {
        const std::string& a = args[i];
        if (a == "--config" && i + 1 < args.size()) {
            config_path = args[++i];
            continue;
        }
        if (starts_with(a, "--config=")) {
            config_path = a.substr(9);
            continue;
        }
        if (starts_with(a, "--")) given.insert(a.substr(2, a.find('=') == std::string::npos ? std::string::npos : a.find('=') - 2));
        rest.push_back(a);
    }
    if (config_path.empty()) return rest;
    std::vector<std::string> out{rest.front()};
    for (const auto& [key, value] : read_config_file(config_path)) {
        if (given.count(key) || !sub->get_option_no_throw("--" + key)) continue;
        out.push_back("--" + key + "=" + value);
    }
    out.insert(out.end(), rest.begin() + 1, rest.end());
    return out;
}

void add_train_options(CLI::App* c, TrainConfig& cfg) {
    c->add_option("--cemb_size", cfg.cemb_size, "Character embedding and encoder width")->capture_default_str();
    c->add_option("--cemb_layers", cfg.cemb_layers, "Character encoder layers (1 or 2)")->capture_default_str();
    c->add_option("--hidden_size", cfg.hidden_size, "Sentence encoder width")->capture_default_str();
    c->add_option("--dropout", cfg.dropout, "Dropout rate")->capture_default_str();
    c->add_option("--learning_rate", cfg.learning_rate, "Initial learning rate")->capture_default_str();
    c->add_option("--lr_patience", cfg.lr_patience, "Epochs without improvement before decay")->capture_default_str();
    c->add_option("--lr_decay", cfg.lr_decay, "Learning-rate decay factor")->capture_default_str();
    c->add_option("--early_stop_patience", cfg.early_stop_patience, "Epochs without improvement before stopping")
        ->capture_default_str();
    c->add_option("--max_epochs", cfg.max_epochs, "Epoch limit")->capture_default_str();
    c->add_option("--seed", cfg.seed, "Random seed")->capture_default_str();
    c->add_option("--noise_probability", cfg.noise_probability, "Sentence uppercasing probability")
        ->capture_default_str();
    c->add_option("--batch_size", cfg.batch_size, "Sentences per batch")->capture_default_str();
    c->add_option("--grad_clip", cfg.grad_clip, "Global gradient norm limit")->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Lemmatisation, POS and morphology tagging toolkit for historical languages"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "Show help for every subcommand");

    // ingest
    std::vector<std::string> ingest_in;
    std::string ingest_out;
    auto* ingest = app.add_subcommand("ingest", "Parse corpora and write them in canonical form");
    ingest->add_option("--input", ingest_in, "Corpus TSV files")->required();
    ingest->add_option("--output_dir", ingest_out, "Output directory")->required();

    // validate
    std::vector<std::string> val_in;
    std::string val_lemmas, val_pos, val_morph, val_report;
    auto* validate_cmd = app.add_subcommand("validate", "List unallowed lemmas, POS tags and morph values");
    validate_cmd->add_option("--input", val_in, "Corpus TSV files")->required();
    validate_cmd->add_option("--lemmas", val_lemmas, "Reference lemma list")->required();
    validate_cmd->add_option("--pos", val_pos, "Reference POS list")->required();
    validate_cmd->add_option("--morph", val_morph, "Reference morphology list")->required();
    validate_cmd->add_option("--report_dir", val_report, "Write unallowed.json here");

    // normalize
    std::string norm_in, norm_out;
    auto* normalize = app.add_subcommand("normalize", "Rewrite Roman numeral forms as Arabic digits");
    normalize->add_option("--input", norm_in, "Corpus TSV file")->required();
    normalize->add_option("--output", norm_out, "Output TSV file")->required();

    // split
    std::vector<std::string> split_in;
    std::string split_out, split_ratios = "0.8,0.1,0.1", split_segment = "punctuation";
    std::uint64_t split_seed = 42;
    auto* split_cmd = app.add_subcommand("split", "Segment sentences and split train/dev/test");
    split_cmd->add_option("--input", split_in, "Corpus TSV files")->required();
    split_cmd->add_option("--output_dir", split_out, "Directory for train.tsv, dev.tsv, test.tsv")->required();
    split_cmd->add_option("--seed", split_seed, "Shuffle seed")->capture_default_str();
    split_cmd->add_option("--ratios", split_ratios, "train,dev,test ratios")->capture_default_str();
    split_cmd->add_option("--segment", split_segment, "punctuation or line")->capture_default_str();

    // train
    TrainConfig train_cfg;
    std::string train_task = "POS", train_train, train_dev, train_out, train_metric, train_report;
    auto* train_cmd = app.add_subcommand("train", "Train one task model");
    train_cmd->add_option("--task", train_task, "LEMMA, POS or a morph category")->capture_default_str();
    train_cmd->add_option("--train", train_train, "Training TSV")->required();
    train_cmd->add_option("--dev", train_dev, "Dev TSV")->required();
    train_cmd->add_option("--output", train_out, "Model file")->required();
    train_cmd->add_option("--target_metric", train_metric, "accuracy, precision, recall or f1 (task default)");
    train_cmd->add_option("--report_dir", train_report, "Write the epoch log here");
    add_train_options(train_cmd, train_cfg);

    // sweep
    std::string sweep_task = "POS", sweep_train, sweep_dev, sweep_log, sweep_models, sweep_grid, sweep_report;
    int sweep_runs = 5, sweep_workers = 1;
    std::optional<int> sweep_limit;
    std::uint64_t sweep_seed = 1;
    bool sweep_dry = false;
    auto* sweep_cmd = app.add_subcommand("sweep", "Grid sweep with repeated runs and rank-sum selection");
    sweep_cmd->add_option("--task", sweep_task, "Task to sweep")->capture_default_str();
    sweep_cmd->add_option("--runs", sweep_runs, "Runs per configuration")->capture_default_str();
    sweep_cmd->add_option("--train", sweep_train, "Training TSV");
    sweep_cmd->add_option("--dev", sweep_dev, "Dev TSV");
    sweep_cmd->add_option("--log", sweep_log, "Sweep log (JSON lines, resumable)");
    sweep_cmd->add_option("--model_dir", sweep_models, "Directory for run models");
    sweep_cmd->add_option("--grid", sweep_grid, "Grid override file (key=value)");
    sweep_cmd->add_option("--workers", sweep_workers, "Parallel runs")->capture_default_str();
    sweep_cmd->add_option("--max_new_runs", sweep_limit, "Stop after this many new runs");
    sweep_cmd->add_option("--seed", sweep_seed, "Base seed")->capture_default_str();
    sweep_cmd->add_option("--report_dir", sweep_report, "Write ranking.tsv here");
    sweep_cmd->add_flag("--dry_run", sweep_dry, "Print the configurations without training");

    // tag
    std::string tag_models, tag_in, tag_out, tag_format = "tsv";
    auto* tag_cmd = app.add_subcommand("tag", "Annotate tokens with a model set");
    tag_cmd->add_option("--models", tag_models, "Directory of <task>.model files")->required();
    tag_cmd->add_option("--input", tag_in, "Tokens: one per line or TSV, blank line between sentences")->required();
    tag_cmd->add_option("--output", tag_out, "Output file (stdout when absent)");
    tag_cmd->add_option("--format", tag_format, "tsv or json")->capture_default_str();

    // eval
    std::string eval_gold, eval_pred, eval_train, eval_tables = "all", eval_report, eval_columns = "LEMMA";
    ReportOptions eval_opts;
    auto* eval_cmd = app.add_subcommand("eval", "Evaluation reports");
    eval_cmd->add_option("--gold", eval_gold, "Gold TSV")->required();
    eval_cmd->add_option("--pred", eval_pred, "Predicted TSV")->required();
    eval_cmd->add_option("--train", eval_train, "Training TSV for known/unknown/ambiguous classes");
    eval_cmd->add_option("--tables", eval_tables, "all or a comma list of report names")->capture_default_str();
    eval_cmd->add_option("--lemma_threshold", eval_opts.lemma_threshold, "Lemma confusion keeps counts > N")
        ->capture_default_str();
    eval_cmd->add_option("--pos_threshold", eval_opts.pos_threshold, "POS confusion keeps counts >= N")
        ->capture_default_str();
    eval_cmd->add_option("--min_support", eval_opts.min_support, "Hide labels with less support")
        ->capture_default_str();
    eval_cmd->add_option("--sentence_columns", eval_columns, "Columns that must all match in sentence scores")
        ->capture_default_str();
    eval_cmd->add_option("--report_dir", eval_report, "Write the reports here");

    // posttreat
    std::string post_in, post_out, post_rules;
    auto* post_cmd = app.add_subcommand("posttreat", "Rewrite homograph lemmas from the predicted POS");
    post_cmd->add_option("--input", post_in, "Predicted TSV")->required();
    post_cmd->add_option("--output", post_out, "Output TSV")->required();
    post_cmd->add_option("--rules", post_rules, "Rule file (default: que rules)");

    // serve
    std::string serve_host = "127.0.0.1", serve_corpora, serve_models, serve_lemmas, serve_pos, serve_morph;
    int serve_port = 8080;
    auto* serve_cmd = app.add_subcommand("serve", "HTTP service for tagging and post-correction");
    serve_cmd->add_option("--host", serve_host, "Bind address")->envname("HISTAG_HOST")->capture_default_str();
    serve_cmd->add_option("--port", serve_port, "Port")->envname("HISTAG_PORT")->capture_default_str();
    serve_cmd->add_option("--corpus_dir", serve_corpora, "Corpus directory")->envname("HISTAG_CORPUS_DIR");
    serve_cmd->add_option("--model_dir", serve_models, "Model directory")->envname("HISTAG_MODEL_DIR");
    serve_cmd->add_option("--lemmas", serve_lemmas, "Reference lemma list")->envname("HISTAG_LEMMAS");
    serve_cmd->add_option("--pos", serve_pos, "Reference POS list")->envname("HISTAG_POS");
    serve_cmd->add_option("--morph", serve_morph, "Reference morphology list")->envname("HISTAG_MORPH");

    std::string config_file;
    for (auto* sub : {ingest, validate_cmd, normalize, split_cmd, train_cmd, sweep_cmd, tag_cmd, eval_cmd, post_cmd,
                      serve_cmd}) {
        sub->add_option("--config", config_file, "Pipeline config file (key=value); flags win");
    }

    std::vector<std::string> args(argv + 1, argv + argc);
    try {
        args = expand_config(app, std::move(args));
        std::reverse(args.begin(), args.end());
        app.parse(args);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    }

    try {
        if (*ingest) {
            ensure_dir(ingest_out);
            for (const auto& p : ingest_in) {
                Document doc = read_corpus(p);
                for (const auto& s : doc.sentences) s.check();
                write_file(join_path(ingest_out, doc.id + ".tsv"), write_tsv(doc));
                std::cout << doc.id << "\t" << doc.sentences.size() << " sentences\t" << doc.token_count()
                          << " tokens\n";
            }
        } else if (*validate_cmd) {
            ReferenceSet refs = load_reference_lists(val_lemmas, val_pos, val_morph);
            nlohmann::json out = nlohmann::json::object();
            for (const auto& p : val_in) {
                Document doc = read_corpus(p);
                ValidationReport r = validate(doc, refs);
                out[doc.id] = to_json(r);
                std::cout << doc.id << "\tlemmas " << r.unallowed_lemmas.size() << "\tpos " << r.unallowed_pos.size()
                          << "\tmorph " << r.unallowed_morph.size() << "\n";
            }
            if (!val_report.empty()) {
                ensure_dir(val_report);
                write_file(join_path(val_report, "unallowed.json"), out.dump(2) + "\n");
            }
        } else if (*normalize) {
            Document doc = normalize_forms(read_corpus(norm_in));
            write_file(norm_out, write_tsv(doc));
            std::cout << "normalized " << doc.token_count() << " tokens\n";
        } else if (*split_cmd) {
            std::vector<Sentence> sentences;
            SegmentMode mode = parse_segment(split_segment);
            for (const auto& p : split_in) {
                for (auto& s : segment_sentences(read_corpus(p), mode)) sentences.push_back(std::move(s));
            }
            SplitSet sets = split_dataset(std::move(sentences), parse_ratios(split_ratios), split_seed);
            ensure_dir(split_out);
            write_sentences(join_path(split_out, "train.tsv"), sets.train);
            write_sentences(join_path(split_out, "dev.tsv"), sets.dev);
            write_sentences(join_path(split_out, "test.tsv"), sets.test);
            std::cout << "train " << sets.train.size() << "\tdev " << sets.dev.size() << "\ttest " << sets.test.size()
                      << "\n";
        } else if (*train_cmd) {
            train_cfg.task = parse_task(train_task);
            train_cfg.target_metric = train_metric.empty()
                                          ? (train_cfg.task == TaskId::LEMMA ? TargetMetric::precision
                                                                             : TargetMetric::accuracy)
                                          : parse_metric(train_metric);
            train_cfg.check();
            SplitSet sets;
            sets.train = read_sentences({train_train});
            sets.dev = read_sentences({train_dev});
            TrainedModel model = train(train_cfg, sets, [](const EpochRecord& r) {
                std::cout << "epoch " << r.epoch << "\tloss " << r.train_loss << "\tdev " << r.dev_metric << "\tlr "
                          << r.learning_rate << std::endl;
            });
            if (auto parent = fs::path(train_out).parent_path(); !parent.empty()) fs::create_directories(parent);
            save_model(model, train_out);
            if (!train_report.empty()) {
                ensure_dir(train_report);
                std::string log = "epoch\ttrain_loss\tdev_metric\tlearning_rate\n";
                for (const auto& r : model.log) {
                    log += std::to_string(r.epoch) + "\t" + std::to_string(r.train_loss) + "\t" +
                           std::to_string(r.dev_metric) + "\t" + std::to_string(r.learning_rate) + "\n";
                }
                write_file(join_path(train_report, "train_log.tsv"), log);
            }
            std::cout << "best epoch " << model.best_epoch << ", saved " << train_out << "\n";
        } else if (*sweep_cmd) {
            SweepGrid grid = default_grid(parse_task(sweep_task));
            grid.runs_per_config = sweep_runs;
            grid.base.seed = sweep_seed;
            if (!sweep_grid.empty()) apply_grid_overrides(grid, read_file(sweep_grid));
            auto configs = generate_grid(grid);
            if (sweep_dry) {
                for (std::size_t i = 0; i < configs.size(); ++i) {
                    std::cout << i << "\tcemb_size=" << configs[i].cemb_size << "\tcemb_layers="
                              << configs[i].cemb_layers << "\thidden_size=" << configs[i].hidden_size << "\n";
                }
                std::cout << configs.size() << " configs x " << grid.runs_per_config << " runs\n";
                return 0;
            }
            if (sweep_train.empty() || sweep_dev.empty() || sweep_log.empty()) {
                throw ConfigError("sweep needs --train, --dev and --log");
            }
            SplitSet sets;
            sets.train = read_sentences({sweep_train});
            sets.dev = read_sentences({sweep_dev});
            SweepOptions opts;
            opts.log_path = sweep_log;
            opts.workers = sweep_workers;
            opts.max_new_runs = sweep_limit;
            opts.run = default_run_function(sweep_models);
            SweepLog log = run_sweep(grid, sets, opts);
            std::size_t failed = std::count_if(log.begin(), log.end(), [](const SweepRun& r) { return r.failed; });
            std::cout << log.size() << " runs logged, " << failed << " failed\n";
            if (log.size() - failed == 0) throw RuntimeFailure("every run failed");
            RankResult rank = rank_models(log, RankingPolicy::for_task(grid.task));
            const SweepRun& best = *std::find_if(log.begin(), log.end(),
                                                 [&](const SweepRun& r) { return r.run_id == rank.selected; });
            std::cout << "selected run " << rank.selected << "\tcemb_size=" << best.config.cemb_size
                      << "\tcemb_layers=" << best.config.cemb_layers << "\thidden_size=" << best.config.hidden_size
                      << "\trank_sum=" << rank.rank_sums.at(rank.selected);
            if (!best.model_path.empty()) std::cout << "\tmodel=" << best.model_path;
            std::cout << "\n";
            if (!sweep_report.empty()) {
                ensure_dir(sweep_report);
                std::string out = "run_id\trank_sum\tselected\n";
                for (const auto& [id, sum] : rank.rank_sums) {
                    out += std::to_string(id) + "\t" + std::to_string(sum) + "\t" + (id == rank.selected ? "1" : "0") +
                           "\n";
                }
                write_file(join_path(sweep_report, "ranking.tsv"), out);
            }
        } else if (*tag_cmd) {
            if (tag_format != "tsv" && tag_format != "json") throw ConfigError("format must be tsv or json");
            ModelSet models = ModelSet::load_dir(tag_models);
            if (models.empty()) throw InputError("no <task>.model files in " + tag_models);
            auto sentences = models.annotate(parse_tag_body(read_file(tag_in)));
            std::string out;
            if (tag_format == "json") {
                nlohmann::json j = nlohmann::json::array();
                for (const auto& s : sentences) {
                    nlohmann::json row = nlohmann::json::array();
                    for (const auto& t : s.tokens) {
                        row.push_back({{"form", t.form}, {"lemma", t.lemma}, {"pos", t.pos}, {"morph", t.morph}});
                    }
                    j.push_back(row);
                }
                out = j.dump(2) + "\n";
            } else {
                Document doc;
                doc.sentences = std::move(sentences);
                out = write_tsv(doc);
            }
            if (tag_out.empty()) {
                std::cout << out;
            } else {
                write_file(tag_out, out);
            }
        } else if (*eval_cmd) {
            eval_opts.tables = parse_tables(eval_tables);
            eval_opts.sentence_columns.clear();
            for (const auto& c : split(eval_columns, ',')) eval_opts.sentence_columns.push_back(parse_task(trim(c)));
            if (!eval_train.empty()) eval_opts.train = read_sentences({eval_train});
            auto files = evaluation_reports(read_sentences({eval_gold}), read_sentences({eval_pred}), eval_opts);
            if (!eval_report.empty()) {
                ensure_dir(eval_report);
                for (const auto& [name, body] : files) write_file(join_path(eval_report, name), body);
            }
            if (files.count("metrics.tsv")) std::cout << files.at("metrics.tsv");
            if (eval_report.empty()) {
                for (const auto& [name, body] : files) {
                    if (name == "metrics.tsv" || name == "reports.json") continue;
                    std::cout << "\n# " << name << "\n" << body;
                }
            }
        } else if (*post_cmd) {
            auto rules = post_rules.empty() ? eval::default_que_rules() : eval::parse_rules(read_file(post_rules));
            Document doc = read_corpus(post_in);
            std::size_t changed = 0;
            auto treated = eval::pos_lemma_posttreatment(doc.sentences, rules);
            for (std::size_t s = 0; s < treated.size(); ++s) {
                for (std::size_t t = 0; t < treated[s].tokens.size(); ++t) {
                    changed += treated[s].tokens[t].lemma != doc.sentences[s].tokens[t].lemma;
                }
            }
            doc.sentences = std::move(treated);
            write_file(post_out, write_tsv(doc));
            std::cout << "rewrote " << changed << " lemmas\n";
        } else if (*serve_cmd) {
            ServiceConfig cfg;
            cfg.corpus_dir = serve_corpora;
            cfg.model_dir = serve_models;
            if (!serve_lemmas.empty() || !serve_pos.empty() || !serve_morph.empty()) {
                if (serve_lemmas.empty() || serve_pos.empty() || serve_morph.empty()) {
                    throw ConfigError("--lemmas, --pos and --morph go together");
                }
                cfg.references = load_reference_lists(serve_lemmas, serve_pos, serve_morph);
            }
            Service service(std::move(cfg));
            HttpServer server(service);
            int port = server.bind(serve_host, serve_port);
            std::cout << "listening on " << serve_host << ":" << port << std::endl;
            server.listen();
        }
    } catch (const InputError& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return kExitInput;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "runtime error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return 0;
}
