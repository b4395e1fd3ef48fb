#include "histag/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <unordered_map>
#include <unordered_set>

namespace histag::eval {

namespace {

void require_aligned(const Column& a, const Column& b, const char* what) {
    if (a.size() != b.size()) {
        throw InputError(std::string(what) + ": gold has " + std::to_string(a.size()) +
                         " tokens, prediction has " + std::to_string(b.size()));
    }
}

double ratio(std::size_t num, std::size_t den) {
    return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

double harmonic(double p, double r) { return (p + r) == 0.0 ? 0.0 : 2.0 * p * r / (p + r); }

std::string pct(double fraction) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", fraction * 100.0);
    return buf;
}

std::string fixed(double value, int digits) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.*f", digits, value);
    return buf;
}

}  // namespace

std::vector<TokenClass> classify_tokens(const std::vector<Sentence>& train,
                                        const std::vector<Sentence>& test) {
    std::unordered_map<std::string, std::unordered_set<std::string>> lemmas_of_form;
    std::unordered_set<std::string> train_lemmas;
    for (const auto& s : train) {
        for (const auto& t : s.tokens) {
            lemmas_of_form[t.form].insert(t.lemma);
            train_lemmas.insert(t.lemma);
        }
    }
    std::vector<TokenClass> out;
    for (const auto& s : test) {
        for (const auto& t : s.tokens) {
            TokenClass c;
            auto it = lemmas_of_form.find(t.form);
            c.known = it != lemmas_of_form.end();
            c.ambiguous = c.known && it->second.size() >= 2;
            c.unknown_target = !train_lemmas.count(t.lemma);
            out.push_back(c);
        }
    }
    return out;
}

std::string subset_name(Subset s) {
    switch (s) {
        case Subset::all: return "all";
        case Subset::known: return "known";
        case Subset::unknown: return "unknown";
        case Subset::ambiguous: return "ambiguous";
        case Subset::unknown_target: return "unknown_target";
    }
    return "?";
}

bool in_subset(const TokenClass& c, Subset s) {
    switch (s) {
        case Subset::all: return true;
        case Subset::known: return c.known;
        case Subset::unknown: return !c.known;
        case Subset::ambiguous: return c.ambiguous;
        case Subset::unknown_target: return c.unknown_target;
    }
    return false;
}

std::map<std::string, double> MetricsTable::flatten() const {
    std::map<std::string, double> out;
    for (Subset s : kAllSubsets) {
        const auto& r = (*this)[s];
        std::string p = subset_name(s) + ".";
        out[p + "accuracy"] = r.accuracy;
        out[p + "precision"] = r.precision;
        out[p + "recall"] = r.recall;
        out[p + "f1"] = r.f1;
    }
    return out;
}

MetricRow score_subset(const Column& gold, const Column& pred, const std::vector<char>& mask) {
    require_aligned(gold, pred, "score");
    struct Counts {
        std::size_t gold = 0, predicted = 0, correct = 0;
    };
    std::map<std::string, Counts> per_label;
    MetricRow row;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < gold.size(); ++i) {
        if (!mask.empty() && !mask[i]) continue;
        ++row.support;
        per_label[gold[i]].gold++;
        per_label[pred[i]].predicted++;
        if (gold[i] == pred[i]) {
            ++correct;
            per_label[gold[i]].correct++;
        }
    }
    row.accuracy = ratio(correct, row.support);
    std::size_t classes = 0;
    double p_sum = 0.0, r_sum = 0.0, f_sum = 0.0;
    for (const auto& [label, c] : per_label) {
        if (c.gold == 0) continue;  // predicted-only labels are not averaged
        ++classes;
        double p = ratio(c.correct, c.predicted);
        double r = ratio(c.correct, c.gold);
        p_sum += p;
        r_sum += r;
        f_sum += harmonic(p, r);
    }
    if (classes) {
        row.precision = p_sum / static_cast<double>(classes);
        row.recall = r_sum / static_cast<double>(classes);
        row.f1 = f_sum / static_cast<double>(classes);
    }
    return row;
}

MetricsTable score(const Column& gold, const Column& pred, const std::vector<TokenClass>& classes) {
    require_aligned(gold, pred, "score");
    if (classes.size() != gold.size()) throw InputError("score: token classes are not aligned");
    MetricsTable table;
    for (Subset s : kAllSubsets) {
        std::vector<char> mask(gold.size());
        for (std::size_t i = 0; i < gold.size(); ++i) mask[i] = in_subset(classes[i], s);
        table[s] = score_subset(gold, pred, mask);
    }
    return table;
}

ConfusionTable confusion(const Column& gold, const Column& pred, std::size_t min_count,
                         ThresholdMode mode) {
    require_aligned(gold, pred, "confusion");
    std::map<std::string, std::map<std::string, std::size_t>> cells;
    std::map<std::string, std::size_t> errors;
    for (std::size_t i = 0; i < gold.size(); ++i) {
        if (gold[i] == pred[i]) continue;
        cells[gold[i]][pred[i]]++;
        errors[gold[i]]++;
    }
    ConfusionTable table;
    for (const auto& [label, preds] : cells) {
        ConfusionRow row{label, errors[label], {}};
        for (const auto& [p, n] : preds) {
            bool keep = mode == ThresholdMode::gt ? n > min_count : n >= min_count;
            if (keep) row.predictions.emplace_back(p, n);
        }
        if (row.predictions.empty()) continue;
        std::stable_sort(row.predictions.begin(), row.predictions.end(),
                         [](const auto& a, const auto& b) { return a.second > b.second; });
        table.rows.push_back(std::move(row));
    }
    std::stable_sort(table.rows.begin(), table.rows.end(),
                     [](const ConfusionRow& a, const ConfusionRow& b) { return a.errors > b.errors; });
    return table;
}

ErrorConcentration error_concentration(const Column& gold, const Column& pred,
                                       const std::set<std::string>& lemma_set) {
    require_aligned(gold, pred, "error_concentration");
    ErrorConcentration ec;
    std::map<std::string, std::size_t> per_lemma;
    std::map<std::pair<std::string, std::string>, std::size_t> per_type;
    std::size_t in_set = 0;
    for (std::size_t i = 0; i < gold.size(); ++i) {
        if (gold[i] == pred[i]) continue;
        ++ec.total_errors;
        per_lemma[gold[i]]++;
        per_type[{gold[i], pred[i]}]++;
        if (lemma_set.count(gold[i]) && lemma_set.count(pred[i])) ++in_set;
    }
    std::size_t singleton_types = 0;
    for (const auto& [k, n] : per_type) {
        if (n == 1) ++singleton_types;
    }
    for (const auto& [k, n] : per_lemma) {
        if (n == 1) ++ec.single_error_lemmas;
    }
    ec.set_fraction = ratio(in_set, ec.total_errors);
    ec.single_error_lemma_fraction = ratio(ec.single_error_lemmas, ec.total_errors);
    ec.singleton_error_type_fraction = ratio(singleton_types, ec.total_errors);
    return ec;
}

PerPosReport per_pos_report(const Column& gold, const Column& pred) {
    require_aligned(gold, pred, "per_pos_report");
    std::map<std::string, std::array<std::size_t, 3>> counts;  // gold, predicted, correct
    for (std::size_t i = 0; i < gold.size(); ++i) {
        counts[gold[i]][0]++;
        counts[pred[i]][1]++;
        if (gold[i] == pred[i]) counts[gold[i]][2]++;
    }
    PerPosReport report;
    for (const auto& [label, c] : counts) {
        if (c[0] == 0) continue;
        LabelScore s;
        s.label = label;
        s.precision = ratio(c[2], c[1]);
        s.recall = ratio(c[2], c[0]);
        s.f1 = harmonic(s.precision, s.recall);
        s.support = c[0];
        report.rows.push_back(s);
    }
    return report;
}

std::vector<LabelScore> PerPosReport::rendered(std::size_t min_support) const {
    std::vector<LabelScore> out;
    for (const auto& r : rows) {
        if (r.support >= min_support) out.push_back(r);
    }
    return out;
}

double shannon_diversity(const std::vector<std::size_t>& counts) {
    if (counts.empty()) throw InputError("shannon_diversity: empty distribution");
    double total = 0.0;
    for (auto c : counts) {
        if (c == 0) throw InputError("shannon_diversity: counts must be positive");
        total += static_cast<double>(c);
    }
    double h = 0.0;
    for (auto c : counts) {
        double p = static_cast<double>(c) / total;
        h -= p * std::log(p);
    }
    return h == 0.0 ? 0.0 : h;  // no negative zero
}

LemmaByPosReport lemma_by_pos_report(const Column& gold_lemma, const Column& pred_lemma,
                                     const Column& gold_pos) {
    require_aligned(gold_lemma, pred_lemma, "lemma_by_pos_report");
    require_aligned(gold_lemma, gold_pos, "lemma_by_pos_report");
    struct Acc {
        std::size_t total = 0, correct = 0;
        std::map<std::string, std::size_t> lemmas;
    };
    std::map<std::string, Acc> per_pos;
    for (std::size_t i = 0; i < gold_lemma.size(); ++i) {
        auto& a = per_pos[gold_pos[i]];
        a.total++;
        a.lemmas[gold_lemma[i]]++;
        if (gold_lemma[i] == pred_lemma[i]) a.correct++;
    }
    LemmaByPosReport report;
    for (const auto& [pos, a] : per_pos) {
        std::vector<std::size_t> counts;
        for (const auto& [l, n] : a.lemmas) counts.push_back(n);
        report.rows.push_back({pos, ratio(a.correct, a.total), a.total, shannon_diversity(counts)});
    }
    return report;
}

std::vector<LemmaByPosRow> LemmaByPosReport::rendered(std::size_t min_support) const {
    std::vector<LemmaByPosRow> out;
    for (const auto& r : rows) {
        if (r.frequency >= min_support) out.push_back(r);
    }
    return out;
}

SentenceScoreHistogram sentence_scores(const std::vector<Sentence>& gold,
                                       const std::vector<Sentence>& pred,
                                       const std::vector<TaskId>& columns) {
    if (gold.size() != pred.size()) throw InputError("sentence_scores: sentence counts differ");
    SentenceScoreHistogram hist;
    for (std::size_t s = 0; s < gold.size(); ++s) {
        const auto& g = gold[s].tokens;
        const auto& p = pred[s].tokens;
        if (g.size() != p.size()) {
            throw InputError("sentence_scores: sentence " + std::to_string(s) + " is not aligned");
        }
        std::size_t correct = 0;
        for (std::size_t i = 0; i < g.size(); ++i) {
            bool ok = std::all_of(columns.begin(), columns.end(), [&](TaskId task) {
                return task_label(task, g[i]) == task_label(task, p[i]);
            });
            if (ok) ++correct;
        }
        double score = ratio(correct, g.size());
        hist.scores.push_back(score);
        if (correct == g.size()) {
            hist.bins[0]++;
        } else if (score >= 0.9) {
            hist.bins[1]++;
        } else if (score >= 0.8) {
            hist.bins[2]++;
        } else {
            hist.bins[3]++;
        }
    }
    return hist;
}

std::vector<QueRow> que_cross_report(const Column& gold_lemma, const Column& gold_pos,
                                     const Column& pred_pos, const Column& pred_lemma) {
    require_aligned(gold_lemma, gold_pos, "que_cross_report");
    require_aligned(gold_lemma, pred_pos, "que_cross_report");
    require_aligned(gold_lemma, pred_lemma, "que_cross_report");
    std::vector<QueRow> rows;
    for (const std::string lemma : {"que1", "que2", "que3", "que4"}) {
        std::size_t n = 0, pos_ok = 0, lemma_ok = 0, both = 0, as4 = 0, as2 = 0;
        for (std::size_t i = 0; i < gold_lemma.size(); ++i) {
            if (gold_lemma[i] != lemma) continue;
            ++n;
            bool p = pred_pos[i] == gold_pos[i];
            bool l = pred_lemma[i] == gold_lemma[i];
            pos_ok += p;
            lemma_ok += l;
            both += p && l;
            as4 += pred_lemma[i] == "que4";
            as2 += pred_lemma[i] == "que2";
        }
        if (n == 0) continue;
        rows.push_back({lemma, n, ratio(pos_ok, n), ratio(lemma_ok, n), ratio(both, n), ratio(as4, n),
                        ratio(as2, n)});
    }
    return rows;
}

std::vector<PostRule> default_que_rules() {
    const std::set<std::string> que = {"que1", "que2", "que3", "que4"};
    return {
        {que, "PROrel", "que2", {}},
        {que, "ADVint", "que3", {}},
        {que, "CONsub", "que1", {"ne1", "ne2"}},
        {que, "CONsub", "que4", {}},
        {que, "CONcoo", "que4", {}},
    };
}

std::vector<PostRule> parse_rules(std::string_view text) {
    std::vector<PostRule> rules;
    std::size_t line_no = 0;
    for (const auto& raw : split(text, '\n')) {
        ++line_no;
        auto line = trim(raw);
        if (line.empty() || line.front() == '#') continue;
        auto cols = split(line, '\t');
        if (cols.size() < 3 || cols.size() > 4) {
            throw ParseError(line_no, "rule rows are family<TAB>POS<TAB>target[<TAB>cue]");
        }
        PostRule rule;
        for (const auto& f : split(cols[0], ',')) {
            if (!trim(f).empty()) rule.family.emplace(trim(f));
        }
        rule.pos = std::string(trim(cols[1]));
        rule.target = std::string(trim(cols[2]));
        if (cols.size() == 4) {
            for (const auto& c : split(cols[3], ',')) {
                if (!trim(c).empty()) rule.cue.emplace(trim(c));
            }
        }
        if (rule.family.empty() || rule.pos.empty() || rule.target.empty()) {
            throw ParseError(line_no, "rule has an empty field");
        }
        rules.push_back(std::move(rule));
    }
    return rules;
}

std::vector<Sentence> pos_lemma_posttreatment(const std::vector<Sentence>& pred,
                                              const std::vector<PostRule>& rules) {
    std::vector<Sentence> out = pred;
    for (auto& sentence : out) {
        auto& tokens = sentence.tokens;
        for (std::size_t i = 0; i < tokens.size(); ++i) {
            auto& tok = tokens[i];
            for (const auto& rule : rules) {
                if (!rule.family.count(tok.lemma) || tok.pos != rule.pos) continue;
                if (!rule.cue.empty()) {
                    bool cued = false;
                    for (std::size_t j = 0; j < i && !cued; ++j) cued = rule.cue.count(tokens[j].lemma) > 0;
                    if (!cued) continue;
                }
                tok.lemma = rule.target;
                break;
            }
        }
    }
    return out;
}

// --- rendering ------------------------------------------------------------

std::string render_metrics_tsv(const std::map<std::string, MetricsTable>& tables) {
    std::string out = "task";
    for (Subset s : kAllSubsets) {
        auto n = subset_name(s);
        out += "\t" + n + ".acc\t" + n + ".pre\t" + n + ".rec\t" + n + ".support";
    }
    out += "\n";
    for (const auto& [task, table] : tables) {
        out += task;
        for (Subset s : kAllSubsets) {
            const auto& r = table[s];
            out += "\t" + pct(r.accuracy) + "\t" + pct(r.precision) + "\t" + pct(r.recall) + "\t" +
                   std::to_string(r.support);
        }
        out += "\n";
    }
    return out;
}

std::string render_confusion_tsv(const ConfusionTable& table) {
    std::string out = "gold\terrors\tpredicted\tfrequency\n";
    for (const auto& row : table.rows) {
        for (std::size_t i = 0; i < row.predictions.size(); ++i) {
            if (i == 0) {
                out += row.gold + "\t" + std::to_string(row.errors);
            } else {
                out += "\t";
            }
            out += "\t" + row.predictions[i].first + "\t" + std::to_string(row.predictions[i].second) + "\n";
        }
    }
    return out;
}

std::string render_per_pos_tsv(const PerPosReport& report, std::size_t min_support) {
    std::string out = "pos\tprecision\trecall\tf1\tsupport\n";
    for (const auto& r : report.rendered(min_support)) {
        out += r.label + "\t" + fixed(r.precision, 2) + "\t" + fixed(r.recall, 2) + "\t" +
               fixed(r.f1, 2) + "\t" + std::to_string(r.support) + "\n";
    }
    return out;
}

std::string render_lemma_by_pos_tsv(const LemmaByPosReport& report, std::size_t min_support) {
    std::string out = "pos\tlemma_accuracy\tfrequency\tlemma_sdi\n";
    for (const auto& r : report.rendered(min_support)) {
        out += r.pos + "\t" + pct(r.accuracy) + "\t" + std::to_string(r.frequency) + "\t" +
               fixed(r.diversity, 2) + "\n";
    }
    return out;
}

std::string render_sentence_scores_tsv(const SentenceScoreHistogram& hist) {
    static const char* names[4] = {"==1", "[0.9,1)", "[0.8,0.9)", "<0.8"};
    std::string out = "score\tsentences\n";
    for (std::size_t i = 0; i < 4; ++i) out += std::string(names[i]) + "\t" + std::to_string(hist.bins[i]) + "\n";
    return out;
}

std::string render_que_tsv(const std::vector<QueRow>& rows) {
    std::string out = "gold\tfreq\tpos_acc\tlemma_acc\tcombined_acc\tpred_que4\tpred_que2\n";
    for (const auto& r : rows) {
        out += r.lemma + "\t" + std::to_string(r.frequency) + "\t" + pct(r.pos_accuracy) + "\t" +
               pct(r.lemma_accuracy) + "\t" + pct(r.combined_accuracy) + "\t" + pct(r.predicted_que4) +
               "\t" + pct(r.predicted_que2) + "\n";
    }
    return out;
}

nlohmann::json to_json(const MetricsTable& table) {
    nlohmann::json j = nlohmann::json::object();
    for (Subset s : kAllSubsets) {
        const auto& r = table[s];
        j[subset_name(s)] = {{"accuracy", r.accuracy},
                             {"precision", r.precision},
                             {"recall", r.recall},
                             {"f1", r.f1},
                             {"support", r.support}};
    }
    return j;
}

nlohmann::json to_json(const ConfusionTable& table) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : table.rows) {
        nlohmann::json preds = nlohmann::json::array();
        for (const auto& [p, n] : r.predictions) preds.push_back({{"predicted", p}, {"frequency", n}});
        rows.push_back({{"gold", r.gold}, {"errors", r.errors}, {"predictions", preds}});
    }
    return rows;
}

nlohmann::json to_json(const PerPosReport& report) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : report.rows) {
        rows.push_back({{"pos", r.label},
                        {"precision", r.precision},
                        {"recall", r.recall},
                        {"f1", r.f1},
                        {"support", r.support}});
    }
    return rows;
}

nlohmann::json to_json(const LemmaByPosReport& report) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : report.rows) {
        rows.push_back({{"pos", r.pos},
                        {"lemma_accuracy", r.accuracy},
                        {"frequency", r.frequency},
                        {"lemma_sdi", r.diversity}});
    }
    return rows;
}

nlohmann::json to_json(const SentenceScoreHistogram& hist) {
    return {{"scores", hist.scores},
            {"bins",
             {{"==1", hist.bins[0]}, {"[0.9,1)", hist.bins[1]}, {"[0.8,0.9)", hist.bins[2]}, {"<0.8", hist.bins[3]}}}};
}

nlohmann::json to_json(const std::vector<QueRow>& rows) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& r : rows) {
        out.push_back({{"gold", r.lemma},
                       {"frequency", r.frequency},
                       {"pos_accuracy", r.pos_accuracy},
                       {"lemma_accuracy", r.lemma_accuracy},
                       {"combined_accuracy", r.combined_accuracy},
                       {"predicted_que4", r.predicted_que4},
                       {"predicted_que2", r.predicted_que2}});
    }
    return out;
}

nlohmann::json to_json(const ErrorConcentration& ec) {
    return {{"total_errors", ec.total_errors},
            {"set_fraction", ec.set_fraction},
            {"single_error_lemmas", ec.single_error_lemmas},
            {"single_error_lemma_fraction", ec.single_error_lemma_fraction},
            {"singleton_error_type_fraction", ec.singleton_error_type_fraction}};
}

}  // namespace histag::eval
