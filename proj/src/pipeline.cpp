#include "histag/pipeline.hpp"

#include <algorithm>

namespace histag {

using nlohmann::json;

std::set<std::string> parse_tables(std::string_view text) {
    std::set<std::string> out;
    for (const auto& part : split(text, ',')) {
        std::string name(trim(part));
        if (name.empty()) continue;
        if (name == "all") {
            out.insert(kReportTables.begin(), kReportTables.end());
        } else if (std::find(kReportTables.begin(), kReportTables.end(), name) != kReportTables.end()) {
            out.insert(name);
        } else {
            throw ConfigError("unknown report table '" + name + "'");
        }
    }
    if (out.empty()) throw ConfigError("no report table selected");
    return out;
}

void check_aligned(const std::vector<Sentence>& gold, const std::vector<Sentence>& pred) {
    if (gold.size() != pred.size()) {
        throw InputError("gold has " + std::to_string(gold.size()) + " sentences, prediction has " +
                         std::to_string(pred.size()));
    }
    for (std::size_t s = 0; s < gold.size(); ++s) {
        if (gold[s].forms() != pred[s].forms()) {
            throw InputError("gold and prediction differ in the forms of sentence " + std::to_string(s + 1));
        }
    }
}

namespace {

eval::Column column(const std::vector<Sentence>& sentences, const std::string& name) {
    eval::Column out;
    for (const auto& s : sentences) {
        for (const auto& t : s.tokens) {
            if (name == "lemma") out.push_back(t.lemma);
            else if (name == "pos") out.push_back(t.pos);
            else if (name == "morph") out.push_back(t.morph_is_empty() ? std::string(kEmptyMorph) : t.morph);
            else out.push_back(t.lemma + "\t" + t.pos);
        }
    }
    return out;
}

}  // namespace

std::map<std::string, std::string> evaluation_reports(const std::vector<Sentence>& gold,
                                                      const std::vector<Sentence>& pred,
                                                      const ReportOptions& options) {
    check_aligned(gold, pred);
    std::map<std::string, std::string> files;
    json all = json::object();
    const auto& t = options.tables;
    const auto gold_lemma = column(gold, "lemma"), pred_lemma = column(pred, "lemma");
    const auto gold_pos = column(gold, "pos"), pred_pos = column(pred, "pos");

    if (t.count("metrics")) {
        auto classes = eval::classify_tokens(options.train.value_or(std::vector<Sentence>{}), gold);
        std::map<std::string, eval::MetricsTable> tables;
        json j = json::object();
        for (const std::string name : {"lemma", "pos", "morph", "lemma+pos"}) {
            tables[name] = eval::score(column(gold, name), column(pred, name), classes);
            j[name] = eval::to_json(tables[name]);
        }
        files["metrics.tsv"] = eval::render_metrics_tsv(tables);
        all["metrics"] = j;
    }
    if (t.count("confusion-lemma")) {
        auto c = eval::confusion(gold_lemma, pred_lemma, options.lemma_threshold, eval::ThresholdMode::gt);
        files["confusion_lemma.tsv"] = eval::render_confusion_tsv(c);
        all["confusion_lemma"] = eval::to_json(c);
    }
    if (t.count("confusion-pos")) {
        auto c = eval::confusion(gold_pos, pred_pos, options.pos_threshold, eval::ThresholdMode::ge);
        files["confusion_pos.tsv"] = eval::render_confusion_tsv(c);
        all["confusion_pos"] = eval::to_json(c);
    }
    if (t.count("per-pos")) {
        auto r = eval::per_pos_report(gold_pos, pred_pos);
        files["per_pos.tsv"] = eval::render_per_pos_tsv(r, options.min_support);
        all["per_pos"] = eval::to_json(r);
    }
    if (t.count("lemma-by-pos")) {
        auto r = eval::lemma_by_pos_report(gold_lemma, pred_lemma, gold_pos);
        files["lemma_by_pos.tsv"] = eval::render_lemma_by_pos_tsv(r, options.min_support);
        all["lemma_by_pos"] = eval::to_json(r);
    }
    if (t.count("sentences")) {
        auto h = eval::sentence_scores(gold, pred, options.sentence_columns);
        files["sentence_scores.tsv"] = eval::render_sentence_scores_tsv(h);
        all["sentence_scores"] = eval::to_json(h);
    }
    if (t.count("que")) {
        auto rows = eval::que_cross_report(gold_lemma, gold_pos, pred_pos, pred_lemma);
        files["que.tsv"] = eval::render_que_tsv(rows);
        all["que"] = eval::to_json(rows);
    }
    if (t.count("concentration")) {
        all["concentration"] = eval::to_json(eval::error_concentration(gold_lemma, pred_lemma, options.concentration_lemmas));
    }
    files["reports.json"] = all.dump(2) + "\n";
    return files;
}

}  // namespace histag
