#pragma once

// Cell-by-cell comparison of the evaluation reports against the oracles.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "histag/evaluation.hpp"
#include "support/eval_fixture.hpp"

namespace histag::oracle {

struct CheckLog {
    double tolerance = 1e-9;
    std::size_t cells = 0;
    std::vector<std::string> failures;

    void num(const std::string& what, double got, double want) {
        ++cells;
        if (!(std::abs(got - want) <= tolerance)) {
            failures.push_back(what + ": got " + std::to_string(got) + " want " + std::to_string(want));
        }
    }
    void cond(const std::string& what, bool ok) {
        ++cells;
        if (!ok) failures.push_back(what);
    }
};

inline void check_metrics_table(const EvalFixture& f, CheckLog& log) {
    auto gold = flat_column(f.gold, 1), pred = flat_column(f.pred, 1);
    auto classes = eval::classify_tokens(f.train, f.gold);
    auto flags = token_flags(f.train, f.gold);
    log.cond("class count", classes.size() == flags.size());
    for (std::size_t i = 0; i < flags.size() && i < classes.size(); ++i) {
        log.cond("known flag " + std::to_string(i), classes[i].known == flags[i].known);
        log.cond("ambiguous flag " + std::to_string(i), classes[i].ambiguous == flags[i].ambiguous);
        log.cond("unknown_target flag " + std::to_string(i), classes[i].unknown_target == flags[i].unknown_target);
    }
    auto table = eval::score(gold, pred, classes);
    for (auto subset : eval::kAllSubsets) {
        std::vector<bool> sel;
        for (const auto& fl : flags) {
            switch (subset) {
                case eval::Subset::all: sel.push_back(true); break;
                case eval::Subset::known: sel.push_back(fl.known); break;
                case eval::Subset::unknown: sel.push_back(!fl.known); break;
                case eval::Subset::ambiguous: sel.push_back(fl.ambiguous); break;
                case eval::Subset::unknown_target: sel.push_back(fl.unknown_target); break;
            }
        }
        auto want = metrics(gold, pred, sel);
        const auto& got = table[subset];
        auto name = eval::subset_name(subset);
        log.num(name + ".accuracy", got.accuracy, want.accuracy);
        log.num(name + ".precision", got.precision, want.precision);
        log.num(name + ".recall", got.recall, want.recall);
        log.num(name + ".f1", got.f1, want.f1);
        log.cond(name + ".support", got.support == want.support);
    }
}

inline void check_confusion(const std::vector<std::string>& gold, const std::vector<std::string>& pred,
                            CheckLog& log) {
    auto table = eval::confusion(gold, pred, 0, eval::ThresholdMode::ge);
    auto want = confusion_cells(gold, pred);
    log.cond("confusion row count", table.rows.size() == want.size());
    std::size_t prev = SIZE_MAX;
    for (const auto& row : table.rows) {
        log.cond("confusion rows sorted", row.errors <= prev);
        prev = row.errors;
        auto it = want.find(row.gold);
        if (it == want.end()) {
            log.cond("unexpected confusion row " + row.gold, false);
            continue;
        }
        log.cond("errors for " + row.gold, row.errors == it->second.first);
        std::size_t sum = 0;
        std::map<std::string, std::size_t> got;
        for (const auto& [p, n] : row.predictions) {
            got[p] = n;
            sum += n;
        }
        log.cond("cells for " + row.gold, got == it->second.second);
        log.cond("row sum for " + row.gold, sum == row.errors);
    }
}

inline void check_per_pos(const std::vector<std::string>& gold, const std::vector<std::string>& pred, CheckLog& log) {
    auto report = eval::per_pos_report(gold, pred);
    auto want = per_label(gold, pred);
    log.cond("per-pos row count", report.rows.size() == want.size());
    for (const auto& row : report.rows) {
        auto it = want.find(row.label);
        if (it == want.end()) {
            log.cond("unexpected per-pos row " + row.label, false);
            continue;
        }
        log.num(row.label + ".precision", row.precision, it->second.precision);
        log.num(row.label + ".recall", row.recall, it->second.recall);
        log.num(row.label + ".f1", row.f1, it->second.f1);
        log.cond(row.label + ".support", row.support == it->second.support);
    }
}

inline void check_lemma_by_pos(const EvalFixture& f, CheckLog& log) {
    auto gl = flat_column(f.gold, 1), pl = flat_column(f.pred, 1), gp = flat_column(f.gold, 2);
    auto report = eval::lemma_by_pos_report(gl, pl, gp);
    auto want = lemma_by_pos(gl, pl, gp);
    log.cond("lemma-by-pos row count", report.rows.size() == want.size());
    for (const auto& row : report.rows) {
        auto it = want.find(row.pos);
        if (it == want.end()) {
            log.cond("unexpected lemma-by-pos row " + row.pos, false);
            continue;
        }
        log.num(row.pos + ".accuracy", row.accuracy, it->second.accuracy);
        log.cond(row.pos + ".frequency", row.frequency == it->second.frequency);
        log.num(row.pos + ".sdi", row.diversity, it->second.diversity);
    }
}

inline void check_sentence_scores(const EvalFixture& f, CheckLog& log) {
    for (bool with_pos : {false, true}) {
        std::vector<TaskId> cols{TaskId::LEMMA};
        if (with_pos) cols.push_back(TaskId::POS);
        auto hist = eval::sentence_scores(f.gold, f.pred, cols);
        auto want = sentence_fractions(f.gold, f.pred, with_pos);
        log.cond("sentence count", hist.scores.size() == want.size());
        std::array<std::size_t, 4> bins{};
        for (std::size_t s = 0; s < want.size() && s < hist.scores.size(); ++s) {
            log.num("sentence " + std::to_string(s), hist.scores[s], want[s]);
            double v = want[s];
            bins[v == 1.0 ? 0 : v >= 0.9 ? 1 : v >= 0.8 ? 2 : 3]++;
        }
        log.cond("sentence bins", hist.bins == bins);
    }
}

/// Runs every report over the fixture. Also returns the largest deviation of
/// the weighted-accuracy identity through `identity_error`.
inline CheckLog check_eval_fixture(const EvalFixture& f, double& identity_error) {
    CheckLog log;
    check_metrics_table(f, log);
    check_confusion(flat_column(f.gold, 1), flat_column(f.pred, 1), log);
    check_confusion(flat_column(f.gold, 2), flat_column(f.pred, 2), log);
    check_per_pos(flat_column(f.gold, 2), flat_column(f.pred, 2), log);
    check_lemma_by_pos(f, log);
    check_sentence_scores(f, log);

    identity_error = 0.0;
    for (int column : {1, 2}) {
        auto table = eval::score(flat_column(f.gold, column), flat_column(f.pred, column),
                                 eval::classify_tokens(f.train, f.gold));
        const auto& k = table[eval::Subset::known];
        const auto& u = table[eval::Subset::unknown];
        const auto& a = table[eval::Subset::all];
        double weighted = (k.accuracy * double(k.support) + u.accuracy * double(u.support)) / double(a.support);
        identity_error = std::max(identity_error, std::abs(weighted - a.accuracy));
        log.cond("known + unknown support", k.support + u.support == a.support);
    }
    return log;
}

}  // namespace histag::oracle
