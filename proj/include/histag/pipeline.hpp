#pragma once

// Evaluation report bundles shared by the CLI, the bindings and the tests.

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "histag/evaluation.hpp"

namespace histag {

inline const std::vector<std::string> kReportTables = {"metrics",      "confusion-lemma", "confusion-pos",
                                                       "per-pos",      "lemma-by-pos",    "sentences",
                                                       "que",          "concentration"};

/// Parses "all" or a comma list of report table names.
std::set<std::string> parse_tables(std::string_view text);

struct ReportOptions {
    std::set<std::string> tables{kReportTables.begin(), kReportTables.end()};
    /// Lemma confusion keeps cells with count > this value.
    std::size_t lemma_threshold = 10;
    /// POS confusion keeps cells with count >= this value.
    std::size_t pos_threshold = 10;
    /// Per-label reports hide labels with less support.
    std::size_t min_support = 10;
    /// Training split for the token classes; without it every token is unknown.
    std::optional<std::vector<Sentence>> train;
    std::vector<TaskId> sentence_columns{TaskId::LEMMA};
    /// Lemma set used for the error-concentration share.
    std::set<std::string> concentration_lemmas{"que1", "que2", "que3", "que4"};
};

/// Throws InputError unless both sides hold the same sentences of the same
/// forms.
void check_aligned(const std::vector<Sentence>& gold, const std::vector<Sentence>& pred);

/// File name -> contents: one TSV per requested table plus "reports.json".
std::map<std::string, std::string> evaluation_reports(const std::vector<Sentence>& gold,
                                                      const std::vector<Sentence>& pred,
                                                      const ReportOptions& options);

}  // namespace histag
