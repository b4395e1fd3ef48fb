#pragma once

// Accuracy, confusion and breakdown reports for predicted annotations.
//
// Gold and predicted columns are always aligned token-for-token. Fractions
// are stored in [0, 1]; the TSV renderers print percentages.

#include <array>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "histag/corpus.hpp"
#include "histag/task.hpp"

namespace histag::eval {

using Column = std::vector<std::string>;

// --- token classes --------------------------------------------------------

struct TokenClass {
    bool known = false;
    bool ambiguous = false;
    bool unknown_target = false;

    bool unknown() const { return !known; }
};

/// known: form attested in train; ambiguous: train maps the form to two or
/// more distinct lemmas; unknown_target: gold lemma never seen in train.
std::vector<TokenClass> classify_tokens(const std::vector<Sentence>& train,
                                        const std::vector<Sentence>& test);

enum class Subset { all, known, unknown, ambiguous, unknown_target };
inline constexpr std::array<Subset, 5> kAllSubsets = {Subset::all, Subset::known, Subset::unknown,
                                                      Subset::ambiguous, Subset::unknown_target};
std::string subset_name(Subset s);
bool in_subset(const TokenClass& c, Subset s);

// --- metrics --------------------------------------------------------------

struct MetricRow {
    double accuracy = 0.0;   // micro
    double precision = 0.0;  // macro over gold classes present in the subset
    double recall = 0.0;     // macro
    double f1 = 0.0;         // macro mean of per-class F1
    std::size_t support = 0;
};

struct MetricsTable {
    std::array<MetricRow, 5> rows;

    const MetricRow& operator[](Subset s) const { return rows[static_cast<std::size_t>(s)]; }
    MetricRow& operator[](Subset s) { return rows[static_cast<std::size_t>(s)]; }

    /// Flat "subset.metric" -> value map used by sweep logs.
    std::map<std::string, double> flatten() const;
};

/// Metrics over the tokens where `mask` is set (all tokens when empty).
MetricRow score_subset(const Column& gold, const Column& pred, const std::vector<char>& mask = {});

MetricsTable score(const Column& gold, const Column& pred, const std::vector<TokenClass>& classes);

// --- confusion ------------------------------------------------------------

enum class ThresholdMode { gt, ge };

struct ConfusionRow {
    std::string gold;
    std::size_t errors = 0;
    std::vector<std::pair<std::string, std::size_t>> predictions;
};

struct ConfusionTable {
    std::vector<ConfusionRow> rows;
};

/// Error cells only. A cell is kept when its count is > (gt) or >= (ge)
/// `min_count`; rows without kept cells are dropped. Rows are sorted by
/// error count, descending.
ConfusionTable confusion(const Column& gold, const Column& pred, std::size_t min_count,
                         ThresholdMode mode);

struct ErrorConcentration {
    std::size_t total_errors = 0;
    /// Errors whose gold and predicted lemma both lie in the given set.
    double set_fraction = 0.0;
    /// Gold lemmas with exactly one error.
    std::size_t single_error_lemmas = 0;
    double single_error_lemma_fraction = 0.0;
    /// Errors whose (gold, predicted) pair occurs exactly once.
    double singleton_error_type_fraction = 0.0;
};

ErrorConcentration error_concentration(const Column& gold, const Column& pred,
                                       const std::set<std::string>& lemma_set);

// --- per-label breakdowns -------------------------------------------------

struct LabelScore {
    std::string label;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::size_t support = 0;
};

struct PerPosReport {
    std::vector<LabelScore> rows;  // every gold label, sorted by label
    std::vector<LabelScore> rendered(std::size_t min_support = 10) const;
};

PerPosReport per_pos_report(const Column& gold, const Column& pred);

/// H = -sum p_i ln p_i over the normalized counts. Throws on empty input or
/// non-positive counts.
double shannon_diversity(const std::vector<std::size_t>& counts);

struct LemmaByPosRow {
    std::string pos;
    double accuracy = 0.0;
    std::size_t frequency = 0;
    double diversity = 0.0;
};

struct LemmaByPosReport {
    std::vector<LemmaByPosRow> rows;
    std::vector<LemmaByPosRow> rendered(std::size_t min_support = 10) const;
};

LemmaByPosReport lemma_by_pos_report(const Column& gold_lemma, const Column& pred_lemma,
                                     const Column& gold_pos);

// --- sentence scores ------------------------------------------------------

struct SentenceScoreHistogram {
    std::vector<double> scores;
    /// Bins: == 1, [0.9, 1), [0.8, 0.9), < 0.8.
    std::array<std::size_t, 4> bins{};
};

/// Fraction of correctly predicted words per sentence. A word is correct when
/// every column in `columns` matches.
SentenceScoreHistogram sentence_scores(const std::vector<Sentence>& gold,
                                       const std::vector<Sentence>& pred,
                                       const std::vector<TaskId>& columns = {TaskId::LEMMA});

// --- que homographs and post-treatment ------------------------------------

struct QueRow {
    std::string lemma;
    std::size_t frequency = 0;
    double pos_accuracy = 0.0;
    double lemma_accuracy = 0.0;
    double combined_accuracy = 0.0;
    double predicted_que4 = 0.0;
    double predicted_que2 = 0.0;
};

std::vector<QueRow> que_cross_report(const Column& gold_lemma, const Column& gold_pos,
                                     const Column& pred_pos, const Column& pred_lemma);

/// Rewrites a predicted lemma of `family` to `target` when the predicted POS
/// equals `pos`. With a non-empty `cue`, the rule only fires if one of the cue
/// lemmas is predicted earlier in the same sentence.
struct PostRule {
    std::set<std::string> family;
    std::string pos;
    std::string target;
    std::set<std::string> cue;
};

std::vector<PostRule> default_que_rules();
/// Tab-separated rows: family(comma list) POS target [cue(comma list)].
std::vector<PostRule> parse_rules(std::string_view text);

/// Applies the first matching rule to each token. Only lemmas are changed.
std::vector<Sentence> pos_lemma_posttreatment(const std::vector<Sentence>& pred,
                                              const std::vector<PostRule>& rules);

// --- rendering ------------------------------------------------------------

std::string render_metrics_tsv(const std::map<std::string, MetricsTable>& tables);
std::string render_confusion_tsv(const ConfusionTable& table);
std::string render_per_pos_tsv(const PerPosReport& report, std::size_t min_support = 10);
std::string render_lemma_by_pos_tsv(const LemmaByPosReport& report, std::size_t min_support = 10);
std::string render_sentence_scores_tsv(const SentenceScoreHistogram& hist);
std::string render_que_tsv(const std::vector<QueRow>& rows);

nlohmann::json to_json(const MetricsTable& table);
nlohmann::json to_json(const ConfusionTable& table);
nlohmann::json to_json(const PerPosReport& report);
nlohmann::json to_json(const LemmaByPosReport& report);
nlohmann::json to_json(const SentenceScoreHistogram& hist);
nlohmann::json to_json(const std::vector<QueRow>& rows);
nlohmann::json to_json(const ErrorConcentration& ec);

}  // namespace histag::eval
