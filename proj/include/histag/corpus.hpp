#pragma once

// Corpus domain types, TSV serialization and reference-list validation.

#include <array>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "histag/common.hpp"

namespace histag {

/// Marker for an absent column value.
inline constexpr std::string_view kEmptyColumn = "_";
/// Marker for an explicitly empty morphological analysis.
inline constexpr std::string_view kEmptyMorph = "MORPH=empty";

/// The seven morphological categories in slot order.
inline constexpr std::array<std::string_view, 7> kMorphCategories = {
    "CAS", "DEGRE", "GENRE", "MODE", "NOMB", "PERS", "TEMPS"};

bool is_morph_category(std::string_view name);

/// Strong punctuation tags ending a sentence. Both spellings occur in the
/// annotation guidelines.
bool is_strong_punctuation(std::string_view pos);

struct AnnotatedToken {
    std::string form;
    std::string lemma;
    std::string pos = "_";
    std::string morph = "_";

    /// Atomic POS tags of a composite such as "PRE.DETdef".
    std::vector<std::string> pos_segments() const;
    bool morph_is_empty() const { return morph == kEmptyColumn || morph == kEmptyMorph; }

    /// Throws InputError when an invariant is violated.
    void check() const;

    bool operator==(const AnnotatedToken&) const = default;
};

enum class BoundaryKind { strong_punctuation, line };

struct Sentence {
    std::vector<AnnotatedToken> tokens;
    BoundaryKind boundary = BoundaryKind::line;
    /// Comment lines placed before token `first` (`first == tokens.size()`
    /// puts them after the last token).
    std::vector<std::pair<std::size_t, std::string>> comments;

    std::vector<std::string> forms() const;
    void check() const;

    bool operator==(const Sentence&) const = default;
};

struct Document {
    std::string id;
    std::vector<Sentence> sentences;
    std::string provenance;
    bool has_header = false;
    /// Comment lines after the last sentence.
    std::vector<std::string> trailing_comments;

    std::size_t token_count() const;
    const AnnotatedToken& at(std::size_t sentence, std::size_t token) const {
        return sentences.at(sentence).tokens.at(token);
    }
    AnnotatedToken& at(std::size_t sentence, std::size_t token) {
        return sentences.at(sentence).tokens.at(token);
    }

    bool operator==(const Document&) const = default;
};

/// Parses the four-column token format. Throws ParseError on malformed rows
/// and InputError on an empty file.
Document parse_tsv(std::string_view bytes, std::string id = "");
std::string write_tsv(const Document& doc);

Document read_corpus(const std::string& path);

struct ReferenceSet {
    std::set<std::string> lemmas;
    std::set<std::string> pos_tags;
    std::map<std::string, std::set<std::string>> morph_values;

    void check() const;
};

ReferenceSet load_reference_lists(const std::string& lemma_path, const std::string& pos_path,
                                  const std::string& morph_path);
ReferenceSet parse_reference_lists(std::string_view lemma_text, std::string_view pos_text,
                                   std::string_view morph_text);

struct ValidationEntry {
    std::string document;
    std::size_t sentence = 0;
    std::size_t token = 0;
    std::string value;

    bool operator==(const ValidationEntry&) const = default;
};

struct ValidationReport {
    std::vector<ValidationEntry> unallowed_lemmas;
    std::vector<ValidationEntry> unallowed_pos;
    std::vector<ValidationEntry> unallowed_morph;

    bool empty() const {
        return unallowed_lemmas.empty() && unallowed_pos.empty() && unallowed_morph.empty();
    }
    std::size_t size() const {
        return unallowed_lemmas.size() + unallowed_pos.size() + unallowed_morph.size();
    }
};

/// Lists every token whose lemma, atomic POS or morph value is missing from
/// the reference lists. Cross-category combinations are not checked.
ValidationReport validate(const Document& doc, const ReferenceSet& refs);

}  // namespace histag
