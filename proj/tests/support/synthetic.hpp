#pragma once

// Synthetic corpora with a regular inflectional morphology.

#include <algorithm>
#include <string>
#include <vector>

#include "histag/common.hpp"
#include "histag/corpus.hpp"

namespace histag::testing {

inline const std::vector<std::string> kSuffixes = {"a", "es", "ent", "oit", "ons"};
inline const std::vector<std::string> kSuffixPos = {"NOMcom", "NOMpro", "VERcjg", "VERinf", "ADJqua"};
/// Lemma ending; differs from every inflection suffix so copying the form
/// is always wrong.
inline const std::string kLemmaSuffix = "er";

inline std::vector<std::string> make_stems(std::size_t n, Rng& rng) {
    static const std::vector<std::string> onset = {"b", "c", "d", "f", "g", "l", "m", "n", "p", "r", "s", "t", "v", "ch", "tr"};
    static const std::vector<std::string> nucleus = {"a", "e", "i", "o", "u", "ai", "ou"};
    std::vector<std::string> out;
    while (out.size() < n) {
        std::string s;
        std::size_t syllables = 1 + rng.below(2);
        for (std::size_t k = 0; k < syllables; ++k) s += onset[rng.below(onset.size())] + nucleus[rng.below(nucleus.size())];
        s += onset[rng.below(onset.size())];
        if (std::find(out.begin(), out.end(), s) == out.end()) out.push_back(s);
    }
    return out;
}

inline AnnotatedToken make_token(const std::string& stem, std::size_t suffix) {
    return AnnotatedToken{stem + kSuffixes[suffix], stem + kLemmaSuffix, kSuffixPos[suffix], "_"};
}

/// Sentences of random (stem, suffix) words ending with a strong punctuation
/// token.
inline std::vector<Sentence> synthetic_sentences(std::size_t count, const std::vector<std::string>& stems, Rng& rng,
                                                 std::size_t min_len = 3, std::size_t max_len = 7) {
    std::vector<Sentence> out;
    for (std::size_t i = 0; i < count; ++i) {
        Sentence s;
        std::size_t len = min_len + rng.below(max_len - min_len + 1);
        for (std::size_t k = 0; k < len; ++k) {
            s.tokens.push_back(make_token(stems[rng.below(stems.size())], rng.below(kSuffixes.size())));
        }
        s.tokens.push_back(AnnotatedToken{".", ".", "PONfrt", "_"});
        s.boundary = BoundaryKind::strong_punctuation;
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace histag::testing
