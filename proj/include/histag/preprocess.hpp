#pragma once

// Dataset preparation: sentence segmentation, numeral normalization,
// train/dev/test splitting and capitalization noise.

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "histag/common.hpp"
#include "histag/corpus.hpp"
#include "histag/morph.hpp"

namespace histag {

enum class SegmentMode { punctuation, line };

/// Re-cuts the document's token stream into sentences. In punctuation mode a
/// sentence ends after every PONfrt/PUNfrt token; in line mode the document's
/// own boundaries are kept. Comments are dropped.
std::vector<Sentence> segment_sentences(const Document& doc, SegmentMode mode);

/// Value of a Roman numeral under the accepted grammar (standard subtractive
/// forms plus additive iiii/viiii/xxxx/cccc variants), case-insensitive.
std::optional<int> parse_roman(std::string_view numeral);

/// Rewrites dot-delimited (".xiv.", ".l.m.") and all-uppercase ("XIV")
/// Roman numerals as decimal strings. Everything else is returned unchanged.
std::string normalize_roman(std::string_view form);

/// Applies normalize_roman to every form of the document.
Document normalize_forms(Document doc);

struct SplitRatios {
    double train = 0.8;
    double dev = 0.1;
    double test = 0.1;

    void check() const;
};

SplitRatios parse_ratios(std::string_view text);

struct SplitSet {
    std::vector<Sentence> train;
    std::vector<Sentence> dev;
    std::vector<Sentence> test;
    std::uint64_t seed = 0;
    SplitRatios ratios;
};

/// Seeded shuffle followed by a contiguous cut. Dev and test receive
/// round(ratio * N) sentences; the remainder goes to train.
SplitSet split_dataset(std::vector<Sentence> sentences, const SplitRatios& ratios,
                       std::uint64_t seed);

/// Uppercases every form of the sentence with the given probability.
Sentence apply_capitalization_noise(const Sentence& sentence, double probability, Rng& rng);

}  // namespace histag
