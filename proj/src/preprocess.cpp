#include "histag/preprocess.hpp"

#include <cctype>
#include <cmath>

namespace histag {

std::vector<Sentence> segment_sentences(const Document& doc, SegmentMode mode) {
    std::vector<Sentence> out;
    if (mode == SegmentMode::line) {
        for (const auto& s : doc.sentences) {
            Sentence copy;
            copy.tokens = s.tokens;
            copy.boundary = BoundaryKind::line;
            out.push_back(std::move(copy));
        }
        return out;
    }
    Sentence current;
    current.boundary = BoundaryKind::strong_punctuation;
    for (const auto& s : doc.sentences) {
        for (const auto& tok : s.tokens) {
            current.tokens.push_back(tok);
            if (is_strong_punctuation(tok.pos)) {
                out.push_back(std::move(current));
                current = Sentence{};
                current.boundary = BoundaryKind::strong_punctuation;
            }
        }
    }
    if (!current.tokens.empty()) out.push_back(std::move(current));
    return out;
}

// --- Roman numerals -------------------------------------------------------

namespace {

struct Digit {
    char one, five, ten;
};

// Reads one decimal order (units, tens or hundreds) at `pos`. Returns the
// digit 0..9 and advances `pos`. Accepts subtractive (iv, ix) and additive
// (iiii, viiii) spellings.
int read_order(std::string_view s, std::size_t& pos, Digit d) {
    auto at = [&](std::size_t i) { return i < s.size() ? s[i] : '\0'; };
    if (at(pos) == d.one && at(pos + 1) == d.ten) {
        pos += 2;
        return 9;
    }
    if (at(pos) == d.one && at(pos + 1) == d.five) {
        pos += 2;
        return 4;
    }
    int value = 0;
    if (at(pos) == d.five) {
        value = 5;
        ++pos;
    }
    int ones = 0;
    while (at(pos) == d.one && ones < 4) {
        ++ones;
        ++pos;
    }
    return value + ones;
}

bool all_upper_ascii(std::string_view s) {
    for (char c : s) {
        if (!std::isupper(static_cast<unsigned char>(c))) return false;
    }
    return !s.empty();
}

}  // namespace

std::optional<int> parse_roman(std::string_view numeral) {
    if (numeral.empty()) return std::nullopt;
    std::string s;
    for (char c : numeral) s.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    std::size_t pos = 0;
    int thousands = 0;
    while (pos < s.size() && s[pos] == 'm' && thousands < 3) {
        ++thousands;
        ++pos;
    }
    int hundreds = read_order(s, pos, {'c', 'd', 'm'});
    int tens = read_order(s, pos, {'x', 'l', 'c'});
    int units = read_order(s, pos, {'i', 'v', 'x'});
    if (pos != s.size()) return std::nullopt;
    int value = thousands * 1000 + hundreds * 100 + tens * 10 + units;
    if (value == 0) return std::nullopt;
    return value;
}

std::string normalize_roman(std::string_view form) {
    if (form.size() >= 3 && form.front() == '.' && form.back() == '.') {
        auto segments = split(form.substr(1, form.size() - 2), '.');
        if (segments.size() == 1) {
            if (auto v = parse_roman(segments[0])) return std::to_string(*v);
        } else if (segments.size() == 2) {
            std::string mult = segments[1];
            for (auto& c : mult) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
            long factor = mult == "m" ? 1000 : mult == "c" ? 100 : 0;
            auto v = parse_roman(segments[0]);
            if (factor && v) return std::to_string(static_cast<long>(*v) * factor);
        }
        return std::string(form);
    }
    if (all_upper_ascii(form)) {
        if (auto v = parse_roman(form)) return std::to_string(*v);
    }
    return std::string(form);
}

Document normalize_forms(Document doc) {
    for (auto& s : doc.sentences) {
        for (auto& t : s.tokens) t.form = normalize_roman(t.form);
    }
    return doc;
}

// --- splitting ------------------------------------------------------------

void SplitRatios::check() const {
    if (!(train > 0 && dev > 0 && test > 0)) throw ConfigError("split ratios must be positive");
    if (std::abs(train + dev + test - 1.0) > 1e-9) throw ConfigError("split ratios must sum to 1");
}

SplitRatios parse_ratios(std::string_view text) {
    auto parts = split(text, ',');
    if (parts.size() != 3) throw ConfigError("ratios are given as train,dev,test");
    SplitRatios r;
    try {
        r.train = std::stod(parts[0]);
        r.dev = std::stod(parts[1]);
        r.test = std::stod(parts[2]);
    } catch (const std::exception&) {
        throw ConfigError("ratios must be numbers: " + std::string(text));
    }
    r.check();
    return r;
}

SplitSet split_dataset(std::vector<Sentence> sentences, const SplitRatios& ratios,
                       std::uint64_t seed) {
    ratios.check();
    const std::size_t n = sentences.size();
    if (n < 10) throw InputError("at least 10 sentences are needed to split, got " + std::to_string(n));
    auto dev_n = static_cast<std::size_t>(std::llround(ratios.dev * static_cast<double>(n)));
    auto test_n = static_cast<std::size_t>(std::llround(ratios.test * static_cast<double>(n)));
    if (dev_n == 0 || test_n == 0 || dev_n + test_n >= n) {
        throw InputError("too few sentences to give every part at least one sentence");
    }

    Rng rng(seed);
    rng.shuffle(sentences);

    SplitSet out;
    out.seed = seed;
    out.ratios = ratios;
    const std::size_t train_n = n - dev_n - test_n;
    auto begin = std::make_move_iterator(sentences.begin());
    out.train.assign(begin, begin + static_cast<std::ptrdiff_t>(train_n));
    out.dev.assign(begin + static_cast<std::ptrdiff_t>(train_n),
                   begin + static_cast<std::ptrdiff_t>(train_n + dev_n));
    out.test.assign(begin + static_cast<std::ptrdiff_t>(train_n + dev_n),
                    std::make_move_iterator(sentences.end()));
    return out;
}

Sentence apply_capitalization_noise(const Sentence& sentence, double probability, Rng& rng) {
    if (probability < 0.0 || probability > 1.0) {
        throw ConfigError("noise probability must lie in [0, 1]");
    }
    Sentence out = sentence;
    if (probability > 0.0 && rng.bernoulli(probability)) {
        for (auto& t : out.tokens) t.form = utf8_upper(t.form);
    }
    return out;
}

}  // namespace histag
