#include "histag/corpus.hpp"

#include <algorithm>

#include "histag/morph.hpp"

namespace histag {

bool is_morph_category(std::string_view name) {
    return std::find(kMorphCategories.begin(), kMorphCategories.end(), name) !=
           kMorphCategories.end();
}

bool is_strong_punctuation(std::string_view pos) { return pos == "PONfrt" || pos == "PUNfrt"; }

std::vector<std::string> AnnotatedToken::pos_segments() const { return split(pos, '.'); }

void AnnotatedToken::check() const {
    if (form.empty()) throw InputError("empty form");
    if (pos != kEmptyColumn) {
        if (pos.empty()) throw InputError("empty POS for form '" + form + "'");
        for (char c : pos) {
            bool ok = (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || c == '.';
            if (!ok) throw InputError("invalid character in POS '" + pos + "'");
        }
        for (const auto& seg : pos_segments()) {
            if (seg.empty()) throw InputError("empty segment in POS '" + pos + "'");
        }
    }
    if (!morph_is_empty() && pos != kEmptyColumn) {
        std::size_t morph_segments = split(morph, '+').size();
        std::size_t pos_count = pos_segments().size();
        if (morph_segments > 1 && pos_count > 1 && morph_segments != pos_count) {
            throw InputError("morph '" + morph + "' has " + std::to_string(morph_segments) +
                             " segments but POS '" + pos + "' has " + std::to_string(pos_count));
        }
    }
}

std::vector<std::string> Sentence::forms() const {
    std::vector<std::string> out;
    out.reserve(tokens.size());
    for (const auto& t : tokens) out.push_back(t.form);
    return out;
}

void Sentence::check() const {
    if (tokens.empty()) throw InputError("empty sentence");
    if (boundary == BoundaryKind::strong_punctuation) {
        for (std::size_t i = 0; i + 1 < tokens.size(); ++i) {
            if (is_strong_punctuation(tokens[i].pos)) {
                throw InputError("strong punctuation before the end of a sentence");
            }
        }
    }
}

std::size_t Document::token_count() const {
    std::size_t n = 0;
    for (const auto& s : sentences) n += s.tokens.size();
    return n;
}

Document parse_tsv(std::string_view bytes, std::string id) {
    if (trim(bytes).empty()) throw InputError("empty corpus file");

    Document doc;
    doc.id = std::move(id);
    Sentence current;
    std::vector<std::string> pending_comments;
    bool seen_data = false;

    auto flush = [&]() {
        if (current.tokens.empty()) return;
        for (auto& c : pending_comments) current.comments.emplace_back(current.tokens.size(), c);
        pending_comments.clear();
        doc.sentences.push_back(std::move(current));
        current = Sentence{};
    };

    std::size_t line_no = 0;
    std::size_t start = 0;
    while (start <= bytes.size()) {
        std::size_t end = bytes.find('\n', start);
        bool last = end == std::string_view::npos;
        std::string_view line = bytes.substr(start, last ? std::string_view::npos : end - start);
        start = last ? bytes.size() + 1 : end + 1;
        ++line_no;
        if (last && line.empty()) break;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);

        if (line.empty()) {
            flush();
            continue;
        }
        if (line.front() == '#') {
            pending_comments.emplace_back(line);
            continue;
        }

        auto cols = split(line, '\t');
        if (!seen_data && cols[0] == "form") {
            doc.has_header = true;
            seen_data = true;
            continue;
        }
        seen_data = true;
        if (cols.size() < 2 || cols.size() > 4) {
            throw ParseError(line_no, "expected 2 to 4 tab-separated columns, got " +
                                          std::to_string(cols.size()));
        }
        AnnotatedToken tok;
        tok.form = cols[0];
        tok.lemma = cols[1];
        if (cols.size() > 2) tok.pos = cols[2];
        if (cols.size() > 3) tok.morph = cols[3];
        try {
            tok.check();
        } catch (const InputError& e) {
            throw ParseError(line_no, e.what());
        }
        for (auto& c : pending_comments) current.comments.emplace_back(current.tokens.size(), c);
        pending_comments.clear();
        current.tokens.push_back(std::move(tok));
    }
    flush();
    doc.trailing_comments = std::move(pending_comments);
    if (doc.sentences.empty()) throw InputError("corpus contains no tokens");
    return doc;
}

std::string write_tsv(const Document& doc) {
    std::string out;
    if (doc.has_header) out += "form\tlemma\tpos\tmorph\n";
    for (const auto& sentence : doc.sentences) {
        std::size_t c = 0;
        for (std::size_t i = 0; i <= sentence.tokens.size(); ++i) {
            while (c < sentence.comments.size() && sentence.comments[c].first == i) {
                out += sentence.comments[c].second;
                out += '\n';
                ++c;
            }
            if (i == sentence.tokens.size()) break;
            const auto& t = sentence.tokens[i];
            out += t.form;
            out += '\t';
            out += t.lemma;
            out += '\t';
            out += t.pos.empty() ? std::string(kEmptyColumn) : t.pos;
            out += '\t';
            out += t.morph.empty() ? std::string(kEmptyColumn) : t.morph;
            out += '\n';
        }
        out += '\n';
    }
    for (const auto& c : doc.trailing_comments) {
        out += c;
        out += '\n';
    }
    return out;
}

Document read_corpus(const std::string& path) {
    std::string id = path;
    auto slash = id.find_last_of('/');
    if (slash != std::string::npos) id = id.substr(slash + 1);
    auto dot = id.find_last_of('.');
    if (dot != std::string::npos && dot > 0) id = id.substr(0, dot);
    Document doc = parse_tsv(read_file(path), id);
    doc.provenance = path;
    return doc;
}

// --- reference lists ------------------------------------------------------

namespace {

std::set<std::string> parse_value_list(std::string_view text) {
    std::set<std::string> values;
    for (const auto& line : split(text, '\n')) {
        auto v = trim(line);
        if (!v.empty()) values.emplace(v);
    }
    return values;
}

}  // namespace

void ReferenceSet::check() const {
    if (lemmas.empty()) throw InputError("lemma list is empty");
    if (pos_tags.empty()) throw InputError("POS list is empty");
    if (morph_values.empty()) throw InputError("morph list is empty");
    for (const auto& [cat, values] : morph_values) {
        if (!is_morph_category(cat)) throw InputError("unknown morph category '" + cat + "'");
        if (values.empty()) throw InputError("no values for morph category " + cat);
    }
}

ReferenceSet parse_reference_lists(std::string_view lemma_text, std::string_view pos_text,
                                   std::string_view morph_text) {
    ReferenceSet refs;
    refs.lemmas = parse_value_list(lemma_text);
    refs.pos_tags = parse_value_list(pos_text);
    std::size_t line_no = 0;
    for (const auto& raw : split(morph_text, '\n')) {
        ++line_no;
        std::string_view line = raw;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (trim(line).empty()) continue;
        auto cols = split(line, '\t');
        if (cols.size() != 2) throw ParseError(line_no, "morph list rows are CATEGORY<TAB>value");
        std::string cat(trim(cols[0]));
        if (!cat.empty() && cat.back() == '.') cat.pop_back();
        if (!is_morph_category(cat)) throw InputError("unknown morph category '" + cat + "'");
        refs.morph_values[cat].emplace(trim(cols[1]));
    }
    refs.check();
    return refs;
}

ReferenceSet load_reference_lists(const std::string& lemma_path, const std::string& pos_path,
                                  const std::string& morph_path) {
    return parse_reference_lists(read_file(lemma_path), read_file(pos_path),
                                 read_file(morph_path));
}

// --- validation -----------------------------------------------------------

namespace {

bool lemma_allowed(const std::string& lemma, const ReferenceSet& refs) {
    if (refs.lemmas.count(lemma)) return true;
    // Contracted forms carry one lemma per segment ("a3+le").
    if (lemma.find('+') == std::string::npos) return false;
    auto parts = split(lemma, '+');
    return std::all_of(parts.begin(), parts.end(),
                       [&](const std::string& p) { return refs.lemmas.count(p) > 0; });
}

}  // namespace

ValidationReport validate(const Document& doc, const ReferenceSet& refs) {
    ValidationReport report;
    for (std::size_t s = 0; s < doc.sentences.size(); ++s) {
        const auto& tokens = doc.sentences[s].tokens;
        for (std::size_t t = 0; t < tokens.size(); ++t) {
            const auto& tok = tokens[t];
            auto entry = [&](std::string value) {
                return ValidationEntry{doc.id, s, t, std::move(value)};
            };
            if (!lemma_allowed(tok.lemma, refs)) report.unallowed_lemmas.push_back(entry(tok.lemma));
            if (tok.pos != kEmptyColumn) {
                for (const auto& seg : tok.pos_segments()) {
                    if (!refs.pos_tags.count(seg)) report.unallowed_pos.push_back(entry(seg));
                }
            }
            if (tok.morph_is_empty()) continue;
            MorphVector vec;
            try {
                vec = split_morph(tok.morph);
            } catch (const InputError&) {
                report.unallowed_morph.push_back(entry(tok.morph));
                continue;
            }
            for (std::size_t slot = 0; slot < 7; ++slot) {
                if (vec[slot] == "_") continue;
                std::string cat(kMorphCategories[slot]);
                auto it = refs.morph_values.find(cat);
                for (const auto& value : split(vec[slot], '+')) {
                    if (value == "empty") continue;
                    if (it == refs.morph_values.end() || !it->second.count(value)) {
                        report.unallowed_morph.push_back(entry(cat + "=" + value));
                    }
                }
            }
        }
    }
    return report;
}

}  // namespace histag
