#include "histag/morph.hpp"

#include <algorithm>
#include <optional>

namespace histag {

namespace {

constexpr std::string_view kEmptySegment = "empty";
constexpr std::array<std::string_view, 7> kJoinOrder = {"NOMB", "GENRE", "CAS", "DEGRE",
                                                         "MODE", "TEMPS", "PERS"};

bool is_empty_analysis(std::string_view seg) {
    return seg.empty() || seg == kEmptyColumn || seg == kEmptyMorph;
}

using Analysis = std::array<std::optional<std::string>, 7>;

Analysis parse_analysis(std::string_view seg) {
    Analysis out;
    if (is_empty_analysis(seg)) return out;
    for (const auto& feature : split(seg, '|')) {
        auto eq = feature.find('=');
        if (eq == std::string::npos) throw InputError("malformed morph feature '" + feature + "'");
        std::string name = feature.substr(0, eq);
        if (!name.empty() && name.back() == '.') name.pop_back();
        std::string value = feature.substr(eq + 1);
        if (value.empty()) throw InputError("empty value for morph category " + name);
        std::size_t slot = morph_slot(name);
        if (out[slot]) throw InputError("morph category " + name + " given twice");
        out[slot] = value;
    }
    return out;
}

std::string render_name(std::string_view category) {
    // The annotation scheme spells the number category with a dot.
    if (category == "NOMB") return "NOMB.";
    return std::string(category);
}

}  // namespace

std::size_t morph_slot(std::string_view category) {
    for (std::size_t i = 0; i < kMorphCategories.size(); ++i) {
        if (kMorphCategories[i] == category) return i;
    }
    throw InputError("unknown morph category '" + std::string(category) + "'");
}

std::string& MorphVector::at(std::string_view category) { return slots[morph_slot(category)]; }
const std::string& MorphVector::at(std::string_view category) const {
    return slots[morph_slot(category)];
}

bool MorphVector::all_empty() const {
    return std::all_of(slots.begin(), slots.end(), [](const auto& s) { return s == "_"; });
}

MorphVector split_morph(std::string_view composite) {
    MorphVector vec;
    auto segments = split(composite, '+');
    std::vector<Analysis> analyses;
    analyses.reserve(segments.size());
    for (const auto& seg : segments) analyses.push_back(parse_analysis(seg));

    for (std::size_t slot = 0; slot < 7; ++slot) {
        bool present = std::any_of(analyses.begin(), analyses.end(),
                                   [&](const Analysis& a) { return a[slot].has_value(); });
        if (!present) continue;
        std::vector<std::string> parts;
        for (const auto& a : analyses) parts.push_back(a[slot] ? *a[slot] : std::string(kEmptySegment));
        vec[slot] = join(parts, "+");
    }
    return vec;
}

std::string join_morph(const MorphVector& vec) {
    std::size_t segments = 1;
    for (const auto& s : vec.slots) {
        if (s == "_") continue;
        segments = std::max(segments, split(s, '+').size());
    }

    std::vector<std::string> rendered;
    for (std::size_t seg = 0; seg < segments; ++seg) {
        std::vector<std::string> features;
        for (auto category : kJoinOrder) {
            const std::string& label = vec.at(category);
            if (label == "_") continue;
            auto parts = split(label, '+');
            // Labels with fewer segments than the widest slot apply to the
            // first segment only.
            if (seg >= parts.size()) continue;
            if (parts[seg] == kEmptySegment) continue;
            features.push_back(render_name(category) + "=" + parts[seg]);
        }
        rendered.push_back(features.empty() ? std::string(kEmptyMorph) : join(features, "|"));
    }
    return join(rendered, "+");
}

}  // namespace histag
