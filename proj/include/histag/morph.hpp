#pragma once

// Decomposition of composite morphology strings into one label per category.

#include <array>
#include <string>
#include <string_view>

#include "histag/corpus.hpp"

namespace histag {

/// One label per category in `kMorphCategories` order. Absent categories
/// hold "_". Contractions store "+"-joined per-segment labels ("empty+s").
struct MorphVector {
    std::array<std::string, 7> slots{"_", "_", "_", "_", "_", "_", "_"};

    std::string& operator[](std::size_t i) { return slots[i]; }
    const std::string& operator[](std::size_t i) const { return slots[i]; }
    std::string& at(std::string_view category);
    const std::string& at(std::string_view category) const;
    bool all_empty() const;

    bool operator==(const MorphVector&) const = default;
};

/// Index of a category in slot order; throws InputError naming it if unknown.
std::size_t morph_slot(std::string_view category);

/// "NOMB.=s|GENRE=m|CAS=r" -> {NOMB:s, GENRE:m, CAS:r, ...}.
MorphVector split_morph(std::string_view composite);

/// Inverse of split_morph, emitting categories in the order
/// NOMB, GENRE, CAS, DEGRE, MODE, TEMPS, PERS.
std::string join_morph(const MorphVector& vec);

}  // namespace histag
