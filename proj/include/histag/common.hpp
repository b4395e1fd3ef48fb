#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace histag {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input data (corpus rows, list files, model files).
class InputError : public Error {
public:
    using Error::Error;
};

/// A corpus row that cannot be parsed; carries the 1-based line number.
class ParseError : public InputError {
public:
    ParseError(std::size_t line, const std::string& what)
        : InputError("line " + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// Invalid configuration values or option combinations.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Failures during training or inference (divergence, task mismatch).
class RuntimeFailure : public Error {
public:
    using Error::Error;
};

// --- text helpers ---------------------------------------------------------

/// Splits a UTF-8 string into its code points, each returned as a UTF-8
/// substring. Invalid bytes are passed through one at a time.
std::vector<std::string> utf8_chars(std::string_view text);

/// Uppercases Latin letters (ASCII, Latin-1 and Latin Extended-A).
/// Other code points are copied unchanged.
std::string utf8_upper(std::string_view text);

std::vector<std::string> split(std::string_view text, char sep);
std::string join(const std::vector<std::string>& parts, std::string_view sep);
std::string_view trim(std::string_view text);
bool starts_with(std::string_view text, std::string_view prefix);

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view bytes);

// --- randomness -----------------------------------------------------------

/// Deterministic random source. Everything is derived from the raw 64-bit
/// stream so results do not depend on the standard library's distributions.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64();
    /// Uniform integer in [0, bound).
    std::uint64_t below(std::uint64_t bound);
    /// Uniform double in [0, 1).
    double uniform();
    double normal();
    bool bernoulli(double p) { return uniform() < p; }

    template <typename T>
    void shuffle(std::vector<T>& items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(items[i - 1], items[j]);
        }
    }

private:
    std::uint64_t state_;
};

/// Mixes several integers into one seed (splitmix64 finalizer chain).
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0);

}  // namespace histag
