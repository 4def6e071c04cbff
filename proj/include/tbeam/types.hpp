#pragma once

#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <string_view>

namespace tbeam {

inline constexpr std::string_view kVersion = "0.1.0";

using TokenId = std::int32_t;

// Sentinel for "no token": BOS padding in context windows, empty last-token
// slots, and skipped (blank) positions in the hypothesis trie.
inline constexpr TokenId kNoToken = -1;

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// A beam slot whose score is -inf counts as dead; top-k selection never
// prefers it over a finite-score candidate.
inline constexpr double kDeadScore = kNegInf;

// Floor for log probabilities of events the LM prunes away entirely.
// Finite on purpose: a weighted sum with a -inf blank term must not NaN.
inline constexpr double kLogZeroFloor = -1e9;

class ParseError : public std::runtime_error {
public:
    ParseError(std::string source, std::size_t line, const std::string& what)
        : std::runtime_error(source + ":" + std::to_string(line) + ": " + what),
          source_(std::move(source)),
          line_(line) {}

    const std::string& source() const noexcept { return source_; }
    std::size_t line() const noexcept { return line_; }

private:
    std::string source_;
    std::size_t line_;
};

class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class CapacityError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace tbeam
