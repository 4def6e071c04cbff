#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tbeam/model.hpp"
#include "tbeam/types.hpp"

namespace tbeam {

struct WerReport {
    std::uint64_t substitutions = 0;
    std::uint64_t insertions = 0;
    std::uint64_t deletions = 0;
    std::uint64_t reference_words = 0;

    double wer() const {
        return static_cast<double>(substitutions + insertions + deletions) /
               static_cast<double>(reference_words);
    }
};

// Corpus WER: per-pair Levenshtein alignment with unit costs, counts pooled
// before dividing.  Ties between edit paths break substitution-first, then
// deletion, then insertion, which makes the S/I/D decomposition
// deterministic.  Throws on an empty reference corpus.
WerReport wer(std::span<const std::vector<std::string>> refs,
              std::span<const std::vector<std::string>> hyps);

// Detokenize BPE pieces into words: pieces join, "▁" starts a new word.
std::vector<std::string> detokenize(const Vocabulary& vocab,
                                    std::span<const TokenId> tokens);
std::string detokenize_text(const Vocabulary& vocab, std::span<const TokenId> tokens);

std::vector<std::string> split_words(const std::string& text);

struct ThroughputReport {
    int warmup = 0;
    int repeats = 0;
    double wall_seconds = 0.0;        // mean over the timed repeats
    std::uint64_t frames = 0;         // decoded frames per run
    double frames_per_second = 0.0;
    std::optional<double> rtfx;       // audio seconds / wall seconds
};

// Runs the closure warmup times untimed, then `repeats` timed runs and
// averages the wall time.  The closure returns the frames it decoded.
ThroughputReport bench(const std::function<std::uint64_t()>& run, int warmup,
                       int repeats,
                       std::optional<double> seconds_per_frame = std::nullopt);

}  // namespace tbeam
