#include "tbeam/metrics.hpp"

#include <chrono>
#include <cstdint>
#include <sstream>
#include <stdexcept>

namespace tbeam {

namespace {

enum class EditOp : std::uint8_t { kMatch, kSub, kDel, kIns };

// One alignment with deterministic tie-breaking: on equal cost prefer the
// diagonal (match/substitution), then deletion, then insertion.
void align_pair(const std::vector<std::string>& ref,
                const std::vector<std::string>& hyp, WerReport& agg) {
    const std::size_t nr = ref.size();
    const std::size_t nh = hyp.size();
    std::vector<std::uint32_t> cost((nr + 1) * (nh + 1));
    std::vector<EditOp> back((nr + 1) * (nh + 1));
    const auto at = [&](std::size_t i, std::size_t j) { return i * (nh + 1) + j; };

    for (std::size_t i = 1; i <= nr; ++i) {
        cost[at(i, 0)] = static_cast<std::uint32_t>(i);
        back[at(i, 0)] = EditOp::kDel;
    }
    for (std::size_t j = 1; j <= nh; ++j) {
        cost[at(0, j)] = static_cast<std::uint32_t>(j);
        back[at(0, j)] = EditOp::kIns;
    }
    for (std::size_t i = 1; i <= nr; ++i) {
        for (std::size_t j = 1; j <= nh; ++j) {
            const bool match = ref[i - 1] == hyp[j - 1];
            const std::uint32_t diag = cost[at(i - 1, j - 1)] + (match ? 0 : 1);
            const std::uint32_t del = cost[at(i - 1, j)] + 1;
            const std::uint32_t ins = cost[at(i, j - 1)] + 1;
            std::uint32_t best = diag;
            EditOp op = match ? EditOp::kMatch : EditOp::kSub;
            if (del < best) {
                best = del;
                op = EditOp::kDel;
            }
            if (ins < best) {
                best = ins;
                op = EditOp::kIns;
            }
            cost[at(i, j)] = best;
            back[at(i, j)] = op;
        }
    }
    std::size_t i = nr;
    std::size_t j = nh;
    while (i > 0 || j > 0) {
        switch (back[at(i, j)]) {
            case EditOp::kMatch:
                --i;
                --j;
                break;
            case EditOp::kSub:
                ++agg.substitutions;
                --i;
                --j;
                break;
            case EditOp::kDel:
                ++agg.deletions;
                --i;
                break;
            case EditOp::kIns:
                ++agg.insertions;
                --j;
                break;
        }
    }
    agg.reference_words += nr;
}

}  // namespace

WerReport wer(std::span<const std::vector<std::string>> refs,
              std::span<const std::vector<std::string>> hyps) {
    if (refs.size() != hyps.size()) {
        throw std::invalid_argument("wer: reference/hypothesis count mismatch");
    }
    WerReport report;
    for (std::size_t i = 0; i < refs.size(); ++i) {
        align_pair(refs[i], hyps[i], report);
    }
    if (report.reference_words == 0) {
        throw std::invalid_argument("wer: empty reference corpus, WER undefined");
    }
    return report;
}

std::string detokenize_text(const Vocabulary& vocab,
                            std::span<const TokenId> tokens) {
    static const std::string kMarker = "▁";
    std::string text;
    for (const TokenId t : tokens) {
        const std::string& piece = vocab.token(t);
        if (piece.rfind(kMarker, 0) == 0) {
            if (!text.empty()) {
                text.push_back(' ');
            }
            text.append(piece, kMarker.size(), std::string::npos);
        } else {
            text.append(piece);
        }
    }
    return text;
}

std::vector<std::string> split_words(const std::string& text) {
    std::vector<std::string> words;
    std::istringstream iss(text);
    std::string w;
    while (iss >> w) {
        words.push_back(std::move(w));
    }
    return words;
}

std::vector<std::string> detokenize(const Vocabulary& vocab,
                                    std::span<const TokenId> tokens) {
    return split_words(detokenize_text(vocab, tokens));
}

ThroughputReport bench(const std::function<std::uint64_t()>& run, int warmup,
                       int repeats, std::optional<double> seconds_per_frame) {
    if (repeats < 1 || warmup < 0) {
        throw std::invalid_argument("bench: repeats must be >= 1, warmup >= 0");
    }
    for (int i = 0; i < warmup; ++i) {
        (void)run();
    }
    ThroughputReport report;
    report.warmup = warmup;
    report.repeats = repeats;
    double total = 0.0;
    for (int i = 0; i < repeats; ++i) {
        const auto start = std::chrono::steady_clock::now();
        report.frames = run();
        total += std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
                     .count();
    }
    report.wall_seconds = total / repeats;
    report.frames_per_second =
        report.wall_seconds > 0.0
            ? static_cast<double>(report.frames) / report.wall_seconds
            : 0.0;
    if (seconds_per_frame) {
        report.rtfx = report.wall_seconds > 0.0
                          ? static_cast<double>(report.frames) * *seconds_per_frame /
                                report.wall_seconds
                          : 0.0;
    }
    return report;
}

}  // namespace tbeam
