#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "tbeam/fusion.hpp"
#include "tbeam/hyp_store.hpp"
#include "tbeam/model.hpp"
#include "tbeam/ngram_lm.hpp"
#include "tbeam/types.hpp"

namespace tbeam {

// One audio stream to decode: its emission model and how many frames of it
// to consume.  Streams of a batch may use different models and lengths.
struct StreamInput {
    const EmissionModel* model = nullptr;
    int num_frames = 0;
};

struct DecodeConfig {
    int beam = 4;
    // ALSD++ scoring rounds per frame; the last round is blank-only, so up
    // to max_symbols_per_frame - 1 tokens can be emitted per frame.  Greedy
    // uses the same cap, which keeps beam-1 runs identical to greedy.
    int max_symbols_per_frame = 10;
    // AES++ rounds that may emit tokens per frame (one blank-only round
    // follows when hypotheses are still mid-frame).
    int aes_expansions_per_frame = 2;
    int max_len = 256;  // U_max: non-blank tokens per hypothesis
    int return_nbest = 1;
    bool aes_prefix_search = true;

    const NGramLm* lm = nullptr;
    FusionConfig fusion;

    // Rolling-hash parameters of the hypothesis store; tests shrink the
    // modulus to prove the differential harness catches merge errors.
    HashParams hash_params;
};

struct Counters {
    std::uint64_t frames = 0;
    std::uint64_t scoring_rounds = 0;  // rounds with at least one model call
    std::uint64_t scored_slots = 0;    // individual (slot, frame) model calls
    std::uint64_t lm_token_queries = 0;
    std::uint64_t lm_vocab_queries = 0;
};

struct NBestEntry {
    std::vector<TokenId> tokens;
    double score = 0.0;
};

struct StreamResult {
    std::vector<NBestEntry> nbest;  // descending score, distinct transcripts
    Counters counters;
};

struct DecodeResult {
    std::vector<StreamResult> streams;
    double wall_seconds = 0.0;
    std::uint64_t total_frames() const {
        std::uint64_t n = 0;
        for (const auto& s : streams) n += s.counters.frames;
        return n;
    }
};

// Batched label-looping greedy: per frame, take the argmax of the (fused)
// emission row, append non-blank tokens and re-score the same frame, move on
// at a blank.  cfg.beam is ignored.
DecodeResult greedy_batched(std::span<const StreamInput> streams,
                            const DecodeConfig& cfg);

// Batched beam search, frame-major with bounded expansion rounds per frame.
DecodeResult alsd_pp(std::span<const StreamInput> streams, const DecodeConfig& cfg);

// Frame-synchronous batched beam search with a small per-frame expansion cap
// and maximum-length prefix combination.
DecodeResult aes_pp(std::span<const StreamInput> streams, const DecodeConfig& cfg);

enum class RefAlgo { kAlsd, kAes };

// Sequential object-per-hypothesis reimplementation of the two searches,
// used as a differential oracle: same semantics, naive transcript lists,
// token-by-token merging, no hashing.
DecodeResult reference_beam(std::span<const StreamInput> streams,
                            const DecodeConfig& cfg, RefAlgo algo);

// Brute force: enumerate every blank-terminated alignment of at most u_max
// tokens and sum path probabilities per collapsed transcript.  Exponential;
// refuses instances beyond num_frames 6 / |V| 4 / u_max 6.
std::map<std::vector<TokenId>, double> enumerate_alignments(
    const EmissionModel& model, int num_frames, int u_max);

}  // namespace tbeam
