#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "tbeam/types.hpp"

namespace tbeam {

// Rolling-hash parameters for incremental transcript fingerprints.  The
// defaults (prime base, Mersenne modulus 2^61-1) keep products inside
// 128-bit intermediates and make collisions negligible; tests override the
// modulus to force collisions on purpose.
struct HashParams {
    std::uint64_t base = 1'000'003;
    std::uint64_t modulus = (std::uint64_t{1} << 61) - 1;
};

// H' = (H * base + token + 1) mod modulus.  The +1 offset distinguishes a
// transcript ending in token 0 from the empty transcript (hash 0).  Blanks
// are never hashed; token must be a real id >= 0.
std::uint64_t update_hash(std::uint64_t h_prev, TokenId token,
                          const HashParams& params = {});

// Constant-time comparable identity of a hypothesis transcript.  Equal keys
// are treated as equal transcripts; length and last token guard against the
// residual hash-collision risk.
struct HypKey {
    std::uint64_t hash = 0;
    std::int32_t length = 0;
    TokenId last_token = kNoToken;

    friend bool operator==(const HypKey&, const HypKey&) = default;
};

// Fixed-capacity hypothesis storage for a batch of beams, kept as a backlink
// trie: expanding a hypothesis appends one cell instead of copying its
// transcript.
//
// Every expansion step writes one fresh column for all `beam` slots of a
// stream: the emitted token (kNoToken when the step was a blank, which
// stores nothing retrievable) plus a backlink to the parent slot in the
// previous column.  Columns are never rewritten, so backlink chains of live
// slots stay valid under arbitrary re-parenting by pruning; a transcript is
// recovered by walking backlinks from the newest column and skipping the
// no-token cells.
//
// Exactly `beam` slots exist per stream at all times.  Dead slots keep stale
// data; only score == -inf marks death, and top-k never selects a dead slot
// while finite candidates remain.
class BatchedBeamHyps {
public:
    // One live empty hypothesis per stream at slot 0 (score 0); the
    // remaining slots start dead so the first step cannot duplicate it.
    BatchedBeamHyps(int batch, int beam, int max_len, HashParams params = {});

    int batch() const { return batch_; }
    int beam() const { return beam_; }
    int max_len() const { return max_len_; }
    const HashParams& hash_params() const { return params_; }

    double score(int b, int i) const { return scores_[slot(b, i)]; }
    std::int32_t length(int b, int i) const { return lengths_[slot(b, i)]; }
    std::uint64_t hash(int b, int i) const { return hashes_[slot(b, i)]; }
    TokenId last_token(int b, int i) const { return last_[slot(b, i)]; }
    bool alive(int b, int i) const { return scores_[slot(b, i)] != kDeadScore; }
    HypKey key(int b, int i) const {
        return {hashes_[slot(b, i)], lengths_[slot(b, i)], last_[slot(b, i)]};
    }

    void set_score(int b, int i, double score) { scores_[slot(b, i)] = score; }
    void kill(int b, int i) { scores_[slot(b, i)] = kDeadScore; }

    // One synchronized expansion step for stream b: slot j becomes
    // parents[j] extended by tokens[j], with score(parent) + deltas[j].
    // tokens[j] == kNoToken is a blank extension: the transcript state is
    // inherited unchanged and only the score accumulates.  Discarded
    // hypotheses are overwritten by whatever expansion lands in their slot.
    // A dead parent is allowed only when paired with a -inf delta.  A
    // non-blank extension of a slot already holding max_len tokens throws
    // CapacityError.
    void expand_stream(int b, std::span<const std::int32_t> parents,
                       std::span<const TokenId> tokens,
                       std::span<const double> deltas);

    // Whole-batch expansion: the [batch * beam] argument arrays hold one
    // entry per slot, stream-major.
    void expand(std::span<const std::int32_t> parents,
                std::span<const TokenId> tokens,
                std::span<const double> deltas);

    // The u tokens of slot (b, i), oldest first, recovered by the reverse
    // backlink walk.  Throws on a dead slot.
    std::vector<TokenId> retrieve_transcript(int b, int i) const;

    // Among live slots of a stream with identical HypKey, the lowest slot
    // index survives with the log-sum-exp of the group's scores; the rest
    // are killed.  When group_tags is non-empty (one tag per slot), only
    // slots with equal tags merge -- decoders use this to keep
    // frame-complete and mid-frame hypotheses apart.
    void merge_duplicates_stream(int b, std::span<const std::uint8_t> group_tags = {});
    void merge_duplicates();

    // Number of expansion steps stream b has absorbed.
    std::int32_t steps(int b) const { return steps_[b]; }

private:
    std::size_t slot(int b, int i) const {
        return static_cast<std::size_t>(b) * beam_ + i;
    }
    std::size_t cell(int b, int i, int c) const {
        return (static_cast<std::size_t>(b) * beam_ + i) * capacity_ + c;
    }
    void grow();

    int batch_;
    int beam_;
    int max_len_;
    HashParams params_;

    int capacity_;                      // columns allocated per slot
    std::vector<std::int32_t> steps_;   // [batch] columns written
    std::vector<TokenId> tok_;          // [batch, beam, capacity]
    std::vector<std::int32_t> ptr_;     // [batch, beam, capacity]
    std::vector<double> scores_;        // [batch, beam]
    std::vector<std::int32_t> lengths_; // [batch, beam] non-blank token count
    std::vector<std::uint64_t> hashes_; // [batch, beam]
    std::vector<TokenId> last_;         // [batch, beam]

    // scratch for expand_stream
    std::vector<double> tmp_scores_;
    std::vector<std::int32_t> tmp_lengths_;
    std::vector<std::uint64_t> tmp_hashes_;
    std::vector<TokenId> tmp_last_;
};

// Per-stream top-k selection: indices of the k highest scores, ranked by
// (score desc, index asc).  -inf entries are picked only when fewer than k
// finite candidates exist.  out_idx/out_scores must hold k entries.
void prune_topk(std::span<const double> scores, int k,
                std::span<std::int32_t> out_idx, std::span<double> out_scores);

// log(e^a + e^b) without overflow; -inf absorbs.
double logadd(double a, double b);

}  // namespace tbeam
