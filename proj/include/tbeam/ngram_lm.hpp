#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "tbeam/model.hpp"
#include "tbeam/types.hpp"

namespace tbeam {

// ARPA-backed n-gram language model over the ASR token vocabulary, stored as
// a trie of contexts with Katz backoff.  Probabilities and backoff weights
// are kept in natural log internally (ARPA is log10 on disk).
//
// States are trie node ids for the longest matched context; queries walk the
// backoff chain from the state down to the unigram level.  The model is
// immutable after parsing and safe for shared concurrent reads; per-query
// scratch is caller-owned so parallel decode lanes do not contend.
class NGramLm {
public:
    using State = std::int32_t;

    // Reusable workspace for full-vocabulary queries.
    struct Scratch {
        std::vector<std::uint32_t> stamp;
        std::uint32_t epoch = 0;
    };

    // Parses a textual ARPA file.  Section sizes must match the data header
    // and orders must be contiguous from 1.  Tokens missing from the ASR
    // vocabulary map to <unk> (counted, reported on stderr) unless strict,
    // which throws instead.
    static NGramLm parse_arpa(const std::filesystem::path& path,
                              const Vocabulary& vocab, bool strict = false);
    static NGramLm parse_arpa_text(const std::string& text,
                                   const std::string& source_name,
                                   const Vocabulary& vocab, bool strict = false);

    int order() const { return order_; }
    int vocab_size() const { return vocab_size_; }

    // Sentence-start context when <s> is in the model, else the empty context.
    State initial_state() const { return initial_state_; }
    State root_state() const { return 0; }

    // Longest suffix context of (state's context + token) present in the
    // trie.  token must be a real ASR id (blanks are a contract violation).
    State advance(State state, TokenId token) const;

    // ln P(token | state context), backoff chain fully resolved; floored at
    // kLogZeroFloor for events the model prunes away entirely.
    double score_token(State state, TokenId token) const;

    // out[k] = ln P(k | state context) for every ASR token k (never blank).
    void score_vocab(State state, std::span<double> out, Scratch& scratch) const;

    // ln P(</s> | state context).
    double score_eos(State state) const;

    // --- batched forms ------------------------------------------------------
    void advance_batch(std::span<State> states, std::span<const TokenId> tokens) const;
    void score_vocab_batch(std::span<const State> states, std::span<double> out,
                           Scratch& scratch) const;

    // instrumentation: how much LM work a decode performed
    std::uint64_t token_query_count() const { return counters_->token_queries; }
    std::uint64_t vocab_query_count() const { return counters_->vocab_queries; }
    void reset_query_counters() const {
        counters_->token_queries = 0;
        counters_->vocab_queries = 0;
    }

    std::size_t oov_mapped() const { return oov_mapped_; }
    std::size_t num_nodes() const { return nodes_.size(); }

private:
    NGramLm() = default;

    struct Node {
        double prob;            // ln prob of the entry itself; NaN if implicit
        double backoff;         // ln backoff weight of this context
        std::int32_t suffix;    // node of context tokens[1:]
        std::int32_t depth;
        std::int32_t child_begin;
        std::int32_t child_end;
    };

    struct Counters {
        std::atomic<std::uint64_t> token_queries{0};
        std::atomic<std::uint64_t> vocab_queries{0};
    };

    std::int32_t find_child(State node, std::int32_t internal_token) const;
    double score_internal(State state, std::int32_t internal_token) const;

    // internal token space: 0..V-1 ASR ids, then <s>, </s>, <unk>
    std::int32_t bos_id() const { return vocab_size_; }
    std::int32_t eos_id() const { return vocab_size_ + 1; }
    std::int32_t unk_id() const { return vocab_size_ + 2; }

    int order_ = 0;
    int vocab_size_ = 0;
    State initial_state_ = 0;
    std::size_t oov_mapped_ = 0;

    std::vector<Node> nodes_;
    std::vector<std::int32_t> edge_token_;  // sorted per node
    std::vector<std::int32_t> edge_node_;
    std::vector<std::int32_t> token_remap_;  // ASR id -> internal id or -1

    std::unique_ptr<Counters> counters_ = std::make_unique<Counters>();
};

// One LM state per (stream, slot), stream-major.
using LmStateBatch = std::vector<NGramLm::State>;

}  // namespace tbeam
