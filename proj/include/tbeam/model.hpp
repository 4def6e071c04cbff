#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "tbeam/types.hpp"

namespace tbeam {

// ASR token inventory.  Ids are 0..size-1; the blank id is one past the last
// real token, so an emission row has size()+1 entries with the blank last.
// Blank participates in emission distributions but never in transcripts or
// LM queries.
class Vocabulary {
public:
    explicit Vocabulary(std::vector<std::string> tokens);

    int size() const { return static_cast<int>(tokens_.size()); }
    TokenId blank_id() const { return size(); }
    const std::string& token(TokenId id) const { return tokens_.at(id); }
    const std::vector<std::string>& tokens() const { return tokens_; }
    // id of a token string, or kNoToken if absent
    TokenId find(const std::string& text) const;

    // Deterministic synthetic table for toy runs: short letter strings with
    // a word-boundary marker on every third token.
    static Vocabulary synthetic(int size);

    static Vocabulary load(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, TokenId> index_;
};

// --- prediction-context windows -------------------------------------------
//
// The decoders keep, per hypothesis, a fixed window of the last n non-blank
// tokens, padded with kNoToken as BOS.  This is the whole model state of a
// stateless transducer, so it can always be rebuilt from a stored
// transcript.

void init_state(std::span<TokenId> window);

// Shift the window left and append a token.  Blanks never advance the
// prediction context; negative or out-of-range ids throw.
void advance_state(std::span<TokenId> window, TokenId token, int vocab_size);

std::vector<TokenId> advance_state(std::vector<TokenId> window, TokenId token,
                                   int vocab_size);

// --- emission models --------------------------------------------------------

// What a transducer exposes to the decoders: a normalized log-probability
// row over |V|+1 outcomes per (frame, last-n-token context).
class EmissionModel {
public:
    virtual ~EmissionModel() = default;

    virtual const Vocabulary& vocab() const = 0;
    virtual int context_order() const = 0;
    virtual int num_frames() const = 0;

    // Write the normalized log-prob row for (frame, window) into out
    // (size |V|+1).  window holds exactly context_order() entries.
    virtual void score_row(int frame, std::span<const TokenId> window,
                           std::span<double> out) const = 0;
};

// Batched scoring: frames[b] applies to all `beam` slots of stream b;
// windows is [batch, beam, n] and out is [batch, beam, |V|+1], both
// stream-major.  Dead slots (live[slot] == 0) are skipped and zero-filled;
// a live stream with frames[b] out of range throws.
void score_batch(const EmissionModel& model, std::span<const std::int32_t> frames,
                 std::span<const TokenId> windows, std::span<const std::uint8_t> live,
                 int beam, std::span<double> out);

// Deterministic emission table: log-prob rows keyed by (frame, context
// window).  Missing keys fall back to a uniform distribution unless strict
// mode is on, which throws instead.
class LatticeModel : public EmissionModel {
public:
    LatticeModel(int num_frames, Vocabulary vocab, int context_order,
                 bool strict = false);

    const Vocabulary& vocab() const override { return vocab_; }
    int context_order() const override { return context_order_; }
    int num_frames() const override { return num_frames_; }
    void score_row(int frame, std::span<const TokenId> window,
                   std::span<double> out) const override;

    // Row must be a normalized log-distribution (logsumexp 0 +- 1e-6).
    void add_row(int frame, std::span<const TokenId> window,
                 std::vector<double> log_probs);

    void set_strict(bool strict) { strict_ = strict; }
    bool strict() const { return strict_; }
    std::size_t num_rows() const { return rows_.size(); }

    // Textual container with num_frames / vocab_size / context_order /
    // entries; reals round-trip exactly.
    static LatticeModel load(const std::filesystem::path& path, bool strict = false);
    void save(const std::filesystem::path& path) const;
    static LatticeModel from_json_text(const std::string& text,
                                       const std::string& source_name,
                                       bool strict = false);
    std::string to_json_text() const;

private:
    struct KeyHash {
        std::size_t operator()(const std::vector<std::int32_t>& key) const;
    };

    int num_frames_;
    Vocabulary vocab_;
    int context_order_;
    bool strict_;
    std::vector<double> uniform_row_;
    std::unordered_map<std::vector<std::int32_t>, std::vector<double>, KeyHash> rows_;
};

// Seeded stateless-decoder model: emissions come from a tiny fixed network
// over a frame embedding plus the mean embedding of the last n tokens.
// Identical seed and shape give bit-identical emissions.
class ToyModel : public EmissionModel {
public:
    ToyModel(std::uint64_t seed, int context_order, int vocab_size, int max_frames,
             double blank_bias = 1.5);

    const Vocabulary& vocab() const override { return vocab_; }
    int context_order() const override { return context_order_; }
    int num_frames() const override { return max_frames_; }
    void score_row(int frame, std::span<const TokenId> window,
                   std::span<double> out) const override;

    std::uint64_t seed() const { return seed_; }

private:
    std::uint64_t seed_;
    int context_order_;
    int max_frames_;
    double blank_bias_;
    Vocabulary vocab_;

    int emb_dim_;
    int hidden_dim_;
    std::vector<double> frame_emb_;  // [max_frames, emb_dim]
    std::vector<double> tok_emb_;    // [vocab+1, emb_dim], last row = BOS
    std::vector<double> w1_, b1_;    // [hidden, emb_dim], [hidden]
    std::vector<double> w2_, b2_;    // [vocab+1, hidden], [vocab+1]
};

inline std::unique_ptr<ToyModel> make_toy(std::uint64_t seed, int context_order,
                                          int vocab_size, int max_frames,
                                          double blank_bias = 1.5) {
    return std::make_unique<ToyModel>(seed, context_order, vocab_size, max_frames,
                                      blank_bias);
}

inline LatticeModel load_lattice(const std::filesystem::path& path,
                                 bool strict = false) {
    return LatticeModel::load(path, strict);
}

// Deterministic 64-bit stream used everywhere a seeded value is needed.
struct SplitMix64 {
    std::uint64_t state;

    explicit SplitMix64(std::uint64_t seed) : state(seed) {}

    std::uint64_t next() {
        state += 0x9e3779b97f4a7c15ull;
        std::uint64_t z = state;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // uniform in [0, 1)
    double uniform() {
        return static_cast<double>(next() >> 11) * 0x1.0p-53;
    }

    // standard normal via Box-Muller
    double normal();

    // uniform integer in [lo, hi]
    std::int64_t range(std::int64_t lo, std::int64_t hi);

private:
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace tbeam
